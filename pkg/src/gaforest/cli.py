"""Command-line experiments: ``gaforest {xor,clf-cond,gan-train,tournament,plot}``.

Every command writes into ``--out`` (default ``runs/<command>``)::

    config.json     resolved settings
    log.csv         step,d_loss,g_loss,cond,val_loss (per seed directory for sweeps)
    checkpoints/    network JSON
    plots/          SVG figures

Outputs carry no timestamps, so the same flags and seed give byte-equal
files.  Exit codes: 0 success, 1 runtime failure or divergence, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import _backend, svg
from .datasets import DatasetSpec, generate, ring_mixture
from .errors import GaforestError, SpecError
from .evaluation import (Contestant, ScoreMatrix, dump_report, kl_to_mixture, mode_coverage, report,
                         report_text, tournament)
from .networks import PRESETS, Network, load_preset, xor_spec
from .training import TrainConfig, TrainRun, read_log, save_run, train_classifier, train_gan

XOR_LR = 0.3
CLF_LR = 2e-3
GAN_LR = 1e-3
SUCCESS_LOSS = 0.01
COVERAGE_SIGMAS = 3.0


class UsageError(Exception):
    pass


# -- helpers -------------------------------------------------------------------------


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _jsonable(value):
    """Floats for JSON, with infinities spelled as strings."""
    if value is None:
        return None
    value = float(value)
    if math.isinf(value):
        return "inf"
    return None if math.isnan(value) else value


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read --config {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise UsageError("--config must hold a JSON object of training settings")
    return obj


def _train_config(args, **overrides) -> TrainConfig:
    base = _load_config(args.config)
    base.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig.from_json(base)
    except (SpecError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _median_by_step(runs: list[TrainRun], attr: str = "cond") -> tuple[np.ndarray, np.ndarray]:
    probes = [{r.step: getattr(r, attr) for r in run.probes()} for run in runs]
    steps = sorted(set.intersection(*[set(p) for p in probes])) if probes else []
    return np.array(steps), np.array([np.median([p[s] for p in probes]) for s in steps])


def _loss_series(run: TrainRun, label: str, attr: str = "g_loss") -> svg.Series:
    rows = [(r.step, getattr(r, attr)) for r in run.records if getattr(r, attr) is not None]
    x, y = (np.array(v, float) for v in zip(*rows)) if rows else (np.zeros(0), np.zeros(0))
    return svg.Series(label, x, y)


def _cond_series(run: TrainRun, label: str) -> svg.Series:
    steps, cond = run.condition_series()
    return svg.Series(label, steps, cond)


# -- commands ------------------------------------------------------------------------


def cmd_xor(args) -> int:
    spec = xor_spec(args.model, args.dim, args.depth)
    runs, summary = [], {"model": args.model, "dim": args.dim, "spec": spec.to_json(), "seeds": []}
    for k in range(args.seeds):
        seed = args.seed + k
        cfg = _train_config(args, batch_size=2 ** args.dim, learning_rate=args.lr, epochs=args.epochs,
                            seed=seed, condition_probe_every=args.probe_every,
                            dataset={"kind": "xor", "dim": args.dim}, full_jacobian=args.full_jacobian)
        run = train_classifier(cfg, spec)
        runs.append(run)
        save_run(run, os.path.join(args.out, f"seed_{seed:03d}"), {"model": spec.to_json()})
        last = run.probes()[-1] if run.probes() else None
        summary["seeds"].append({"seed": seed, "final_loss": _jsonable(run.final_loss()),
                                 "final_cond": _jsonable(last.cond) if last else None,
                                 "final_cond_raw": _jsonable(last.cond_raw) if last else None,
                                 "final_rank": last.rank if last else None, "aborted": run.aborted})
    finals = [run.final_loss() for run in runs]
    summary["success_threshold"] = SUCCESS_LOSS
    summary["success_rate"] = float(np.mean([f < SUCCESS_LOSS for f in finals]))
    steps, med = _median_by_step(runs)
    summary["median_cond"] = {"steps": steps.tolist(), "values": [_jsonable(v) for v in med]}
    _write_json(os.path.join(args.out, "summary.json"), summary)
    os.makedirs(os.path.join(args.out, "plots"), exist_ok=True)
    svg.Figure(f"xor dim {args.dim}: {args.model}", "epoch", "log loss").lines(
        [_loss_series(r, f"seed {args.seed + k}") for k, r in enumerate(runs)]).save(
        os.path.join(args.out, "plots", "loss.svg"))
    svg.Figure(f"xor dim {args.dim}: {args.model}", "epoch", "condition number", log_y=True).lines(
        [_cond_series(r, f"seed {args.seed + k}") for k, r in enumerate(runs)]).save(
        os.path.join(args.out, "plots", "cond.svg"))
    print(f"{args.model}: success rate {summary['success_rate']:.2f} (loss < {SUCCESS_LOSS}), "
          f"final losses {np.round(finals, 4).tolist()}")
    return 1 if any(r.aborted for r in runs) else 0


def cmd_clf_cond(args) -> int:
    heads = ["forest", "fc"] if args.head == "both" else [args.head]
    rates = [args.lr, args.lr * args.stress]
    summary, loss_lines, cond_lines, aborted = {"heads": {}}, [], [], False
    for head in heads:
        spec = load_preset(f"clf_{head}")
        for lr in rates:
            runs = []
            for k in range(args.seeds):
                seed = args.seed + k
                cfg = _train_config(args, learning_rate=lr, steps=args.steps, seed=seed,
                                    condition_probe_every=args.probe_every,
                                    dataset={"kind": "spiral_multiclass", "classes": 3})
                run = train_classifier(cfg, spec)
                aborted |= run.aborted
                runs.append(run)
                save_run(run, os.path.join(args.out, f"{head}_lr{lr:g}", f"seed_{seed:03d}"),
                         {"model": spec.to_json()})
            steps, med = _median_by_step(runs)
            label = f"{head} lr={lr:g}"
            summary["heads"].setdefault(head, {})[f"{lr:g}"] = {
                "final_losses": [_jsonable(r.final_loss()) for r in runs],
                "aborted": [r.aborted for r in runs],
                "median_cond": {"steps": steps.tolist(), "values": [_jsonable(v) for v in med]},
                "mean_cond": _jsonable(np.mean([r.cond for run in runs for r in run.probes()]))
                if any(run.probes() for run in runs) else None}
            loss_lines.append(_loss_series(runs[0], label))
            cond_lines.append(svg.Series(label, steps, med))
    _write_json(os.path.join(args.out, "summary.json"), summary)
    os.makedirs(os.path.join(args.out, "plots"), exist_ok=True)
    svg.Figure("classifier loss (first seed)", "step", "log loss").lines(loss_lines).save(
        os.path.join(args.out, "plots", "loss.svg"))
    svg.Figure("median head condition number", "step", "condition number", log_y=True).lines(
        cond_lines).save(os.path.join(args.out, "plots", "cond.svg"))
    for head, by_lr in summary["heads"].items():
        for lr, entry in by_lr.items():
            print(f"{head} lr={lr}: mean cond {entry['mean_cond']}, aborted {sum(entry['aborted'])}")
    return 1 if aborted else 0


def gan_summary(run: TrainRun, spec: DatasetSpec, n: int = 2000, seed: int = 1234) -> dict:
    """Coverage and KL of ``n`` generator samples against the ring mixture."""
    gen = run.networks["generator"]
    samples = gen.forward(np.random.default_rng(seed).normal(size=(n, gen.spec.input_dim)))
    mixture = ring_mixture(spec.k, spec.radius, spec.sigma)
    covered, hist = mode_coverage(samples, mixture.centers, COVERAGE_SIGMAS * spec.sigma)
    steps, cond = run.condition_series()
    return {"coverage": covered, "per_mode": hist.tolist(), "kl": _jsonable(kl_to_mixture(samples, mixture)),
            "coverage_radius": COVERAGE_SIGMAS * spec.sigma,
            "final_d_loss": _jsonable(run.records[-1].d_loss) if run.records else None,
            "final_g_loss": _jsonable(run.records[-1].g_loss) if run.records else None,
            "median_cond_last_1000": _jsonable(np.median(cond[steps > steps.max() - 1000]))
            if steps.size else None, "aborted": run.aborted}


def cmd_gan_train(args) -> int:
    if args.data != "gaussian_ring":
        raise UsageError("gan-train supports --data gaussian_ring")
    cfg = _train_config(args, learning_rate=args.lr, steps=args.steps, seed=args.seed,
                        condition_probe_every=args.probe_every, dataset={"kind": "gaussian_ring"},
                        sample_every=args.sample_every, checkpoint_every=args.checkpoint_every)
    gen_spec, disc_spec = load_preset(args.generator), load_preset(args.preset)
    run = train_gan(cfg, gen_spec, disc_spec)
    save_run(run, args.out, {"preset": args.preset, "generator_preset": args.generator,
                             "discriminator": disc_spec.to_json(), "generator": gen_spec.to_json()})
    summary = gan_summary(run, cfg.dataset_spec) if run.records else {"aborted": run.aborted}
    _write_json(os.path.join(args.out, "summary.json"), summary)
    plots = os.path.join(args.out, "plots")
    os.makedirs(plots, exist_ok=True)
    real = generate(cfg.dataset_spec).train_x[:cfg.n_snapshot_samples]
    for step, samples in sorted(run.snapshots.items()):
        svg.Figure(f"{args.preset}: step {step}", "x", "y").scatter(
            [svg.Series("real", real[:, 0], real[:, 1]), svg.Series("generated", samples[:, 0], samples[:, 1])]
        ).save(os.path.join(plots, f"samples_{step:07d}.svg"))
    if run.records:
        svg.Figure(args.preset, "step", "loss").lines(
            [_loss_series(run, "d_loss", "d_loss"), _loss_series(run, "g_loss", "g_loss")]).save(
            os.path.join(plots, "loss.svg"))
        svg.Figure(args.preset, "step", "condition number", log_y=True).lines(
            [_cond_series(run, "discriminator head")]).save(os.path.join(plots, "cond.svg"))
    if run.aborted:
        print(f"diverged: {run.abort_reason}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True))
    return 0


def load_contestant(run_dir: str) -> Contestant:
    with open(os.path.join(run_dir, "config.json")) as fh:
        config = json.load(fh)
    ckpt = os.path.join(run_dir, "checkpoints")
    name = config.get("preset", os.path.basename(os.path.normpath(run_dir)))
    return Contestant(name, Network.load(os.path.join(ckpt, "generator.json")),
                      Network.load(os.path.join(ckpt, "discriminator.json")),
                      DatasetSpec.from_json(config["train"]["dataset"]))


def cmd_tournament(args) -> int:
    if bool(args.runs) == bool(args.from_matrix):
        raise UsageError("give either --runs DIR DIR ... or --from-matrix FILE")
    if args.from_matrix:
        with open(args.from_matrix) as fh:
            scores = ScoreMatrix.from_json(json.load(fh))
        config = {"source": os.path.basename(args.from_matrix)}
    else:
        models = [load_contestant(d) for d in args.runs]
        names = [m.name for m in models]
        for k, m in enumerate(models):
            if names.count(m.name) > 1:
                m.name = f"{m.name}#{k}"
        val_x = generate(models[0].dataset).val_x
        scores, _ = tournament(models, val_x, args.n_gen, args.seed)
        config = {"runs": [os.path.normpath(d) for d in args.runs]}
    os.makedirs(os.path.join(args.out, "plots"), exist_ok=True)
    obj = report(scores, config)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(dump_report(obj) + "\n")
    text = report_text(scores, args.decimals)
    with open(os.path.join(args.out, "tables.txt"), "w") as fh:
        fh.write(text)
    with open(os.path.join(args.out, "plots", "diff_heatmap.svg"), "w") as fh:
        fh.write(svg.heatmap(scores.names, scores.diff().matrix, "D[i][j] = M[j][i] - M[i][j]", args.decimals))
    print(text, end="")
    return 0


def cmd_plot(args) -> int:
    try:
        with open(args.spec) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read plot spec {args.spec}: {exc}") from exc
    rows = read_log(os.path.join(args.run, "log.csv"))
    columns = set(rows[0]) if rows else set()
    x_col = spec.get("x", "step")
    wanted = [x_col] + list(spec.get("series", []))
    missing = [c for c in wanted if c not in columns]
    if missing or not spec.get("series"):
        raise UsageError(f"plot spec references unknown or no columns: {missing or 'series is empty'}")
    series = []
    for col in spec["series"]:
        pts = [(r[x_col], r[col]) for r in rows if r[col] is not None and r[x_col] is not None]
        x, y = (np.array(v, float) for v in zip(*pts)) if pts else (np.zeros(0), np.zeros(0))
        series.append(svg.Series(col, x, y))
    fig = svg.Figure(spec.get("title", ""), spec.get("xlabel", x_col), spec.get("ylabel", ""),
                     bool(spec.get("log_y", False))).lines(series)
    out = os.path.join(args.out or os.path.join(args.run, "plots"), spec.get("output", "plot.svg"))
    os.makedirs(os.path.dirname(out), exist_ok=True)
    fig.save(out)
    print(out)
    return 0


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed (sweeps use seed, seed+1, ...)")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--config", default=None, help="JSON file of training settings")

    parser = argparse.ArgumentParser(prog="gaforest", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({_backend.NAME} kernels)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("xor", parents=[common], help="xor convergence and conditioning sweep")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--model", choices=["fc", "tree"], default="tree")
    p.add_argument("--depth", type=int, default=None, help="tree depth (default dim - 1)")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--lr", type=float, default=XOR_LR)
    p.add_argument("--probe-every", type=int, default=100)
    p.add_argument("--full-jacobian", action="store_true", help="probe all parameters, not just the head")
    p.set_defaults(func=cmd_xor)

    p = sub.add_parser("clf-cond", parents=[common], help="classifier conditioning at lr and stress * lr")
    p.add_argument("--head", choices=["fc", "forest", "both"], default="both")
    p.add_argument("--lr", type=float, default=CLF_LR)
    p.add_argument("--stress", type=float, default=10.0, help="learning-rate multiplier for the stress run")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--probe-every", type=int, default=100)
    p.set_defaults(func=cmd_clf_cond)

    p = sub.add_parser("gan-train", parents=[common], help="train a GAN on the gaussian ring")
    p.add_argument("--preset", choices=[n for n in PRESETS if n.startswith("gan_") and n != "gan_generator"],
                   default="gan_forest_shallow")
    p.add_argument("--generator", default="gan_generator")
    p.add_argument("--data", default="gaussian_ring")
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--lr", type=float, default=GAN_LR)
    p.add_argument("--probe-every", type=int, default=100)
    p.add_argument("--sample-every", type=int, default=1000)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.set_defaults(func=cmd_gan_train)

    p = sub.add_parser("tournament", parents=[common], help="cross-evaluate trained GANs")
    p.add_argument("--runs", nargs="+", default=None, help="gan-train output directories")
    p.add_argument("--from-matrix", default=None, help="JSON {models, matrix} instead of runs")
    p.add_argument("--n-gen", type=int, default=None, help="generated samples per entry (default: validation size)")
    p.add_argument("--decimals", type=int, default=2)
    p.set_defaults(func=cmd_tournament)

    p = sub.add_parser("plot", parents=[common], help="render log.csv columns to SVG")
    p.add_argument("--run", required=True, help="run directory holding log.csv")
    p.add_argument("--spec", required=True, help='JSON {"series": [...], "x": "step", "log_y": false, ...}')
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out is None and args.command != "plot":
        args.out = os.path.join("runs", args.command)
    try:
        if args.out:
            os.makedirs(args.out, exist_ok=True)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gaforest {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"gaforest {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (GaforestError, OSError, ValueError, ArithmeticError) as exc:
        print(f"gaforest {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

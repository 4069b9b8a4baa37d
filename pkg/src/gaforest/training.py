"""Adversarial and supervised training loops with conditioning probes.

Every ``condition_probe_every`` steps the loop builds the per-instance
root-loss Jacobian of the (discriminator or classifier) head on the current
training batch and logs its condition number.  Probes use their own graphs
and no random draws, so switching them off leaves training bit-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import losses
from .datasets import DatasetSpec, generate
from .errors import ContractError, DegenerateMatrixError, ShapeError, SpecError
from .linalg import condition_number, raw_condition, singular_values
from .networks import ModelSpec, Network
from .tensor import Graph, Tensor

CSV_HEADER = ("step", "d_loss", "g_loss", "cond", "val_loss")


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    steps: int = 1000
    epochs: int | None = None
    seed: int = 0
    latent_dim: int = 8
    condition_probe_every: int = 100
    dataset: dict = field(default_factory=lambda: {"kind": "gaussian_ring"})
    d_steps: int = 1
    generator_loss: str = "non_saturating"
    checkpoint_every: int = 0
    sample_every: int = 0
    n_snapshot_samples: int = 512
    full_jacobian: bool = False

    def __post_init__(self):
        if self.batch_size < 2:
            raise SpecError("batch_size must be at least 2")
        if not self.learning_rate > 0:
            raise SpecError("learning_rate must be positive")
        if self.generator_loss not in ("non_saturating", "minimax"):
            raise SpecError(f"unknown generator_loss {self.generator_loss!r}")
        if self.d_steps < 1 or self.steps < 0 or self.condition_probe_every < 0:
            raise SpecError("d_steps >= 1, steps >= 0 and condition_probe_every >= 0 are required")
        DatasetSpec.from_json(self.dataset)

    @property
    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec.from_json(self.dataset)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise SpecError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class StepRecord:
    step: int
    d_loss: float | None = None
    g_loss: float | None = None
    cond: float | None = None
    val_loss: float | None = None
    rank: int | None = None
    cond_raw: float | None = None


@dataclass
class TrainRun:
    config: TrainConfig
    records: list[StepRecord] = field(default_factory=list)
    checkpoints: dict[int, dict] = field(default_factory=dict)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    aborted: bool = False
    abort_reason: str = ""
    networks: dict[str, Network] = field(default_factory=dict)

    def probes(self) -> list[StepRecord]:
        return [r for r in self.records if r.cond is not None]

    def condition_series(self) -> tuple[np.ndarray, np.ndarray]:
        probes = self.probes()
        return np.array([r.step for r in probes]), np.array([r.cond for r in probes])

    def final_loss(self) -> float:
        """Last recorded generator/classifier loss (discriminator loss if that is all there is)."""
        for r in reversed(self.records):
            value = r.g_loss if r.g_loss is not None else r.d_loss
            if value is not None:
                return value
        return math.nan

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.records:
            writer.writerow([r.step] + [_fmt(getattr(r, name)) for name in CSV_HEADER[1:]])
        return buf.getvalue()


def _fmt(value) -> str:
    if value is None:
        return ""
    if math.isinf(value):
        return "inf"
    return repr(float(value))


def read_log(path) -> list[dict]:
    """Parse a run log CSV into dicts of floats (``None`` for blanks)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else None) for k, v in row.items()} for row in rows]


# -- optimiser ---------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: list[Tensor]) -> "AdamState":
        return cls([np.zeros(p.shape) for p in params], [np.zeros(p.shape) for p in params])


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState, learning_rate: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update of ``params`` in place."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ContractError("params, grads and optimiser state must have equal length")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeError(f"gradient/state shape mismatch for parameter of shape {list(p.shape)}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + eps)


class Adam:
    def __init__(self, params: list[Tensor], learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.learning_rate, self.beta1, self.beta2, self.eps = learning_rate, beta1, beta2, eps
        self.state = AdamState.zeros_like(params)

    def step(self) -> None:
        grads = [np.zeros(p.shape) if p.grad is None else p.grad for p in self.params]
        adam_step(self.params, grads, self.state, self.learning_rate, self.beta1, self.beta2, self.eps)


# -- losses on frozen outputs ---------------------------------------------------


def _clamp(p):
    return np.clip(p, losses.PROB_CLAMP, 1.0 - losses.PROB_CLAMP)


def discriminator_loss(d_real, d_fake) -> float:
    """``-mean log D(x) - mean log(1 - D(G(z)))`` from discriminator probabilities."""
    return float(-np.mean(np.log(_clamp(np.asarray(d_real)))) - np.mean(np.log(1.0 - _clamp(np.asarray(d_fake)))))


def generator_loss(d_fake, kind: str = "non_saturating") -> float:
    """``-mean log D(G(z))``, or ``mean log(1 - D(G(z)))`` for the minimax form."""
    p = _clamp(np.asarray(d_fake))
    if kind == "minimax":
        return float(np.mean(np.log(1.0 - p)))
    return float(-np.mean(np.log(p)))


def probability(net: Network, x) -> np.ndarray:
    """Discriminator probability ``sigmoid(logit)`` for each row, shape ``(B,)``."""
    logits = net.forward(x)[:, 0]
    z = np.exp(-np.abs(logits))
    return np.where(logits >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


# -- loops -----------------------------------------------------------------------------


def _seeds(seed: int) -> tuple[int, int, int, int]:
    a, b, c, d = np.random.SeedSequence(seed).generate_state(4)
    return int(a), int(b), int(c), int(d)


def _probe(record: StepRecord, net: Network, batch, targets, loss: str, full: bool) -> None:
    _, jac = net.with_head_jacobian(batch, targets, loss, full=full)
    spectrum = singular_values(jac)
    try:
        record.cond, record.rank = condition_number(spectrum), spectrum.rank
        record.cond_raw = raw_condition(spectrum)
    except DegenerateMatrixError:
        record.cond, record.rank, record.cond_raw = math.inf, 0, math.inf



def train_gan(config: TrainConfig, gen_spec: ModelSpec, disc_spec: ModelSpec, probe: bool = True) -> TrainRun:
    """Alternate ``d_steps`` discriminator updates with one generator update per step."""
    data = generate(config.dataset_spec)
    if gen_spec.input_dim != config.latent_dim:
        raise SpecError(f"generator input {gen_spec.input_dim} != latent_dim {config.latent_dim}")
    if gen_spec.output_dim != data.train_x.shape[1] or disc_spec.input_dim != data.train_x.shape[1]:
        raise SpecError("generator output / discriminator input must match the data dimension")
    if disc_spec.output_dim != 1:
        raise SpecError("the discriminator must output a single logit")
    d_seed, g_seed, stream_seed, viz_seed = _seeds(config.seed)
    disc, gen = Network(disc_spec, d_seed), Network(gen_spec, g_seed)
    rng = np.random.default_rng(stream_seed)
    viz_z = np.random.default_rng(viz_seed).normal(size=(config.n_snapshot_samples, config.latent_dim))
    opt_d = Adam(disc.parameters(), config.learning_rate, config.beta1, config.beta2)
    opt_g = Adam(gen.parameters(), config.learning_rate, config.beta1, config.beta2)
    run = TrainRun(config, networks={"discriminator": disc, "generator": gen})
    run.checkpoints[0] = {"discriminator": disc.to_json(), "generator": gen.to_json()}
    if config.sample_every:
        run.snapshots[0] = gen.forward(viz_z)
    n_train, b = len(data.train_x), config.batch_size
    is_real = np.concatenate([np.ones(b), np.zeros(b)])

    for step in range(1, config.steps + 1):
        record = StepRecord(step)
        for k in range(config.d_steps):
            real = data.train_x[rng.integers(0, n_train, size=b)]
            fake = gen.forward(rng.normal(size=(b, config.latent_dim)))
            if probe and k == 0 and config.condition_probe_every and step % config.condition_probe_every == 0:
                _probe(record, disc, np.concatenate([real, fake]), is_real, "adversarial",
                       config.full_jacobian)
                if len(data.val_x):
                    record.val_loss = float(-np.mean(np.log(_clamp(probability(disc, data.val_x)))))
            graph = Graph()
            d_loss = graph.add(graph.mean(losses.real_terms(graph, disc.apply(graph, real))),
                               graph.mean(losses.fake_terms(graph, disc.apply(graph, fake))))
            record.d_loss = d_loss.item()
            if not math.isfinite(record.d_loss):
                break
            disc.zero_grad()
            graph.backward(d_loss)
            opt_d.step()
        if record.d_loss is not None and math.isfinite(record.d_loss):
            graph = Graph()
            logits = disc.apply(graph, gen.apply(graph, rng.normal(size=(b, config.latent_dim))), trainable=False)
            if config.generator_loss == "minimax":
                g_loss = graph.neg(graph.mean(losses.fake_terms(graph, logits)))
            else:
                g_loss = graph.mean(losses.real_terms(graph, logits))
            record.g_loss = g_loss.item()
            if math.isfinite(record.g_loss):
                gen.zero_grad()
                graph.backward(g_loss)
                opt_g.step()
        run.records.append(record)
        if not (math.isfinite(record.d_loss) and record.g_loss is not None and math.isfinite(record.g_loss)):
            run.aborted = True
            run.abort_reason = f"non-finite loss at step {step}: d_loss={record.d_loss}, g_loss={record.g_loss}"
            break
        if config.checkpoint_every and step % config.checkpoint_every == 0:
            run.checkpoints[step] = {"discriminator": disc.to_json(), "generator": gen.to_json()}
        if config.sample_every and step % config.sample_every == 0:
            run.snapshots[step] = gen.forward(viz_z)
    final = run.records[-1].step if run.records else 0
    run.checkpoints[final] = {"discriminator": disc.to_json(), "generator": gen.to_json()}
    return run


def train_classifier(config: TrainConfig, spec: ModelSpec, probe: bool = True) -> TrainRun:
    """Supervised log-loss training; the loss is logged in the ``g_loss`` column.

    When ``batch_size`` covers the whole training split every step is a
    full-batch step (the xor truth table), and ``epochs`` counts steps.
    Otherwise minibatches are drawn without replacement within a step.
    """
    data = generate(config.dataset_spec)
    if spec.input_dim != data.train_x.shape[1]:
        raise SpecError(f"model input {spec.input_dim} != data dimension {data.train_x.shape[1]}")
    n_classes = int(data.train_y.max()) + 1
    if spec.output_dim not in (1, n_classes) or (spec.output_dim == 1 and n_classes > 2):
        raise SpecError(f"model outputs {spec.output_dim} values for {n_classes} classes")
    net_seed, _, stream_seed, _ = _seeds(config.seed)
    net = Network(spec, net_seed)
    rng = np.random.default_rng(stream_seed)
    opt = Adam(net.parameters(), config.learning_rate, config.beta1, config.beta2)
    n_train = len(data.train_x)
    full_batch = config.batch_size >= n_train
    steps = config.steps
    if config.epochs is not None:
        steps = config.epochs * (1 if full_batch else math.ceil(n_train / config.batch_size))
    run = TrainRun(config, networks={"classifier": net})
    run.checkpoints[0] = {"classifier": net.to_json()}

    for step in range(1, steps + 1):
        if full_batch:
            x, y = data.train_x, data.train_y
        else:
            idx = rng.choice(n_train, size=config.batch_size, replace=False)
            x, y = data.train_x[idx], data.train_y[idx]
        record = StepRecord(step)
        if probe and config.condition_probe_every and step % config.condition_probe_every == 0:
            _probe(record, net, x, y, "cross_entropy", config.full_jacobian)
            if len(data.val_x):
                g = Graph()
                record.val_loss = g.mean(losses.cross_entropy_terms(g, net.apply(g, data.val_x, False),
                                                                    data.val_y)).item()
        graph = Graph()
        loss = graph.mean(losses.cross_entropy_terms(graph, net.apply(graph, x), y))
        record.g_loss = loss.item()
        run.records.append(record)
        if not math.isfinite(record.g_loss):
            run.aborted = True
            run.abort_reason = f"non-finite loss at step {step}"
            break
        net.zero_grad()
        graph.backward(loss)
        opt.step()
        if config.checkpoint_every and step % config.checkpoint_every == 0:
            run.checkpoints[step] = {"classifier": net.to_json()}
    final = run.records[-1].step if run.records else 0
    run.checkpoints[final] = {"classifier": net.to_json()}
    return run


def save_run(run: TrainRun, out_dir, extra_config: dict | None = None) -> None:
    """Write ``config.json``, ``log.csv`` and ``checkpoints/`` under ``out_dir``."""
    os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
    config = {"train": run.config.to_json(), **(extra_config or {})}
    if run.aborted:
        config["aborted"] = run.abort_reason
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "log.csv"), "w", newline="") as fh:
        fh.write(run.csv_text())
    final = max(run.checkpoints)
    for step, nets in sorted(run.checkpoints.items()):
        for role, obj in nets.items():
            name = f"{role}.json" if step == final else f"{role}_{step:07d}.json"
            with open(os.path.join(out_dir, "checkpoints", name), "w") as fh:
                json.dump(obj, fh)

import json
import subprocess
import sys
from pathlib import Path

import pytest

from gaforest.cli import main

FIXTURE = Path(__file__).parent / "data" / "table1a.json"


def files(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def gan(out, *extra):
    return main(["gan-train", "--preset", "gan_fc", "--steps", "30", "--probe-every", "10",
                 "--sample-every", "15", "--out", str(out), *extra])


def test_gan_train_writes_run_and_is_byte_deterministic(tmp_path):
    assert gan(tmp_path / "a") == 0
    assert gan(tmp_path / "b") == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b
    for name in ("config.json", "log.csv", "summary.json", "checkpoints/generator.json",
                 "checkpoints/discriminator.json", "plots/samples_0000015.svg", "plots/cond.svg"):
        assert name in a
    assert a["log.csv"].decode().splitlines()[0] == "step,d_loss,g_loss,cond,val_loss"
    assert gan(tmp_path / "c", "--seed", "1") == 0
    assert files(tmp_path / "c")["log.csv"] != a["log.csv"]


def test_zero_step_gan_run(tmp_path):
    assert main(["gan-train", "--steps", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "log.csv").read_text() == "step,d_loss,g_loss,cond,val_loss\n"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_one(tmp_path):
    assert gan(tmp_path, "--lr", "1e300") == 1


def test_usage_errors_exit_two(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["gan-train", "--preset", "nope"])
    assert exc.value.code == 2
    assert main(["gan-train", "--data", "mnist", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"learning_rat": 0.1}))
    assert main(["xor", "--config", str(bad), "--seeds", "1", "--out", str(tmp_path)]) == 2
    assert main(["tournament", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_run_directory_exits_one(tmp_path):
    assert main(["tournament", "--runs", str(tmp_path / "x"), str(tmp_path / "y"),
                 "--out", str(tmp_path / "t")]) == 1


def test_xor_sweep(tmp_path):
    out = tmp_path / "xor"
    assert main(["xor", "--model", "tree", "--seeds", "2", "--epochs", "50", "--probe-every", "25",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert [s["seed"] for s in summary["seeds"]] == [0, 1]
    assert summary["median_cond"]["steps"] == [25, 50]
    assert (out / "seed_001" / "log.csv").exists() and (out / "plots" / "loss.svg").exists()


def test_clf_cond_sweep(tmp_path):
    out = tmp_path / "clf"
    assert main(["clf-cond", "--head", "forest", "--seeds", "1", "--steps", "20", "--probe-every", "10",
                 "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["heads"]["forest"]) == {"0.002", "0.02"}


def test_tournament_from_matrix(tmp_path):
    table = json.loads(FIXTURE.read_text())
    src = tmp_path / "m.json"
    src.write_text(json.dumps({"models": table["models"], "matrix": table["oxford"]["matrix"]}))
    out = tmp_path / "t"
    assert main(["tournament", "--from-matrix", str(src), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["ordering"]["order"] == ["GAF-shallow", "GAF-deep", "ABC-GAN", "DCGAN"]
    assert round(rep["diff_matrix"][0][1], 2) == 0.08
    assert "DCGAN" in (out / "tables.txt").read_text()
    assert (out / "plots" / "diff_heatmap.svg").read_text().startswith("<svg")


def test_tournament_from_runs_and_plot(tmp_path):
    for name, preset in (("fc", "gan_fc"), ("deep", "gan_forest_deep")):
        assert main(["gan-train", "--preset", preset, "--steps", "10", "--probe-every", "0",
                     "--out", str(tmp_path / name)]) == 0
    out = tmp_path / "t"
    assert main(["tournament", "--runs", str(tmp_path / "fc"), str(tmp_path / "deep"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["models"] == ["gan_fc", "gan_forest_deep"]
    assert rep["diff_matrix"][0][1] == -rep["diff_matrix"][1][0]

    spec = tmp_path / "plot.json"
    spec.write_text(json.dumps({"series": ["d_loss", "g_loss"], "output": "losses.svg"}))
    assert main(["plot", "--run", str(tmp_path / "fc"), "--spec", str(spec)]) == 0
    assert (tmp_path / "fc" / "plots" / "losses.svg").exists()
    spec.write_text(json.dumps({"series": ["nope"]}))
    assert main(["plot", "--run", str(tmp_path / "fc"), "--spec", str(spec)]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "gaforest", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "tournament" in out.stdout

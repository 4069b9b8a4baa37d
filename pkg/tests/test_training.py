import math

import numpy as np
import pytest

from gaforest import losses
from gaforest.errors import ContractError, ShapeError, SpecError
from gaforest.networks import ModelSpec, load_preset
from gaforest.tensor import Graph, Tensor
from gaforest.training import (CSV_HEADER, Adam, AdamState, TrainConfig, adam_step, discriminator_loss,
                               generator_loss, read_log, save_run, train_classifier, train_gan)

from oracles import d_loss_scalar, g_loss_scalar

LOG_CLAMP = -math.log(1e-7)


def test_equilibrium_anchors():
    half = np.full(64, 0.5)
    assert discriminator_loss(half, half) == pytest.approx(2 * math.log(2), abs=1e-12)
    assert generator_loss(half) == pytest.approx(math.log(2), abs=1e-12)
    assert discriminator_loss(np.full(4, 1 - 1e-7), np.full(4, 1e-7)) == pytest.approx(0.0, abs=1e-6)
    assert generator_loss(np.full(4, 1 - 1e-7)) == pytest.approx(0.0, abs=1e-6)


def test_losses_match_scalar_oracle():
    rng = np.random.default_rng(0)
    for _ in range(5):
        real, fake = rng.uniform(0, 1, 32), rng.uniform(0, 1, 32)
        real[0], fake[0] = 0.0, 1.0
        assert discriminator_loss(real, fake) == pytest.approx(d_loss_scalar(real, fake), abs=1e-12)
        assert generator_loss(fake) == pytest.approx(g_loss_scalar(fake), abs=1e-12)


def test_graph_loss_terms_are_clamped():
    g = Graph()
    logits = g.constant(np.array([[-1000.0], [1000.0]]))
    real = losses.real_terms(g, logits).data
    fake = losses.fake_terms(g, logits).data
    assert np.all(real <= LOG_CLAMP + 1e-9) and np.all(fake <= LOG_CLAMP + 1e-9)
    assert real[0] == pytest.approx(LOG_CLAMP, rel=1e-6)


def test_cross_entropy_terms():
    g = Graph()
    logits = g.constant(np.array([[0.0], [2.0]]))
    terms = losses.cross_entropy_terms(g, logits, np.array([1, 0])).data
    np.testing.assert_allclose(terms, [math.log(2), math.log1p(math.exp(2.0))])
    multi = losses.cross_entropy_terms(g, g.constant(np.zeros((2, 3))), np.array([0, 2])).data
    np.testing.assert_allclose(multi, [math.log(3)] * 2)
    with pytest.raises(ContractError):
        losses.cross_entropy_terms(g, logits, np.array([1]))


def test_adam_first_step_is_sign_times_lr():
    p = Tensor(np.array([1.0, -2.0, 3.0]))
    state = AdamState.zeros_like([p])
    adam_step([p], [np.array([0.5, -4.0, 0.0])], state, learning_rate=0.1)
    np.testing.assert_allclose(p.data, [0.9, -1.9, 3.0], atol=1e-8)
    with pytest.raises(ShapeError):
        adam_step([p], [np.zeros(2)], state, 0.1)


def test_adam_minimises_quadratic():
    p = Tensor(np.array([1.0]))
    opt = Adam([p], learning_rate=0.01)
    for _ in range(2000):
        p.grad = 2 * p.data
        opt.step()
    assert abs(p.data[0]) < 1e-3


def test_config_validation():
    with pytest.raises(SpecError):
        TrainConfig(batch_size=1)
    with pytest.raises(SpecError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(SpecError):
        TrainConfig(dataset={"kind": "mnist"})
    with pytest.raises(SpecError):
        TrainConfig.from_json({"lr": 1.0})
    cfg = TrainConfig(seed=3)
    assert TrainConfig.from_json(cfg.to_json()) == cfg


def small_gan(steps, seed=0, probe_every=5, **kw):
    cfg = TrainConfig(batch_size=16, learning_rate=1e-3, steps=steps, seed=seed,
                      condition_probe_every=probe_every, dataset={"kind": "gaussian_ring", "n_samples": 400}, **kw)
    return train_gan(cfg, load_preset("gan_generator"), load_preset("gan_forest_deep"))


def test_zero_step_run():
    run = small_gan(0)
    assert run.records == [] and set(run.checkpoints) == {0}
    assert run.csv_text() == ",".join(CSV_HEADER) + "\n"


def test_gan_determinism_and_probe_side_effects():
    a, b = small_gan(12), small_gan(12)
    assert a.csv_text() == b.csv_text()
    no_probe = small_gan(12, probe_every=0)
    assert [r.d_loss for r in no_probe.records] == [r.d_loss for r in a.records]
    assert [r.step for r in a.probes()] == [5, 10]
    assert all(r.cond >= 1.0 for r in a.probes())
    assert all(r.d_loss <= 2 * LOG_CLAMP for r in a.records)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts_run():
    run = small_gan(50, probe_every=0)
    assert not run.aborted
    cfg = TrainConfig(batch_size=16, learning_rate=1e300, steps=50, condition_probe_every=0,
                      dataset={"kind": "gaussian_ring", "n_samples": 400})
    run = train_gan(cfg, load_preset("gan_generator"), load_preset("gan_fc"))
    assert run.aborted and "non-finite" in run.abort_reason
    assert len(run.records) < 50


def test_classifier_learns_two_moons():
    spec = ModelSpec(2, [{"type": "affine", "out": 16}, {"type": "relu"},
                         {"type": "forest_head", "trees": 16, "depth": 1}], init_std=0.5)
    cfg = TrainConfig(batch_size=64, learning_rate=1e-2, steps=300, condition_probe_every=100,
                      dataset={"kind": "two_moons", "n_samples": 400})
    run = train_classifier(cfg, spec)
    assert run.final_loss() < 0.35
    assert [r.step for r in run.probes()] == [100, 200, 300]
    assert all(r.val_loss is not None for r in run.probes())


def test_classifier_rejects_wrong_width():
    cfg = TrainConfig(dataset={"kind": "spiral_multiclass"}, steps=1)
    with pytest.raises(SpecError):
        train_classifier(cfg, load_preset("xor_fc"))


def test_save_run_layout(tmp_path):
    run = small_gan(6, checkpoint_every=3)
    save_run(run, tmp_path, {"preset": "gan_forest_deep"})
    names = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
    assert "generator.json" in names and "discriminator_0000003.json" in names
    rows = read_log(tmp_path / "log.csv")
    assert len(rows) == 6 and rows[4]["cond"] is not None and rows[0]["cond"] is None

import logging
import math

import numpy as np
import pytest

from marn.basis import BasisModel, ModelDims
from marn.checkpoint import checkpoint_bytes, digest_hex
from marn.errors import ConfigError, DigestMismatchError, NumericalError
from marn.memory import assemble_memory
from marn.microcheck import micro_dataset, micro_model
from marn.tensor import Tape, Tensor, backward, grad_check
from marn.training import (TrainConfig, attention_coherent_loss, basis_loss, caption_nll, combined_loss,
                           frozen_steps, memory_loss, select_lambda, train_basis, train_memory_decoder)


def test_nll_one_hot_and_uniform():
    probs = np.eye(12)[[4, 7, 2]]
    assert caption_nll(Tensor(probs), [4, 7, 2], clamp=False).item() < 1e-9
    uniform = np.full((2, 12), 1 / 12)
    assert caption_nll(Tensor(uniform), [5, 2]).item() == pytest.approx(2 * math.log(12), abs=1e-12)


def test_nll_random_matches_sum(rng):
    probs = rng.dirichlet(np.ones(9), size=5)
    targets = rng.integers(0, 9, size=5)
    oracle = -sum(math.log(probs[t, w]) for t, w in enumerate(targets))
    assert caption_nll(Tensor(probs), targets).item() == pytest.approx(oracle, rel=1e-13)


def test_nll_clamps_zero_probability(caplog):
    probs = np.array([[0.0, 1.0], [0.5, 0.5]])
    with caplog.at_level(logging.WARNING):
        val = caption_nll(Tensor(probs), [0, 1]).item()
    assert "clamped" in caplog.text
    assert val == pytest.approx(-math.log(1e-12) - math.log(0.5))


def test_ac_loss_examples(rng):
    assert attention_coherent_loss(Tensor(np.full((3, 4), 0.25))).item() == 0.0
    assert attention_coherent_loss(Tensor(np.array([[0.2, 0.3, 0.5]]))).item() == pytest.approx(0.3)
    a = rng.dirichlet(np.ones(6), size=4)
    oracle = sum(abs(a[t, i] - a[t, i - 1]) for t in range(4) for i in range(1, 6))
    assert attention_coherent_loss(Tensor(a)).item() == pytest.approx(oracle, abs=1e-14)


def test_ac_loss_grad_check_away_from_ties(rng):
    a = Tensor(rng.dirichlet(np.ones(6), size=3), requires_grad=True)
    assert grad_check(lambda: attention_coherent_loss(a), [a]) < 1e-8


def test_combined_loss_examples():
    lc, la = Tensor(2.0), Tensor(0.5)
    assert combined_loss(lc, la, 0.0).item() == 2.0
    assert combined_loss(lc, la, 0.2).item() == pytest.approx(2.1)


def test_combined_gradient_is_linear():
    ds = micro_dataset(2)
    model = micro_model(2)
    params = list(model.named_parameters().values())
    samples = ds.samples("train")

    def grads(beta):
        with Tape() as tape:
            loss = basis_loss(model, ds, samples, beta)[0]
        return backward(loss, tape, params)

    g0, g1, gb = grads(0.0), grads(1.0), grads(0.3)
    for p in params:
        ga = g1[p] - g0[p]  # gradient of the attention term alone
        np.testing.assert_allclose(gb[p], g0[p] + 0.3 * ga, rtol=0, atol=1e-12)


def quick_config(**kw):
    base = dict(epochs=1, base_lr=1e-2, batch_size=16, eval_every=1, max_len=6, beta=0.1)
    base.update(kw)
    return TrainConfig(**base)


def micro_dims():
    return ModelDims(d=8, c=8, K=12, m=8, H=8, A=8, emb=8)


@pytest.mark.parametrize("batch", [1, 2, 5])
def test_optimizer_steps_per_epoch(batch):
    ds = micro_dataset(0, n_videos=4, n_val=2)
    res = train_basis(ds, quick_config(batch_size=batch), micro_dims())
    assert res.report.epochs[0]["steps"] == math.ceil(2 / batch)


def test_one_epoch_lowers_loss():
    ds = micro_dataset(1, n_videos=5, n_val=2)
    cfg = quick_config(base_lr=3e-2)
    init = BasisModel.init(micro_dims(), cfg.seed)
    samples = ds.samples("train")
    before = basis_loss(init, ds, samples, cfg.beta)[0].item()
    res = train_basis(ds, cfg, micro_dims())
    assert basis_loss(res.last, ds, samples, cfg.beta)[0].item() < before


def test_learning_rate_schedule_in_report():
    ds = micro_dataset(0, n_videos=4, n_val=2)
    res = train_basis(ds, quick_config(epochs=101, base_lr=1e-3, eval_every=200), micro_dims())
    lrs = [r["lr"] for r in res.report.epochs]
    assert lrs[0] == 1e-3 and lrs[50] == 5e-4 and lrs[100] == pytest.approx(2.5e-4, abs=0)
    assert res.report.selected_epoch == 101  # evaluated only at the last epoch


def test_selection_uses_validation_metric():
    ds = micro_dataset(0, n_videos=5, n_val=2)
    res = train_basis(ds, quick_config(epochs=6, eval_every=2), micro_dims())
    evals = [(r["epoch"], r["val_cider"]) for r in res.report.epochs if "val_cider" in r]
    assert [e for e, _ in evals] == [2, 4, 6]
    assert res.report.selected_metric == max(v for _, v in evals)


def test_nan_aborts_with_offender(monkeypatch):
    ds = micro_dataset(0, n_videos=4, n_val=2)
    holder = {}

    def poison(epoch, rec):
        if epoch == 1:
            holder["model"].dec.out_b.data[0] = np.nan

    real_init = BasisModel.init

    def capture(dims, seed=0):
        holder["model"] = real_init(dims, seed)
        return holder["model"]

    monkeypatch.setattr(BasisModel, "init", capture)
    with pytest.raises(NumericalError, match="parameter basis/out_b"):
        train_basis(ds, quick_config(epochs=3, eval_every=10), micro_dims(), on_epoch=poison)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(beta=-1)
    with pytest.raises(ConfigError):
        TrainConfig(decay_every=0)


def memory_setup(seed=0):
    ds = micro_dataset(seed, n_videos=6, n_val=2)
    basis = micro_model(seed)
    digest = digest_hex(checkpoint_bytes(basis.arrays()))
    return ds, basis, digest, assemble_memory(basis, ds, k=2, basis_digest=digest)


def test_memory_decoder_refuses_mismatched_basis():
    ds, basis, digest, memory = memory_setup()
    with pytest.raises(DigestMismatchError):
        train_memory_decoder(ds, basis, "f" * 16, memory, quick_config())


def test_memory_decoder_training_decreases_loss_and_is_deterministic():
    ds, basis, digest, memory = memory_setup()
    cfg = quick_config(epochs=15, eval_every=5)
    a = train_memory_decoder(ds, basis, digest, memory, cfg)
    losses = [r["loss"] for r in a.report.epochs]
    assert losses[-1] < losses[0]
    b = train_memory_decoder(ds, basis, digest, memory, cfg)
    for k, v in a.last.arrays().items():
        assert np.array_equal(v, b.last.arrays()[k])
    frozen = [frozen_steps(basis, ds, s) for s in ds.samples("train")]
    assert memory_loss(a.last, memory, frozen).item() < losses[0]


def test_select_lambda_prefers_smaller_on_ties():
    ds, basis, digest, memory = memory_setup()
    res = train_memory_decoder(ds, basis, digest, memory, quick_config(epochs=2))
    lam, table = select_lambda(ds, basis, res.params, memory, grid=[0.5, 0.0, 0.0], max_len=6)
    assert lam == max(table, key=lambda l: (table[l], -l))
    lam, table = select_lambda(ds, basis, res.params, memory, max_len=6)
    assert sorted(table) == [round(0.1 * i, 10) for i in range(11)]
    best = max(table.values())
    assert lam == min(l for l, v in table.items() if v == best)


def test_default_protocol_values():
    cfg = TrainConfig()
    assert cfg.clip == (-5.0, 5.0)
    assert cfg.epochs == 500 and cfg.lr_decay == 0.5 and cfg.decay_every == 50


@pytest.mark.parametrize("name", ["desk.json", "full_scale.json"])
def test_shipped_configs_load(name):
    from pathlib import Path
    from marn.config import RunConfig
    cfg = RunConfig.load(Path(__file__).parent.parent / "configs" / name)
    assert cfg.train.clip == (-5.0, 5.0)

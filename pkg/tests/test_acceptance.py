"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict; the lines are printed as they
happen and again in the terminal summary.
"""

import time

import numpy as np
import pytest

from marn.basis import BasisModel, ModelDims, forward_teacher_forced
from marn.checkpoint import checkpoint_bytes, digest_hex
from marn.cli import main
from marn.dataset import Dataset
from marn.decode import Captioner, greedy_decode
from marn.evaluate import evaluate_corpus
from marn.memory import AttentionRecord, assemble_memory, build_visual_context
from marn.metrics import bleu4, cider, rouge_l
from marn.microcheck import micro_gradient_check
from marn.synthetic import SyntheticSpec, generate_synthetic_dataset
from marn.training import TrainConfig, caption_nll, select_lambda, train_basis, train_memory_decoder
from marn.vocab import decode_tokens

from oracles import bleu4_oracle, cider_oracle, hand_corpus, rouge_l_oracle, visual_context_oracle

RESULTS: dict[int, str] = {}


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def dims_for(ds, width=32):
    return ModelDims(d=ds.d, c=ds.c, K=len(ds.vocab), m=width, H=width, A=width, emb=width)


def test_criterion_1_gradient_correctness():
    start = time.perf_counter()
    worst = {"combined": 0.0, "memory": 0.0, "frozen_grad_max": 0.0}
    for seed in range(5):
        res = micro_gradient_check(seed, h=1e-5)
        worst = {k: max(worst[k], res[k]) for k in worst}
    elapsed = time.perf_counter() - start
    ok = worst["combined"] < 1e-4 and worst["memory"] < 1e-4 and worst["frozen_grad_max"] == 0 and elapsed < 120
    report(1, ok, f"max rel err combined {worst['combined']:.2e}, memory {worst['memory']:.2e}, "
                  f"5 seeds in {elapsed:.1f}s")


def test_criterion_2_overfit(tmp_path):
    start = time.perf_counter()
    generate_synthetic_dataset(tmp_path, SyntheticSpec(seed=0, n_videos=30, n_concepts=10))
    ds = Dataset.load(tmp_path / "manifest.json", min_count=1)
    cfg = TrainConfig(epochs=300, base_lr=1e-2, batch_size=8, beta=0.1, eval_every=50, max_len=12)
    model = train_basis(ds, cfg, dims_for(ds)).last
    samples = ds.samples("train")
    n_tokens = sum(len(s.token_ids) - 1 for s in samples)
    nll = sum(caption_nll(forward_teacher_forced(ds.features[s.video_id], s.token_ids, model).probs,
                          s.token_ids[1:]).item() for s in samples) / n_tokens
    refs = ds.references("train")
    cap = Captioner(model)
    cands = {v: decode_tokens(greedy_decode(ds.features[v], cap, cfg.max_len), ds.vocab) for v in refs}
    exact = sum(cands[v] in refs[v] for v in refs)
    score = bleu4(cands, refs)
    elapsed = time.perf_counter() - start
    ok = len(ds.vocab) <= 30 and nll < 0.05 and exact == len(refs) and score == 1.0 and elapsed < 600
    report(2, ok, f"vocab {len(ds.vocab)}, NLL/token {nll:.4f}, exact {exact}/{len(refs)}, "
                  f"BLEU-4 {score:.4f}, {cfg.epochs} epochs in {elapsed:.1f}s")


@pytest.fixture(scope="module")
def ambiguity_run(tmp_path_factory):
    """Basis decoder, memory and memory decoder trained on the ambiguity task."""
    root = tmp_path_factory.mktemp("ambiguity")
    spec = SyntheticSpec(seed=0, n_videos=300, n_concepts=10, prototypes=3, noise_sigma=0.5,
                         split_counts=(200, 50, 50))
    generate_synthetic_dataset(root, spec)
    ds = Dataset.load(root / "manifest.json", min_count=1)
    cfg = TrainConfig(epochs=30, base_lr=1e-2, batch_size=16, beta=0.1, eval_every=5, max_len=12)
    basis = train_basis(ds, cfg, dims_for(ds)).model
    digest = digest_hex(checkpoint_bytes(basis.arrays()))
    memory = assemble_memory(basis, ds, k=3, basis_digest=digest)
    memdec = train_memory_decoder(ds, basis, digest, memory, cfg).params
    lam, table = select_lambda(ds, basis, memdec, memory, max_len=cfg.max_len)
    return dict(ds=ds, basis=basis, memory=memory, memdec=memdec, lam=lam, table=table, max_len=cfg.max_len)


def test_criterion_3_ablation_direction(ambiguity_run):
    r = ambiguity_run
    ds, n = r["ds"], r["max_len"]
    base = evaluate_corpus(ds, "test", Captioner(r["basis"]), max_len=n)
    full = evaluate_corpus(ds, "test", Captioner(r["basis"], r["memdec"], r["memory"], lam=r["lam"]), max_len=n)
    zero = evaluate_corpus(ds, "test", Captioner(r["basis"], r["memdec"], r["memory"], lam=0.0), max_len=n)
    ok = full.scores["CIDEr"] >= base.scores["CIDEr"] and zero.scores == base.scores and zero.videos == base.videos
    report(3, ok, f"test CIDEr basis {base.scores['CIDEr']:.4f}, full {full.scores['CIDEr']:.4f} "
                  f"(tuned lambda {r['lam']:.1f}); lambda=0 identical: {zero.scores == base.scores}")


def test_criterion_4_ac_loss(tmp_path):
    generate_synthetic_dataset(tmp_path, SyntheticSpec(seed=0, n_videos=60, n_concepts=10, split_counts=(40, 10, 10)))
    ds = Dataset.load(tmp_path / "manifest.json", min_count=1)

    def variation(model):
        rows = [forward_teacher_forced(ds.features[s.video_id], s.token_ids, model).a2d.data
                for s in ds.samples("train")]
        return float(np.mean(np.concatenate([np.abs(np.diff(a, axis=1)).sum(axis=1) for a in rows])))

    var = {}
    for beta in (0.0, 0.01, 0.1):
        cfg = TrainConfig(epochs=40, base_lr=1e-2, batch_size=8, beta=beta, eval_every=40, max_len=12)
        var[beta] = variation(train_basis(ds, cfg, dims_for(ds)).last)
    ok = var[0.01] < var[0.0] and var[0.1] < var[0.0]
    report(4, ok, "mean adjacent-frame variation " + ", ".join(f"beta={b}: {v:.4f}" for b, v in var.items()))


def test_criterion_5_fusion_endpoints(ambiguity_run):
    r = ambiguity_run
    ds, n = r["ds"], r["max_len"]
    vids = ds.video_ids("test")[:10]
    plain = Captioner(r["basis"])
    fused0 = Captioner(r["basis"], r["memdec"], r["memory"], lam=0.0)
    same0 = all(greedy_decode(ds.features[v], fused0, n) == greedy_decode(ds.features[v], plain, n) for v in vids)
    fused1 = Captioner(r["basis"], r["memdec"], r["memory"], lam=1.0)
    before = [greedy_decode(ds.features[v], fused1, n) for v in vids]
    arrays = r["basis"].arrays()
    rng = np.random.default_rng(0)
    arrays["basis/out_W"] = arrays["basis/out_W"] + rng.normal(size=arrays["basis/out_W"].shape) * 3
    arrays["basis/out_b"] = rng.normal(size=arrays["basis/out_b"].shape) * 3
    perturbed = Captioner(BasisModel.from_arrays(arrays), r["memdec"], r["memory"], lam=1.0)
    after = [greedy_decode(ds.features[v], perturbed, n) for v in vids]
    report(5, same0 and before == after and len(vids) == 10,
           f"lambda=0 matches basis on {len(vids)} videos: {same0}; lambda=1 unchanged by head perturbation: "
           f"{before == after}")


def test_criterion_6_distribution_sanity(ambiguity_run):
    r = ambiguity_run
    ds = r["ds"]
    checked = 0
    for lam, beam in ((r["lam"], 1), (0.5, 3)):
        cap = Captioner(r["basis"], r["memdec"], r["memory"], lam=lam, check=True)
        evaluate_corpus(ds, "test", cap, beam=beam, max_len=r["max_len"])  # raises on a bad step
        checked += cap.checked_steps
    report(6, checked > 0, f"P_b, P_m and P valid at all {checked} decode steps")


def test_criterion_7_metric_oracles():
    cands, refs = hand_corpus()
    pairs = [("BLEU-4", bleu4, bleu4_oracle), ("ROUGE-L", rouge_l, rouge_l_oracle), ("CIDEr", cider, cider_oracle)]
    errs = {name: abs(f(cands, refs) - o(cands, refs)) for name, f, o in pairs}
    report(7, len(cands) == 20 and max(errs.values()) < 1e-6,
           "abs error vs oracle " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))


def test_criterion_8_memory_oracle():
    rng = np.random.default_rng(8)
    worst = 0.0
    for i in range(50):
        L, N, m = int(rng.integers(1, 8)), int(rng.integers(1, 5)), int(rng.integers(1, 6))
        projected = {f"v{j}": (rng.normal(size=(L, m)), rng.normal(size=(N, m))) for j in range(3)}
        n_occ = int(rng.integers(1, 6))
        if i % 5 == 0:  # uniform weights with k covering every item
            recs = [AttentionRecord(4, f"v{int(rng.integers(0, 3))}", np.full(L, 1 / L), np.full(N, 1 / N))]
            k = max(L, N)
            mean = sum(projected[recs[0].video_id][s].mean(axis=0) for s in (0, 1))
            worst = max(worst, np.abs(build_visual_context(recs, projected, k) - mean).max())
        recs = [AttentionRecord(4, f"v{int(rng.integers(0, 3))}", rng.dirichlet(np.ones(L)), rng.dirichlet(np.ones(N)))
                for _ in range(n_occ)]
        k = 1 if i % 5 == 1 else int(rng.integers(1, 5))
        if i % 5 == 1:  # single occurrence, k=1: the weight cancels
            recs = recs[:1]
            f2, f3 = projected[recs[0].video_id]
            pick = f2[recs[0].weights2d.argmax()] + f3[recs[0].weights3d.argmax()]
            worst = max(worst, np.abs(build_visual_context(recs, projected, 1) - pick).max())
        got = build_visual_context(recs, projected, k)
        worst = max(worst, np.abs(got - visual_context_oracle(recs, projected, k)).max())
    report(8, worst < 1e-10, f"max abs deviation from the double-sum oracle over 50 record sets {worst:.1e}")


def test_criterion_9_determinism(tmp_path):
    import json
    config = {"dims": [16, 16, 16, 16], "min_count": 1, "k": 2, "seed": 4,
              "train": {"epochs": 6, "base_lr": 0.01, "batch_size": 8, "eval_every": 3, "max_len": 10},
              "synth": {"n_videos": 20, "n_concepts": 5, "split_counts": [14, 3, 3]}}
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))
    artifacts = ("basis.marnc", "memory.marnm", "memdec.marnc", "eval_report.json", "captions.tsv",
                 "basis_report.json", "memdec_report.json", "digests.json")
    runs = []
    for name in ("a", "b"):
        data = tmp_path / name / "data"
        args = ["--config", str(cfg_path), "--out", str(tmp_path / name / "run"), "--data", str(data / "manifest.json")]
        codes = [main(["synth", "--config", str(cfg_path), "--out", str(data)])]
        codes += [main([cmd, *args]) for cmd in ("train-basis", "build-memory", "train-memory", "eval")]
        assert codes == [0] * 5
        runs.append({a: (tmp_path / name / "run" / a).read_bytes() for a in artifacts})
    same = [a for a in artifacts if runs[0][a] == runs[1][a]]
    report(9, len(same) == len(artifacts), f"{len(same)}/{len(artifacts)} artifacts byte-identical across two runs")

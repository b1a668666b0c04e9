"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times each fused kernel (forward + backward) at desk-scale sizes, then one
training epoch of the basis decoder on a small synthetic dataset.
"""

import argparse
import tempfile
import timeit

import numpy as np

from marn import kernels
from marn.basis import ModelDims
from marn.dataset import Dataset
from marn.synthetic import SyntheticSpec, generate_synthetic_dataset
from marn.training import TrainConfig, train_basis


def kernel_cases(rng, m=64, H=64, A=64, L=40, K=300):
    h, F = rng.normal(size=H), rng.normal(size=(L, m))
    W1, b1, w2 = rng.normal(size=(A, H + m)), rng.normal(size=A), rng.normal(size=A)
    x = rng.normal(size=2 * m + 64)
    Wx, Wh, b = rng.normal(size=(3 * H, x.size)), rng.normal(size=(3 * H, H)), rng.normal(size=3 * H)
    S, G, v = rng.normal(size=(12, A)), rng.normal(size=(K, A)), rng.normal(size=A)

    def attention():
        a, ctx, Z = kernels.attention_forward(h, F, W1, b1, w2)
        kernels.attention_backward(h, F, W1, w2, a, Z, ctx, a)

    def gru():
        out, cache = kernels.gru_forward(x, h, Wx, Wh, b)
        kernels.gru_backward(x, h, Wx, Wh, cache, out)

    def relevance():
        q, Z = kernels.relevance_forward(S, G, v)
        kernels.relevance_backward(Z, v, q)

    return {"attention": attention, "gru": gru, "relevance": relevance}


def epoch_case(tmp):
    generate_synthetic_dataset(tmp, SyntheticSpec(seed=0, n_videos=60, n_concepts=10, split_counts=(40, 10, 10)))
    ds = Dataset.load(f"{tmp}/manifest.json", min_count=1)
    dims = ModelDims(d=ds.d, c=ds.c, K=len(ds.vocab), m=64, H=64, A=64, emb=64)
    cfg = TrainConfig(epochs=1, base_lr=1e-2, batch_size=16, eval_every=100, max_len=12)
    return lambda: train_basis(ds, cfg, dims)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    with tempfile.TemporaryDirectory() as tmp:
        cases["train epoch"] = epoch_case(tmp)
        rows = {}
        for name in backends:
            kernels.use_backend(name)
            for case, fn in cases.items():
                n = 1 if case == "train epoch" else 200
                best = min(timeit.repeat(fn, number=n, repeat=args.repeat)) / n
                rows.setdefault(case, {})[name] = best
    print(f"{'case':<14}" + "".join(f"{b:>14}" for b in backends) + ("       speedup" if len(backends) > 1 else ""))
    for case, times in rows.items():
        line = f"{case:<14}" + "".join(f"{times[b] * 1e6:>12.1f}us" for b in backends)
        if len(backends) > 1:
            line += f"{times['numpy'] / times['cython']:>13.2f}x"
        print(line)


if __name__ == "__main__":
    main()

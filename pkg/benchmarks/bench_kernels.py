"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--scale small|default] [--repeat N]

Each kernel runs once untimed (JIT compile, cache load) before timing.
Outputs must agree between backends; a mismatch aborts the run.
"""
import argparse
import sys
import time

import numpy as np

from trainor import kernels

SCALES = {
    # users, out POIs, sequence length
    "small": (200, 60, 12),
    "default": (2000, 150, 14),
}


def cases(scale, rng):
    n_users, n_out, seq_len = SCALES[scale]
    lat = rng.uniform(31.1, 31.35, n_out)
    lon = rng.uniform(121.3, 121.65, n_out)
    seqs = [rng.integers(0, 300, rng.integers(5, 2 * seq_len)).astype(np.int64) for _ in range(n_users)]

    idx = rng.integers(0, n_out, 64 * 40)
    src = rng.normal(size=(idx.size, 128))

    positives = [np.unique(rng.integers(0, n_out, rng.integers(3, 10))) for _ in range(n_users)]
    counts = np.array([p.size for p in positives], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    pos_flat = np.concatenate(positives).astype(np.int64)
    owner = np.repeat(np.arange(n_users), counts * 4).astype(np.int64)
    draws = rng.integers(0, n_out - counts[owner]).astype(np.int64)

    order = np.argsort(-rng.normal(size=(n_users, n_out)), axis=1).astype(np.int64)
    truth = np.zeros((n_users, n_out), dtype=np.bool_)
    for u, p in enumerate(positives):
        truth[u, p] = True
    ks = np.array([10, 20, 30], dtype=np.int64)

    def scatter(impl):
        out = np.zeros((n_out, 128))
        impl(out, idx, src)
        return out

    def graphs(impl):
        return [impl(s) for s in seqs]

    return {
        "scatter_add_rows": (lambda impl: scatter(impl), "scatter_add_rows"),
        "haversine_matrix": (lambda impl: impl(lat, lon), "haversine_matrix"),
        "session_graph": (graphs, "session_graph"),
        "complement_lookup": (lambda impl: impl(draws, owner, pos_flat, offsets), "complement_lookup"),
        "recall_ap": (lambda impl: impl(order, truth, ks, 0), "recall_ap"),
    }


def _flat(x):
    if isinstance(x, (list, tuple)):
        return np.concatenate([_flat(v) for v in x]) if x else np.zeros(0)
    return np.asarray(x, dtype=np.float64).ravel()


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scale", choices=sorted(SCALES), default="default")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if not kernels.HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    print("kernel\tnumpy_ms\tnumba_ms\tspeedup")
    for name, (run, attr) in cases(args.scale, np.random.default_rng(args.seed)).items():
        fast = getattr(kernels, attr + "_numba")
        slow = getattr(kernels, attr + "_numpy")
        a, b = run(fast), run(slow)
        if not np.allclose(_flat(a), _flat(b), rtol=1e-9, atol=1e-9):
            raise SystemExit(f"{name}: backends disagree")
        t_np = best_of(lambda: run(slow), args.repeat)
        t_nb = best_of(lambda: run(fast), args.repeat)
        print(f"{name}\t{1e3 * t_np:.3f}\t{1e3 * t_nb:.3f}\t{t_np / t_nb:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())

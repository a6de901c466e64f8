"""Compare the compiled and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Shapes follow the acceptance runs: an MNIST layer (784 -> 1000 gates,
N_c = 16, batch 128), a Yin-Yang layer (100 -> 100, N_c = 16) and hard
inference of a 2 x 1000 gate network on 10^4 samples.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from lgn import hard, kernels, model


def gather_case(prev_width, width, nc, batch, seed=0):
    rng = np.random.default_rng(seed)
    prev = rng.random((prev_width, batch)).astype(np.float32)
    cand = np.stack([rng.choice(prev_width, nc, replace=False) for _ in range(width)]).astype(np.int32)
    prob = rng.dirichlet(np.ones(nc), width).astype(np.float32)
    dout = rng.normal(size=(width, batch)).astype(np.float32)
    return prev, cand, prob, dout


def hard_case(seed=0):
    rng = np.random.default_rng(seed)
    net = model.build_network(model.Architecture(784, [1000, 1000], [16, 16], 10), seed)
    for layer in net.layers:
        layer.w_g[...] = rng.normal(size=layer.w_g.shape)
        layer.conn.w_a[...] = rng.normal(size=layer.conn.w_a.shape)
        layer.conn.w_b[...] = rng.normal(size=layer.conn.w_b.shape)
    h = hard.discretize(net)
    batch = hard.pack_bits(rng.integers(0, 2, (10_000, 784)).astype(np.uint8))
    return h, batch


def time_it(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    backends = kernels.available_backends()
    if "native" not in backends:
        print("compiled kernels not built; only the numpy backend is timed")

    cases = {
        "gather fwd mnist 784->1000 nc16 b128": gather_case(784, 1000, 16, 128),
        "gather fwd yinyang 100->100 nc16 b128": gather_case(100, 100, 16, 128),
    }
    rows = []
    for name, (prev, cand, prob, dout) in cases.items():
        for b in backends:
            rows.append((name, b, time_it(lambda: kernels.gather_mix(prev, cand, prob, backend=b), args.repeat)))
        bname = name.replace("fwd", "bwd")
        for b in backends:
            t = time_it(lambda: kernels.gather_mix_backward(dout, prev, cand, prob, backend=b), args.repeat)
            rows.append((bname, b, t))

    net, batch = hard_case()
    for b in backends:

        def run():
            x = batch.words
            for layer in net.layers:
                x = kernels.eval_gates_packed(x, layer.ops, layer.src_a, layer.src_b, backend=b)
            starts = [s for s, _ in net.group_bounds]
            stops = [e for _, e in net.group_bounds]
            kernels.group_counts(x, starts, stops, batch.n_samples, backend=b)

        rows.append(("hard inference 2x1000 on 1e4 samples", b, time_it(run, args.repeat)))

    ref = {(n, b): t for n, b, t in rows}
    print(f"{'kernel':42s} {'backend':8s} {'ms':>9s} {'speedup':>8s}")
    for name, b, t in rows:
        base = ref[(name, "numpy")]
        print(f"{name:42s} {b:8s} {t * 1e3:9.3f} {base / t:8.2f}")


if __name__ == "__main__":
    main()

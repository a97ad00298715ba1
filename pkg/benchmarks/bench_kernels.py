"""Time the compiled and numpy training kernels on the same data.

    python3 benchmarks/bench_kernels.py --n 20000 --repeat 3
"""
import argparse
import time

import numpy as np

from latentseg import datagen, stage1, stage2
from latentseg._kernels import available_backends


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000, help="customers to generate")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--batch-size", type=int, default=256)
    args = ap.parse_args(argv)

    ds = datagen.generate_population(datagen.GenConfig(n_customers=args.n, seed=0))
    ids, labels = datagen.derive_stage2_initial_labels(ds)
    s1 = stage1.Stage1TrainConfig(epochs=10, batch_size=args.batch_size)
    s2 = stage2.SplcConfig(epochs=20, warmup_epochs=5, batch_size=args.batch_size)

    results = {}
    for name, k in sorted(available_backends().items()):
        t1 = best_of(lambda: stage1.train_stage1(ds, s1, k), args.repeat)
        t2 = best_of(lambda: stage2.train_stage2(ds, ids, labels, s2, k), args.repeat)
        results[name] = (t1, t2)
        print(f"{name:<8} stage1 {s1.epochs} epochs {t1:7.3f}s   stage2 {s2.epochs} epochs {t2:7.3f}s")

    if "cython" in results:
        (c1, c2), (p1, p2) = results["cython"], results["python"]
        print(f"speedup  stage1 {p1 / c1:5.2f}x   stage2 {p2 / c2:5.2f}x")
        m_c = stage2.train_stage2(ds, ids, labels, s2, available_backends()["cython"]).model
        m_p = stage2.train_stage2(ds, ids, labels, s2, available_backends()["python"]).model
        print(f"max |v_cython - v_python| = {np.max(np.abs(m_c.v - m_p.v)):.2e}")
    else:
        print("compiled kernels not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()

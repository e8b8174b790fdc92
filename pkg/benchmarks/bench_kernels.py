"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Compilation happens in a warm-up call and is not timed. Each row also
reports the largest absolute difference between the two outputs.
"""

import argparse
import time

import numpy as np

from qbirthmark import kernels
from qbirthmark._accel import HAS_NUMBA


def best_of(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def fresh(args):
    # some kernels accumulate into their array arguments
    return tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)


def cases():
    rng = np.random.default_rng(0)
    base = kernels.stream_base(1, 2)
    yield "uniforms 1e6", "splitmix_uniforms", (base, 0, 1_000_000)
    yield "normals 1e6", "splitmix_normals", (base, 0, 1_000_000)
    e = np.sort(rng.normal(size=500))
    w = rng.normal(size=500) + 1j * rng.normal(size=500)
    yield "phase_sum 2000x500", "phase_sum", (np.linspace(0, 50, 2000), e, w)
    yield "averaging_kernel 500", "averaging_kernel", (e, 3.0)
    psi = rng.normal(size=(256, 512)) + 1j * rng.normal(size=(256, 512))
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2))
    mask = rng.random((256, 512)) < 0.6
    yield ("accumulate_density 512x256", "accumulate_density",
           (psi, 1.0, mask, np.zeros((256, 512)), np.zeros((256, 512)), True, True))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not installed; only the numpy path exists")
    print(f"{'kernel':28s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    for label, name, a in cases():
        f_np = getattr(kernels, name + "_np")
        f_nb = getattr(kernels, name + "_nb")
        t_np = best_of(f_np, a, args.repeat)
        if not HAS_NUMBA:
            print(f"{label:28s} {t_np * 1e3:11.2f} {'-':>11s} {'-':>8s} {'-':>11s}")
            continue
        t_nb = best_of(f_nb, a, args.repeat)
        r_np = f_np(*fresh(a))
        r_nb = f_nb(*fresh(a))
        if isinstance(r_np, tuple):
            diff = max(abs(x - y) for x, y in zip(r_np, r_nb))
        else:
            diff = float(np.max(np.abs(r_np - r_nb)))
        print(f"{label:28s} {t_np * 1e3:11.2f} {t_nb * 1e3:11.2f} {t_np / t_nb:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()

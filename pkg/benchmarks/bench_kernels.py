"""Timing of the numba kernels against the pure-numpy fallback.

Run with ``python benchmarks/bench_kernels.py``.  Each kernel is first
called once per backend (compilation for numba), both results are checked
for agreement, and then the best of several repetitions is reported.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from torus_bnf import kernels
from torus_bnf.builders import build_nlw, monomial_spec
from torus_bnf.frequencies import FrequencyModel
from torus_bnf.measure import build_scan, nlw_omega_samples
from torus_bnf.polynomial import mode_box


def best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(cutoff: int):
    mass = 1.5
    box = mode_box(1, cutoff)
    P = build_nlw(monomial_spec("nlw", 3), mass, cutoff)
    slots, coef = P.compiled(box)
    omega = FrequencyModel.nlw(mass).on_box(box)
    rng = np.random.default_rng(0)
    xi = 1e-2 * (rng.normal(size=len(box)) + 1j * rng.normal(size=len(box)))
    ext = np.concatenate([xi, xi.conj(), [1.0 + 0j]])
    weights = np.array([1.0])
    scan = build_scan(1, 8, 1, 63.0 * 27, "J")
    _, omega_s = nlw_omega_samples(8, 64, 0)
    return {
        "poly_gradient": lambda k: k["poly_gradient"](slots, coef, ext),
        "rk4_flow (32 steps)": lambda k: k["rk4_flow"](xi, slots, coef, 1 / 32, 32, 1.0),
        "split_steps (256 steps)": lambda k: k["split_steps"](xi, omega, slots, coef, 0.02,
                                                               weights, 256),
        "min_log_margin (64 samples)": lambda k: k["min_log_margin"](
            scan.slots, scan.signs, scan.log_factor, scan.group, scan.n_groups, omega_s),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--cutoff", type=int, default=16)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--json", help="write the timings to this file")
    args = parser.parse_args(argv)

    impls = kernels.backends()
    if "numba" not in impls:
        print("numba is not available; only the numpy backend can be timed")
    results = {}
    for name, call in cases(args.cutoff).items():
        outputs = {b: call(k) for b, k in impls.items()}  # warm-up and compile
        ref = np.asarray(outputs["numpy"])
        for b, val in outputs.items():
            err = float(np.max(np.abs(np.asarray(val) - ref)))
            scale = float(np.max(np.abs(ref[np.isfinite(ref)]))) or 1.0
            if err > 1e-10 * scale:
                raise SystemExit(f"{name}: backend {b} disagrees with numpy ({err:.3e})")
        results[name] = {b: best_time(lambda k=k: call(k), args.repeats) for b, k in impls.items()}

    print(f"{'kernel':<30}{'numpy [ms]':>14}{'numba [ms]':>14}{'speed-up':>11}")
    for name, t in results.items():
        nb = t.get("numba")
        row = f"{name:<30}{1e3 * t['numpy']:>14.3f}"
        row += f"{1e3 * nb:>14.3f}{t['numpy'] / nb:>10.1f}x" if nb else f"{'-':>14}{'-':>11}"
        print(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"cutoff": args.cutoff, "timings_s": results}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()

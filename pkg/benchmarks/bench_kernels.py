#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the three hot per-sample loops on acquisition-scale arrays (5 MSa/s x
1 s) and checks that both backends agree to floating-point rounding.  Run
from the repo root:

    python benchmarks/bench_kernels.py [--n 5000000] [--repeats 5]
"""

import argparse
import importlib
import time

import numpy as np


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=5_000_000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    from fidmag import physics
    from fidmag._kernels import _purepy

    try:
        _fidcore = importlib.import_module("fidmag._kernels._fidcore")
    except ImportError:
        print("compiled backend not available; nothing to compare")
        return

    species = physics.load_species()
    dressing = physics.MicrowaveDressing(
        rabi_frequency=2 * np.pi * 6e3, detuning=2 * np.pi * 150e3, enabled=True
    )
    params = physics.kernel_params(species, dressing)
    rng = np.random.default_rng(1)
    b = 86.0121261e-6 + rng.normal(0, 1e-9, args.n)
    dt = 2e-7

    rows = []
    for name, call in [
        ("larmor_omega", lambda impl: impl.larmor_omega(b, params)),
        ("integrate_phase", lambda impl: impl.integrate_phase(b, dt, params)),
    ]:
        t_py, out_py = _time(lambda: call(_purepy), args.repeats)
        t_cy, out_cy = _time(lambda: call(_fidcore), args.repeats)
        err = float(np.max(np.abs(out_py - out_cy) / np.maximum(np.abs(out_py), 1e-300)))
        rows.append((name, t_py, t_cy, err))

    phi = _fidcore.integrate_phase(b, dt, params)
    noise = rng.normal(0, 2.5, args.n)
    syn = lambda impl: impl.synth_codes(phi, 0.3, 1.0, 1 / 0.53, dt, noise, 1 / 5e-4, -32768, 32767)
    t_py, (c_py, k_py) = _time(lambda: syn(_purepy), args.repeats)
    t_cy, (c_cy, k_cy) = _time(lambda: syn(_fidcore), args.repeats)
    frac = float(np.mean(c_py != c_cy))
    rows.append(("synth_codes", t_py, t_cy, frac))

    print(f"n = {args.n}, best of {args.repeats}")
    header = f"{'kernel':<18} {'numpy [ms]':>12} {'cython [ms]':>12} {'speedup':>8}  max rel diff / code mismatch"
    print(header)
    for name, t_py, t_cy, err in rows:
        print(f"{name:<18} {t_py * 1e3:>12.1f} {t_cy * 1e3:>12.1f} {t_py / t_cy:>8.2f}  {err:.3g}")


if __name__ == "__main__":
    main()

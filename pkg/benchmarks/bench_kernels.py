"""Compare the compiled and pure-Python kernel backends.

Times one forward/backward pass per slide (the inner step of training) and
the concordance pair count, for each available backend and for the
size-based dispatcher in ``prism_mil.kernels`` ("auto")::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sweep]

``--sweep`` prints the per-bag-size comparison used to set
``kernels.COMPILED_MAX_PATCHES``.
"""
import argparse
import importlib
import timeit

import numpy as np


def slide_args(n_patches, exact, rng, d_g=16, d_m=32, r=8, d=16, h=8):
    width = r * r if exact else r
    shapes = [(n_patches, d_g), (n_patches, d_m), (d_g, r), (d_m, r), (width, d), (d, h), (d, h), (h, 1), (d, 1), (1, 1)]
    return [np.ascontiguousarray(rng.standard_normal(s) * 0.3) for s in shapes]


def backends():
    out = {"python": importlib.import_module("prism_mil._fallback")}
    try:
        out["cython"] = importlib.import_module("prism_mil._kernels")
    except ImportError:
        return out
    out["auto"] = importlib.import_module("prism_mil.kernels")
    return out


def best_us(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number * 1e6


def sweep(mods, repeat):
    rng = np.random.default_rng(0)
    print(f"{'mode':<12}{'n':>4}{'python':>14}{'cython':>14}   speedup")
    for exact in (False, True):
        for n in (8, 12, 16, 20, 24, 32, 40, 48, 64):
            a = slide_args(n, exact, rng)
            t = {k: best_us(lambda m=mods[k]: m.slide_forward_backward(*a, 1.0, exact, True), 1000, repeat)
                 for k in ("python", "cython")}
            print(f"{'exact' if exact else 'factorized':<12}{n:>4}{t['python']:>11.1f} us{t['cython']:>11.1f} us"
                  f"   {t['python'] / t['cython']:>6.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sweep", action="store_true", help="bag-size crossover table")
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    mods = backends()
    if args.sweep:
        if "cython" not in mods:
            raise SystemExit("compiled backend not built")
        sweep(mods, args.repeat)
        return
    print(f"{'case':<34}" + "".join(f"{name:>14}" for name in mods) + ("   python/auto" if len(mods) > 1 else ""))
    cases = []
    for n in (8, 24, 64):
        for exact in (False, True):
            a = slide_args(n, exact, rng)
            cases.append((f"slide fwd+bwd n={n} {'exact' if exact else 'factorized'}",
                          lambda m, a=a, e=exact: m.slide_forward_backward(*a, 1.0, e, True), 2000))
    s = rng.standard_normal(400)
    t = rng.integers(1, 72, 400).astype(float)
    ev = (rng.random(400) < 0.7).astype(np.int64)
    cases.append(("concordance n=400", lambda m: m.concordance_counts(s, t, ev), 20))
    for label, fn, number in cases:
        times = {}
        for name, mod in mods.items():
            times[name] = best_us(lambda: fn(mod), number, args.repeat)
        line = f"{label:<34}" + "".join(f"{times[n]:>11.1f} us" for n in mods)
        if len(mods) > 1:
            line += f"   {times['python'] / times['auto']:>6.1f}x"
        print(line)


if __name__ == "__main__":
    main()

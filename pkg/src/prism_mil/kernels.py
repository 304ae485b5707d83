"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback. Set ``PRISM_BACKEND=python`` to force the fallback.

The compiled slide kernel runs scalar loops per patch, which beat numpy's
call overhead on small bags but lose to BLAS on large ones. Bags with more
than ``COMPILED_MAX_PATCHES[exact]`` patches therefore go to the numpy
kernel even when the extension is present. The split depends only on the
bag size, so runs stay deterministic.
"""
import os

from . import _fallback

# measured crossover points (benchmarks/bench_kernels.py --sweep)
COMPILED_MAX_PATCHES = {False: 32, True: 16}

BACKEND = "python"
_impl = _fallback
if os.environ.get("PRISM_BACKEND", "").lower() not in ("python", "numpy", "fallback"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

concordance_counts = _impl.concordance_counts

if _impl is _fallback:
    slide_forward_backward = _fallback.slide_forward_backward
else:
    def slide_forward_backward(G, M, Wg, Wm, Wf, V, U, W, hw, hb, y, exact, need_grad):
        """Dispatch one slide to the faster kernel for its bag size."""
        fn = _impl.slide_forward_backward if G.shape[0] <= COMPILED_MAX_PATCHES[bool(exact)] \
            else _fallback.slide_forward_backward
        return fn(G, M, Wg, Wm, Wf, V, U, W, hw, hb, y, exact, need_grad)


def available_backends() -> dict:
    out = {"python": _fallback}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out

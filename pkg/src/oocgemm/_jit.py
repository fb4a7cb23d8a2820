"""Backend switch for the compiled kernels.

Set ``OOCGEMM_DISABLE_NUMBA=1`` to force the pure-numpy code paths. When numba
is missing the numpy paths are used automatically.
"""
import os

_FLAG = os.environ.get("OOCGEMM_DISABLE_NUMBA", "").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")

BACKENDS = ("numba", "numpy")


def default_backend():
    return "numba" if USE_NUMBA else "numpy"


def resolve_backend(backend=None):
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, else an identity decorator.

    Kernels are always compiled lazily, so importing the package with the
    numpy backend selected costs nothing.
    """
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", False)
    return numba.njit(*args, **kwargs)

"""Dense float32 tensors on top of numpy, plus the library's only random source.

Tensors are plain ``numpy.ndarray`` objects (float32 storage). The helpers here
enforce the shape rules the rest of the package relies on and accumulate
reductions in float64.
"""

import numpy as np

MAX_RANK = 4

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = 0xFFFFFFFFFFFFFFFF


def check_shape(shape):
    """Return ``shape`` as a tuple of ints, rejecting empty or zero extents."""
    dims = tuple(int(d) for d in shape)
    if not dims:
        raise ValueError("shape must have at least one dimension")
    if any(d < 1 for d in dims):
        raise ValueError(f"every extent must be >= 1, got {dims}")
    return dims


def filled(shape, value):
    return np.full(check_shape(shape), value, dtype=np.float32)


def matmul(a, b):
    """Matrix product with float64 accumulation; result keeps the operands' float dtype."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} x {b.shape}")
    out_dtype = np.result_type(a.dtype, b.dtype, np.float32)
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(out_dtype)


def tmap(a, f):
    """Apply scalar function ``f`` elementwise."""
    a = np.asarray(a, dtype=np.float32)
    out = np.array([f(float(v)) for v in a.ravel()], dtype=np.float32)
    return out.reshape(a.shape)


def tzip(a, b, f):
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = np.array([f(float(x), float(y)) for x, y in zip(a.ravel(), b.ravel())], dtype=np.float32)
    return out.reshape(a.shape)


def argmax(v):
    """Index of the largest entry; ties resolve to the lowest index."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValueError("argmax expects a rank-1 tensor")
    if v.size == 0:
        raise ValueError("argmax of an empty tensor")
    return int(np.argmax(v))  # numpy returns the first occurrence


def _splitmix(z):
    # z: uint64 array of already-advanced states
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Prng:
    """SplitMix64 generator.

    The state advances by the golden-ratio increment on every draw and each
    output is the standard SplitMix64 finalizer applied to the new state, so
    streams are identical on every platform.
    """

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u64(self):
        return int(self.u64(1)[0])

    def u64(self, n):
        """Next ``n`` outputs as a uint64 array (vectorised)."""
        n = int(n)
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            out = _splitmix(z)
        self.state = (self.state + n * _GAMMA) & _MASK64
        return out

    def random(self, n):
        """``n`` float64 values uniform on [0, 1) with 53-bit resolution."""
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def uniform(self, shape, lo=0.0, hi=1.0):
        shape = check_shape(shape)
        if not lo < hi:
            raise ValueError(f"uniform needs lo < hi, got lo={lo}, hi={hi}")
        u = self.random(int(np.prod(shape)))
        out = (lo + (hi - lo) * u).astype(np.float32)
        # float32 rounding may land exactly on hi
        top = np.nextafter(np.float32(hi), np.float32(lo))
        np.minimum(out, top, out=out)
        return out.reshape(shape)

    def permutation(self, n):
        """Deterministic random permutation of ``range(n)``."""
        keys = self.u64(n)
        return np.argsort(keys, kind="stable")

    def spawn(self):
        """Independent child generator seeded from this stream."""
        return Prng(self.next_u64())


def prng_uniform(prng, shape, lo, hi):
    return prng.uniform(shape, lo, hi)

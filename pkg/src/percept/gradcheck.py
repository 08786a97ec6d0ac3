"""Central finite-difference checks of the analytic backward passes.

Checks run on a float64 copy of the network, so the only error left in the
comparison is the O(h^2) truncation of the central difference.
"""

import numpy as np

from .layers import NON_TRAINABLE, MaxPool2D, Network, ReLU, Softmax
from .tensor import Prng


# gradients that vanish identically (e.g. a bias feeding batch norm) leave only
# finite-difference roundoff (1e-13 to 1e-11 here); the floor keeps them from
# scoring 1.0 while staying far below any real gradient norm
ABS_FLOOR = 1e-6


def relative_error(analytic, numeric):
    """Norm-wise relative error ``|a - n| / max(|a| + |n|, ABS_FLOOR)``."""
    a = np.ravel(np.asarray(analytic, dtype=np.float64))
    n = np.ravel(np.asarray(numeric, dtype=np.float64))
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), ABS_FLOOR)
    return float(np.linalg.norm(a - n) / denom)


def numerical_gradient(f, x, h=1e-3, coords=None):
    """Central differences of scalar ``f()`` w.r.t. entries of array ``x`` (perturbed in place).

    ``coords`` restricts the probe to the given flat indices; the return value
    then holds only those entries.
    """
    flat = x.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    out = []
    for k in coords:
        old = flat[k]
        flat[k] = old + h
        fp = f()
        flat[k] = old - h
        fm = f()
        flat[k] = old
        out.append((fp - fm) / (2.0 * h))
    return np.array(out)


def _pattern(specs, caches):
    """Discrete branch choices of a forward pass: ReLU signs and pooling winners."""
    parts = []
    for spec, cache in zip(specs, caches):
        if isinstance(spec, ReLU):
            parts.append(cache > 0)
        elif isinstance(spec, MaxPool2D):
            parts.append(cache[0])
    return parts


def _same(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def _sample(size, limit, rng):
    if limit is None or size <= limit:
        return np.arange(size)
    return np.sort(rng.choice(size, size=limit, replace=False))


def check_network(specs, input_shape, seed, batch=2, h=1e-3, max_coords=None, input_scale=1.0):
    """Compare analytic and numerical gradients for every parameter and the input.

    Networks ending in Softmax are scored with cross-entropy against random
    labels through the fused backward path; anything else with a fixed random
    projection of its output. Probes whose +-h step flips a ReLU sign or a
    pooling winner straddle a kink where the difference quotient is
    meaningless; they are left out and counted under ``"skipped"``.

    Returns ``({name: relative_error}, skipped)``.
    """
    prng = Prng(seed)
    net = Network(specs, input_shape, prng).astype(np.float64)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-input_scale, input_scale, size=(batch, *input_shape))
    mask_seed = prng.next_u64()
    fused = bool(specs) and isinstance(specs[-1], Softmax)

    out, caches = net.forward(x, train=True, prng=Prng(mask_seed))
    base = _pattern(specs, caches)
    if fused:
        onehot = np.eye(out.shape[-1])[rng.integers(0, out.shape[-1], size=batch)]
        dout = (out - onehot) / batch
    else:
        proj = rng.normal(size=out.shape)
        dout = proj
    dx, grads = net.backward(caches, dout, fused_softmax=fused)

    def loss():
        out, caches = net.forward(x, train=True, prng=Prng(mask_seed))
        value = -np.sum(onehot * np.log(out)) / batch if fused else np.sum(out * proj)
        return float(value), _pattern(specs, caches)

    skipped = 0

    def probe(arr, analytic):
        nonlocal skipped
        flat = arr.reshape(-1)
        a, n = [], []
        for k in _sample(flat.size, max_coords, rng):
            old = flat[k]
            flat[k] = old + h
            fp, pp = loss()
            flat[k] = old - h
            fm, pm = loss()
            flat[k] = old
            if not (_same(pp, base) and _same(pm, base)):
                skipped += 1
                continue
            a.append(analytic.reshape(-1)[k])
            n.append((fp - fm) / (2.0 * h))
        return relative_error(a, n)

    errors = {"input": probe(x, dx)}
    for i, params in enumerate(net.params):
        for name, p in params.items():
            if name not in NON_TRAINABLE:
                errors[f"{i}:{specs[i].kind}.{name}"] = probe(p, grads[i][name])
    return errors, skipped

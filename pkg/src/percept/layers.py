"""Layer specs, forward/backward passes and network composition.

Forward functions follow the ``out, cache = layer_forward(x, ...)`` /
``dx, grads = layer_backward(dout, cache)`` convention. Every layer computes in
float64 internally and hands back arrays in the dtype of its input, so a
float64 input gives a float64 "shadow" network for gradient checking while
float32 stays the storage type for training.
"""

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import _kernels
from .tensor import Prng

# ---------------------------------------------------------------- layer specs


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel_h: int = 3
    kernel_w: int = 3
    stride: int = 1
    padding: str = "valid"
    kind = "conv2d"

    def __post_init__(self):
        if min(self.out_channels, self.kernel_h, self.kernel_w, self.stride) < 1:
            raise ValueError(f"Conv2D extents must be >= 1: {self}")
        if self.padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {self.padding!r}")


@dataclass(frozen=True)
class MaxPool2D:
    pool_h: int = 2
    pool_w: int = 2
    kind = "maxpool2d"

    def __post_init__(self):
        if self.pool_h < 1 or self.pool_w < 1:
            raise ValueError("pool extents must be >= 1")


@dataclass(frozen=True)
class Dense:
    units: int
    kind = "dense"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("Dense units must be >= 1")


@dataclass(frozen=True)
class ReLU:
    kind = "relu"


@dataclass(frozen=True)
class Softmax:
    kind = "softmax"


@dataclass(frozen=True)
class Dropout:
    rate: float
    kind = "dropout"

    def __post_init__(self):
        if not 0.0 < self.rate < 1.0:
            raise ValueError(f"dropout rate must lie strictly inside (0, 1), got {self.rate}")


@dataclass(frozen=True)
class BatchNorm:
    momentum: float = 0.9
    epsilon: float = 1e-5
    kind = "batchnorm"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("BatchNorm epsilon must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("BatchNorm momentum must lie in [0, 1)")


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"


@dataclass(frozen=True)
class LSTM:
    units: int
    return_sequence: bool = False
    kind = "lstm"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("LSTM units must be >= 1")


SPEC_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, Dense, ReLU, Softmax, Dropout, BatchNorm, Flatten, LSTM)}

# parameters updated by the optimizer; everything else is state
NON_TRAINABLE = {"running_mean", "running_var"}


def spec_to_dict(spec):
    return {"kind": spec.kind, **asdict(spec)}


def spec_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    try:
        cls = SPEC_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    allowed = {f.name for f in fields(cls)}
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown fields for {kind}: {sorted(unknown)}")
    return cls(**d)


# ---------------------------------------------------------------- helpers


def _f64(a):
    return np.asarray(a, dtype=np.float64)


def _same_pads(size, k, stride):
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def conv_output_hw(h, w, spec):
    if spec.padding == "same":
        return -(-h // spec.stride), -(-w // spec.stride)
    if spec.kernel_h > h or spec.kernel_w > w:
        raise ValueError(f"{spec.kernel_h}x{spec.kernel_w} kernel does not fit a {h}x{w} input")
    return (h - spec.kernel_h) // spec.stride + 1, (w - spec.kernel_w) // spec.stride + 1


# ---------------------------------------------------------------- conv / pool


def conv2d_forward(x, params, spec):
    """Cross-correlation (no kernel flip) of ``x`` [N,C,H,W] plus per-filter bias."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"conv2d expects [N,C,H,W], got {x.shape}")
    w, b = params["W"], params["b"]
    if w.shape[1] != x.shape[1]:
        raise ValueError(f"kernel expects {w.shape[1]} channels, input has {x.shape[1]}")
    n, c, h, wd = x.shape
    oh, ow = conv_output_hw(h, wd, spec)
    if spec.padding == "same":
        pt, pb = _same_pads(h, spec.kernel_h, spec.stride)
        pl, pr = _same_pads(wd, spec.kernel_w, spec.stride)
        xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    else:
        pt = pl = 0
        xp = x
    xp = np.ascontiguousarray(xp)
    out = np.empty((n, w.shape[0], oh, ow), dtype=x.dtype)
    _kernels.conv_forward(xp, np.ascontiguousarray(w, dtype=x.dtype), b.astype(x.dtype), spec.stride, out)
    return out, (xp, (pt, pl), x.shape, params, spec)


def _windows(xp, kh, kw, stride, oh, ow):
    # [N, OH, OW, C, kh, kw] view of the padded input
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :oh, :ow].transpose(0, 2, 3, 1, 4, 5)


def conv2d_backward(dout, cache):
    xp, (pt, pl), x_shape, params, spec = cache
    w = _f64(params["W"])
    f, c, kh, kw = w.shape
    n, _, oh, ow = dout.shape
    s = spec.stride
    d = _f64(dout).transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
    cols = _windows(_f64(xp), kh, kw, s, oh, ow).reshape(n * oh * ow, c * kh * kw)
    dw = (d.T @ cols).reshape(w.shape)
    db = d.sum(axis=0)
    dcols = (d @ w.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    dxp = np.zeros(xp.shape)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s] += dcols[..., i, j]
    h, wd = x_shape[2], x_shape[3]
    dx = dxp[:, :, pt:pt + h, pl:pl + wd]
    return dx.astype(xp.dtype), {"W": dw.astype(params["W"].dtype), "b": db.astype(params["b"].dtype)}


def maxpool2d_forward(x, spec):
    """Non-overlapping max pooling; the first maximum in each window wins."""
    x = np.asarray(x)
    n, c, h, w = x.shape
    ph, pw = spec.pool_h, spec.pool_w
    if h % ph or w % pw:
        raise ValueError(f"{h}x{w} input is not divisible by the {ph}x{pw} pool")
    win = x.reshape(n, c, h // ph, ph, w // pw, pw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // ph, w // pw, ph * pw)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape, spec)


def maxpool2d_backward(dout, cache):
    idx, (n, c, h, w), spec = cache
    ph, pw = spec.pool_h, spec.pool_w
    win = np.zeros((n, c, h // ph, w // pw, ph * pw), dtype=dout.dtype)
    np.put_along_axis(win, idx[..., None], dout[..., None], axis=-1)
    dx = win.reshape(n, c, h // ph, w // pw, ph, pw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
    return dx, {}


# ---------------------------------------------------------------- dense & activations


def dense_forward(x, params):
    x = np.asarray(x)
    w, b = params["W"], params["b"]
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"dense layer expects [N,{w.shape[0]}], got {x.shape}")
    out = _f64(x) @ _f64(w) + _f64(b)
    return out.astype(x.dtype), (x, params)


def dense_backward(dout, cache):
    x, params = cache
    d = _f64(dout)
    dw = _f64(x).T @ d
    db = d.sum(axis=0)
    dx = d @ _f64(params["W"]).T
    return dx.astype(x.dtype), {"W": dw.astype(params["W"].dtype), "b": db.astype(params["b"].dtype)}


def relu(x):
    return np.maximum(x, 0).astype(np.asarray(x).dtype)


def relu_forward(x):
    x = np.asarray(x)
    return relu(x), x


def relu_backward(dout, x):
    return np.where(x > 0, dout, 0).astype(x.dtype), {}


def softmax(x):
    """Softmax along the last axis, shifted by the row maximum for stability."""
    x = np.asarray(x)
    z = _f64(x)
    z = np.exp(z - z.max(axis=-1, keepdims=True))
    p = z / z.sum(axis=-1, keepdims=True)
    return p.astype(x.dtype if x.dtype.kind == "f" else np.float32)


def softmax_backward(dout, p):
    p64 = _f64(p)
    d = _f64(dout)
    dx = p64 * (d - (d * p64).sum(axis=-1, keepdims=True))
    return dx.astype(p.dtype), {}


# ---------------------------------------------------------------- dropout & batch norm


def dropout_forward(x, rate, train, prng=None):
    """Inverted dropout: survivors scaled by 1/(1-rate) in training, identity otherwise."""
    if not 0.0 < rate < 1.0:
        raise ValueError(f"dropout rate must lie strictly inside (0, 1), got {rate}")
    x = np.asarray(x)
    if not train:
        return x, None
    if prng is None:
        raise ValueError("training-mode dropout needs a Prng")
    keep = prng.random(x.size).reshape(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return (_f64(x) * mask).astype(x.dtype), mask


def dropout_backward(dout, mask):
    if mask is None:
        return dout, {}
    return (_f64(dout) * mask).astype(dout.dtype), {}


def _bn_axes(x):
    if x.ndim == 2:
        return (0,), (1, -1)
    if x.ndim == 4:
        return (0, 2, 3), (1, -1, 1, 1)
    raise ValueError(f"batch norm supports [N,F] or [N,C,H,W] inputs, got {x.shape}")


def batchnorm_forward(x, params, spec, train):
    """Returns ``(out, cache)``; in training the cache also carries the updated running stats."""
    x = np.asarray(x)
    axes, bshape = _bn_axes(x)
    gamma = _f64(params["gamma"]).reshape(bshape)
    beta = _f64(params["beta"]).reshape(bshape)
    x64 = _f64(x)
    if not train:
        mean = _f64(params["running_mean"]).reshape(bshape)
        var = _f64(params["running_var"]).reshape(bshape)
        out = (x64 - mean) / np.sqrt(var + spec.epsilon) * gamma + beta
        return out.astype(x.dtype), None
    if x.shape[0] < 2:
        raise ValueError("batch norm in training mode needs a batch of at least 2")
    mean = x64.mean(axis=axes, keepdims=True)
    var = ((x64 - mean) ** 2).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + spec.epsilon)
    xhat = (x64 - mean) * inv_std
    out = xhat * gamma + beta
    m = spec.momentum
    new_mean = m * _f64(params["running_mean"]) + (1 - m) * mean.ravel()
    new_var = m * _f64(params["running_var"]) + (1 - m) * var.ravel()
    cache = {
        "xhat": xhat,
        "inv_std": inv_std,
        "gamma": gamma,
        "axes": axes,
        "dtype": x.dtype,
        "param_dtype": params["gamma"].dtype,
        "running_mean": new_mean.astype(params["running_mean"].dtype),
        "running_var": new_var.astype(params["running_var"].dtype),
    }
    return out.astype(x.dtype), cache


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, axes = cache["xhat"], cache["inv_std"], cache["gamma"], cache["axes"]
    d = _f64(dout)
    m = xhat.size // gamma.size
    dgamma = (d * xhat).sum(axis=axes)
    dbeta = d.sum(axis=axes)
    dxhat = d * gamma
    dx = inv_std / m * (
        m * dxhat - dxhat.sum(axis=axes, keepdims=True) - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
    )
    pd = cache["param_dtype"]
    return dx.astype(cache["dtype"]), {"gamma": dgamma.astype(pd), "beta": dbeta.astype(pd)}


# ---------------------------------------------------------------- LSTM


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _split_gates(params):
    # packed column blocks, gate order i, f, g, o
    return _f64(params["W"]), _f64(params["U"]), _f64(params["b"])


def lstm_cell_step(x_t, h_prev, c_prev, params):
    """One LSTM step, returns ``(h_t, c_t)``.

    i, f, o are sigmoid gates and g the tanh candidate; the cell is
    ``c_t = f*c_prev + i*g`` and the output ``h_t = o*tanh(c_t)``.
    """
    h_t, c_t, _ = _lstm_step(_f64(x_t), _f64(h_prev), _f64(c_prev), *_split_gates(params))
    dtype = np.asarray(x_t).dtype
    return h_t.astype(dtype), c_t.astype(dtype)


def _lstm_step(x_t, h_prev, c_prev, w, u, b, xw=None):
    units = u.shape[0]
    if h_prev.shape[-1] != units or c_prev.shape[-1] != units:
        raise ValueError(f"state width must be {units}")
    if xw is None:
        if x_t.shape[-1] != w.shape[0]:
            raise ValueError(f"LSTM expects input width {w.shape[0]}, got {x_t.shape[-1]}")
        xw = x_t @ w
    z = xw + h_prev @ u + b
    i = _sigmoid(z[..., :units])
    f = _sigmoid(z[..., units:2 * units])
    g = np.tanh(z[..., 2 * units:3 * units])
    o = _sigmoid(z[..., 3 * units:])
    c_t = f * c_prev + i * g
    tc = np.tanh(c_t)
    h_t = o * tc
    return h_t, c_t, (i, f, g, o, tc)


def lstm_forward(x, params, spec):
    """Run the recurrence over ``x`` [N,T,in] from zero state."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"LSTM expects [N,T,in], got {x.shape}")
    n, t_len, d_in = x.shape
    if t_len == 0:
        raise ValueError("LSTM needs at least one time step")
    w, u, b = _split_gates(params)
    if d_in != w.shape[0]:
        raise ValueError(f"LSTM expects input width {w.shape[0]}, got {d_in}")
    units = u.shape[0]
    x64 = _f64(x)
    xw = (x64.reshape(n * t_len, d_in) @ w).reshape(n, t_len, 4 * units)
    h = np.zeros((n, units))
    c = np.zeros((n, units))
    hs, cs, gates = [h], [c], []
    for t in range(t_len):
        h, c, gate = _lstm_step(None, h, c, w, u, b, xw=xw[:, t])
        hs.append(h)
        cs.append(c)
        gates.append(gate)
    out = np.stack(hs[1:], axis=1) if spec.return_sequence else h
    return out.astype(x.dtype), (x64, hs, cs, gates, params, spec, x.dtype)


def lstm_backward(dout, cache):
    """Backpropagation through time across every step."""
    x64, hs, cs, gates, params, spec, dtype = cache
    n, t_len, d_in = x64.shape
    w, u, _ = _split_gates(params)
    units = u.shape[0]
    d = _f64(dout)
    dz_all = np.empty((n, t_len, 4 * units))
    dh_next = np.zeros((n, units))
    dc_next = np.zeros((n, units))
    du = np.zeros_like(u)
    for t in reversed(range(t_len)):
        i, f, g, o, tc = gates[t]
        dh = dh_next + (d[:, t] if spec.return_sequence else (d if t == t_len - 1 else 0.0))
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * cs[t]
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
        dz_all[:, t] = dz
        du += hs[t].T @ dz
        dh_next = dz @ u.T
        dc_next = dc * f
    dz_flat = dz_all.reshape(n * t_len, 4 * units)
    dw = x64.reshape(n * t_len, d_in).T @ dz_flat
    db = dz_flat.sum(axis=0)
    dx = (dz_flat @ w.T).reshape(n, t_len, d_in)
    pd = params["W"].dtype
    return dx.astype(dtype), {"W": dw.astype(pd), "U": du.astype(pd), "b": db.astype(pd)}


# ---------------------------------------------------------------- shapes & init


def output_shape(spec, in_shape):
    """Per-sample output shape (no batch axis) for ``spec`` fed ``in_shape``."""
    s = tuple(in_shape)
    if isinstance(spec, Conv2D):
        if len(s) != 3:
            raise ValueError(f"Conv2D needs a [C,H,W] input, got {s}")
        oh, ow = conv_output_hw(s[1], s[2], spec)
        return (spec.out_channels, oh, ow)
    if isinstance(spec, MaxPool2D):
        if len(s) != 3:
            raise ValueError(f"MaxPool2D needs a [C,H,W] input, got {s}")
        if s[1] % spec.pool_h or s[2] % spec.pool_w:
            raise ValueError(f"{s[1]}x{s[2]} input is not divisible by the {spec.pool_h}x{spec.pool_w} pool")
        return (s[0], s[1] // spec.pool_h, s[2] // spec.pool_w)
    if isinstance(spec, Dense):
        if len(s) != 1:
            raise ValueError(f"Dense needs a flat input, got {s}")
        return (spec.units,)
    if isinstance(spec, Flatten):
        return (int(np.prod(s)),)
    if isinstance(spec, LSTM):
        if len(s) != 2:
            raise ValueError(f"LSTM needs a [T,features] input, got {s}")
        return (s[0], spec.units) if spec.return_sequence else (spec.units,)
    if isinstance(spec, BatchNorm):
        if len(s) not in (1, 3):
            raise ValueError(f"BatchNorm needs a [F] or [C,H,W] input, got {s}")
        return s
    return s


def _feeds_relu(specs, i):
    for nxt in specs[i + 1:]:
        if isinstance(nxt, (BatchNorm, Dropout)):
            continue
        return isinstance(nxt, ReLU)
    return False


def init_params(spec, in_shape, prng, feeds_relu=False):
    """He-uniform ahead of ReLU, Glorot-uniform otherwise; biases zero, LSTM forget bias one."""
    f32 = np.float32

    def weights(shape, fan_in, fan_out):
        limit = math.sqrt(6.0 / fan_in) if feeds_relu else math.sqrt(6.0 / (fan_in + fan_out))
        return prng.uniform(shape, -limit, limit)

    if isinstance(spec, Conv2D):
        c = in_shape[0]
        k = spec.kernel_h * spec.kernel_w
        w = weights((spec.out_channels, c, spec.kernel_h, spec.kernel_w), c * k, spec.out_channels * k)
        return {"W": w, "b": np.zeros(spec.out_channels, f32)}
    if isinstance(spec, Dense):
        d = in_shape[0]
        return {"W": weights((d, spec.units), d, spec.units), "b": np.zeros(spec.units, f32)}
    if isinstance(spec, BatchNorm):
        nf = in_shape[0]
        return {
            "gamma": np.ones(nf, f32),
            "beta": np.zeros(nf, f32),
            "running_mean": np.zeros(nf, f32),
            "running_var": np.ones(nf, f32),
        }
    if isinstance(spec, LSTM):
        d, units = in_shape[-1], spec.units
        limit_w = math.sqrt(6.0 / (d + 4 * units))
        limit_u = math.sqrt(6.0 / (units + 4 * units))
        b = np.zeros(4 * units, f32)
        b[units:2 * units] = 1.0
        return {
            "W": prng.uniform((d, 4 * units), -limit_w, limit_w),
            "U": prng.uniform((units, 4 * units), -limit_u, limit_u),
            "b": b,
        }
    return {}


def param_count(params_list, trainable_only=True):
    total = 0
    for params in params_list:
        for name, p in params.items():
            if trainable_only and name in NON_TRAINABLE:
                continue
            total += p.size
    return total


# ---------------------------------------------------------------- composition


def infer_shapes(specs, input_shape):
    """Shape after every layer; raises on incompatible neighbours."""
    shapes = [tuple(input_shape)]
    for i, spec in enumerate(specs):
        try:
            shapes.append(output_shape(spec, shapes[-1]))
        except ValueError as exc:
            raise ValueError(f"layer {i} ({spec.kind}): {exc}") from None
    return shapes


def build_params(specs, input_shape, prng):
    shapes = infer_shapes(specs, input_shape)
    return [init_params(spec, shapes[i], prng, _feeds_relu(specs, i)) for i, spec in enumerate(specs)]


def layer_forward(spec, params, x, train, prng=None):
    if isinstance(spec, Conv2D):
        return conv2d_forward(x, params, spec)
    if isinstance(spec, MaxPool2D):
        return maxpool2d_forward(x, spec)
    if isinstance(spec, Dense):
        return dense_forward(x, params)
    if isinstance(spec, ReLU):
        return relu_forward(x)
    if isinstance(spec, Softmax):
        p = softmax(x)
        return p, p
    if isinstance(spec, Dropout):
        return dropout_forward(x, spec.rate, train, prng)
    if isinstance(spec, BatchNorm):
        return batchnorm_forward(x, params, spec, train)
    if isinstance(spec, Flatten):
        x = np.asarray(x)
        return x.reshape(x.shape[0], -1), x.shape
    if isinstance(spec, LSTM):
        return lstm_forward(x, params, spec)
    raise TypeError(f"unsupported layer spec {spec!r}")


def layer_backward(spec, dout, cache):
    if isinstance(spec, Conv2D):
        return conv2d_backward(dout, cache)
    if isinstance(spec, MaxPool2D):
        return maxpool2d_backward(dout, cache)
    if isinstance(spec, Dense):
        return dense_backward(dout, cache)
    if isinstance(spec, ReLU):
        return relu_backward(dout, cache)
    if isinstance(spec, Softmax):
        return softmax_backward(dout, cache)
    if isinstance(spec, Dropout):
        return dropout_backward(dout, cache)
    if isinstance(spec, BatchNorm):
        return batchnorm_backward(dout, cache)
    if isinstance(spec, Flatten):
        return dout.reshape(cache), {}
    if isinstance(spec, LSTM):
        return lstm_backward(dout, cache)
    raise TypeError(f"unsupported layer spec {spec!r}")


def network_forward(specs, params_list, x, train=False, prng=None):
    """Compose the layers. Returns ``(output, caches)``; caches is None in inference.

    In training mode batch-norm running statistics in ``params_list`` are
    updated in place after the pass.
    """
    if train and prng is None and any(isinstance(s, Dropout) for s in specs):
        raise ValueError("training-mode forward with dropout needs a Prng")
    out = x
    caches = []
    for spec, params in zip(specs, params_list):
        out, cache = layer_forward(spec, params, out, train, prng)
        caches.append(cache)
    if not train:
        return out, None
    for spec, params, cache in zip(specs, params_list, caches):
        if isinstance(spec, BatchNorm):
            params["running_mean"] = cache["running_mean"]
            params["running_var"] = cache["running_var"]
    return out, caches


def network_backward(specs, caches, dout, fused_softmax=False):
    """Gradients for every layer plus the input.

    With ``fused_softmax`` the upstream gradient is taken with respect to the
    logits feeding a terminal Softmax (as produced by the fused cross-entropy)
    and the softmax Jacobian is skipped.
    """
    if caches is None:
        raise ValueError("backward needs the caches of a training-mode forward pass")
    n = len(specs)
    if fused_softmax:
        if not specs or not isinstance(specs[-1], Softmax):
            raise ValueError("fused_softmax requires a terminal Softmax layer")
        n -= 1
    grads = [{} for _ in specs]
    d = dout
    for i in reversed(range(n)):
        d, grads[i] = layer_backward(specs[i], d, caches[i])
    return d, grads


class Network:
    """Layer specs together with their parameters for a fixed per-sample input shape."""

    def __init__(self, specs, input_shape, prng=None, params=None):
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.shapes = infer_shapes(self.specs, self.input_shape)
        if params is None:
            if prng is None:
                raise ValueError("need a Prng to initialise parameters")
            params = build_params(self.specs, self.input_shape, prng)
        elif len(params) != len(self.specs):
            raise ValueError("one parameter dict per layer is required")
        self.params = params

    @property
    def output_shape(self):
        return self.shapes[-1]

    def forward(self, x, train=False, prng=None):
        return network_forward(self.specs, self.params, x, train, prng)

    def backward(self, caches, dout, fused_softmax=False):
        return network_backward(self.specs, caches, dout, fused_softmax)

    def predict(self, x, batch_size=256):
        outs = [self.forward(x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)

    def astype(self, dtype):
        params = [{k: v.astype(dtype) for k, v in p.items()} for p in self.params]
        return Network(self.specs, self.input_shape, params=params)

    def copy_params(self):
        return [{k: v.copy() for k, v in p.items()} for p in self.params]

    def n_params(self):
        return param_count(self.params)

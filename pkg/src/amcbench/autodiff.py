"""Reverse-mode autodiff over dense float64 arrays.

Every operation builds a graph of Tensor nodes; calling backward() on a
scalar root accumulates gradients into every reachable node in reverse
topological order. Values are 64-bit throughout so finite-difference
checks are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, ShapeError, TrainingError, UsageError


class Tensor:
    """A node in the computation graph: value, optional grad, parent links."""

    __slots__ = ("data", "grad", "name", "_parents", "_backward", "_backward_ran")

    def __init__(self, data, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.name = name
        self._parents = tuple(parents)
        self._backward = backward
        self._backward_ran = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def backward(self):
        """Seed d(self)/d(self)=1 and accumulate grads through the graph.

        The root must be scalar; rerunning backward on the same root is an
        error (rebuild the graph instead, so accumulation bugs cannot hide).
        """
        if self.data.size != 1:
            raise UsageError(f"backward requires a scalar root, got shape {self.data.shape}")
        if self._backward_ran:
            raise UsageError("backward already ran for this root; rebuild the graph to rerun")
        self._backward_ran = True

        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        _accum(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / linear-algebra primitives


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    out._backward = bwd
    return out


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data - b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    out._backward = bwd
    return out


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    out._backward = bwd
    return out


def neg(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(-a.data, (a,))
    out._backward = lambda g: _accum(a, -g)
    return out


def scale(a, c: float) -> Tensor:
    """Multiply by a python constant (no graph node for the constant)."""
    a = _wrap(a)
    out = Tensor(a.data * c, (a,))
    out._backward = lambda g: _accum(a, g * c)
    return out


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    out._backward = bwd
    return out


def transpose(a) -> Tensor:
    a = _wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got shape {a.data.shape}")
    out = Tensor(a.data.T.copy(), (a,))
    out._backward = lambda g: _accum(a, g.T)
    return out


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape), (a,))
    out._backward = lambda g: _accum(a, g.reshape(a.data.shape))
    return out


def concat(parts, axis=0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(part, g[tuple(idx)])

    out._backward = bwd
    return out


def gather_rows(a, indices) -> Tensor:
    """Select rows of a 2-D tensor; gradient scatter-adds back."""
    a = _wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-D tensor, got shape {a.data.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    out = Tensor(a.data[idx], (a,))

    def bwd(g):
        da = np.zeros_like(a.data)
        np.add.at(da, idx, g)
        _accum(a, da)

    out._backward = bwd
    return out


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    out._backward = bwd
    return out


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(s, (a,))
    out._backward = lambda g: _accum(a, g * s * (1.0 - s))
    return out


def tanh(a) -> Tensor:
    a = _wrap(a)
    t = np.tanh(a.data)
    out = Tensor(t, (a,))
    out._backward = lambda g: _accum(a, g * (1.0 - t * t))
    return out


def log(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.log(a.data), (a,))
    out._backward = lambda g: _accum(a, g / a.data)
    return out


def relu(a) -> Tensor:
    a = _wrap(a)
    out = Tensor(np.maximum(a.data, 0.0), (a,))
    out._backward = lambda g: _accum(a, g * (a.data > 0))
    return out


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    # Subgradient at exactly 0 is `slope`, per the x > 0 test below.
    a = _wrap(a)
    out = Tensor(np.where(a.data > 0, a.data, slope * a.data), (a,))
    out._backward = lambda g: _accum(a, g * np.where(a.data > 0, 1.0, slope))
    return out


def softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p, (a,))

    def bwd(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        _accum(a, p * (g - dot))

    out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# structured ops


def conv_out_len(n: int, pad: int, k: int, stride: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _patches(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided (N, C, Ho, Wo, kh, kw) window view of a padded (N, C, H, W) array."""
    n, c, h, w = xp.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, ho, wo, kh, kw),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def conv2d(x, kernels, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation, differentiable w.r.t. input and kernels.

    x: (C, H, W) or (N, C, H, W); kernels: (C_out, C_in, kh, kw).
    Output spatial dims follow floor((n + 2*pad - k) / stride) + 1.
    """
    x, kernels = _wrap(x), _wrap(kernels)
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    kd = kernels.data
    if xd.ndim != 4 or kd.ndim != 4:
        raise ShapeError(f"conv2d expects (N,C,H,W) input and (Co,Ci,kh,kw) kernels, got {x.data.shape} and {kd.shape}")
    if stride < 1:
        raise ConfigurationError(f"conv2d stride must be >= 1, got {stride}")
    n, c, h, w = xd.shape
    co, ci, kh, kw = kd.shape
    if ci != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c} channels, kernels expect {ci}")
    if kh > h + 2 * pad or kw > w + 2 * pad:
        raise ShapeError(f"conv2d kernel {kh}x{kw} exceeds padded input {h + 2 * pad}x{w + 2 * pad}")

    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else xd
    patches = _patches(xp, kh, kw, stride)
    # (N,C,Ho,Wo,kh,kw) x (Co,C,kh,kw) -> (N,Ho,Wo,Co)
    out_d = np.tensordot(patches, kd, axes=([1, 4, 5], [1, 2, 3]))
    out_d = np.ascontiguousarray(out_d.transpose(0, 3, 1, 2))
    ho, wo = out_d.shape[2], out_d.shape[3]

    out = Tensor(out_d[0] if single else out_d, (x, kernels))

    def bwd(g):
        gb = g[None] if single else g
        dk = np.tensordot(gb, patches, axes=([0, 2, 3], [0, 2, 3]))
        _accum(kernels, dk)
        # (N,Co,Ho,Wo) x (Co,C,kh,kw) -> (N,Ho,Wo,C,kh,kw)
        dpatch = np.tensordot(gb, kd, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            hi = i + stride * (ho - 1) + 1
            for j in range(kw):
                wi = j + stride * (wo - 1) + 1
                dxp[:, :, i:hi:stride, j:wi:stride] += dpatch[:, :, :, :, i, j]
        dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
        _accum(x, dx[0] if single else dx)

    out._backward = bwd
    return out


def lrn(x, k: float = 2.0, n: int = 5, alpha: float = 1e-4, beta: float = 0.75) -> Tensor:
    """Local response normalization across channels: b_c = a_c / (k + a*sum_w a_c'^2)^beta."""
    x = _wrap(x)
    if n % 2 == 0:
        raise ConfigurationError(f"lrn window size must be odd, got {n}")
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    half = n // 2

    def window_sum(arr):
        c = arr.shape[1]
        out_arr = arr.copy()
        for off in range(1, half + 1):
            out_arr[:, off:] += arr[:, : c - off]
            out_arr[:, : c - off] += arr[:, off:]
        return out_arr

    denom = k + alpha * window_sum(xd * xd)
    powed = denom ** (-beta)
    out_d = xd * powed
    out = Tensor(out_d[0] if single else out_d, (x,))

    def bwd(g):
        gb = g[None] if single else g
        t = gb * xd * denom ** (-beta - 1.0)
        dx = gb * powed - 2.0 * alpha * beta * xd * window_sum(t)
        _accum(x, dx[0] if single else dx)

    out._backward = bwd
    return out


def max_pool(x, window: int = 3, stride: int = 2) -> Tensor:
    """Max pooling; gradient routes to the (first) argmax of each window."""
    x = _wrap(x)
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    n, c, h, w = xd.shape
    if window > h or window > w:
        raise ShapeError(f"max_pool window {window} exceeds spatial dims {h}x{w}")
    patches = _patches(xd, window, window, stride).reshape(n, c, -1, window * window)
    flat_arg = patches.argmax(axis=-1)
    out_d = np.take_along_axis(patches, flat_arg[..., None], axis=-1)[..., 0]
    ho = conv_out_len(h, 0, window, stride)
    wo = conv_out_len(w, 0, window, stride)
    out_d = out_d.reshape(n, c, ho, wo)
    out = Tensor(out_d[0] if single else out_d, (x,))

    # Window-local argmax -> absolute (row, col) per output cell, for scatter-add.
    po = np.arange(ho * wo)
    rows = (po // wo)[None, None, :] * stride + flat_arg // window
    cols = (po % wo)[None, None, :] * stride + flat_arg % window

    def bwd(g):
        gb = (g[None] if single else g).reshape(n, c, -1)
        dx = np.zeros_like(xd)
        ni = np.arange(n)[:, None, None]
        ci = np.arange(c)[None, :, None]
        np.add.at(dx, (ni, ci, rows, cols), gb)
        _accum(x, dx[0] if single else dx)

    out._backward = bwd
    return out


def global_avg_pool(x) -> Tensor:
    """Per-channel spatial mean: (C,H,W)->(C,) or (N,C,H,W)->(N,C)."""
    x = _wrap(x)
    single = x.ndim == 3
    xd = x.data[None] if single else x.data
    n, c, h, w = xd.shape
    out_d = xd.mean(axis=(2, 3))
    out = Tensor(out_d[0] if single else out_d, (x,))

    def bwd(g):
        gb = g[None] if single else g
        dx = np.broadcast_to(gb[:, :, None, None] / (h * w), xd.shape).copy()
        _accum(x, dx[0] if single else dx)

    out._backward = bwd
    return out


def dense(x, weight, bias) -> Tensor:
    """Affine map x @ W^T + b for x of shape (D,) or (B, D), W (O, D), b (O,)."""
    x, weight, bias = _wrap(x), _wrap(weight), _wrap(bias)
    single = x.ndim == 1
    xd = x.data[None] if single else x.data
    o, d = weight.data.shape
    if xd.shape[1] != d:
        raise ShapeError(f"dense input width {xd.shape[1]} does not match weight {weight.data.shape}")
    if bias.data.shape != (o,):
        raise ShapeError(f"dense bias shape {bias.data.shape} does not match weight {weight.data.shape}")
    out_d = xd @ weight.data.T + bias.data
    out = Tensor(out_d[0] if single else out_d, (x, weight, bias))

    def bwd(g):
        gb = g[None] if single else g
        _accum(x, (gb @ weight.data)[0] if single else gb @ weight.data)
        _accum(weight, gb.T @ xd)
        _accum(bias, gb.sum(axis=0))

    out._backward = bwd
    return out


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise DataError(f"label outside [0, {num_classes}): {labels.min()}..{labels.max()}")
    eye = np.eye(num_classes, dtype=np.float64)
    return eye[labels]


def cross_entropy(p, y_onehot) -> Tensor:
    """Mean over the batch of -sum_j y_j log p_j; scalar output.

    `p` is a probability tensor (e.g. softmax output) of shape (C,) or (B, C);
    `y_onehot` is a constant array of the same shape.
    """
    p = _wrap(p)
    y = np.asarray(y_onehot, dtype=np.float64)
    if y.shape != p.data.shape:
        raise ShapeError(f"cross_entropy target shape {y.shape} != probability shape {p.data.shape}")
    pd = p.data[None] if p.ndim == 1 else p.data
    yb = y[None] if y.ndim == 1 else y
    batch = pd.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(yb > 0, yb * np.log(pd), 0.0)
    out = Tensor(-terms.sum() / batch, (p,))

    def bwd(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            dp = np.where(yb > 0, -yb / pd, 0.0) * (float(g) / batch)
        _accum(p, dp[0] if p.ndim == 1 else dp)

    out._backward = bwd
    return out


def dropout(x, rate: float, training: bool, rng) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    `rng` is an integer seed or a numpy Generator; inference is the identity.
    """
    x = _wrap(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        out = Tensor(x.data.copy(), (x,))
        out._backward = lambda g: _accum(x, g)
        return out
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    mask = (gen.random(x.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * mask, (x,))
    out._backward = lambda g: _accum(x, g * mask)
    return out


# ---------------------------------------------------------------------------
# LSTM cell


@dataclass
class LstmCellParams:
    """Gate weights over the concatenation [h_prev, x]; each W is (H, H+D)."""

    W_f: Tensor
    W_i: Tensor
    W_c: Tensor
    W_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor

    def named(self, prefix: str = "lstm") -> dict:
        return {
            f"{prefix}.W_f": self.W_f, f"{prefix}.b_f": self.b_f,
            f"{prefix}.W_i": self.W_i, f"{prefix}.b_i": self.b_i,
            f"{prefix}.W_c": self.W_c, f"{prefix}.b_c": self.b_c,
            f"{prefix}.W_o": self.W_o, f"{prefix}.b_o": self.b_o,
        }


def lstm_cell(x, h_prev, c_prev, params: LstmCellParams):
    """One LSTM step; returns (h_t, c_t). Accepts (D,)/(H,) or batched (B, D)/(B, H)."""
    x, h_prev, c_prev = _wrap(x), _wrap(h_prev), _wrap(c_prev)
    single = x.ndim == 1
    if single:
        x = reshape(x, (1, -1))
        h_prev = reshape(h_prev, (1, -1))
        c_prev = reshape(c_prev, (1, -1))
    z = concat([h_prev, x], axis=1)
    f = sigmoid(dense(z, params.W_f, params.b_f))
    i = sigmoid(dense(z, params.W_i, params.b_i))
    c_tilde = tanh(dense(z, params.W_c, params.b_c))
    c_t = add(mul(f, c_prev), mul(i, c_tilde))
    o = sigmoid(dense(z, params.W_o, params.b_o))
    h_t = mul(o, tanh(c_t))
    if single:
        return reshape(h_t, (-1,)), reshape(c_t, (-1,))
    return h_t, c_t


# ---------------------------------------------------------------------------
# Adam optimizer


@dataclass
class AdamState:
    """Bias-corrected Adam moments for a named parameter set."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, state: AdamState):
    """One Adam update over `params` (name -> Tensor), reading each .grad in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = p.grad
        if g is None:
            raise TrainingError(f"parameter {name!r} has no gradient; run backward first")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** state.t)
        v_hat = v / (1.0 - b2 ** state.t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def zero_grads(params: dict):
    for p in params.values():
        p.zero_grad()

"""A compact reverse-mode differentiation engine over rank-<=2 numpy arrays.

Values default to float32 with float64 accumulation inside reductions; passing
float64 leaves arrays in float64, which the finite-difference tests use.
Every op registers a backward closure; ``backward`` walks the tape in reverse
topological order.
"""
from __future__ import annotations

import math

import numpy as np

_LN2 = math.log(2.0)


def _as_value(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None,
                 requires_grad=False, name=""):
        self.value = _as_value(value)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def add_grad(self, g):
        g = _unbroadcast(np.asarray(g, dtype=self.value.dtype), self.value.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g


def param(value, name="") -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def constant(value) -> Tensor:
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` to undo numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(root: Tensor):
    """Accumulate d(root)/d(node) into .grad for every reachable node."""
    if root.value.ndim != 0:
        raise ValueError("backward requires a scalar root")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    root.add_grad(np.ones_like(root.value))
    for node in reversed(order):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node.grad)


# ---------------------------------------------------------------------------
# elementwise ops

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.value + b.value, (a, b))
    out.backward_fn = lambda g: (a.add_grad(g), b.add_grad(g))
    return out


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.value - b.value, (a, b))
    out.backward_fn = lambda g: (a.add_grad(g), b.add_grad(-g))
    return out


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.value * b.value, (a, b))
    out.backward_fn = lambda g: (a.add_grad(g * b.value), b.add_grad(g * a.value))
    return out


def scale(a, s: float) -> Tensor:
    a = _lift(a)
    out = Tensor(a.value * s, (a,))
    out.backward_fn = lambda g: a.add_grad(g * s)
    return out


def neg(a) -> Tensor:
    return scale(a, -1.0)


def square(a) -> Tensor:
    a = _lift(a)
    out = Tensor(a.value * a.value, (a,))
    out.backward_fn = lambda g: a.add_grad(g * 2.0 * a.value)
    return out


def sqrt(a, eps: float = 0.0) -> Tensor:
    a = _lift(a)
    val = np.sqrt(a.value + eps)
    out = Tensor(val, (a,))
    out.backward_fn = lambda g: a.add_grad(g * 0.5 / np.maximum(val, 1e-30))
    return out


def exp(a) -> Tensor:
    a = _lift(a)
    val = np.exp(a.value)
    out = Tensor(val, (a,))
    out.backward_fn = lambda g: a.add_grad(g * val)
    return out


def log(a) -> Tensor:
    a = _lift(a)
    out = Tensor(np.log(a.value), (a,))
    out.backward_fn = lambda g: a.add_grad(g / a.value)
    return out


def relu(a) -> Tensor:
    a = _lift(a)
    mask = a.value > 0
    out = Tensor(np.where(mask, a.value, 0.0), (a,))
    out.backward_fn = lambda g: a.add_grad(g * mask)
    return out


def sigmoid(a) -> Tensor:
    a = _lift(a)
    val = 1.0 / (1.0 + np.exp(-a.value))
    out = Tensor(val, (a,))
    out.backward_fn = lambda g: a.add_grad(g * val * (1.0 - val))
    return out


def log_sigmoid(a) -> Tensor:
    """log sigma(x) = -softplus(-x), computed without overflow."""
    a = _lift(a)
    x = a.value
    val = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))),
                   x - np.log1p(np.exp(-np.abs(x))))
    sig = 1.0 / (1.0 + np.exp(-x))
    out = Tensor(val, (a,))
    out.backward_fn = lambda g: a.add_grad(g * (1.0 - sig))
    return out


def clamp(a, lo: float, hi: float) -> Tensor:
    """Gradient passes only inside [lo, hi]."""
    a = _lift(a)
    mask = (a.value >= lo) & (a.value <= hi)
    out = Tensor(np.clip(a.value, lo, hi), (a,))
    out.backward_fn = lambda g: a.add_grad(g * mask)
    return out


# ---------------------------------------------------------------------------
# linear algebra and shaping

def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.value @ b.value, (a, b))

    def bw(g):
        a.add_grad(g @ b.value.T)
        b.add_grad(a.value.T @ g)
    out.backward_fn = bw
    return out


def affine(x, w, b) -> Tensor:
    """x @ w + b with b broadcast over rows."""
    x, w, b = _lift(x), _lift(w), _lift(b)
    out = Tensor(x.value @ w.value + b.value, (x, w, b))

    def bw(g):
        x.add_grad(g @ w.value.T)
        w.add_grad(x.value.T @ g)
        b.add_grad(g.sum(axis=0, dtype=np.float64).astype(g.dtype))
    out.backward_fn = bw
    return out


def concat_cols(tensors) -> Tensor:
    """Concatenate (batch, w_i) tensors along axis 1."""
    tensors = [_lift(t) for t in tensors]
    vals = [t.value if t.value.ndim == 2 else t.value[:, None] for t in tensors]
    widths = [v.shape[1] for v in vals]
    out = Tensor(np.concatenate(vals, axis=1), tuple(tensors))

    def bw(g):
        off = 0
        for t, w in zip(tensors, widths):
            piece = g[:, off:off + w]
            if t.value.ndim == 1:
                piece = piece[:, 0]
            t.add_grad(piece)
            off += w
    out.backward_fn = bw
    return out


def select_col(a, j: int) -> Tensor:
    a = _lift(a)
    out = Tensor(a.value[:, j], (a,))

    def bw(g):
        full = np.zeros_like(a.value)
        full[:, j] = g
        a.add_grad(full)
    out.backward_fn = bw
    return out


# ---------------------------------------------------------------------------
# reductions and normalizations (float64 accumulation)

def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    val = a.value.sum(axis=axis, keepdims=keepdims, dtype=np.float64)
    out = Tensor(val.astype(a.value.dtype), (a,))

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.add_grad(np.broadcast_to(g, a.value.shape))
    out.backward_fn = bw
    return out


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    count = a.value.size if axis is None else a.value.shape[axis]
    return scale(reduce_sum(a, axis, keepdims), 1.0 / count)


def log_sum_exp(a, axis=1) -> Tensor:
    """Stable logsumexp along ``axis`` (max + log sum exp(x - max))."""
    a = _lift(a)
    mx = a.value.max(axis=axis, keepdims=True)
    shifted = np.exp(a.value - mx)
    total = shifted.sum(axis=axis, keepdims=True, dtype=np.float64).astype(a.value.dtype)
    val = (mx + np.log(total)).squeeze(axis)
    softmax = shifted / total
    out = Tensor(val, (a,))

    def bw(g):
        a.add_grad(np.expand_dims(np.asarray(g), axis) * softmax)
    out.backward_fn = bw
    return out


def softmax_t(a, tau: float, axis=1) -> Tensor:
    """softmax(x / tau); equal logits give uniform weights for any tau."""
    a = _lift(a)
    z = a.value / tau
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    val = e / e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(a.value.dtype)
    out = Tensor(val, (a,))

    def bw(g):
        g = np.asarray(g)
        dot = (g * val).sum(axis=axis, keepdims=True)
        a.add_grad(val * (g - dot) / tau)
    out.backward_fn = bw
    return out


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Row-wise normalization over the last axis, then scale and shift."""
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    mu = x.value.mean(axis=-1, keepdims=True, dtype=np.float64).astype(x.value.dtype)
    xc = x.value - mu
    var = (xc * xc).mean(axis=-1, keepdims=True, dtype=np.float64).astype(x.value.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.value + beta.value, (x, gamma, beta))

    def bw(g):
        g = np.asarray(g)
        gamma.add_grad((g * xhat).sum(axis=0, dtype=np.float64).astype(g.dtype))
        beta.add_grad(g.sum(axis=0, dtype=np.float64).astype(g.dtype))
        gx = g * gamma.value
        term = gx - gx.mean(axis=-1, keepdims=True) \
            - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
        x.add_grad(term * inv)
    out.backward_fn = bw
    return out


# ---------------------------------------------------------------------------
# optimizer, clipping, EMA

class Adam:
    """Adam with decoupled weight decay; state keyed by parameter identity."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * (g * g)
            update = (self.m[i] / b1c) / (np.sqrt(self.v[i] / b2c) + self.eps)
            if self.weight_decay:
                p.value = p.value * (1.0 - self.lr * self.weight_decay)
            p.value = p.value - self.lr * update

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def clip_global_norm(params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


class Ema:
    """Exponential moving average of parameter values with swap-in/out."""

    def __init__(self, params, decay: float):
        self.params = list(params)
        self.decay = decay
        self.shadow = [p.value.copy() for p in self.params]
        self._stash = None

    def update(self):
        d = self.decay
        for i, p in enumerate(self.params):
            self.shadow[i] = d * self.shadow[i] + (1.0 - d) * p.value

    def swap_in(self):
        self._stash = [p.value for p in self.params]
        for p, s in zip(self.params, self.shadow):
            p.value = s

    def swap_out(self):
        for p, s in zip(self.params, self._stash):
            p.value = s
        self._stash = None

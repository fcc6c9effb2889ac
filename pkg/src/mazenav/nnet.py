"""Dense-tensor kernels with exact reverse-mode gradients.

A tiny tape-based autodiff layer over numpy float64 arrays: enough to
express an embedding, LSTM cells, valid convolution, channel attention,
softmax and cross-entropy, with Adam and global-norm clipping for the
update step. Kernels are pure functions of their inputs; the tape is
rebuilt on every forward pass, so backpropagation through time falls out
of replaying the recurrence.
"""

from __future__ import annotations

import random
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording (inference / finite-difference evaluations)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Array node; `parents` and `backward_fn` record the computation."""

    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, parents: tuple = (), backward_fn=None,
                 requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Param(Tensor):
    """Named trainable tensor with Adam moment buffers and step counter."""

    __slots__ = ("name", "m", "v", "t")

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.t = 0


def _node(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    if not _GRAD_ENABLED or not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, parents, backward_fn)


def constant(data) -> Tensor:
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad, b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(out: Tensor) -> None:
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad * a.data, b.data.shape))

    return _node(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim == 0 or b.data.ndim == 0:
        raise ValueError("matmul requires arrays of rank >= 1")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}"
        )
    out_data = a.data @ b.data

    def backward(out: Tensor) -> None:
        g = out.grad
        if a.requires_grad:
            if b.data.ndim == 1:
                a.accumulate(np.outer(g, b.data) if a.data.ndim == 2 else g * b.data)
            else:
                a.accumulate(np.atleast_1d(g) @ b.data.T)
        if b.requires_grad:
            if a.data.ndim == 1:
                b.accumulate(np.outer(a.data, g) if b.data.ndim == 2 else g * a.data)
            else:
                b.accumulate(a.data.T @ np.atleast_1d(g))

    return _node(out_data, (a, b), backward)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def backward(out: Tensor) -> None:
        offset = 0
        for p, size in zip(parts, sizes):
            if p.requires_grad:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(offset, offset + size)
                p.accumulate(out.grad[tuple(idx)])
            offset += size

    return _node(out_data, tuple(parts), backward)


def narrow(t: Tensor, start: int, length: int, axis: int = 0) -> Tensor:
    idx = [slice(None)] * t.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out_data = t.data[idx]

    def backward(out: Tensor) -> None:
        if t.requires_grad:
            g = np.zeros_like(t.data)
            g[idx] = out.grad
            t.accumulate(g)

    return _node(out_data, (t,), backward)


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    out_data = t.data.reshape(shape)

    def backward(out: Tensor) -> None:
        if t.requires_grad:
            t.accumulate(out.grad.reshape(t.data.shape))

    return _node(out_data, (t,), backward)


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0
    out_data = np.where(mask, t.data, 0.0)

    def backward(out: Tensor) -> None:
        if t.requires_grad:
            t.accumulate(out.grad * mask)

    return _node(out_data, (t,), backward)


def sigmoid(t: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-t.data))

    def backward(out: Tensor) -> None:
        if t.requires_grad:
            t.accumulate(out.grad * out_data * (1.0 - out_data))

    return _node(out_data, (t,), backward)


def tanh(t: Tensor) -> Tensor:
    out_data = np.tanh(t.data)

    def backward(out: Tensor) -> None:
        if t.requires_grad:
            t.accumulate(out.grad * (1.0 - out_data * out_data))

    return _node(out_data, (t,), backward)


def softmax(t: Tensor) -> Tensor:
    """Softmax over the last axis; strictly positive, sums to 1."""
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def backward(out: Tensor) -> None:
        if t.requires_grad:
            dot = (out.grad * out_data).sum(axis=-1, keepdims=True)
            t.accumulate(out_data * (out.grad - dot))

    return _node(out_data, (t,), backward)


CE_EPSILON = 1e-12


def cross_entropy(dist: Tensor, target_index: int) -> Tensor:
    """Negative log-probability of `target_index` under distribution `dist`.

    The probability is floored at 1e-12 before the log; this is the only
    place a log-of-zero guard exists.
    """
    if dist.data.ndim != 1:
        raise ValueError(f"cross_entropy expects a 1-D distribution, got {dist.shape}")
    p = max(float(dist.data[target_index]), CE_EPSILON)
    out_data = np.asarray(-np.log(p))

    def backward(out: Tensor) -> None:
        if dist.requires_grad:
            g = np.zeros_like(dist.data)
            g[target_index] = -float(out.grad) / p
            dist.accumulate(g)

    return _node(out_data, (dist,), backward)


def linear(W: Tensor, x: Tensor, b: Optional[Tensor] = None) -> Tensor:
    y = matmul(W, x)
    return add(y, b) if b is not None else y


def embed(We: Tensor, indices: Sequence[int]) -> Tensor:
    """Row lookup: (vocab, E) gathered at `indices` -> (len(indices), E)."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("embed expects a nonempty 1-D index list")
    out_data = We.data[idx]

    def backward(out: Tensor) -> None:
        if We.requires_grad:
            g = np.zeros_like(We.data)
            np.add.at(g, idx, out.grad)
            We.accumulate(g)

    return _node(out_data, (We,), backward)


def lstm_cell(W: Tensor, b: Tensor, x: Tensor,
              state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
    """Standard 4-gate LSTM cell (input, forget, candidate, output).

    W has shape (4H, D+H) applied to [x; h_prev]; gate rows are ordered
    i, f, g, o. Sigmoid gates, tanh candidate and output squashing, no
    peepholes.
    """
    h_prev, c_prev = state
    hidden = h_prev.data.shape[0]
    if W.data.shape != (4 * hidden, x.data.shape[0] + hidden):
        raise ValueError(
            f"lstm_cell weight shape {W.data.shape} does not match "
            f"input {x.data.shape[0]} + hidden {hidden}"
        )
    z = concat([x, h_prev])
    gates = linear(W, z, b)
    i = sigmoid(narrow(gates, 0, hidden))
    f = sigmoid(narrow(gates, hidden, hidden))
    g = tanh(narrow(gates, 2 * hidden, hidden))
    o = sigmoid(narrow(gates, 3 * hidden, hidden))
    c_new = add(mul(f, c_prev), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def conv2d_valid(filters: Tensor, x: Tensor) -> Tensor:
    """Valid (no padding) cross-correlation.

    x: (rows, cols, inChannels); filters: (kh, kw, inChannels, outChannels);
    output: (rows-kh+1, cols-kw+1, outChannels).
    """
    kh, kw, cin, cout = filters.data.shape
    rows, cols, xc = x.data.shape
    if xc != cin:
        raise ValueError(f"conv2d_valid channel mismatch: input {xc}, filters {cin}")
    if kh > rows or kw > cols:
        raise ValueError(f"kernel ({kh},{kw}) larger than input ({rows},{cols})")
    oh, ow = rows - kh + 1, cols - kw + 1
    windows = np.lib.stride_tricks.sliding_window_view(x.data, (kh, kw), axis=(0, 1))
    # windows: (oh, ow, cin, kh, kw) -> (oh*ow, cin*kh*kw)
    win_mat = windows.reshape(oh * ow, cin * kh * kw)
    filt_mat = filters.data.transpose(2, 0, 1, 3).reshape(cin * kh * kw, cout)
    out_data = (win_mat @ filt_mat).reshape(oh, ow, cout)

    def backward(out: Tensor) -> None:
        g = out.grad.reshape(oh * ow, cout)
        if filters.requires_grad:
            gf = (win_mat.T @ g).reshape(cin, kh, kw, cout).transpose(1, 2, 0, 3)
            filters.accumulate(gf)
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            go = out.grad
            for di in range(kh):
                for dj in range(kw):
                    # filters[di, dj]: (cin, cout)
                    gx[di:di + oh, dj:dj + ow, :] += go @ filters.data[di, dj].T
            x.accumulate(gx)

    return _node(out_data, (filters, x), backward)


# ---------------------------------------------------------------------------
# Backward pass and optimization


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; accumulates Param gradients."""
    if loss.data.ndim != 0:
        raise ValueError("backward expects a scalar loss")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node.backward_fn is not None:
            node.backward_fn(node)


def zero_grad(params: Iterable[Param]) -> None:
    for p in params:
        p.grad = None


def global_grad_norm(params: Iterable[Param]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))


def clip_global_norm(params: Sequence[Param], threshold: float = 5.0) -> float:
    """Scale all gradients by threshold/norm when the global L2 norm
    exceeds the threshold; returns the scale applied (1.0 when inactive)."""
    norm = global_grad_norm(params)
    if norm <= threshold or norm == 0.0:
        return 1.0
    scale = threshold / norm
    for p in params:
        if p.grad is not None:
            p.grad *= scale
    return scale


def adam_step(params: Sequence[Param], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update; parameters without gradients are skipped."""
    for p in params:
        if p.grad is None:
            continue
        p.t += 1
        p.m = beta1 * p.m + (1.0 - beta1) * p.grad
        p.v = beta2 * p.v + (1.0 - beta2) * (p.grad * p.grad)
        m_hat = p.m / (1.0 - beta1 ** p.t)
        v_hat = p.v / (1.0 - beta2 ** p.t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Finite-difference verification


def finite_diff_check(model, instance, h: float = 1e-5, tol: float = 1e-4,
                      samples_per_param: Optional[int] = 8,
                      seed: int = 0) -> dict:
    """Compare backprop gradients against central finite differences.

    `model` must expose params() and sequence_loss(instance). For each
    parameter a deterministic sample of entries (all entries when
    samples_per_param is None) is perturbed by ±h and the loss difference
    compared with the recorded gradient. Relative error uses
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-6) so that
    near-zero gradient pairs are compared absolutely.

    Returns {"pass": bool, "maxRelError": float, "perParam": {name: err}}.
    """
    params = list(model.params())
    zero_grad(params)
    loss = model.sequence_loss(instance)
    backward(loss)
    grads = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
             for p in params}

    rng = random.Random(seed)
    per_param: dict[str, float] = {}
    worst = 0.0
    with no_grad():
        for p in params:
            size = p.data.size
            if samples_per_param is None or samples_per_param >= size:
                entries = range(size)
            else:
                entries = rng.sample(range(size), samples_per_param)
            flat = p.data.reshape(-1)
            err = 0.0
            for k in entries:
                orig = flat[k]
                flat[k] = orig + h
                up = float(model.sequence_loss(instance).data)
                flat[k] = orig - h
                down = float(model.sequence_loss(instance).data)
                flat[k] = orig
                numeric = (up - down) / (2.0 * h)
                analytic = float(grads[p.name].reshape(-1)[k])
                denom = max(abs(analytic), abs(numeric), 1e-6)
                err = max(err, abs(analytic - numeric) / denom)
            per_param[p.name] = err
            worst = max(worst, err)
    return {"pass": worst < tol, "maxRelError": worst, "perParam": per_param}

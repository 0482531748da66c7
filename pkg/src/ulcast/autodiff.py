"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

A ``Graph`` records one node per op in insertion order, which is already a
topological order, and ``Graph.backward`` replays the tape in exact reverse
insertion order, once. Parameters are leaf tensors created with
``requires_grad=True``; every other tensor is produced by a Graph op.

A Graph and the tensors it produced belong to one worker at a time. Leaf
parameter sets that have been frozen (read-only data) are safe to share
between concurrent forward passes on separate graphs.

Every op output is checked for NaN/Inf; non-finite values raise
``NumericError`` instead of propagating silently.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Graph",
    "AdamState",
    "adam_step",
    "gradient_check",
    "ShapeError",
    "GraphError",
    "NumericError",
    "ACTIVATIONS",
]

# sqrt(2/pi) = 0.7978845608..., the tanh-approximation GELU constant
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715

ACTIVATIONS = ("sigmoid", "tanh", "relu", "gelu")


class ShapeError(ValueError):
    """Operand dimensions violate an op contract."""


class GraphError(RuntimeError):
    """Tape misuse: non-scalar loss, foreign loss tensor, repeated backward."""


class NumericError(ArithmeticError):
    """NaN or Inf appeared in tensor data."""


class Tensor:
    """N-dimensional float64 array, optionally carrying a same-shape gradient.

    ``grad`` is a zero-initialized array for ``requires_grad`` tensors and
    ``None`` otherwise; ``Graph.backward`` accumulates into it.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)  # copy so ops never alias caller memory
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"tensor{' ' + name if name else ''} contains NaN/Inf")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # internal: adopt an array we own, skipping the defensive copy
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

    @classmethod
    def zeros(cls, shape, requires_grad: bool = False, name: str | None = None) -> "Tensor":
        t = cls.__new__(cls)
        t.data = np.zeros(shape, dtype=np.float64)
        t.requires_grad = requires_grad
        t.grad = np.zeros(shape, dtype=np.float64) if requires_grad else None
        t.name = name
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape},{tag} requires_grad={self.requires_grad})"


@dataclass
class _Node:
    op: str
    inputs: tuple[Tensor, ...]
    out: Tensor
    grad_fn: Callable[[np.ndarray], tuple]


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax_last(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Graph:
    """Append-only op tape over :class:`Tensor` values.

    Nodes are topologically ordered by construction. ``backward`` walks them
    in exact reverse insertion order and may run once per tape; a second call
    raises ``GraphError`` (rebuild the forward pass instead).
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()
        self._backward_done = False

    # -- plumbing ---------------------------------------------------------

    def _record(self, op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
                grad_fn: Callable[[np.ndarray], tuple]) -> Tensor:
        if not np.all(np.isfinite(out_data)):
            raise NumericError(f"{op}: produced non-finite values")
        out = Tensor._wrap(out_data)
        self.nodes.append(_Node(op, inputs, out, grad_fn))
        self._produced.add(id(out))
        return out

    def _needs_grad(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._produced

    # -- elementwise / structural ops --------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        try:
            out = a.data + b.data
        except ValueError:
            raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

        def grad_fn(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return self._record("add", (a, b), out, grad_fn)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        try:
            out = a.data * b.data
        except ValueError:
            raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None
        a_data, b_data = a.data, b.data

        def grad_fn(g):
            return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

        return self._record("mul", (a, b), out, grad_fn)

    def reshape(self, x: Tensor, shape: Sequence[int]) -> Tensor:
        shape = tuple(shape)
        try:
            out = x.data.reshape(shape).copy()
        except ValueError:
            raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
        in_shape = x.shape

        def grad_fn(g):
            return (g.reshape(in_shape),)

        return self._record("reshape", (x,), out, grad_fn)

    def transpose(self, x: Tensor, axes: Sequence[int]) -> Tensor:
        axes = tuple(axes)
        if sorted(axes) != list(range(x.data.ndim)):
            raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
        inv = tuple(np.argsort(axes))
        out = np.transpose(x.data, axes).copy()

        def grad_fn(g):
            return (np.transpose(g, inv),)

        return self._record("transpose", (x,), out, grad_fn)

    def slice_axis(self, x: Tensor, axis: int, start: int, stop: int) -> Tensor:
        n = x.data.shape[axis]
        if not (0 <= start < stop <= n):
            raise ShapeError(f"slice_axis: [{start}:{stop}] out of range for axis {axis} of {x.shape}")
        idx = [slice(None)] * x.data.ndim
        idx[axis] = slice(start, stop)
        idx = tuple(idx)
        out = x.data[idx].copy()
        in_shape = x.shape

        def grad_fn(g):
            full = np.zeros(in_shape)
            full[idx] = g
            return (full,)

        return self._record("slice_axis", (x,), out, grad_fn)

    def mean_axis(self, x: Tensor, axis: int) -> Tensor:
        n = x.data.shape[axis]
        out = x.data.mean(axis=axis)

        def grad_fn(g):
            return (np.repeat(np.expand_dims(g / n, axis), n, axis=axis),)

        return self._record("mean_axis", (x,), out, grad_fn)

    def sum_all(self, x: Tensor) -> Tensor:
        out = np.asarray(x.data.sum())
        in_shape = x.shape

        def grad_fn(g):
            return (np.full(in_shape, float(g)),)

        return self._record("sum_all", (x,), out, grad_fn)

    # -- linear algebra -----------------------------------------------------

    def matmul(self, x: Tensor, w: Tensor) -> Tensor:
        if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"matmul: x {x.shape} incompatible with w {w.shape}")
        out = x.data @ w.data
        x_data, w_data = x.data, w.data

        def grad_fn(g):
            return g @ w_data.T, x_data.T @ g

        return self._record("matmul", (x, w), out, grad_fn)

    def matmul_bias(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """out[r, c] = sum_k x[r, k] * w[k, c] + b[c]"""
        if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"matmul_bias: x {x.shape} incompatible with w {w.shape}")
        if b.data.shape != (w.shape[1],):
            raise ShapeError(f"matmul_bias: bias {b.shape} must be ({w.shape[1]},)")
        out = x.data @ w.data + b.data
        x_data, w_data = x.data, w.data

        def grad_fn(g):
            return g @ w_data.T, x_data.T @ g, g.sum(axis=0)

        return self._record("matmul_bias", (x, w, b), out, grad_fn)

    def conv1d(self, x: Tensor, k: Tensor, padding: int = 0) -> Tensor:
        """Cross-correlate x [B, C_in, L] with k [C_out, C_in, K], zero padded.

        K must be odd; output length L' = L + 2*padding - K + 1 must be >= 1.
        """
        if x.data.ndim != 3 or k.data.ndim != 3:
            raise ShapeError(f"conv1d: need 3-d operands, got x {x.shape}, k {k.shape}")
        bsz, c_in, length = x.shape
        c_out, kc_in, ksz = k.shape
        if kc_in != c_in:
            raise ShapeError(f"conv1d: channel mismatch, x {x.shape} vs k {k.shape}")
        if ksz % 2 != 1:
            raise ShapeError(f"conv1d: kernel width must be odd, got {ksz}")
        if padding < 0:
            raise ShapeError(f"conv1d: padding must be >= 0, got {padding}")
        out_len = length + 2 * padding - ksz + 1
        if out_len < 1:
            raise ShapeError(
                f"conv1d: output length {out_len} < 1 for input {x.shape}, "
                f"kernel {k.shape}, padding {padding}")

        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
        windows = np.lib.stride_tricks.sliding_window_view(xp, ksz, axis=2)
        out = np.einsum("bclk,ock->bol", windows, k.data)
        k_data = k.data

        def grad_fn(g):
            dk = np.einsum("bol,bclk->ock", g, windows)
            gp = np.pad(g, ((0, 0), (0, 0), (ksz - 1, ksz - 1)))
            gwin = np.lib.stride_tricks.sliding_window_view(gp, ksz, axis=2)
            dxp = np.einsum("bolk,ock->bcl", gwin, k_data[:, :, ::-1])
            dx = dxp[:, :, padding:padding + length]
            return dx, dk

        return self._record("conv1d", (x, k), out, grad_fn)

    # -- activations ---------------------------------------------------------

    def activation(self, x: Tensor, kind: str) -> Tensor:
        if kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}, expected one of {ACTIVATIONS}")
        return getattr(self, kind)(x)

    def sigmoid(self, x: Tensor) -> Tensor:
        out = _sigmoid(x.data)

        def grad_fn(g):
            return (g * out * (1.0 - out),)

        return self._record("sigmoid", (x,), out, grad_fn)

    def tanh(self, x: Tensor) -> Tensor:
        out = np.tanh(x.data)

        def grad_fn(g):
            return (g * (1.0 - out * out),)

        return self._record("tanh", (x,), out, grad_fn)

    def relu(self, x: Tensor) -> Tensor:
        out = np.maximum(x.data, 0.0)
        x_data = x.data

        def grad_fn(g):
            return (g * (x_data > 0.0),)

        return self._record("relu", (x,), out, grad_fn)

    def gelu(self, x: Tensor) -> Tensor:
        """Tanh-approximation GELU: 0.5 x (1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))."""
        x_data = x.data
        inner = _GELU_C * (x_data + _GELU_CUBIC * x_data ** 3)
        t = np.tanh(inner)
        out = 0.5 * x_data * (1.0 + t)

        def grad_fn(g):
            dinner = _GELU_C * (1.0 + 3.0 * _GELU_CUBIC * x_data ** 2)
            return (g * (0.5 * (1.0 + t) + 0.5 * x_data * (1.0 - t * t) * dinner),)

        return self._record("gelu", (x,), out, grad_fn)

    # -- attention / normalization -------------------------------------------

    def softmax_attention(self, q: Tensor, k: Tensor, v: Tensor) -> Tensor:
        """Scaled dot-product attention, softmax(q k^T / sqrt(D)) v, per head.

        All three operands share shape [B, H, T, D].
        """
        if not (q.shape == k.shape == v.shape):
            raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} must match")
        if q.data.ndim != 4:
            raise ShapeError(f"attention: need [B, H, T, D] operands, got {q.shape}")
        d = q.shape[-1]
        scale = 1.0 / math.sqrt(d)
        scores = np.einsum("bhtd,bhsd->bhts", q.data, k.data) * scale
        attn = _softmax_last(scores)
        out = np.einsum("bhts,bhsd->bhtd", attn, v.data)
        q_data, k_data, v_data = q.data, k.data, v.data

        def grad_fn(g):
            dv = np.einsum("bhts,bhtd->bhsd", attn, g)
            da = np.einsum("bhtd,bhsd->bhts", g, v_data)
            ds = attn * (da - (da * attn).sum(axis=-1, keepdims=True))
            dq = np.einsum("bhts,bhsd->bhtd", ds, k_data) * scale
            dk = np.einsum("bhts,bhtd->bhsd", ds, q_data) * scale
            return dq, dk, dv

        return self._record("softmax_attention", (q, k, v), out, grad_fn)

    def layer_norm(self, x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
        """Normalize over the last axis, then scale by gamma and shift by beta."""
        d = x.shape[-1]
        if gamma.data.shape != (d,) or beta.data.shape != (d,):
            raise ShapeError(
                f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must be ({d},)")
        mu = x.data.mean(axis=-1, keepdims=True)
        var = x.data.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
        out = xhat * gamma.data + beta.data
        g_data = gamma.data
        reduce_axes = tuple(range(x.data.ndim - 1))

        def grad_fn(g):
            dgamma = (g * xhat).sum(axis=reduce_axes)
            dbeta = g.sum(axis=reduce_axes)
            dxhat = g * g_data
            dx = inv * (dxhat
                        - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
            return dx, dgamma, dbeta

        return self._record("layer_norm", (x, gamma, beta), out, grad_fn)

    # -- loss ------------------------------------------------------------------

    def mse_loss(self, pred: Tensor, target: Tensor) -> Tensor:
        """Mean squared error over two equal-length vectors; scalar output."""
        if pred.data.ndim != 1 or target.data.ndim != 1:
            raise ShapeError(f"mse_loss: need 1-d operands, got {pred.shape} and {target.shape}")
        if pred.shape != target.shape:
            raise ShapeError(f"mse_loss: length mismatch {pred.shape} vs {target.shape}")
        diff = pred.data - target.data
        n = pred.data.shape[0]
        out = np.asarray((diff * diff).mean())

        def grad_fn(g):
            d = float(g) * 2.0 * diff / n
            return d, -d

        return self._record("mse_loss", (pred, target), out, grad_fn)

    # -- backward ----------------------------------------------------------------

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable requires_grad tensor.

        Unreachable leaves keep their (zero-initialized) grads. Runs once per
        tape; call again only after rebuilding the forward pass.
        """
        if self._backward_done:
            raise GraphError("backward already ran on this graph; rebuild the forward pass")
        if id(loss) not in self._produced:
            raise GraphError("loss tensor was not produced by this graph")
        if loss.data.size != 1:
            raise GraphError(f"loss must be scalar, got shape {loss.shape}")
        self._backward_done = True

        flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g_out = flowing.pop(id(node.out), None)
            if g_out is None:
                continue
            grads = node.grad_fn(g_out)
            for t, g in zip(node.inputs, grads):
                if g is None or not self._needs_grad(t):
                    continue
                if t.requires_grad:
                    t.grad += g.reshape(t.data.shape)
                else:
                    acc = flowing.get(id(t))
                    flowing[id(t)] = g if acc is None else acc + g


@dataclass
class AdamState:
    """Adam optimizer state: first/second moment accumulators per parameter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ValueError(f"betas must lie in (0, 1), got {beta1}, {beta2}")
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        if lr <= 0.0:
            raise ValueError(f"lr must be > 0, got {lr}")
        return cls(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
                   m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update, in place, from each param's .grad."""
    if len(params) != len(state.m):
        raise GraphError(f"adam_step: {len(params)} params vs state for {len(state.m)}")
    for i, p in enumerate(params):
        if p.grad is None:
            raise GraphError(f"adam_step: param {p.name or i} has no grad")
        if state.m[i].shape != p.data.shape:
            raise GraphError(f"adam_step: moment shape {state.m[i].shape} vs param {p.data.shape}")
    t = state.step_count + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, p in enumerate(params):
        g = p.grad
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    state.step_count = t


def gradient_check(build: Callable[[Graph], Tensor], params: Sequence[Tensor],
                   epsilon: float = 1e-5) -> float:
    """Max relative error between tape gradients and central finite differences.

    ``build(graph)`` must rebuild the same deterministic forward pass from the
    params' current data and return the scalar loss tensor. The relative error
    denominator is max(|analytic|, |numeric|, 1e-8) per component.
    """
    if not (1e-6 <= epsilon <= 1e-3):
        raise ValueError(f"epsilon must lie in [1e-6, 1e-3], got {epsilon}")
    for p in params:
        p.zero_grad()
    g = Graph()
    loss = build(g)
    g.backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = build(Graph()).item()
            flat[i] = orig - epsilon
            down = build(Graph()).item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            rel = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-8)
            if rel > worst:
                worst = rel
    return worst

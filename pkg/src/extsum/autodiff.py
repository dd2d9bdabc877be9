"""Minimal dense-tensor reverse-mode differentiation engine.

Arrays are float64 numpy throughout. A Tape records every primitive
application whose inputs require gradients; backward() replays the tape in
reverse, accumulating gradients onto the requires_grad leaves. Leading axes
of all primitives broadcast, so the same code path serves single documents
and padded batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class AutodiffError(ValueError):
    pass


class NonFiniteGradient(FloatingPointError):
    """Raised by adam_step when a gradient contains NaN/inf."""


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """Dense float64 array, optionally participating in a tape."""

    __slots__ = ("data", "requires_grad", "grad", "tape", "_node_index")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape: "Tape | None" = None
        self._node_index: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    """Wrap a constant; Tensors pass through unchanged."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


@dataclass
class TapeNode:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    # maps d(loss)/d(output) to a gradient per input (None for constants)
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Primitives are methods; each validates shapes, computes the forward
    value with numpy, and records a node carrying the exact vector-Jacobian
    product. Constant-only subexpressions are not recorded.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    # -- recording ---------------------------------------------------------

    def _record(self, op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
                vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
        out = Tensor(out_data)
        if any(t.requires_grad or t.tape is self for t in inputs):
            out.requires_grad = True
            out.tape = self
            out._node_index = len(self.nodes)
            self.nodes.append(TapeNode(op, inputs, out, vjp))
        return out

    @staticmethod
    def _check(cond: bool, op: str, *shapes: tuple[int, ...]) -> None:
        if not cond:
            raise AutodiffError(f"{op}: incompatible shapes {list(shapes)}")

    # -- primitives ---------------------------------------------------------

    def matmul(self, a, b) -> Tensor:
        a, b = as_tensor(a), as_tensor(b)
        self._check(a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2],
                    "matmul", a.shape, b.shape)
        out = np.matmul(a.data, b.data)

        def vjp(g):
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
            return ga, gb

        return self._record("matmul", (a, b), out, vjp)

    def add(self, a, b) -> Tensor:
        a, b = as_tensor(a), as_tensor(b)
        try:
            out = a.data + b.data
        except ValueError:
            raise AutodiffError(f"add: incompatible shapes {[a.shape, b.shape]}")
        return self._record("add", (a, b), out,
                            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    def sub(self, a, b) -> Tensor:
        a, b = as_tensor(a), as_tensor(b)
        try:
            out = a.data - b.data
        except ValueError:
            raise AutodiffError(f"sub: incompatible shapes {[a.shape, b.shape]}")
        return self._record("sub", (a, b), out,
                            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))

    def mul(self, a, b) -> Tensor:
        a, b = as_tensor(a), as_tensor(b)
        try:
            out = a.data * b.data
        except ValueError:
            raise AutodiffError(f"mul: incompatible shapes {[a.shape, b.shape]}")
        return self._record("mul", (a, b), out,
                            lambda g: (_unbroadcast(g * b.data, a.shape),
                                       _unbroadcast(g * a.data, b.shape)))

    def scale(self, a, c: float) -> Tensor:
        a = as_tensor(a)
        c = float(c)
        return self._record("scale", (a,), a.data * c, lambda g: (g * c,))

    def add_scalar(self, a, c: float) -> Tensor:
        a = as_tensor(a)
        return self._record("add_scalar", (a,), a.data + float(c), lambda g: (g,))

    def one_minus(self, a) -> Tensor:
        """1 - a, the GRU interpolation complement."""
        a = as_tensor(a)
        return self._record("one_minus", (a,), 1.0 - a.data, lambda g: (-g,))

    def concat(self, tensors: Sequence, axis: int = -1) -> Tensor:
        ts = [as_tensor(t) for t in tensors]
        out = np.concatenate([t.data for t in ts], axis=axis)
        sizes = [t.data.shape[axis] for t in ts]
        splits = np.cumsum(sizes)[:-1]

        def vjp(g):
            return tuple(np.split(g, splits, axis=axis))

        return self._record("concat", tuple(ts), out, vjp)

    def stack(self, tensors: Sequence, axis: int = 0) -> Tensor:
        ts = [as_tensor(t) for t in tensors]
        out = np.stack([t.data for t in ts], axis=axis)

        def vjp(g):
            moved = np.moveaxis(g, axis, 0)
            return tuple(moved[i] for i in range(len(ts)))

        return self._record("stack", tuple(ts), out, vjp)

    def narrow(self, a, axis: int, start: int, length: int) -> Tensor:
        a = as_tensor(a)
        index = [slice(None)] * a.ndim
        index[axis] = slice(start, start + length)
        index = tuple(index)
        out = a.data[index]

        def vjp(g):
            ga = np.zeros_like(a.data)
            ga[index] = g
            return (ga,)

        return self._record("narrow", (a,), out, vjp)

    def reshape(self, a, shape: tuple[int, ...]) -> Tensor:
        a = as_tensor(a)
        out = a.data.reshape(shape)
        return self._record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))

    def swap_last2(self, a) -> Tensor:
        a = as_tensor(a)
        self._check(a.ndim >= 2, "swap_last2", a.shape)
        out = np.swapaxes(a.data, -1, -2)
        return self._record("swap_last2", (a,), out,
                            lambda g: (np.swapaxes(g, -1, -2),))

    def sum(self, a, axis: int | None = None, keepdims: bool = False) -> Tensor:
        a = as_tensor(a)
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, a.shape).copy(),)

        return self._record("sum", (a,), out, vjp)

    def mean(self, a, axis: int | None = None, keepdims: bool = False) -> Tensor:
        a = as_tensor(a)
        n = a.data.size if axis is None else a.shape[axis]
        out = a.data.mean(axis=axis, keepdims=keepdims)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy() / n,)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, a.shape).copy() / n,)

        return self._record("mean", (a,), out, vjp)

    def sigmoid(self, a) -> Tensor:
        a = as_tensor(a)
        x = a.data
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return self._record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))

    def tanh(self, a) -> Tensor:
        a = as_tensor(a)
        out = np.tanh(a.data)
        return self._record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))

    def relu(self, a) -> Tensor:
        a = as_tensor(a)
        out = np.maximum(a.data, 0.0)
        return self._record("relu", (a,), out, lambda g: (g * (a.data > 0),))

    def log(self, a) -> Tensor:
        a = as_tensor(a)
        if np.any(a.data <= 0.0):
            raise AutodiffError("log: requires strictly positive input")
        out = np.log(a.data)
        return self._record("log", (a,), out, lambda g: (g / a.data,))

    def softmax_last(self, a) -> Tensor:
        a = as_tensor(a)
        if not np.all(np.isfinite(np.max(a.data, axis=-1))):
            raise AutodiffError("softmax_last: input rows must contain finite values")
        shifted = a.data - a.data.max(axis=-1, keepdims=True)
        ex = np.exp(shifted)
        out = ex / ex.sum(axis=-1, keepdims=True)

        def vjp(g):
            dot = (g * out).sum(axis=-1, keepdims=True)
            return (out * (g - dot),)

        return self._record("softmax_last", (a,), out, vjp)

    def max_over_axis(self, a, axis: int) -> Tensor:
        """Max-pool along one axis; ties route the gradient to the first max."""
        a = as_tensor(a)
        out = a.data.max(axis=axis)
        argmax = a.data.argmax(axis=axis)

        def vjp(g):
            ga = np.zeros_like(a.data)
            idx = list(np.indices(out.shape))
            idx.insert(axis % a.ndim, argmax)
            ga[tuple(idx)] = g
            return (ga,)

        return self._record("max_over_axis", (a,), out, vjp)

    def dot(self, a, b) -> Tensor:
        a, b = as_tensor(a), as_tensor(b)
        self._check(a.ndim == 1 and b.ndim == 1 and a.shape == b.shape,
                    "dot", a.shape, b.shape)
        out = np.dot(a.data, b.data)
        return self._record("dot", (a, b), out,
                            lambda g: (g * b.data, g * a.data))

    def gather_rows(self, table, indices) -> Tensor:
        """Row lookup into a (V, d) table; backward scatter-adds."""
        table = as_tensor(table)
        self._check(table.ndim == 2, "gather_rows", table.shape)
        idx = np.asarray(indices, dtype=np.int64)
        out = table.data[idx]

        def vjp(g):
            gt = np.zeros_like(table.data)
            np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.shape[1]))
            return (gt,)

        return self._record("gather_rows", (table,), out, vjp)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf on the tape.

    Repeated calls without zero_grad accumulate additively on the leaves;
    intermediate adjoints are kept internal so each call is pure.
    """
    if loss.data.size != 1:
        raise AutodiffError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss.tape is not tape or loss._node_index is None:
        raise AutodiffError("backward: loss was not produced on this tape")

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes[: loss._node_index + 1]):
        g = adjoint.pop(id(node.output), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.vjp(g)):
            if gi is None:
                continue
            if inp.tape is tape and inp._node_index is not None:
                key = id(inp)
                if key in adjoint:
                    # fresh array: vjp outputs may alias each other or g
                    adjoint[key] = adjoint[key] + gi
                else:
                    adjoint[key] = gi
            elif inp.requires_grad:
                inp.accumulate_grad(gi)


# -- recurrent cell ----------------------------------------------------------


@dataclass
class GruParams:
    """Gate weights for one GRU direction. Input rows are (batch, d_in)."""

    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_h: Tensor
    U_h: Tensor
    b_h: Tensor

    @property
    def hidden_size(self) -> int:
        return self.U_r.shape[0]

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{name}": getattr(self, name)
                for name in ("W_r", "U_r", "b_r", "W_z", "U_z", "b_z", "W_h", "U_h", "b_h")}


def gru_params(d_in: int, hidden: int, rng: np.random.Generator) -> GruParams:
    def w(rows, cols):
        return xavier_init((rows, cols), rng)

    def b():
        return Tensor(np.zeros(hidden), requires_grad=True)

    return GruParams(W_r=w(d_in, hidden), U_r=w(hidden, hidden), b_r=b(),
                     W_z=w(d_in, hidden), U_z=w(hidden, hidden), b_z=b(),
                     W_h=w(d_in, hidden), U_h=w(hidden, hidden), b_h=b())


def gru_cell(tape: Tape, x, h_prev, p: GruParams) -> Tensor:
    """One GRU step: h = (1-z) * h_prev + z * h_tilde.

    r = sigma(x W_r + h U_r + b_r), z = sigma(x W_z + h U_z + b_z),
    h_tilde = tanh(x W_h + (r*h) U_h + b_h).
    """
    t = tape
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    if x.shape[-1] != p.W_r.shape[0] or h_prev.shape[-1] != p.U_r.shape[0]:
        raise AutodiffError(
            f"gru_cell: input {x.shape}/state {h_prev.shape} do not match "
            f"W_r {p.W_r.shape}/U_r {p.U_r.shape}")
    r = t.sigmoid(t.add(t.add(t.matmul(x, p.W_r), t.matmul(h_prev, p.U_r)), p.b_r))
    z = t.sigmoid(t.add(t.add(t.matmul(x, p.W_z), t.matmul(h_prev, p.U_z)), p.b_z))
    h_tilde = t.tanh(t.add(t.add(t.matmul(x, p.W_h),
                                 t.matmul(t.mul(r, h_prev), p.U_h)), p.b_h))
    return t.add(t.mul(t.one_minus(z), h_prev), t.mul(z, h_tilde))


# -- initialization, dropout, optimizer --------------------------------------


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def xavier_init(shape: tuple[int, ...], seed) -> Tensor:
    """Weight init: N(0, 2/(fan_in+fan_out)), deterministic under seed."""
    if len(shape) < 2:
        raise AutodiffError("xavier_init: weight matrices need >= 2 axes; "
                            "use zeros_init for biases")
    rng = _generator(seed)
    std = np.sqrt(2.0 / (shape[0] + shape[-1]))
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def zeros_init(shape: tuple[int, ...] | int) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


TRAIN = "train"
EVAL = "eval"


def dropout_mask(shape: tuple[int, ...], drop_prob: float, seed, mode: str) -> Tensor:
    """Inverted-dropout mask: keep-mask / (1-p) in train mode, ones in eval."""
    if not 0.0 <= drop_prob < 1.0:
        raise AutodiffError(f"dropout_mask: drop_prob {drop_prob} outside [0, 1)")
    if mode == EVAL or drop_prob == 0.0:
        return Tensor(np.ones(shape))
    keep = 1.0 - drop_prob
    rng = _generator(seed)
    mask = (rng.random(shape) < keep).astype(np.float64) / keep
    return Tensor(mask)


def clip_gradients(grads):
    """Element-wise value clip into [-5, 5]. Accepts an array or a dict."""
    if isinstance(grads, dict):
        return {k: np.clip(v, -5.0, 5.0) for k, v in grads.items()}
    return np.clip(grads, -5.0, 5.0)


@dataclass
class AdamState:
    """Bias-corrected Adam moments, keyed like the parameter dict."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, Tensor], AdamState]:
    """One Adam update, in place on params; returns (params, state)."""
    state.step += 1
    t = state.step
    for name, tensor in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter '{name}'")
        if g.shape != tensor.data.shape:
            raise AutodiffError(
                f"adam_step: gradient shape {g.shape} != parameter shape "
                f"{tensor.data.shape} for '{name}'")
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        tensor.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.zero_grad()


def collect_grads(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradient arrays per parameter; missing grads count as zero."""
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()}


# -- checkpoints --------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: dict[str, Tensor], state: AdamState | None = None,
                    run_config: dict | None = None, meta: dict | None = None) -> None:
    """Write a self-describing JSON checkpoint.

    Layout: {"format_version", "params": {name: {"shape", "data"}},
    "adam": {...moments flattened row-major...}, "run_config", "meta"}.
    Floats serialize via repr, so reload is bit-exact and output bytes are
    deterministic for identical contents.
    """
    import json

    doc = {
        "format_version": CHECKPOINT_VERSION,
        "params": {
            name: {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
            for name, p in params.items()
        },
        "run_config": run_config or {},
        "meta": meta or {},
    }
    if state is not None:
        doc["adam"] = {
            "learning_rate": state.learning_rate,
            "beta1": state.beta1,
            "beta2": state.beta2,
            "epsilon": state.epsilon,
            "step": state.step,
            "m": {k: v.reshape(-1).tolist() for k, v in state.m.items()},
            "v": {k: v.reshape(-1).tolist() for k, v in state.v.items()},
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> tuple[dict[str, Tensor], AdamState | None, dict, dict]:
    """Inverse of save_checkpoint: (params, adam_state, run_config, meta)."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise AutodiffError(f"unsupported checkpoint version {doc.get('format_version')}")
    params = {}
    for name, entry in doc["params"].items():
        shape = tuple(entry["shape"])
        params[name] = Tensor(np.array(entry["data"]).reshape(shape), requires_grad=True)
    state = None
    if "adam" in doc:
        a = doc["adam"]
        state = AdamState(learning_rate=a["learning_rate"], beta1=a["beta1"],
                          beta2=a["beta2"], epsilon=a["epsilon"], step=a["step"])
        for key in ("m", "v"):
            for k, flat in a[key].items():
                shape = tuple(doc["params"][k]["shape"])
                getattr(state, key)[k] = np.array(flat).reshape(shape)
    return params, state, doc.get("run_config", {}), doc.get("meta", {})

"""Shared oracles for the test suite.

Everything here is written independently of the package internals: plain
loops, full-matrix DP, scripted recurrences. Tests compare package output
against these, so none of them may import model code beyond data
containers.
"""

from __future__ import annotations

import math

import numpy as np

from extsum.corpus import Document, PosClass, Sentence, Token

# -- finite differences ---------------------------------------------------------

FD_STEP = 1e-5
FD_TOL = 1e-4


def fd_grad(loss_fn, param_data: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of loss_fn() w.r.t. param_data, in place.

    loss_fn must recompute the loss from scratch, reading param_data's
    current values.
    """
    grad = np.zeros_like(param_data)
    flat = param_data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = loss_fn()
        flat[i] = keep - step
        down = loss_fn()
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def grad_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a-n| / max(1, |a|, |n|); absolute for small grads."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / scale)) if a.size else 0.0


def check_grads(make_loss, params: dict, tol: float = FD_TOL,
                step: float = FD_STEP) -> dict[str, float]:
    """Compare tape gradients against finite differences for every param.

    make_loss() must build a fresh tape, run backward, and return the loss
    Tensor (so .grad is populated on the params). Returns max rel err per
    parameter name and asserts every one is within tol.
    """
    for p in params.values():
        p.grad = None
    make_loss()
    analytic = {name: np.array(p.grad) for name, p in params.items()}

    def loss_value():
        for p in params.values():
            p.grad = None
        return float(make_loss().data)

    errs = {}
    for name, p in params.items():
        numeric = fd_grad(loss_value, p.data, step)
        errs[name] = grad_rel_err(analytic[name], numeric)
        assert errs[name] <= tol, (
            f"gradient mismatch for {name}: rel err {errs[name]:.3e} > {tol}")
    return errs


# -- scalar math, written long-hand ----------------------------------------------


def sigmoid_py(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def matvec_py(x, W) -> list[float]:
    """y_j = sum_i x_i W[i, j], explicit loops."""
    d_in = len(x)
    d_out = len(W[0])
    return [sum(x[i] * W[i][j] for i in range(d_in)) for j in range(d_out)]


def add_py(a, b) -> list[float]:
    return [ai + bi for ai, bi in zip(a, b)]


def mul_py(a, b) -> list[float]:
    return [ai * bi for ai, bi in zip(a, b)]


def gru_step_py(x, h_prev, P) -> list[float]:
    """One GRU step from parameter arrays, pure python.

    P maps names W_r, U_r, b_r, W_z, U_z, b_z, W_h, U_h, b_h to nested
    lists / arrays with W: (d_in, d_h), U: (d_h, d_h), b: (d_h,).
    """
    r = [sigmoid_py(v) for v in add_py(add_py(matvec_py(x, P["W_r"]),
                                              matvec_py(h_prev, P["U_r"])),
                                       list(P["b_r"]))]
    z = [sigmoid_py(v) for v in add_py(add_py(matvec_py(x, P["W_z"]),
                                              matvec_py(h_prev, P["U_z"])),
                                       list(P["b_z"]))]
    rh = mul_py(r, h_prev)
    hbar = [math.tanh(v) for v in add_py(add_py(matvec_py(x, P["W_h"]),
                                                matvec_py(rh, P["U_h"])),
                                         list(P["b_h"]))]
    return [(1.0 - zi) * hp + zi * hb for zi, hp, hb in zip(z, h_prev, hbar)]


def gru_params_py(params) -> dict:
    """Read a GruParams dataclass into plain arrays for gru_step_py."""
    return {name: getattr(params, name).data
            for name in ("W_r", "U_r", "b_r", "W_z", "U_z", "b_z",
                         "W_h", "U_h", "b_h")}


# -- LCS oracle: full-matrix DP ---------------------------------------------------


def lcs_len_ref(a, b) -> int:
    m, n = len(a), len(b)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[m][n]


# -- Adam oracle: scripted scalar recurrence --------------------------------------


def scripted_adam(w0: float, grad_fn, steps: int, lr: float = 1e-4,
                  beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> list[float]:
    """Scalar Adam trajectory [w1..w_steps] from the textbook recurrence."""
    w, m, v = w0, 0.0, 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        w = w - lr * mhat / (math.sqrt(vhat) + eps)
        out.append(w)
    return out


# -- tiny corpus builders ---------------------------------------------------------


def toks(text: str, pos: str = "U") -> list[Token]:
    return [Token(surface=w, pos_class=PosClass(pos)) for w in text.split()]


def sent(text: str, pos: str = "U") -> Sentence:
    return Sentence(tokens=tuple(toks(text, pos)))


def doc(doc_id: str, sentences: list[str], references: list[str],
        labels=None) -> Document:
    return Document(id=doc_id,
                    sentences=tuple(sent(s) for s in sentences),
                    references=tuple(tuple(r.split()) for r in references),
                    labels=None if labels is None else tuple(labels))


def fixed_table(tokens: list[str], dim: int, seed: int):
    """Small Fixed-policy embedding table with N(0,1) vectors."""
    from extsum.autodiff import Tensor
    from extsum.embed import EmbeddingPolicy, EmbeddingTable, UnkRule

    rng = np.random.default_rng(seed)
    matrix = np.zeros((len(tokens) + 1, dim))
    matrix[1:] = rng.normal(size=(len(tokens), dim))
    index = {tok: i + 1 for i, tok in enumerate(tokens)}
    return EmbeddingTable(dim=dim, index=index, matrix=Tensor(matrix),
                          policy=EmbeddingPolicy.FIXED,
                          unk_rule=UnkRule.ZERO_VECTOR, min_count=1)


def random_doc(rng: np.random.Generator, vocab: list[str], n_sentences: int,
               max_tokens: int, doc_id: str = "d0", with_refs: bool = True) -> Document:
    sentences = []
    for _ in range(n_sentences):
        t = int(rng.integers(1, max_tokens + 1))
        words = [vocab[int(rng.integers(len(vocab)))] for _ in range(t)]
        sentences.append(" ".join(words))
    refs = []
    if with_refs:
        t = int(rng.integers(2, max_tokens + 3))
        refs = [" ".join(vocab[int(rng.integers(len(vocab)))] for _ in range(t))]
    return doc(doc_id, sentences, refs)

"""Sentence encoders: averaging, bidirectional GRU, CNN over word windows.

The batched core works on padded word tensors of shape (B, n, t, d) with a
token mask; per-sentence padding rows are zero vectors and never influence
the outputs. Thin single-sentence wrappers provide the plain-matrix entry
points. Dropout is applied to the input embeddings in all encoders and to
the RNN/CNN outputs, train mode only.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .autodiff import (EVAL, AutodiffError, GruParams, Tape, Tensor, dropout_mask,
                       gru_cell, gru_params, xavier_init, zeros_init)


class EncoderKind(Enum):
    AVERAGING = "averaging"
    RNN = "rnn"
    CNN = "cnn"


@dataclass(frozen=True)
class EncoderConfig:
    kind: EncoderKind
    rnn_hidden: int = 300
    cnn_windows: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    cnn_maps: tuple[int, ...] = (25, 25, 50, 50, 50, 50)
    dropout: float = 0.25

    def __post_init__(self):
        if self.rnn_hidden < 1:
            raise ValueError("rnn_hidden must be positive")
        if len(self.cnn_windows) != len(self.cnn_maps):
            raise ValueError("cnn_windows and cnn_maps must align")
        if len(set(self.cnn_windows)) != len(self.cnn_windows):
            raise ValueError("cnn_windows must be distinct")
        if any(k < 1 for k in self.cnn_windows) or any(m < 1 for m in self.cnn_maps):
            raise ValueError("window sizes and feature-map counts must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    def maps_by_window(self) -> dict[int, int]:
        return dict(zip(self.cnn_windows, self.cnn_maps))


def encoder_output_dim(cfg: EncoderConfig, d_in: int) -> int:
    if cfg.kind is EncoderKind.AVERAGING:
        return d_in
    if cfg.kind is EncoderKind.RNN:
        return 2 * cfg.rnn_hidden
    return sum(cfg.cnn_maps)


@dataclass
class RnnEncoderParams:
    fwd: GruParams
    bwd: GruParams

    def tensors(self) -> dict[str, Tensor]:
        return {**self.fwd.tensors("enc.rnn.fwd"), **self.bwd.tensors("enc.rnn.bwd")}


@dataclass
class CnnFilter:
    window: int
    weight: Tensor  # (window * d_in, maps)
    bias: Tensor  # (maps,)


@dataclass
class CnnEncoderParams:
    filters: list[CnnFilter]

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for f in self.filters:
            out[f"enc.cnn.k{f.window}.W"] = f.weight
            out[f"enc.cnn.k{f.window}.b"] = f.bias
        return out


EncoderParams = RnnEncoderParams | CnnEncoderParams | None


def make_encoder_params(cfg: EncoderConfig, d_in: int,
                        rng: np.random.Generator) -> EncoderParams:
    if cfg.kind is EncoderKind.AVERAGING:
        return None
    if cfg.kind is EncoderKind.RNN:
        return RnnEncoderParams(fwd=gru_params(d_in, cfg.rnn_hidden, rng),
                                bwd=gru_params(d_in, cfg.rnn_hidden, rng))
    filters = [
        CnnFilter(window=k, weight=xavier_init((k * d_in, m), rng), bias=zeros_init(m))
        for k, m in zip(cfg.cnn_windows, cfg.cnn_maps)
    ]
    return CnnEncoderParams(filters=filters)


def encoder_tensors(params: EncoderParams) -> dict[str, Tensor]:
    return {} if params is None else params.tensors()


def _masked_step(tape: Tape, h_new: Tensor, h_prev: Tensor, mask: np.ndarray) -> Tensor:
    """Keep h_prev wherever mask is 0 so padding never advances the state."""
    m = Tensor(mask)
    return tape.add(tape.mul(m, h_new), tape.mul(Tensor(1.0 - mask), h_prev))


def encode_batch(tape: Tape, words: Tensor, token_mask: np.ndarray,
                 cfg: EncoderConfig, params: EncoderParams,
                 mode: str = EVAL, rng=None) -> Tensor:
    """(B, n, t, d) padded word embeddings -> (B, n, out_dim) sentence embeddings.

    token_mask is (B, n, t, 1) with 1.0 on real tokens. Padded token rows of
    `words` must already be zero. Padded sentences yield deterministic rows
    that the caller masks out.
    """
    if words.ndim != 4:
        raise AutodiffError(f"encode_batch: expected (B, n, t, d), got {words.shape}")
    if mode != EVAL and cfg.dropout > 0.0:
        words = tape.mul(words, dropout_mask(words.shape, cfg.dropout, rng, mode))
    if cfg.kind is EncoderKind.AVERAGING:
        return _encode_avg_batch(tape, words, token_mask)
    if cfg.kind is EncoderKind.RNN:
        out = _encode_rnn_batch(tape, words, token_mask, params)
    else:
        out = _encode_cnn_batch(tape, words, token_mask, cfg, params)
    if mode != EVAL and cfg.dropout > 0.0:
        out = tape.mul(out, dropout_mask(out.shape, cfg.dropout, rng, mode))
    return out


def _encode_avg_batch(tape: Tape, words: Tensor, token_mask: np.ndarray) -> Tensor:
    counts = token_mask.sum(axis=2)  # (B, n, 1)
    inv = Tensor(1.0 / np.maximum(counts, 1.0))
    return tape.mul(tape.sum(words, axis=2), inv)


def _encode_rnn_batch(tape: Tape, words: Tensor, token_mask: np.ndarray,
                      params: RnnEncoderParams) -> Tensor:
    b, n, t, d = words.shape
    hidden = params.fwd.hidden_size
    h_f = Tensor(np.zeros((b, n, hidden)))
    h_b = Tensor(np.zeros((b, n, hidden)))
    for step in range(t):
        x = tape.reshape(tape.narrow(words, 2, step, 1), (b, n, d))
        h_f = _masked_step(tape, gru_cell(tape, x, h_f, params.fwd), h_f,
                           token_mask[:, :, step, :])
    for step in reversed(range(t)):
        x = tape.reshape(tape.narrow(words, 2, step, 1), (b, n, d))
        h_b = _masked_step(tape, gru_cell(tape, x, h_b, params.bwd), h_b,
                           token_mask[:, :, step, :])
    return tape.concat([h_f, h_b], axis=-1)


def _encode_cnn_batch(tape: Tape, words: Tensor, token_mask: np.ndarray,
                      cfg: EncoderConfig, params: CnnEncoderParams) -> Tensor:
    b, n, t, d = words.shape
    lengths = token_mask.sum(axis=2)[..., 0]  # (B, n)
    features = []
    for f in params.filters:
        k = f.window
        t_k = max(t, k)
        x = words
        if t_k > t:
            # sentences shorter than the window: right-pad with zeros
            pad = Tensor(np.zeros((b, n, t_k - t, d)))
            x = tape.concat([x, pad], axis=2)
        n_pos = t_k - k + 1
        windowed = tape.concat(
            [tape.narrow(x, 2, j, n_pos) for j in range(k)], axis=-1)
        act = tape.relu(tape.add(tape.matmul(windowed, f.weight), f.bias))
        # start position j is valid if the window fits inside the true
        # sentence; a sentence shorter than k keeps only position 0
        positions = np.arange(n_pos)
        valid = (positions[None, None, :] + k <= lengths[..., None]) | (
            (lengths[..., None] < k) & (positions[None, None, :] == 0))
        act = tape.mul(act, Tensor(valid[..., None].astype(np.float64)))
        features.append(tape.max_over_axis(act, axis=2))
    return tape.concat(features, axis=-1)


# -- single-sentence entry points ---------------------------------------------


def _check_matrix(word_matrix: np.ndarray) -> np.ndarray:
    m = np.asarray(word_matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1:
        raise ValueError(f"word matrix must be (|s| >= 1, d), got {m.shape}")
    return m


def encode_avg(word_matrix) -> np.ndarray:
    """Mean of the word-embedding rows."""
    return _check_matrix(word_matrix).mean(axis=0)


def _encode_single(word_matrix, cfg: EncoderConfig, params: EncoderParams,
                   mode: str, rng) -> np.ndarray:
    m = _check_matrix(word_matrix)
    tape = Tape()
    words = Tensor(m[None, None, :, :])
    mask = np.ones((1, 1, m.shape[0], 1))
    out = encode_batch(tape, words, mask, cfg, params, mode=mode, rng=rng)
    return out.data[0, 0]


def encode_rnn(word_matrix, params: RnnEncoderParams, cfg: EncoderConfig | None = None,
               mode: str = EVAL, rng=None) -> np.ndarray:
    """[final forward state; final backward state] of two separate GRUs."""
    if cfg is None:
        cfg = EncoderConfig(kind=EncoderKind.RNN, rnn_hidden=params.fwd.hidden_size)
    return _encode_single(word_matrix, cfg, params, mode, rng)


def encode_cnn(word_matrix, params: CnnEncoderParams, cfg: EncoderConfig | None = None,
               mode: str = EVAL, rng=None) -> np.ndarray:
    """Concatenated max-over-time ReLU feature maps, one block per window."""
    if cfg is None:
        windows = tuple(f.window for f in params.filters)
        maps = tuple(f.bias.shape[0] for f in params.filters)
        cfg = EncoderConfig(kind=EncoderKind.CNN, cnn_windows=windows, cnn_maps=maps)
    return _encode_single(word_matrix, cfg, params, mode, rng)

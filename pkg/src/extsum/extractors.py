"""Sentence extractors: per-sentence extraction probabilities from sentence
embeddings.

Four architectures. The first two factor the label sequence conditionally
independently given the sentence embeddings; the last two are
auto-regressive, feeding earlier extraction probabilities into later steps.

The batched core consumes padded (B, n, d_h) embeddings plus a (B, n, 1)
sentence mask; masked positions never advance recurrent state and their
probabilities are meaningless by contract. Single-document wrappers return
plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .autodiff import (EVAL, AutodiffError, GruParams, Tape, Tensor, dropout_mask,
                       gru_cell, gru_params, xavier_init, zeros_init)


class ExtractorKind(Enum):
    RNN = "rnn"
    SEQ2SEQ = "seq2seq"
    CHENG_LAPATA = "cheng_lapata"
    SUMMARUNNER = "summarunner"


class DecodeMode(Enum):
    PREDICTED = "predicted"
    TEACHER_FORCED = "teacher_forced"


AUTO_REGRESSIVE = frozenset({ExtractorKind.CHENG_LAPATA, ExtractorKind.SUMMARUNNER})


@dataclass(frozen=True)
class ExtractorConfig:
    kind: ExtractorKind
    gru_hidden: int = 300
    mlp_hidden: int = 100
    doc_rep: int = 100
    pos_dim: int = 16
    pos_table_size: int = 500
    dropout: float = 0.25

    def __post_init__(self):
        for name in ("gru_hidden", "mlp_hidden", "doc_rep", "pos_dim", "pos_table_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


# -- parameter containers -------------------------------------------------------


@dataclass
class MlpHead:
    """a = ReLU(x U + u); logit = a V + v."""

    U: Tensor
    u: Tensor
    V: Tensor
    v: Tensor

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.U": self.U, f"{prefix}.u": self.u,
                f"{prefix}.V": self.V, f"{prefix}.v": self.v}


def _mlp_head(d_in: int, hidden: int, rng: np.random.Generator) -> MlpHead:
    return MlpHead(U=xavier_init((d_in, hidden), rng), u=zeros_init(hidden),
                   V=xavier_init((hidden, 1), rng), v=zeros_init(1))


@dataclass
class RnnExtractorParams:
    fwd: GruParams
    bwd: GruParams
    head: MlpHead

    def tensors(self) -> dict[str, Tensor]:
        return {**self.fwd.tensors("ext.rnn.fwd"), **self.bwd.tensors("ext.rnn.bwd"),
                **self.head.tensors("ext.rnn.head")}


@dataclass
class Seq2SeqParams:
    enc_fwd: GruParams
    enc_bwd: GruParams
    dec_fwd: GruParams
    dec_bwd: GruParams
    begin_fwd: Tensor  # (1, d_h), input fed to the first forward decoder step
    begin_bwd: Tensor  # (1, d_h)
    head: MlpHead

    def tensors(self) -> dict[str, Tensor]:
        return {**self.enc_fwd.tensors("ext.s2s.enc_fwd"),
                **self.enc_bwd.tensors("ext.s2s.enc_bwd"),
                **self.dec_fwd.tensors("ext.s2s.dec_fwd"),
                **self.dec_bwd.tensors("ext.s2s.dec_bwd"),
                "ext.s2s.begin_fwd": self.begin_fwd,
                "ext.s2s.begin_bwd": self.begin_bwd,
                **self.head.tensors("ext.s2s.head")}


@dataclass
class ChengLapataParams:
    enc: GruParams
    dec: GruParams
    begin: Tensor  # (1, d_h), learned begin-decoding sentence embedding
    head: MlpHead

    def tensors(self) -> dict[str, Tensor]:
        return {**self.enc.tensors("ext.cl.enc"), **self.dec.tensors("ext.cl.dec"),
                "ext.cl.begin": self.begin, **self.head.tensors("ext.cl.head")}


@dataclass
class SummaRunnerParams:
    fwd: GruParams
    bwd: GruParams
    W_q: Tensor
    b_q: Tensor
    W_z: Tensor
    b_z: Tensor
    W_con: Tensor  # (rep, 1)
    W_sal: Tensor  # (rep, rep)
    W_nov: Tensor  # (rep, rep)
    W_pos: Tensor  # (pos_dim, 1)
    W_qrt: Tensor  # (pos_dim, 1)
    bias: Tensor  # (1,)
    pos_table: Tensor  # (pos_table_size, pos_dim)
    qrt_table: Tensor  # (4, pos_dim)

    def tensors(self) -> dict[str, Tensor]:
        named = {"W_q": self.W_q, "b_q": self.b_q, "W_z": self.W_z, "b_z": self.b_z,
                 "W_con": self.W_con, "W_sal": self.W_sal, "W_nov": self.W_nov,
                 "W_pos": self.W_pos, "W_qrt": self.W_qrt, "bias": self.bias,
                 "pos_table": self.pos_table, "qrt_table": self.qrt_table}
        return {**self.fwd.tensors("ext.sr.fwd"), **self.bwd.tensors("ext.sr.bwd"),
                **{f"ext.sr.{k}": v for k, v in named.items()}}


ExtractorParams = (RnnExtractorParams | Seq2SeqParams | ChengLapataParams
                   | SummaRunnerParams)


def make_extractor_params(cfg: ExtractorConfig, d_h: int,
                          rng: np.random.Generator) -> ExtractorParams:
    h = cfg.gru_hidden
    if cfg.kind is ExtractorKind.RNN:
        return RnnExtractorParams(fwd=gru_params(d_h, h, rng),
                                  bwd=gru_params(d_h, h, rng),
                                  head=_mlp_head(2 * h, cfg.mlp_hidden, rng))
    if cfg.kind is ExtractorKind.SEQ2SEQ:
        return Seq2SeqParams(enc_fwd=gru_params(d_h, h, rng),
                             enc_bwd=gru_params(d_h, h, rng),
                             dec_fwd=gru_params(d_h, h, rng),
                             dec_bwd=gru_params(d_h, h, rng),
                             begin_fwd=xavier_init((1, d_h), rng),
                             begin_bwd=xavier_init((1, d_h), rng),
                             head=_mlp_head(4 * h, cfg.mlp_hidden, rng))
    if cfg.kind is ExtractorKind.CHENG_LAPATA:
        return ChengLapataParams(enc=gru_params(d_h, h, rng),
                                 dec=gru_params(d_h, h, rng),
                                 begin=xavier_init((1, d_h), rng),
                                 head=_mlp_head(2 * h, cfg.mlp_hidden, rng))
    rep, pd = cfg.doc_rep, cfg.pos_dim
    return SummaRunnerParams(
        fwd=gru_params(d_h, h, rng), bwd=gru_params(d_h, h, rng),
        W_q=xavier_init((2 * h, rep), rng), b_q=zeros_init(rep),
        W_z=xavier_init((2 * h, rep), rng), b_z=zeros_init(rep),
        W_con=xavier_init((rep, 1), rng), W_sal=xavier_init((rep, rep), rng),
        W_nov=xavier_init((rep, rep), rng), W_pos=xavier_init((pd, 1), rng),
        W_qrt=xavier_init((pd, 1), rng), bias=zeros_init(1),
        pos_table=xavier_init((cfg.pos_table_size, pd), rng),
        qrt_table=xavier_init((4, pd), rng))


def extractor_tensors(params: ExtractorParams) -> dict[str, Tensor]:
    return params.tensors()


# -- outputs --------------------------------------------------------------------


@dataclass
class BatchExtraction:
    """Training-time output: probabilities still attached to the tape."""

    probs: Tensor  # (B, n)
    aux: dict[str, Tensor] = field(default_factory=dict)


@dataclass
class ExtractionOutput:
    """Per-document output: plain arrays, probabilities strictly in (0, 1)."""

    probs: np.ndarray  # (n,)
    aux: dict[str, np.ndarray] = field(default_factory=dict)


# -- shared pieces ---------------------------------------------------------------


def _masked_step(tape: Tape, h_new: Tensor, h_prev: Tensor, mask: np.ndarray) -> Tensor:
    m = Tensor(mask)
    return tape.add(tape.mul(m, h_new), tape.mul(Tensor(1.0 - mask), h_prev))


def _drop(tape: Tape, x: Tensor, drop_prob: float, mode: str, rng) -> Tensor:
    if mode == EVAL or drop_prob == 0.0:
        return x
    return tape.mul(x, dropout_mask(x.shape, drop_prob, rng, mode))


def _gru_scan(tape: Tape, h_seq: Tensor, sent_mask: np.ndarray, params: GruParams,
              reverse: bool, init: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Run a GRU along axis 1; returns (states (B, n, h), final state (B, h)).

    Masked positions keep the previous state, so the final state equals the
    state at each document's true last step.
    """
    b, n, d = h_seq.shape
    h = init if init is not None else Tensor(np.zeros((b, params.hidden_size)))
    order = reversed(range(n)) if reverse else range(n)
    states: list[Tensor | None] = [None] * n
    for i in order:
        x = tape.reshape(tape.narrow(h_seq, 1, i, 1), (b, d))
        h = _masked_step(tape, gru_cell(tape, x, h, params), h, sent_mask[:, i, :])
        states[i] = h
    return tape.stack(states, axis=1), h


def _head_sequence(tape: Tape, features: Tensor, head: MlpHead, drop_prob: float,
                   mode: str, rng) -> Tensor:
    """MLP over (B, n, f) features -> (B, n) probabilities."""
    a = tape.relu(tape.add(tape.matmul(features, head.U), head.u))
    a = _drop(tape, a, drop_prob, mode, rng)
    logits = tape.add(tape.matmul(a, head.V), head.v)
    b, n = features.shape[0], features.shape[1]
    return tape.sigmoid(tape.reshape(logits, (b, n)))


def _head_step(tape: Tape, features: Tensor, head: MlpHead, drop_prob: float,
               mode: str, rng) -> Tensor:
    """MLP over (B, f) features -> (B, 1) probability column."""
    a = tape.relu(tape.add(tape.matmul(features, head.U), head.u))
    a = _drop(tape, a, drop_prob, mode, rng)
    return tape.sigmoid(tape.add(tape.matmul(a, head.V), head.v))


# -- architectures ---------------------------------------------------------------


def _rnn_forward(tape: Tape, H: Tensor, sent_mask: np.ndarray,
                 params: RnnExtractorParams, cfg: ExtractorConfig,
                 mode: str, rng) -> BatchExtraction:
    states_f, _ = _gru_scan(tape, H, sent_mask, params.fwd, reverse=False)
    states_b, _ = _gru_scan(tape, H, sent_mask, params.bwd, reverse=True)
    states = _drop(tape, tape.concat([states_f, states_b], axis=-1),
                   cfg.dropout, mode, rng)
    probs = _head_sequence(tape, states, params.head, cfg.dropout, mode, rng)
    return BatchExtraction(probs=probs)


def _seq2seq_forward(tape: Tape, H: Tensor, sent_mask: np.ndarray,
                     params: Seq2SeqParams, cfg: ExtractorConfig,
                     mode: str, rng) -> BatchExtraction:
    enc_f, enc_f_final = _gru_scan(tape, H, sent_mask, params.enc_fwd, reverse=False)
    enc_b, enc_b_final = _gru_scan(tape, H, sent_mask, params.enc_bwd, reverse=True)
    z = tape.concat([enc_f, enc_b], axis=-1)
    # each decoder direction starts from the matching encoder final state
    # and consumes the learned begin vector before the sentence embeddings
    dec_f_init = gru_cell(tape, params.begin_fwd, enc_f_final, params.dec_fwd)
    dec_b_init = gru_cell(tape, params.begin_bwd, enc_b_final, params.dec_bwd)
    dec_f, _ = _gru_scan(tape, H, sent_mask, params.dec_fwd, reverse=False,
                         init=dec_f_init)
    dec_b, _ = _gru_scan(tape, H, sent_mask, params.dec_bwd, reverse=True,
                         init=dec_b_init)
    q = tape.concat([dec_f, dec_b], axis=-1)
    z = _drop(tape, z, cfg.dropout, mode, rng)
    q = _drop(tape, q, cfg.dropout, mode, rng)
    scores = tape.matmul(q, tape.swap_last2(z))  # (B, n, n): q_i . z_j
    attn_mask = (1.0 - sent_mask.transpose(0, 2, 1)) * -1e30  # (B, 1, n)
    alpha = tape.softmax_last(tape.add(scores, Tensor(attn_mask)))
    context = tape.matmul(alpha, z)
    probs = _head_sequence(tape, tape.concat([context, q], axis=-1), params.head,
                           cfg.dropout, mode, rng)
    return BatchExtraction(probs=probs, aux={"attention": alpha})


def _cheng_lapata_forward(tape: Tape, H: Tensor, sent_mask: np.ndarray,
                          params: ChengLapataParams, cfg: ExtractorConfig,
                          mode: str, rng, decode_mode: DecodeMode,
                          gold: np.ndarray | None) -> BatchExtraction:
    if decode_mode is DecodeMode.TEACHER_FORCED and gold is None:
        raise ValueError("teacher-forced decoding requires gold labels")
    b, n, d = H.shape
    z, z_final = _gru_scan(tape, H, sent_mask, params.enc, reverse=False)
    z = _drop(tape, z, cfg.dropout, mode, rng)
    q = gru_cell(tape, params.begin, z_final, params.dec)
    p_steps: list[Tensor] = []
    for i in range(n):
        if i > 0:
            if decode_mode is DecodeMode.TEACHER_FORCED:
                weight: Tensor = Tensor(gold[:, i - 1:i].astype(np.float64))
            else:
                weight = p_steps[i - 1]
            x = tape.mul(weight, tape.reshape(tape.narrow(H, 1, i - 1, 1), (b, d)))
            q = _masked_step(tape, gru_cell(tape, x, q, params.dec), q,
                             sent_mask[:, i, :])
        z_i = tape.reshape(tape.narrow(z, 1, i, 1), (b, z.shape[-1]))
        q_i = _drop(tape, q, cfg.dropout, mode, rng)
        p_i = _head_step(tape, tape.concat([z_i, q_i], axis=-1), params.head,
                         cfg.dropout, mode, rng)
        p_steps.append(p_i)
    probs = tape.reshape(tape.concat(p_steps, axis=-1), (b, n))
    return BatchExtraction(probs=probs)


def positions_and_quartiles(sent_mask: np.ndarray, pos_table_size: int
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Per-position index arrays (B, n) into the position/quartile tables.

    Positions clamp to the table end; the quartile of sentence i (1-based)
    in an n-sentence document is floor(4 (i-1) / n), clamped to {0..3}.
    Padded positions clamp into range and are masked downstream.
    """
    b, n, _ = sent_mask.shape
    lengths = np.maximum(sent_mask.sum(axis=(1, 2)), 1.0)  # (B,)
    pos = np.minimum(np.arange(n), pos_table_size - 1)
    pos_idx = np.broadcast_to(pos, (b, n)).astype(np.int64)
    qrt_idx = np.clip((4 * np.arange(n)[None, :] / lengths[:, None]).astype(np.int64),
                      0, 3)
    return pos_idx, qrt_idx


def _summarunner_forward(tape: Tape, H: Tensor, sent_mask: np.ndarray,
                         params: SummaRunnerParams, cfg: ExtractorConfig,
                         mode: str, rng) -> BatchExtraction:
    b, n, _ = H.shape
    states_f, _ = _gru_scan(tape, H, sent_mask, params.fwd, reverse=False)
    states_b, _ = _gru_scan(tape, H, sent_mask, params.bwd, reverse=True)
    states = _drop(tape, tape.concat([states_f, states_b], axis=-1),
                   cfg.dropout, mode, rng)
    # document representation from the masked mean of the GRU outputs
    lengths = np.maximum(sent_mask.sum(axis=1), 1.0)  # (B, 1)
    mean = tape.mul(tape.sum(tape.mul(states, Tensor(sent_mask)), axis=1),
                    Tensor(1.0 / lengths))
    q = tape.tanh(tape.add(tape.matmul(mean, params.W_q), params.b_q))
    z = tape.relu(tape.add(tape.matmul(states, params.W_z), params.b_z))
    z = _drop(tape, z, cfg.dropout, mode, rng)
    pos_idx, qrt_idx = positions_and_quartiles(sent_mask, params.pos_table.shape[0])
    rep = z.shape[-1]
    g = Tensor(np.zeros((b, rep)))
    p_steps: list[Tensor] = []
    g_steps: list[Tensor] = []
    parts: dict[str, list[Tensor]] = {k: [] for k in
                                      ("content", "salience", "novelty",
                                       "position", "quartile")}
    for i in range(n):
        z_i = tape.reshape(tape.narrow(z, 1, i, 1), (b, rep))
        con = tape.matmul(z_i, params.W_con)  # (B, 1)
        sal = tape.sum(tape.mul(tape.matmul(z_i, params.W_sal), q),
                       axis=-1, keepdims=True)
        nov = tape.scale(tape.sum(tape.mul(tape.matmul(z_i, params.W_nov),
                                           tape.tanh(g)),
                                  axis=-1, keepdims=True), -1.0)
        pos = tape.matmul(tape.gather_rows(params.pos_table, pos_idx[:, i]),
                          params.W_pos)
        qrt = tape.matmul(tape.gather_rows(params.qrt_table, qrt_idx[:, i]),
                          params.W_qrt)
        logits = tape.add(tape.add(tape.add(tape.add(tape.add(con, sal), nov),
                                            pos), qrt), params.bias)
        p_i = tape.sigmoid(logits)  # (B, 1)
        g_steps.append(g)
        g = tape.add(g, tape.mul(tape.mul(p_i, z_i), Tensor(sent_mask[:, i, :])))
        p_steps.append(p_i)
        for key, val in (("content", con), ("salience", sal), ("novelty", nov),
                         ("position", pos), ("quartile", qrt)):
            parts[key].append(val)
    probs = tape.reshape(tape.concat(p_steps, axis=-1), (b, n))
    aux = {"summary_reps": tape.stack(g_steps, axis=1)}
    for key, vals in parts.items():
        aux[f"score_{key}"] = tape.reshape(tape.concat(vals, axis=-1), (b, n))
    return BatchExtraction(probs=probs, aux=aux)


# -- dispatch ---------------------------------------------------------------------


def extract_batch(tape: Tape, H: Tensor, sent_mask: np.ndarray,
                  cfg: ExtractorConfig, params: ExtractorParams,
                  mode: str = EVAL, rng=None,
                  decode_mode: DecodeMode = DecodeMode.PREDICTED,
                  gold: np.ndarray | None = None) -> BatchExtraction:
    """(B, n, d_h) sentence embeddings -> per-sentence probabilities (B, n)."""
    if H.ndim != 3:
        raise AutodiffError(f"extract_batch: expected (B, n, d_h), got {H.shape}")
    if cfg.kind is ExtractorKind.RNN:
        return _rnn_forward(tape, H, sent_mask, params, cfg, mode, rng)
    if cfg.kind is ExtractorKind.SEQ2SEQ:
        return _seq2seq_forward(tape, H, sent_mask, params, cfg, mode, rng)
    if cfg.kind is ExtractorKind.CHENG_LAPATA:
        return _cheng_lapata_forward(tape, H, sent_mask, params, cfg, mode, rng,
                                     decode_mode, gold)
    return _summarunner_forward(tape, H, sent_mask, params, cfg, mode, rng)


def _single(H, cfg: ExtractorConfig, params: ExtractorParams, mode: str, rng,
            decode_mode: DecodeMode = DecodeMode.PREDICTED,
            gold=None) -> ExtractionOutput:
    m = np.asarray(H, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1:
        raise ValueError(f"sentence embeddings must be (n >= 1, d_h), got {m.shape}")
    tape = Tape()
    mask = np.ones((1, m.shape[0], 1))
    gold_arr = None if gold is None else np.asarray(gold, dtype=np.float64)[None, :]
    out = extract_batch(tape, Tensor(m[None]), mask, cfg, params, mode=mode, rng=rng,
                        decode_mode=decode_mode, gold=gold_arr)
    return ExtractionOutput(probs=out.probs.data[0],
                            aux={k: v.data[0] for k, v in out.aux.items()})


def extract_rnn(H, params: RnnExtractorParams, cfg: ExtractorConfig | None = None,
                mode: str = EVAL, rng=None) -> ExtractionOutput:
    cfg = cfg or ExtractorConfig(kind=ExtractorKind.RNN,
                                 gru_hidden=params.fwd.hidden_size,
                                 mlp_hidden=params.head.u.shape[0])
    return _single(H, cfg, params, mode, rng)


def extract_seq2seq(H, params: Seq2SeqParams, cfg: ExtractorConfig | None = None,
                    mode: str = EVAL, rng=None) -> ExtractionOutput:
    cfg = cfg or ExtractorConfig(kind=ExtractorKind.SEQ2SEQ,
                                 gru_hidden=params.enc_fwd.hidden_size,
                                 mlp_hidden=params.head.u.shape[0])
    return _single(H, cfg, params, mode, rng)


def extract_cheng_lapata(H, params: ChengLapataParams,
                         decode_mode: DecodeMode = DecodeMode.PREDICTED,
                         gold=None, cfg: ExtractorConfig | None = None,
                         mode: str = EVAL, rng=None) -> ExtractionOutput:
    cfg = cfg or ExtractorConfig(kind=ExtractorKind.CHENG_LAPATA,
                                 gru_hidden=params.enc.hidden_size,
                                 mlp_hidden=params.head.u.shape[0])
    return _single(H, cfg, params, mode, rng, decode_mode=decode_mode, gold=gold)


def extract_summarunner(H, params: SummaRunnerParams,
                        cfg: ExtractorConfig | None = None,
                        mode: str = EVAL, rng=None) -> ExtractionOutput:
    cfg = cfg or ExtractorConfig(kind=ExtractorKind.SUMMARUNNER,
                                 gru_hidden=params.fwd.hidden_size,
                                 doc_rep=params.W_q.shape[1],
                                 pos_dim=params.pos_table.shape[1],
                                 pos_table_size=params.pos_table.shape[0])
    return _single(H, cfg, params, mode, rng)

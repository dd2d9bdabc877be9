"""Training loop, budgeted summary generation, baselines, and evaluation.

A Model bundles the embedding table, encoder, and extractor with their
configs. Documents batch into padded index arrays with masks; the same
forward path serves one document or a batch. Training minimizes a
class-weighted negative log-likelihood with Adam, element-wise gradient
clipping, early stopping on validation bigram recall, and (for the
sentence-weighting decoder) a teacher-forcing schedule.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .autodiff import (EVAL, TRAIN, AdamState, Tape, Tensor, adam_step, backward,
                       clip_gradients, collect_grads, zero_grads)
from .corpus import BudgetConfig, Document
from .embed import EmbeddingTable, embed_indices
from .encoders import (EncoderConfig, EncoderParams, encode_batch, encoder_output_dim,
                       encoder_tensors, make_encoder_params)
from .extractors import (AUTO_REGRESSIVE, BatchExtraction, DecodeMode, ExtractorConfig,
                         ExtractorKind, ExtractorParams, extract_batch,
                         extractor_tensors, make_extractor_params)
from .metrics import MultiRef, RougeConfig, ScoreReport, rouge_l_recall, rouge_n_recall


class TrainingError(RuntimeError):
    """Numeric failure during training (non-finite loss or gradient)."""


@dataclass(frozen=True)
class LossWeights:
    w1: float
    w0: float = 1.0

    def __post_init__(self):
        if self.w1 <= 0:
            raise ValueError(f"w1 must be positive, got {self.w1}")


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    budget: BudgetConfig
    max_epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.0001
    early_stop_metric: str = "valid_rouge2"
    # None derives max_epochs // 2 for the sentence-weighting decoder and 0
    # for every other extractor; explicit values are honored as-is
    teacher_forcing_epochs: int | None = None
    # wall-clock values in the log break byte-level reproducibility across
    # runs; switch off to log wall_ms as 0
    log_timing: bool = True

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.early_stop_metric != "valid_rouge2":
            raise ValueError("early stopping is defined on validation bigram recall")
        if (self.teacher_forcing_epochs is not None
                and not 0 <= self.teacher_forcing_epochs <= self.max_epochs):
            raise ValueError("teacher_forcing_epochs must lie in [0, max_epochs]")

    def resolve_teacher_forcing(self, kind: ExtractorKind) -> int:
        if self.teacher_forcing_epochs is not None:
            return self.teacher_forcing_epochs
        return self.max_epochs // 2 if kind is ExtractorKind.CHENG_LAPATA else 0


# -- model bundle ---------------------------------------------------------------


@dataclass
class Model:
    encoder_cfg: EncoderConfig
    extractor_cfg: ExtractorConfig
    table: EmbeddingTable
    encoder_params: EncoderParams
    extractor_params: ExtractorParams

    def tensors(self) -> dict[str, Tensor]:
        return {**self.table.params(), **encoder_tensors(self.encoder_params),
                **extractor_tensors(self.extractor_params)}


def build_model(encoder_cfg: EncoderConfig, extractor_cfg: ExtractorConfig,
                table: EmbeddingTable, seed) -> Model:
    """Fresh parameters; creation order is fixed so seeds reproduce exactly.

    `seed` may be an int or an already-advanced Generator; the latter lets a
    caller that drew the embedding matrix first keep one stream for all
    parameters instead of two identically seeded ones.
    """
    if isinstance(seed, np.random.Generator):
        rng = seed
    else:
        rng = np.random.default_rng(np.random.SeedSequence([seed]))
    enc_params = make_encoder_params(encoder_cfg, table.dim, rng)
    d_h = encoder_output_dim(encoder_cfg, table.dim)
    ext_params = make_extractor_params(extractor_cfg, d_h, rng)
    return Model(encoder_cfg=encoder_cfg, extractor_cfg=extractor_cfg, table=table,
                 encoder_params=enc_params, extractor_params=ext_params)


def load_model_tensors(model: Model, flat: dict[str, Tensor]) -> None:
    """Copy checkpointed values into an architecture-matched model."""
    own = model.tensors()
    if set(own) != set(flat):
        missing = sorted(set(own) - set(flat))
        extra = sorted(set(flat) - set(own))
        raise ValueError(f"parameter names do not match the architecture "
                         f"(missing {missing}, unexpected {extra})")
    for name, tensor in own.items():
        if tensor.data.shape != flat[name].data.shape:
            raise ValueError(f"shape mismatch for {name!r}: model "
                             f"{tensor.data.shape}, checkpoint {flat[name].data.shape}")
        tensor.data[...] = flat[name].data


# -- batching -------------------------------------------------------------------


@dataclass
class Batch:
    docs: list[Document]
    indices: np.ndarray  # (B, n, t) int64 rows into the embedding table
    keep: np.ndarray  # (B, n, t, 1); 0 on padding and ablated tokens
    token_mask: np.ndarray  # (B, n, t, 1); 1 on real tokens, ablated included
    sent_mask: np.ndarray  # (B, n, 1)
    gold: np.ndarray  # (B, n) float 0/1; 0 where unlabeled or padded


def make_batch(docs: Sequence[Document], table: EmbeddingTable) -> Batch:
    if not docs:
        raise ValueError("make_batch: empty document list")
    n_max = max(d.n_sentences for d in docs)
    t_max = max(s.word_count for d in docs for s in d.sentences)
    b = len(docs)
    indices = np.zeros((b, n_max, t_max), dtype=np.int64)
    keep = np.zeros((b, n_max, t_max, 1))
    token_mask = np.zeros((b, n_max, t_max, 1))
    sent_mask = np.zeros((b, n_max, 1))
    gold = np.zeros((b, n_max))
    for bi, doc in enumerate(docs):
        for si, sent in enumerate(doc.sentences):
            sent_mask[bi, si, 0] = 1.0
            for ti, tok in enumerate(sent.tokens):
                indices[bi, si, ti] = table.row_of(tok.surface)
                token_mask[bi, si, ti, 0] = 1.0
                keep[bi, si, ti, 0] = 0.0 if tok.ablated else 1.0
        if doc.labels is not None:
            gold[bi, : doc.n_sentences] = doc.labels
    return Batch(docs=list(docs), indices=indices, keep=keep,
                 token_mask=token_mask, sent_mask=sent_mask, gold=gold)


def model_forward(tape: Tape, model: Model, batch: Batch, mode: str = EVAL,
                  rng=None, decode_mode: DecodeMode = DecodeMode.PREDICTED
                  ) -> BatchExtraction:
    words = embed_indices(tape, model.table, batch.indices, batch.keep)
    sent_emb = encode_batch(tape, words, batch.token_mask, model.encoder_cfg,
                            model.encoder_params, mode=mode, rng=rng)
    return extract_batch(tape, sent_emb, batch.sent_mask, model.extractor_cfg,
                         model.extractor_params, mode=mode, rng=rng,
                         decode_mode=decode_mode, gold=batch.gold)


def predict_probs(model: Model, doc: Document) -> np.ndarray:
    """Per-sentence extraction probabilities, deterministic (no dropout)."""
    batch = make_batch([doc], model.table)
    out = model_forward(Tape(), model, batch, mode=EVAL)
    return out.probs.data[0]


# -- loss -----------------------------------------------------------------------


def label_class_weights(training_docs: Sequence[Document]) -> LossWeights:
    """w1 = (# zero labels) / (# one labels), counted over the training split."""
    n0 = n1 = 0
    for doc in training_docs:
        if doc.labels is None:
            raise ValueError(f"document {doc.id!r} has no labels")
        n1 += sum(doc.labels)
        n0 += len(doc.labels) - sum(doc.labels)
    if n1 == 0:
        raise ValueError("degenerate corpus: no positive labels")
    return LossWeights(w1=n0 / n1)


def weighted_nll_loss(tape: Tape, probs: Tensor, gold: np.ndarray,
                      weights: LossWeights, mask: np.ndarray) -> Tensor:
    """-sum_i mask_i w(y_i) [y_i log p_i + (1-y_i) log(1-p_i)], over the batch."""
    if probs.shape != gold.shape or probs.shape != mask.shape:
        raise ValueError(f"shape mismatch: probs {probs.shape}, gold {gold.shape}, "
                         f"mask {mask.shape}")
    live = mask > 0
    if np.any((probs.data[live] <= 0.0) | (probs.data[live] >= 1.0)):
        raise TrainingError("probability saturated to 0 or 1 at an unmasked position")
    w = mask * np.where(gold > 0, weights.w1, weights.w0)
    # masked positions multiply by 0 but still pass through log; nudge them
    # to 0.5 so the log stays defined without touching live positions
    safe = np.where(live, 1.0, 0.0)
    p_safe = tape.add(tape.mul(probs, Tensor(safe)), Tensor(0.5 * (1.0 - safe)))
    pos = tape.mul(Tensor(gold), tape.log(p_safe))
    neg = tape.mul(Tensor(1.0 - gold), tape.log(tape.one_minus(p_safe)))
    terms = tape.mul(Tensor(w), tape.add(pos, neg))
    return tape.scale(tape.sum(terms), -1.0)


# -- training -------------------------------------------------------------------


@dataclass
class TrainResult:
    log: list[dict]
    best_epoch: int
    best_score: float
    best_tensors: dict[str, np.ndarray]
    model: Model
    adam: AdamState


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch]))


def validation_rouge2(model: Model, docs: Sequence[Document], budget: BudgetConfig,
                      rouge_cfg: RougeConfig) -> float:
    cfg = replace(rouge_cfg, order=2, length_limit_words=budget.budget_words)
    total = 0.0
    for doc in docs:
        summary = generate_summary(doc, predict_probs(model, doc), budget)
        total += rouge_n_recall(summary.tokens, doc.references, cfg)
    return total / len(docs)


def train(model: Model, train_docs: Sequence[Document], valid_docs: Sequence[Document],
          cfg: TrainConfig, rouge_cfg: RougeConfig) -> TrainResult:
    """Adam + clipping on the weighted NLL; keeps the best validation epoch.

    Deterministic given cfg.seed: epoch e derives its own generator for
    batch order and dropout, so the run to any epoch is invariant to
    max_epochs. The first epoch achieving the best validation score wins.
    """
    if not train_docs or not valid_docs:
        raise ValueError("train and validation splits must be non-empty")
    for doc in train_docs:
        if doc.labels is None:
            raise ValueError(f"training document {doc.id!r} has no labels")
    weights = label_class_weights(train_docs)
    params = model.tensors()
    adam = AdamState(learning_rate=cfg.learning_rate)
    tf_epochs = cfg.resolve_teacher_forcing(model.extractor_cfg.kind)
    log: list[dict] = []
    best_epoch, best_score = 0, float("-inf")
    best_tensors = {name: t.data.copy() for name, t in params.items()}

    for epoch in range(1, cfg.max_epochs + 1):
        started = time.monotonic()
        rng = _epoch_rng(cfg.seed, epoch)
        order = rng.permutation(len(train_docs))
        teacher_forced = (model.extractor_cfg.kind is ExtractorKind.CHENG_LAPATA
                          and epoch <= tf_epochs)
        decode = DecodeMode.TEACHER_FORCED if teacher_forced else DecodeMode.PREDICTED
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = make_batch([train_docs[i] for i in order[start:start + cfg.batch_size]],
                               model.table)
            tape = Tape()
            out = model_forward(tape, model, batch, mode=TRAIN, rng=rng,
                                decode_mode=decode)
            loss = weighted_nll_loss(tape, out.probs, batch.gold, weights,
                                     batch.sent_mask[..., 0])
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise TrainingError(
                    f"non-finite loss {loss_value} at epoch {epoch}, "
                    f"batch starting at {start}")
            zero_grads(params)
            backward(tape, loss)
            grads = clip_gradients(collect_grads(params))
            adam_step(params, grads, adam)
            epoch_loss += loss_value
        score = validation_rouge2(model, valid_docs, cfg.budget, rouge_cfg)
        wall_ms = int(round((time.monotonic() - started) * 1000)) if cfg.log_timing else 0
        log.append({"epoch": epoch, "train_loss": epoch_loss, "valid_rouge2": score,
                    "mode": "teacher_forced" if teacher_forced else "predicted",
                    "wall_ms": wall_ms})
        if score > best_score:
            best_epoch, best_score = epoch, score
            best_tensors = {name: t.data.copy() for name, t in params.items()}

    return TrainResult(log=log, best_epoch=best_epoch,
                       best_score=best_score if best_epoch else 0.0,
                       best_tensors=best_tensors, model=model, adam=adam)


# -- generation and baselines ----------------------------------------------------


@dataclass(frozen=True)
class SummaryResult:
    indices: tuple[int, ...]  # selected sentences, in document order
    tokens: tuple[str, ...]


def generate_summary(doc: Document, probs: Sequence[float],
                     budget: BudgetConfig) -> SummaryResult:
    """Take sentences by descending probability until the budget is met.

    Ties break toward the earlier sentence. The sentence that crosses the
    budget is included; selected sentences are emitted in document order.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (doc.n_sentences,):
        raise ValueError(f"probs shape {probs.shape} does not match "
                         f"{doc.n_sentences} sentences")
    ranked = sorted(range(doc.n_sentences), key=lambda i: (-probs[i], i))
    chosen: list[int] = []
    words = 0
    for i in ranked:
        chosen.append(i)
        words += doc.sentences[i].word_count
        if words >= budget.budget_words:
            break
    chosen.sort()
    tokens = tuple(t for i in chosen for t in doc.sentences[i].words())
    return SummaryResult(indices=tuple(chosen), tokens=tokens)


def lead_summary(doc: Document, budget: BudgetConfig) -> tuple[str, ...]:
    """First min(budget, document length) words; may cut mid-sentence."""
    flat = [t for s in doc.sentences for t in s.words()]
    return tuple(flat[: budget.budget_words])


def oracle_summary(doc: Document, labels: Sequence[int]) -> SummaryResult:
    """Sentences flagged by the extract labels, in document order."""
    if len(labels) != doc.n_sentences:
        raise ValueError(f"labels length {len(labels)} does not match "
                         f"{doc.n_sentences} sentences")
    chosen = tuple(i for i, y in enumerate(labels) if y)
    tokens = tuple(t for i in chosen for t in doc.sentences[i].words())
    return SummaryResult(indices=chosen, tokens=tokens)


def model_summarizer(model: Model, budget: BudgetConfig
                     ) -> Callable[[Document], tuple[str, ...]]:
    def fn(doc: Document) -> tuple[str, ...]:
        return generate_summary(doc, predict_probs(model, doc), budget).tokens
    return fn


def lead_summarizer(budget: BudgetConfig) -> Callable[[Document], tuple[str, ...]]:
    def fn(doc: Document) -> tuple[str, ...]:
        return lead_summary(doc, budget)
    return fn


def oracle_summarizer(budget: BudgetConfig, rouge_cfg: RougeConfig
                      ) -> Callable[[Document], tuple[str, ...]]:
    from .metrics import oracle_extract_labels

    def fn(doc: Document) -> tuple[str, ...]:
        labels = doc.labels
        if labels is None:
            labels = oracle_extract_labels(doc, budget, replace(rouge_cfg, order=1,
                                                                length_limit_words=None))
        return oracle_summary(doc, labels).tokens
    return fn


# -- evaluation -------------------------------------------------------------------

DEFAULT_METRICS = ("rouge1", "rouge2", "rougeL")


def evaluate_system(docs: Sequence[Document],
                    summarizer: Callable[[Document], Sequence[str]],
                    budget: BudgetConfig, rouge_cfg: RougeConfig, system: str,
                    seed: int | None = None,
                    metrics: Sequence[str] = DEFAULT_METRICS) -> ScoreReport:
    """Score one system on a split: per-document recall plus corpus means.

    The system side is truncated at the budget; references never are.
    """
    if not docs:
        raise ValueError("evaluate_system: empty document list")
    per_doc: dict[str, dict[str, float]] = {}
    for doc in docs:
        summary = list(summarizer(doc))
        scores: dict[str, float] = {}
        for metric in metrics:
            if metric == "rougeL":
                cfg = replace(rouge_cfg, length_limit_words=budget.budget_words)
                scores[metric] = rouge_l_recall(summary, doc.references, cfg)
            else:
                order = int(metric.replace("rouge", ""))
                cfg = replace(rouge_cfg, order=order,
                              length_limit_words=budget.budget_words)
                scores[metric] = rouge_n_recall(summary, doc.references, cfg)
        per_doc[doc.id] = scores
    return ScoreReport(system=system, seed=seed, per_doc=per_doc)

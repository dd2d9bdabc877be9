"""Recall-oriented summary scoring, greedy extract labels, significance.

All scores are recall variants: n-gram overlap (clipped counts) or longest
common subsequence, each divided by the reference mass. Token comparison is
exact string equality; the only preprocessing steps are system-side
truncation and optional stopword removal, applied in that order so a length
limit depends only on the leading system tokens.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Sequence

import numpy as np

from .corpus import BudgetConfig, Document


class MultiRef(Enum):
    AVERAGE = "average"
    BEST = "best"


@dataclass(frozen=True)
class RougeConfig:
    order: int = 1
    remove_stopwords: bool = True
    stemming: bool = False
    length_limit_words: int | None = None
    multi_ref: MultiRef = MultiRef.AVERAGE

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if self.stemming:
            raise NotImplementedError("stemming is not supported")
        if self.length_limit_words is not None and self.length_limit_words < 1:
            raise ValueError("length_limit_words must be positive when set")


_STOPWORDS: frozenset[str] | None = None


def stopword_set() -> frozenset[str]:
    global _STOPWORDS
    if _STOPWORDS is None:
        text = resources.files("extsum.data").joinpath("stopwords.txt").read_text("utf-8")
        _STOPWORDS = frozenset(w for w in text.split("\n") if w)
    return _STOPWORDS


def _preprocess_system(tokens: Sequence[str], cfg: RougeConfig) -> list[str]:
    toks = list(tokens)
    if cfg.length_limit_words is not None:
        toks = toks[: cfg.length_limit_words]
    if cfg.remove_stopwords:
        stop = stopword_set()
        toks = [t for t in toks if t not in stop]
    return toks


def _preprocess_reference(tokens: Sequence[str], cfg: RougeConfig) -> list[str]:
    if cfg.remove_stopwords:
        stop = stopword_set()
        return [t for t in tokens if t not in stop]
    return list(tokens)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _combine(scores: list[float], multi_ref: MultiRef) -> float:
    if multi_ref is MultiRef.BEST:
        return max(scores)
    return sum(scores) / len(scores)


def rouge_n_recall(system: Sequence[str], references: Sequence[Sequence[str]],
                   cfg: RougeConfig) -> float:
    """Clipped n-gram recall against one or more references.

    Per reference: sum over distinct n-grams of min(count_sys, count_ref),
    divided by the reference n-gram total. A reference with no n-grams left
    after preprocessing scores 0. Scores combine across references per
    cfg.multi_ref.
    """
    if not references:
        raise ValueError("references must be non-empty")
    sys_counts = _ngrams(_preprocess_system(system, cfg), cfg.order)
    scores = []
    for ref in references:
        ref_counts = _ngrams(_preprocess_reference(ref, cfg), cfg.order)
        total = sum(ref_counts.values())
        if total == 0:
            scores.append(0.0)
            continue
        clipped = sum(min(c, sys_counts[g]) for g, c in ref_counts.items())
        scores.append(clipped / total)
    return _combine(scores, cfg.multi_ref)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # two-row DP over (len(a)+1) x (len(b)+1)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_recall(system: Sequence[str], references: Sequence[Sequence[str]],
                   cfg: RougeConfig) -> float:
    """LCS length divided by reference length, same preprocessing/combining.

    cfg.order is ignored here.
    """
    if not references:
        raise ValueError("references must be non-empty")
    sys_toks = _preprocess_system(system, cfg)
    scores = []
    for ref in references:
        ref_toks = _preprocess_reference(ref, cfg)
        if not ref_toks:
            scores.append(0.0)
            continue
        scores.append(_lcs_length(sys_toks, ref_toks) / len(ref_toks))
    return _combine(scores, cfg.multi_ref)


# -- greedy oracle labels ------------------------------------------------------


@dataclass(frozen=True)
class OracleStep:
    """One accepted greedy step: chosen sentence and the score after adding."""

    index: int
    score: float


def oracle_extract_trace(doc: Document, budget: BudgetConfig,
                         cfg: RougeConfig) -> list[OracleStep]:
    """Greedy unigram-recall maximization; returns the accepted steps in order.

    Loop: while the running summary's word count is still within budget,
    scan the unlabeled sentences for the one whose addition maximizes the
    running score; accept only strict improvements (ties break to the
    smallest sentence index), else stop. The budget check happens before
    adding, so the last accepted sentence may overshoot.
    """
    if cfg.order != 1:
        raise ValueError(f"oracle optimizes unigram recall; cfg.order must be 1, "
                         f"got {cfg.order}")
    sentences = doc.sentence_words()
    chosen: list[int] = []
    summary: list[str] = []
    current = 0.0
    steps: list[OracleStep] = []
    taken: set[int] = set()
    while sum(len(sentences[i]) for i in chosen) <= budget.budget_words:
        best_index = -1
        best_score = current
        for i, words in enumerate(sentences):
            if i in taken:
                continue
            score = rouge_n_recall(summary + list(words), doc.references, cfg)
            if score > best_score:
                best_score = score
                best_index = i
        if best_index < 0:
            break
        chosen.append(best_index)
        taken.add(best_index)
        summary.extend(sentences[best_index])
        current = best_score
        steps.append(OracleStep(best_index, best_score))
    return steps


def oracle_extract_labels(doc: Document, budget: BudgetConfig,
                          cfg: RougeConfig) -> tuple[int, ...]:
    """0/1 label per sentence from the greedy trace."""
    labels = [0] * doc.n_sentences
    for step in oracle_extract_trace(doc, budget, cfg):
        labels[step.index] = 1
    return tuple(labels)


# -- score reports -------------------------------------------------------------


@dataclass
class ScoreReport:
    """Per-document scores for one system, one value per metric name."""

    system: str
    seed: int | None
    per_doc: dict[str, dict[str, float]]
    means: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.means:
            self.means = self._compute_means()
        else:
            computed = self._compute_means()
            for metric, value in computed.items():
                if abs(value - self.means[metric]) > 1e-12:
                    raise ValueError(
                        f"mean for {metric!r} does not match per-document scores")

    def _compute_means(self) -> dict[str, float]:
        if not self.per_doc:
            return {}
        metrics = next(iter(self.per_doc.values())).keys()
        return {
            m: sum(scores[m] for scores in self.per_doc.values()) / len(self.per_doc)
            for m in metrics
        }

    def metric_names(self) -> list[str]:
        return sorted(self.means)

    def doc_scores(self, metric: str) -> dict[str, float]:
        return {doc_id: scores[metric] for doc_id, scores in self.per_doc.items()}

    def to_json(self, metric: str) -> dict:
        return {
            "system": self.system,
            "seed": self.seed,
            "metric": metric,
            "per_doc": dict(sorted(self.doc_scores(metric).items())),
            "mean": self.means[metric],
        }


def average_reports(reports: Sequence[ScoreReport], system: str) -> ScoreReport:
    """Average per-document scores across seeds (document-level mean).

    All reports must cover the same documents and metrics.
    """
    if not reports:
        raise ValueError("average_reports: no reports")
    ids = set(reports[0].per_doc)
    for r in reports[1:]:
        if set(r.per_doc) != ids:
            raise ValueError("average_reports: reports cover different documents")
    per_doc = {
        doc_id: {
            m: sum(r.per_doc[doc_id][m] for r in reports) / len(reports)
            for m in reports[0].per_doc[doc_id]
        }
        for doc_id in reports[0].per_doc
    }
    return ScoreReport(system=system, seed=None, per_doc=per_doc)


# -- significance --------------------------------------------------------------


def approx_randomization_test(scores_a: Sequence[float], scores_b: Sequence[float],
                              trials: int, alpha: float, num_comparisons: int,
                              seed) -> tuple[float, bool]:
    """Paired approximate randomization test on per-document scores.

    Observed statistic is |mean(a) - mean(b)|. Each trial swaps every pair
    independently with probability one half; p = (1 + #{trial stat >=
    observed}) / (1 + trials). Significance applies the Bonferroni-adjusted
    threshold alpha / num_comparisons (strict inequality).
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError(f"score vectors must be equal-length and non-empty, "
                         f"got {a.shape} and {b.shape}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if num_comparisons < 1:
        raise ValueError("num_comparisons must be >= 1")
    diff = a - b
    observed = abs(diff.mean())
    rng = np.random.default_rng(seed)
    exceed = 0
    chunk = 20000
    for start in range(0, trials, chunk):
        m = min(chunk, trials - start)
        signs = np.where(rng.random((m, diff.size)) < 0.5, -1.0, 1.0)
        stats = np.abs((signs * diff).mean(axis=1))
        exceed += int(np.count_nonzero(stats >= observed))
    p = (1 + exceed) / (1 + trials)
    return p, p < alpha / num_comparisons

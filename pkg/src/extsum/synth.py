"""Synthetic corpora with controllable positional and content signals.

Every sentence is a block of signal tokens followed by filler tokens, drawn
from disjoint vocabularies. Each document's reference summary copies the
signal blocks of a few source sentences; where those sources sit is
controlled by lead_bias, the probability that a source is drawn from the
first quarter of the document. All draws derive from (seed, doc index), so
generation is order-independent and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import Document, PosClass, Sentence, Split, Token


@dataclass(frozen=True)
class SynthSpec:
    num_docs: int
    sentences_per_doc: int
    tokens_per_sentence: int
    lead_bias: float
    vocab_size: int
    seed: int
    content_class: PosClass = PosClass.NOUN
    summary_sentences: int = 2
    # fraction of each sentence that carries the copyable signal
    signal_token_frac: float = 0.5
    split: Split = Split.TRAIN
    id_prefix: str = "synth"

    def __post_init__(self):
        for name in ("num_docs", "sentences_per_doc", "tokens_per_sentence",
                     "vocab_size", "summary_sentences"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.lead_bias <= 1.0:
            raise ValueError("lead_bias must lie in [0, 1]")
        if not 0.0 < self.signal_token_frac <= 1.0:
            raise ValueError("signal_token_frac must lie in (0, 1]")
        if self.summary_sentences > self.sentences_per_doc:
            raise ValueError("summary_sentences cannot exceed sentences_per_doc")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must allow disjoint signal and filler sets")
        if self.lead_bias == 1.0 and self.summary_sentences > first_quarter_size(
                self.sentences_per_doc):
            raise ValueError("lead_bias 1.0 cannot place that many sources in "
                             "the first quarter")

    @property
    def signal_count(self) -> int:
        return max(1, round(self.tokens_per_sentence * self.signal_token_frac))


def first_quarter_size(n_sentences: int) -> int:
    return max(1, math.ceil(n_sentences / 4))


def _vocabs(spec: SynthSpec) -> tuple[list[str], list[str]]:
    n_signal = spec.vocab_size // 2
    n_filler = spec.vocab_size - n_signal
    width = len(str(spec.vocab_size))
    signal = [f"c{j:0{width}d}" for j in range(n_signal)]
    filler = [f"f{j:0{width}d}" for j in range(n_filler)]
    return signal, filler


def _choose_sources(n: int, spec: SynthSpec, rng: np.random.Generator) -> list[int]:
    """Distinct source positions; each pick prefers the first quarter with
    probability lead_bias, falling back to any remaining position."""
    quarter = set(range(first_quarter_size(n)))
    available = set(range(n))
    chosen: list[int] = []
    for _ in range(spec.summary_sentences):
        lead_pool = sorted(available & quarter)
        if rng.random() < spec.lead_bias and lead_pool:
            pool = lead_pool
        else:
            pool = sorted(available)
        pick = int(pool[rng.integers(len(pool))])
        chosen.append(pick)
        available.remove(pick)
    return sorted(chosen)


def _generate(spec: SynthSpec, doc_index: int) -> tuple[Document, list[int]]:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, doc_index]))
    signal_vocab, filler_vocab = _vocabs(spec)
    n_sig = spec.signal_count
    n_fill = spec.tokens_per_sentence - n_sig
    sentences = []
    signal_blocks = []
    for _ in range(spec.sentences_per_doc):
        sig = [signal_vocab[rng.integers(len(signal_vocab))] for _ in range(n_sig)]
        fill = [filler_vocab[rng.integers(len(filler_vocab))] for _ in range(n_fill)]
        signal_blocks.append(sig)
        tokens = tuple(Token(w, spec.content_class) for w in sig) + tuple(
            Token(w, PosClass.FUNCTION) for w in fill)
        sentences.append(Sentence(tokens))
    sources = _choose_sources(spec.sentences_per_doc, spec, rng)
    reference = tuple(w for i in sources for w in signal_blocks[i])
    doc = Document(id=f"{spec.id_prefix}-{doc_index:05d}",
                   sentences=tuple(sentences),
                   references=(reference,),
                   split=spec.split)
    return doc, sources


def generate_document(spec: SynthSpec, doc_index: int) -> Document:
    return _generate(spec, doc_index)[0]


def planted_sources(spec: SynthSpec, doc_index: int) -> list[int]:
    """The sentence positions whose signal blocks form the reference."""
    return _generate(spec, doc_index)[1]


def generate_corpus(spec: SynthSpec) -> list[Document]:
    return [generate_document(spec, i) for i in range(spec.num_docs)]

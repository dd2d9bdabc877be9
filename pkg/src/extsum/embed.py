"""Word vectors: pretrained-file loading, vocabularies, sentence lookup.

Two policies. Fixed keeps vectors frozen and maps any out-of-table token to
the zero vector. Learned turns the table into a trainable parameter over a
frequency-thresholded vocabulary, with a dedicated trainable UNK row for
everything below the threshold. Ablated tokens map to the zero vector under
both policies.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .autodiff import Tape, Tensor, xavier_init
from .corpus import Document, Sentence, UNK_TOKEN


class EmbeddingError(ValueError):
    pass


class EmbeddingPolicy(Enum):
    FIXED = "fixed"
    LEARNED = "learned"


class UnkRule(Enum):
    ZERO_VECTOR = "zero_vector"
    LEARNED_UNK = "learned_unk"


@dataclass
class EmbeddingTable:
    """Token -> row lookup backed by one (V+1, dim) matrix; row 0 is UNK.

    Under Fixed policy the matrix is frozen and row 0 is all zeros, so
    unknown tokens embed as zero vectors. Under Learned policy the matrix is
    a trainable Tensor and row 0 is the learned UNK embedding.
    """

    dim: int
    index: dict[str, int]
    matrix: Tensor
    policy: EmbeddingPolicy
    unk_rule: UnkRule
    min_count: int = 3

    def __post_init__(self):
        if self.matrix.shape != (len(self.index) + 1, self.dim):
            raise EmbeddingError(
                f"matrix shape {self.matrix.shape} does not match "
                f"{len(self.index)} tokens + UNK at dim {self.dim}")
        if self.policy is EmbeddingPolicy.FIXED and self.unk_rule is not UnkRule.ZERO_VECTOR:
            raise EmbeddingError("Fixed policy requires the zero-vector UNK rule")
        if self.policy is EmbeddingPolicy.LEARNED and self.unk_rule is not UnkRule.LEARNED_UNK:
            raise EmbeddingError("Learned policy requires the learned-UNK rule")

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __len__(self) -> int:
        return len(self.index)

    def row_of(self, token: str) -> int:
        return self.index.get(token, 0)

    def vector(self, token: str) -> np.ndarray:
        return self.matrix.data[self.row_of(token)].copy()

    def params(self) -> dict[str, Tensor]:
        if self.policy is EmbeddingPolicy.LEARNED:
            return {"embedding.matrix": self.matrix}
        return {}


def load_pretrained_embeddings(path, dim: int) -> EmbeddingTable:
    """Parse a plain-text vector file: `token v1 ... v_dim` per line.

    Duplicate tokens keep the first occurrence. The resulting table is
    Fixed / zero-vector-UNK.
    """
    if dim < 1:
        raise EmbeddingError(f"dim must be positive, got {dim}")
    index: dict[str, int] = {}
    rows = [np.zeros(dim)]
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingError(
                    f"{path}:{lineno}: expected token + {dim} values, "
                    f"got {len(parts)} fields")
            token = parts[0]
            if not token:
                raise EmbeddingError(f"{path}:{lineno}: empty token")
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise EmbeddingError(f"{path}:{lineno}: non-numeric value: {exc}") from exc
            if token in index:
                continue
            index[token] = len(rows)
            rows.append(vec)
    matrix = Tensor(np.stack(rows))
    return EmbeddingTable(dim=dim, index=index, matrix=matrix,
                          policy=EmbeddingPolicy.FIXED, unk_rule=UnkRule.ZERO_VECTOR)


def save_embeddings(path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for token, row in table.index.items():
            values = " ".join(repr(float(v)) for v in table.matrix.data[row])
            fh.write(f"{token} {values}\n")


def build_vocab(training_docs: Sequence[Document], min_count: int) -> dict[str, int]:
    """Tokens with training-split occurrence count >= min_count, plus UNK.

    Returns a dense index map with UNK at 0 and the surviving tokens in
    sorted order (deterministic across runs).
    """
    if not training_docs:
        raise EmbeddingError("build_vocab: empty document list")
    if min_count < 1:
        raise EmbeddingError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for doc in training_docs:
        for sent in doc.sentences:
            counts.update(t.surface for t in sent.tokens)
    kept = sorted(tok for tok, c in counts.items() if c >= min_count)
    vocab = {UNK_TOKEN: 0}
    for tok in kept:
        vocab[tok] = len(vocab)
    return vocab


def learned_embedding_table(vocab: dict[str, int], dim: int, seed,
                            pretrained: EmbeddingTable | None = None,
                            min_count: int = 3) -> EmbeddingTable:
    """Trainable table over `vocab`; pretrained rows copied where available.

    Rows without a pretrained vector (UNK always included) come from the
    Xavier-normal draw over the full matrix shape.
    """
    if UNK_TOKEN not in vocab or vocab[UNK_TOKEN] != 0:
        raise EmbeddingError("vocab must map UNK_TOKEN to index 0")
    index = {tok: i for tok, i in vocab.items() if tok != UNK_TOKEN}
    matrix = xavier_init((len(vocab), dim), seed)
    if pretrained is not None:
        if pretrained.dim != dim:
            raise EmbeddingError(
                f"pretrained dim {pretrained.dim} != requested dim {dim}")
        for tok, i in index.items():
            if tok in pretrained:
                matrix.data[i] = pretrained.matrix.data[pretrained.index[tok]]
    return EmbeddingTable(dim=dim, index=index, matrix=matrix,
                          policy=EmbeddingPolicy.LEARNED, unk_rule=UnkRule.LEARNED_UNK,
                          min_count=min_count)


def sentence_indices(sent: Sentence, table: EmbeddingTable) -> tuple[np.ndarray, np.ndarray]:
    """(row indices, keep mask) for one sentence; ablated tokens get keep=0."""
    idx = np.array([table.row_of(t.surface) for t in sent.tokens], dtype=np.int64)
    keep = np.array([0.0 if t.ablated else 1.0 for t in sent.tokens])
    return idx, keep


def lookup_sentence_embeddings(sent: Sentence, table: EmbeddingTable) -> np.ndarray:
    """|s| x dim matrix of current embedding rows (pure numpy read)."""
    idx, keep = sentence_indices(sent, table)
    return table.matrix.data[idx] * keep[:, None]


def embed_indices(tape: Tape, table: EmbeddingTable, indices: np.ndarray,
                  keep: np.ndarray) -> Tensor:
    """Embedding lookup for padded index arrays, on-tape when learnable.

    `indices` has any shape (...,); `keep` broadcasts against the output
    (..., dim) and zeroes ablated/padded positions. Under Fixed policy the
    result is a constant; under Learned policy gradients flow back into the
    table rows (never into keep-masked positions).
    """
    if table.policy is EmbeddingPolicy.LEARNED:
        gathered = tape.gather_rows(table.matrix, indices)
    else:
        gathered = Tensor(table.matrix.data[indices])
    return tape.mul(gathered, Tensor(keep))

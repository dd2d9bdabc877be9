"""Document data model, JSONL dataset IO, and corpus transforms.

A document is an ordered list of tokenized sentences plus one or more
reference summaries. Tokens carry a coarse part-of-speech class so word-class
ablation can mark them; marked tokens later embed as zero vectors while
keeping their surface, position, and sentence length.

Dataset files are UTF-8, LF-terminated JSON Lines, one document per line:

    {"id": "...",
     "sentences": [[{"t": "word", "p": "N"}, ...], ...],
     "references": [["word", ...], ...]}

`"p"` is one of N/V/A/F/O/U (noun, verb, adj+adv, function, other,
untagged) and defaults to "U". Two optional extensions round-trip: a token
`"a": true` flag (ablated) and a document `"labels": [0, 1, ...]` array
holding one extract label per sentence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

UNK_TOKEN = "<unk>"


class DatasetError(ValueError):
    """Malformed dataset content; message carries file line / document id."""


class PosClass(Enum):
    NOUN = "N"
    VERB = "V"
    ADJ_ADV = "A"
    FUNCTION = "F"
    OTHER = "O"
    UNTAGGED = "U"


class Split(Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


@dataclass(frozen=True)
class Token:
    surface: str
    pos_class: PosClass = PosClass.UNTAGGED
    ablated: bool = False

    def __post_init__(self):
        if not self.surface.strip():
            raise DatasetError("token surface must be non-empty")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise DatasetError("sentence must contain at least one token")

    @property
    def word_count(self) -> int:
        return len(self.tokens)

    def words(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)


@dataclass(frozen=True)
class Document:
    id: str
    sentences: tuple[Sentence, ...]
    references: tuple[tuple[str, ...], ...]
    split: Split = Split.TRAIN
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.sentences:
            raise DatasetError(f"document {self.id!r} has no sentences")
        if not self.references:
            raise DatasetError(f"document {self.id!r} has no references")
        if self.labels is not None:
            if len(self.labels) != len(self.sentences):
                raise DatasetError(
                    f"document {self.id!r}: {len(self.labels)} labels for "
                    f"{len(self.sentences)} sentences")
            if any(v not in (0, 1) for v in self.labels):
                raise DatasetError(f"document {self.id!r}: labels must be 0 or 1")

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)

    def sentence_words(self) -> list[list[str]]:
        return [s.words() for s in self.sentences]

    def with_labels(self, labels: Sequence[int]) -> "Document":
        if len(labels) != len(self.sentences):
            raise DatasetError(
                f"document {self.id!r}: {len(labels)} labels for "
                f"{len(self.sentences)} sentences")
        return replace(self, labels=tuple(int(v) for v in labels))


@dataclass(frozen=True)
class BudgetConfig:
    """Summary word budget c."""

    budget_words: int

    def __post_init__(self):
        if self.budget_words < 1:
            raise ValueError(f"budget_words must be >= 1, got {self.budget_words}")


def sentence(words: Iterable[str], pos: Iterable[PosClass] | None = None) -> Sentence:
    """Convenience constructor from plain strings."""
    words = list(words)
    if pos is None:
        pos = [PosClass.UNTAGGED] * len(words)
    return Sentence(tuple(Token(w, p) for w, p in zip(words, pos, strict=True)))


def document(doc_id: str, sentences_words: Sequence[Sequence[str]],
             references: Sequence[Sequence[str]],
             split: Split = Split.TRAIN) -> Document:
    return Document(doc_id,
                    tuple(sentence(ws) for ws in sentences_words),
                    tuple(tuple(r) for r in references),
                    split=split)


# -- serialization -------------------------------------------------------------

_POS_BY_CODE = {p.value: p for p in PosClass}


def _token_from_json(obj, where: str) -> Token:
    if not isinstance(obj, dict) or "t" not in obj:
        raise DatasetError(f"{where}: token must be an object with key 't'")
    surface = obj["t"]
    if not isinstance(surface, str) or not surface.strip():
        raise DatasetError(f"{where}: token surface must be a non-empty string")
    code = obj.get("p", "U")
    if code not in _POS_BY_CODE:
        raise DatasetError(f"{where}: unknown pos class {code!r}")
    return Token(surface, _POS_BY_CODE[code], ablated=bool(obj.get("a", False)))


def _document_from_json(obj, where: str, split: Split) -> Document:
    if not isinstance(obj, dict):
        raise DatasetError(f"{where}: document line must be a JSON object")
    for key in ("id", "sentences", "references"):
        if key not in obj:
            raise DatasetError(f"{where}: missing key {key!r}")
    doc_id = obj["id"]
    if not isinstance(doc_id, str) or not doc_id:
        raise DatasetError(f"{where}: id must be a non-empty string")
    where = f"{where} (id={doc_id!r})"
    if not isinstance(obj["sentences"], list) or not obj["sentences"]:
        raise DatasetError(f"{where}: 'sentences' must be a non-empty list")
    sentences = []
    for si, sent in enumerate(obj["sentences"]):
        if not isinstance(sent, list) or not sent:
            raise DatasetError(f"{where}: sentence {si} must be a non-empty list")
        sentences.append(Sentence(tuple(
            _token_from_json(tok, f"{where} sentence {si}") for tok in sent)))
    if not isinstance(obj["references"], list) or not obj["references"]:
        raise DatasetError(f"{where}: 'references' must be a non-empty list")
    references = []
    for ri, ref in enumerate(obj["references"]):
        if not isinstance(ref, list) or not ref or not all(
                isinstance(w, str) and w for w in ref):
            raise DatasetError(
                f"{where}: reference {ri} must be a non-empty list of words")
        references.append(tuple(ref))
    labels = obj.get("labels")
    if labels is not None:
        if (not isinstance(labels, list) or len(labels) != len(sentences)
                or not all(v in (0, 1) for v in labels)):
            raise DatasetError(f"{where}: labels must be 0/1, one per sentence")
        labels = tuple(int(v) for v in labels)
    return Document(doc_id, tuple(sentences), tuple(references),
                    split=split, labels=labels)


def document_to_json(doc: Document) -> dict:
    obj = {
        "id": doc.id,
        "sentences": [
            [
                {"t": t.surface, "p": t.pos_class.value,
                 **({"a": True} if t.ablated else {})}
                for t in s.tokens
            ]
            for s in doc.sentences
        ],
        "references": [list(r) for r in doc.references],
    }
    if doc.labels is not None:
        obj["labels"] = list(doc.labels)
    return obj


def load_dataset(path, split: Split = Split.TRAIN) -> list[Document]:
    """Read a JSONL dataset, stamping every document with `split`.

    Raises DatasetError naming the offending line (and document id once
    known) on any malformed record.
    """
    docs = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            doc = _document_from_json(obj, f"{path}:{lineno}", split)
            if doc.id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate document id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


def save_dataset(path, docs: Iterable[Document]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(document_to_json(doc), ensure_ascii=False,
                                sort_keys=True, separators=(",", ":")))
            fh.write("\n")


# -- corpus transforms --------------------------------------------------------


def ablate_pos_class(doc: Document, classes: set[PosClass] | frozenset[PosClass]) -> Document:
    """Mark every token whose pos_class is in `classes` as ablated.

    Marked tokens keep their surface and position; the embedding layer maps
    them to zero vectors. Sentence boundaries and word counts never change.
    A fully untagged document cannot be ablated and raises.
    """
    if not classes:
        raise ValueError("ablate_pos_class: classes must be non-empty")
    if all(t.pos_class is PosClass.UNTAGGED
           for s in doc.sentences for t in s.tokens):
        raise DatasetError(
            f"document {doc.id!r}: all tokens untagged; ablation requires pos tags")
    new_sentences = tuple(
        Sentence(tuple(
            replace(t, ablated=True) if t.pos_class in classes else t
            for t in s.tokens))
        for s in doc.sentences)
    return replace(doc, sentences=new_sentences)


def shuffle_document(doc: Document, seed) -> Document:
    """Permute sentence order; labels travel with their sentences.

    `seed` is an integer (or anything np.random.default_rng accepts), so
    one seed per (document, run) keeps the shuffle fixed and reproducible.
    References are untouched.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(doc.n_sentences)
    sentences = tuple(doc.sentences[i] for i in perm)
    labels = None
    if doc.labels is not None:
        labels = tuple(doc.labels[i] for i in perm)
    return replace(doc, sentences=sentences, labels=labels)

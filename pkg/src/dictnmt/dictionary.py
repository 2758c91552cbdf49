"""Bilingual dictionaries, word embeddings, and word-to-word translation.

A sentence is translated token by token: words found in the dictionary are
replaced by a target-language candidate, words that are not are passed
through unchanged and act as noise in the target space. Polysemous entries
are resolved by cosine similarity between each candidate and the translation
chosen for the nearest preceding in-dictionary token.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FormatError

logger = logging.getLogger(__name__)


class Provenance(Enum):
    """How a token of an intermediate sequence was produced."""

    TRANSLATED = "translated"
    PASSTHROUGH = "passthrough"


@dataclass(frozen=True)
class BilingualDictionary:
    """One-to-many word map from a source language to a target language.

    ``entries`` is keyed by lowercased source word; each value is a
    non-empty, duplicate-free candidate list in file order.
    """

    entries: dict[str, list[str]]
    source_lang: str
    target_lang: str

    def lookup(self, word: str) -> list[str] | None:
        """Candidate translations for ``word`` (case-insensitive), or None."""
        return self.entries.get(word.lower())

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class WordEmbeddings:
    """Dense word vectors for the target language."""

    dim: int
    vectors: dict[str, np.ndarray]

    def get(self, word: str) -> np.ndarray | None:
        return self.vectors.get(word)

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True)
class IntermediateSequence:
    """A word-to-word translation of one source sentence.

    Token count always equals the source token count; each token records
    whether it came from the dictionary or was passed through as noise.
    """

    tokens: list[tuple[str, Provenance]]
    source_sentence: list[str]

    def surfaces(self) -> list[str]:
        return [surface for surface, _ in self.tokens]

    def text(self) -> str:
        return " ".join(self.surfaces())

    def passthrough_indices(self) -> list[int]:
        return [
            i
            for i, (_, prov) in enumerate(self.tokens)
            if prov is Provenance.PASSTHROUGH
        ]

    def __len__(self) -> int:
        return len(self.tokens)


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def split_tokens(text: str) -> list[str]:
    """Split on whitespace, detaching leading/trailing punctuation.

    Punctuation marks become their own tokens so that dictionary lookups see
    bare words; interior punctuation (hyphens, apostrophes) is left alone.
    """
    tokens: list[str] = []
    for chunk in text.split():
        head: list[str] = []
        tail: list[str] = []
        while chunk and _is_punctuation(chunk[0]):
            head.append(chunk[0])
            chunk = chunk[1:]
        while chunk and _is_punctuation(chunk[-1]):
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(head)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(tail))
    return tokens


def load_dictionary(path, src: str, tgt: str) -> BilingualDictionary:
    """Load a MUSE-style dictionary: one ``source target`` pair per line.

    Repeated source words accumulate polysemous candidates in line order.
    Exact duplicate pairs are skipped (logged) so candidate lists stay
    duplicate-free.
    """
    entries: dict[str, list[str]] = {}
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 2:
                raise FormatError(
                    path,
                    line_number,
                    f"expected 2 whitespace-separated fields, got {len(fields)}",
                )
            source, target = fields
            candidates = entries.setdefault(source.lower(), [])
            if target in candidates:
                duplicates += 1
                continue
            candidates.append(target)
    if not entries:
        raise FormatError(path, 0, "dictionary file contains no entries")
    if duplicates:
        logger.warning("%s: skipped %d duplicate pairs", path, duplicates)
    return BilingualDictionary(entries=entries, source_lang=src, target_lang=tgt)


def load_embeddings(path) -> WordEmbeddings:
    """Load fastText-style text embeddings: header ``count dim``, then rows."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise FormatError(path, 1, "expected header line '<count> <dim>'")
        try:
            declared_count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError(path, 1, "header fields must be integers") from None
        if dim <= 0:
            raise FormatError(path, 1, f"dimensionality must be positive, got {dim}")
        for line_number, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            parts = raw.rstrip("\n").split(" ")
            word, values = parts[0], [p for p in parts[1:] if p]
            if len(values) != dim:
                raise FormatError(
                    path,
                    line_number,
                    f"expected {dim} vector components, got {len(values)}",
                )
            if word in vectors:
                logger.warning("%s:%d: duplicate word %r, keeping first", path, line_number, word)
                continue
            vectors[word] = np.array(values, dtype=np.float64)
    if declared_count != len(vectors):
        logger.warning(
            "%s: header declares %d vectors, parsed %d", path, declared_count, len(vectors)
        )
    return WordEmbeddings(dim=dim, vectors=vectors)


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    Zero-norm inputs score -inf so they can never win a similarity ranking.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return float("-inf")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def resolve_polysemy(
    candidates: list[str],
    anchor: str | None,
    emb: WordEmbeddings,
    rng: np.random.Generator,
) -> str:
    """Pick one candidate translation.

    With a usable anchor (a word that has an embedding), the candidate most
    cosine-similar to it wins, ties broken by list order. Without one, a
    uniformly random candidate is drawn. A single candidate is returned
    as-is without consuming randomness.
    """
    if not candidates:
        raise ValueError("candidate list must be non-empty")
    if len(candidates) == 1:
        return candidates[0]
    anchor_vec = emb.get(anchor) if anchor is not None else None
    if anchor_vec is None:
        return candidates[int(rng.integers(len(candidates)))]
    best = candidates[0]
    best_score = _candidate_score(candidates[0], anchor_vec, emb)
    for candidate in candidates[1:]:
        score = _candidate_score(candidate, anchor_vec, emb)
        if score > best_score:
            best, best_score = candidate, score
    return best


def _candidate_score(candidate: str, anchor_vec: np.ndarray, emb: WordEmbeddings) -> float:
    vec = emb.get(candidate)
    if vec is None:
        return float("-inf")
    return cosine_similarity(anchor_vec, vec)


def translate_sentence(
    sentence: list[str],
    dictionary: BilingualDictionary,
    emb: WordEmbeddings,
    rng: np.random.Generator,
) -> IntermediateSequence:
    """Word-to-word translate ``sentence`` into an intermediate sequence.

    Out-of-dictionary tokens pass through unchanged (noise in the target
    space). The polysemy anchor is the chosen translation of the nearest
    preceding in-dictionary token.
    """
    if not sentence:
        raise ValueError("sentence must be non-empty")
    tokens: list[tuple[str, Provenance]] = []
    anchor: str | None = None
    for word in sentence:
        candidates = dictionary.lookup(word)
        if candidates is None:
            tokens.append((word, Provenance.PASSTHROUGH))
        else:
            choice = resolve_polysemy(candidates, anchor, emb, rng)
            tokens.append((choice, Provenance.TRANSLATED))
            anchor = choice
    return IntermediateSequence(tokens=tokens, source_sentence=list(sentence))


def coverage(sentence: list[str], dictionary: BilingualDictionary) -> float:
    """Fraction of tokens having a dictionary translation."""
    if not sentence:
        raise ValueError("coverage is undefined for an empty sentence")
    hits = sum(1 for word in sentence if word in dictionary)
    return hits / len(sentence)

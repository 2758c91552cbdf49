"""Parallel corpora and coverage-filtered training set construction.

The training set builder walks every (source, target) pair of every corpus,
word-to-word translates the source side, keeps the pair when the source's
dictionary coverage reaches the threshold p, and finally shuffles the union.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .dictionary import (
    BilingualDictionary,
    IntermediateSequence,
    Provenance,
    WordEmbeddings,
    coverage,
    split_tokens,
    translate_sentence,
)
from .errors import AlignmentError, ConfigurationError
from .seeding import rng_for

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParallelCorpus:
    """Line-aligned sentence pairs, both sides tokenized."""

    pairs: list[tuple[list[str], list[str]]]
    src_lang: str
    tgt_lang: str

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class DictDataset:
    """Shuffled (intermediate sequence, target sentence) training pairs.

    ``provenance[i]`` records which language and original corpus index pair
    ``i`` came from, so experiment bookkeeping (and zero-shot hygiene
    checks) can trace every example.
    """

    pairs: list[tuple[IntermediateSequence, list[str]]]
    threshold_p: float
    provenance: list[tuple[str, int]]

    def __len__(self) -> int:
        return len(self.pairs)

    def languages(self) -> set[str]:
        return {lang for lang, _ in self.provenance}


@dataclass(frozen=True)
class CoverageBucket:
    """Pairs whose source coverage lies in [lower, upper) (last bucket closed)."""

    lower: float
    upper: float
    pairs: list[tuple[list[str], list[str]]]

    def __len__(self) -> int:
        return len(self.pairs)


def load_parallel(src_path, tgt_path, src_lang: str = "src", tgt_lang: str = "tgt") -> ParallelCorpus:
    """Load two line-aligned text files into a tokenized parallel corpus.

    Pairs with an empty side are dropped (count logged); a line-count
    mismatch is an alignment error.
    """
    with open(src_path, encoding="utf-8") as fh:
        src_lines = fh.read().splitlines()
    with open(tgt_path, encoding="utf-8") as fh:
        tgt_lines = fh.read().splitlines()
    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(
            f"line count mismatch: {src_path} has {len(src_lines)} lines, "
            f"{tgt_path} has {len(tgt_lines)}"
        )
    pairs = []
    dropped = 0
    for src_line, tgt_line in zip(src_lines, tgt_lines):
        src_tokens = split_tokens(src_line)
        tgt_tokens = split_tokens(tgt_line)
        if not src_tokens or not tgt_tokens:
            dropped += 1
            continue
        pairs.append((src_tokens, tgt_tokens))
    if dropped:
        logger.info("%s/%s: dropped %d pairs with an empty side", src_path, tgt_path, dropped)
    return ParallelCorpus(pairs=pairs, src_lang=src_lang, tgt_lang=tgt_lang)


def filter_by_length(corpus: ParallelCorpus, max_tokens: int) -> ParallelCorpus:
    """Keep pairs where both sides have at most ``max_tokens`` tokens."""
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    kept = [
        (src, tgt)
        for src, tgt in corpus.pairs
        if len(src) <= max_tokens and len(tgt) <= max_tokens
    ]
    dropped = len(corpus.pairs) - len(kept)
    if dropped:
        logger.info(
            "%s-%s: length filter (<=%d) dropped %d of %d pairs",
            corpus.src_lang, corpus.tgt_lang, max_tokens, dropped, len(corpus.pairs),
        )
    return ParallelCorpus(pairs=kept, src_lang=corpus.src_lang, tgt_lang=corpus.tgt_lang)


def create_dataset(
    corpora: list[ParallelCorpus],
    dicts: list[BilingualDictionary],
    emb: WordEmbeddings,
    p: float,
    rng: np.random.Generator,
) -> DictDataset:
    """Build the coverage-filtered, shuffled training set.

    Every source sentence is word-to-word translated with its language's
    dictionary; the pair survives iff the raw source's dictionary coverage
    is >= p. Each sentence gets its own derived sub-seed so per-corpus
    translation order cannot perturb results.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"coverage threshold must lie in [0, 1], got {p}")
    if len(corpora) != len(dicts):
        raise ConfigurationError(
            f"{len(corpora)} corpora but {len(dicts)} dictionaries"
        )
    for corpus, dictionary in zip(corpora, dicts):
        if corpus.src_lang != dictionary.source_lang or corpus.tgt_lang != dictionary.target_lang:
            raise ConfigurationError(
                f"corpus {corpus.src_lang}-{corpus.tgt_lang} paired with "
                f"dictionary {dictionary.source_lang}-{dictionary.target_lang}"
            )
    translation_seed = int(rng.integers(2**63))
    pairs: list[tuple[IntermediateSequence, list[str]]] = []
    provenance: list[tuple[str, int]] = []
    for corpus_index, (corpus, dictionary) in enumerate(zip(corpora, dicts)):
        kept = 0
        for pair_index, (src, tgt) in enumerate(corpus.pairs):
            if coverage(src, dictionary) < p:
                continue
            sentence_rng = rng_for(translation_seed, corpus_index, pair_index)
            intermediate = translate_sentence(src, dictionary, emb, sentence_rng)
            pairs.append((intermediate, tgt))
            provenance.append((corpus.src_lang, pair_index))
            kept += 1
        logger.info(
            "%s-%s: %d of %d pairs pass coverage >= %.2f",
            corpus.src_lang, corpus.tgt_lang, kept, len(corpus.pairs), p,
        )
    order = rng.permutation(len(pairs))
    return DictDataset(
        pairs=[pairs[i] for i in order],
        threshold_p=p,
        provenance=[provenance[i] for i in order],
    )


def split(
    dataset: DictDataset, test_fraction: float, rng: np.random.Generator
) -> tuple[DictDataset, DictDataset]:
    """Disjoint, exhaustive, seeded-random train/test split."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(dataset.pairs)
    n_test = int(np.floor(test_fraction * n + 0.5))
    if n_test < 1:
        raise ValueError(
            f"test_fraction {test_fraction} of {n} pairs yields no test pairs"
        )
    if n_test >= n:
        raise ValueError(
            f"test_fraction {test_fraction} of {n} pairs leaves no training pairs"
        )
    order = rng.permutation(n)
    test_idx, train_idx = order[:n_test], order[n_test:]

    def _take(indices) -> DictDataset:
        return DictDataset(
            pairs=[dataset.pairs[i] for i in indices],
            threshold_p=dataset.threshold_p,
            provenance=[dataset.provenance[i] for i in indices],
        )

    return _take(train_idx), _take(test_idx)


def sample_equal(
    corpora: list[ParallelCorpus], total: int, rng: np.random.Generator
) -> list[ParallelCorpus]:
    """Subsample so each corpus contributes total//n pairs (remainder goes
    one each to the first corpora in listed order)."""
    if total < 1:
        raise ValueError("total must be positive")
    n = len(corpora)
    if n == 0:
        raise ValueError("need at least one corpus")
    base, remainder = divmod(total, n)
    sampled = []
    for i, corpus in enumerate(corpora):
        count = base + (1 if i < remainder else 0)
        if len(corpus.pairs) < count:
            raise ValueError(
                f"corpus {corpus.src_lang}-{corpus.tgt_lang} has "
                f"{len(corpus.pairs)} pairs, needs {count} "
                f"(short by {count - len(corpus.pairs)})"
            )
        idx = np.sort(rng.choice(len(corpus.pairs), size=count, replace=False))
        sampled.append(
            ParallelCorpus(
                pairs=[corpus.pairs[j] for j in idx],
                src_lang=corpus.src_lang,
                tgt_lang=corpus.tgt_lang,
            )
        )
    return sampled


def bucket_by_coverage(
    corpus: ParallelCorpus,
    dictionary: BilingualDictionary,
    thresholds: list[float],
) -> list[CoverageBucket]:
    """Partition a corpus into coverage bands [t_k, t_{k+1}).

    The final bucket is closed at 1.0; when thresholds[0] > 0 an implicit
    underflow bucket [0, thresholds[0]) leads the list so the buckets always
    partition the corpus.
    """
    if not thresholds:
        raise ValueError("need at least one threshold")
    if any(t1 >= t2 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise ValueError(f"thresholds must be strictly ascending, got {thresholds}")
    if thresholds[0] < 0.0 or thresholds[-1] > 1.0:
        raise ValueError(f"thresholds must lie within [0, 1], got {thresholds}")
    edges = list(thresholds)
    if edges[0] > 0.0:
        edges.insert(0, 0.0)
    buckets = [
        CoverageBucket(lower=lo, upper=hi, pairs=[])
        for lo, hi in zip(edges, edges[1:] + [1.0])
    ]
    for src, tgt in corpus.pairs:
        c = coverage(src, dictionary)
        for bucket in reversed(buckets):
            if c >= bucket.lower:
                bucket.pairs.append((src, tgt))
                break
    return buckets


def save_dataset(dataset: DictDataset, path, metadata: dict | None = None) -> None:
    """Write ``intermediate<TAB>target`` lines plus a JSON sidecar.

    The sidecar (``<path>.meta.json``) records the threshold, per-language
    counts, and per-pair provenance (language, original index, passthrough
    token positions, source tokens) so a dataset can be reloaded exactly.
    """
    path = str(path)
    per_language: dict[str, int] = {}
    records = []
    with open(path, "w", encoding="utf-8") as fh:
        for (intermediate, target), (lang, index) in zip(dataset.pairs, dataset.provenance):
            fh.write(f"{intermediate.text()}\t{' '.join(target)}\n")
            per_language[lang] = per_language.get(lang, 0) + 1
            records.append(
                {
                    "lang": lang,
                    "index": index,
                    "passthrough": intermediate.passthrough_indices(),
                    "source": intermediate.source_sentence,
                }
            )
    meta = {
        "threshold_p": dataset.threshold_p,
        "size": len(dataset.pairs),
        "per_language_counts": per_language,
        "pairs": records,
    }
    if metadata:
        meta.update(metadata)
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> DictDataset:
    """Reload a dataset written by :func:`save_dataset`."""
    path = str(path)
    with open(path + ".meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    pairs: list[tuple[IntermediateSequence, list[str]]] = []
    provenance: list[tuple[str, int]] = []
    with open(path, encoding="utf-8") as fh:
        for record, line in zip(meta["pairs"], fh):
            intermediate_text, _, target_text = line.rstrip("\n").partition("\t")
            surfaces = intermediate_text.split()
            passthrough = set(record["passthrough"])
            tokens = [
                (s, Provenance.PASSTHROUGH if i in passthrough else Provenance.TRANSLATED)
                for i, s in enumerate(surfaces)
            ]
            pairs.append(
                (
                    IntermediateSequence(tokens=tokens, source_sentence=record["source"]),
                    target_text.split(),
                )
            )
            provenance.append((record["lang"], record["index"]))
    if len(pairs) != meta["size"]:
        raise AlignmentError(
            f"{path}: metadata declares {meta['size']} pairs, file has {len(pairs)}"
        )
    return DictDataset(pairs=pairs, threshold_p=meta["threshold_p"], provenance=provenance)

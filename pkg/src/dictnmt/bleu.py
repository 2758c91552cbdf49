"""Corpus-level BLEU with the standard WMT defaults.

Matches the reference scorer's default pipeline: 13a tokenization,
corpus-wide clipped n-gram counts up to 4-grams, exponential smoothing of
zero precisions, and the closest-reference-length brevity penalty. Scores
are on the 0-100 scale.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass

from .corpus import ParallelCorpus
from .dictionary import BilingualDictionary, WordEmbeddings, translate_sentence

MAX_NGRAM_ORDER = 4

_LOG_ZERO = -9999999999


@dataclass(frozen=True)
class BleuReport:
    """Corpus BLEU plus the sufficient statistics behind it."""

    bleu: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    signature: str

    def to_dict(self) -> dict:
        return {
            "bleu": self.bleu,
            "precisions": list(self.precisions),
            "brevity_penalty": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
            "signature": self.signature,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def format(self) -> str:
        precisions = "/".join(f"{p:.1f}" for p in self.precisions)
        return (
            f"BLEU = {self.bleu:.1f} {precisions} "
            f"(BP = {self.brevity_penalty:.3f} hyp_len = {self.hyp_len} ref_len = {self.ref_len})"
        )


def tokenize_13a(text: str) -> list[str]:
    """The mteval-v13a tokenization used by WMT scorers.

    Splits punctuation and symbols away from words, except periods and
    commas sandwiched between digits; idempotent on its own output.
    """
    norm = text
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    norm = norm.replace("&quot;", '"')
    norm = norm.replace("&amp;", "&")
    norm = norm.replace("&lt;", "<")
    norm = norm.replace("&gt;", ">")
    norm = f" {norm} "
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    return norm.split()


def _ngram_counts(tokens: list[str], max_order: int = MAX_NGRAM_ORDER) -> Counter:
    counts: Counter = Counter()
    for order in range(1, max_order + 1):
        for i in range(len(tokens) - order + 1):
            counts[tuple(tokens[i : i + order])] += 1
    return counts


def _closest_ref_length(hyp_len: int, ref_lens: list[int]) -> int:
    """Reference length closest to the hypothesis (ties favor the shorter)."""
    return min(ref_lens, key=lambda r: (abs(hyp_len - r), r))


def corpus_bleu(hypotheses: list[str], references, tokenizer=tokenize_13a) -> BleuReport:
    """Score a corpus of hypothesis strings against reference strings.

    ``references`` is one reference string per hypothesis, or a list of
    reference lists (only single references are exercised here, but clipping
    and the brevity penalty honor multiple ones).
    """
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis/reference count mismatch: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise ValueError("need at least one hypothesis")

    correct = [0] * MAX_NGRAM_ORDER
    total = [0] * MAX_NGRAM_ORDER
    hyp_len = 0
    ref_len = 0
    num_refs = None
    for hyp, refs in zip(hypotheses, references):
        if isinstance(refs, str):
            refs = [refs]
        if num_refs is None:
            num_refs = len(refs)
        hyp_tokens = tokenizer(hyp)
        ref_token_lists = [tokenizer(ref) for ref in refs]
        hyp_len += len(hyp_tokens)
        ref_len += _closest_ref_length(len(hyp_tokens), [len(r) for r in ref_token_lists])
        ref_counts: Counter = Counter()
        for ref_tokens in ref_token_lists:
            for ngram, count in _ngram_counts(ref_tokens).items():
                ref_counts[ngram] = max(ref_counts[ngram], count)
        for ngram, count in _ngram_counts(hyp_tokens).items():
            order = len(ngram)
            total[order - 1] += count
            correct[order - 1] += min(count, ref_counts.get(ngram, 0))

    precisions = [0.0] * MAX_NGRAM_ORDER
    smooth = 1.0
    for n in range(1, MAX_NGRAM_ORDER + 1):
        if total[n - 1] == 0:
            break
        if correct[n - 1] == 0:
            smooth *= 2.0
            precisions[n - 1] = 100.0 / (smooth * total[n - 1])
        else:
            precisions[n - 1] = 100.0 * correct[n - 1] / total[n - 1]

    if hyp_len < ref_len:
        brevity_penalty = math.exp(1.0 - ref_len / hyp_len) if hyp_len > 0 else 0.0
    else:
        brevity_penalty = 1.0
    log_sum = sum(math.log(p) if p > 0.0 else _LOG_ZERO for p in precisions)
    score = brevity_penalty * math.exp(log_sum / MAX_NGRAM_ORDER)

    signature = f"corpus-bleu|nrefs:{num_refs}|case:mixed|eff:no|tok:13a|smooth:exp"
    return BleuReport(
        bleu=score,
        precisions=tuple(precisions),
        brevity_penalty=brevity_penalty,
        hyp_len=hyp_len,
        ref_len=ref_len,
        signature=signature,
    )


def score_intermediates(intermediate_texts: list[str], reference_texts: list[str]) -> BleuReport:
    """Corpus BLEU of raw intermediate sequences against references."""
    return corpus_bleu(intermediate_texts, reference_texts)


def word_for_word_baseline(
    test: ParallelCorpus,
    dictionary: BilingualDictionary,
    emb: WordEmbeddings,
    rng,
) -> BleuReport:
    """The dictionary baseline: score word-to-word translations directly."""
    hypotheses = []
    references = []
    for src, tgt in test.pairs:
        hypotheses.append(translate_sentence(src, dictionary, emb, rng).text())
        references.append(" ".join(tgt))
    return score_intermediates(hypotheses, references)

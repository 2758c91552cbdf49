"""dictnmt: bilingual-dictionary-assisted NMT for extremely low resource languages.

Pipeline: word-to-word translate source sentences through a bilingual
dictionary (embedding-guided polysemy resolution), filter training pairs by
dictionary coverage, train a compact transformer to repair the intermediate
sequences into fluent target text, and score with corpus BLEU.
"""

__version__ = "0.1.0"

from .dictionary import (
    BilingualDictionary,
    IntermediateSequence,
    Provenance,
    WordEmbeddings,
    cosine_similarity,
    coverage,
    load_dictionary,
    load_embeddings,
    resolve_polysemy,
    split_tokens,
    translate_sentence,
)
from .corpus import (
    CoverageBucket,
    DictDataset,
    ParallelCorpus,
    bucket_by_coverage,
    create_dataset,
    filter_by_length,
    load_dataset,
    load_parallel,
    sample_equal,
    save_dataset,
    split,
)
from .tokenizer import (
    TokenizedText,
    Vocabulary,
    build_vocab,
    decode,
    encode,
    load_vocab,
    wordpiece_tokenize,
)

__all__ = [
    "BilingualDictionary",
    "CoverageBucket",
    "DictDataset",
    "IntermediateSequence",
    "ParallelCorpus",
    "Provenance",
    "TokenizedText",
    "Vocabulary",
    "WordEmbeddings",
    "bucket_by_coverage",
    "build_vocab",
    "cosine_similarity",
    "coverage",
    "create_dataset",
    "decode",
    "encode",
    "filter_by_length",
    "load_dataset",
    "load_dictionary",
    "load_embeddings",
    "load_parallel",
    "load_vocab",
    "resolve_polysemy",
    "sample_equal",
    "save_dataset",
    "split",
    "split_tokens",
    "translate_sentence",
    "wordpiece_tokenize",
]

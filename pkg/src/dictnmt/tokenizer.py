"""Shared subword tokenizer (WordPiece, greedy longest-match-first).

One vocabulary serves both model input and output: intermediate sequences
and target sentences live in the same language space, and foreign
passthrough words simply fall apart into subword pieces instead of a single
out-of-vocabulary token.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dictionary import split_tokens
from .errors import DictNmtError

CONTINUATION_PREFIX = "##"
MAX_WORD_CHARS = 100

DEFAULT_SPECIALS = {"pad": "[PAD]", "unk": "[UNK]", "bos": "[CLS]", "eos": "[SEP]"}


class VocabularyError(DictNmtError):
    """A vocabulary file is malformed or lacks required special tokens."""


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token list (id = position) with the four special ids."""

    tokens: list[str]
    pad_id: int
    unk_id: int
    bos_id: int
    eos_id: int
    lowercase: bool = True
    token_to_id: dict[str, int] = field(repr=False, default=None)  # filled in __post_init__

    def __post_init__(self):
        if self.token_to_id is None:
            object.__setattr__(
                self, "token_to_id", {tok: i for i, tok in enumerate(self.tokens)}
            )

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)


@dataclass(frozen=True)
class TokenizedText:
    """Vocabulary ids framed by bos at the front and eos at the end."""

    ids: list[int]

    def __len__(self) -> int:
        return len(self.ids)


def load_vocab(path, special_tokens: dict[str, str] | None = None, lowercase: bool = True) -> Vocabulary:
    """Load a BERT-style vocab.txt (one token per line, id = line index).

    ``special_tokens`` remaps the literal strings used for pad/unk/bos/eos;
    by default the stock BERT names [PAD]/[UNK]/[CLS]/[SEP] are expected.
    """
    specials = dict(DEFAULT_SPECIALS)
    if special_tokens:
        unknown = set(special_tokens) - set(specials)
        if unknown:
            raise VocabularyError(f"unknown special-token roles: {sorted(unknown)}")
        specials.update(special_tokens)
    tokens: list[str] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            token = raw.rstrip("\n")
            if not token:
                continue
            if token in seen:
                raise VocabularyError(
                    f"{path}: duplicate token {token!r} on lines {seen[token]} and {line_number}"
                )
            seen[token] = line_number
            tokens.append(token)
    if not tokens:
        raise VocabularyError(f"{path}: vocabulary file is empty")
    ids = {}
    for role, literal in specials.items():
        if literal not in seen:
            raise VocabularyError(
                f"{path}: missing special token {literal!r} for role {role!r}"
            )
        ids[role] = tokens.index(literal)
    return Vocabulary(
        tokens=tokens,
        pad_id=ids["pad"],
        unk_id=ids["unk"],
        bos_id=ids["bos"],
        eos_id=ids["eos"],
        lowercase=lowercase,
    )


def build_vocab(texts, lowercase: bool = True) -> Vocabulary:
    """Build a small character-complete vocabulary from raw text.

    Every seen word becomes a whole token and every seen character gets both
    a standalone and a continuation piece, so any word over the observed
    alphabet segments without the unknown token. Meant for synthetic-language
    experiments and tests; production runs load a published vocab file.
    """
    words: set[str] = set()
    chars: set[str] = set()
    for text in texts:
        items = split_tokens(text) if isinstance(text, str) else text
        for word in items:
            if lowercase:
                word = word.lower()
            words.add(word)
            chars.update(word)
    tokens = list(DEFAULT_SPECIALS.values())
    tokens.extend(sorted(chars))
    tokens.extend(CONTINUATION_PREFIX + c for c in sorted(chars))
    tokens.extend(sorted(w for w in words if len(w) > 1))
    return Vocabulary(
        tokens=tokens, pad_id=0, unk_id=1, bos_id=2, eos_id=3, lowercase=lowercase
    )


def wordpiece_tokenize(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first segmentation of a single word.

    Pieces after the first carry the ``##`` continuation prefix. If no piece
    matches at some position (or the word is absurdly long), the whole word
    collapses to the unknown token.
    """
    if not word or any(c.isspace() for c in word):
        raise ValueError(f"need a non-empty word without whitespace, got {word!r}")
    if len(word) > MAX_WORD_CHARS:
        return [vocab.tokens[vocab.unk_id]]
    pieces: list[str] = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = CONTINUATION_PREFIX + piece
            if piece in vocab:
                match = piece
                break
            end -= 1
        if match is None:
            return [vocab.tokens[vocab.unk_id]]
        pieces.append(match)
        start = end
    return pieces


def encode(text, vocab: Vocabulary) -> TokenizedText:
    """Tokenize text (a string or a pre-split word list) into framed ids."""
    if isinstance(text, str):
        words = split_tokens(text)
    else:
        words = list(text)
    ids = [vocab.bos_id]
    for word in words:
        if vocab.lowercase:
            word = word.lower()
        for piece in wordpiece_tokenize(word, vocab):
            ids.append(vocab.token_to_id[piece])
    ids.append(vocab.eos_id)
    return TokenizedText(ids=ids)


def decode(tokenized, vocab: Vocabulary) -> str:
    """Invert :func:`encode`: strip specials, fuse continuations, join words."""
    ids = tokenized.ids if isinstance(tokenized, TokenizedText) else list(tokenized)
    words: list[str] = []
    skip = {vocab.pad_id, vocab.bos_id, vocab.eos_id}
    for i in ids:
        if not 0 <= i < len(vocab.tokens):
            raise ValueError(f"token id {i} out of range for vocabulary of {len(vocab.tokens)}")
        if i in skip:
            continue
        piece = vocab.tokens[i]
        if piece.startswith(CONTINUATION_PREFIX) and words:
            words[-1] += piece[len(CONTINUATION_PREFIX):]
        else:
            words.append(piece)
    return " ".join(words)

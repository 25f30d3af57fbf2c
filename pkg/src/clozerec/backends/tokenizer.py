"""Self-contained WordPiece-style tokenizer for the bundled tiny MLM.

Basic tokenization lowercases and splits punctuation into standalone
tokens; known words map to single pieces, unknown words fall back to greedy
longest-match over character pieces (``##`` continuation prefix), then to
[UNK]. The vocabulary is built deterministically from the corpus so the
same inputs always yield the same ids.
"""

from __future__ import annotations

import unicodedata
from typing import Iterable

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
MASK_TOKEN = "[MASK]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN)

MAX_WORD_CHARS = 100


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def basic_tokenize(text: str) -> list[str]:
    """Lowercase and split into words, with punctuation chars standalone."""
    tokens: list[str] = []
    for word in text.lower().split():
        buf = ""
        for ch in word:
            if _is_punctuation(ch):
                if buf:
                    tokens.append(buf)
                    buf = ""
                tokens.append(ch)
            else:
                buf += ch
        if buf:
            tokens.append(buf)
    return tokens


class WordPieceVocab:
    """Deterministic vocabulary: specials, then sorted words, then char pieces."""

    def __init__(self, tokens: list[str]):
        if list(tokens[:len(SPECIAL_TOKENS)]) != list(SPECIAL_TOKENS):
            raise ValueError("vocabulary must start with the special tokens")
        self.tokens: list[str] = list(tokens)
        self.token_to_id: dict[str, int] = {
            tok: i for i, tok in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")

    @classmethod
    def build(cls, texts: Iterable[str],
              extra_tokens: Iterable[str] = ()) -> "WordPieceVocab":
        """Build from raw texts; ``extra_tokens`` forces whole-word entries
        (e.g. answer words that must stay single pieces)."""
        words: set[str] = set()
        for text in texts:
            words.update(basic_tokenize(text))
        for tok in extra_tokens:
            words.update(basic_tokenize(tok))
        chars: set[str] = set()
        for word in words:
            chars.update(word)
        pieces = sorted(words)
        char_pieces = sorted(chars) + [f"##{c}" for c in sorted(chars)]
        tokens = list(SPECIAL_TOKENS)
        seen = set(tokens)
        for tok in pieces + char_pieces:
            if tok not in seen:
                seen.add(tok)
                tokens.append(tok)
        return cls(tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id[token]

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def add(self, token: str) -> int:
        """Append a new token (used for virtual-token registration)."""
        if token in self.token_to_id:
            raise ValueError(f"token {token!r} already in vocabulary")
        self.tokens.append(token)
        self.token_to_id[token] = len(self.tokens) - 1
        return self.token_to_id[token]

    def wordpiece(self, word: str) -> list[str]:
        """Greedy longest-match decomposition of one basic token."""
        if word in self.token_to_id:
            return [word]
        if len(word) > MAX_WORD_CHARS:
            return [UNK_TOKEN]
        pieces: list[str] = []
        start = 0
        while start < len(word):
            end = len(word)
            piece = None
            while start < end:
                sub = word[start:end]
                if start > 0:
                    sub = "##" + sub
                if sub in self.token_to_id:
                    piece = sub
                    break
                end -= 1
            if piece is None:
                return [UNK_TOKEN]
            pieces.append(piece)
            start = end
        return pieces

    def encode_words(self, words: Iterable[str]) -> list[int]:
        """Basic-tokenize then wordpiece each word; returns piece ids."""
        ids: list[int] = []
        for word in words:
            for basic in basic_tokenize(word):
                for piece in self.wordpiece(basic):
                    ids.append(self.token_to_id[piece])
        return ids

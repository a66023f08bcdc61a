"""Whitespace tokenizer with a frequency-capped vocabulary.

Id 0 is reserved for the leading CLS position, id 1 for unknown words and
id 2 for the mask token used by the synthetic warm-up task. Encoded
sequences always start with CLS.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable

CLS_ID = 0
UNK_ID = 1
MASK_ID = 2
_SPECIALS = ("[CLS]", "[UNK]", "[MASK]")


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace split; shared by the vocabulary, the keyword
    miner and the synthetic data checks so word identities line up."""
    return text.lower().split()


class Tokenizer:
    def __init__(self, words: list[str]):
        self.id_to_word = list(_SPECIALS) + list(words)
        self.word_to_id = {w: i for i, w in enumerate(self.id_to_word)}

    @classmethod
    def from_full_vocab(cls, id_to_word: list[str]) -> "Tokenizer":
        """Rebuild from a persisted vocabulary (specials included)."""
        if list(id_to_word[: len(_SPECIALS)]) != list(_SPECIALS):
            raise ValueError(f"vocabulary must start with the reserved tokens {_SPECIALS}")
        return cls(list(id_to_word[len(_SPECIALS) :]))

    @classmethod
    def build(cls, texts: Iterable[str], max_vocab: int = 2000) -> "Tokenizer":
        """Keep the most frequent words (ties broken lexicographically)."""
        counts = Counter()
        for text in texts:
            counts.update(tokenize(text))
        budget = max(0, max_vocab - len(_SPECIALS))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:budget]
        return cls([w for w, _ in ranked])

    @property
    def vocab_size(self) -> int:
        return len(self.id_to_word)

    def encode(self, text: str) -> list[int]:
        """Token ids with the CLS id prepended; unknown words map to UNK."""
        return [CLS_ID] + [self.word_to_id.get(w, UNK_ID) for w in tokenize(text)]

    def token_ids(self, text: str) -> list[int]:
        """Ids of the words alone (no CLS), for embedding-space lookups."""
        return [self.word_to_id.get(w, UNK_ID) for w in tokenize(text)]

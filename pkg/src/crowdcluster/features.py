"""Hashed n-gram text features."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.feature_extraction.text import HashingVectorizer
from sklearn.preprocessing import normalize

from .errors import ConfigError


@dataclass(frozen=True)
class FeatureExtractor:
    """Word unigrams plus character n-grams hashed into one ``dimension``-sized space, L2-normalised."""

    dimension: int = 2**18
    word_ngrams: tuple[int, int] = (1, 1)
    char_ngrams: tuple[int, int] = (3, 5)
    lowercase: bool = True

    def __post_init__(self):
        object.__setattr__(self, "word_ngrams", tuple(self.word_ngrams))
        object.__setattr__(self, "char_ngrams", tuple(self.char_ngrams))
        if self.dimension < 2 or self.dimension & (self.dimension - 1):
            raise ConfigError(f"feature dimension must be a power of two, got {self.dimension}")

    def _vectorizers(self) -> list[HashingVectorizer]:
        common = dict(n_features=self.dimension, alternate_sign=False, norm=None, lowercase=self.lowercase)
        return [
            HashingVectorizer(analyzer="word", ngram_range=self.word_ngrams,
                              token_pattern=r"(?u)\b\w+\b", **common),
            HashingVectorizer(analyzer="char_wb", ngram_range=self.char_ngrams, **common),
        ]

    def transform(self, texts: Sequence[str]) -> sp.csr_matrix:
        texts = ["" if t is None else t for t in texts]
        x = sum(v.transform(texts) for v in self._vectorizers())
        x = normalize(sp.csr_matrix(x, dtype=np.float64), norm="l2", copy=False)
        x.sort_indices()
        return x

    def to_dict(self) -> dict:
        d = asdict(self)
        d["word_ngrams"] = list(self.word_ngrams)
        d["char_ngrams"] = list(self.char_ngrams)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureExtractor":
        return cls(
            dimension=int(data["dimension"]),
            word_ngrams=tuple(data["word_ngrams"]),
            char_ngrams=tuple(data["char_ngrams"]),
            lowercase=bool(data.get("lowercase", True)),
        )

"""Shallow text embeddings (bag-of-words, TF-IDF) and ingestion of external embedding files."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text):
    """Lowercased maximal alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


def token_spans(text):
    """``(start, end, token)`` for each token of ``text`` in order of appearance."""
    return [(m.start(), m.end(), m.group(0).lower()) for m in _TOKEN_RE.finditer(text)]


@dataclass(frozen=True)
class Vocabulary:
    """Token -> column map; ``tokens[i]`` is the token of column ``i``."""

    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})
        if len(self._index) != len(self.tokens):
            raise ValidationError("duplicate token in vocabulary")

    @property
    def size(self):
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def index(self, token):
        return self._index[token]

    def get(self, token, default=None):
        return self._index.get(token, default)


def build_vocab(texts, max_size=None, min_df=1):
    """Keep the ``max_size`` tokens with highest document frequency (``df >= min_df``).

    Ties are broken by the token string so the column order is deterministic.
    """
    texts = list(texts)
    if not texts:
        raise ValidationError("cannot build a vocabulary from zero texts")
    df = Counter()
    for text in texts:
        df.update(set(tokenize(text)))
    if not df:
        raise ValidationError("every text is empty after tokenization")
    ranked = sorted((tok for tok, c in df.items() if c >= min_df), key=lambda t: (-df[t], t))
    if max_size is not None:
        ranked = ranked[:max_size]
    if not ranked:
        raise ValidationError(f"no token reaches min_df={min_df}; vocabulary would be empty")
    return Vocabulary(ranked)


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Dense ``N x d`` node feature matrix tagged with where it came from."""

    values: np.ndarray
    provenance: str

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2:
            raise ValidationError(f"embedding must be 2-d, got shape {vals.shape}")
        bad = np.argwhere(~np.isfinite(vals))
        if len(bad):
            r, c = bad[0]
            raise ValidationError(f"non-finite value at ({r},{c})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def num_rows(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.provenance == other.provenance and np.array_equal(self.values, other.values)

    __hash__ = None

    def check_rows(self, n):
        if self.num_rows != n:
            raise ValidationError(f"embedding has {self.num_rows} rows, graph has {n} nodes")
        return self

    def normalized(self):
        """Copy with L2-normalized rows (zero rows stay zero)."""
        norms = np.linalg.norm(self.values, axis=1, keepdims=True)
        return EmbeddingMatrix(self.values / np.where(norms > 0, norms, 1.0), self.provenance)


def count_matrix(texts, vocab):
    texts = list(texts)
    out = np.zeros((len(texts), vocab.size))
    for i, text in enumerate(texts):
        for tok in tokenize(text):
            j = vocab.get(tok)
            if j is not None:
                out[i, j] += 1.0
    return out


def bow_embed(texts, vocab):
    """Raw in-vocabulary token counts, one row per text."""
    if vocab.size == 0:
        raise ValidationError("empty vocabulary")
    return EmbeddingMatrix(count_matrix(texts, vocab), "bow")


def tfidf_embed(texts, vocab):
    """Raw-count tf times smoothed idf ``ln((1+N)/(1+df)) + 1``, then unit L2 rows."""
    if vocab.size == 0:
        raise ValidationError("empty vocabulary")
    counts = count_matrix(texts, vocab)
    n = counts.shape[0]
    df = (counts > 0).sum(axis=0)
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    weighted = counts * idf
    norms = np.linalg.norm(weighted, axis=1, keepdims=True)
    return EmbeddingMatrix(weighted / np.where(norms > 0, norms, 1.0), "tfidf")


_HEADER_RE = re.compile(r"\s*N=(\d+)\s+d=(\d+)(?:\s+name=(\S+))?\s*")


def load_embeddings(path, expected_rows=None, normalize=False):
    """Read ``N=<rows> d=<dim> name=<tag>`` followed by N rows of d floats.

    Matrices are used as-is unless ``normalize`` asks for unit L2 rows.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError("empty embedding file", path, 1)
    m = _HEADER_RE.fullmatch(lines[0])
    if not m:
        raise ParseError(f"bad header {lines[0]!r}; expected 'N=<rows> d=<dim> name=<tag>'", path, 1)
    n, d = int(m.group(1)), int(m.group(2))
    name = m.group(3) or Path(path).stem
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise ValidationError(f"{path}: header declares {n} rows, file has {len(body)}")
    if expected_rows is not None and n != expected_rows:
        raise ValidationError(f"{path}: expected {expected_rows} rows, got {n}")
    vals = np.empty((n, d))
    for r, line in enumerate(body):
        parts = line.split()
        if len(parts) != d:
            raise ParseError(f"row {r} has {len(parts)} values, expected {d}", path, r + 2)
        for c, tok in enumerate(parts):
            try:
                x = float(tok)
            except ValueError:
                raise ParseError(f"bad float {tok!r} at ({r},{c})", path, r + 2) from None
            if not math.isfinite(x):
                raise ValidationError(f"{path}: non-finite value {tok!r} at ({r},{c})")
            vals[r, c] = x
    emb = EmbeddingMatrix(vals, f"external:{name}")
    return emb.normalized() if normalize else emb


def save_embeddings(emb, path, name=None):
    if name is None:
        name = emb.provenance.split(":", 1)[-1]
    n, d = emb.values.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"N={n} d={d} name={name}\n")
        for row in emb.values:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    return Path(path)

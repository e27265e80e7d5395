"""Embedding providers: static lookup tables, precomputed per-example matrices, hashed random vectors."""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .text_pipeline import UNK_TOKEN, TokenSequence


class EmbeddingProvider:
    """Maps a token sequence to a T x d float64 matrix.

    Subclasses implement one lookup strategy each; ``kind`` names it in
    configs and checkpoints.
    """

    kind: str = ""

    def __init__(self, dim: int):
        if int(dim) < 1:
            raise ValueError(f"embedding dimension must be >= 1, got {dim}")
        self.dim = int(dim)

    def embed(self, tokens, example_id: str | None = None) -> np.ndarray:
        raise NotImplementedError


class StaticTable(EmbeddingProvider):
    kind = "static"

    def __init__(self, table: dict[str, np.ndarray], dim: int):
        super().__init__(dim)
        if UNK_TOKEN not in table:
            raise ValueError(f"static embedding table lacks the {UNK_TOKEN} row")
        self._table = table
        self._unk = table[UNK_TOKEN]

    def __len__(self):
        return len(self._table)

    def lookup(self, token: str) -> np.ndarray:
        return self._table.get(token, self._unk)

    def embed(self, tokens, example_id=None):
        tokens = list(tokens)
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(t) for t in tokens])


class PrecomputedStore(EmbeddingProvider):
    kind = "precomputed"

    def __init__(self, matrices: dict[str, np.ndarray], dim: int):
        super().__init__(dim)
        self._matrices = matrices

    def __contains__(self, example_id):
        return example_id in self._matrices

    def embed(self, tokens, example_id=None):
        if example_id is None or example_id not in self._matrices:
            raise KeyError(f"no precomputed embedding for example id {example_id!r}")
        mat = self._matrices[example_id]
        n = len(list(tokens))
        if mat.shape[0] != n:
            raise ValueError(
                f"precomputed embedding for {example_id!r} has {mat.shape[0]} rows, "
                f"token sequence has {n}"
            )
        return mat.copy()


class HashedRandom(EmbeddingProvider):
    """Each token gets a fixed pseudo-random row derived from (token, seed).

    Entries are uniform in [-0.5, 0.5] scaled by 1/sqrt(d).
    """

    kind = "hashed"

    def __init__(self, dim: int = 32, seed: int = 0):
        super().__init__(dim)
        self.seed = int(seed)

    def row(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x00{token}".encode("utf-8"), digest_size=16).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.uniform(-0.5, 0.5, self.dim) / np.sqrt(self.dim)

    def embed(self, tokens, example_id=None):
        tokens = list(tokens)
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.row(t) for t in tokens])


def _parse_floats(parts, path, lineno):
    try:
        vals = np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError:
        raise ValueError(f"{path}: line {lineno}: non-numeric value") from None
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{path}: line {lineno}: non-finite value")
    return vals


def load_static_table(path) -> StaticTable:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty embedding file")
    header = lines[0].split()
    try:
        if len(header) != 2:
            raise ValueError
        n_rows, dim = int(header[0]), int(header[1])
    except ValueError:
        raise ValueError(f"{path}: line 1: malformed header {lines[0]!r}, expected 'V d'") from None
    if n_rows < 0 or dim < 1:
        raise ValueError(f"{path}: line 1: malformed header {lines[0]!r}")

    table: dict[str, np.ndarray] = {}
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    for lineno, line in body:
        if len(table) == n_rows:
            raise ValueError(f"{path}: line {lineno}: more rows than the {n_rows} declared in header")
        parts = line.split()
        if len(parts) != dim + 1:
            raise ValueError(f"{path}: line {lineno}: expected token + {dim} values, got {len(parts) - 1}")
        token = parts[0]
        if token in table:
            raise ValueError(f"{path}: line {lineno}: duplicate token {token!r}")
        table[token] = _parse_floats(parts[1:], path, lineno)
    if len(table) != n_rows:
        raise ValueError(f"{path}: header declares {n_rows} rows, found {len(table)}")
    return StaticTable(table, dim)


def load_precomputed(path) -> PrecomputedStore:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = [(i, ln) for i, ln in enumerate(fh.read().splitlines(), start=1) if ln.strip()]
    matrices: dict[str, np.ndarray] = {}
    dim = None
    pos = 0
    while pos < len(lines):
        lineno, line = lines[pos]
        parts = line.split()
        try:
            if len(parts) != 3:
                raise ValueError
            ex_id, n_rows, d = parts[0], int(parts[1]), int(parts[2])
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: malformed block header {line!r}, expected 'id T d'") from None
        if ex_id in matrices:
            raise ValueError(f"{path}: line {lineno}: duplicate example id {ex_id!r}")
        if dim is None:
            dim = d
        elif d != dim:
            raise ValueError(f"{path}: line {lineno}: dimension {d} differs from earlier blocks ({dim})")
        rows = lines[pos + 1: pos + 1 + n_rows]
        if len(rows) != n_rows:
            raise ValueError(f"{path}: block {ex_id!r} truncated: expected {n_rows} rows")
        mat = np.zeros((n_rows, d))
        for r, (rlineno, rline) in enumerate(rows):
            vals = rline.split()
            if len(vals) != d:
                raise ValueError(f"{path}: line {rlineno}: expected {d} values, got {len(vals)}")
            mat[r] = _parse_floats(vals, path, rlineno)
        matrices[ex_id] = mat
        pos += 1 + n_rows
    if dim is None:
        raise ValueError(f"{path}: no embedding blocks found")
    return PrecomputedStore(matrices, dim)


def embed_sequence(provider: EmbeddingProvider, tokens, example_id: str | None = None) -> np.ndarray:
    if example_id is None and isinstance(tokens, TokenSequence):
        example_id = tokens.example_id
    return provider.embed(tokens, example_id)


class SequenceEmbedder(BaseEstimator, TransformerMixin):
    """Pipeline step turning :class:`TokenSequence` objects into T x d arrays."""

    def __init__(self, provider=None):
        self.provider = provider

    def fit(self, X, y=None):
        self.provider_ = self.provider if self.provider is not None else HashedRandom()
        self.dim_ = self.provider_.dim
        return self

    def __sklearn_is_fitted__(self):
        # stateless: the provider is usable without fitting
        return True

    def transform(self, X):
        provider = getattr(self, "provider_", None) or self.provider
        if provider is None:
            provider = HashedRandom()
        return [embed_sequence(provider, seq) for seq in X]

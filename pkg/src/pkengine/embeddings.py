"""Unit-vector embedding store, similarity kernels, and a hash embedder.

The store file format is line-delimited JSON: a ``{"dim": N}`` header
followed by one ``{"id": ..., "vec": [...]}`` record per line.  Vectors
are re-normalized to unit L2 norm on ingest, so exporters may emit raw
model outputs.

The Gaussian kernel is concretized as ``exp(-(1 - cos(a, b)) / |scale|)``.
For unit vectors ``|a - b|^2 = 2 - 2 cos(a, b)``, so this is the
squared-distance Gaussian reparameterized to keep outputs in (0, 1];
the absolute value accepts the negative half of the [-1, 1] scale grid.
This closed form is an interpretation: only the unit-length normalization
and the scale range are fixed upstream.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import EmbeddingError

CONDITION_KEY_PREFIX = "cond:"
FRAGMENT_KEY_PREFIX = "frag:"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class KernelConfig:
    """Similarity kernel selection: plain cosine or Gaussian-of-cosine."""

    kind: str = "cosine"
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in ("cosine", "gaussian"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.scale is None:
                raise ValueError("gaussian kernel requires a scale")
            if self.scale == 0:
                raise ValueError("gaussian scale must be nonzero")
            if not -1.0 <= self.scale <= 1.0:
                raise ValueError("gaussian scale must lie in [-1, 1]")
        elif self.scale is not None:
            raise ValueError("cosine kernel takes no scale")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "gaussian":
            d["scale"] = self.scale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelConfig":
        return cls(kind=d["kind"], scale=d.get("scale"))


@dataclass
class EmbeddingStore:
    """Immutable-after-load map of content id to unit vector."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    name: str = "store"

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, key: str) -> np.ndarray:
        try:
            return self.entries[key]
        except KeyError:
            raise EmbeddingError(f"no embedding for id {key!r} in store {self.name!r}")

    def add(self, key: str, vec: np.ndarray) -> None:
        if key in self.entries:
            raise EmbeddingError(f"duplicate id {key!r}")
        v = np.asarray(vec, dtype=np.float64)
        if v.shape != (self.dim,):
            raise EmbeddingError(
                f"id {key!r}: expected dim {self.dim}, got {v.shape[-1] if v.ndim else 0}"
            )
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not math.isfinite(norm):
            raise EmbeddingError(f"id {key!r}: zero or non-finite vector cannot be normalized")
        self.entries[key] = v / norm


def condition_key(condition_id: str) -> str:
    return CONDITION_KEY_PREFIX + condition_id


def fragment_key(text: str) -> str:
    """Content-hash key so precomputed stores and on-the-fly embedding agree."""
    return FRAGMENT_KEY_PREFIX + hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_store(path: str | Path, name: str | None = None) -> EmbeddingStore:
    """Load an embedding file, re-normalizing every vector to unit length."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise EmbeddingError(f"{path}: empty file")
        try:
            meta = json.loads(header)
            dim = int(meta["dim"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise EmbeddingError(f"{path}: first line must be a {{\"dim\": N}} header")
        if dim < 1:
            raise EmbeddingError(f"{path}: dim must be positive")
        store = EmbeddingStore(dim=dim, name=name or path.stem)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key, vec = rec["id"], rec["vec"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise EmbeddingError(f"{path}:{lineno}: malformed record")
            if len(vec) != dim:
                raise EmbeddingError(
                    f"{path}:{lineno}: id {key!r} has dim {len(vec)}, header says {dim}"
                )
            try:
                store.add(key, np.asarray(vec, dtype=np.float64))
            except EmbeddingError as exc:
                raise EmbeddingError(f"{path}:{lineno}: {exc}")
    return store


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"dim": store.dim}) + "\n")
        for key, vec in store.entries.items():
            fh.write(json.dumps({"id": key, "vec": [float(x) for x in vec]}) + "\n")


def similarity(cfg: KernelConfig, a: np.ndarray, b: np.ndarray) -> float:
    """Kernel similarity between two unit vectors of equal dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingError(f"dimension mismatch: {a.shape} vs {b.shape}")
    cos = float(np.dot(a, b))
    if cfg.kind == "cosine":
        return cos
    return math.exp(-(1.0 - cos) / abs(cfg.scale))


def gaussian_of_cosine(cfg: KernelConfig, cos: float | np.ndarray):
    """Apply the kernel to precomputed cosine values (vectorized)."""
    if cfg.kind == "cosine":
        return cos
    return np.exp(-(1.0 - np.asarray(cos)) / abs(cfg.scale))


def hash_embed(text: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic signed bag-of-words hashing into a unit vector.

    Tokens are lowercase ``[a-z0-9]+`` runs; each token is hashed (with
    the seed) into a bucket and a sign, counts accumulate, and the result
    is L2-normalized.  Identical (text, dim, seed) always produce
    identical vectors across processes.
    """
    if dim < 2:
        raise EmbeddingError("dim must be >= 2")
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise EmbeddingError("text has no tokens to embed")
    vec = np.zeros(dim, dtype=np.float64)
    for tok in tokens:
        bucket, sign = _hash_token(tok, dim, seed)
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # Opposite-signed tokens can cancel exactly; fall back to hashing
        # the whole text so the result stays deterministic and unit-length.
        bucket, sign = _hash_token(text.lower(), dim, seed)
        vec[bucket] = sign
        norm = 1.0
    return vec / norm


def _hash_token(token: str, dim: int, seed: int) -> tuple[int, float]:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "little", signed=True)
    ).digest()
    value = int.from_bytes(digest, "little")
    return value % dim, 1.0 if (value >> 62) & 1 else -1.0


def hash_embedder(dim: int, seed: int) -> Callable[[str], np.ndarray]:
    """Bind (dim, seed) into a text -> unit vector callable."""

    def embed(text: str) -> np.ndarray:
        return hash_embed(text, dim, seed)

    return embed


def build_store(
    texts: Iterable[tuple[str, str]], dim: int, seed: int, name: str = "hash"
) -> EmbeddingStore:
    """Embed (id, text) pairs with the hash embedder into a fresh store."""
    store = EmbeddingStore(dim=dim, name=name)
    for key, text in texts:
        store.add(key, hash_embed(text, dim, seed))
    return store

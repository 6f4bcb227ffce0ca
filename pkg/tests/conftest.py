import numpy as np
import pytest
from importlib import resources

from pkengine import EmbeddingStore, hash_embed, parse_pk
from pkengine.embeddings import condition_key


def bundled_pk_source(name: str) -> str:
    return resources.files("pkengine").joinpath(f"data/{name}.pk").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def cssrs_pk():
    return parse_pk(bundled_pk_source("cssrs"))


@pytest.fixture(scope="session")
def phq9_pk():
    return parse_pk(bundled_pk_source("phq9"))


def store_for(pk, texts: dict[str, str], dim: int = 64, seed: int = 7) -> EmbeddingStore:
    """Hash-embed condition texts plus the given id->text map."""
    store = EmbeddingStore(dim=dim, name="test")
    for cond in pk.conditions:
        store.add(condition_key(cond.id), hash_embed(cond.text, dim, seed))
    for key, text in texts.items():
        store.add(key, hash_embed(text, dim, seed))
    return store


def unit(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    return v / np.linalg.norm(v)

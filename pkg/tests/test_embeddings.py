"""Embedding store loading, kernels, and the deterministic hash embedder."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pkengine.embeddings import (
    EmbeddingStore,
    KernelConfig,
    build_store,
    hash_embed,
    load_store,
    save_store,
    similarity,
)
from pkengine.errors import EmbeddingError

from conftest import unit


def write_embedding_file(tmp_path, dim, rows):
    path = tmp_path / "store.emb"
    lines = [json.dumps({"dim": dim})]
    lines += [json.dumps({"id": rid, "vec": vec}) for rid, vec in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestLoadStore:
    def test_vectors_renormalized(self, tmp_path):
        path = write_embedding_file(
            tmp_path, 4,
            [("a", [1, 1, 1, 1]), ("b", [2, 0, 0, 0]), ("c", [0.1, 0.2, 0.3, 0.4])],
        )
        store = load_store(path)
        assert store.dim == 4
        assert len(store) == 3
        for key in ("a", "b", "c"):
            assert abs(np.linalg.norm(store.get(key)) - 1.0) < 1e-9

    def test_zero_vector_rejected(self, tmp_path):
        path = write_embedding_file(tmp_path, 3, [("z", [0, 0, 0])])
        with pytest.raises(EmbeddingError, match="zero"):
            load_store(path)

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = write_embedding_file(tmp_path, 4, [("a", [1, 0, 0, 0]), ("b", [1, 0, 0, 0, 0])])
        with pytest.raises(EmbeddingError, match="dim"):
            load_store(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = write_embedding_file(tmp_path, 2, [("a", [1, 0]), ("a", [0, 1])])
        with pytest.raises(EmbeddingError, match="duplicate"):
            load_store(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_text(json.dumps({"id": "a", "vec": [1, 0]}) + "\n")
        with pytest.raises(EmbeddingError, match="header"):
            load_store(path)

    def test_save_load_round_trip(self, tmp_path):
        store = build_store([("x", "hello world"), ("y", "another text")], dim=16, seed=3)
        out = tmp_path / "dump.emb"
        save_store(store, out)
        loaded = load_store(out)
        assert loaded.dim == store.dim
        for key in ("x", "y"):
            np.testing.assert_allclose(loaded.get(key), store.get(key), atol=1e-12)


class TestKernelConfig:
    def test_zero_scale_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            KernelConfig(kind="gaussian", scale=0.0)

    def test_gaussian_requires_scale(self):
        with pytest.raises(ValueError, match="scale"):
            KernelConfig(kind="gaussian")

    def test_scale_range_enforced(self):
        with pytest.raises(ValueError):
            KernelConfig(kind="gaussian", scale=1.5)

    def test_cosine_takes_no_scale(self):
        with pytest.raises(ValueError):
            KernelConfig(kind="cosine", scale=0.3)

    def test_round_trip(self):
        cfg = KernelConfig(kind="gaussian", scale=-0.25)
        assert KernelConfig.from_dict(cfg.to_dict()) == cfg


class TestSimilarity:
    def test_cosine_self_is_one(self):
        u = unit([0.3, -0.4, 0.5])
        assert similarity(KernelConfig(), u, u) == pytest.approx(1.0, abs=1e-12)

    def test_cosine_hand_value(self):
        a = np.array([1.0, 0.0])
        b = np.array([0.70710678, 0.70710678])
        assert similarity(KernelConfig(), a, b) == pytest.approx(0.70710678, abs=1e-9)

    @pytest.mark.parametrize("scale", [0.001, 0.5, 1.0, -0.5, -1.0])
    def test_gaussian_self_is_one(self, scale):
        u = unit([1.0, 2.0, 3.0])
        cfg = KernelConfig(kind="gaussian", scale=scale)
        assert similarity(cfg, u, u) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_matches_closed_form(self):
        a, b = unit([1, 0, 0]), unit([1, 1, 0])
        cfg = KernelConfig(kind="gaussian", scale=0.5)
        cos = float(np.dot(a, b))
        assert similarity(cfg, a, b) == pytest.approx(math.exp(-(1 - cos) / 0.5), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(EmbeddingError, match="mismatch"):
            similarity(KernelConfig(), np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))

    @given(
        st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
            lambda v: sum(x * x for x in v) > 1e-6
        ),
        st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
            lambda v: sum(x * x for x in v) > 1e-6
        ),
        st.sampled_from([None, 0.3, -0.7, 1.0]),
    )
    def test_kernel_symmetry(self, a, b, scale):
        cfg = KernelConfig() if scale is None else KernelConfig(kind="gaussian", scale=scale)
        ua, ub = unit(a), unit(b)
        assert similarity(cfg, ua, ub) == similarity(cfg, ub, ua)

    def test_gaussian_strictly_increasing_in_cosine(self):
        cfg = KernelConfig(kind="gaussian", scale=0.4)
        cosines = np.linspace(-1, 1, 101)
        values = [math.exp(-(1 - c) / 0.4) for c in cosines]
        assert all(v2 > v1 for v1, v2 in zip(values, values[1:]))
        assert all(0 < v <= 1 for v in values)


class TestHashEmbed:
    def test_deterministic(self):
        a = hash_embed("the same text", 32, 11)
        b = hash_embed("the same text", 32, 11)
        np.testing.assert_array_equal(a, b)

    def test_unit_norm(self):
        v = hash_embed("a few words here", 64, 0)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    def test_seed_changes_vector(self):
        a = hash_embed("text", 32, 1)
        b = hash_embed("text", 32, 2)
        assert not np.allclose(a, b)

    def test_empty_text_rejected(self):
        with pytest.raises(EmbeddingError, match="token"):
            hash_embed("", 16, 0)
        with pytest.raises(EmbeddingError, match="token"):
            hash_embed("!!! ---", 16, 0)

    def test_small_dim_rejected(self):
        with pytest.raises(EmbeddingError):
            hash_embed("text", 1, 0)

    def test_disjoint_token_texts_nearly_orthogonal(self):
        """Pinned bound measured over the bundled corpus texts at dim=256, seed=7:
        219 disjoint-token pairs, max |cos| = 0.2357."""
        import re
        from itertools import combinations

        from importlib import resources
        from pkengine.pk import parse_pk
        from pkengine.synthetic import FILLER_SENTENCES, POSITIVE_FILLERS

        texts = list(FILLER_SENTENCES) + list(POSITIVE_FILLERS)
        for name in ("cssrs", "phq9"):
            src = resources.files("pkengine").joinpath(f"data/{name}.pk").read_text()
            texts += [c.text for c in parse_pk(src).conditions]
        tokens = lambda t: set(re.findall(r"[a-z0-9]+", t.lower()))
        worst = 0.0
        checked = 0
        for a, b in combinations(texts, 2):
            if tokens(a) & tokens(b):
                continue
            checked += 1
            worst = max(worst, abs(float(np.dot(hash_embed(a, 256, 7), hash_embed(b, 256, 7)))))
        assert checked > 100
        assert worst < 0.30  # observed 0.2357
        assert worst < 0.5

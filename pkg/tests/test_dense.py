import random

import numpy as np
import pytest

from cmqr.dense import (
    HashProjectionEncoder,
    VectorStore,
    build_store,
    pool_rewrites,
    read_embeddings,
    search_dense,
    write_embeddings,
)
from helpers import make_rewrite_set, naive_dense_search


class _FixedEncoder:
    """Maps each text to a hand-set vector; unknown text is an error."""

    def __init__(self, mapping):
        self.mapping = {k: np.asarray(v, dtype=np.float64) for k, v in mapping.items()}
        self.dimension = len(next(iter(self.mapping.values())))

    def encode(self, text):
        return self.mapping[text]


class TestHashProjectionEncoder:
    def test_deterministic_across_instances(self):
        a = HashProjectionEncoder(64, seed=42)
        b = HashProjectionEncoder(64, seed=42)
        text = "conversational passage retrieval with rewrites"
        assert np.array_equal(a.encode(text), b.encode(text))

    def test_seed_changes_vectors(self):
        a = HashProjectionEncoder(64, seed=42)
        b = HashProjectionEncoder(64, seed=43)
        assert not np.array_equal(a.encode("hello world"), b.encode("hello world"))

    def test_unit_norm_for_nonempty_text(self):
        encoder = HashProjectionEncoder(128)
        for text in ["rome", "who founded rome", "a b c d e f g", "t5 based qr"]:
            assert np.linalg.norm(encoder.encode(text)) == pytest.approx(1.0, abs=1e-9)

    def test_empty_text_is_zero_vector(self):
        encoder = HashProjectionEncoder(32)
        assert np.all(encoder.encode("") == 0.0)

    def test_shared_tokens_score_higher_than_disjoint(self):
        encoder = HashProjectionEncoder(256)
        query = encoder.encode("rome founded")
        overlapping = encoder.encode("rome founded legend")
        disjoint = encoder.encode("weather forecast tomorrow")
        assert float(query @ overlapping) > float(query @ disjoint)


class TestPoolRewrites:
    def test_direct_substitution(self):
        encoder = _FixedEncoder({"a": [1.0, 0.0], "b": [0.0, 1.0]})
        rs = make_rewrite_set([("a", 0.6), ("b", 0.4)])
        pooled = pool_rewrites(rs, encoder)
        assert pooled == pytest.approx([0.6, 0.4], abs=1e-15)

    def test_single_rewrite_scales_embedding(self):
        encoder = _FixedEncoder({"a": [0.5, -0.25, 1.0]})
        pooled = pool_rewrites(make_rewrite_set([("a", 0.7)]), encoder)
        assert pooled == pytest.approx([0.35, -0.175, 0.7], abs=1e-15)

    def test_matches_elementwise_oracle(self):
        rng = random.Random(3)
        texts = [f"text {i}" for i in range(3)]
        mapping = {t: [rng.uniform(-1, 1) for _ in range(8)] for t in texts}
        encoder = _FixedEncoder(mapping)
        pairs = [(texts[0], 0.5), (texts[1], 0.3), (texts[2], 0.2)]
        rs = make_rewrite_set(pairs)
        pooled = pool_rewrites(rs, encoder)
        oracle = np.zeros(8)
        for hyp in rs.rewrites:
            for j in range(8):
                oracle[j] += mapping[hyp.text][j] * hyp.rs_score
        assert pooled == pytest.approx(oracle, abs=1e-12)

    def test_splitting_rs_mass_across_copies_is_exact(self):
        # One rewrite at rs vs two distinct-but-identically-embedded rewrites
        # at rs/2 each: the pooled vector is bit-identical.
        vec = [0.3, -0.7, 0.2]
        encoder = _FixedEncoder({"a": vec, "a twin": vec})
        whole = pool_rewrites(make_rewrite_set([("a", 0.6)]), encoder)
        split = pool_rewrites(make_rewrite_set([("a", 0.3), ("a twin", 0.3)]), encoder)
        assert np.array_equal(whole, split)

    def test_normalize_rs_flag_rescales_only(self):
        encoder = _FixedEncoder({"a": [1.0, 0.0], "b": [0.0, 1.0]})
        rs = make_rewrite_set([("a", 0.6), ("b", 0.2)])
        raw = pool_rewrites(rs, encoder, normalize_rs=False)
        normalized = pool_rewrites(rs, encoder, normalize_rs=True)
        assert normalized == pytest.approx(raw / 0.8, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        class Lying:
            dimension = 4

            def encode(self, text):
                return np.zeros(3)

        with pytest.raises(ValueError, match="shape"):
            pool_rewrites(make_rewrite_set([("a", 0.5)]), Lying())


class TestBuildStore:
    def test_empty_stream(self):
        store = build_store([], dimension=8)
        assert store.count == 0
        assert store.dimension == 8

    def test_two_vectors(self):
        store = build_store([("d1", np.ones(4)), ("d2", np.zeros(4))])
        assert store.matrix.shape == (2, 4)
        assert store.ids == ["d1", "d2"]

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            build_store([("d1", np.ones(4)), ("d2", np.ones(5))])

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValueError, match="duplicate"):
            build_store([("d1", np.ones(4)), ("d1", np.ones(4))])

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            build_store([("d1", np.array([1.0, np.nan]))])


class TestSearchDense:
    def test_unit_row_query_ranks_itself_first(self):
        rng = np.random.default_rng(11)
        matrix = rng.normal(size=(20, 16)).astype(np.float32)
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        store = VectorStore(matrix=matrix, ids=[f"d{i:02d}" for i in range(20)])
        results = search_dense(store, matrix[7].astype(np.float64), top_k=5)
        assert results[0][0] == "d07"

    def test_matches_naive_loop_exactly(self):
        rng = np.random.default_rng(23)
        for _ in range(5):
            rows, dim = int(rng.integers(1, 200)), int(rng.integers(1, 32))
            matrix = rng.normal(size=(rows, dim)).astype(np.float32)
            store = VectorStore(matrix=matrix, ids=[f"d{i:04d}" for i in range(rows)])
            query = rng.normal(size=dim)
            got = search_dense(store, query, top_k=rows)
            expected = naive_dense_search(store, query, rows)
            assert got == expected  # identical floats, identical order

    def test_zero_query_gives_id_ascending(self):
        matrix = np.ones((4, 3), dtype=np.float32)
        store = VectorStore(matrix=matrix, ids=["dC", "dA", "dD", "dB"])
        results = search_dense(store, np.zeros(3), top_k=10)
        assert [pid for pid, _ in results] == ["dA", "dB", "dC", "dD"]
        assert all(score == 0.0 for _, score in results)

    def test_dimension_mismatch_rejected(self):
        store = build_store([("d1", np.ones(4))])
        with pytest.raises(ValueError, match="dimension"):
            search_dense(store, np.ones(3), top_k=1)

    def test_top_k_truncates(self):
        matrix = np.eye(6, dtype=np.float32)
        store = VectorStore(matrix=matrix, ids=[f"d{i}" for i in range(6)])
        assert len(search_dense(store, np.ones(6), top_k=2)) == 2


class TestEmbeddingFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(7)
        matrix = rng.normal(size=(50, 12)).astype(np.float32)
        ids = [f"passage:{i}" for i in range(50)]
        store = VectorStore(matrix=matrix, ids=ids)
        path = tmp_path / "emb.cmqe"
        write_embeddings(store, str(path))
        loaded = read_embeddings(str(path))
        assert loaded.ids == ids
        assert loaded.matrix.tobytes() == matrix.tobytes()
        # write -> read -> write is byte-identical
        path2 = tmp_path / "emb2.cmqe"
        write_embeddings(loaded, str(path2))
        assert path.read_bytes() == path2.read_bytes()

    def test_empty_store_round_trips(self, tmp_path):
        store = build_store([], dimension=16)
        path = tmp_path / "empty.cmqe"
        write_embeddings(store, str(path))
        loaded = read_embeddings(str(path))
        assert loaded.count == 0
        assert loaded.dimension == 16

    def test_unicode_ids_survive(self, tmp_path):
        store = build_store([("πass-âge", np.ones(3, dtype=np.float32))])
        path = tmp_path / "u.cmqe"
        write_embeddings(store, str(path))
        assert read_embeddings(str(path)).ids == ["πass-âge"]

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.cmqe"
        path.write_bytes(b"XXXX" + b"\x00" * 16)
        with pytest.raises(ValueError, match="not a CMQE"):
            read_embeddings(str(path))

    def test_rejects_trailing_bytes(self, tmp_path):
        store = build_store([("d1", np.ones(2, dtype=np.float32))])
        path = tmp_path / "t.cmqe"
        write_embeddings(store, str(path))
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(ValueError, match="trailing"):
            read_embeddings(str(path))

import math

import numpy as np
import pytest

from conceptcert.bottleneck import (
    ConceptSet,
    EmbeddingTable,
    FilterCutoffs,
    activation_matrix,
    cos_cubed,
    drop_uninterpretable,
    filter_concepts,
    learn_projection,
    read_matrix_csv,
    write_matrix_csv,
)
from conceptcert.errors import (
    DegenerateInputError,
    EmptyConceptSetError,
    ParameterError,
)


def unit_rows(mat):
    mat = np.asarray(mat, dtype=np.float64)
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)


def make_candidates(names, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return ConceptSet(names=names, text_embeddings=unit_rows(rng.normal(size=(len(names), dim))))


class TestConceptSetIO:
    def test_round_trip(self, tmp_path):
        cs = make_candidates(["alpha", "beta", "gamma"])
        path = tmp_path / "concepts.json"
        cs.save(path)
        back = ConceptSet.load(path)
        assert back.names == cs.names
        np.testing.assert_array_equal(back.text_embeddings, cs.text_embeddings)

    def test_duplicate_names_rejected(self):
        with pytest.raises(ParameterError):
            make_candidates(["same", "same"])

    def test_non_unit_rows_rejected(self):
        with pytest.raises(ParameterError):
            ConceptSet(names=["a"], text_embeddings=np.array([[2.0, 0.0]]))


class TestMatrixCsv:
    def test_round_trip(self, tmp_path):
        mat = np.random.default_rng(1).normal(size=(5, 3))
        path = tmp_path / "mat.csv"
        write_matrix_csv(path, mat)
        np.testing.assert_array_equal(read_matrix_csv(path), mat)
        assert open(path).readline().strip() == "dim0,dim1,dim2"


class TestFilterConcepts:
    def setup_method(self):
        # Orthogonal embedding layout: concept 0 duplicates class 0,
        # concept 2 duplicates concept 1.
        e = np.eye(6)
        self.classes = ["class_a", "class_b"]
        self.class_emb = e[:2]
        self.names = ["dup_of_class", "fine_one", "dup_of_fine", "x" * 41, "weak_activation"]
        emb = np.stack([e[0], e[2], e[2] * 0.99 + e[3] * np.sqrt(1 - 0.99**2), e[4], e[5]])
        self.candidates = ConceptSet(names=self.names, text_embeddings=unit_rows(emb))
        acts = np.full((10, 5), 0.6)
        acts[:, 4] = 0.01  # filter (4) victim
        self.acts = acts

    def test_filters_apply_in_order(self):
        kept_set, kept = filter_concepts(
            self.candidates, self.classes, self.class_emb, self.acts
        )
        assert kept_set.names == ["fine_one"]
        assert kept == [1]

    def test_long_name_removed(self):
        assert len(self.names[3]) == 41
        _, kept = filter_concepts(self.candidates, self.classes, self.class_emb, self.acts)
        assert 3 not in kept

    def test_exact_class_duplicate_removed(self):
        _, kept = filter_concepts(self.candidates, self.classes, self.class_emb, self.acts)
        assert 0 not in kept

    def test_later_duplicate_removed(self):
        _, kept = filter_concepts(self.candidates, self.classes, self.class_emb, self.acts)
        assert 1 in kept and 2 not in kept

    def test_all_filtered_raises(self):
        acts = np.zeros((10, 5))
        with pytest.raises(EmptyConceptSetError):
            filter_concepts(self.candidates, self.classes, self.class_emb, acts)

    def test_cutoff_validation(self):
        with pytest.raises(ParameterError):
            FilterCutoffs(class_similarity=0.0)


class TestActivationMatrix:
    def test_identity_block(self):
        e = np.eye(3)
        table = EmbeddingTable(image_embeddings=e, backbone_features=np.zeros((3, 2)))
        concepts = ConceptSet(names=["a", "b", "c"], text_embeddings=e)
        np.testing.assert_allclose(activation_matrix(table, concepts), np.eye(3))

    def test_shape(self):
        rng = np.random.default_rng(2)
        table = EmbeddingTable(
            image_embeddings=unit_rows(rng.normal(size=(3, 4))),
            backbone_features=rng.normal(size=(3, 2)),
        )
        concepts = make_candidates(["a", "b"], dim=4)
        assert activation_matrix(table, concepts).shape == (3, 2)

    def test_hand_dot_products(self):
        table = EmbeddingTable(
            image_embeddings=np.array([[1.0, 0.0], [0.0, 1.0]]),
            backbone_features=np.zeros((2, 1)),
        )
        s = 1.0 / math.sqrt(2.0)
        concepts = ConceptSet(names=["a", "b"], text_embeddings=np.array([[1.0, 0.0], [s, s]]))
        np.testing.assert_allclose(
            activation_matrix(table, concepts), [[1.0, s], [0.0, s]], atol=1e-12
        )

    def test_dim_mismatch(self):
        table = EmbeddingTable(
            image_embeddings=np.eye(3), backbone_features=np.zeros((3, 2))
        )
        concepts = make_candidates(["a"], dim=5)
        with pytest.raises(ParameterError):
            activation_matrix(table, concepts)


def cos_cubed_scalar_oracle(q, a):
    """Independent scalar reference: explicit loops, population std."""
    def standardize(v):
        n = len(v)
        mu = sum(v) / n
        var = sum((x - mu) ** 2 for x in v) / n
        return [(x - mu) / math.sqrt(var) for x in v]

    u = [x**3 for x in standardize(q)]
    b = [x**3 for x in standardize(a)]
    dot = sum(x * y for x, y in zip(u, b))
    nu = math.sqrt(sum(x * x for x in u))
    nb = math.sqrt(sum(x * x for x in b))
    return dot / (nu * nb)


class TestCosCubed:
    def test_identical(self):
        assert cos_cubed([1.0, 2.0, 5.0], [1.0, 2.0, 5.0]) == pytest.approx(1.0)

    def test_standardized_mirror(self):
        assert cos_cubed([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(3, 12))
            q = rng.normal(size=n)
            a = rng.normal(size=n)
            assert cos_cubed(q, a) == pytest.approx(cos_cubed_scalar_oracle(q, a), abs=1e-12)
        assert cos_cubed([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]) == pytest.approx(
            cos_cubed_scalar_oracle([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]), abs=1e-12
        )

    def test_zero_variance(self):
        with pytest.raises(DegenerateInputError):
            cos_cubed([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_range(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            v = cos_cubed(rng.normal(size=6), rng.normal(size=6))
            assert -1.0 - 1e-12 <= v <= 1.0 + 1e-12


class TestLearnProjection:
    def test_zero_steps_returns_init(self):
        rng = np.random.default_rng(5)
        f = rng.normal(size=(32, 4))
        a = rng.normal(size=(32, 3))
        res = learn_projection(f, a, steps=0, seed=9)
        init = np.random.default_rng(9).normal(0.0, 0.5, (3, 4))
        np.testing.assert_allclose(res.weights, init)
        assert len(res.loss_history) == 1

    def test_planted_recovery(self):
        rng = np.random.default_rng(6)
        f = rng.normal(size=(256, 8))
        w_star = rng.normal(size=(4, 8))
        a = f @ w_star.T
        res = learn_projection(f, a, steps=1000, learning_rate=0.15, seed=0)
        assert np.all(res.similarities >= 0.95)

    def test_loss_non_increasing_small_lr(self):
        rng = np.random.default_rng(7)
        f = rng.normal(size=(64, 4))
        a = f @ rng.normal(size=(2, 4)).T
        res = learn_projection(f, a, steps=60, learning_rate=1e-3, seed=0)
        diffs = np.diff(res.loss_history)
        assert np.all(diffs <= 1e-10)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        f = rng.normal(size=(20, 3))
        a = rng.normal(size=(20, 2))

        def loss_of(w):
            q = f @ w.T
            return -sum(cos_cubed(q[:, e], a[:, e]) for e in range(a.shape[1]))

        res0 = learn_projection(f, a, steps=0, seed=123)
        # re-derive the analytic gradient via one tiny step of the optimizer
        lr = 1e-7
        res1 = learn_projection(f, a, steps=1, learning_rate=lr, seed=123)
        analytic = (res0.weights - res1.weights) / lr
        eps = 1e-6
        for i in range(2):
            for j in range(3):
                wp = res0.weights.copy()
                wm = res0.weights.copy()
                wp[i, j] += eps
                wm[i, j] -= eps
                numeric = (loss_of(wp) - loss_of(wm)) / (2 * eps)
                assert analytic[i, j] == pytest.approx(numeric, abs=2e-4)


class TestDropUninterpretable:
    def test_all_above_cutoff(self):
        w = np.eye(3)
        kept_w, kept = drop_uninterpretable(w, [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(kept_w, w)
        assert kept == [0, 1, 2]

    def test_threshold(self):
        w = np.arange(4.0).reshape(2, 2)
        kept_w, kept = drop_uninterpretable(w, [0.9, 0.1])
        assert kept == [0]
        np.testing.assert_array_equal(kept_w, w[:1])

    def test_default_cutoff(self):
        w = np.eye(2)
        _, kept = drop_uninterpretable(w, [0.46, 0.44])
        assert kept == [0]

    def test_all_dropped(self):
        with pytest.raises(EmptyConceptSetError):
            drop_uninterpretable(np.eye(2), [0.1, 0.2])

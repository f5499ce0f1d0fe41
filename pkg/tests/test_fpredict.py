import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlfreg.core import LabelVector, MultiLabelDataset, SupportSet, all_combinations, build_support
from mlfreg.estimators import BrModel, CrfModel, UnsupportedOperation, br_train
from mlfreg.fpredict import (
    MarginalMatrix,
    SupportPosterior,
    brute_force_best,
    brute_force_expected_f1,
    gfm,
    gfm_batch,
    lsf_marginals,
    lsf_train,
    map_predict,
    marginal_tensor,
    marginals_from_posterior,
    marginals_from_samples,
    posterior_matrix,
    predict,
    support_map,
    support_posterior,
)
from mlfreg.linreg import ElasticNetConfig, LinearModel

from conftest import random_dataset, random_posterior


def toy_posterior():
    # labels 1, 2, 3 of the three-class toy problem are ids 0, 1, 2 here
    L = 3
    return SupportPosterior((LabelVector((0,), L), LabelVector((1,), L), LabelVector((2,), L)), [0.5, 0.4, 0.1])


def as_posterior(combos, probs):
    return SupportPosterior(tuple(LabelVector.from_bits(r.astype(int)) for r in combos), probs / probs.sum())


class TestToyExample:
    def test_gfm_prefers_unobserved_pair(self):
        pred = gfm(marginals_from_posterior(toy_posterior()))
        assert pred.labels == LabelVector((0, 1), 3)
        assert abs(pred.expected_f1 - 0.6) <= 1e-12
        assert pred.cardinality == 2

    def test_support_map_is_the_mode(self):
        post = toy_posterior()
        mode = support_map(post)
        assert mode == LabelVector((0,), 3)
        assert abs(brute_force_expected_f1(post, mode) - 0.5) <= 1e-12

    def test_brute_force_agrees(self):
        best = brute_force_best(toy_posterior())
        assert best.labels == LabelVector((0, 1), 3)
        assert best.expected_f1 == pytest.approx(0.6, abs=1e-12)


class TestGfm:
    @pytest.mark.parametrize("seed", range(60))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        L = int(rng.integers(1, 9))
        combos, p = random_posterior(rng, L, support_size=int(rng.integers(1, 2**L + 1)))
        post = as_posterior(combos, p)
        pred = gfm(marginals_from_posterior(post))
        oracle = brute_force_best(post)
        assert pred.expected_f1 == pytest.approx(oracle.expected_f1, abs=1e-9)
        # the reported value is the true expected F of the returned set
        assert brute_force_expected_f1(post, pred.labels) == pytest.approx(pred.expected_f1, abs=1e-9)
        assert pred.expected_f1 >= brute_force_expected_f1(post, support_map(post)) - 1e-12

    def test_empty_prediction_when_empty_dominates(self):
        post = SupportPosterior((LabelVector((), 3), LabelVector((0,), 3)), [0.9, 0.1])
        pred = gfm(marginals_from_posterior(post))
        assert pred.labels.cardinality() == 0
        assert pred.expected_f1 == pytest.approx(0.9)

    def test_cardinality_tie_prefers_smaller_set(self):
        # predicting {} or {0} both give expected F 0.5
        post = SupportPosterior((LabelVector((), 2), LabelVector((0,), 2)), [0.5, 0.5])
        pred = gfm(marginals_from_posterior(post))
        assert pred.labels.cardinality() == 0
        assert pred.expected_f1 == 0.5

    def test_batch_matches_single(self, rng):
        posts = [random_posterior(rng, 5, 10) for _ in range(20)]
        P = np.stack([marginal_tensor(p[None], c)[0][0] for c, p in posts])
        E = np.array([marginal_tensor(p[None], c)[1][0] for c, p in posts])
        Y, ef, s = gfm_batch(P, E)
        for n in range(20):
            single = gfm(MarginalMatrix(P[n], E[n]))
            assert tuple(np.flatnonzero(Y[n])) == single.labels.labels
            assert ef[n] == single.expected_f1
            assert s[n] == single.cardinality

    def test_l1_problem(self):
        post = SupportPosterior((LabelVector((), 1), LabelVector((0,), 1)), [0.3, 0.7])
        assert gfm(marginals_from_posterior(post)).labels == LabelVector((0,), 1)


class TestMarginals:
    @given(st.integers(0, 2**31 - 1), st.integers(1, 8))
    @settings(max_examples=50, deadline=None)
    def test_coherence(self, seed, L):
        rng = np.random.default_rng(seed)
        combos, p = random_posterior(rng, L, support_size=int(rng.integers(1, 2**L + 1)), sparse=False)
        m = marginals_from_posterior(as_posterior(combos, p))
        q = m.cardinality_distribution()
        s = np.arange(1, L + 1)
        np.testing.assert_allclose(m.p.sum(axis=0), s * q, atol=1e-9)
        assert m.p_empty + q.sum() == pytest.approx(1.0, abs=1e-9)

    def test_definition(self):
        post = toy_posterior()
        m = marginals_from_posterior(post)
        expected = np.zeros((3, 3))
        expected[:, 0] = [0.5, 0.4, 0.1]
        np.testing.assert_allclose(m.p, expected, atol=1e-15)
        assert m.p_empty == 0.0

    def test_from_samples_counts_duplicates(self):
        samples = [LabelVector((0,), 2)] * 3 + [LabelVector((), 2)]
        m = marginals_from_samples(samples, 2)
        np.testing.assert_allclose(m.p, [[0.75, 0.0], [0.0, 0.0]])
        assert m.p_empty == 0.25

    def test_from_samples_validation(self):
        with pytest.raises(ValueError):
            marginals_from_samples([], 2)

    def test_posterior_is_renormalized_joint(self, rng):
        ds = random_dataset(n=60, l=4, seed=3)
        model = br_train(ds, ElasticNetConfig(lam=1e-2))
        sup = build_support(ds)
        x = ds.X[0]
        post = support_posterior(model, x, sup)
        joint = np.exp([model.log_joint(x, y) for y in sup.combinations])
        np.testing.assert_allclose(post.probabilities, joint / joint.sum(), atol=1e-12)
        outside = next(LabelVector.from_bits(r) for r in all_combinations(4) if LabelVector.from_bits(r) not in sup)
        assert post.probability(outside) == 0.0

    def test_invalid_posterior(self):
        with pytest.raises(ValueError):
            SupportPosterior((LabelVector((), 2),), [0.5])


def multiclass_dataset(n=300, seed=0, sep=1.0):
    rng = np.random.default_rng(seed)
    c = rng.integers(0, 3, size=n)
    X = np.eye(3)[c] * sep + rng.normal(scale=0.8, size=(n, 3))
    return MultiLabelDataset.from_arrays(X, np.eye(3, dtype=np.int8)[c])


class TestStrategies:
    def test_map_on_br_thresholds(self, rng):
        ds = random_dataset(n=80, l=4, seed=1)
        model = br_train(ds, ElasticNetConfig(lam=1e-2))
        np.testing.assert_array_equal(predict(model, ds.X, "map"), (model.marginals(ds.X) > 0.5).astype(np.int8))
        assert map_predict(model, ds.X[0]).to_bits().tolist() == predict(model, ds.X[:1], "map")[0].tolist()

    def test_support_map_multiclass(self):
        ds = multiclass_dataset()
        model = br_train(ds, ElasticNetConfig(lam=1e-2))
        sup = build_support(ds)
        Y = predict(model, multiclass_dataset(seed=1).X, "support-map", support=sup)
        assert np.all(Y.sum(axis=1) == 1)
        # plain MAP on the same model does produce invalid sets
        assert np.any(predict(model, multiclass_dataset(seed=1).X, "map").sum(axis=1) != 1)

    def test_support_gfm_consistent_with_brute_force(self):
        ds = random_dataset(n=80, l=4, seed=2)
        model = br_train(ds, ElasticNetConfig(lam=1e-2))
        sup = build_support(ds)
        Y = predict(model, ds.X[:10], "support-gfm", support=sup)
        for i in range(10):
            post = support_posterior(model, ds.X[i], sup)
            best = brute_force_best(post)
            got = brute_force_expected_f1(post, LabelVector.from_bits(Y[i]))
            assert got == pytest.approx(best.expected_f1, abs=1e-9)

    def test_sample_gfm_rejected_for_crf(self):
        sup = SupportSet.full(2)
        model = CrfModel(np.zeros((2, 2)), np.zeros(2), np.zeros((1, 4)), True, sup)
        with pytest.raises(UnsupportedOperation):
            predict(model, np.zeros((1, 2)), "sample-gfm")

    def test_support_strategies_need_support(self):
        model = BrModel([LinearModel.zeros(2, 2)])
        with pytest.raises(ValueError):
            predict(model, np.zeros((1, 2)), "support-gfm")
        with pytest.raises(ValueError):
            predict(model, np.zeros((1, 2)), "nonsense")

    def test_sample_gfm_deterministic_under_seed(self):
        ds = random_dataset(n=60, l=3, seed=4)
        model = br_train(ds, ElasticNetConfig(lam=1e-2))
        a = predict(model, ds.X[:5], "sample-gfm", sample_count=200, rng=np.random.default_rng(1))
        b = predict(model, ds.X[:5], "sample-gfm", sample_count=200, rng=np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)

    def test_support_map_tie_break(self):
        sup = SupportSet((LabelVector((1,), 2), LabelVector((0,), 2)), (1, 1), 2)
        model = BrModel([LinearModel.zeros(2, 1), LinearModel.zeros(2, 1)])
        np.testing.assert_array_equal(predict(model, np.zeros((1, 1)), "support-map", support=sup), [[1, 0]])

    def test_posterior_matrix_rows_sum_to_one(self, rng):
        ds = random_dataset(n=60, l=4, seed=5)
        model = br_train(ds, ElasticNetConfig(lam=1e-2))
        post = posterior_matrix(model, ds.X, build_support(ds))
        np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)


class TestLsf:
    def test_shapes_and_ranges(self):
        ds = random_dataset(n=100, l=4, seed=6)
        model = lsf_train(ds, ElasticNetConfig(lam=1e-2))
        P, empty = model.marginal_tensor(ds.X)
        assert P.shape == (100, 4, 4) and empty.shape == (100,)
        assert np.all((P >= 0) & (P <= 1)) and np.all((empty >= 0) & (empty <= 1))
        # each row of P factors as p(y_l=1|x) times a cardinality distribution
        marg = np.column_stack([m.predict_proba(ds.X)[:, 1] for m in model.marginal_models])
        np.testing.assert_allclose(P.sum(axis=2), marg, atol=1e-12)

    def test_singleton_data_predicts_singletons(self):
        ds = multiclass_dataset(sep=3.0)
        model = lsf_train(ds, ElasticNetConfig(lam=1e-3))
        m = lsf_marginals(model, ds.X[0])
        assert np.allclose(m.p[:, 1:], 0.0, atol=0.05)
        Y = predict(model, ds.X, "support-gfm")
        assert np.mean(Y.sum(axis=1) == 1) >= 0.95

    def test_absent_label_uses_prior(self):
        ds = random_dataset(n=60, l=3, seed=7)
        Y = ds.Y.copy()
        Y[:, 2] = 0
        model = lsf_train(MultiLabelDataset.from_arrays(ds.X, Y), ElasticNetConfig(lam=1e-2))
        assert model.cardinality_models[2].nonzero_count() == 0
        P, _ = model.marginal_tensor(ds.X)
        assert np.all(P[:, 2, :] < 0.2)


def test_gfm_toy_runtime():
    m = marginals_from_posterior(toy_posterior())
    gfm(m)
    t = time.perf_counter()
    gfm(m)
    assert time.perf_counter() - t < 1e-3

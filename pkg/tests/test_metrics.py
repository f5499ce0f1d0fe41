import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlfreg.core import LabelVector
from mlfreg.metrics import EvalReport, evaluate, evaluate_matrices, instance_f1, instance_scores, mean_f1, precision, recall

L = 10
label_sets = st.sets(st.integers(0, L - 1)).map(lambda s: LabelVector(tuple(s), L))


class TestInstanceF1:
    def test_toy_case(self):
        assert instance_f1(LabelVector((1,), 3), LabelVector((1, 2), 3)) == pytest.approx(2 / 3)

    def test_empty_conventions(self):
        empty, one = LabelVector((), 3), LabelVector((0,), 3)
        assert instance_f1(empty, empty) == 1.0
        assert instance_f1(empty, one) == 0.0
        assert instance_f1(one, empty) == 0.0
        assert precision(empty, empty) == 1.0 and recall(empty, empty) == 1.0
        assert precision(one, empty) == 0.0 and recall(empty, one) == 0.0

    def test_label_space_mismatch(self):
        with pytest.raises(ValueError):
            instance_f1(LabelVector((), 2), LabelVector((), 3))

    @given(label_sets, label_sets)
    @settings(max_examples=300)
    def test_harmonic_mean_identity(self, y, p):
        P, R = precision(y, p), recall(y, p)
        if P + R > 0 and len(y) and len(p):
            assert abs(2 * P * R / (P + R) - instance_f1(y, p)) <= 1e-12

    @given(label_sets, label_sets)
    def test_symmetry_and_bounds(self, y, p):
        f = instance_f1(y, p)
        assert f == instance_f1(p, y)
        assert 0.0 <= f <= 1.0
        assert (f == 1.0) == (y.labels == p.labels)
        assert precision(y, p) == recall(p, y)


class TestReports:
    def test_identical_sets(self):
        ys = [LabelVector((0, 2), 3), LabelVector((), 3), LabelVector((1,), 3)]
        r = evaluate(ys, ys)
        assert r.mean_instance_f1 == 1.0 and r.subset_accuracy == 1.0 and r.hamming_loss == 0.0
        assert r.n_instances == 3

    def test_matrix_path_matches_scalar(self, rng):
        A = (rng.random((200, L)) < 0.3).astype(int)
        B = (rng.random((200, L)) < 0.3).astype(int)
        f, p, r = instance_scores(A, B)
        for i in range(200):
            y, q = LabelVector.from_bits(A[i]), LabelVector.from_bits(B[i])
            assert f[i] == pytest.approx(instance_f1(y, q), abs=1e-15)
            assert p[i] == pytest.approx(precision(y, q), abs=1e-15)
            assert r[i] == pytest.approx(recall(y, q), abs=1e-15)
        assert mean_f1(A, B) == pytest.approx(f.mean())

    def test_serialization(self):
        r = evaluate_matrices(np.array([[1, 0]]), np.array([[1, 1]]))
        d = json.loads(r.to_json())
        assert EvalReport(**d) == r
        assert "mean_instance_f1: 0.666" in r.to_text()

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate([LabelVector((), 2)], [])
        with pytest.raises(ValueError):
            evaluate([], [])

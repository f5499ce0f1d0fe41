import struct
import zlib
from collections import Counter

import numpy as np
import pytest

from mlfreg.core import LabelVector, MultiLabelDataset, build_support
from mlfreg.dataio import (
    ArchiveError,
    DatasetFormatError,
    SyntheticSpec,
    generate_synthetic,
    load_archive,
    load_model,
    parse_dataset,
    parse_dataset_text,
    read_label_lists,
    save_model,
    serialize_dataset,
    split_train_validation,
    write_dataset,
    write_label_lists,
)
from mlfreg.dataio.archive import FORMAT_VERSION, MAGIC, decode_model, encode_model
from mlfreg.estimators import BrModel, br_train, cbm_train_em, crf_train, pcc_train
from mlfreg.fpredict import lsf_train, predict
from mlfreg.linreg import ElasticNetConfig, LinearModel

from conftest import random_dataset


class TestDatasetFormat:
    def test_example_line(self):
        ds = parse_dataset_text("#meta N=1 D=8 L=3\n0,2\t1:0.5 7:1.0\n")
        assert ds.instances[0].nnz == 2
        assert ds.labels[0] == LabelVector((0, 2), 3)

    def test_empty_labels(self):
        ds = parse_dataset_text("\t3:1.0\n")
        assert ds.labels[0].cardinality() == 0
        assert (ds.num_features, ds.num_labels) == (4, 1)

    def test_empty_everything(self):
        ds = parse_dataset_text("#meta N=2 D=3 L=2\n\t\n1\t0:2\n")
        assert ds.instances[0].nnz == 0 and len(ds) == 2

    def test_inferred_dimensions(self):
        ds = parse_dataset_text("1\t0:1 4:2\n3\t2:1\n")
        assert (ds.num_features, ds.num_labels) == (5, 4)

    def test_roundtrip_byte_identical(self, rng):
        n, d, l = 100, 30, 6
        X = np.where(rng.random((n, d)) < 0.2, rng.normal(size=(n, d)), 0.0)
        Y = (rng.random((n, l)) < 0.3).astype(np.int8)
        text = serialize_dataset(MultiLabelDataset.from_arrays(X, Y))
        again = parse_dataset_text(text)
        assert serialize_dataset(again) == text
        np.testing.assert_array_equal(again.X.toarray(), X)
        np.testing.assert_array_equal(again.Y, Y)

    @pytest.mark.parametrize(
        "text,line",
        [
            ("#meta N=1 D=3 L=2\n0\t2:1 1:1\n", 2),
            ("#meta N=1 D=3 L=2\n5\t0:1\n", 2),
            ("#meta N=1 D=3 L=2\n0\t3:1\n", 2),
            ("0 1:1\n", 1),
            ("0\t1=1\n", 1),
            ("x\t1:1\n", 1),
            ("0,0\t1:1\n", 1),
            ("#meta N=2 D=3 L=2\n0\t1:1\n", 1),
            ("#bogus\n", 1),
        ],
    )
    def test_errors_carry_line_numbers(self, text, line):
        with pytest.raises(DatasetFormatError) as info:
            parse_dataset_text(text)
        assert info.value.line == line

    def test_file_roundtrip_with_names(self, tmp_path):
        ds = random_dataset(n=20, l=3)
        named = MultiLabelDataset(ds.instances, ds.labels, ds.num_features, ds.num_labels, label_names=("a", "b", "c"))
        write_dataset(named, tmp_path / "d.txt")
        back = parse_dataset(tmp_path / "d.txt")
        assert back.label_names == ("a", "b", "c")
        assert serialize_dataset(back) == serialize_dataset(ds)

    def test_label_lists(self, tmp_path):
        ys = [LabelVector((0, 2), 3), LabelVector((), 3), LabelVector((1,), 3)]
        write_label_lists(ys, tmp_path / "p.txt")
        assert (tmp_path / "p.txt").read_text() == "0,2\n\n1\n"
        assert read_label_lists(tmp_path / "p.txt", 3) == ys


class TestSplit:
    def test_sizes(self):
        ds = random_dataset(n=10)
        train, val = split_train_validation(ds, 0.2, seed=0)
        assert (len(train), len(val)) == (8, 2)

    def test_deterministic(self):
        ds = random_dataset(n=50)
        a = split_train_validation(ds, 0.3, seed=4)
        b = split_train_validation(ds, 0.3, seed=4)
        assert serialize_dataset(a[1]) == serialize_dataset(b[1])

    def test_partition(self):
        ds = random_dataset(n=97, seed=3)
        train, val = split_train_validation(ds, 0.25, seed=1)
        rows = lambda d: Counter(serialize_dataset(d).splitlines()[1:])  # noqa: E731
        assert rows(train) + rows(val) == rows(ds)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 0.01])
    def test_degenerate(self, fraction):
        with pytest.raises(ValueError):
            split_train_validation(random_dataset(n=10), fraction, 0)


class TestSynthetic:
    def test_noise_free_support(self):
        spec = SyntheticSpec(N=300, D=20, L=4, K_true=2, noise_rate=0.0, cluster_label_sets=((0, 1), (2, 3)))
        ds, truth = generate_synthetic(spec)
        assert len(build_support(ds)) == 2

    def test_noise_features_recorded(self):
        _, truth = generate_synthetic(SyntheticSpec(N=50, D=100, irrelevant_feature_fraction=0.5))
        assert len(truth.noise_features) == 50
        assert set(truth.noise_features).isdisjoint(truth.relevant_features)
        assert len(truth.relevant_features) == 50

    def test_deterministic(self):
        spec = SyntheticSpec(N=100, D=30, seed=7)
        assert serialize_dataset(generate_synthetic(spec)[0]) == serialize_dataset(generate_synthetic(spec)[0])

    def test_posterior_and_marginals(self):
        ds, truth = generate_synthetic(SyntheticSpec(N=2000, D=100, L=5, K_true=4, noise_rate=0.1, seed=1))
        np.testing.assert_allclose(truth.cluster_posterior.sum(axis=1), 1.0)
        # the cluster posterior is mostly right about the generating cluster
        assert np.mean(np.argmax(truth.cluster_posterior, axis=1) == truth.cluster_ids) > 0.8
        M = truth.true_marginals(5)
        assert np.abs(M.mean(axis=0) - ds.Y.mean(axis=0)).max() < 0.05

    def test_l1_selects_relevant_features(self):
        ds, truth = generate_synthetic(SyntheticSpec(N=2000, noise_rate=0.05, seed=0))
        model = br_train(ds, ElasticNetConfig(lam=1e-2, alpha=1.0))
        W = np.array([m.coef[1] for m in model.models])
        selected = np.flatnonzero(np.any(W != 0, axis=0))
        assert len(selected) > 0
        assert np.isin(selected, truth.relevant_features).mean() >= 0.8

    @pytest.mark.parametrize("kwargs", [dict(noise_rate=1.0), dict(N=0), dict(irrelevant_feature_fraction=-0.1)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SyntheticSpec(**kwargs)


def trained_models():
    ds = random_dataset(n=60, d=6, l=3, seed=2)
    cfg = ElasticNetConfig(lam=1e-2, alpha=0.5, max_iterations=50)
    sup = build_support(ds)
    return ds, sup, {
        "br": br_train(ds, cfg),
        "pcc": pcc_train(ds, (2, 0, 1), cfg),
        "cbm": cbm_train_em(ds, 2, cfg, max_em_iterations=3),
        "crf": crf_train(ds, sup, True, 1e-2, max_iterations=20),
        "lsf": lsf_train(ds, cfg),
    }


@pytest.fixture(scope="module")
def models():
    return trained_models()


class TestArchive:
    @pytest.mark.parametrize("name", ["br", "pcc", "cbm", "crf", "lsf"])
    def test_roundtrip_predictions(self, models, name, tmp_path):
        ds, sup, all_models = models
        model = all_models[name]
        stats = save_model(model, tmp_path / "m.bin", {"note": "x"})
        back = load_model(tmp_path / "m.bin")
        for strategy in ["support-gfm", "support-map"]:
            np.testing.assert_array_equal(predict(model, ds.X, strategy, support=sup),
                                          predict(back, ds.X, strategy, support=sup))
        if name != "lsf":
            np.testing.assert_array_equal(model.log_joint_matrix(ds.X, sup.matrix), back.log_joint_matrix(ds.X, sup.matrix))
        assert stats.byte_size == (tmp_path / "m.bin").stat().st_size
        # save-load-save is byte identical
        save_model(back, tmp_path / "m2.bin", {"note": "x"})
        assert (tmp_path / "m.bin").read_bytes() == (tmp_path / "m2.bin").read_bytes()

    def test_nonzero_count_recount(self, models, tmp_path):
        _, _, all_models = models
        cbm = all_models["cbm"]
        stats = save_model(cbm, tmp_path / "c.bin")
        recount = np.count_nonzero(cbm.gating.coef) + sum(np.count_nonzero(m.coef) for c in cbm.components for m in c)
        assert stats.nonzero_weight_count == recount

    def test_zero_model(self, tmp_path):
        small = save_model(BrModel([LinearModel.zeros(2, 1000)]), tmp_path / "z.bin")
        assert small.nonzero_weight_count == 0
        assert small.selected_feature_count == 0
        assert small.byte_size < 200

    def test_metadata(self, models, tmp_path):
        _, _, all_models = models
        save_model(all_models["pcc"], tmp_path / "p.bin", {"train_path": "/x"})
        arch = load_archive(tmp_path / "p.bin")
        assert arch.metadata["kind"] == "PCC" and arch.metadata["train_path"] == "/x"
        assert arch.model.order == (2, 0, 1)

    def test_corruption_detected(self, models, tmp_path):
        data = bytearray(encode_model(models[2]["br"]))
        data[40] ^= 0xFF
        with pytest.raises(ArchiveError, match="checksum"):
            decode_model(bytes(data))

    def test_version_mismatch(self, models):
        data = encode_model(models[2]["br"])
        body = MAGIC + struct.pack("<H", FORMAT_VERSION + 1) + data[len(MAGIC) + 2 : -4]
        with pytest.raises(ArchiveError, match="version"):
            decode_model(body + struct.pack("<I", zlib.crc32(body)))

    def test_not_an_archive(self):
        with pytest.raises(ArchiveError):
            decode_model(b"hello world, definitely not an archive")

    def test_l1_shrinks_archive(self, tmp_path):
        ds, _ = generate_synthetic(SyntheticSpec(N=1000, seed=3))
        l1 = save_model(br_train(ds, ElasticNetConfig(lam=1e-2, alpha=0.9)), tmp_path / "a.bin")
        l2 = save_model(br_train(ds, ElasticNetConfig(lam=1e-2, alpha=0.0)), tmp_path / "b.bin")
        assert l1.byte_size < 0.5 * l2.byte_size

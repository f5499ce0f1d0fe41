import json

import numpy as np
import pytest

from mlfreg.cli import build_parser, main
from mlfreg.dataio import load_archive, parse_dataset, read_label_lists


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def status(out):
    return json.loads(out.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synth.txt"
    assert main(["gen-synthetic", "--n", "400", "--d", "30", "--l", "4", "--k-true", "3", "--seed", "1",
                 "--out", str(path)]) == 0
    return path


class TestGenSynthetic:
    def test_outputs(self, data_file):
        ds = parse_dataset(data_file)
        assert (len(ds), ds.num_features, ds.num_labels) == (400, 30, 4)
        truth = json.loads(data_file.with_name(data_file.name + ".truth.json").read_text())
        assert len(truth["noise_features"]) == 15
        assert data_file.with_name(data_file.name + ".manifest.json").exists()

    def test_deterministic(self, tmp_path, capsys):
        for name in ["a.txt", "b.txt"]:
            run(capsys, "gen-synthetic", "--n", "50", "--d", "10", "--seed", "3", "--out", tmp_path / name)
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


class TestTrainPredictEval:
    def test_pipeline(self, data_file, tmp_path, capsys):
        model = tmp_path / "m.bin"
        code, out, _ = run(capsys, "train", "--data", data_file, "--out", model, "--classifier", "pcc",
                           "--max-iterations", "60")
        assert code == 0 and status(out)["status"] == "ok"
        assert json.loads((tmp_path / "m.bin.log.json").read_text())["best_iteration"] is not None
        manifest = json.loads((tmp_path / "m.bin.manifest.json").read_text())
        assert manifest["command"] == "train" and manifest["seed"] == 0

        preds = tmp_path / "p.txt"
        code, out, _ = run(capsys, "predict", "--model", model, "--data", data_file, "--out", preds)
        assert code == 0 and len(read_label_lists(preds, 4)) == 400

        code, out, _ = run(capsys, "eval", "--truth", data_file, "--predictions", preds, "--out", tmp_path / "r.json")
        assert code == 0 and "mean_instance_f1" in out
        assert 0.3 < json.loads((tmp_path / "r.json").read_text())["mean_instance_f1"] <= 1.0

    def test_training_is_deterministic(self, data_file, tmp_path, capsys):
        for name in ["a.bin", "b.bin"]:
            run(capsys, "train", "--data", data_file, "--out", tmp_path / name, "--max-iterations", "40")
        a, b = load_archive(tmp_path / "a.bin"), load_archive(tmp_path / "b.bin")
        for ma, mb in zip(a.model.models, b.model.models):
            np.testing.assert_array_equal(ma.coef, mb.coef)

    def test_alpha_zero_is_dense(self, data_file, tmp_path, capsys):
        code, _, _ = run(capsys, "train", "--data", data_file, "--out", tmp_path / "d.bin", "--alpha", "0",
                         "--lambda", "1e-3", "--no-early-stop", "--max-iterations", "30")
        assert code == 0
        model = load_archive(tmp_path / "d.bin").model
        # binary labels keep one margin row; every feature in it is nonzero under pure L2
        assert all(np.count_nonzero(m.coef) == 30 for m in model.models)

    def test_cbm_defaults_to_twenty_components(self, data_file, tmp_path, capsys):
        code, _, _ = run(capsys, "train", "--data", data_file, "--out", tmp_path / "c.bin", "--classifier", "cbm",
                         "--em-iterations", "1", "--no-early-stop")
        assert code == 0
        arch = load_archive(tmp_path / "c.bin")
        assert arch.metadata["components"] == 20 and arch.metadata["config"]["components"] == 20

    def test_crf_without_pairwise(self, data_file, tmp_path, capsys):
        code, _, _ = run(capsys, "train", "--data", data_file, "--out", tmp_path / "r.bin", "--classifier", "crf",
                         "--no-pairwise", "--max-iterations", "20")
        assert code == 0
        arch = load_archive(tmp_path / "r.bin")
        assert arch.stats.per_model_nonzero["pairwise"] == 0

    def test_crf_sample_gfm_is_a_config_error(self, data_file, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--data", data_file, "--out", tmp_path / "x.bin", "--classifier", "crf",
                           "--prediction", "sample-gfm")
        assert code == 2
        assert json.loads(err.strip().splitlines()[-1])["status"] == "error"
        assert not (tmp_path / "x.bin").exists()

    def test_predict_with_explicit_support(self, data_file, tmp_path, capsys):
        run(capsys, "train", "--data", data_file, "--out", tmp_path / "m.bin", "--max-iterations", "20")
        code, _, _ = run(capsys, "predict", "--model", tmp_path / "m.bin", "--data", data_file,
                         "--support", data_file, "--strategy", "support-map", "--out", tmp_path / "p.txt")
        assert code == 0
        support = {y.labels for y in parse_dataset(data_file).labels}
        assert all(y.labels in support for y in read_label_lists(tmp_path / "p.txt", 4))


class TestEval:
    def test_identical_files(self, tmp_path, capsys):
        (tmp_path / "t.txt").write_text("0,1\n\n2\n")
        code, _, _ = run(capsys, "eval", "--truth", tmp_path / "t.txt", "--predictions", tmp_path / "t.txt",
                         "--out", tmp_path / "r.json")
        assert code == 0
        assert json.loads((tmp_path / "r.json").read_text())["mean_instance_f1"] == 1.0

    def test_toy_pair(self, tmp_path, capsys):
        (tmp_path / "t.txt").write_text("1\n")
        (tmp_path / "p.txt").write_text("1,2\n")
        run(capsys, "eval", "--truth", tmp_path / "t.txt", "--predictions", tmp_path / "p.txt", "--out", tmp_path / "r.json")
        assert json.loads((tmp_path / "r.json").read_text())["mean_instance_f1"] == pytest.approx(2 / 3)


class TestTuneSizeAblate:
    def test_tune_single_cell(self, data_file, tmp_path, capsys):
        code, out, _ = run(capsys, "tune", "--data", data_file, "--lambdas", "1e-3", "--alphas", "0.5",
                           "--max-iterations", "30", "--out", tmp_path / "t.json")
        assert code == 0
        report = json.loads((tmp_path / "t.json").read_text())
        assert len(report["cells"]) == 1 and report["best"]["lambda"] == 1e-3
        assert report["best_config"]["alpha"] == 0.5

    def test_tune_skips_absurd_lambda(self, data_file, tmp_path, capsys):
        code, _, _ = run(capsys, "tune", "--data", data_file, "--lambdas", "1e-3,1e4", "--alphas", "0.5",
                         "--max-iterations", "30", "--out", tmp_path / "t.json")
        assert code == 0
        assert json.loads((tmp_path / "t.json").read_text())["best"]["lambda"] == 1e-3

    def test_model_size(self, data_file, tmp_path, capsys):
        run(capsys, "train", "--data", data_file, "--out", tmp_path / "m.bin", "--max-iterations", "20")
        code, _, _ = run(capsys, "model-size", "--model", tmp_path / "m.bin", "--out", tmp_path / "s.json")
        report = json.loads((tmp_path / "s.json").read_text())
        assert code == 0 and report["kind"] == "BR"
        assert report["byte_size"] == (tmp_path / "m.bin").stat().st_size
        assert (tmp_path / "s.json.manifest.json").exists()

    def test_ablate(self, data_file, tmp_path, capsys):
        code, out, _ = run(capsys, "ablate", "--data", data_file, "--classifiers", "br", "--cells", "No REG,All4",
                           "--lambdas", "1e-2", "--alphas", "0.5", "--no-average", "--max-iterations", "30",
                           "--out", tmp_path / "a.json")
        assert code == 0
        report = json.loads((tmp_path / "a.json").read_text())
        assert set(report["mean_test_f1"]) == {"No REG", "All4"}
        assert (tmp_path / "a.json.txt").read_text().startswith("cell")


class TestErrors:
    def test_unknown_command(self, capsys):
        assert run(capsys, "frobnicate")[0] == 2

    def test_missing_required(self, capsys):
        assert run(capsys, "train")[0] == 2

    def test_bad_dataset(self, tmp_path, capsys):
        (tmp_path / "bad.txt").write_text("0 1:1\n")
        code, _, err = run(capsys, "train", "--data", tmp_path / "bad.txt", "--out", tmp_path / "m.bin")
        assert code == 2 and "line 1" in err

    def test_bad_ablation_cell(self, data_file, tmp_path, capsys):
        code, _, _ = run(capsys, "ablate", "--data", data_file, "--cells", "L+Q", "--out", tmp_path / "a.json")
        assert code == 2

    def test_parser_lists_commands(self):
        help_text = build_parser().format_help()
        for cmd in ["train", "tune", "predict", "eval", "model-size", "ablate", "gen-synthetic"]:
            assert cmd in help_text

import json

import pytest

from fairdp.cli import load_config, main
from fairdp.errors import ConfigError

MINIMAL_SYNTH = """
[dataset]
kind = synth
n_major = 120
n_minor = 40
dim = 4
separation_major = 3.0
separation_minor = 1.0
split_fraction = 0.8
seed = 7

[model]
kind = softmax
l2 = 0.01

[training]
strategy = {strategy}
clip = 1.0
sigma2 = 0.6
lr = 0.2
batch_size = 32
epochs = 2
delta = 1e-6
seed = 11

[report]
out_dir = {out_dir}
tau = 0.05
"""


def write_config(tmp_path, out_dir, strategy="dpsgd", training_extra="",
                 name="exp.ini"):
    path = tmp_path / name
    text = MINIMAL_SYNTH.format(strategy=strategy, out_dir=out_dir)
    if training_extra:
        text = text.replace("seed = 11\n", f"seed = 11\n{training_extra}\n")
    path.write_text(text, encoding="utf-8")
    return path


ARTIFACTS = ("run.json", "epochs.csv", "params.bin", "fairness.json")


class TestConfigValidation:
    def test_valid_config_parses(self, tmp_path):
        cfg = load_config(write_config(tmp_path, tmp_path / "out"))
        assert cfg["training"]["strategy"] == "dpsgd"
        assert cfg["training"]["sigma1"] == pytest.approx(6.0)  # 10x default
        assert cfg["report"]["tau"] == 0.05

    def test_unknown_key_rejected_with_name(self, tmp_path, capsys):
        path = write_config(tmp_path, tmp_path / "out", training_extra="warmup = 5")
        code = main(["train", "--config", str(path)])
        assert code == 2
        assert "warmup" in capsys.readouterr().err

    def test_unknown_section_rejected(self, tmp_path):
        path = write_config(tmp_path, tmp_path / "out")
        path.write_text(path.read_text() + "\n[plotting]\nx = 1\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="plotting"):
            load_config(path)

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(MINIMAL_SYNTH.format(strategy="dpsgd", out_dir="o")
                        .replace("sigma2 = 0.6\n", ""), encoding="utf-8")
        with pytest.raises(ConfigError, match="sigma2"):
            load_config(path)

    def test_explicit_sigma1_overrides_ratio(self, tmp_path):
        path = write_config(tmp_path, tmp_path / "out", training_extra="sigma1 = 2.5")
        assert load_config(path)["training"]["sigma1"] == 2.5

    def test_bad_strategy_name(self, tmp_path):
        path = write_config(tmp_path, tmp_path / "out", strategy="dpsgd2")
        with pytest.raises(ConfigError, match="strategy"):
            load_config(path)


class TestTrainCommand:
    def test_writes_all_artifacts(self, tmp_path):
        out = tmp_path / "out"
        code = main(["train", "--config", str(write_config(tmp_path, out))])
        assert code == 0
        for sub in ("nonprivate", "dpsgd"):
            for name in ARTIFACTS:
                assert (out / sub / name).exists(), f"{sub}/{name}"
        assert (out / "impact.json").exists()
        run = json.loads((out / "dpsgd" / "run.json").read_text())
        assert run["accounting_assumption"] == "poisson-approx"
        assert run["epsilon"] > 0
        assert run["event_kinds"] == ["gradient-noise"]
        assert run["iterations_executed"] == 2 * (128 // 32)
        assert set(run["train_sizes"]) == {"major", "minor"}
        baseline = json.loads((out / "nonprivate" / "run.json").read_text())
        assert baseline["epsilon"] is None

    def test_byte_identical_reruns(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", str(write_config(tmp_path, out1))]) == 0
        assert main(["train", "--config",
                     str(write_config(tmp_path, out2, name="exp2.ini"))]) == 0
        for sub in ("nonprivate", "dpsgd"):
            for name in ARTIFACTS:
                a = (out1 / sub / name).read_bytes()
                b = (out2 / sub / name).read_bytes()
                assert a == b, f"{sub}/{name} differs between reruns"
        assert (out1 / "impact.json").read_bytes() == (out2 / "impact.json").read_bytes()

    def test_dpsgdf_records_two_event_kinds(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, out, strategy="dpsgd-f")
        assert main(["train", "--config", str(path)]) == 0
        run = json.loads((out / "dpsgd-f" / "run.json").read_text())
        assert run["event_kinds"] == ["count-noise", "gradient-noise"]

    def test_epochs_csv_shape(self, tmp_path):
        out = tmp_path / "out"
        assert main(["train", "--config", str(write_config(tmp_path, out))]) == 0
        lines = (out / "dpsgd" / "epochs.csv").read_text().strip().splitlines()
        assert lines[0].startswith("epoch,group,mean_loss")
        assert len(lines) == 1 + 2 * 2  # header + 2 epochs x 2 groups


class TestAccountantCommand:
    def test_json_output(self, capsys):
        code = main(["accountant", "--n", "54649", "--batch-size", "256",
                     "--sigma", "0.8", "--epochs", "60", "--delta", "1e-6"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert out["iterations"] == 60 * (54649 // 256)
        assert out["accounting_assumption"] == "poisson-approx"
        assert 6.2 < out["epsilon"] < 6.9

    def test_sigma1_adds_budget(self, capsys):
        args = ["accountant", "--n", "10000", "--batch-size", "100",
                "--sigma", "1.0", "--epochs", "5", "--delta", "1e-6"]
        main(args)
        base = json.loads(capsys.readouterr().out)["epsilon"]
        main(args + ["--sigma1", "10.0"])
        with_counts = json.loads(capsys.readouterr().out)["epsilon"]
        assert with_counts > base
        assert with_counts < base + 0.1  # the count mechanism is much quieter

    def test_zero_epochs_rejected(self, capsys):
        code = main(["accountant", "--n", "1000", "--batch-size", "100",
                     "--sigma", "1.0", "--epochs", "0", "--delta", "1e-6"])
        assert code == 2
        assert "epochs" in capsys.readouterr().err


class TestAnalyzeCommand:
    def test_bounds_json(self, tmp_path, capsys):
        path = tmp_path / "norms.csv"
        path.write_text("norm,group\n2.0,0\n2.0,0\n0.5,1\n0.1,1\n", encoding="utf-8")
        code = main(["analyze", "--norms-csv", str(path), "--clip", "1.0",
                     "--eps", "1.0"])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        by_group = {g["group"]: g for g in out["groups"]}
        assert by_group[0]["bias_term"] == pytest.approx(1.0)
        assert by_group[0]["upper"] == pytest.approx(1.5)
        assert by_group[1]["bias_term"] == 0.0
        assert out["optimal_clip"] == 2.0

    def test_missing_columns(self, tmp_path, capsys):
        path = tmp_path / "norms.csv"
        path.write_text("value\n1.0\n", encoding="utf-8")
        assert main(["analyze", "--norms-csv", str(path), "--clip", "1.0",
                     "--eps", "1.0"]) == 3


class TestPrepareDataCommand:
    def test_writes_caches_and_summary(self, tmp_path, capsys):
        out = tmp_path / "prep"
        path = write_config(tmp_path, tmp_path / "unused")
        code = main(["prepare-data", "--config", str(path), "--out", str(out)])
        assert code == 0
        for name in ("dataset.bin", "train.bin", "test.bin", "prepared.json"):
            assert (out / name).exists()
        summary = json.loads(capsys.readouterr().out)
        assert summary["rows"] == 160
        assert summary["group_sizes"] == {"major": 120, "minor": 40}


class TestCompareCommand:
    def run_two(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        main(["train", "--config", str(write_config(tmp_path, out1))])
        main(["train", "--config", str(write_config(tmp_path, out2,
                                                    strategy="dpsgd-f",
                                                    name="exp2.ini"))])
        return out1, out2

    def test_table_rows(self, tmp_path, capsys):
        out1, out2 = self.run_two(tmp_path)
        capsys.readouterr()  # drain the training summaries
        code = main(["compare", str(out1), str(out2)])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].split(",")[:4] == ["strategy", "epsilon", "iterations",
                                           "accuracy_total"]
        strategies = [line.split(",")[0] for line in lines[1:]]
        assert strategies == ["sgd", "dpsgd", "dpsgd-f"]
        # the shared baseline row carries zero deltas
        header = lines[0].split(",")
        sgd = dict(zip(header, lines[1].split(",")))
        assert float(sgd["delta_total"]) == 0.0
        assert float(sgd["delta_major"]) == 0.0

    def test_out_files(self, tmp_path, capsys):
        out1, out2 = self.run_two(tmp_path)
        dest = tmp_path / "cmp"
        assert main(["compare", str(out1), str(out2), "--out", str(dest)]) == 0
        capsys.readouterr()
        assert (dest / "compare.csv").exists()
        rows = json.loads((dest / "compare.json").read_text())
        assert [r["strategy"] for r in rows] == ["sgd", "dpsgd", "dpsgd-f"]

    def test_fingerprint_mismatch(self, tmp_path, capsys):
        out1 = tmp_path / "r1"
        out3 = tmp_path / "r3"
        main(["train", "--config", str(write_config(tmp_path, out1))])
        other = write_config(tmp_path, out3, name="exp3.ini")
        other.write_text(other.read_text().replace("seed = 7", "seed = 8"),
                         encoding="utf-8")
        main(["train", "--config", str(other)])
        code = main(["compare", str(out1), str(out3)])
        assert code == 3
        assert "fingerprint" in capsys.readouterr().err

    def test_missing_dir_listed(self, tmp_path, capsys):
        code = main(["compare", str(tmp_path / "absent")])
        assert code == 3
        assert "absent" in capsys.readouterr().err

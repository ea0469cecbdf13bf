import json
from pathlib import Path

import pytest

from conceptcert.cli import main

SMALL_CONFIG = """
seed = 11

[data]
d_input = 6
d0 = 6
m_true = 6
d_z = 3
n_train = 96
n_test = 12
hidden = 10
concept_rank = 3

[train]
proj_steps = 200
n_iters = 200

[smoothing]
m = 4

[attack]
radii = [0.0313725490196]
iters = 3

[certify]
k = 2
beta = 0.67
samples = 8

[report]
repetitions = 2
max_inputs = 6
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_CONFIG)
    return path


def run(args):
    return main([str(a) for a in args])


class TestUsage:
    def test_unknown_subcommand_exits_1(self, capsys):
        assert run(["frobnicate"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_missing_subcommand_exits_1(self):
        assert run([]) == 1

    def test_bad_config_path_exits_2(self, tmp_path):
        assert run(["--config", tmp_path / "nope.toml", "synth"]) == 2

    def test_unknown_config_key_exits_2(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[data]\nbogus = 1\n")
        assert run(["--config", bad, "--out-dir", tmp_path / "o", "synth"]) == 2


class TestSynthTrain:
    def test_synth_writes_dataset(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert run(["--config", config_file, "--out-dir", out, "synth"]) == 0
        assert (out / "data" / "dataset.json").exists()
        assert (out / "data" / "concepts.json").exists()
        assert (out / "data" / "image_embeddings.csv").exists()

    def test_train_deterministic_bundles(self, config_file, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert run(["--config", config_file, "--out-dir", out1, "train"]) == 0
        assert run(["--config", config_file, "--out-dir", out2, "train"]) == 0
        assert (out1 / "model.json").read_bytes() == (out2 / "model.json").read_bytes()

    def test_train_from_saved_dataset(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert run(["--config", config_file, "--out-dir", out, "synth"]) == 0
        code = run(
            ["--config", config_file, "--out-dir", out, "train", "--data", out / "data"]
        )
        assert code == 0
        assert (out / "model.json").exists()

    def test_seed_override_changes_bundle(self, config_file, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        run(["--config", config_file, "--out-dir", out1, "train"])
        run(["--config", config_file, "--seed", 999, "--out-dir", out2, "train"])
        assert (out1 / "model.json").read_bytes() != (out2 / "model.json").read_bytes()


class TestCertifyAttack:
    def test_certify_writes_flat_reports(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert run(["--config", config_file, "--out-dir", out, "certify"]) == 0
        payload = json.loads((out / "certificates.json").read_text())
        certs = payload["certificates"]
        assert len(certs) == 6
        for cert in certs:
            assert set(cert) == {
                "sigma",
                "m",
                "alpha_star",
                "r_topk",
                "r_pred",
                "r_final",
                "gamma",
                "p1_lower",
                "p2_upper",
                "delta",
            }

    def test_attack_writes_norm_columns(self, config_file, tmp_path):
        out = tmp_path / "out"
        assert run(["--config", config_file, "--out-dir", out, "attack"]) == 0
        files = json.loads((out / "attack_manifest.json").read_text())["files"]
        assert len(files) == 1
        csv_path = out / files[0]["file"]
        header = csv_path.read_text().splitlines()[0].split(",")
        assert header[-2:] == ["l2_norm", "linf_norm"]
        rows = csv_path.read_text().splitlines()[1:]
        assert len(rows) == 6
        for row in rows:
            linf = float(row.split(",")[-1])
            assert linf <= files[0]["rho"] + 1e-12


class TestSweep:
    def test_smoke_and_byte_identical(self, config_file, tmp_path):
        out1 = tmp_path / "r1"
        out2 = tmp_path / "r2"
        assert run(["--config", config_file, "--out-dir", out1, "sweep"]) == 0
        assert run(["--config", config_file, "--out-dir", out2, "sweep"]) == 0
        for name in ("report.csv", "report.json", "concept_weights.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
        assert (out1 / "timing.json").exists()
        payload = json.loads((out1 / "report.json").read_text())
        assert payload["config"]["seed"] == 11
        assert len(payload["rows"]) == 1 * 4


class TestIntervene:
    def test_no_edits_prints_unchanged(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(["--config", config_file, "--out-dir", out, "intervene"]) == 0
        text = capsys.readouterr().out
        assert "prediction unchanged" in text
        before = [l for l in text.splitlines() if l.startswith("before:")][0]
        after = [l for l in text.splitlines() if l.startswith("after:")][0]
        assert before.split(":")[1].split("->")[0].strip() == after.split(":")[1].split("->")[0].strip()

    def test_edit_applies(self, config_file, tmp_path, capsys):
        out = tmp_path / "out"
        code = run(
            ["--config", config_file, "--out-dir", out, "intervene", "--edit", "0=5.0"]
        )
        assert code == 0
        assert "after:" in capsys.readouterr().out

    def test_bad_edit_exits_1(self, config_file, tmp_path):
        out = tmp_path / "out"
        code = run(["--config", config_file, "--out-dir", out, "intervene", "--edit", "zap"])
        assert code == 1

    def test_index_out_of_range_exits_2(self, config_file, tmp_path):
        out = tmp_path / "out"
        code = run(["--config", config_file, "--out-dir", out, "intervene", "--input", "99"])
        assert code == 2

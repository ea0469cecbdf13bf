import numpy as np
import pytest

from conceptcert.attacks import AttackConfig
from conceptcert.config import CertifySettings, TrainSettings
from conceptcert.data import SyntheticSpec, synth_dataset
from conceptcert.errors import ParameterError
from conceptcert.evaluate import (
    REPORT_COLUMNS,
    accuracy,
    read_report,
    sensitivity_specificity,
    stability_sweep,
    write_report,
)
from conceptcert.pipeline import train_model
from conceptcert.smoothing import Denoiser, NoiseSchedule, PipelineVariant, SmoothingParams


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0

    def test_all_wrong(self):
        assert accuracy([1, 2, 0], [0, 1, 2]) == 0.0

    def test_three_of_four(self):
        assert accuracy([0, 1, 2, 2], [0, 1, 2, 0]) == 0.75

    def test_distribution_rows(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8]])
        assert accuracy(probs, [0, 1]) == 1.0

    def test_empty(self):
        with pytest.raises(ParameterError):
            accuracy([], [])


class TestSensitivitySpecificity:
    def test_perfect(self):
        ss = sensitivity_specificity([0, 1, 0, 1], [0, 1, 0, 1], 2)
        assert ss.macro_sensitivity == 1.0
        assert ss.macro_specificity == 1.0

    def test_always_negative_binary(self):
        ss = sensitivity_specificity([0, 0, 0, 0], [1, 1, 0, 0], 2)
        assert ss.sensitivity[1] == 0.0
        assert ss.specificity[1] == 1.0

    def test_hand_counts(self):
        # one-vs-rest for class 1: TP=8, FN=2, TN=7, FP=3
        labels = [1] * 10 + [0] * 10
        preds = [1] * 8 + [0] * 2 + [0] * 7 + [1] * 3
        ss = sensitivity_specificity(preds, labels, 2)
        assert ss.sensitivity[1] == pytest.approx(0.8)
        assert ss.specificity[1] == pytest.approx(0.7)

    def test_absent_class_excluded_from_macro(self):
        ss = sensitivity_specificity([0, 1], [0, 1], 3)
        assert ss.sensitivity[2] is None
        assert ss.macro_sensitivity == 1.0

    def test_ranges(self):
        rng = np.random.default_rng(0)
        preds = rng.integers(0, 3, 60)
        labels = rng.integers(0, 3, 60)
        ss = sensitivity_specificity(preds, labels, 3)
        for v in ss.sensitivity + ss.specificity:
            if v is not None:
                assert 0.0 <= v <= 1.0


@pytest.fixture(scope="module")
def sweep_setup():
    spec = SyntheticSpec(
        d_input=8, d0=8, m_true=8, d_z=3, n_train=120, n_test=8, hidden=12, seed=21
    )
    ds = synth_dataset(spec)
    model, _ = train_model(ds, TrainSettings(proj_steps=300, n_iters=300), seed=21)
    params = SmoothingParams(
        sigma=8 / 255,
        m=8,
        schedule=NoiseSchedule.geometric(),
        denoiser=Denoiser(kind="gmm_posterior_mean", prior=ds.prior),
    )
    return ds, model, params


ALL = [
    PipelineVariant(False, False),
    PipelineVariant(False, True),
    PipelineVariant(True, False),
    PipelineVariant(True, True),
]


def run_sweep(ds, model, params, radii=(0.0, 8 / 255), reps=2, seed=77):
    return stability_sweep(
        model,
        ds,
        list(radii),
        ALL,
        params,
        CertifySettings(k=3, beta=0.67, samples=8),
        AttackConfig(),
        repetitions=reps,
        base_seed=seed,
        max_inputs=8,
    )


class TestStabilitySweep:
    def test_row_count_is_grid_size(self, sweep_setup):
        ds, model, params = sweep_setup
        rep = run_sweep(ds, model, params)
        assert len(rep.rows) == 2 * 4
        assert len(rep.rep_rows) == 2 * 4 * 2

    def test_zero_radius_plain_row(self, sweep_setup):
        ds, model, params = sweep_setup
        rep = run_sweep(ds, model, params)
        plain0 = next(
            r for r in rep.rows if r["rho"] == 0.0 and r["variant"] == "plain"
        )
        # clean deterministic pipeline: no perturbation, identical vectors
        assert plain0["cfs"] == 0.0
        assert plain0["cpcs"] == pytest.approx(1.0)
        clean_acc = accuracy(model.predict_proba(ds.x_test[:8]), ds.y_test[:8])
        assert plain0["accuracy"] == pytest.approx(clean_acc)

    def test_metric_ranges(self, sweep_setup):
        ds, model, params = sweep_setup
        rep = run_sweep(ds, model, params)
        for row in rep.rows + rep.rep_rows:
            assert 0.0 <= row["accuracy"] <= 1.0
            assert 0.0 <= row["sensitivity"] <= 1.0
            assert 0.0 <= row["specificity"] <= 1.0
            assert row["cfs"] >= 0.0
            assert -1.0 <= row["cpcs"] <= 1.0
            assert row["r_topk"] >= 0.0 and row["r_pred"] >= 0.0
            assert row["r_final"] <= row["r_topk"] + 1e-12
            assert row["r_final"] <= row["r_pred"] + 1e-12

    def test_deterministic_given_seed(self, sweep_setup):
        ds, model, params = sweep_setup
        a = run_sweep(ds, model, params, reps=1)
        b = run_sweep(ds, model, params, reps=1)
        assert a.rows == b.rows
        assert a.rep_rows == b.rep_rows

    def test_deterministic_variants_certify_nothing(self, sweep_setup):
        ds, model, params = sweep_setup
        rep = run_sweep(ds, model, params, radii=(8 / 255,), reps=1)
        for row in rep.rows:
            if not row["smoothing"]:
                assert row["r_topk"] == 0.0 and row["r_final"] == 0.0
            else:
                assert row["r_topk"] > 0.0

    def test_concept_weight_records(self, sweep_setup):
        ds, model, params = sweep_setup
        rep = run_sweep(ds, model, params, radii=(8 / 255,), reps=1)
        m = model.n_concepts
        # M rows per (input, condition)
        assert len(rep.concept_weights) == 8 * 4 * m
        rec = rep.concept_weights[0]
        assert set(rec) == {
            "input",
            "rho",
            "variant",
            "concept",
            "clean_weight",
            "perturbed_weight",
        }

    def test_repetition_averaging_reduces_spread(self, sweep_setup):
        # std of per-rep CFS across reps exceeds the deviation of the
        # 2-rep mean from a 4-rep mean (sanity, smoothed variant)
        ds, model, params = sweep_setup
        rep = run_sweep(ds, model, params, radii=(8 / 255,), reps=4)
        vals = [
            r["cfs"]
            for r in rep.rep_rows
            if r["variant"] == "smoothing_only" and r["rho"] > 0
        ]
        assert len(vals) == 4
        mean4 = np.mean(vals)
        assert abs(np.mean(vals[:2]) - mean4) <= max(np.std(vals), 1e-12) + 1e-12


class TestWriteReport:
    def test_files_and_round_trip(self, sweep_setup, tmp_path):
        ds, model, params = sweep_setup
        rep = run_sweep(ds, model, params, reps=1)
        rep.config_echo = {"seed": 77}
        paths = write_report(rep, tmp_path)
        assert paths["csv"].exists() and paths["json"].exists()
        back = read_report(paths["json"])
        assert back == rep.to_json_dict()
        with open(paths["csv"]) as fh:
            header = fh.readline().strip().split(",")
            n_lines = sum(1 for _ in fh)
        assert header == REPORT_COLUMNS
        assert n_lines == len(rep.rows)

    def test_byte_identical_reruns(self, sweep_setup, tmp_path):
        ds, model, params = sweep_setup
        rep1 = run_sweep(ds, model, params, reps=1)
        rep2 = run_sweep(ds, model, params, reps=1)
        d1 = tmp_path / "a"
        d2 = tmp_path / "b"
        write_report(rep1, d1)
        write_report(rep2, d2)
        for name in ("report.csv", "report.json", "concept_weights.csv"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

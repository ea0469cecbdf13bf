"""Metrics and the attack-and-measure sweep.

The sweep crosses perturbation radii with the four ablation variants,
attacks every test input with the deterministic pipeline's gradient,
re-evaluates each variant on clean and attacked inputs with matched noise
seeds, and aggregates stability metrics, classification quality, and
certified radii over seeded repetitions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, pgd_attack
from .certify import certified_radius, estimate_p_bounds
from .config import CertifySettings, ExperimentConfig
from .errors import ParameterError
from .metrics import cfs, cpcs, normalize_to_simplex
from .smoothing import PipelineVariant, SmoothingParams, evaluate_variant

__all__ = [
    "accuracy",
    "sensitivity_specificity",
    "SensSpec",
    "ExperimentReport",
    "stability_sweep",
    "write_report",
    "read_report",
    "REPORT_COLUMNS",
]

# Seed layout: repetitions are offset by base_seed + rep; inputs within a
# repetition are spaced far enough apart that the per-sample seeds
# (base + sample index) of different inputs never collide.
_INPUT_SEED_STRIDE = 1_000_003


def accuracy(predictions, labels) -> float:
    """Fraction of argmax matches; accepts labels or distribution rows."""
    preds = np.asarray(predictions)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.size == 0:
        raise ParameterError("empty predictions")
    if preds.ndim == 2:
        preds = np.argmax(preds, axis=1)
    if preds.shape[0] != labels.shape[0]:
        raise ParameterError("prediction and label counts differ")
    return float(np.mean(preds == labels))


@dataclass
class SensSpec:
    """One-vs-rest true-positive and true-negative rates.

    Per-class entries are None when undefined (class absent from the
    labels, or no negatives); macro averages skip undefined classes.
    """

    sensitivity: list
    specificity: list
    macro_sensitivity: float
    macro_specificity: float


def sensitivity_specificity(predictions, labels, n_classes: int) -> SensSpec:
    preds = np.asarray(predictions)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.ndim == 2:
        preds = np.argmax(preds, axis=1)
    if n_classes < 2:
        raise ParameterError("need at least 2 classes")
    sens, spec = [], []
    for c in range(n_classes):
        pos = labels == c
        neg = ~pos
        tp = int(np.sum(pos & (preds == c)))
        fn = int(np.sum(pos & (preds != c)))
        tn = int(np.sum(neg & (preds != c)))
        fp = int(np.sum(neg & (preds == c)))
        sens.append(tp / (tp + fn) if tp + fn > 0 else None)
        spec.append(tn / (tn + fp) if tn + fp > 0 else None)
    defined_s = [s for s in sens if s is not None]
    defined_p = [s for s in spec if s is not None]
    return SensSpec(
        sensitivity=sens,
        specificity=spec,
        macro_sensitivity=float(np.mean(defined_s)) if defined_s else float("nan"),
        macro_specificity=float(np.mean(defined_p)) if defined_p else float("nan"),
    )


REPORT_COLUMNS = [
    "rho",
    "variant",
    "denoising",
    "smoothing",
    "accuracy",
    "sensitivity",
    "specificity",
    "cfs",
    "cpcs",
    "r_topk",
    "r_pred",
    "r_final",
]

ALL_VARIANTS = (
    PipelineVariant(False, False),
    PipelineVariant(False, True),
    PipelineVariant(True, False),
    PipelineVariant(True, True),
)


@dataclass
class ExperimentReport:
    config_echo: dict
    base_seed: int
    rep_seeds: list
    rows: list  # aggregated over repetitions, one dict per condition
    rep_rows: list  # one dict per (condition, repetition)
    concept_weights: list = field(default_factory=list)
    wall_clock_seconds: float | None = None  # not serialized; see timing.json

    def to_json_dict(self) -> dict:
        return {
            "config": self.config_echo,
            "base_seed": self.base_seed,
            "rep_seeds": self.rep_seeds,
            "rows": self.rows,
            "rep_rows": self.rep_rows,
        }


def certify_smoothed_output(out, certify: CertifySettings):
    """Certificate for one smoothed evaluation: simplex-normalize the mean
    concepts, bound the class probabilities from the vote counts, invert."""
    w = normalize_to_simplex(out.mean_concepts)
    p1_lower, p2_upper = estimate_p_bounds(out.class_counts, certify.delta)
    return certified_radius(
        out.sigma,
        w,
        certify.k,
        certify.beta,
        p1_lower,
        p2_upper,
        list(certify.alpha_grid),
        m=out.m,
        delta=certify.delta,
    )


def stability_sweep(
    model,
    dataset,
    radii,
    variants,
    smoothing_params: SmoothingParams,
    certify: CertifySettings,
    attack: AttackConfig,
    repetitions: int,
    base_seed: int,
    max_inputs: int | None = None,
    config_echo: dict | None = None,
) -> ExperimentReport:
    """Cross radii x variants, averaged over seeded repetitions.

    Stability scores compare each variant's perturbed concept vector
    against the same variant's clean output with identical noise seeds.
    Attacks always target the deterministic pipeline gradient; certified
    radii come from the clean smoothed run (zero for variants without
    noise, which certify nothing).
    """
    x = dataset.x_test
    y = dataset.y_test
    if max_inputs is not None and max_inputs > 0:
        x = x[:max_inputs]
        y = y[:max_inputs]
    n = x.shape[0]
    if n == 0:
        raise ParameterError("no test inputs to sweep")
    radii = list(radii)
    variants = list(variants)
    repetitions = int(repetitions)
    if repetitions < 1:
        raise ParameterError("repetitions must be >= 1")

    attacked = {}
    for rho in radii:
        if rho == 0.0:
            attacked[rho] = x.copy()
        else:
            cfg = AttackConfig(rho=rho, step=attack.step, iters=attack.iters, norm=attack.norm)
            attacked[rho] = pgd_attack(model, x, y, cfg)

    rep_seeds = [int(base_seed) + rep for rep in range(repetitions)]
    rep_rows = []
    weight_records = []
    for rep, rep_seed in enumerate(rep_seeds):
        for rho in radii:
            x_adv = attacked[rho]
            for variant in variants:
                cfs_vals, cpcs_vals = [], []
                preds = np.empty(n, dtype=np.int64)
                r_topk, r_pred, r_final = [], [], []
                for i in range(n):
                    seed_i = rep_seed + _INPUT_SEED_STRIDE * (i + 1)
                    clean = evaluate_variant(model, x[i], variant, smoothing_params, seed_i)
                    pert = evaluate_variant(model, x_adv[i], variant, smoothing_params, seed_i)
                    cfs_vals.append(cfs(clean.mean_concepts, pert.mean_concepts))
                    cpcs_vals.append(cpcs(clean.mean_concepts, pert.mean_concepts))
                    preds[i] = int(np.argmax(pert.class_counts))
                    if variant.smoothing:
                        cert = certify_smoothed_output(clean, certify)
                        r_topk.append(cert.r_topk)
                        r_pred.append(cert.r_pred)
                        r_final.append(cert.r_final)
                    else:
                        r_topk.append(0.0)
                        r_pred.append(0.0)
                        r_final.append(0.0)
                    if rep == 0:
                        for j, name in enumerate(model.concept_names):
                            weight_records.append(
                                {
                                    "input": i,
                                    "rho": rho,
                                    "variant": variant.name,
                                    "concept": name,
                                    "clean_weight": float(clean.mean_concepts[j]),
                                    "perturbed_weight": float(pert.mean_concepts[j]),
                                }
                            )
                ss = sensitivity_specificity(preds, y, model.n_classes)
                rep_rows.append(
                    {
                        "rep": rep,
                        "rho": float(rho),
                        "variant": variant.name,
                        "denoising": variant.denoising,
                        "smoothing": variant.smoothing,
                        "accuracy": accuracy(preds, y),
                        "sensitivity": ss.macro_sensitivity,
                        "specificity": ss.macro_specificity,
                        "cfs": float(np.mean(cfs_vals)),
                        "cpcs": float(np.mean(cpcs_vals)),
                        "r_topk": float(np.mean(r_topk)),
                        "r_pred": float(np.mean(r_pred)),
                        "r_final": float(np.mean(r_final)),
                    }
                )

    rows = []
    for rho in radii:
        for variant in variants:
            group = [
                r
                for r in rep_rows
                if r["rho"] == float(rho) and r["variant"] == variant.name
            ]
            row = {
                "rho": float(rho),
                "variant": variant.name,
                "denoising": variant.denoising,
                "smoothing": variant.smoothing,
            }
            for key in REPORT_COLUMNS[4:]:
                row[key] = float(np.mean([g[key] for g in group]))
            rows.append(row)

    return ExperimentReport(
        config_echo=config_echo or {},
        base_seed=int(base_seed),
        rep_seeds=rep_seeds,
        rows=rows,
        rep_rows=rep_rows,
        concept_weights=weight_records,
    )


def write_report(report: ExperimentReport, out_dir) -> dict:
    """Write report.csv, report.json, and concept_weights.csv.

    Timing is deliberately not part of these files so identical runs are
    byte-identical; the CLI records it in a separate timing.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / "report.csv",
        "json": out / "report.json",
        "concept_weights": out / "concept_weights.csv",
    }
    with open(paths["csv"], "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in report.rows:
            writer.writerow({k: row[k] for k in REPORT_COLUMNS})
    with open(paths["json"], "w") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    weight_cols = ["input", "rho", "variant", "concept", "clean_weight", "perturbed_weight"]
    with open(paths["concept_weights"], "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=weight_cols)
        writer.writeheader()
        for rec in report.concept_weights:
            writer.writerow(rec)
    return paths


def read_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def sweep_from_config(model, dataset, cfg: ExperimentConfig, denoiser, schedule):
    """Convenience wrapper wiring an ExperimentConfig into stability_sweep."""
    params = SmoothingParams(
        sigma=cfg.smoothing.sigma,
        m=cfg.smoothing.m,
        schedule=schedule,
        denoiser=denoiser,
    )
    attack = AttackConfig(
        rho=max(r for r in cfg.attack.radii if r > 0) if any(cfg.attack.radii) else 1e-3,
        step=cfg.attack.step,
        iters=cfg.attack.iters,
        norm=cfg.attack.norm,
    )
    return stability_sweep(
        model,
        dataset,
        list(cfg.attack.radii),
        list(ALL_VARIANTS),
        params,
        cfg.certify,
        attack,
        repetitions=cfg.report.repetitions,
        base_seed=cfg.seed,
        max_inputs=cfg.report.max_inputs,
        config_echo=cfg.echo(),
    )

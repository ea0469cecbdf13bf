"""Command-line interface.

Subcommands: synth, train, certify, attack, sweep, intervene.  Exit codes:
0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, pgd_attack
from .config import ExperimentConfig, load_config
from .data import SyntheticDataset, SyntheticSpec, synth_dataset
from .errors import ConceptCertError, ParameterError
from .evaluate import certify_smoothed_output, sweep_from_config, write_report
from .network import ConceptModel
from .pipeline import train_model
from .smoothing import Denoiser, NoiseSchedule, SmoothingParams, ablation_config, evaluate_variant


__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="conceptcert", description=__doc__)
    parser.add_argument("--config", type=str, default=None, help="TOML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out-dir", type=str, default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate and persist a synthetic dataset")

    p_train = sub.add_parser("train", help="train a model bundle")
    p_train.add_argument("--data", type=str, default=None, help="dataset directory")

    p_cert = sub.add_parser("certify", help="per-input certificates on the test split")
    p_cert.add_argument("--data", type=str, default=None)
    p_cert.add_argument("--model", type=str, default=None)

    p_att = sub.add_parser("attack", help="emit attacked test inputs per radius")
    p_att.add_argument("--data", type=str, default=None)
    p_att.add_argument("--model", type=str, default=None)

    p_sweep = sub.add_parser("sweep", help="full stability sweep with reports")
    p_sweep.add_argument("--data", type=str, default=None)
    p_sweep.add_argument("--model", type=str, default=None)

    p_int = sub.add_parser("intervene", help="edit concepts of one input and re-predict")
    p_int.add_argument("--data", type=str, default=None)
    p_int.add_argument("--model", type=str, default=None)
    p_int.add_argument("--input", type=int, default=0, help="test input index")
    p_int.add_argument(
        "--edit",
        action="append",
        default=[],
        metavar="IDX=VALUE",
        help="concept edit, repeatable",
    )
    return parser


def _spec_from_config(cfg: ExperimentConfig) -> SyntheticSpec:
    d = cfg.data
    return SyntheticSpec(
        d_input=d.d_input,
        d0=d.d0,
        m_true=d.m_true,
        d_z=d.d_z,
        n_train=d.n_train,
        n_test=d.n_test,
        tau=d.tau,
        concept_rank=d.concept_rank,
        activation_noise=d.activation_noise,
        hidden=d.hidden,
        backbone_scale=d.backbone_scale,
        seed=cfg.seed,
    )


def _get_dataset(cfg: ExperimentConfig, data_dir) -> SyntheticDataset:
    if data_dir is not None:
        return SyntheticDataset.load(data_dir)
    return synth_dataset(_spec_from_config(cfg))


def _get_model(cfg, dataset, model_path, out_dir):
    if model_path is not None:
        return ConceptModel.load(model_path)
    default = Path(out_dir) / "model.json"
    if default.exists():
        return ConceptModel.load(default)
    model, _ = train_model(dataset, cfg.train, cfg.seed)
    return model


def _schedule(cfg: ExperimentConfig) -> NoiseSchedule:
    s = cfg.smoothing
    return NoiseSchedule.geometric(s.t_max, s.beta_start, s.beta_end)


def _denoiser(cfg: ExperimentConfig, dataset) -> Denoiser:
    if cfg.smoothing.denoiser == "identity":
        return Denoiser(kind="identity")
    return Denoiser(kind="gmm_posterior_mean", prior=dataset.prior)


def _cmd_synth(cfg, args):
    dataset = synth_dataset(_spec_from_config(cfg))
    out = Path(args.out_dir) / "data"
    dataset.save(out)
    print(f"dataset written to {out}")
    return 0


def _cmd_train(cfg, args):
    dataset = _get_dataset(cfg, args.data)
    model, info = train_model(dataset, cfg.train, cfg.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "model.json"
    model.save(path)
    print(
        f"model written to {path} "
        f"(kept {len(info.kept_concepts)}/{dataset.spec.m_true} concepts, "
        f"final-layer sparsity {info.sparsity:.3f})"
    )
    return 0


def _cmd_certify(cfg, args):
    dataset = _get_dataset(cfg, args.data)
    model = _get_model(cfg, dataset, args.model, args.out_dir)
    schedule = _schedule(cfg)
    denoiser = _denoiser(cfg, dataset)
    params = SmoothingParams(
        sigma=cfg.smoothing.sigma,
        m=cfg.certify.samples,
        schedule=schedule,
        denoiser=denoiser,
    )
    variant = ablation_config(denoising=denoiser.kind != "identity", smoothing=True)
    n = min(cfg.report.max_inputs, dataset.x_test.shape[0])
    certificates = []
    for i in range(n):
        out = evaluate_variant(
            model, dataset.x_test[i], variant, params, cfg.seed + 1_000_003 * (i + 1)
        )
        certificates.append(certify_smoothed_output(out, cfg.certify).to_dict())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "certificates.json"
    with open(path, "w") as fh:
        json.dump({"config": cfg.echo(), "certificates": certificates}, fh, sort_keys=True, indent=1)
        fh.write("\n")
    mean_r = float(np.mean([c["r_final"] for c in certificates]))
    print(f"{n} certificates written to {path} (mean r_final {mean_r:.5f})")
    return 0


def _cmd_attack(cfg, args):
    dataset = _get_dataset(cfg, args.data)
    model = _get_model(cfg, dataset, args.model, args.out_dir)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = min(cfg.report.max_inputs, dataset.x_test.shape[0])
    x = dataset.x_test[:n]
    y = dataset.y_test[:n]
    manifest = []
    for idx, rho in enumerate(cfg.attack.radii):
        attack = AttackConfig(
            rho=rho, step=cfg.attack.step, iters=cfg.attack.iters, norm=cfg.attack.norm
        )
        x_adv = pgd_attack(model, x, y, attack)
        delta = x_adv - x
        path = out / f"perturbed_{idx:02d}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"dim{i}" for i in range(x.shape[1])] + ["l2_norm", "linf_norm"]
            )
            for row, d in zip(x_adv, delta):
                writer.writerow(
                    [repr(v) for v in row]
                    + [repr(float(np.linalg.norm(d))), repr(float(np.abs(d).max()))]
                )
        manifest.append({"file": path.name, "rho": float(rho), "norm": cfg.attack.norm})
    with open(out / "attack_manifest.json", "w") as fh:
        json.dump({"config": cfg.echo(), "files": manifest}, fh, sort_keys=True, indent=1)
        fh.write("\n")
    print(f"{len(manifest)} perturbed sets written to {out}")
    return 0


def _cmd_sweep(cfg, args):
    t0 = time.perf_counter()
    dataset = _get_dataset(cfg, args.data)
    model = _get_model(cfg, dataset, args.model, args.out_dir)
    report = sweep_from_config(model, dataset, cfg, _denoiser(cfg, dataset), _schedule(cfg))
    report.wall_clock_seconds = time.perf_counter() - t0
    paths = write_report(report, args.out_dir)
    with open(Path(args.out_dir) / "timing.json", "w") as fh:
        json.dump({"wall_clock_seconds": report.wall_clock_seconds}, fh)
        fh.write("\n")
    print(f"report written to {paths['csv']} ({len(report.rows)} condition rows)")
    return 0


def _parse_edits(raw_edits):
    edits = []
    for item in raw_edits:
        if "=" not in item:
            raise _UsageError(f"--edit expects IDX=VALUE, got {item!r}")
        idx, _, val = item.partition("=")
        try:
            edits.append((int(idx), float(val)))
        except ValueError as exc:
            raise _UsageError(f"bad --edit {item!r}: {exc}") from exc
    return edits


def _cmd_intervene(cfg, args):
    dataset = _get_dataset(cfg, args.data)
    model = _get_model(cfg, dataset, args.model, args.out_dir)
    if not 0 <= args.input < dataset.x_test.shape[0]:
        raise ParameterError(f"input index {args.input} out of range")
    x = dataset.x_test[args.input]
    edits = _parse_edits(args.edit)
    before = model.predict_proba(x)
    after = model.predict_with_intervention(x, edits)
    label = int(dataset.y_test[args.input])
    print(f"input {args.input} (true class {label})")
    print("before:", " ".join(f"{p:.4f}" for p in before), f"-> class {int(np.argmax(before))}")
    print("after: ", " ".join(f"{p:.4f}" for p in after), f"-> class {int(np.argmax(after))}")
    if not edits:
        print("no edits given; prediction unchanged")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "certify": _cmd_certify,
    "attack": _cmd_attack,
    "sweep": _cmd_sweep,
    "intervene": _cmd_intervene,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = ExperimentConfig(
                seed=args.seed,
                data=cfg.data,
                train=cfg.train,
                smoothing=cfg.smoothing,
                attack=cfg.attack,
                certify=cfg.certify,
                report=cfg.report,
            )
        return _COMMANDS[args.command](cfg, args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConceptCertError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Synthetic planted-concept datasets.

Inputs are class-conditional Gaussians clipped to [0, 1].  Concept
activations are planted through a ground-truth projection of the frozen
backbone's features, where the projection rows live in a proper subspace
of feature space: the concepts then carry class-relevant but deliberately
incomplete information, so fusing them with raw features has something to
add.  The class-mean mixture doubles as the denoiser prior.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bottleneck import ConceptSet, EmbeddingTable, read_matrix_csv, write_matrix_csv
from .errors import ParameterError
from .network import TinyBackbone
from .smoothing import GaussianMixturePrior

__all__ = ["SyntheticSpec", "SyntheticDataset", "synth_dataset"]


@dataclass(frozen=True)
class SyntheticSpec:
    """Dimensions, sample counts, and noise levels of a planted dataset."""

    d_input: int = 16
    d0: int = 16
    m_true: int = 32
    d_z: int = 4
    n_train: int = 512
    n_test: int = 128
    tau: float = 0.06
    concept_rank: int = 5
    activation_noise: float = 0.02
    hidden: int = 32
    backbone_scale: float = 16.0
    seed: int = 0

    def __post_init__(self):
        for name in ("d_input", "d0", "m_true", "d_z", "n_train", "n_test", "hidden"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.d_z < 2:
            raise ParameterError("need at least 2 classes")
        if self.tau <= 0.0:
            raise ParameterError("tau must be > 0")
        if not 1 <= self.concept_rank <= self.d0:
            raise ParameterError("concept_rank must be in [1, d0]")
        if self.activation_noise < 0.0:
            raise ParameterError("activation_noise must be >= 0")

    @property
    def d_e(self) -> int:
        """Embedding width: features plus one homogeneous coordinate."""
        return self.d0 + 1


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    backbone: TinyBackbone
    concepts: ConceptSet
    table: EmbeddingTable
    activations: np.ndarray  # (n_train, m_true) planted targets
    w_star: np.ndarray  # (m_true, d0) ground-truth projection
    class_concept: np.ndarray  # (m_true, d_z) planted affinities
    prior: GaussianMixturePrior
    class_names: list = field(default_factory=list)

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "spec": asdict(self.spec),
            "x_train": self.x_train.tolist(),
            "y_train": self.y_train.tolist(),
            "x_test": self.x_test.tolist(),
            "y_test": self.y_test.tolist(),
            "backbone": self.backbone.to_dict(),
            "activations": self.activations.tolist(),
            "w_star": self.w_star.tolist(),
            "class_concept": self.class_concept.tolist(),
            "prior": self.prior.to_dict(),
            "class_names": self.class_names,
        }
        with open(out / "dataset.json", "w") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")
        self.concepts.save(out / "concepts.json")
        write_matrix_csv(out / "image_embeddings.csv", self.table.image_embeddings)
        write_matrix_csv(out / "backbone_features.csv", self.table.backbone_features)

    @classmethod
    def load(cls, out_dir) -> "SyntheticDataset":
        out = Path(out_dir)
        with open(out / "dataset.json") as fh:
            payload = json.load(fh)
        concepts = ConceptSet.load(out / "concepts.json")
        table = EmbeddingTable(
            image_embeddings=read_matrix_csv(out / "image_embeddings.csv"),
            backbone_features=read_matrix_csv(out / "backbone_features.csv"),
        )
        return cls(
            spec=SyntheticSpec(**payload["spec"]),
            x_train=np.array(payload["x_train"]),
            y_train=np.array(payload["y_train"], dtype=np.int64),
            x_test=np.array(payload["x_test"]),
            y_test=np.array(payload["y_test"], dtype=np.int64),
            backbone=TinyBackbone.from_dict(payload["backbone"]),
            concepts=concepts,
            table=table,
            activations=np.array(payload["activations"]),
            w_star=np.array(payload["w_star"]),
            class_concept=np.array(payload["class_concept"]),
            prior=GaussianMixturePrior.from_dict(payload["prior"]),
            class_names=list(payload["class_names"]),
        )


def _balanced_labels(n, d_z, rng):
    labels = np.arange(n) % d_z
    rng.shuffle(labels)
    return labels


def _unit_rows(mat):
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)


def synth_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """Generate a planted dataset; identical spec gives an identical result."""
    ss = np.random.SeedSequence(spec.seed)
    r_means, r_inputs, r_backbone, r_concepts, r_noise = [
        np.random.default_rng(s) for s in ss.spawn(5)
    ]

    means = r_means.uniform(0.3, 0.7, (spec.d_z, spec.d_input))
    y_train = _balanced_labels(spec.n_train, spec.d_z, r_inputs)
    y_test = _balanced_labels(spec.n_test, spec.d_z, r_inputs)
    x_train = np.clip(
        means[y_train] + spec.tau * r_inputs.standard_normal((spec.n_train, spec.d_input)),
        0.0,
        1.0,
    )
    x_test = np.clip(
        means[y_test] + spec.tau * r_inputs.standard_normal((spec.n_test, spec.d_input)),
        0.0,
        1.0,
    )

    backbone = TinyBackbone.random(
        spec.d_input, spec.hidden, spec.d0, r_backbone, weight_scale=spec.backbone_scale
    )
    feats_train = backbone.features(x_train)

    # Planted class-concept affinities: each concept leans on one class.
    affinity = 0.25 * r_concepts.standard_normal((spec.m_true, spec.d_z))
    affinity[np.arange(spec.m_true), np.arange(spec.m_true) % spec.d_z] += 1.0
    targets = affinity[:, y_train].T + 0.1 * r_concepts.standard_normal(
        (spec.n_train, spec.m_true)
    )

    # Ground-truth projection restricted to a concept_rank-dim subspace of
    # feature space, so concepts are informative but not exhaustive.
    basis, _ = np.linalg.qr(r_concepts.standard_normal((spec.d0, spec.d0)))
    basis = basis[:, : spec.concept_rank]  # (d0, r)
    coef, *_ = np.linalg.lstsq(feats_train @ basis, targets, rcond=None)
    w_star = (basis @ coef).T  # (m_true, d0)
    activations = feats_train @ w_star.T
    if spec.activation_noise > 0.0:
        activations = activations + spec.activation_noise * r_noise.standard_normal(
            activations.shape
        )

    image_embeddings = _unit_rows(
        np.concatenate([feats_train, np.ones((spec.n_train, 1))], axis=1)
    )
    text_raw = np.concatenate([w_star, np.ones((spec.m_true, 1))], axis=1)
    concepts = ConceptSet(
        names=[f"concept_{i:03d}" for i in range(spec.m_true)],
        text_embeddings=_unit_rows(text_raw),
    )
    table = EmbeddingTable(image_embeddings=image_embeddings, backbone_features=feats_train)

    prior = GaussianMixturePrior(
        weights=np.full(spec.d_z, 1.0 / spec.d_z), means=means, tau2=spec.tau**2
    )
    return SyntheticDataset(
        spec=spec,
        x_train=x_train,
        y_train=y_train,
        x_test=x_test,
        y_test=y_test,
        backbone=backbone,
        concepts=concepts,
        table=table,
        activations=activations,
        w_star=w_star,
        class_concept=affinity,
        prior=prior,
        class_names=[f"class_{i}" for i in range(spec.d_z)],
    )

"""Label-free concept bottleneck construction: concept filtering, the
activation matrix, the standardize-cube-cosine similarity, and projection
learning by full-batch gradient descent.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    DivergenceError,
    EmptyConceptSetError,
    ParameterError,
)

__all__ = [
    "ConceptSet",
    "EmbeddingTable",
    "FilterCutoffs",
    "filter_concepts",
    "activation_matrix",
    "cos_cubed",
    "learn_projection",
    "ProjectionResult",
    "drop_uninterpretable",
]

_UNIT_ATOL = 1e-6


def _check_unit_rows(mat, name):
    norms = np.linalg.norm(mat, axis=1)
    if np.any(np.abs(norms - 1.0) > _UNIT_ATOL):
        raise ParameterError(f"{name} rows must be unit-norm")


@dataclass
class ConceptSet:
    """Named concepts with unit-norm text-embedding rows."""

    names: list
    text_embeddings: np.ndarray  # (M, d_e)

    def __post_init__(self):
        self.text_embeddings = np.asarray(self.text_embeddings, dtype=np.float64)
        if len(self.names) != self.text_embeddings.shape[0]:
            raise ParameterError("one embedding row per concept name required")
        if len(set(self.names)) != len(self.names):
            raise ParameterError("concept names must be unique")
        _check_unit_rows(self.text_embeddings, "concept embeddings")

    def __len__(self):
        return len(self.names)

    def subset(self, indices) -> "ConceptSet":
        indices = list(indices)
        return ConceptSet(
            names=[self.names[i] for i in indices],
            text_embeddings=self.text_embeddings[indices],
        )

    def to_dict(self) -> dict:
        m, d_e = self.text_embeddings.shape
        return {
            "names": list(self.names),
            "dims": [m, d_e],
            "embeddings": self.text_embeddings.ravel().tolist(),  # row-major
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d) -> "ConceptSet":
        m, d_e = d["dims"]
        emb = np.array(d["embeddings"], dtype=np.float64).reshape(m, d_e)
        return cls(names=list(d["names"]), text_embeddings=emb)

    @classmethod
    def load(cls, path) -> "ConceptSet":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def write_matrix_csv(path, mat):
    """Matrix interchange format: header dim0..dimK, one row per record."""
    mat = np.asarray(mat, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"dim{i}" for i in range(mat.shape[1])])
        for row in mat:
            writer.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or not header[0].startswith("dim"):
            raise ParameterError(f"{path}: expected a dim0.. header row")
        rows = [[float(v) for v in row] for row in reader]
    return np.array(rows, dtype=np.float64)


@dataclass
class EmbeddingTable:
    """Per-image embeddings and backbone features for the training set."""

    image_embeddings: np.ndarray  # (N, d_e), unit rows
    backbone_features: np.ndarray  # (N, d0)

    def __post_init__(self):
        self.image_embeddings = np.asarray(self.image_embeddings, dtype=np.float64)
        self.backbone_features = np.asarray(self.backbone_features, dtype=np.float64)
        if self.image_embeddings.shape[0] != self.backbone_features.shape[0]:
            raise ParameterError("embedding and feature row counts differ")
        if not (
            np.all(np.isfinite(self.image_embeddings))
            and np.all(np.isfinite(self.backbone_features))
        ):
            raise ParameterError("embedding table contains non-finite entries")
        _check_unit_rows(self.image_embeddings, "image embeddings")


@dataclass(frozen=True)
class FilterCutoffs:
    """Thresholds for the concept filters, in application order."""

    max_name_length: int = 40
    class_similarity: float = 0.85
    duplicate_similarity: float = 0.9
    clip_cutoff: float = 0.25
    top_n_activations: int = 5

    def __post_init__(self):
        for name in ("class_similarity", "duplicate_similarity", "clip_cutoff"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ParameterError(f"{name} must be in (0, 1], got {v}")


def filter_concepts(
    candidates: ConceptSet,
    class_names,
    class_embeddings,
    image_activations,
    cutoffs: FilterCutoffs = FilterCutoffs(),
):
    """Apply the four pre-training concept filters in order:

    1. names longer than ``max_name_length`` characters;
    2. cosine similarity above ``class_similarity`` to any class name;
    3. cosine similarity above ``duplicate_similarity`` to an earlier
       surviving concept (the later one is removed);
    4. mean of the ``top_n_activations`` largest image activations below
       ``clip_cutoff``.

    The post-training interpretability filter lives in
    ``drop_uninterpretable``.  Returns the filtered set plus the surviving
    indices into ``candidates``; raises if nothing survives.
    """
    class_embeddings = np.asarray(class_embeddings, dtype=np.float64)
    if class_embeddings.shape[0] != len(class_names):
        raise ParameterError("one embedding row per class name required")
    _check_unit_rows(class_embeddings, "class embeddings")
    acts = np.asarray(image_activations, dtype=np.float64)
    if acts.shape[1] != len(candidates):
        raise ParameterError("activation columns must match candidate concepts")

    kept = [i for i, n in enumerate(candidates.names) if len(n) <= cutoffs.max_name_length]

    class_sim = candidates.text_embeddings @ class_embeddings.T
    kept = [i for i in kept if class_sim[i].max() <= cutoffs.class_similarity]

    dedup = []
    for i in kept:
        e = candidates.text_embeddings[i]
        if all(
            float(e @ candidates.text_embeddings[j]) <= cutoffs.duplicate_similarity
            for j in dedup
        ):
            dedup.append(i)
    kept = dedup

    n_top = min(cutoffs.top_n_activations, acts.shape[0])
    survivors = []
    for i in kept:
        col = np.sort(acts[:, i])[::-1][:n_top]
        if float(col.mean()) >= cutoffs.clip_cutoff:
            survivors.append(i)

    if not survivors:
        raise EmptyConceptSetError("every candidate concept was filtered out")
    return candidates.subset(survivors), survivors


def activation_matrix(table: EmbeddingTable, concepts: ConceptSet) -> np.ndarray:
    """Inner products of image and concept embeddings, shape (N, M)."""
    if table.image_embeddings.shape[1] != concepts.text_embeddings.shape[1]:
        raise ParameterError(
            f"embedding dims differ: images {table.image_embeddings.shape[1]}, "
            f"concepts {concepts.text_embeddings.shape[1]}"
        )
    return table.image_embeddings @ concepts.text_embeddings.T


def _standardize(v):
    """Shift to mean 0 and scale to population std 1."""
    sd = float(np.std(v))
    if sd == 0.0:
        raise DegenerateInputError("zero variance, similarity undefined")
    return (v - float(np.mean(v))) / sd


def cos_cubed(q, a) -> float:
    """Cosine of the two vectors after per-vector standardization (mean 0,
    population std 1) and elementwise cubing."""
    q = np.asarray(q, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if q.shape != a.shape or q.ndim != 1:
        raise ParameterError("cos_cubed expects two equal-length vectors")
    if q.size < 2:
        raise ParameterError("need at least 2 entries")
    u = _standardize(q) ** 3
    b = _standardize(a) ** 3
    return float(u @ b / (np.linalg.norm(u) * np.linalg.norm(b)))


@dataclass
class ProjectionResult:
    weights: np.ndarray  # (M, d0)
    similarities: np.ndarray  # (M,) final per-concept cos_cubed
    loss_history: list = field(default_factory=list)


def _columns_standardized_cubed(mat):
    mu = mat.mean(axis=0)
    sd = np.std(mat, axis=0)
    if np.any(sd == 0.0):
        raise DegenerateInputError("a column has zero variance")
    z = (mat - mu) / sd
    return z, (z**3)


def learn_projection(
    backbone_features,
    activations,
    steps: int = 1000,
    learning_rate: float = 0.15,
    seed: int = 0,
) -> ProjectionResult:
    """Fit the bottleneck projection by full-batch gradient descent.

    The objective sums, over concepts, the negative standardize-cube
    cosine between the concept's activation pattern across the dataset and
    its target activation column.  Weights start Gaussian at scale
    1/sqrt(d0).  The loss sequence is monitored; an increase only warns
    (too-large steps), a non-finite loss aborts.
    """
    f = np.asarray(backbone_features, dtype=np.float64)
    a = np.asarray(activations, dtype=np.float64)
    if f.ndim != 2 or a.ndim != 2 or f.shape[0] != a.shape[0]:
        raise ParameterError("features (N, d0) and activations (N, M) must share N")
    n, d0 = f.shape
    if n < 2:
        raise ParameterError("need at least 2 samples")
    steps = int(steps)
    if steps < 0:
        raise ParameterError("steps must be >= 0")

    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 1.0 / np.sqrt(d0), (a.shape[1], d0))
    _, target_cubes = _columns_standardized_cubed(a)
    b_norm = np.linalg.norm(target_cubes, axis=0)

    def sims_and_grad(weights):
        q = f @ weights.T  # (N, M)
        zq, u = _columns_standardized_cubed(q)
        u_norm = np.linalg.norm(u, axis=0)
        dots = np.einsum("nm,nm->m", u, target_cubes)
        sims = dots / (u_norm * b_norm)
        # d sim / d u, then back through cube and standardization.
        g_u = target_cubes / (u_norm * b_norm) - u * (dots / (u_norm**3 * b_norm))
        g_z = 3.0 * zq**2 * g_u
        sd = np.std(q, axis=0)
        g_q = (g_z - g_z.mean(axis=0) - zq * np.einsum("nm,nm->m", g_z, zq) / n) / sd
        grad_w = -(g_q.T @ f)  # of the loss -sum(sims)
        return sims, grad_w

    history = []
    sims, grad = sims_and_grad(w)
    loss = -float(sims.sum())
    history.append(loss)
    lowest = loss
    worst_jump = 0.0
    for step in range(steps):
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite projection loss at step {step}", step)
        w = w - learning_rate * grad
        sims, grad = sims_and_grad(w)
        loss = -float(sims.sum())
        worst_jump = max(worst_jump, loss - history[-1])
        history.append(loss)
        lowest = min(lowest, loss)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite projection loss at step {steps}", steps)
    # Transient rises early in the descent are normal for this objective;
    # warn only on regression that stuck or on a catastrophic jump.
    span = max(history[0] - lowest, 1e-9)
    if steps > 0 and (loss > lowest + 1e-3 * span or worst_jump > 0.1 * span):
        warnings.warn(
            f"projection descent regressed (final {loss:.6f} vs best {lowest:.6f}, "
            f"largest jump {worst_jump:.3g}); consider a smaller learning rate",
            RuntimeWarning,
            stacklevel=2,
        )
    return ProjectionResult(weights=w, similarities=sims, loss_history=history)


def drop_uninterpretable(w_c, similarities, cutoff: float = 0.45):
    """Remove projection rows whose activation pattern missed its target:
    keep rows with similarity >= cutoff.  Returns (weights, kept indices)."""
    w_c = np.asarray(w_c, dtype=np.float64)
    similarities = np.asarray(similarities, dtype=np.float64)
    if w_c.shape[0] != similarities.shape[0]:
        raise ParameterError("one similarity per projection row required")
    kept = [i for i in range(w_c.shape[0]) if similarities[i] >= cutoff]
    if not kept:
        raise EmptyConceptSetError("every concept fell below the interpretability cutoff")
    return w_c[kept], kept

"""End-to-end training: projection learning, interpretability filtering,
and the sparse final layer, assembled into a model bundle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bottleneck import drop_uninterpretable, learn_projection
from .config import TrainSettings
from .data import SyntheticDataset
from .network import ConceptModel
from .sparse_fit import train_final_layer

__all__ = ["TrainInfo", "train_model"]


@dataclass
class TrainInfo:
    similarities: np.ndarray
    kept_concepts: list
    sparsity: float
    projection_loss: list
    final_loss: list


def train_model(
    dataset: SyntheticDataset, settings: TrainSettings, seed: int
) -> tuple[ConceptModel, TrainInfo]:
    """Learn the bottleneck and final layer on the dataset's training split.

    With fusion disabled the final layer is trained on concept features
    alone and embedded into the fused layout with a zero backbone block,
    so the bundle format is identical either way.
    """
    feats = dataset.table.backbone_features
    proj = learn_projection(
        feats,
        dataset.activations,
        steps=settings.proj_steps,
        learning_rate=settings.proj_lr,
        seed=seed,
    )
    w_c, kept = drop_uninterpretable(
        proj.weights, proj.similarities, settings.interpretability_cutoff
    )
    names = [dataset.concepts.names[i] for i in kept]

    concept_feats = feats @ w_c.T
    d0 = feats.shape[1]
    if settings.fusion:
        design = np.concatenate([feats, concept_feats], axis=1)
    else:
        design = concept_feats
    fit = train_final_layer(
        design,
        dataset.y_train,
        lam=settings.lam,
        n_iters=settings.n_iters,
        n_classes=dataset.spec.d_z,
    )
    if settings.fusion:
        w_f = fit.weights
    else:
        w_f = np.zeros((dataset.spec.d_z, d0 + w_c.shape[0]))
        w_f[:, d0:] = fit.weights

    hyper = {
        "proj_steps": settings.proj_steps,
        "proj_lr": settings.proj_lr,
        "interpretability_cutoff": settings.interpretability_cutoff,
        "lam": settings.lam,
        "n_iters": settings.n_iters,
        "fusion": settings.fusion,
        "seed": int(seed),
    }
    model = ConceptModel(
        backbone=dataset.backbone,
        w_c=w_c,
        w_f=w_f,
        bias=fit.bias,
        concept_names=names,
        hyperparameters=hyper,
    )
    info = TrainInfo(
        similarities=proj.similarities,
        kept_concepts=kept,
        sparsity=fit.sparsity,
        projection_loss=proj.loss_history,
        final_loss=fit.loss_history,
    )
    return model, info

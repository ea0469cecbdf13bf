"""The classification pipeline: frozen toy backbone, concept projection,
feature fusion, sparse final layer, prediction, and test-time edits.

Arrays flow batch-aware: every map accepts a single vector (d,) or a
batch (B, d) and preserves the leading shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = [
    "TinyBackbone",
    "concept_features",
    "fuse",
    "predict",
    "intervene",
    "softmax",
    "ConceptModel",
]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


class TinyBackbone:
    """Frozen one-hidden-layer tanh feature map with exact input gradients.

    f(x) = w2 @ tanh(w1 @ x + b1) + b2.  Parameters are read-only after
    construction; repeated evaluation is bitwise deterministic.
    """

    def __init__(self, w1, b1, w2, b2):
        self.w1 = _freeze(w1)
        self.b1 = _freeze(b1)
        self.w2 = _freeze(w2)
        self.b2 = _freeze(b2)
        if self.w1.shape[0] != self.b1.shape[0] or self.w2.shape[1] != self.w1.shape[0]:
            raise ParameterError("backbone parameter shapes are inconsistent")
        if self.w2.shape[0] != self.b2.shape[0]:
            raise ParameterError("backbone output bias shape mismatch")

    @classmethod
    def random(cls, d_input, hidden, d_out, seed, weight_scale=1.5):
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, weight_scale / np.sqrt(d_input), (hidden, d_input))
        b1 = rng.normal(0.0, 0.1, hidden)
        w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), (d_out, hidden))
        b2 = np.zeros(d_out)
        return cls(w1, b1, w2, b2)

    @property
    def d_input(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w2.shape[0]

    def _hidden(self, x):
        return np.tanh(np.asarray(x, dtype=np.float64) @ self.w1.T + self.b1)

    def features(self, x) -> np.ndarray:
        return self._hidden(x) @ self.w2.T + self.b2

    def input_jacobian(self, x) -> np.ndarray:
        """d features / d input for a single input, shape (d_out, d_input)."""
        h = self._hidden(x)
        if h.ndim != 1:
            raise ParameterError("input_jacobian expects a single vector")
        return (self.w2 * (1.0 - h * h)) @ self.w1

    def input_vjp(self, x, v) -> np.ndarray:
        """Vector-Jacobian product J(x)^T v, batch-aware."""
        h = self._hidden(x)
        return ((1.0 - h * h) * (np.asarray(v) @ self.w2)) @ self.w1

    def to_dict(self) -> dict:
        return {
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "TinyBackbone":
        return cls(d["w1"], d["b1"], d["w2"], d["b2"])


def concept_features(w_c, f) -> np.ndarray:
    """Concept activations: project backbone features through the bottleneck."""
    w_c = np.asarray(w_c, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != w_c.shape[1]:
        raise ParameterError(
            f"feature length {f.shape[-1]} does not match projection width {w_c.shape[1]}"
        )
    return f @ w_c.T


def fuse(f, fc) -> np.ndarray:
    """Concatenate backbone features (first) with concept features (last)."""
    f = np.asarray(f, dtype=np.float64)
    fc = np.asarray(fc, dtype=np.float64)
    return np.concatenate([f, fc], axis=-1)


def predict(w_f, bias, fused) -> np.ndarray:
    """Class distribution: softmax(w_f @ fused + bias)."""
    w_f = np.asarray(w_f, dtype=np.float64)
    fused = np.asarray(fused, dtype=np.float64)
    if fused.shape[-1] != w_f.shape[1]:
        raise ParameterError(
            f"fused length {fused.shape[-1]} does not match classifier width {w_f.shape[1]}"
        )
    return softmax(fused @ w_f.T + np.asarray(bias, dtype=np.float64))


def intervene(fc, edits) -> np.ndarray:
    """Overwrite selected concept values; all other entries are bit-identical."""
    fc = np.asarray(fc, dtype=np.float64)
    out = fc.copy()
    for idx, value in edits:
        idx = int(idx)
        if not 0 <= idx < out.shape[-1]:
            raise ParameterError(f"concept index {idx} out of range for {out.shape[-1]}")
        out[..., idx] = float(value)
    return out


@dataclass
class ConceptModel:
    """Trained bundle: backbone, bottleneck projection, and final layer."""

    backbone: TinyBackbone
    w_c: np.ndarray  # (M, d0)
    w_f: np.ndarray  # (d_z, M + d0)
    bias: np.ndarray  # (d_z,)
    concept_names: list
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w_c = np.asarray(self.w_c, dtype=np.float64)
        self.w_f = np.asarray(self.w_f, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        m, d0 = self.w_c.shape
        if d0 != self.backbone.d_out:
            raise ParameterError("projection width does not match backbone output")
        if self.w_f.shape[1] != m + d0:
            raise ParameterError("final layer width must be M + d0")
        if len(self.concept_names) != m:
            raise ParameterError("one concept name per projection row required")

    @property
    def n_concepts(self) -> int:
        return self.w_c.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w_f.shape[0]

    def backbone_features(self, x):
        return self.backbone.features(x)

    def concept_vector(self, x):
        return concept_features(self.w_c, self.backbone.features(x))

    def fused(self, x):
        f = self.backbone.features(x)
        return fuse(f, concept_features(self.w_c, f))

    def predict_proba(self, x):
        return predict(self.w_f, self.bias, self.fused(x))

    def predict_label(self, x):
        return np.argmax(self.predict_proba(x), axis=-1)

    def predict_with_intervention(self, x, edits):
        """Prediction from the edited concept vector fused with the
        unchanged backbone features."""
        f = self.backbone.features(x)
        fc = intervene(concept_features(self.w_c, f), edits)
        return predict(self.w_f, self.bias, fuse(f, fc))

    def _effective_feature_map(self):
        d0 = self.backbone.d_out
        return self.w_f[:, :d0] + self.w_f[:, d0:] @ self.w_c

    def loss(self, x, label):
        """Mean cross-entropy of the given labels, batch-aware."""
        p = self.predict_proba(x)
        label = np.asarray(label, dtype=np.int64)
        if p.ndim == 1:
            return -float(np.log(max(p[int(label)], 1e-300)))
        rows = np.arange(p.shape[0])
        return float(-np.log(np.maximum(p[rows, label], 1e-300)).mean())

    def loss_grad_input(self, x, label):
        """Exact gradient of the cross-entropy w.r.t. the input, batch-aware.

        For a batch the gradient of the per-sample loss is returned row by
        row (not divided by the batch size), so each row matches the
        single-input gradient.
        """
        x = np.asarray(x, dtype=np.float64)
        p = self.predict_proba(x)
        label = np.asarray(label, dtype=np.int64)
        grad_logits = p.copy()
        if x.ndim == 1:
            grad_logits[int(label)] -= 1.0
        else:
            grad_logits[np.arange(x.shape[0]), label] -= 1.0
        grad_f = grad_logits @ self._effective_feature_map()
        return self.backbone.input_vjp(x, grad_f)

    def to_dict(self) -> dict:
        return {
            "format": "conceptcert-model-v1",
            "backbone": self.backbone.to_dict(),
            "projection": self.w_c.tolist(),
            "final_layer": {"weights": self.w_f.tolist(), "bias": self.bias.tolist()},
            "concept_names": list(self.concept_names),
            "hyperparameters": self.hyperparameters,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d) -> "ConceptModel":
        return cls(
            backbone=TinyBackbone.from_dict(d["backbone"]),
            w_c=np.array(d["projection"], dtype=np.float64),
            w_f=np.array(d["final_layer"]["weights"], dtype=np.float64),
            bias=np.array(d["final_layer"]["bias"], dtype=np.float64),
            concept_names=list(d["concept_names"]),
            hyperparameters=dict(d.get("hyperparameters", {})),
        )

    @classmethod
    def load(cls, path) -> "ConceptModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

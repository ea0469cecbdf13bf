"""Input perturbations: projected gradient ascent on the cross-entropy,
a Gaussian-noise baseline, and finite-difference gradient verification.

Attack targets expose ``loss(x, label)`` and ``loss_grad_input(x, label)``;
the trained pipeline bundle satisfies this, as do the linear stand-ins in
the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AttackError, ParameterError

__all__ = ["AttackConfig", "pgd_attack", "gaussian_perturb", "grad_check"]


@dataclass(frozen=True)
class AttackConfig:
    """Ball radius, per-step size, iteration count, and ball norm."""

    rho: float = 8.0 / 255.0
    step: float = 2.0 / 255.0
    iters: int = 10
    norm: str = "linf"

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ParameterError(f"rho must be > 0, got {self.rho}")
        if self.step <= 0.0:
            raise ParameterError(f"step must be > 0, got {self.step}")
        if self.iters < 1:
            raise ParameterError(f"iters must be >= 1, got {self.iters}")
        if self.norm not in ("linf", "l2"):
            raise ParameterError(f"norm must be 'linf' or 'l2', got {self.norm!r}")


def _project(delta, rho, norm):
    if norm == "linf":
        return np.clip(delta, -rho, rho)
    norms = np.linalg.norm(delta, axis=-1, keepdims=True)
    scale = np.where(norms > rho, rho / np.maximum(norms, 1e-300), 1.0)
    return delta * scale


def pgd_attack(model, x, label, config: AttackConfig = AttackConfig()) -> np.ndarray:
    """Iterative gradient ascent on the cross-entropy with per-step
    projection onto the config ball around x.  No random start, so a
    zero-gradient model returns x unchanged.  Batch-aware; the returned
    perturbation always satisfies the ball constraint.
    """
    x0 = np.asarray(x, dtype=np.float64).copy()
    xi = x0.copy()
    for _ in range(config.iters):
        g = model.loss_grad_input(xi, label)
        if not np.all(np.isfinite(g)):
            raise AttackError("non-finite loss gradient during the attack")
        if config.norm == "linf":
            xi = xi + config.step * np.sign(g)
        else:
            norms = np.linalg.norm(g, axis=-1, keepdims=True)
            xi = xi + config.step * np.where(norms > 0.0, g / np.maximum(norms, 1e-300), 0.0)
        xi = x0 + _project(xi - x0, config.rho, config.norm)
    return xi


def gaussian_perturb(x, std: float, seed) -> np.ndarray:
    """x plus isotropic Gaussian noise, deterministic given the seed."""
    if std < 0.0:
        raise ParameterError(f"std must be >= 0, got {std}")
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return x + rng.normal(0.0, std, x.shape)


def grad_check(model, x, label, epsilon: float = 1e-4) -> float:
    """Max coordinate error between the analytic loss gradient and central
    finite differences, normalized by the largest gradient magnitude (so
    zero-gradient coordinates do not blow up the ratio)."""
    if epsilon <= 0.0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ParameterError("grad_check expects a single input vector")
    analytic = np.asarray(model.loss_grad_input(x, label), dtype=np.float64)
    numeric = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += epsilon
        lo[i] -= epsilon
        numeric[i] = (model.loss(hi, label) - model.loss(lo, label)) / (2.0 * epsilon)
    scale = max(float(np.abs(analytic).max()), float(np.abs(numeric).max()), 1e-12)
    return float(np.abs(analytic - numeric).max()) / scale

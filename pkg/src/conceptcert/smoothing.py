"""Noise-injection smoothing with a pluggable denoiser.

A noise standard deviation sigma is matched to the discrete schedule
timestep t* with (1 - beta_t) / beta_t = sigma^2; the noisy input is
scaled by sqrt(beta_t*), denoised back into input coordinates, and pushed
through the concept pipeline.  Repeating over seeded noise draws yields an
averaged concept vector plus empirical class counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfScheduleError, ParameterError

__all__ = [
    "NoiseSchedule",
    "match_timestep",
    "GaussianMixturePrior",
    "gmm_posterior_mean",
    "Denoiser",
    "SmoothedOutput",
    "dds_sample",
    "smooth_concepts",
    "purify",
    "PipelineVariant",
    "ablation_config",
    "SmoothingParams",
    "evaluate_variant",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Decreasing beta_t sequence; the derived sigma^2(t) = (1-b)/b is
    strictly increasing in t."""

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        object.__setattr__(self, "betas", betas)
        if betas.ndim != 1 or betas.size < 1:
            raise ParameterError("schedule needs at least one beta")
        if np.any(betas <= 0.0) or np.any(betas > 1.0):
            raise ParameterError("betas must lie in (0, 1]")
        if np.any(np.diff(self.sigma2_grid()) <= 0.0):
            raise ParameterError("derived sigma^2 must be strictly increasing")

    @classmethod
    def geometric(
        cls, t_max: int = 1000, beta_start: float = 0.9999, beta_end: float = 0.02
    ):
        """Log-spaced sigma^2 between the endpoint betas.

        Geometric spacing keeps the relative sigma^2 mismatch of a nearest
        match below ~0.7% everywhere; a beta-linear schedule is an order
        of magnitude coarser at the small-sigma end.
        """
        if t_max < 2:
            raise ParameterError("t_max must be >= 2")
        lo = (1.0 - beta_start) / beta_start
        hi = (1.0 - beta_end) / beta_end
        sigma2 = np.exp(np.linspace(math.log(lo), math.log(hi), t_max))
        return cls(betas=1.0 / (1.0 + sigma2))

    def sigma2_grid(self) -> np.ndarray:
        return (1.0 - self.betas) / self.betas

    def __len__(self):
        return self.betas.size


def match_timestep(sigma: float, schedule: NoiseSchedule):
    """Nearest schedule step to sigma^2 = (1-b)/b; returns (t*, beta_t*)
    with t* 1-based.  Exact matches return beta = 1/(1+sigma^2)."""
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    grid = schedule.sigma2_grid()
    s2 = sigma * sigma
    if s2 < grid[0] or s2 > grid[-1]:
        raise OutOfScheduleError(
            f"sigma^2 = {s2:.6g} outside schedule range [{grid[0]:.6g}, {grid[-1]:.6g}]"
        )
    t = int(np.argmin(np.abs(grid - s2)))
    return t + 1, float(schedule.betas[t])


@dataclass(frozen=True)
class GaussianMixturePrior:
    """Isotropic Gaussian mixture: weights on the simplex, shared variance."""

    weights: np.ndarray  # (C,)
    means: np.ndarray  # (C, d)
    tau2: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        if self.tau2 <= 0.0:
            raise ParameterError(f"tau2 must be > 0, got {self.tau2}")
        if w.ndim != 1 or np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise ParameterError("mixture weights must lie on the simplex")
        if mu.ndim != 2 or mu.shape[0] != w.size:
            raise ParameterError("one mean row per mixture weight required")

    def sample(self, n: int, rng) -> np.ndarray:
        comps = rng.choice(self.weights.size, size=n, p=self.weights)
        return self.means[comps] + math.sqrt(self.tau2) * rng.standard_normal(
            (n, self.means.shape[1])
        )

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "tau2": float(self.tau2),
        }

    @classmethod
    def from_dict(cls, d) -> "GaussianMixturePrior":
        return cls(
            weights=np.array(d["weights"]), means=np.array(d["means"]), tau2=d["tau2"]
        )


def gmm_posterior_mean(noisy, sigma: float, prior: GaussianMixturePrior) -> np.ndarray:
    """Exact posterior mean E[X | X + sigma * Z = noisy] under the mixture
    prior: responsibility-weighted per-component conjugate means
    (tau^2 * noisy + sigma^2 * mu_c) / (tau^2 + sigma^2).  Batch-aware."""
    noisy = np.asarray(noisy, dtype=np.float64)
    sigma = float(sigma)
    if sigma == 0.0:
        return noisy.copy()
    total = prior.tau2 + sigma * sigma
    x = noisy if noisy.ndim == 2 else noisy[None, :]
    d2 = ((x[:, None, :] - prior.means[None, :, :]) ** 2).sum(axis=2)  # (B, C)
    with np.errstate(divide="ignore"):
        logits = np.log(prior.weights)[None, :] - d2 / (2.0 * total)
    logits = logits - logits.max(axis=1, keepdims=True)
    resp = np.exp(logits)
    resp /= resp.sum(axis=1, keepdims=True)
    shrunk = (prior.tau2 * x[:, None, :] + sigma * sigma * prior.means[None, :, :]) / total
    out = (resp[:, :, None] * shrunk).sum(axis=1)
    return out if noisy.ndim == 2 else out[0]


@dataclass(frozen=True)
class Denoiser:
    """Post-noise cleanup step.  Receives the sqrt(beta)-scaled noisy input
    plus the matched timestep and returns an estimate in original input
    coordinates.  ``identity`` just inverts the scaling; the mixture kind
    applies the closed-form posterior mean at the timestep's noise level.
    """

    kind: str = "gmm_posterior_mean"
    prior: GaussianMixturePrior | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "gmm_posterior_mean"):
            raise ParameterError(f"unknown denoiser kind: {self.kind!r}")
        if self.kind == "gmm_posterior_mean" and self.prior is None:
            raise ParameterError("gmm_posterior_mean denoiser needs a prior")

    def denoise(self, x_scaled, t_star: int, schedule: NoiseSchedule) -> np.ndarray:
        beta = float(schedule.betas[t_star - 1])
        noisy = np.asarray(x_scaled, dtype=np.float64) / math.sqrt(beta)
        if self.kind == "identity":
            return noisy
        sigma_eff = math.sqrt((1.0 - beta) / beta)
        return gmm_posterior_mean(noisy, sigma_eff, self.prior)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.prior is not None:
            d["prior"] = self.prior.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "Denoiser":
        prior = GaussianMixturePrior.from_dict(d["prior"]) if "prior" in d else None
        return cls(kind=d["kind"], prior=prior)


@dataclass
class SmoothedOutput:
    """Averaged concept vector and class votes from m seeded noise draws."""

    mean_concepts: np.ndarray
    class_counts: np.ndarray
    m: int
    sigma: float

    def __post_init__(self):
        self.mean_concepts = np.asarray(self.mean_concepts, dtype=np.float64)
        self.class_counts = np.asarray(self.class_counts, dtype=np.int64)
        if self.m < 1:
            raise ParameterError("m must be >= 1")
        if int(self.class_counts.sum()) != self.m:
            raise ParameterError("class counts must sum to m")

    def to_dict(self) -> dict:
        return {
            "mean_concepts": self.mean_concepts.tolist(),
            "class_counts": self.class_counts.tolist(),
            "m": int(self.m),
            "sigma": float(self.sigma),
        }


def _noisy_batch(x, sigma, base_seed, m):
    """Stacked noisy copies, one per-sample seed: base_seed + index."""
    draws = np.empty((m, x.size))
    for i in range(m):
        rng = np.random.default_rng(int(base_seed) + i)
        draws[i] = x + rng.normal(0.0, sigma, x.shape)
    return draws


def dds_sample(model, x, sigma, denoiser: Denoiser, schedule: NoiseSchedule, seed):
    """One smoothing draw: scale the noised input to the matched timestep,
    denoise, and read the concept vector.  Deterministic given the seed.
    sigma == 0 short-circuits to the clean concept vector."""
    x = np.asarray(x, dtype=np.float64)
    sigma = float(sigma)
    if sigma == 0.0:
        return model.concept_vector(x)
    t_star, beta = match_timestep(sigma, schedule)
    rng = np.random.default_rng(seed)
    noisy = x + rng.normal(0.0, sigma, x.shape)
    x_hat = denoiser.denoise(math.sqrt(beta) * noisy, t_star, schedule)
    return model.concept_vector(x_hat)


def smooth_concepts(
    model, x, sigma, m: int, denoiser: Denoiser, schedule: NoiseSchedule, base_seed
) -> SmoothedOutput:
    """Average m seeded smoothing draws and tally full-pipeline class votes.

    Per-sample seeds are base_seed + sample index; the mean uses numpy's
    fixed-order pairwise summation, so the output is bitwise reproducible
    regardless of how the draws were scheduled.
    """
    x = np.asarray(x, dtype=np.float64)
    m = int(m)
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    sigma = float(sigma)
    n_classes = model.n_classes
    if sigma == 0.0:
        concepts = model.concept_vector(x)
        counts = np.bincount([int(model.predict_label(x))], minlength=n_classes) * m
        return SmoothedOutput(concepts, counts, m, sigma)
    t_star, beta = match_timestep(sigma, schedule)
    noisy = _noisy_batch(x, sigma, base_seed, m)
    x_hat = denoiser.denoise(math.sqrt(beta) * noisy, t_star, schedule)
    concepts = model.concept_vector(x_hat)
    labels = model.predict_label(x_hat)
    counts = np.bincount(labels, minlength=n_classes)
    return SmoothedOutput(concepts.mean(axis=0), counts, m, sigma)


def purify(x, sigma, denoiser: Denoiser, schedule: NoiseSchedule) -> np.ndarray:
    """Deterministic single denoising pass without noise injection: treat
    the input itself as the noisy sample at level sigma."""
    x = np.asarray(x, dtype=np.float64)
    sigma = float(sigma)
    if sigma == 0.0 or denoiser.kind == "identity":
        return x.copy()
    t_star, beta = match_timestep(sigma, schedule)
    return denoiser.denoise(math.sqrt(beta) * x, t_star, schedule)


@dataclass(frozen=True)
class PipelineVariant:
    """One cell of the denoising x smoothing ablation grid."""

    denoising: bool
    smoothing: bool

    @property
    def name(self) -> str:
        return {
            (False, False): "plain",
            (False, True): "smoothing_only",
            (True, False): "denoising_only",
            (True, True): "full",
        }[(self.denoising, self.smoothing)]


def ablation_config(denoising: bool, smoothing: bool) -> PipelineVariant:
    """Map the two ablation switches to a pipeline variant:
    (off, off) plain deterministic pipeline; (off, on) noise averaging with
    the identity denoiser; (on, off) one deterministic purification pass;
    (on, on) the full smoothed-and-denoised pipeline."""
    return PipelineVariant(denoising=bool(denoising), smoothing=bool(smoothing))


@dataclass
class SmoothingParams:
    """Everything the smoothed pipeline needs besides the model."""

    sigma: float
    m: int
    schedule: NoiseSchedule
    denoiser: Denoiser

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ParameterError("sigma must be >= 0")
        if self.m < 1:
            raise ParameterError("m must be >= 1")


def evaluate_variant(
    model, x, variant: PipelineVariant, params: SmoothingParams, base_seed
) -> SmoothedOutput:
    """Concept vector and class votes for one input under one ablation cell."""
    x = np.asarray(x, dtype=np.float64)
    n_classes = model.n_classes
    if not variant.smoothing:
        if variant.denoising:
            x_eff = purify(x, params.sigma, params.denoiser, params.schedule)
        else:
            x_eff = x
        concepts = model.concept_vector(x_eff)
        counts = np.bincount([int(model.predict_label(x_eff))], minlength=n_classes)
        return SmoothedOutput(concepts, counts, 1, 0.0)
    denoiser = params.denoiser if variant.denoising else Denoiser(kind="identity")
    return smooth_concepts(
        model, x, params.sigma, params.m, denoiser, params.schedule, base_seed
    )

"""Concept-bottleneck classification with certified explanation stability.

Layers a concept bottleneck over a small frozen backbone, fuses concept
and backbone features for prediction, wraps inference in noise-injection
smoothing with a pluggable denoiser, and certifies L2 radii inside which
the top-k concepts and the predicted class provably hold, alongside an
attack-and-measure harness on synthetic planted-concept data.
"""

from .errors import (
    AttackError,
    ConceptCertError,
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    EmptyConceptSetError,
    OutOfScheduleError,
    ParameterError,
    ResourceLimitError,
    SupportError,
)
from .metrics import (
    cfs,
    cpcs,
    normalize_to_simplex,
    renyi_divergence,
    top_k_indices,
    top_k_overlap,
)
from .certify import (
    CertificateReport,
    boundary_set,
    certified_radius,
    certify_sigma_topk,
    estimate_p_bounds,
    k0_of,
    min_divergence_bruteforce,
    min_divergence_topk,
    prediction_gamma_threshold,
    worst_case_q,
)
from .bottleneck import (
    ConceptSet,
    EmbeddingTable,
    FilterCutoffs,
    activation_matrix,
    cos_cubed,
    drop_uninterpretable,
    filter_concepts,
    learn_projection,
)
from .network import ConceptModel, TinyBackbone, concept_features, fuse, intervene, predict
from .sparse_fit import train_final_layer
from .smoothing import (
    Denoiser,
    GaussianMixturePrior,
    NoiseSchedule,
    SmoothedOutput,
    ablation_config,
    dds_sample,
    gmm_posterior_mean,
    match_timestep,
    smooth_concepts,
)
from .attacks import AttackConfig, gaussian_perturb, grad_check, pgd_attack
from .data import SyntheticDataset, SyntheticSpec, synth_dataset
from .pipeline import train_model
from .evaluate import accuracy, sensitivity_specificity, stability_sweep, write_report
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"

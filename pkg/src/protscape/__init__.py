"""Geometric scattering and dual-attention embeddings for protein
conformation trajectories.

The package turns a trajectory of residue coordinates into per-frame
graphs, diffusion wavelets, and scattering coefficients, trains a small
attention model with time and structure regression heads on top of them
using its own reverse-mode gradient engine, and ships a numerical
verifier for the stability properties of the wavelet construction.
"""

from .autodiff import Tensor, backward, check_gradients
from .diffusion import (
    DiffusionOperators,
    lazy_walk,
    matrix_powers,
    symmetric_diffusion,
    weighted_norm,
    weighted_opnorm,
)
from .graphs import ProteinGraph, build_knn_graph, one_hot
from .model import (
    FrameInputs,
    ModelConfig,
    ModelParams,
    StructureTargets,
    forward,
    load_checkpoint,
    loss,
    save_checkpoint,
)
from .scattering import (
    ScatteringOutput,
    WaveletBank,
    dyadic_bank,
    dyadic_scales,
    feature_count,
    generalized_bank,
    learnable_bank,
    scatter,
)
from .trajectory_io import (
    Trajectory,
    TrajectoryFormatError,
    TrajectoryFrame,
    load_trajectory,
    save_trajectory,
    synth_hinge,
    synth_two_state,
)
from .training import (
    MetricsReport,
    SplitPlan,
    TrainConfig,
    TrainedModel,
    attention_readout,
    evaluate,
    interpolate_latents,
    kmeans,
    make_split,
    prepare_frames,
    s2l_run,
    train,
    wt2m_run,
)
from .verify import (
    PerturbationPair,
    StabilityReport,
    compute_kappa_R,
    run_suite,
    stability_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "check_gradients",
    "DiffusionOperators",
    "lazy_walk",
    "matrix_powers",
    "symmetric_diffusion",
    "weighted_norm",
    "weighted_opnorm",
    "ProteinGraph",
    "build_knn_graph",
    "one_hot",
    "FrameInputs",
    "ModelConfig",
    "ModelParams",
    "StructureTargets",
    "forward",
    "loss",
    "save_checkpoint",
    "load_checkpoint",
    "ScatteringOutput",
    "WaveletBank",
    "dyadic_bank",
    "dyadic_scales",
    "feature_count",
    "generalized_bank",
    "learnable_bank",
    "scatter",
    "Trajectory",
    "TrajectoryFrame",
    "TrajectoryFormatError",
    "load_trajectory",
    "save_trajectory",
    "synth_hinge",
    "synth_two_state",
    "MetricsReport",
    "SplitPlan",
    "TrainConfig",
    "TrainedModel",
    "attention_readout",
    "evaluate",
    "interpolate_latents",
    "kmeans",
    "make_split",
    "prepare_frames",
    "s2l_run",
    "train",
    "wt2m_run",
    "PerturbationPair",
    "StabilityReport",
    "compute_kappa_R",
    "run_suite",
    "stability_sweep",
    "__version__",
]

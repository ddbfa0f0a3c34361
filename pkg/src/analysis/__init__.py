from src.analysis.spectral import (
    SpectralProfile,
    spectral_profile,
    spectral_profile_batches,
    profile_from_arrays,
    mean_periodogram,
)
from src.analysis.topology import (
    TopologyReport,
    build_ground_truth,
    topology_match,
    top_k_edges,
    random_baseline_iou,
    read_matrix,
)
from src.analysis.latent import (
    latent_factors,
    correlation_matrix,
    latent_diagnostics,
    max_off_diagonal,
    mean_off_diagonal,
)
from src.analysis.gating import gate_trace, rolling_volatility
from src.analysis.decomposition import decomposition_trace, attention_map

__all__ = [
    "SpectralProfile",
    "spectral_profile",
    "spectral_profile_batches",
    "profile_from_arrays",
    "mean_periodogram",
    "TopologyReport",
    "build_ground_truth",
    "topology_match",
    "top_k_edges",
    "random_baseline_iou",
    "read_matrix",
    "latent_factors",
    "correlation_matrix",
    "latent_diagnostics",
    "max_off_diagonal",
    "mean_off_diagonal",
    "gate_trace",
    "rolling_volatility",
    "decomposition_trace",
    "attention_map",
]

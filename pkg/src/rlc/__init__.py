from src.rlc.regularizer import (
    RLCProjection,
    RLCState,
    LossBundle,
    stat_readout,
    target_pool,
    project_latent,
    orth_loss,
    pcc,
    pcc_columns,
    rlc_state,
    mse_loss,
    total_loss,
    spectral_norm,
    orth_residual,
    retract_orthonormal,
    principal_rotation,
)

__all__ = [
    "RLCProjection",
    "RLCState",
    "LossBundle",
    "stat_readout",
    "target_pool",
    "project_latent",
    "orth_loss",
    "pcc",
    "pcc_columns",
    "rlc_state",
    "mse_loss",
    "total_loss",
    "spectral_norm",
    "orth_residual",
    "retract_orthonormal",
    "principal_rotation",
]

"""FANoise numerics lab: InfoNCE gradients, SVD-adaptive noise, spectral diagnostics."""

from .contrastive import (
    EmbeddingBatch,
    LossGradients,
    alignment_uniformity,
    expected_noisy_grad_q,
    gamma_projection,
    infonce_loss,
    loss_with_gradients,
    mc_noisy_grad,
)
from .matrix import RngStream, SvdFactors, gaussian_matrix, l2_normalize_rows, thin_svd
from .noise import (
    InjectionTrace,
    NoiseConfig,
    Position,
    Scaling,
    Side,
    fanoise_inject,
    naive_inject,
    normalized_inject,
    scaling_vector,
)
from .spectral import (
    SpectralReport,
    mp_edges,
    run_spectrum_experiment,
    singular_overlap,
    spiked_covariance_check,
    tau_star,
    weyl_check,
)

__version__ = "0.1.0"

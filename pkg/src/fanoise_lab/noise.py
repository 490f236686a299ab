"""Feature-adaptive (SVD-modulated) noise injection and isotropic baselines.

FANoise perturbs a batch ``E`` (B x d) in its own principal directions:

1. thin SVD ``E = U diag(s) V^T`` of rank ``r``;
2. ``N_rand`` (B x r) standard Gaussian, column ``i`` scaled by ``S_i``;
3. mapped back through ``V^T`` and added with magnitude ``alpha / sqrt(d)``.

The perturbation therefore lies in the row space of ``E`` and has expected
energy ``(alpha^2 / d) * B * sum_i S_i^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import DegenerateSpectrumError, InvalidParameterError
from .matrix import DEFAULT_SVD_TOL, RngStream, as_matrix, thin_svd


class Scaling(str, Enum):
    NONE = "none"
    UNIFORM = "uniform"
    LINEAR = "linear"
    SUBLINEAR = "sublinear"


class Side(str, Enum):
    QUERY = "query"
    KEY = "key"
    BOTH = "both"


class Position(str, Enum):
    INPUT_LAYER = "input_layer"
    OUTPUT_LAYER = "output_layer"


@dataclass(frozen=True)
class NoiseConfig:
    alpha: float = 0.1
    scaling: Scaling = Scaling.SUBLINEAR
    side: Side = Side.BOTH
    position: Position = Position.OUTPUT_LAYER
    rng: RngStream = field(default_factory=lambda: RngStream(42))
    svd_tol: float = DEFAULT_SVD_TOL

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise InvalidParameterError(f"alpha must be finite and >= 0, got {self.alpha}")
        object.__setattr__(self, "scaling", Scaling(self.scaling))
        object.__setattr__(self, "side", Side(self.side))
        object.__setattr__(self, "position", Position(self.position))

    @property
    def active(self) -> bool:
        return self.scaling is not Scaling.NONE and self.alpha > 0

    def with_rng(self, rng: RngStream) -> "NoiseConfig":
        return replace(self, rng=rng)


@dataclass(frozen=True)
class InjectionTrace:
    scaling_vector: np.ndarray
    noise_energy: float
    rank_used: int
    per_direction_energy: np.ndarray
    zero_input: bool = False


def scaling_vector(s, mode: Scaling | str) -> np.ndarray:
    """Per-direction noise multipliers from singular values ``s``.

    >>> scaling_vector([4.0, 1.0], "sublinear")
    array([1.33333333, 0.66666667])
    """
    s = np.asarray(s, dtype=np.float64)
    mode = Scaling(mode)
    if s.ndim != 1 or s.size == 0:
        raise DegenerateSpectrumError("scaling needs at least one singular value")
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise DegenerateSpectrumError("singular values must be finite and positive")
    if mode is Scaling.UNIFORM or mode is Scaling.NONE:
        return np.ones_like(s)
    if mode is Scaling.LINEAR:
        return s / s.mean()
    root = np.sqrt(s)
    return root / root.mean()


def expected_noise_energy(batch_size: int, dim: int, alpha: float, scale: np.ndarray) -> float:
    return alpha**2 / dim * batch_size * float(np.sum(np.asarray(scale) ** 2))


def fanoise_inject(e, cfg: NoiseConfig) -> tuple[np.ndarray, InjectionTrace]:
    """Inject SVD-shaped Gaussian noise into the rows of ``e``.

    Returns the input object itself when injection is inactive
    (``scaling == none`` or ``alpha == 0``) or ``e`` is the zero matrix.
    """
    e = as_matrix(e, "embeddings")
    if not cfg.active:
        return e, InjectionTrace(np.empty(0), 0.0, 0, np.empty(0))
    b, d = e.shape
    svd = thin_svd(e, cfg.svd_tol)
    if svd.rank == 0:
        return e, InjectionTrace(np.empty(0), 0.0, 0, np.empty(0), zero_input=True)
    scale = scaling_vector(svd.s, cfg.scaling)
    n_rand = cfg.rng.generator().standard_normal((b, svd.rank))
    n_scaled = n_rand * scale
    magnitude = cfg.alpha / math.sqrt(d)
    delta = magnitude * (n_scaled @ svd.v.T)
    # V has orthonormal columns, so per-direction energy is exact in the r-space.
    per_dir = magnitude**2 * np.einsum("ij,ij->j", n_scaled, n_scaled)
    trace = InjectionTrace(
        scaling_vector=scale,
        noise_energy=float(np.einsum("ij,ij->", delta, delta)),
        rank_used=svd.rank,
        per_direction_energy=per_dir,
    )
    return e + delta, trace


def inject_pair(q_raw, k_raw, cfg: NoiseConfig):
    """Apply ``cfg`` to a query/key pair on the configured side(s).

    Each side draws from its own sub-stream of ``cfg.rng`` and gets its own SVD.
    """
    traces = {}
    q_out, k_out = q_raw, k_raw
    if cfg.side in (Side.QUERY, Side.BOTH):
        q_out, traces["query"] = fanoise_inject(q_raw, cfg.with_rng(cfg.rng.derive(0)))
    if cfg.side in (Side.KEY, Side.BOTH):
        k_out, traces["key"] = fanoise_inject(k_raw, cfg.with_rng(cfg.rng.derive(1)))
    return q_out, k_out, traces


def _isotropic(e, std: float, rng: RngStream) -> np.ndarray:
    e = as_matrix(e, "embeddings")
    if std < 0 or not math.isfinite(std):
        raise InvalidParameterError(f"noise std must be finite and >= 0, got {std}")
    if std == 0:
        return e
    return e + std * rng.generator().standard_normal(e.shape)


def naive_inject(e, alpha: float, rng: RngStream) -> np.ndarray:
    """``e + alpha * N``; per-row energy grows as ``alpha^2 * d``."""
    return _isotropic(e, alpha, rng)


def normalized_inject(e, alpha: float, rng: RngStream) -> np.ndarray:
    """``e + (alpha / sqrt(d)) * N``; per-row energy ``alpha^2`` for any ``d``."""
    d = np.shape(e)[1]
    return _isotropic(e, alpha / math.sqrt(d), rng)

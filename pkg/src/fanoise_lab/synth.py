"""Deterministic synthetic data: spectrum-controlled matrices and paired views."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateSpectrumError, InvalidParameterError
from .matrix import RngStream, write_matrix_csv


@dataclass(frozen=True)
class PowerLaw:
    exponent: float
    sigma_max: float = 1.0
    count: int | None = None

    def values(self, r: int) -> np.ndarray:
        return self.sigma_max * np.arange(1, r + 1, dtype=np.float64) ** (-self.exponent)


@dataclass(frozen=True)
class LogLinear:
    sigma_max: float
    sigma_min: float
    count: int | None = None

    def values(self, r: int) -> np.ndarray:
        if r == 1:
            return np.array([float(self.sigma_max)])
        return np.geomspace(self.sigma_max, self.sigma_min, r)


@dataclass(frozen=True)
class Explicit:
    values_: tuple

    @property
    def count(self) -> int:
        return len(self.values_)

    def values(self, r: int) -> np.ndarray:
        return np.asarray(self.values_, dtype=np.float64)


@dataclass(frozen=True)
class SpectrumSpec:
    """``decay.count`` sets the rank; ``None`` means ``min(m, n)``."""

    m: int
    n: int
    decay: PowerLaw | LogLinear | Explicit
    rng: RngStream

    def singular_values(self) -> np.ndarray:
        full = min(self.m, self.n)
        r = self.decay.count if self.decay.count is not None else full
        if not 1 <= r <= full:
            raise DegenerateSpectrumError(f"rank {r} not in [1, {full}] for a {self.m}x{self.n} matrix")
        s = self.decay.values(r)
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise DegenerateSpectrumError("requested singular values must be finite and positive")
        if np.any(np.diff(s) > 0):
            raise DegenerateSpectrumError("requested singular values must be non-increasing")
        return s


def haar_orthonormal(rows: int, cols: int, rng: RngStream) -> np.ndarray:
    """``rows x cols`` matrix with Haar-distributed orthonormal columns (QR, diag(R) > 0)."""
    z = rng.generator().standard_normal((rows, cols))
    qmat, rmat = np.linalg.qr(z)
    signs = np.sign(np.diag(rmat))
    signs[signs == 0] = 1.0
    return qmat * signs


def make_spectrum_matrix(spec: SpectrumSpec) -> np.ndarray:
    s = spec.singular_values()
    r = s.size
    u = haar_orthonormal(spec.m, r, spec.rng.derive(0))
    v = haar_orthonormal(spec.n, r, spec.rng.derive(1))
    return (u * s) @ v.T


def phase_transition_fixture(seed: int, m: int = 1000, n: int = 1536, rank: int = 24) -> np.ndarray:
    """Log-linear spectrum from ``5 tau*`` to ``0.1 tau*`` (``tau*`` at alpha = 1), ``rank`` directions."""
    ts = np.sqrt(m / n)
    return make_spectrum_matrix(SpectrumSpec(m, n, LogLinear(5 * ts, 0.1 * ts, rank), RngStream(seed)))


# -- paired query/key data --------------------------------------------------


@dataclass(frozen=True)
class PairedDatasetSpec:
    num_pairs: int = 256
    latent_dim: int = 16
    feature_dim: int = 32
    view_noise: float = 0.0
    num_distractors_eval: int = 15
    num_eval: int = 256
    tied_views: bool = False
    rng: RngStream = RngStream(0)

    def __post_init__(self):
        if self.latent_dim > self.feature_dim:
            raise InvalidParameterError("latent_dim must not exceed feature_dim")
        if self.num_pairs < 2:
            raise InvalidParameterError("num_pairs must be >= 2")
        if self.view_noise < 0:
            raise InvalidParameterError("view_noise must be >= 0")
        if self.num_eval < 1:
            raise InvalidParameterError("num_eval must be >= 1")
        if self.num_distractors_eval > self.num_eval - 1:
            raise InvalidParameterError("num_distractors_eval must be < num_eval")


@dataclass(frozen=True)
class PairedDataset:
    """Train pairs ``(train_x[i], train_y[i])``; eval query ``i`` has positive
    ``eval_positive[i]`` and distractors ``eval_distractors[i]`` (K x D)."""

    train_x: np.ndarray
    train_y: np.ndarray
    eval_query: np.ndarray
    eval_positive: np.ndarray
    eval_distractors: np.ndarray
    train_index: np.ndarray
    eval_index: np.ndarray
    spec: PairedDatasetSpec

    @property
    def feature_dim(self) -> int:
        return self.train_x.shape[1]

    def export(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(out / "train_x.csv", self.train_x)
        write_matrix_csv(out / "train_y.csv", self.train_y)
        write_matrix_csv(out / "eval_query.csv", self.eval_query)
        write_matrix_csv(out / "eval_positive.csv", self.eval_positive)
        q, k, d = self.eval_distractors.shape
        write_matrix_csv(out / "eval_distractors.csv", self.eval_distractors.reshape(q * k, d))
        s = self.spec
        manifest = {
            "num_pairs": s.num_pairs,
            "num_eval": s.num_eval,
            "latent_dim": s.latent_dim,
            "feature_dim": s.feature_dim,
            "num_distractors_eval": s.num_distractors_eval,
            "view_noise": repr(float(s.view_noise)),
            "tied_views": int(s.tied_views),
            "seed": s.rng.seed,
            "stream_id": s.rng.stream_id,
        }
        (out / "manifest.txt").write_text("".join(f"{k}={v}\n" for k, v in manifest.items()))


def make_paired_dataset(spec: PairedDatasetSpec) -> PairedDataset:
    """Two noisy linear views ``x = A z + noise``, ``y = B z + noise`` of unit latents ``z``.

    ``A`` and ``B`` have orthonormal columns; with ``tied_views`` they coincide.
    Train and eval use disjoint latent draws.
    """
    total = spec.num_pairs + spec.num_eval
    z = spec.rng.derive(0).generator().standard_normal((total, spec.latent_dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    a = haar_orthonormal(spec.feature_dim, spec.latent_dim, spec.rng.derive(1))
    b = a if spec.tied_views else haar_orthonormal(spec.feature_dim, spec.latent_dim, spec.rng.derive(2))
    noise = spec.rng.derive(3).generator().standard_normal((2, total, spec.feature_dim))
    x = z @ a.T + spec.view_noise * noise[0]
    y = z @ b.T + spec.view_noise * noise[1]

    train_idx = np.arange(spec.num_pairs)
    eval_idx = np.arange(spec.num_pairs, total)
    gen = spec.rng.derive(4).generator()
    k = spec.num_distractors_eval
    picks = np.empty((spec.num_eval, k), dtype=np.int64)
    for i in range(spec.num_eval):
        others = gen.choice(spec.num_eval - 1, size=k, replace=False)
        picks[i] = np.where(others >= i, others + 1, others)
    ey = y[eval_idx]
    return PairedDataset(
        train_x=x[train_idx],
        train_y=y[train_idx],
        eval_query=x[eval_idx],
        eval_positive=ey,
        eval_distractors=ey[picks],
        train_index=train_idx,
        eval_index=eval_idx,
        spec=spec,
    )

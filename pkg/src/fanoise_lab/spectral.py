"""Random-matrix diagnostics for noisy feature matrices.

Noise convention throughout: ``GN`` has i.i.d. entries of std ``alpha/sqrt(n)``
where ``n`` is the number of columns (feature dimension). Under that scaling
the pure-noise singular values fill ``alpha * [|1 - sqrt(m/n)|, 1 + sqrt(m/n)]``
and directions with singular value below ``alpha * sqrt(m/n)`` drown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InvalidParameterError
from .matrix import DEFAULT_SVD_TOL, RngStream, as_matrix, format_real, gaussian_matrix, singular_values, thin_svd

WEYL_SLACK = 1e-9
DEGENERATE_GAP = 1e-8


def mp_edges(m: int, n: int, alpha: float) -> tuple[float, float]:
    _check_dims(m, n, alpha)
    ratio = math.sqrt(m / n)
    return alpha * abs(1.0 - ratio), alpha * (1.0 + ratio)


def tau_star(m: int, n: int, alpha: float) -> float:
    _check_dims(m, n, alpha)
    return alpha * math.sqrt(m / n)


def _check_dims(m, n, alpha):
    if m < 1 or n < 1:
        raise InvalidParameterError(f"m and n must be >= 1, got {m}, {n}")
    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")


def _same_shape(a, b):
    a = as_matrix(a, "f")
    b = as_matrix(b, "other")
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def weyl_check(f, noise) -> tuple[float, float, int]:
    """Largest ``|sigma_i(f + noise) - sigma_i(f)|``, the bound ``sigma_max(noise)``, violations."""
    f, noise = _same_shape(f, noise)
    base = singular_values(f)
    pert = singular_values(f + noise)
    bound = float(singular_values(noise)[0])
    gaps = np.abs(pert - base)
    violations = int(np.count_nonzero(gaps > bound + WEYL_SLACK))
    return float(gaps.max()), bound, violations


def singular_overlap(f, f_noisy, svd_tol: float = DEFAULT_SVD_TOL) -> np.ndarray:
    """``|<v_i(f), v_i(f_noisy)>|`` for right singular vectors, up to the smaller rank."""
    f, f_noisy = _same_shape(f, f_noisy)
    v1 = thin_svd(f, svd_tol).v
    v2 = thin_svd(f_noisy, svd_tol).v
    r = min(v1.shape[1], v2.shape[1])
    return np.clip(np.abs(np.einsum("ij,ij->j", v1[:, :r], v2[:, :r])), 0.0, 1.0)


def max_overlap(f, f_noisy, svd_tol: float = DEFAULT_SVD_TOL) -> np.ndarray:
    """``max_j |<v_i(f), v_j(f_noisy)>|`` per base direction ``i``."""
    f, f_noisy = _same_shape(f, f_noisy)
    v1 = thin_svd(f, svd_tol).v
    v2 = thin_svd(f_noisy, svd_tol).v
    if v1.shape[1] == 0 or v2.shape[1] == 0:
        return np.zeros(v1.shape[1])
    return np.clip(np.abs(v1.T @ v2).max(axis=1), 0.0, 1.0)


def degenerate_indices(s, rel_gap: float = DEGENERATE_GAP) -> np.ndarray:
    """Indices belonging to clusters of near-equal singular values."""
    s = np.asarray(s, dtype=np.float64)
    if s.size < 2 or s[0] == 0:
        return np.empty(0, dtype=int)
    close = np.abs(np.diff(s)) < rel_gap * s[0]
    flagged = np.zeros(s.size, dtype=bool)
    flagged[:-1] |= close
    flagged[1:] |= close
    return np.flatnonzero(flagged)


def collapse_index(overlaps, threshold: float = 0.5, exclude=()) -> int:
    """First index whose overlap drops below ``threshold`` (``len`` if none does)."""
    skip = set(int(i) for i in exclude)
    for i, v in enumerate(np.asarray(overlaps)):
        if i not in skip and v < threshold:
            return i
    return len(overlaps)


def spiked_covariance_check(f, alpha: float, repetitions: int, rng: RngStream) -> float:
    """Max-norm gap between the MC average of ``X~^T X~`` and
    ``sum_i sigma_i^2 v_i v_i^T + (m/n) alpha^2 I`` with ``X~ = f + (alpha/sqrt(n)) GN``.
    """
    f = as_matrix(f, "f")
    if repetitions < 1:
        raise InvalidParameterError("repetitions must be >= 1")
    m, n = f.shape
    svd = thin_svd(f)
    target = (svd.v * svd.s**2) @ svd.v.T + (m / n) * alpha**2 * np.eye(n)
    if alpha == 0:
        return float(np.abs(f.T @ f - target).max())
    gen = rng.generator()
    acc = np.zeros((n, n))
    std = alpha / math.sqrt(n)
    for _ in range(repetitions):
        x = f + std * gen.standard_normal((m, n))
        acc += x.T @ x
    return float(np.abs(acc / repetitions - target).max())


@dataclass
class SpectralReport:
    sigma_base: np.ndarray
    sigma_noise: np.ndarray
    sigma_noisy: np.ndarray
    mp_lower: float
    mp_upper: float
    tau_star: float
    overlaps: np.ndarray
    max_overlaps: np.ndarray
    weyl_violations: int
    weyl_max_gap: float
    weyl_bound: float
    m: int
    n: int
    alpha: float
    seed: int | None = None
    degenerate: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def collapse_index(self, threshold: float = 0.5) -> int:
        return collapse_index(self.overlaps, threshold, exclude=self.degenerate)

    def write_csv(self, path) -> None:
        rows = ["index,sigma_base,sigma_noise,sigma_noisy,overlap_abs"]
        for i in range(len(self.sigma_base)):
            ov = format_real(self.overlaps[i]) if i < len(self.overlaps) else ""
            rows.append(
                f"{i},{format_real(self.sigma_base[i])},{format_real(self.sigma_noise[i])},"
                f"{format_real(self.sigma_noisy[i])},{ov}"
            )
        Path(path).write_text("\n".join(rows) + "\n")

    def write_similarity_csv(self, path) -> None:
        rows = ["index,overlap_abs,max_overlap_abs"]
        for i in range(len(self.max_overlaps)):
            ov = format_real(self.overlaps[i]) if i < len(self.overlaps) else ""
            rows.append(f"{i},{ov},{format_real(self.max_overlaps[i])}")
        Path(path).write_text("\n".join(rows) + "\n")

    def meta(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "alpha": format_real(self.alpha),
            "mp_lower": format_real(self.mp_lower),
            "mp_upper": format_real(self.mp_upper),
            "tau_star": format_real(self.tau_star),
            "weyl_violations": self.weyl_violations,
            "seed": "" if self.seed is None else self.seed,
        }

    def write_meta(self, path) -> None:
        Path(path).write_text("".join(f"{k}={v}\n" for k, v in self.meta().items()))


def run_spectrum_experiment(f, alpha: float, rng: RngStream, svd_tol: float = DEFAULT_SVD_TOL) -> SpectralReport:
    """Spectra of ``F``, ``GN`` and ``F + GN`` plus MP edges, threshold, overlaps and Weyl check."""
    f = as_matrix(f, "f")
    m, n = f.shape
    if alpha < 0:
        raise InvalidParameterError(f"alpha must be >= 0, got {alpha}")
    gn = gaussian_matrix(m, n, alpha / math.sqrt(n), rng)
    noisy = f + gn
    base_svd = thin_svd(f, svd_tol)
    noisy_svd = thin_svd(noisy, svd_tol)
    r = min(base_svd.rank, noisy_svd.rank)
    overlaps = np.clip(np.abs(np.einsum("ij,ij->j", base_svd.v[:, :r], noisy_svd.v[:, :r])), 0.0, 1.0)
    if base_svd.rank and noisy_svd.rank:
        max_ov = np.clip(np.abs(base_svd.v.T @ noisy_svd.v).max(axis=1), 0.0, 1.0)
    else:
        max_ov = np.zeros(base_svd.rank)
    s_base = base_svd.all_s
    s_noise = singular_values(gn)
    s_noisy = noisy_svd.all_s
    gaps = np.abs(s_noisy - s_base)
    bound = float(s_noise[0])
    lo, hi = mp_edges(m, n, alpha)
    return SpectralReport(
        sigma_base=s_base,
        sigma_noise=s_noise,
        sigma_noisy=s_noisy,
        mp_lower=lo,
        mp_upper=hi,
        tau_star=tau_star(m, n, alpha),
        overlaps=overlaps,
        max_overlaps=max_ov,
        weyl_violations=int(np.count_nonzero(gaps > bound + WEYL_SLACK)),
        weyl_max_gap=float(gaps.max()),
        weyl_bound=bound,
        m=m,
        n=n,
        alpha=alpha,
        seed=rng.seed,
        degenerate=degenerate_indices(base_svd.s),
    )

"""InfoNCE loss, its closed-form gradients, and noise-expectation identities.

The loss is the *sum* over rows of ``-log softmax`` terms (not a batch mean).
Gradients are taken with respect to the normalized embedding rows, treated
as free vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ContractViolationError, InvalidInputError, InvalidParameterError
from .matrix import RngStream, as_matrix, l2_normalize_rows

UNIT_NORM_TOL = 1e-10


@dataclass(frozen=True)
class EmbeddingBatch:
    """Paired query/key embeddings; row ``l`` of ``q`` matches row ``l`` of ``k``."""

    q: np.ndarray
    k: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        q = as_matrix(self.q, "q")
        k = as_matrix(self.k, "k")
        if q.shape != k.shape:
            raise InvalidInputError(f"q and k shapes differ: {q.shape} vs {k.shape}")
        if self.normalized:
            for name, a in (("q", q), ("k", k)):
                dev = np.abs(np.linalg.norm(a, axis=1) - 1.0).max()
                if dev > UNIT_NORM_TOL:
                    raise ContractViolationError(f"{name} rows are not unit norm (max deviation {dev:.3e})")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)

    @classmethod
    def from_raw(cls, q, k) -> "EmbeddingBatch":
        return cls(l2_normalize_rows(q), l2_normalize_rows(k), normalized=True)

    @property
    def size(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class LossGradients:
    loss: float
    p: np.ndarray
    grad_q: np.ndarray
    grad_k: np.ndarray
    k_bar: np.ndarray
    q_tilde: np.ndarray
    tau: float


def _check(batch: EmbeddingBatch, tau: float) -> None:
    if not (tau > 0 and math.isfinite(tau)):
        raise InvalidParameterError(f"tau must be positive, got {tau}")
    if not batch.normalized:
        raise ContractViolationError("InfoNCE expects a normalized batch; use EmbeddingBatch.from_raw")


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def row_losses(q: np.ndarray, k: np.ndarray, tau: float) -> np.ndarray:
    """Per-row ``-log softmax`` terms; broadcasts over leading axes.

    No normalization check: callers probing off-sphere points (finite
    differences, noise oracles) use this directly.
    """
    z = np.einsum("...ld,...jd->...lj", q, k) / tau
    mx = z.max(axis=-1, keepdims=True)
    lse = mx[..., 0] + np.log(np.exp(z - mx).sum(axis=-1))
    return lse - np.einsum("...ll->...l", z)


def infonce_loss(batch: EmbeddingBatch, tau: float) -> float:
    _check(batch, tau)
    return float(row_losses(batch.q, batch.k, tau).sum())


def _gradients(q: np.ndarray, k: np.ndarray, tau: float):
    p = softmax_rows(q @ k.T / tau)
    k_bar = p @ k
    q_tilde = p.T @ q
    return p, k_bar, q_tilde, -(k - k_bar) / tau, -(q - q_tilde) / tau


def loss_with_gradients(batch: EmbeddingBatch, tau: float) -> LossGradients:
    """Loss plus ``grad_q = -(k - k_bar)/tau`` and ``grad_k = -(q - q_tilde)/tau``."""
    _check(batch, tau)
    p, k_bar, q_tilde, gq, gk = _gradients(batch.q, batch.k, tau)
    loss = float(row_losses(batch.q, batch.k, tau).sum())
    return LossGradients(loss=loss, p=p, grad_q=gq, grad_k=gk, k_bar=k_bar, q_tilde=q_tilde, tau=tau)


def expected_noisy_grad_q(batch: EmbeddingBatch, tau: float, delta: float) -> np.ndarray:
    """Closed-form ``E[grad_q]`` under key noise ``N(0, delta^2)``:
    ``-(1/tau) * (k - k_bar - delta^2 q / tau)``, using the noiseless ``k_bar``.
    """
    if delta < 0:
        raise InvalidParameterError(f"delta must be >= 0, got {delta}")
    g = loss_with_gradients(batch, tau)
    return -(batch.k - g.k_bar - delta**2 * batch.q / tau) / tau


def second_order_noisy_grad_q(batch: EmbeddingBatch, tau: float, delta: float) -> np.ndarray:
    """``E[grad_q]`` under key noise, exact through ``O(delta^2)``.

    Keeps the softmax-denominator and curvature terms that
    :func:`expected_noisy_grad_q` drops; with ``S2_l = sum_j p_lj^2``::

        E[k_bar_l] = k_bar_l + (delta^2/tau)(1 - S2_l) q_l
                     + (delta^2/tau^2) sum_i p_li (S2_l - p_li) k_i + O(delta^4)
    """
    g = loss_with_gradients(batch, tau)
    p = g.p
    s2 = (p**2).sum(axis=1, keepdims=True)
    mean_kbar = (
        g.k_bar
        + (delta**2 / tau) * (1.0 - s2) * batch.q
        + (delta**2 / tau**2) * ((p * (s2 - p)) @ batch.k)
    )
    return -(batch.k - mean_kbar) / tau


@dataclass(frozen=True)
class MCGradient:
    """Monte-Carlo mean gradients with per-entry standard errors."""

    grad_q: np.ndarray
    grad_k: np.ndarray
    stderr_q: np.ndarray
    stderr_k: np.ndarray
    samples: int
    chunk_size: int
    side: str


def mc_noisy_grad(
    batch: EmbeddingBatch,
    tau: float,
    delta: float,
    side: Literal["key", "query"],
    samples: int,
    rng: RngStream,
    chunk_size: int = 5000,
    antithetic: bool = False,
) -> MCGradient:
    """Average the exact gradients of ``L(q, k + eps)`` (or ``L(q + eps, k)``).

    The perturbed side is *not* re-normalized. Draws are consumed
    sequentially from one generator in chunks of ``chunk_size``; the result
    is bit-deterministic for a fixed ``(rng, chunk_size)``.

    With ``antithetic`` each draw is paired with its negation (``samples``
    counts both members); odd-order noise terms then cancel exactly and the
    standard errors are computed from the pair means.
    """
    _check(batch, tau)
    if delta < 0:
        raise InvalidParameterError(f"delta must be >= 0, got {delta}")
    if samples < 1 or (antithetic and samples % 2):
        raise InvalidParameterError("samples must be >= 1 (and even when antithetic)")
    if side not in ("key", "query"):
        raise InvalidParameterError(f"side must be 'key' or 'query', got {side!r}")
    q, k = batch.q, batch.k
    if delta == 0:
        _, _, _, gq, gk = _gradients(q, k, tau)
        zero = np.zeros_like(gq)
        return MCGradient(gq, gk, zero, zero.copy(), samples, chunk_size, side)

    def grads(eps):
        qq = q + eps if side == "query" else np.broadcast_to(q, eps.shape)
        kk = k + eps if side == "key" else np.broadcast_to(k, eps.shape)
        p = softmax_rows(np.einsum("sld,sjd->slj", qq, kk) / tau)
        gq = -(kk - np.einsum("slj,sjd->sld", p, kk)) / tau
        gk = -(qq - np.einsum("slj,sld->sjd", p, qq)) / tau
        return gq, gk

    gen = rng.generator()
    units = samples // 2 if antithetic else samples
    sums = [np.zeros_like(q) for _ in range(4)]  # sum_q, sum_k, sq_q, sq_k
    done = 0
    while done < units:
        c = min(chunk_size, units - done)
        eps = delta * gen.standard_normal((c,) + q.shape)
        gq, gk = grads(eps)
        if antithetic:
            gq_neg, gk_neg = grads(-eps)
            gq = 0.5 * (gq + gq_neg)
            gk = 0.5 * (gk + gk_neg)
        sums[0] += gq.sum(axis=0)
        sums[1] += gk.sum(axis=0)
        sums[2] += (gq**2).sum(axis=0)
        sums[3] += (gk**2).sum(axis=0)
        done += c

    def finish(total, sq):
        mean = total / units
        if units < 2:
            return mean, np.full_like(mean, np.inf)
        var = np.maximum(sq / units - mean**2, 0.0) * units / (units - 1)
        return mean, np.sqrt(var / units)

    mq, se_q = finish(sums[0], sums[2])
    mk, se_k = finish(sums[1], sums[3])
    return MCGradient(mq, mk, se_q, se_k, samples, chunk_size, side)


def gamma_projection(loss_grads: LossGradients, batch: EmbeddingBatch) -> tuple[np.ndarray, np.ndarray]:
    """Best scalar ``gamma_l`` with ``k_bar_l ~= gamma_l q_l``, and the residual norms."""
    q = batch.q
    gamma = np.einsum("ld,ld->l", loss_grads.k_bar, q) / np.einsum("ld,ld->l", q, q)
    residual = np.linalg.norm(loss_grads.k_bar - gamma[:, None] * q, axis=1)
    return gamma, residual


def alignment_uniformity(batch: EmbeddingBatch, t: float = 2.0) -> tuple[float, float]:
    """Alignment ``mean ||q_l - k_l||^2`` and uniformity ``log mean_{l!=j} exp(-t ||q_l - q_j||^2)``."""
    if not batch.normalized:
        raise ContractViolationError("alignment/uniformity expect a normalized batch")
    n = batch.size
    if n < 2:
        raise InvalidInputError("uniformity is undefined for fewer than 2 embeddings")
    q, k = batch.q, batch.k
    alignment = float(((q - k) ** 2).sum(axis=1).mean())
    diff = q[:, None, :] - q[None, :, :]
    d2 = np.einsum("ijd,ijd->ij", diff, diff)
    off = ~np.eye(n, dtype=bool)
    vals = -t * d2[off]
    mx = vals.max()
    uniformity = float(mx + np.log(np.exp(vals - mx).mean()))
    return alignment, uniformity

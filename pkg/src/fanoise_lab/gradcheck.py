"""Numerical oracles for the InfoNCE gradient identities.

``finite_difference_grads`` differentiates :func:`row_losses` only, never the
analytic gradient code, so the two routes stay independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .contrastive import (
    EmbeddingBatch,
    expected_noisy_grad_q,
    loss_with_gradients,
    mc_noisy_grad,
    row_losses,
)
from .matrix import RngStream, format_real

FD_STEP = 1e-5
FD_RTOL = 1e-6
FD_ATOL = 1e-9
CSV_COLUMNS = ("target", "row", "col", "analytic", "numeric", "abs_err", "rel_err")


def finite_difference_grads(q, k, tau: float, step: float = FD_STEP, richardson: bool = True):
    """Central differences of the summed loss w.r.t. every entry of ``q`` and ``k``.

    With ``richardson`` the step-``h`` and step-``2h`` estimates are combined
    as ``(4 D(h) - D(2h)) / 3``, cancelling the ``h^2`` truncation term that
    dominates at small temperatures. Per-row loss differences are summed
    after subtraction to limit cancellation.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    n, d = q.shape
    basis = np.eye(n * d).reshape(n * d, n, d)

    def central(h, wrt):
        if wrt == "q":
            up, down = row_losses(q + h * basis, k, tau), row_losses(q - h * basis, k, tau)
        else:
            up, down = row_losses(q, k + h * basis, tau), row_losses(q, k - h * basis, tau)
        return ((up - down).sum(axis=-1) / (2 * h)).reshape(n, d)

    out = []
    for wrt in ("q", "k"):
        g = central(step, wrt)
        if richardson:
            g = (4.0 * g - central(2 * step, wrt)) / 3.0
        out.append(g)
    return out[0], out[1]


@dataclass
class CheckRecord:
    target: str
    analytic: np.ndarray
    numeric: np.ndarray
    tolerance: np.ndarray

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(self.analytic - self.numeric)

    @property
    def rel_err(self) -> np.ndarray:
        return self.abs_err / np.maximum(np.abs(self.numeric), FD_ATOL)

    @property
    def failures(self) -> int:
        return int(np.count_nonzero(self.abs_err > self.tolerance))

    def worst(self) -> tuple[int, int]:
        excess = self.abs_err / np.maximum(self.tolerance, np.finfo(float).tiny)
        r, c = np.unravel_index(int(np.argmax(excess)), excess.shape)
        return int(r), int(c)


@dataclass
class SuiteResult:
    records: list[CheckRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.failures == 0 for r in self.records)

    def worst_record(self) -> CheckRecord | None:
        bad = [r for r in self.records if r.failures]
        if not bad:
            return None
        return max(bad, key=lambda r: float((r.abs_err / np.maximum(r.tolerance, 1e-300)).max()))

    def write_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            worst = self.worst_record()
            if worst is not None:
                r, c = worst.worst()
                w.writerow(_row(worst, r, c))
            for rec in self.records:
                for r in range(rec.analytic.shape[0]):
                    for c in range(rec.analytic.shape[1]):
                        w.writerow(_row(rec, r, c))


def _row(rec: CheckRecord, r: int, c: int):
    return (
        rec.target,
        r,
        c,
        format_real(rec.analytic[r, c]),
        format_real(rec.numeric[r, c]),
        format_real(rec.abs_err[r, c]),
        format_real(rec.rel_err[r, c]),
    )


def fd_check(batch: EmbeddingBatch, tau: float, label: str = "", flip_sign: bool = False) -> list[CheckRecord]:
    g = loss_with_gradients(batch, tau)
    fq, fk = finite_difference_grads(batch.q, batch.k, tau)
    gq = -g.grad_q if flip_sign else g.grad_q
    return [
        CheckRecord(f"grad_q{label}", gq, fq, np.maximum(FD_RTOL * np.abs(fq), FD_ATOL)),
        CheckRecord(f"grad_k{label}", g.grad_k, fk, np.maximum(FD_RTOL * np.abs(fk), FD_ATOL)),
    ]


def mc_check(batch: EmbeddingBatch, tau: float, delta: float, samples: int, rng: RngStream) -> list[CheckRecord]:
    """Key-side noise: ``E[grad_q]`` vs the closed form, ``E[grad_k]`` vs the noiseless gradient."""
    mc = mc_noisy_grad(batch, tau, delta, "key", samples, rng)
    closed_q = expected_noisy_grad_q(batch, tau, delta)
    clean_k = loss_with_gradients(batch, tau).grad_k
    tol_q = np.maximum(3.0 * mc.stderr_q, 10.0 * delta**3)
    tol_k = 3.0 * mc.stderr_k
    return [
        CheckRecord("mc_grad_q", closed_q, mc.grad_q, tol_q),
        CheckRecord("mc_grad_k", clean_k, mc.grad_k, tol_k),
    ]


def random_batch(n: int, d: int, rng: RngStream) -> EmbeddingBatch:
    gen = rng.generator()
    return EmbeddingBatch.from_raw(gen.standard_normal((n, d)), gen.standard_normal((n, d)))


def run_suite(
    n: int = 8,
    d: int = 16,
    taus=(1.0, 0.02),
    configs: int = 10,
    seed: int = 42,
    delta: float = 0.05,
    samples: int = 100_000,
    mode: str = "all",
    flip_sign: bool = False,
) -> SuiteResult:
    """Analytic-vs-FD and MC-vs-closed-form checks with fixed seeds."""
    root = RngStream(seed)
    result = SuiteResult()
    if mode in ("all", "fd"):
        for i in range(configs):
            tau = taus[i % len(taus)]
            batch = random_batch(n, d, root.derive(1, i))
            result.records.extend(fd_check(batch, tau, label=f"[{i}]", flip_sign=flip_sign))
    if mode in ("all", "mc"):
        batch = random_batch(n, d, root.derive(2))
        result.records.extend(mc_check(batch, taus[0], delta, samples, root.derive(3)))
    return result

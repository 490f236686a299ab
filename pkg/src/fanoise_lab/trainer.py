"""Toy contrastive trainer with configurable FANoise injection.

A shared (siamese) encoder maps both views; noise is injected on raw inputs
(``input_layer``) or encoder outputs (``output_layer``), treated as a constant
during backpropagation. Updates use the batch-mean InfoNCE loss. Evaluation
never injects noise.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .contrastive import EmbeddingBatch, alignment_uniformity, loss_with_gradients
from .errors import FanoiseLabError, InvalidParameterError, TrainingDivergedError
from .matrix import RngStream, format_real, l2_normalize_rows
from .noise import NoiseConfig, Position, Scaling, inject_pair
from .synth import PairedDataset

log = logging.getLogger(__name__)

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    encoder: str = "linear"
    hidden_dim: int = 64
    embed_dim: int = 16
    steps: int = 500
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.0
    tau: float = 0.02
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    eval_every: int = 50
    rng: RngStream = field(default_factory=lambda: RngStream(42))

    def __post_init__(self):
        if self.encoder not in ("linear", "mlp"):
            raise InvalidParameterError(f"encoder must be 'linear' or 'mlp', got {self.encoder!r}")
        if self.steps < 1:
            raise InvalidParameterError("steps must be >= 1")
        if self.batch_size < 2:
            raise InvalidParameterError("batch_size must be >= 2")
        if not self.tau > 0:
            raise InvalidParameterError("tau must be > 0")
        if self.eval_every < 1:
            raise InvalidParameterError("eval_every must be >= 1")
        if not 0 <= self.momentum < 1:
            raise InvalidParameterError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class TrainLogRow:
    step: int
    loss: float
    alignment: float
    uniformity: float
    eval_p_at_1: float | None = None


LOG_COLUMNS = ("step", "loss", "alignment", "uniformity", "p_at_1")


# -- encoder ----------------------------------------------------------------


def init_params(cfg: TrainConfig, in_dim: int) -> Params:
    gen = cfg.rng.derive(1).generator()
    if cfg.encoder == "linear":
        return {"w": gen.standard_normal((cfg.embed_dim, in_dim)) / math.sqrt(in_dim)}
    return {
        "w1": gen.standard_normal((cfg.hidden_dim, in_dim)) / math.sqrt(in_dim),
        "b1": np.zeros(cfg.hidden_dim),
        "w2": gen.standard_normal((cfg.embed_dim, cfg.hidden_dim)) / math.sqrt(cfg.hidden_dim),
    }


def encode(params: Params, x: np.ndarray):
    """Return encoder outputs and the cache needed by :func:`encode_backward`."""
    if "w" in params:
        return x @ params["w"].T, (x,)
    a = np.tanh(x @ params["w1"].T + params["b1"])
    return a @ params["w2"].T, (x, a)


def encode_backward(params: Params, cache, dh: np.ndarray) -> Params:
    if "w" in params:
        (x,) = cache
        return {"w": dh.T @ x}
    x, a = cache
    da = dh @ params["w2"] * (1.0 - a**2)
    return {"w1": da.T @ x, "b1": da.sum(axis=0), "w2": dh.T @ a}


def _normalize_backward(h: np.ndarray, unit: np.ndarray, dunit: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(h, axis=1, keepdims=True)
    return (dunit - unit * np.einsum("ij,ij->i", dunit, unit)[:, None]) / norms


def batch_loss_and_grads(params: Params, xb: np.ndarray, yb: np.ndarray, cfg: TrainConfig, noise_rng=None):
    """Mean InfoNCE loss on one batch, parameter gradients, and the clean unit embeddings.

    ``noise_rng`` switches injection on (``None`` disables it).
    """
    active = noise_rng is not None and cfg.noise.active
    ncfg = cfg.noise.with_rng(noise_rng) if active else None
    if active and cfg.noise.position is Position.INPUT_LAYER:
        xb, yb, _ = inject_pair(xb, yb, ncfg)
    hq, cq = encode(params, xb)
    hk, ck = encode(params, yb)
    clean = (hq, hk)
    if active and cfg.noise.position is Position.OUTPUT_LAYER:
        hq, hk, _ = inject_pair(hq, hk, ncfg)
    q = l2_normalize_rows(hq)
    k = l2_normalize_rows(hk)
    lg = loss_with_gradients(EmbeddingBatch(q, k, normalized=True), cfg.tau)
    n = q.shape[0]
    dhq = _normalize_backward(hq, q, lg.grad_q / n)
    dhk = _normalize_backward(hk, k, lg.grad_k / n)
    gq = encode_backward(params, cq, dhq)
    gk = encode_backward(params, ck, dhk)
    grads = {name: gq[name] + gk[name] for name in params}
    return lg.loss / n, grads, clean


# -- evaluation -------------------------------------------------------------


def evaluate_p_at_1(params: Params | None, data: PairedDataset) -> float:
    """Fraction of eval queries whose positive strictly beats every distractor.

    ``params=None`` is the identity encoder. Ties count as failures.
    """
    def enc(x):
        h = x if params is None else encode(params, x)[0]
        return l2_normalize_rows(h)

    q = enc(data.eval_query)
    pos = enc(data.eval_positive)
    nq, nk, d = data.eval_distractors.shape
    dis = enc(data.eval_distractors.reshape(nq * nk, d)).reshape(nq, nk, -1)
    s_pos = np.einsum("ij,ij->i", q, pos)
    s_dis = np.einsum("ij,ikj->ik", q, dis)
    return float(np.mean(s_pos > s_dis.max(axis=1)))


def eval_geometry(params: Params, data: PairedDataset) -> tuple[float, float]:
    q = l2_normalize_rows(encode(params, data.eval_query)[0])
    k = l2_normalize_rows(encode(params, data.eval_positive)[0])
    return alignment_uniformity(EmbeddingBatch(q, k, normalized=True))


# -- training ---------------------------------------------------------------


def train(data: PairedDataset, cfg: TrainConfig) -> tuple[Params, list[TrainLogRow]]:
    n_train = data.train_x.shape[0]
    if n_train < cfg.batch_size:
        raise InvalidParameterError(f"dataset has {n_train} pairs, fewer than batch_size={cfg.batch_size}")
    params = init_params(cfg, data.feature_dim)
    velocity = {name: np.zeros_like(p) for name, p in params.items()}
    per_epoch = n_train // cfg.batch_size
    order = None
    rows: list[TrainLogRow] = []
    for step in range(cfg.steps):
        epoch, slot = divmod(step, per_epoch)
        if slot == 0:
            order = cfg.rng.derive(2, epoch).generator().permutation(n_train)
        idx = order[slot * cfg.batch_size : (slot + 1) * cfg.batch_size]
        noise_rng = cfg.noise.rng.derive(step) if cfg.noise.active else None
        loss, grads, (hq, hk) = batch_loss_and_grads(params, data.train_x[idx], data.train_y[idx], cfg, noise_rng)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDivergedError(step, loss)
        align, unif = alignment_uniformity(EmbeddingBatch.from_raw(hq, hk))
        p1 = None
        if step % cfg.eval_every == 0 or step == cfg.steps - 1:
            p1 = evaluate_p_at_1(params, data)
        rows.append(TrainLogRow(step, loss, align, unif, p1))
        with np.errstate(over="ignore", invalid="ignore"):
            for name in params:
                velocity[name] = cfg.momentum * velocity[name] - cfg.learning_rate * grads[name]
                params[name] = params[name] + velocity[name]
        if not all(np.all(np.isfinite(p)) for p in params.values()):
            raise TrainingDivergedError(step, loss)
    return params, rows


def final_p_at_1(params: Params, data: PairedDataset) -> float:
    return evaluate_p_at_1(params, data)


def write_train_log(path, rows: list[TrainLogRow]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            p1 = "" if r.eval_p_at_1 is None else format_real(r.eval_p_at_1)
            w.writerow((r.step, format_real(r.loss), format_real(r.alignment), format_real(r.uniformity), p1))


# -- sweeps -----------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    scaling: str
    seed: int
    final_p_at_1: float
    final_alignment: float
    final_uniformity: float
    error: str = ""


SWEEP_COLUMNS = ("alpha", "scaling", "seed", "final_p_at_1", "final_alignment", "final_uniformity")


def cell_config(base: TrainConfig, alpha: float, scaling: str, seed: int) -> TrainConfig:
    noise = replace(base.noise, alpha=alpha, scaling=Scaling(scaling), rng=RngStream(seed, 1))
    return replace(base, noise=noise, rng=RngStream(seed))


def sweep(data: PairedDataset, base_cfg: TrainConfig, alphas, scalings, seeds) -> list[SweepRow]:
    """Train and evaluate every ``(alpha, scaling, seed)`` cell in grid order.

    A failing cell is recorded with NaN metrics and the sweep continues.
    """
    if not alphas or not scalings or not seeds:
        raise InvalidParameterError("sweep grids must be nonempty")
    rows = []
    for alpha in alphas:
        for scaling in scalings:
            for seed in seeds:
                cfg = cell_config(base_cfg, alpha, scaling, seed)
                try:
                    params, _ = train(data, cfg)
                    p1 = evaluate_p_at_1(params, data)
                    align, unif = eval_geometry(params, data)
                    rows.append(SweepRow(alpha, Scaling(scaling).value, seed, p1, align, unif))
                except FanoiseLabError as exc:
                    log.warning("sweep cell alpha=%s scaling=%s seed=%s failed: %s", alpha, scaling, seed, exc)
                    nan = float("nan")
                    rows.append(SweepRow(alpha, Scaling(scaling).value, seed, nan, nan, nan, str(exc)))
    return rows


def write_sweep(path, rows: list[SweepRow]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow(
                (
                    format_real(r.alpha),
                    r.scaling,
                    r.seed,
                    format_real(r.final_p_at_1),
                    format_real(r.final_alignment),
                    format_real(r.final_uniformity),
                )
            )

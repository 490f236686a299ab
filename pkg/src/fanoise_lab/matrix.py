"""Dense linear-algebra substrate: seeded Gaussian sampling, thin SVD, CSV I/O.

Matrices are plain 2-D ``float64`` numpy arrays. Random draws are described by
an immutable :class:`RngStream`; every call that consumes one builds a fresh
generator from it, so the same stream always yields the same numbers.

Generator: numpy ``Philox`` (counter-based, 4x64) keyed through
``SeedSequence((seed, stream_id))``; normals come from numpy's ziggurat
sampler. Both are platform independent for a fixed numpy version.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateRowError,
    InvalidInputError,
    InvalidParameterError,
    MatrixParseError,
    NumericalFailureError,
)

DEFAULT_SVD_TOL = 1e-12
_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Reproducible description of a random sample sequence."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence((self.seed, self.stream_id))
        return np.random.Generator(np.random.Philox(ss))

    def derive(self, *labels: int) -> "RngStream":
        """Child stream; distinct label paths give independent streams."""
        sid = self.stream_id
        for label in labels:
            sid = _splitmix64(sid ^ _splitmix64(int(label) & _MASK64))
        return RngStream(self.seed, sid)


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``x ~= u @ diag(s) @ v.T`` truncated to rank ``r``."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    truncation_tol: float
    all_s: np.ndarray | None = None  # untruncated spectrum, length min(m, n)

    @property
    def rank(self) -> int:
        return int(self.s.shape[0])

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``x`` to a finite 2-D float64 array."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def thin_svd(x, truncation_tol: float = DEFAULT_SVD_TOL) -> SvdFactors:
    """Thin SVD keeping singular values strictly above ``truncation_tol * s[0]``.

    Backed by LAPACK (``gesdd``, falling back to ``gesvd``). Each column of
    ``v`` is sign-fixed so its largest-magnitude entry is positive; the
    matching column of ``u`` is flipped with it.
    """
    a = as_matrix(x)
    if not 0.0 <= truncation_tol < 1.0:
        raise InvalidParameterError(f"truncation_tol must lie in [0, 1), got {truncation_tol}")
    m, n = a.shape
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            import scipy.linalg

            u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailureError(f"SVD did not converge for {m}x{n} matrix") from exc

    if s.size == 0 or s[0] == 0.0:
        r = 0
    else:
        r = int(np.count_nonzero(s > truncation_tol * s[0]))
    all_s = s.copy()
    u = u[:, :r].copy()
    s = s[:r].copy()
    v = vt[:r].T.copy()
    if r:
        idx = np.argmax(np.abs(v), axis=0)
        signs = np.sign(v[idx, np.arange(r)])
        signs[signs == 0] = 1.0
        u *= signs
        v *= signs
    return SvdFactors(u=u, s=s, v=v, truncation_tol=truncation_tol, all_s=all_s)


def singular_values(x) -> np.ndarray:
    """All ``min(m, n)`` singular values, descending (no truncation)."""
    a = as_matrix(x)
    try:
        return np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD did not converge for {a.shape[0]}x{a.shape[1]} matrix") from exc


def gaussian_matrix(m: int, n: int, sigma: float, rng: RngStream) -> np.ndarray:
    """``m x n`` matrix of i.i.d. N(0, sigma^2) draws."""
    if sigma < 0 or not math.isfinite(sigma):
        raise InvalidParameterError(f"sigma must be finite and >= 0, got {sigma}")
    z = rng.generator().standard_normal((m, n))
    return sigma * z


def l2_normalize_rows(x, min_norm: float = 1e-12) -> np.ndarray:
    a = as_matrix(x)
    norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    bad = np.flatnonzero(norms < min_norm)
    if bad.size:
        raise DegenerateRowError(int(bad[0]), float(norms[bad[0]]))
    return a / norms[:, None]


# -- CSV matrix files ------------------------------------------------------

_HEADER_RE = re.compile(r"^#\s*rows\s*=\s*(\d+)\s+cols\s*=\s*(\d+)\s*$")


def format_real(v: float) -> str:
    return repr(float(v))


def read_matrix_csv(path) -> np.ndarray:
    """Read the plain-CSV matrix format; the ``# rows=m cols=n`` header is optional."""
    text = Path(path).read_text()
    rows: list[list[float]] = []
    declared = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            match = _HEADER_RE.match(line)
            if match and not rows and declared is None:
                declared = (int(match.group(1)), int(match.group(2)))
            continue
        try:
            values = [float(tok) for tok in line.split(",")]
        except ValueError:
            raise MatrixParseError(f"cannot parse reals from {raw!r}", lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise MatrixParseError("non-finite entry", lineno)
        if rows and len(values) != len(rows[0]):
            raise MatrixParseError(f"expected {len(rows[0])} columns, found {len(values)}", lineno)
        rows.append(values)
    if not rows:
        raise MatrixParseError("no data rows", max(1, len(text.splitlines())))
    a = np.array(rows, dtype=np.float64)
    if declared is not None and declared != a.shape:
        raise MatrixParseError(f"header declares {declared[0]}x{declared[1]}, data is {a.shape[0]}x{a.shape[1]}", 1)
    return a


def write_matrix_csv(path, x, header: bool = True) -> None:
    a = as_matrix(x)
    lines = [f"# rows={a.shape[0]} cols={a.shape[1]}"] if header else []
    lines.extend(",".join(format_real(v) for v in row) for row in a)
    Path(path).write_text("\n".join(lines) + "\n")

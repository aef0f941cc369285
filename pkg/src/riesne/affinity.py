"""High-dimensional affinities from the Riemannian Brownian-motion heat kernel.

The heat kernel is approximated by

    BM(x | lam, t) = (2 pi t)^(-D/2) * H0 * exp(-dist(x, lam)^2 / (2 t)),

with ``H0`` the ratio of Riemannian volume densities. Each row's diffusion time
``t_i`` is found by a doubling/halving-then-bisection search until the row
entropy (in bits) hits ``log2(perplexity)``; the joint distribution is
``p_ij = (p_{j|i} + p_{i|j}) / (2n)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dataset import DatasetTable
from .errors import DataError, InvalidArgumentError
from .geometry import log_volume_densities
from .neighbors import vp_build

BINARY_SEARCH_STEPS = 100
PERPLEXITY_TOLERANCE = 1e-5
P_FLOOR = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


class AffinityKind(enum.Enum):
    JOINT_P = "P"
    JOINT_Q = "Q"


@dataclass(frozen=True)
class BrownianParams:
    t: float
    dim: int

    def __post_init__(self):
        if not self.t > 0:
            raise InvalidArgumentError(f"diffusion time must be positive, got {self.t}")
        if self.dim < 1:
            raise InvalidArgumentError(f"dimension must be positive, got {self.dim}")


@dataclass
class CalibratedRow:
    row_index: int
    probs: np.ndarray
    t: float
    achieved_perplexity: float
    converged: bool
    n_steps: int


@dataclass
class RowCalibration:
    """Vectorised result of calibrating many rows at once."""

    probs: np.ndarray
    t: np.ndarray
    entropy: np.ndarray
    converged: np.ndarray
    n_steps: np.ndarray

    @property
    def perplexity(self) -> np.ndarray:
        return 2.0 ** self.entropy


class AffinityMatrix:
    """Symmetric joint distribution over point pairs, dense or scipy-sparse (CSR)."""

    def __init__(self, matrix, kind: AffinityKind = AffinityKind.JOINT_P,
                 calibration: RowCalibration | None = None):
        if sp.issparse(matrix):
            matrix = sp.csr_matrix(matrix)
            matrix.sort_indices()
        else:
            matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidArgumentError(f"affinity matrix must be square, got {matrix.shape}")
        self.matrix = matrix
        self.kind = AffinityKind(kind)
        self.calibration = calibration

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else self.matrix.copy()

    def total(self) -> float:
        return float(self.matrix.sum())

    def support(self):
        """``(rows, cols, values)`` of the stored non-zero entries, floored at ``P_FLOOR``."""
        if self.is_sparse:
            coo = self.matrix.tocoo()
            rows, cols, vals = coo.row, coo.col, coo.data
        else:
            rows, cols = np.nonzero(self.matrix)
            vals = self.matrix[rows, cols]
        keep = vals > 0
        return rows[keep].astype(np.int64), cols[keep].astype(np.int64), np.maximum(vals[keep], P_FLOOR)

    def __repr__(self):
        storage = "sparse" if self.is_sparse else "dense"
        return f"AffinityMatrix(n={self.n}, kind={self.kind.value}, {storage})"


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

def log_bm_similarity(distance, log_h0, t, dim):
    """Log of the Brownian-motion heat-kernel approximation (vectorised)."""
    distance = np.asarray(distance, dtype=np.float64)
    return -0.5 * dim * (_LOG_2PI + np.log(t)) + log_h0 - distance**2 / (2.0 * t)


def bm_similarity(distance: float, h0_ratio: float, params: BrownianParams) -> float:
    """``(2 pi t)^(-D/2) * h0_ratio * exp(-distance^2 / (2t))``, evaluated in log space.

    Returns 0.0 when the value underflows.
    """
    if not h0_ratio > 0:
        raise InvalidArgumentError(f"h0 ratio must be positive, got {h0_ratio}")
    return float(np.exp(log_bm_similarity(distance, math.log(h0_ratio), params.t, params.dim)))


VOLUME_CHARTS = ("entries", "homogeneous")


def _log_densities(data: DatasetTable, volume_chart: str) -> np.ndarray:
    if volume_chart == "entries":
        return log_volume_densities(data.manifold, data.points)
    if volume_chart == "homogeneous":
        # every supported manifold is homogeneous under its isometry group
        return np.zeros(data.n)
    raise InvalidArgumentError(f"volume_chart must be one of {VOLUME_CHARTS}, got {volume_chart!r}")


def log_h0_matrix(data: DatasetTable, volume_chart: str = "entries") -> np.ndarray:
    lam = _log_densities(data, volume_chart)
    return lam[:, None] - lam[None, :]


def h0_matrix(data: DatasetTable, volume_chart: str = "entries") -> np.ndarray:
    """``H0[i, j] = sqrt(det G_{x_i} / det G_{x_j})``.

    ``volume_chart="entries"`` measures SPD volumes in the matrix-entries
    chart (``det G_P ~ det(P)^-(m+1)``); Euclidean and sphere data give all
    ones. ``"homogeneous"`` uses the isometry-invariant Riemannian volume, for
    which the ratio is 1 on all three manifolds.
    """
    return np.exp(log_h0_matrix(data, volume_chart))


# ---------------------------------------------------------------------------
# perplexity calibration
# ---------------------------------------------------------------------------

def _row_distribution(d2, log_h0, valid, t, dim):
    logw = -0.5 * dim * (_LOG_2PI + np.log(t))[:, None] + log_h0 - d2 / (2.0 * t[:, None])
    logw = np.where(valid, logw, -np.inf)
    top = logw.max(axis=1, keepdims=True)
    logp = logw - top
    logp -= np.log(np.exp(logp).sum(axis=1, keepdims=True))
    p = np.exp(logp)
    contrib = np.multiply(p, logp, out=np.zeros_like(p), where=p > 0)
    return p, -contrib.sum(axis=1) / math.log(2.0)


def calibrate_rows(dists, log_h0, dim: int, perplexity: float, valid=None) -> RowCalibration:
    """Fit a diffusion time per row so that each row's perplexity matches the target.

    ``dists`` and ``log_h0`` are ``(r, k)`` arrays of candidate-neighbour
    distances and log volume ratios; ``valid`` masks entries that take part
    (the diagonal must be masked out in dense mode). Each row runs its own
    search: start at t=1, double or halve until the target entropy is
    bracketed, then bisect; at most 100 evaluations, stopping when the entropy
    is within 1e-5 bits of ``log2(perplexity)``. Rows that run out of steps keep
    their last evaluation and are flagged unconverged.
    """
    if not perplexity >= 1:
        raise InvalidArgumentError(f"perplexity must be >= 1, got {perplexity}")
    dists = np.atleast_2d(np.asarray(dists, dtype=np.float64))
    log_h0 = np.broadcast_to(np.asarray(log_h0, dtype=np.float64), dists.shape)
    if valid is None:
        valid = np.ones(dists.shape, dtype=bool)
    valid = valid & np.isfinite(dists) & np.isfinite(log_h0)
    empty = np.flatnonzero(~valid.any(axis=1))
    if len(empty):
        raise DataError(f"row {int(empty[0])} has no finite neighbour distances")
    r = len(dists)
    d2 = np.where(valid, dists, 0.0) ** 2
    lh = np.where(valid, log_h0, 0.0)
    target = math.log2(perplexity)

    t = np.ones(r)
    t_min = np.full(r, -np.inf)
    t_max = np.full(r, np.inf)
    probs = np.zeros(dists.shape)
    entropy = np.zeros(r)
    t_used = np.ones(r)
    steps = np.zeros(r, dtype=np.int64)
    done = np.zeros(r, dtype=bool)
    for _ in range(BINARY_SEARCH_STEPS):
        act = np.flatnonzero(~done)
        if len(act) == 0:
            break
        p, h = _row_distribution(d2[act], lh[act], valid[act], t[act], dim)
        probs[act] = p
        entropy[act] = h
        t_used[act] = t[act]
        steps[act] += 1
        diff = h - target
        hit = np.abs(diff) <= PERPLEXITY_TOLERANCE
        done[act[hit]] = True
        low = act[~hit & (diff < 0)]  # too few effective neighbours: lengthen t
        t_min[low] = t[low]
        t[low] = np.where(np.isinf(t_max[low]), 2.0 * t[low], 0.5 * (t[low] + t_max[low]))
        high = act[~hit & (diff > 0)]
        t_max[high] = t[high]
        t[high] = np.where(np.isinf(t_min[high]), 0.5 * t[high], 0.5 * (t[high] + t_min[high]))
    return RowCalibration(probs, t_used, entropy, done, steps)


def calibrate_row(dists_row, h0_row, dim: int, target_perplexity: float,
                  row_index: int | None = None) -> CalibratedRow:
    """Calibrate a single row. When ``row_index`` is given, that entry is the point itself and gets probability 0."""
    dists_row = np.asarray(dists_row, dtype=np.float64)
    h0_row = np.broadcast_to(np.asarray(h0_row, dtype=np.float64), dists_row.shape)
    if np.any(h0_row <= 0):
        raise InvalidArgumentError("h0 ratios must be positive")
    valid = np.ones(dists_row.shape, dtype=bool)
    if row_index is not None:
        if not 0 <= row_index < len(dists_row):
            raise InvalidArgumentError(f"row_index {row_index} is outside a row of length {len(dists_row)}")
        valid[row_index] = False
    try:
        cal = calibrate_rows(dists_row[None], np.log(h0_row)[None], dim, target_perplexity, valid[None])
    except DataError:
        raise DataError(f"row {row_index if row_index is not None else 0} has no finite neighbour distances") from None
    return CalibratedRow(
        row_index=-1 if row_index is None else int(row_index),
        probs=cal.probs[0],
        t=float(cal.t[0]),
        achieved_perplexity=float(cal.perplexity[0]),
        converged=bool(cal.converged[0]),
        n_steps=int(cal.n_steps[0]),
    )


def _warn_unconverged(cal: RowCalibration):
    bad = int((~cal.converged).sum())
    if bad:
        warnings.warn(
            f"{bad} of {len(cal.converged)} rows did not reach the target perplexity "
            f"within {BINARY_SEARCH_STEPS} steps",
            RuntimeWarning,
            stacklevel=3,
        )


def symmetrize(conditional):
    """``p_ij = (p_{j|i} + p_{i|j}) / (2n)`` for a dense or sparse conditional matrix."""
    n = conditional.shape[0]
    joint = (conditional + conditional.T) / (2.0 * n)
    return joint


def build_p(data: DatasetTable, perplexity: float, mode: str = "dense", seed: int = 0,
            volume_chart: str = "entries") -> AffinityMatrix:
    """Joint high-dimensional affinities.

    ``mode="dense"`` calibrates every row over all other points.
    ``mode="sparse"`` restricts row ``i`` to its ``floor(3 * perplexity)``
    nearest neighbours (vantage-point tree), normalises over them, and stores
    the symmetrised result as CSR. ``volume_chart`` selects the H0 factor,
    see :func:`h0_matrix`.
    """
    n = data.n
    if n < 2:
        raise InvalidArgumentError("build_p needs at least two points")
    dim = data.manifold.intrinsic_dim
    lam = _log_densities(data, volume_chart)
    if mode == "dense":
        dists = data.metric().pairwise()
        log_h0 = lam[:, None] - lam[None, :]
        valid = ~np.eye(n, dtype=bool)
        cal = calibrate_rows(dists, log_h0, dim, perplexity, valid)
        _warn_unconverged(cal)
        return AffinityMatrix(symmetrize(cal.probs), AffinityKind.JOINT_P, cal)
    if mode == "sparse":
        tau = int(math.floor(3 * perplexity))
        if not 1 <= tau <= n - 1:
            raise InvalidArgumentError(
                f"sparse mode needs floor(3 * perplexity) = {tau} neighbours, but n - 1 = {n - 1}"
            )
        knn = vp_build(data, seed).knn(tau)
        log_h0 = lam[:, None] - lam[knn.indices]
        cal = calibrate_rows(knn.distances, log_h0, dim, perplexity)
        _warn_unconverged(cal)
        rows = np.repeat(np.arange(n), tau)
        cond = sp.csr_matrix((cal.probs.ravel(), (rows, knn.indices.ravel())), shape=(n, n))
        return AffinityMatrix(symmetrize(cond), AffinityKind.JOINT_P, cal)
    raise InvalidArgumentError(f"mode must be 'dense' or 'sparse', got {mode!r}")

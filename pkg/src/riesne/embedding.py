"""Low-dimensional similarity models, KL cost and gradients, and the optimizer.

The low-dimensional conditionals are row-normalised and then symmetrised,

    q_{j|i} = s(y_i, y_j) / sum_{k != i} s(y_i, y_k),
    q_ij    = (q_{j|i} + q_{i|j}) / (2n),

which is not the jointly normalised Q of classic t-SNE, so the textbook t-SNE
gradient does not apply. Writing ``L_ij = log s(y_i, y_j)`` (symmetric in i, j),
``A_ij = p_ij / q_ij`` and ``B_i = sum_k A_ik q_{k|i}``, the gradient is

    dC/dy_i = -sum_j K_ij dL_ij/dy_i,
    K_ij    = (q_{j|i} (A_ij - B_i) + q_{i|j} (A_ij - B_j)) / n.

Three families are supported: student-t on R^d, von Mises-Fisher (kappa = 1)
on S^d, and the Brownian heat kernel with t = 1 on either.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _backend
from .affinity import P_FLOOR, AffinityKind, AffinityMatrix
from .errors import InvalidArgumentError, NumericalError
from .geometry import Family, ManifoldDescriptor

# target number of matrix entries held per block by the exact engine
_BLOCK_ENTRIES = 2_000_000


class SimilarityFamily(enum.Enum):
    STUDENT_T = "student-t"
    VMF = "vmf"
    BROWNIAN = "brownian"


@dataclass(frozen=True)
class TargetSpace:
    """Low-dimensional manifold plus the similarity family used on it."""

    manifold: ManifoldDescriptor
    family: SimilarityFamily

    def __post_init__(self):
        object.__setattr__(self, "family", SimilarityFamily(self.family))
        kind = self.manifold.family
        if kind is Family.SPD:
            raise InvalidArgumentError("embedding targets must be Euclidean or spherical")
        if self.family is SimilarityFamily.STUDENT_T and kind is not Family.EUCLIDEAN:
            raise InvalidArgumentError("the student-t family needs a Euclidean target")
        if self.family is SimilarityFamily.VMF and kind is not Family.SPHERE:
            raise InvalidArgumentError("the von Mises-Fisher family needs a sphere target")

    @classmethod
    def euclidean(cls, d: int, family="student-t") -> TargetSpace:
        return cls(ManifoldDescriptor.euclidean(d), family)

    @classmethod
    def sphere(cls, d: int, family="vmf") -> TargetSpace:
        """The sphere S^d, embedded in R^(d+1)."""
        return cls(ManifoldDescriptor.sphere(d + 1), family)

    @property
    def is_sphere(self) -> bool:
        return self.manifold.family is Family.SPHERE

    @property
    def dim(self) -> int:
        """Ambient coordinate count of an embedded point."""
        return self.manifold.ambient_dim


@dataclass
class EmbeddingState:
    points: np.ndarray
    velocity: np.ndarray
    iteration: int = 0
    exaggeration_active: bool = False
    kl_history: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient-descent settings. ``gradient`` is ``"auto"``, ``"exact"`` or ``"bh"``;
    ``sphere_update`` is ``"retraction"`` or ``"exp"``."""

    iters: int = 1000
    learning_rate: float = 200.0
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    exaggeration_factor: float = 12.0
    exaggeration_iters: int = 250
    bh_theta: float = 0.5
    seed: int = 0
    gradient: str = "auto"
    sphere_update: str = "retraction"

    def __post_init__(self):
        if self.iters < 0:
            raise InvalidArgumentError(f"iters must be >= 0, got {self.iters}")
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("momentum_early", "momentum_late"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InvalidArgumentError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if not self.exaggeration_factor > 0:
            raise InvalidArgumentError("exaggeration_factor must be positive")
        if not 0 <= self.exaggeration_iters <= self.iters:
            raise InvalidArgumentError(
                f"exaggeration_iters must lie in [0, iters={self.iters}], got {self.exaggeration_iters}"
            )
        if not self.bh_theta >= 0:
            raise InvalidArgumentError(f"bh_theta must be >= 0, got {self.bh_theta}")
        if self.gradient not in ("auto", "exact", "bh"):
            raise InvalidArgumentError(f"gradient must be auto, exact or bh, got {self.gradient!r}")
        if self.sphere_update not in ("retraction", "exp"):
            raise InvalidArgumentError(f"sphere_update must be retraction or exp, got {self.sphere_update!r}")


# ---------------------------------------------------------------------------
# similarities
# ---------------------------------------------------------------------------

def _sphere_angle(sq_minus, sq_plus):
    return 2.0 * np.arctan2(np.sqrt(sq_minus), np.sqrt(sq_plus))


def s_low(y_i, y_j, target: TargetSpace) -> float:
    """Unnormalised low-dimensional similarity between two embedded points."""
    y_i = np.asarray(y_i, dtype=np.float64)
    y_j = np.asarray(y_j, dtype=np.float64)
    if target.family is SimilarityFamily.STUDENT_T:
        return float(1.0 / (1.0 + np.sum((y_i - y_j) ** 2)))
    if target.family is SimilarityFamily.VMF:
        return float(np.exp(y_i @ y_j))
    d = target.manifold.intrinsic_dim
    if target.is_sphere:
        r = _sphere_angle(np.sum((y_i - y_j) ** 2), np.sum((y_i + y_j) ** 2))
    else:
        r = np.sqrt(np.sum((y_i - y_j) ** 2))
    return float((2.0 * math.pi) ** (-0.5 * d) * np.exp(-0.5 * r * r))


def _points(state) -> np.ndarray:
    pts = state.points if isinstance(state, EmbeddingState) else state
    return np.ascontiguousarray(pts, dtype=np.float64)


def _check_points(y, target):
    if y.ndim != 2 or y.shape[1] != target.dim:
        raise InvalidArgumentError(f"embedding of shape {y.shape} does not match {target.manifold}")
    if len(y) < 2:
        raise InvalidArgumentError("need at least two embedded points")


class _Block:
    """Log-similarities of rows ``lo:hi`` against every point, plus what the gradient needs."""

    def __init__(self, y, lo, hi, target):
        self.lo, self.hi = lo, hi
        n = len(y)
        yb = y[lo:hi]
        fam = target.family
        if fam is SimilarityFamily.VMF:
            self.dot = yb @ y.T
            logw = self.dot.copy()
        else:
            d2 = np.zeros((hi - lo, n))
            for k in range(y.shape[1]):
                d2 += (yb[:, k, None] - y[None, :, k]) ** 2
            if fam is SimilarityFamily.STUDENT_T:
                self.w = 1.0 / (1.0 + d2)
                logw = -np.log1p(d2)
            elif target.is_sphere:
                self.dot = yb @ y.T
                theta = _sphere_angle(d2, np.maximum(4.0 - d2, 0.0))
                s = np.sin(theta)
                # theta / sin(theta), the Log-map scale; -> 1 as theta -> 0
                self.ratio = np.where(theta < 1e-8, 1.0, theta / np.maximum(s, 1e-300))
                logw = -0.5 * theta**2
            else:
                logw = -0.5 * d2
        rows = np.arange(hi - lo)
        logw[rows, rows + lo] = -np.inf
        self.logw = logw

    def gradient(self, y, k, target):
        """``-sum_j K_ij dL_ij/dy_i`` for the rows of this block."""
        yb = y[self.lo:self.hi]
        fam = target.family
        if fam is SimilarityFamily.STUDENT_T:
            m = 2.0 * k * self.w
            return m.sum(axis=1)[:, None] * yb - m @ y
        if fam is SimilarityFamily.VMF:
            return -(k @ y)
        if target.is_sphere:
            m = k * self.ratio
            return (m * self.dot).sum(axis=1)[:, None] * yb - m @ y
        return k.sum(axis=1)[:, None] * yb - k @ y


def _p_rows(P: AffinityMatrix, lo, hi):
    rows = P.matrix[lo:hi]
    rows = rows.toarray() if P.is_sparse else np.array(rows)
    return np.where(rows > 0, np.maximum(rows, P_FLOOR), 0.0)


def _row_lse(logw):
    top = logw.max(axis=1)
    return top + np.log(np.exp(logw - top[:, None]).sum(axis=1))


def _exact_engine(P: AffinityMatrix, y, target, exaggeration=1.0, want_grad=True):
    n = len(y)
    if P.n != n:
        raise InvalidArgumentError(f"P has {P.n} rows but the embedding has {n} points")
    step = max(1, _BLOCK_ENTRIES // n)
    spans = [(lo, min(n, lo + step)) for lo in range(0, n, step)]
    single = len(spans) == 1
    lse = np.empty(n)
    first = None
    for lo, hi in spans:
        blk = _Block(y, lo, hi, target)
        lse[lo:hi] = _row_lse(blk.logw)
        if single:
            first = blk

    def pieces(lo, hi, blk=None):
        blk = blk or _Block(y, lo, hi, target)
        lqc = blk.logw - lse[lo:hi, None]  # log q_{j|i}
        # log q_{i|j}; log-similarities are symmetric, so with one block it is lqc transposed
        lqt = lqc.T if single else blk.logw - lse[None, :]
        qc, qt = np.exp(lqc), np.exp(lqt)
        q = (qc + qt) / (2.0 * n)
        p = _p_rows(P, lo, hi)
        sup = p > 0
        # q_{j|i} p / q without forming p / q, which overflows once q underflows
        share = expit(np.subtract(lqc, lqt, out=np.zeros_like(lqc), where=sup))
        pc = np.where(sup, 2.0 * n * p * share, 0.0)
        return blk, qc, qt, q, p, pc

    b_row = np.zeros(n)
    kl = 0.0
    cached = None
    for lo, hi in spans:
        blk, qc, qt, q, p, pc = pieces(lo, hi, first)
        b_row[lo:hi] = pc.sum(axis=1)
        sup = p > 0
        kl += float(np.sum(p[sup] * np.log(p[sup] / np.maximum(q[sup], P_FLOOR))))
        if single:
            cached = (blk, qc, qt, p)
    if not want_grad:
        return None, kl

    grad = np.empty_like(y)
    for lo, hi in spans:
        if single:
            blk, qc, qt, p = cached
        else:
            blk, qc, qt, _, p, _ = pieces(lo, hi)
        # q_{j|i} a + q_{i|j} a = 2 n p, with a = p / q
        k = (2.0 * n * p - qc * b_row[lo:hi, None] - qt * b_row[None, :]) * (exaggeration / n)
        grad[lo:hi] = blk.gradient(y, k, target)
    if target.is_sphere:
        grad -= np.sum(grad * y, axis=1, keepdims=True) * y
    return grad, kl


def build_q(state, target: TargetSpace) -> AffinityMatrix:
    """Dense joint low-dimensional distribution (row-normalised, then symmetrised)."""
    y = _points(state)
    _check_points(y, target)
    n = len(y)
    cond = np.empty((n, n))
    step = max(1, _BLOCK_ENTRIES // n)
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        logw = _Block(y, lo, hi, target).logw
        cond[lo:hi] = np.exp(logw - _row_lse(logw)[:, None])
    return AffinityMatrix((cond + cond.T) / (2.0 * n), AffinityKind.JOINT_Q)


def kl_cost(P: AffinityMatrix, Q: AffinityMatrix) -> float:
    """``sum p_ij log(p_ij / q_ij)`` over the support of P (entries floored at 1e-12)."""
    if P.n != Q.n:
        raise InvalidArgumentError(f"P and Q sizes differ: {P.n} vs {Q.n}")
    rows, cols, p = P.support()
    qm = Q.matrix
    q = np.asarray(qm[rows, cols]).ravel()
    return float(np.sum(p * np.log(p / np.maximum(q, P_FLOOR))))


def kl_divergence(P: AffinityMatrix, state, target: TargetSpace) -> float:
    """KL cost of an embedding without materialising Q."""
    y = _points(state)
    _check_points(y, target)
    return _exact_engine(P, y, target, want_grad=False)[1]


def kl_gradient_exact(P: AffinityMatrix, state, target: TargetSpace,
                      exaggeration: float = 1.0, return_cost: bool = False):
    """Exact gradient of the KL cost with respect to every embedded point.

    Parameters
    ----------
    P : AffinityMatrix
        Joint high-dimensional affinities, dense or sparse.
    state : EmbeddingState or ndarray of shape (n, dim)
    target : TargetSpace
    exaggeration : float
        Early-exaggeration factor: the gradient is taken with ``exaggeration * P``.
        The cost is linear in P, so this scales the gradient.
    return_cost : bool
        Also return the (unexaggerated) KL cost.

    Returns
    -------
    grad : ndarray of shape (n, dim)
        Sphere targets get the Riemannian gradient (projected onto each
        tangent space).
    """
    y = _points(state)
    _check_points(y, target)
    grad, kl = _exact_engine(P, y, target, exaggeration)
    return (grad, kl) if return_cost else grad


def kl_gradient_bh(P: AffinityMatrix, state, theta: float = 0.5, target: TargetSpace | None = None,
                   exaggeration: float = 1.0, return_cost: bool = False):
    """Barnes-Hut approximation of :func:`kl_gradient_exact` for student-t on R^2 or R^3.

    Both the per-row normalisers ``Z_i = sum_k w_ik`` and the repulsive sums
    are taken from a quad/oct-tree. A cell is summarised when
    ``diameter / D < theta``, where ``D`` is the distance from the query point
    to the cell's bounding box, and the summary keeps the second-moment term
    of the expansion about the cell centroid. Attractive terms visit only the
    stored entries of P. ``theta = 0`` disables summarisation and reproduces
    the exact gradient.
    """
    y = _points(state)
    n, d = y.shape
    if target is None:
        target = TargetSpace.euclidean(d)
    if target.family is not SimilarityFamily.STUDENT_T or d not in (2, 3):
        raise InvalidArgumentError("Barnes-Hut needs the student-t family on R^2 or R^3")
    _check_points(y, target)
    if P.n != n:
        raise InvalidArgumentError(f"P has {P.n} rows but the embedding has {n} points")
    if not theta >= 0:
        raise InvalidArgumentError(f"theta must be >= 0, got {theta}")
    tree = _backend.active().BHTree(y)
    z, f = tree.repulsion(float(theta))
    rows, cols, p = P.support()
    diff = y[rows] - y[cols]
    w = 1.0 / (1.0 + np.einsum("ij,ij->i", diff, diff))
    qc = w / z[rows]
    qt = w / z[cols]
    q = (qc + qt) / (2.0 * n)
    a = p / q
    beta = np.bincount(rows, a * qc, minlength=n) / z
    _, g = tree.repulsion(float(theta), beta)
    att = a * w * w * (1.0 / z[rows] + 1.0 / z[cols])
    pull = np.column_stack([np.bincount(rows, att * diff[:, k], minlength=n) for k in range(d)])
    grad = (2.0 * exaggeration / n) * (pull - beta[:, None] * f - g)
    if return_cost:
        return grad, float(np.sum(p * np.log(p / np.maximum(q, P_FLOOR))))
    return grad


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------

def init_embedding(n: int, target: TargetSpace, seed: int = 0) -> EmbeddingState:
    """Seeded start: N(0, 1e-4^2) coordinates on R^d, normalised Gaussians on S^d."""
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, target.dim))
    if target.is_sphere:
        y /= np.linalg.norm(y, axis=1, keepdims=True)
    else:
        y *= 1e-4
    return EmbeddingState(y, np.zeros_like(y))


def _use_bh(P, target, config):
    if config.gradient == "exact":
        return False
    ok = (target.family is SimilarityFamily.STUDENT_T and target.dim in (2, 3))
    if config.gradient == "bh":
        if not ok:
            raise InvalidArgumentError("Barnes-Hut needs the student-t family on R^2 or R^3")
        return True
    return ok and P.is_sparse and config.bh_theta > 0


def _tangent(y, v):
    return v - np.sum(v * y, axis=1, keepdims=True) * y


def _sphere_step(y, v, how):
    if how == "exp":
        theta = np.linalg.norm(v, axis=1, keepdims=True)
        safe = np.where(theta > 0, theta, 1.0)
        out = np.cos(theta) * y + np.where(theta > 0, np.sin(theta) / safe, 1.0) * v
    else:
        out = y + v
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def optimize(P: AffinityMatrix, target: TargetSpace, config: OptimizerConfig | None = None,
             init: EmbeddingState | None = None, callback=None) -> EmbeddingState:
    """Momentum gradient descent on the KL cost.

    The first ``exaggeration_iters`` steps use early exaggeration and
    ``momentum_early``; later steps use ``momentum_late``. Sphere targets take
    tangent steps followed by renormalisation (or the exponential map when
    ``sphere_update="exp"``), and the momentum buffer is re-projected onto the
    new tangent space. ``kl_history`` holds the unexaggerated cost before every
    step plus the final cost, so it has ``iters + 1`` entries.

    Raises
    ------
    NumericalError
        If a coordinate becomes non-finite; the message names the iteration.
    """
    config = config or OptimizerConfig()
    state = init if init is not None else init_embedding(P.n, target, config.seed)
    y = np.array(state.points, dtype=np.float64)
    v = np.array(state.velocity, dtype=np.float64)
    _check_points(y, target)
    if P.n != len(y):
        raise InvalidArgumentError(f"P has {P.n} rows but the embedding has {len(y)} points")
    bh = _use_bh(P, target, config)

    def grad_and_cost(pts, alpha):
        if bh:
            return kl_gradient_bh(P, pts, config.bh_theta, target, alpha, return_cost=True)
        return kl_gradient_exact(P, pts, target, alpha, return_cost=True)

    history = list(state.kl_history)
    for it in range(config.iters):
        early = it < config.exaggeration_iters
        alpha = config.exaggeration_factor if early else 1.0
        momentum = config.momentum_early if early else config.momentum_late
        g, kl = grad_and_cost(y, alpha)
        history.append(kl)
        v = momentum * v - config.learning_rate * g
        if target.is_sphere:
            v = _tangent(y, v)
            y = _sphere_step(y, v, config.sphere_update)
            v = _tangent(y, v)
        else:
            y = y + v
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(v))):
            raise NumericalError(f"non-finite embedding coordinates at iteration {it}")
        if callback is not None:
            callback(it, y, kl)
    if bh:
        final = kl_gradient_bh(P, y, config.bh_theta, target, return_cost=True)[1]
    else:
        final = kl_divergence(P, y, target)
    history.append(final)
    return EmbeddingState(
        points=y,
        velocity=v,
        iteration=state.iteration + config.iters,
        exaggeration_active=False if config.iters else state.exaggeration_active,
        kl_history=history,
    )

"""Closed-form Riemannian geometry for Euclidean space, the unit sphere and the SPD cone.

Points are plain numpy arrays: shape ``(D,)`` for Euclidean and sphere points
(sphere points are unit vectors in R^D), shape ``(m, m)`` for SPD matrices.
Tangent vectors use the same ambient representation as their base point. The
SPD cone carries the affine-invariant metric ``<U, V>_P = tr(P^-1 U P^-1 V)``.

Every function takes the :class:`ManifoldDescriptor` first.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import _backend
from .errors import DataError, DomainError, InvalidArgumentError, NumericalError

POINT_TOL = 1e-9
SPD_EPS = 1e-8
ANTIPODAL_TOL = 1e-12


class Family(enum.Enum):
    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"
    SPD = "spd"


_KERNEL_CODE = {Family.EUCLIDEAN: 0, Family.SPHERE: 1, Family.SPD: 2}


@dataclass(frozen=True)
class ManifoldDescriptor:
    """A manifold family plus its size.

    ``ambient_dim`` is the vector length for Euclidean and sphere points and
    the matrix side ``m`` for SPD points.
    """

    family: Family
    ambient_dim: int

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.ambient_dim) != self.ambient_dim or self.ambient_dim < 1:
            raise InvalidArgumentError(f"ambient_dim must be a positive integer, got {self.ambient_dim}")
        if self.family is Family.SPHERE and self.ambient_dim < 2:
            raise InvalidArgumentError("a sphere needs ambient_dim >= 2")
        object.__setattr__(self, "ambient_dim", int(self.ambient_dim))

    @classmethod
    def euclidean(cls, dim: int) -> ManifoldDescriptor:
        return cls(Family.EUCLIDEAN, dim)

    @classmethod
    def sphere(cls, ambient_dim: int) -> ManifoldDescriptor:
        """Unit sphere S^{ambient_dim - 1} inside R^{ambient_dim}."""
        return cls(Family.SPHERE, ambient_dim)

    @classmethod
    def spd(cls, m: int) -> ManifoldDescriptor:
        return cls(Family.SPD, m)

    @property
    def intrinsic_dim(self) -> int:
        if self.family is Family.EUCLIDEAN:
            return self.ambient_dim
        if self.family is Family.SPHERE:
            return self.ambient_dim - 1
        return self.ambient_dim * (self.ambient_dim + 1) // 2

    @property
    def point_shape(self) -> tuple[int, ...]:
        if self.family is Family.SPD:
            return (self.ambient_dim, self.ambient_dim)
        return (self.ambient_dim,)

    def __str__(self):
        if self.family is Family.SPHERE:
            return f"S^{self.ambient_dim - 1}"
        if self.family is Family.SPD:
            return f"SPD({self.ambient_dim})"
        return f"R^{self.ambient_dim}"


class IntrinsicMean(NamedTuple):
    point: np.ndarray
    converged: bool
    n_iter: int
    residual: float


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _sym_apply(s, fn):
    """Apply ``fn`` to the eigenvalues of (a stack of) symmetric matrices."""
    w, v = np.linalg.eigh(s)
    return _sym((v * fn(w)[..., None, :]) @ np.swapaxes(v, -1, -2))


def _spd_roots(p):
    w, v = np.linalg.eigh(p)
    if np.any(w <= 0):
        raise NumericalError("matrix is not positive definite")
    vt = np.swapaxes(v, -1, -2)
    root = _sym((v * np.sqrt(w)[..., None, :]) @ vt)
    inv_root = _sym((v * (1.0 / np.sqrt(w))[..., None, :]) @ vt)
    return root, inv_root


def _as_point(manifold, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != manifold.point_shape:
        if manifold.family is Family.SPD and x.shape == (manifold.ambient_dim**2,):
            return x.reshape(manifold.point_shape)
        raise InvalidArgumentError(
            f"expected a point of shape {manifold.point_shape} on {manifold}, got {x.shape}"
        )
    return x


def _as_points(manifold, points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == len(manifold.point_shape):
        pts = pts[None]
    if pts.shape[1:] != manifold.point_shape:
        raise InvalidArgumentError(
            f"expected points of shape (n, {', '.join(map(str, manifold.point_shape))}), got {pts.shape}"
        )
    return pts


def check_point(manifold: ManifoldDescriptor, x, tol: float = POINT_TOL) -> np.ndarray:
    """Return ``x`` as an array after verifying it lies on ``manifold``."""
    x = _as_point(manifold, x)
    if not np.all(np.isfinite(x)):
        raise DataError("point has non-finite coordinates")
    if manifold.family is Family.SPHERE:
        norm = np.linalg.norm(x)
        if abs(norm - 1.0) > tol:
            raise DataError(f"sphere point has norm {norm!r}, expected 1")
    elif manifold.family is Family.SPD:
        if np.max(np.abs(x - x.T)) > tol:
            raise DataError("SPD point is not symmetric")
        if np.linalg.eigvalsh(_sym(x))[0] <= 0.0:
            raise DataError("SPD point is not positive definite")
    return x


# ---------------------------------------------------------------------------
# distances, log/exp maps
# ---------------------------------------------------------------------------

def dist(manifold: ManifoldDescriptor, x, y) -> float:
    """Geodesic distance.

    Symmetric bit-for-bit: the sphere uses ``2 atan2(|x - y|, |x + y|)``
    (equal to ``arccos(x . y)`` but accurate for nearby points) and the SPD
    formula is evaluated with a canonical argument order.
    """
    x = _as_point(manifold, x)
    y = _as_point(manifold, y)
    if manifold.family is Family.EUCLIDEAN:
        return float(np.linalg.norm(x - y))
    if manifold.family is Family.SPHERE:
        return float(2.0 * np.arctan2(np.linalg.norm(x - y), np.linalg.norm(x + y)))
    if x.tobytes() > y.tobytes():
        x, y = y, x
    try:
        ev = scipy.linalg.eigh(_sym(y), _sym(x), eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"SPD eigen-solve failed: {exc}") from exc
    if np.any(ev <= 0):
        raise NumericalError("SPD eigen-solve produced non-positive eigenvalues")
    return float(np.sqrt(np.sum(np.log(ev) ** 2)))


def norm(manifold: ManifoldDescriptor, x, v) -> float:
    """Length of tangent vector ``v`` at ``x`` under the Riemannian metric."""
    v = np.asarray(v, dtype=np.float64)
    if manifold.family is Family.SPD:
        _, inv_root = _spd_roots(_as_point(manifold, x))
        return float(np.linalg.norm(inv_root @ v.reshape(manifold.point_shape) @ inv_root))
    return float(np.linalg.norm(v))


def project_tangent(manifold: ManifoldDescriptor, x, v) -> np.ndarray:
    """Orthogonal projection of an ambient vector onto the tangent space at ``x``."""
    v = np.asarray(v, dtype=np.float64)
    if manifold.family is Family.SPHERE:
        x = np.asarray(x, dtype=np.float64)
        return v - np.sum(v * x, axis=-1, keepdims=True) * x
    if manifold.family is Family.SPD:
        return _sym(v)
    return v


def log_map(manifold: ManifoldDescriptor, x, y) -> np.ndarray:
    """Riemannian logarithm: initial velocity of the unit-time geodesic from x to y."""
    x = _as_point(manifold, x)
    y = _as_point(manifold, y)
    if manifold.family is Family.EUCLIDEAN:
        return y - x
    if manifold.family is Family.SPHERE:
        return _sphere_log(x, y[None])[0]
    root, inv_root = _spd_roots(x)
    return _sym(root @ _sym_apply(_sym(inv_root @ y @ inv_root), np.log) @ root)


def _sphere_log(x, ys):
    if np.any(np.linalg.norm(ys + x, axis=1) <= ANTIPODAL_TOL):
        raise DomainError("log map is undefined for antipodal sphere points")
    theta = 2.0 * np.arctan2(np.linalg.norm(ys - x, axis=1), np.linalg.norm(ys + x, axis=1))
    u = ys - (ys @ x)[:, None] * x
    un = np.linalg.norm(u, axis=1)
    scale = np.divide(theta, un, out=np.zeros_like(un), where=un > 0)
    return scale[:, None] * u


def exp_map(manifold: ManifoldDescriptor, x, v) -> np.ndarray:
    """Riemannian exponential: endpoint of the unit-time geodesic from x with velocity v."""
    x = _as_point(manifold, x)
    v = np.asarray(v, dtype=np.float64).reshape(x.shape)
    if manifold.family is Family.EUCLIDEAN:
        return x + v
    if manifold.family is Family.SPHERE:
        theta = np.linalg.norm(v)
        if theta == 0.0:
            return x.copy()
        out = np.cos(theta) * x + (np.sin(theta) / theta) * v
        return out / np.linalg.norm(out)
    root, inv_root = _spd_roots(x)
    return _sym(root @ _sym_apply(_sym(inv_root @ v @ inv_root), np.exp) @ root)


def log_volume_density(manifold: ManifoldDescriptor, x) -> float:
    """Half the log-determinant of the metric tensor, up to a per-manifold constant.

    Euclidean space and the sphere are homogeneous, so the density is constant
    and reported as 0. For SPD(m) in the matrix-entries chart,
    ``det G_P`` is proportional to ``det(P)^-(m+1)``.
    """
    if manifold.family is not Family.SPD:
        return 0.0
    sign, logdet = np.linalg.slogdet(_as_point(manifold, x))
    if sign <= 0:
        raise NumericalError("SPD point has a non-positive determinant")
    return float(-0.5 * (manifold.ambient_dim + 1) * logdet)


def log_volume_densities(manifold: ManifoldDescriptor, points) -> np.ndarray:
    """Vectorised :func:`log_volume_density` over a stack of points."""
    pts = _as_points(manifold, points)
    if manifold.family is not Family.SPD:
        return np.zeros(len(pts))
    sign, logdet = np.linalg.slogdet(pts)
    if np.any(sign <= 0):
        bad = int(np.flatnonzero(sign <= 0)[0])
        raise NumericalError(f"SPD point {bad} has a non-positive determinant")
    return -0.5 * (manifold.ambient_dim + 1) * logdet


def project_to_manifold(manifold: ManifoldDescriptor, raw, eps: float = SPD_EPS) -> np.ndarray:
    """Nearest valid point: normalise onto the sphere, or symmetrise and clamp SPD eigenvalues."""
    raw = np.asarray(raw, dtype=np.float64)
    if manifold.family is Family.EUCLIDEAN:
        return _as_point(manifold, raw).copy()
    if manifold.family is Family.SPHERE:
        raw = _as_point(manifold, raw)
        n = np.linalg.norm(raw)
        if n == 0.0:
            raise InvalidArgumentError("cannot project the zero vector onto the sphere")
        return raw / n
    raw = _as_point(manifold, raw)
    return _sym_apply(_sym(raw), lambda w: np.maximum(w, eps))


# ---------------------------------------------------------------------------
# means and tangent coordinates
# ---------------------------------------------------------------------------

def _initial_mean(manifold, pts):
    avg = pts.mean(axis=0)
    if manifold.family is Family.SPHERE:
        n = np.linalg.norm(avg)
        return avg / n if n > 1e-12 else pts[0].copy()
    if manifold.family is Family.SPD:
        return project_to_manifold(manifold, avg)
    return avg


def intrinsic_mean(manifold: ManifoldDescriptor, points, tol: float = 1e-9,
                   max_iter: int = 200) -> IntrinsicMean:
    """Karcher mean by the fixed-point iteration ``mu <- Exp_mu(mean_i Log_mu(x_i))``.

    Starts from the Euclidean average projected onto the manifold and stops when
    the mean tangent vector is shorter than ``tol``. On non-convergence the last
    iterate is returned with ``converged=False``.
    """
    pts = _as_points(manifold, points)
    if len(pts) == 0:
        raise InvalidArgumentError("intrinsic_mean needs at least one point")
    mu = _initial_mean(manifold, pts)
    residual = np.inf
    for it in range(max_iter + 1):
        if manifold.family is Family.EUCLIDEAN:
            step = (pts - mu).mean(axis=0)
            residual = float(np.linalg.norm(step))
        elif manifold.family is Family.SPHERE:
            step = _sphere_log(mu, pts).mean(axis=0)
            residual = float(np.linalg.norm(step))
        else:
            root, inv_root = _spd_roots(mu)
            white = _sym_apply(_sym(inv_root @ pts @ inv_root), np.log).mean(axis=0)
            residual = float(np.linalg.norm(white))
        if residual < tol:
            return IntrinsicMean(mu, True, it, residual)
        if it == max_iter:
            break
        if manifold.family is Family.SPD:
            mu = _sym(root @ _sym_apply(white, np.exp) @ root)
        else:
            mu = exp_map(manifold, mu, step)
    return IntrinsicMean(mu, False, max_iter, residual)


def sphere_tangent_basis(base) -> np.ndarray:
    """Orthonormal basis (as columns) of the tangent space of the sphere at ``base``.

    Built from the Householder reflection that maps ``base`` to a multiple of e_0,
    so the result is deterministic.
    """
    base = np.asarray(base, dtype=np.float64)
    e0 = np.zeros_like(base)
    e0[0] = 1.0
    u = base + (1.0 if base[0] >= 0 else -1.0) * e0
    h = np.eye(len(base)) - 2.0 * np.outer(u, u) / (u @ u)
    return h[:, 1:]


def tangent_coords(manifold: ManifoldDescriptor, base, points) -> np.ndarray:
    """``Log_base(x_i)`` in an orthonormal basis of the tangent space at ``base``.

    Returns an ``(n, intrinsic_dim)`` array whose row norms equal the geodesic
    distances to ``base``. For SPD the basis is the image of
    ``{E_ii, (E_ij + E_ji)/sqrt(2)}`` under ``U -> base^1/2 U base^1/2``,
    ordered row-major over the upper triangle.
    """
    base = _as_point(manifold, base)
    pts = _as_points(manifold, points)
    if manifold.family is Family.EUCLIDEAN:
        return pts - base
    if manifold.family is Family.SPHERE:
        bad = np.flatnonzero(np.linalg.norm(pts + base, axis=1) <= ANTIPODAL_TOL)
        if len(bad):
            raise DomainError(f"point {int(bad[0])} is antipodal to the base point")
        return _sphere_log(base, pts) @ sphere_tangent_basis(base)
    _, inv_root = _spd_roots(base)
    white = _sym_apply(_sym(inv_root @ pts @ inv_root), np.log)
    m = manifold.ambient_dim
    rows, cols = np.triu_indices(m)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return white[:, rows, cols] * scale


def polyline_length(manifold: ManifoldDescriptor, points) -> float:
    """Sum of geodesic distances between consecutive points of a discretised curve."""
    pts = _as_points(manifold, points)
    if len(pts) < 2:
        raise InvalidArgumentError("polyline_length needs at least two points")
    return float(sum(dist(manifold, a, b) for a, b in zip(pts[:-1], pts[1:])))


# ---------------------------------------------------------------------------
# kernel metric over a dataset
# ---------------------------------------------------------------------------

def make_metric(manifold: ManifoldDescriptor, points, backend=None):
    """Kernel object computing distances between rows of ``points``.

    All dataset-level distance work (pairwise matrices, tree searches) goes
    through this object so that every caller sees identical floating-point
    values.
    """
    kernels = backend or _backend.active()
    pts = _as_points(manifold, points)
    code = _KERNEL_CODE[manifold.family]
    if manifold.family is not Family.SPD:
        return kernels.Metric(code, np.ascontiguousarray(pts))
    m = manifold.ambient_dim
    try:
        chol = np.linalg.cholesky(pts)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky factorisation failed: {exc}") from exc
    whiten = np.linalg.inv(chol)
    whiten = np.tril(whiten)
    return kernels.Metric(
        code,
        np.ascontiguousarray(pts.reshape(len(pts), m * m)),
        np.ascontiguousarray(whiten.reshape(len(pts), m * m)),
        m,
    )


def pairwise_distances(manifold: ManifoldDescriptor, points) -> np.ndarray:
    """Symmetric ``(n, n)`` geodesic distance matrix."""
    return make_metric(manifold, points).pairwise()

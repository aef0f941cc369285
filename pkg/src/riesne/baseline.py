"""Tangent-space PCA: intrinsic mean, log map to its tangent space, ordinary PCA there."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetTable
from .errors import InvalidArgumentError
from .geometry import ManifoldDescriptor, intrinsic_mean, tangent_coords


@dataclass
class TangentPcaModel:
    """Fitted tangent PCA.

    Attributes
    ----------
    manifold : ManifoldDescriptor
    base_point : ndarray
        Intrinsic mean of the training data.
    components : ndarray of shape (d, intrinsic_dim)
        Orthonormal principal directions in tangent coordinates, as rows.
    explained_variance : ndarray of shape (d,)
        Non-increasing sample variances (1/(n-1) normalisation).
    mean : ndarray of shape (intrinsic_dim,)
        Mean tangent coordinate of the training data (zero when the base point
        is an exact intrinsic mean).
    mean_converged : bool
    """

    manifold: ManifoldDescriptor
    base_point: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    mean: np.ndarray
    mean_converged: bool = True

    @property
    def n_components(self) -> int:
        return len(self.components)


def _sign_fix(vecs):
    # make the largest-magnitude entry of each row positive
    pivot = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(len(vecs)), pivot])
    signs[signs == 0] = 1.0
    return vecs * signs[:, None]


def fit_tangent_pca(data: DatasetTable, d: int, tol: float = 1e-9, max_iter: int = 200) -> TangentPcaModel:
    """Fit PCA to the log-mapped data at the intrinsic mean.

    Raises
    ------
    InvalidArgumentError
        If ``d`` is outside ``[1, intrinsic_dim]``.
    DomainError
        If a sphere datum is antipodal to the mean.
    """
    dim = data.manifold.intrinsic_dim
    if not 1 <= d <= dim:
        raise InvalidArgumentError(f"d must lie in [1, {dim}], got {d}")
    mean = intrinsic_mean(data.manifold, data.points, tol=tol, max_iter=max_iter)
    coords = tangent_coords(data.manifold, mean.point, data.points)
    centre = coords.mean(axis=0)
    centred = coords - centre
    denom = max(data.n - 1, 1)
    cov = centred.T @ centred / denom
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:d]
    comps = _sign_fix(vecs[:, order].T)
    return TangentPcaModel(
        manifold=data.manifold,
        base_point=mean.point,
        components=comps,
        explained_variance=np.maximum(vals[order], 0.0),
        mean=centre,
        mean_converged=mean.converged,
    )


def transform(model: TangentPcaModel, data: DatasetTable) -> np.ndarray:
    """Project each point's tangent coordinates at the base point onto the components.

    The coordinates are not re-centred, so the base point itself maps to the
    origin.
    """
    if data.manifold != model.manifold:
        raise InvalidArgumentError(f"data lives on {data.manifold}, model on {model.manifold}")
    return tangent_coords(model.manifold, model.base_point, data.points) @ model.components.T


def inverse_transform(model: TangentPcaModel, scores) -> np.ndarray:
    """Tangent coordinates reconstructed from component scores."""
    return np.asarray(scores, dtype=np.float64) @ model.components

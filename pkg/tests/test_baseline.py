import numpy as np
import pytest
from sklearn.decomposition import PCA

from riesne import (
    DatasetTable,
    InvalidArgumentError,
    ManifoldDescriptor,
    exp_map,
    fit_tangent_pca,
    inverse_transform,
    tangent_coords,
    transform,
)
from riesne.errors import DomainError

from conftest import random_spd


def _cap(rng, n, ambient, spread=0.4):
    """Sphere points scattered around the north pole."""
    x = rng.standard_normal((n, ambient)) * spread
    x[:, -1] += 1.0
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_euclidean_matches_ordinary_pca():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 5)) @ np.diag([4.0, 2.0, 1.0, 0.5, 0.2]) + 3.0
    model = fit_tangent_pca(DatasetTable(x, ManifoldDescriptor.euclidean(5)), 3)
    ref = PCA(3).fit(x)
    np.testing.assert_allclose(model.explained_variance, ref.explained_variance_, rtol=1e-9)
    np.testing.assert_allclose(np.abs(model.components @ ref.components_.T), np.eye(3), atol=1e-9)
    np.testing.assert_allclose(model.base_point, x.mean(axis=0), atol=1e-9)


def test_components_orthonormal_sorted_and_sign_fixed():
    rng = np.random.default_rng(1)
    table = DatasetTable(_cap(rng, 150, 6), ManifoldDescriptor.sphere(6))
    model = fit_tangent_pca(table, 4)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(4), atol=1e-9)
    assert np.all(np.diff(model.explained_variance) <= 0)
    pivots = model.components[np.arange(4), np.argmax(np.abs(model.components), axis=1)]
    assert np.all(pivots > 0)
    assert model.n_components == 4 and model.mean_converged


def test_transform_variance_equals_explained_variance():
    rng = np.random.default_rng(2)
    table = DatasetTable(random_spd(rng, 120, 3), ManifoldDescriptor.spd(3))
    model = fit_tangent_pca(table, 4)
    scores = transform(model, table)
    np.testing.assert_allclose(scores.var(axis=0, ddof=1), model.explained_variance, rtol=1e-8, atol=1e-12)


def test_transform_matches_projection_oracle():
    rng = np.random.default_rng(3)
    table = DatasetTable(_cap(rng, 80, 4), ManifoldDescriptor.sphere(4))
    model = fit_tangent_pca(table, 2)
    coords = tangent_coords(table.manifold, model.base_point, table.points)
    expected = np.array([[c @ comp for comp in model.components] for c in coords])
    np.testing.assert_allclose(transform(model, table), expected, atol=1e-14)


def test_base_point_maps_to_origin():
    rng = np.random.default_rng(4)
    table = DatasetTable(_cap(rng, 50, 3), ManifoldDescriptor.sphere(3))
    model = fit_tangent_pca(table, 2)
    base = DatasetTable(model.base_point[None], table.manifold)
    np.testing.assert_allclose(transform(model, base), 0.0, atol=1e-15)


def test_single_repeated_point():
    x = np.tile([1.0, 2.0, 3.0], (10, 1))
    model = fit_tangent_pca(DatasetTable(x, ManifoldDescriptor.euclidean(3)), 2)
    np.testing.assert_allclose(model.explained_variance, 0.0, atol=1e-30)
    np.testing.assert_allclose(model.components @ model.components.T, np.eye(2), atol=1e-12)


def test_great_circle_has_one_dominant_component():
    rng = np.random.default_rng(5)
    man = ManifoldDescriptor.sphere(5)
    base = np.array([0.0, 0, 0, 0, 1.0])
    direction = np.array([0.6, 0.8, 0, 0, 0])
    pts = np.array([exp_map(man, base, s * direction) for s in rng.uniform(-1.2, 1.2, 60)])
    model = fit_tangent_pca(DatasetTable(pts, man), 2)
    total = model.explained_variance.sum()
    assert model.explained_variance[0] >= 0.99 * total


def test_euclidean_full_rank_is_orthogonal_change_of_basis():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((100, 4))
    table = DatasetTable(x, ManifoldDescriptor.euclidean(4))
    scores = transform(fit_tangent_pca(table, 4), table)
    d_in = np.linalg.norm(x[:, None] - x[None], axis=2)
    d_out = np.linalg.norm(scores[:, None] - scores[None], axis=2)
    np.testing.assert_allclose(d_out, d_in, atol=1e-8)


def test_reconstruction_at_full_dimension():
    rng = np.random.default_rng(7)
    table = DatasetTable(random_spd(rng, 60, 2), ManifoldDescriptor.spd(2))
    model = fit_tangent_pca(table, 3)
    coords = tangent_coords(table.manifold, model.base_point, table.points)
    np.testing.assert_allclose(inverse_transform(model, transform(model, table)), coords, atol=1e-8)


def test_sphere_rotation_equivariance():
    rng = np.random.default_rng(8)
    x = _cap(rng, 90, 4)
    rot, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    man = ManifoldDescriptor.sphere(4)
    a = fit_tangent_pca(DatasetTable(x, man), 3)
    b = fit_tangent_pca(DatasetTable(x @ rot.T, man), 3)
    np.testing.assert_allclose(b.base_point, rot @ a.base_point, atol=1e-8)
    np.testing.assert_allclose(b.explained_variance, a.explained_variance, atol=1e-8)


def test_errors():
    rng = np.random.default_rng(9)
    table = DatasetTable(_cap(rng, 20, 3), ManifoldDescriptor.sphere(3))
    with pytest.raises(InvalidArgumentError):
        fit_tangent_pca(table, 3)
    with pytest.raises(InvalidArgumentError):
        fit_tangent_pca(table, 0)
    model = fit_tangent_pca(table, 2)
    with pytest.raises(InvalidArgumentError):
        transform(model, DatasetTable(rng.standard_normal((5, 3)), ManifoldDescriptor.euclidean(3)))
    antipodal = DatasetTable(np.array([[0, 0, 1.0], [0, 0, -1.0]]), ManifoldDescriptor.sphere(3))
    with pytest.raises(DomainError):
        transform(model, DatasetTable(-model.base_point[None], table.manifold))
    with pytest.raises(DomainError):
        fit_tangent_pca(antipodal, 1)

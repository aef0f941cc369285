import numpy as np
import pytest

from riesne import (
    DatasetTable,
    InvalidArgumentError,
    ManifoldDescriptor,
    brute_knn,
    use_backend,
    vp_build,
    vp_query,
)
from riesne._backend import BACKENDS

from conftest import random_table


def _audit(tree):
    """Every index once; left subtree within radius of the vantage, right subtree beyond it."""
    vantage, radius, left, right = tree.vantage, tree.radius, tree.left, tree.right
    assert sorted(vantage.tolist()) == list(range(tree.n))

    def members(node):
        out, stack = [], [node]
        while stack:
            k = stack.pop()
            if k < 0:
                continue
            out.append(int(vantage[k]))
            stack += [int(left[k]), int(right[k])]
        return out

    for k in range(len(vantage)):
        v = int(vantage[k])
        for p in members(int(left[k])):
            assert tree.distance(v, p) <= radius[k]
        for p in members(int(right[k])):
            assert tree.distance(v, p) > radius[k]


def test_single_point_tree(backend):
    tree = vp_build(DatasetTable(np.zeros((1, 2)), ManifoldDescriptor.euclidean(2)))
    assert tree.vantage.tolist() == [0]
    assert tree.left.tolist() == [-1] and tree.right.tolist() == [-1]


def test_collinear_tree_is_valid(backend):
    _audit(vp_build(DatasetTable([[0.0], [1.0], [3.0]], ManifoldDescriptor.euclidean(1))))


@pytest.mark.parametrize("family,size", [("euclidean", 4), ("sphere", 3), ("spd", 3)])
def test_partition_invariant(backend, family, size):
    _audit(vp_build(random_table(family, 300, size, seed=1), seed=5))


def test_sphere_partition_invariant_large():
    _audit(vp_build(random_table("sphere", 1000, 3, seed=2), seed=0))


def test_line_query():
    data = DatasetTable([[0.0], [1.0], [3.0]], ManifoldDescriptor.euclidean(1))
    idx, dst = vp_query(vp_build(data), 0, 1)
    assert idx.tolist() == [1] and dst.tolist() == [1.0]
    idx, dst = vp_query(vp_build(data), 2, 2)
    assert idx.tolist() == [1, 0] and dst.tolist() == [2.0, 3.0]


def test_two_points_brute():
    data = DatasetTable([[0.0, 0.0], [1.0, 1.0]], ManifoldDescriptor.euclidean(2))
    assert brute_knn(data, 1).indices.tolist() == [[1], [0]]


def test_duplicates_tie_break_by_index(backend):
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [5.0, 5.0]])
    data = DatasetTable(pts, ManifoldDescriptor.euclidean(2))
    ref = brute_knn(data, 3)
    assert ref.indices[0].tolist() == [2, 3, 1]
    assert ref.distances[0].tolist() == [0.0, 0.0, 1.0]
    got = vp_build(data).knn(3)
    np.testing.assert_array_equal(got.indices, ref.indices)


@pytest.mark.parametrize("family,size", [("euclidean", 5), ("sphere", 4), ("spd", 3)])
@pytest.mark.parametrize("k", [1, 10, 45])
def test_vp_equals_brute(backend, family, size, k):
    data = random_table(family, 250, size, seed=3)
    ref = brute_knn(data, k)
    got = vp_build(data, seed=7).knn(k)
    np.testing.assert_array_equal(got.indices, ref.indices)
    np.testing.assert_array_equal(got.distances, ref.distances)
    assert not np.any(got.indices == np.arange(data.n)[:, None])
    assert np.all(np.diff(got.distances, axis=1) >= 0)


def test_spd_k90_equals_brute():
    data = random_table("spd", 500, 3, seed=4)
    ref = brute_knn(data, 90)
    got = vp_build(data).knn(90)
    np.testing.assert_array_equal(got.indices, ref.indices)


def test_k_all_others():
    data = random_table("euclidean", 30, 2, seed=5)
    idx, dst = vp_query(vp_build(data), 4, 29)
    assert sorted(idx.tolist()) == [i for i in range(30) if i != 4]
    assert np.all(np.diff(dst) >= 0)


@pytest.mark.parametrize("k", [0, 30])
def test_k_out_of_range(k):
    data = random_table("euclidean", 30, 2)
    with pytest.raises(InvalidArgumentError):
        vp_query(vp_build(data), 0, k)
    with pytest.raises(InvalidArgumentError):
        brute_knn(data, k)


def test_determinism_and_backend_agreement():
    data = random_table("sphere", 400, 3, seed=6)
    trees = {}
    for name in BACKENDS:
        with use_backend(name):
            a, b = vp_build(data, seed=11), vp_build(data, seed=11)
            np.testing.assert_array_equal(a.vantage, b.vantage)
            np.testing.assert_array_equal(a.knn(10).indices, b.knn(10).indices)
            trees[name] = a.vantage
    first = next(iter(trees.values()))
    for v in trees.values():
        np.testing.assert_array_equal(v, first)


def test_query_cost_grows_sublinearly():
    rng = np.random.default_rng(0)
    visits = []
    for n in (2000, 4000):
        x = rng.standard_normal((n, 3))
        data = DatasetTable(x / np.linalg.norm(x, axis=1, keepdims=True), ManifoldDescriptor.sphere(3))
        tree = vp_build(data, seed=1)
        q = rng.choice(n, 1000, replace=False)
        visits.append(np.mean([tree.query(int(i), 5, return_visited=True)[2] for i in q]))
    assert visits[1] / visits[0] < 1.5

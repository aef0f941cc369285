"""Exact k-nearest-neighbour search under geodesic distance.

A vantage-point tree answers the queries; :func:`brute_knn` is the O(n^2)
reference. Both rank neighbours by ``(distance, index)`` so ties resolve
identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .dataset import DatasetTable
from .errors import InvalidArgumentError


@dataclass
class NeighborList:
    """Per-query neighbour indices and distances, ascending by (distance, index)."""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]


class VpTree:
    """Vantage-point tree over a :class:`DatasetTable`.

    Node arrays are exposed for inspection: ``vantage[k]`` is the dataset row
    held by node ``k``, ``radius[k]`` its median split distance and
    ``left[k]``/``right[k]`` the child node ids (-1 when absent). Node 0 is the
    root.
    """

    def __init__(self, data: DatasetTable, seed: int = 0):
        self.data = data
        self.seed = int(seed)
        self._metric = data.metric()
        self._tree = _backend.active().VPTree(self._metric, self.seed & (2**64 - 1))

    @property
    def vantage(self):
        return np.asarray(self._tree.vantage)

    @property
    def radius(self):
        return np.asarray(self._tree.radius)

    @property
    def left(self):
        return np.asarray(self._tree.left)

    @property
    def right(self):
        return np.asarray(self._tree.right)

    @property
    def n(self) -> int:
        return self.data.n

    def distance(self, i: int, j: int) -> float:
        return self._metric.distance(int(i), int(j))

    def query(self, query_index: int, k: int, return_visited: bool = False):
        _check_k(k, self.n)
        if not 0 <= query_index < self.n:
            raise InvalidArgumentError(f"query index {query_index} out of range")
        idx, dst, visited = self._tree.query(int(query_index), int(k))
        if return_visited:
            return idx, dst, visited
        return idx, dst

    def knn(self, k: int) -> NeighborList:
        _check_k(k, self.n)
        idx, dst = self._tree.knn_all(int(k))
        return NeighborList(idx, dst)


def _check_k(k, n):
    if not 1 <= k <= n - 1:
        raise InvalidArgumentError(f"k must satisfy 1 <= k <= n-1 = {n - 1}, got {k}")


def vp_build(data: DatasetTable, seed: int = 0) -> VpTree:
    """Build a vantage-point tree; vantage points come from a seeded splitmix64 stream."""
    return VpTree(data, seed)


def vp_query(tree: VpTree, query_index: int, k: int, return_visited: bool = False):
    """The ``k`` nearest other rows of ``query_index`` as ``(indices, distances)``."""
    return tree.query(query_index, k, return_visited)


def brute_knn(data: DatasetTable, k: int) -> NeighborList:
    """Reference kNN from the full distance matrix."""
    _check_k(k, data.n)
    dmat = data.metric().pairwise()
    n = data.n
    idx = np.empty((n, k), dtype=np.int64)
    dst = np.empty((n, k))
    for i in range(n):
        row = dmat[i].copy()
        row[i] = np.inf
        order = np.argsort(row, kind="stable")[:k]
        idx[i] = order
        dst[i] = row[order]
    return NeighborList(idx, dst)

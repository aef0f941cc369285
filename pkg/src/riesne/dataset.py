from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import InvalidArgumentError
from .geometry import ManifoldDescriptor, make_metric


@dataclass
class DatasetTable:
    """``n`` observations on one manifold, with optional integer labels and string ids.

    ``points`` has shape ``(n, D)`` for Euclidean/sphere data and ``(n, m, m)``
    for SPD data.
    """

    points: np.ndarray
    manifold: ManifoldDescriptor
    labels: np.ndarray | None = None
    ids: list[str] | None = None
    _metrics: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        shape = self.manifold.point_shape
        if self.points.ndim != len(shape) + 1 or self.points.shape[1:] != shape:
            raise InvalidArgumentError(
                f"points of shape {self.points.shape} do not match {self.manifold}"
            )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n,):
                raise InvalidArgumentError(f"expected {self.n} labels, got {self.labels.shape}")
        if self.ids is None:
            self.ids = [str(i) for i in range(self.n)]
        elif len(self.ids) != self.n:
            raise InvalidArgumentError(f"expected {self.n} ids, got {len(self.ids)}")
        else:
            self.ids = [str(i) for i in self.ids]

    @property
    def n(self) -> int:
        return len(self.points)

    def metric(self):
        """Kernel distance object for the active backend (cached per backend)."""
        kernels = _backend.active()
        if kernels.NAME not in self._metrics:
            self._metrics[kernels.NAME] = make_metric(self.manifold, self.points, kernels)
        return self._metrics[kernels.NAME]

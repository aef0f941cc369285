"""Riemannian stochastic neighbour embedding.

Embeds data on the unit sphere, the SPD cone or Euclidean space into R^d or
S^d using heat-kernel affinities calibrated to a target perplexity.
"""

from ._backend import active as active_backend
from ._backend import set_backend, use_backend
from .affinity import (
    AffinityKind,
    AffinityMatrix,
    BrownianParams,
    CalibratedRow,
    bm_similarity,
    build_p,
    calibrate_row,
    h0_matrix,
)
from .baseline import TangentPcaModel, fit_tangent_pca, inverse_transform, transform
from .dataset import DatasetTable
from .embedding import (
    EmbeddingState,
    OptimizerConfig,
    SimilarityFamily,
    TargetSpace,
    build_q,
    init_embedding,
    kl_cost,
    kl_divergence,
    kl_gradient_bh,
    kl_gradient_exact,
    optimize,
    s_low,
)
from .errors import DataError, DomainError, InvalidArgumentError, NumericalError, RieSNEError
from .geometry import (
    Family,
    ManifoldDescriptor,
    dist,
    exp_map,
    intrinsic_mean,
    log_map,
    log_volume_density,
    polyline_length,
    project_to_manifold,
    tangent_coords,
)
from .harness import (
    OutputPaths,
    RunConfig,
    emit_outputs,
    ingest_csv,
    knn_label_accuracy,
    rolling_covariance,
    trustworthiness,
)
from .neighbors import NeighborList, VpTree, brute_knn, vp_build, vp_query

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

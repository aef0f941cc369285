"""Data ingestion, quality metrics, output files and the end-to-end run pipeline."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .affinity import VOLUME_CHARTS, build_p
from .dataset import DatasetTable
from .embedding import (
    EmbeddingState,
    OptimizerConfig,
    TargetSpace,
    kl_divergence,
    optimize,
)
from .errors import DataError, InvalidArgumentError, RieSNEError
from .geometry import (
    SPD_EPS,
    Family,
    ManifoldDescriptor,
    check_point,
    make_metric,
    project_to_manifold,
)

_META = ("id", "label")


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _spd_side(ncols: int) -> int:
    m = int(round((math.sqrt(8 * ncols + 1) - 1) / 2))
    if m * (m + 1) // 2 != ncols:
        raise DataError(f"{ncols} feature columns are not the upper triangle of a square matrix")
    return m


def _unflatten_upper(vals, m):
    mat = np.zeros((m, m))
    rows, cols = np.triu_indices(m)
    mat[rows, cols] = vals
    mat[cols, rows] = vals
    return mat


def _flatten_upper(mat):
    rows, cols = np.triu_indices(mat.shape[0])
    return mat[rows, cols]


def _resolve_manifold(manifold, nfeat: int) -> ManifoldDescriptor:
    if isinstance(manifold, ManifoldDescriptor):
        return manifold
    family = Family(manifold)
    if family is Family.SPD:
        return ManifoldDescriptor.spd(_spd_side(nfeat))
    return ManifoldDescriptor(family, nfeat)


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            body = [(reader.line_num, row) for row in reader if any(c.strip() for c in row)]
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not a text CSV ({exc})") from None
    return header, body


def ingest_csv(path, manifold, project: bool = False) -> DatasetTable:
    """Read a CSV with a header row into a :class:`DatasetTable`.

    Optional ``id`` and ``label`` columns are recognised by name; every other
    column is a numeric feature. SPD points are given as the upper triangle of
    each matrix, row-major. ``manifold`` is a :class:`ManifoldDescriptor` or a
    family name, in which case the dimension is taken from the column count.

    With ``project=True`` each row is projected onto the manifold; otherwise
    rows that violate the manifold's invariants are rejected.

    Raises
    ------
    DataError
        Malformed rows, non-numeric cells, zero vectors under sphere
        projection, or rejected points; messages give 1-based line numbers.
    """
    header, body = _read_rows(path)
    feat_cols = [i for i, h in enumerate(header) if h not in _META]
    id_col = header.index("id") if "id" in header else None
    label_col = header.index("label") if "label" in header else None
    if not feat_cols:
        raise DataError(f"{path}: no feature columns")
    if not body:
        raise DataError(f"{path}: no data rows")
    manifold = _resolve_manifold(manifold, len(feat_cols))
    spd = manifold.family is Family.SPD
    expected = manifold.ambient_dim * (manifold.ambient_dim + 1) // 2 if spd else manifold.ambient_dim
    if len(feat_cols) != expected:
        raise DataError(f"{path}: {len(feat_cols)} feature columns, {manifold} needs {expected}")

    points, labels, ids, rejected = [], [], [], []
    for line, row in body:
        if len(row) != len(header):
            raise DataError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}")
        try:
            vals = np.array([float(row[i]) for i in feat_cols])
        except ValueError:
            raise DataError(f"{path}: line {line} has a non-numeric feature") from None
        if not np.all(np.isfinite(vals)):
            raise DataError(f"{path}: line {line} has a non-finite feature")
        raw = _unflatten_upper(vals, manifold.ambient_dim) if spd else vals
        if project:
            try:
                pt = project_to_manifold(manifold, raw)
            except RieSNEError as exc:
                raise DataError(f"{path}: line {line}: {exc}") from None
        else:
            try:
                pt = check_point(manifold, raw)
            except RieSNEError:
                rejected.append(line)
                continue
        points.append(pt)
        if label_col is not None:
            try:
                labels.append(int(row[label_col]))
            except ValueError:
                raise DataError(f"{path}: line {line} has a non-integer label") from None
        ids.append(row[id_col].strip() if id_col is not None else str(len(ids)))
    if rejected:
        shown = ", ".join(map(str, rejected[:10])) + (" ..." if len(rejected) > 10 else "")
        raise DataError(f"{path}: {len(rejected)} rows are not points of {manifold} (lines {shown})")
    return DatasetTable(
        np.array(points),
        manifold,
        labels=np.array(labels, dtype=np.int64) if label_col is not None else None,
        ids=ids,
    )


def rolling_covariance(series, window: int = 20, timestamps=None, eps: float = SPD_EPS) -> DatasetTable:
    """Sliding-window sample covariances of a ``(T, m)`` series as SPD points.

    Window ``s`` covers rows ``s .. s+window-1``; its covariance uses the
    ``1/(window-1)`` normalisation plus ``eps * I``. Ids are the timestamps of
    each window's last row (row indices when ``timestamps`` is None).
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise InvalidArgumentError(f"series must be 2-D, got shape {x.shape}")
    t_len, m = x.shape
    if window < 2:
        raise InvalidArgumentError(f"window must be >= 2, got {window}")
    if t_len < window:
        raise InvalidArgumentError(f"series has {t_len} rows, fewer than the window {window}")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    if timestamps is None:
        timestamps = [str(i) for i in range(t_len)]
    elif len(timestamps) != t_len:
        raise InvalidArgumentError(f"expected {t_len} timestamps, got {len(timestamps)}")
    windows = np.lib.stride_tricks.sliding_window_view(x, window, axis=0)  # (S, m, window)
    centred = windows - windows.mean(axis=2, keepdims=True)
    covs = centred @ np.swapaxes(centred, 1, 2) / (window - 1)
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2)) + eps * np.eye(m)
    manifold = ManifoldDescriptor.spd(m)
    for s, c in enumerate(covs):
        try:
            check_point(manifold, c)
        except RieSNEError as exc:
            raise DataError(f"window ending at row {s + window - 1} is not SPD: {exc}") from None
    ids = [str(timestamps[s + window - 1]) for s in range(len(covs))]
    return DatasetTable(covs, manifold, ids=ids)


def read_series_csv(path):
    """A price table: the first column holds timestamps, the rest numeric series."""
    header, body = _read_rows(path)
    if len(header) < 2:
        raise DataError(f"{path}: need a timestamp column and at least one series")
    stamps, rows = [], []
    for line, row in body:
        if len(row) != len(header):
            raise DataError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}")
        try:
            rows.append([float(c) for c in row[1:]])
        except ValueError:
            raise DataError(f"{path}: line {line} has a non-numeric value") from None
        stamps.append(row[0].strip())
    if not rows:
        raise DataError(f"{path}: no data rows")
    return stamps, np.array(rows), header[1:]


def log_returns(prices, stamps=None):
    """``log(p_t / p_{t-1})``; timestamps shift to the later row."""
    prices = np.asarray(prices, dtype=np.float64)
    if np.any(prices <= 0):
        raise DataError("log returns need strictly positive prices")
    out = np.diff(np.log(prices), axis=0)
    return out if stamps is None else (out, list(stamps)[1:])


def write_dataset_csv(table: DatasetTable, path):
    """Write a table in the format :func:`ingest_csv` reads (SPD as upper triangles)."""
    spd = table.manifold.family is Family.SPD
    if spd:
        m = table.manifold.ambient_dim
        names = [f"x{i}_{j}" for i, j in zip(*np.triu_indices(m))]
    else:
        names = [f"x{i}" for i in range(table.manifold.ambient_dim)]
    header = ["id"] + (["label"] if table.labels is not None else []) + names
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i in range(table.n):
            vals = _flatten_upper(table.points[i]) if spd else table.points[i]
            lead = [table.ids[i]] + ([int(table.labels[i])] if table.labels is not None else [])
            out.writerow(lead + [repr(float(v)) for v in vals])


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _coords_manifold(coords, manifold):
    if manifold is not None:
        return manifold
    return ManifoldDescriptor.euclidean(coords.shape[1])


def _embedding_distances(coords, manifold):
    coords = np.asarray(coords, dtype=np.float64)
    return make_metric(_coords_manifold(coords, manifold), coords).pairwise()


def knn_label_accuracy(coords, labels, k: int = 10, manifold: ManifoldDescriptor | None = None) -> float:
    """Fraction of points whose k-nearest-neighbour majority label equals their own.

    Distances are geodesic on ``manifold`` (Euclidean by default); neighbour
    ties go to the smaller index, vote ties to the smaller label.
    """
    if labels is None:
        raise InvalidArgumentError("knn_label_accuracy needs labels")
    labels = np.asarray(labels, dtype=np.int64)
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    if labels.shape != (n,):
        raise InvalidArgumentError(f"expected {n} labels, got {labels.shape}")
    if not 1 <= k <= n - 1:
        raise InvalidArgumentError(f"k must satisfy 1 <= k <= n-1 = {n - 1}, got {k}")
    dmat = _embedding_distances(coords, manifold)
    np.fill_diagonal(dmat, np.inf)
    nbrs = np.argsort(dmat, axis=1, kind="stable")[:, :k]
    offset = labels.min()
    votes = labels[nbrs] - offset
    width = int(votes.max()) + 1
    counts = np.zeros((n, width), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(n), k), votes.ravel()), 1)
    pred = counts.argmax(axis=1) + offset  # argmax returns the first, i.e. smallest, label
    return float(np.mean(pred == labels))


def trustworthiness(data: DatasetTable, coords, k: int = 10,
                    manifold: ManifoldDescriptor | None = None) -> float:
    """Trustworthiness of an embedding with ranks taken under the data manifold's distance.

    ``T = 1 - 2 / (n k (2n - 3k - 1)) * sum_i sum_{j in N_k^emb(i)} max(0, r(i, j) - k)``
    where ``r(i, j) = 1 + #{l != i : d(i, l) < d(i, j)}`` is the high-dimensional
    rank. With distinct distances this is the usual definition; tied distances
    share the smallest rank, so duplicated points incur no penalty.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = data.n
    if len(coords) != n:
        raise InvalidArgumentError(f"embedding has {len(coords)} rows, data has {n}")
    if not 1 <= k or k > n / 2:
        raise InvalidArgumentError(f"k must satisfy 1 <= k <= n/2 = {n / 2}, got {k}")
    high = data.metric().pairwise()
    np.fill_diagonal(high, -np.inf)
    sorted_high = np.sort(high, axis=1)
    low = _embedding_distances(coords, manifold)
    np.fill_diagonal(low, np.inf)
    nbrs = np.argsort(low, axis=1, kind="stable")[:, :k]
    penalty = 0.0
    for i in range(n):
        # entries before index 1 are the -inf self distance
        ranks = np.searchsorted(sorted_high[i], high[i, nbrs[i]], side="left")
        penalty += np.maximum(ranks - k, 0).sum()
    return float(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty)


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

@dataclass
class OutputPaths:
    coords: str
    svg: str | None = None
    kl_history: str | None = None


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def write_coords_csv(path, coords, table: DatasetTable):
    coords = np.asarray(coords, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["id", "label"] + [f"y{k + 1}" for k in range(coords.shape[1])])
        for i in range(len(coords)):
            label = "" if table.labels is None else int(table.labels[i])
            out.writerow([table.ids[i], label] + [repr(float(v)) for v in coords[i]])


def read_coords_csv(path):
    """``(ids, labels or None, coords)`` from a coordinates CSV."""
    header, body = _read_rows(path)
    if header[:2] != ["id", "label"] or len(header) < 3:
        raise DataError(f"{path}: expected header id,label,y1,...")
    ids, labels, coords = [], [], []
    for line, row in body:
        if len(row) != len(header):
            raise DataError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}")
        try:
            coords.append([float(c) for c in row[2:]])
            labels.append(int(row[1]) if row[1].strip() else None)
        except ValueError:
            raise DataError(f"{path}: line {line} is not numeric") from None
        ids.append(row[0])
    lab = None if any(v is None for v in labels) else np.array(labels, dtype=np.int64)
    return ids, lab, np.array(coords)


def write_svg(path, coords, labels=None, size: int = 600, radius: float = 3.0):
    """Static scatter of the first two coordinates, one ``<circle>`` per point."""
    xy = np.asarray(coords, dtype=np.float64)[:, :2]
    lo = xy.min(axis=0)
    span = float(np.max(xy.max(axis=0) - lo)) or 1.0
    margin = 10.0
    scale = (size - 2 * margin) / span
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for i, (x, y) in enumerate(xy):
        colour = "#333333" if labels is None else _PALETTE[int(labels[i]) % len(_PALETTE)]
        cx = margin + (x - lo[0]) * scale
        cy = size - margin - (y - lo[1]) * scale
        lines.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{radius}" fill="{colour}"/>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_kl_history(path, history):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["iteration", "kl"])
        for it, kl in enumerate(history):
            out.writerow([it, repr(float(kl))])


def emit_outputs(state, table: DatasetTable, paths: OutputPaths):
    """Write the coordinates CSV and, when requested, the SVG scatter and KL history."""
    coords = state.points if isinstance(state, EmbeddingState) else np.asarray(state)
    if len(coords) != table.n:
        raise InvalidArgumentError(f"{len(coords)} coordinates for {table.n} points")
    write_coords_csv(paths.coords, coords, table)
    if paths.svg:
        write_svg(paths.svg, coords, table.labels)
    if paths.kl_history and isinstance(state, EmbeddingState):
        write_kl_history(paths.kl_history, state.kl_history)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything an ``embed`` run needs."""

    input: str | None = None
    output: str | None = None
    manifold: str = "euclidean"
    project: bool = False
    target: str = "euclidean"
    family: str | None = None
    dim: int = 2
    perplexity: float = 30.0
    sparse: bool = False
    volume_chart: str = "entries"
    seed: int = 0
    svg: str | None = None
    kl_history: str | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if not self.perplexity >= 2:
            raise InvalidArgumentError(f"perplexity must be >= 2, got {self.perplexity}")
        if self.dim < 1:
            raise InvalidArgumentError(f"dim must be positive, got {self.dim}")
        try:
            Family(self.manifold)
        except ValueError:
            raise InvalidArgumentError(f"unknown manifold {self.manifold!r}") from None
        if self.volume_chart not in VOLUME_CHARTS:
            raise InvalidArgumentError(f"volume_chart must be one of {VOLUME_CHARTS}, got {self.volume_chart!r}")
        self.target_space()

    def target_space(self) -> TargetSpace:
        family = self.family or ("vmf" if self.target == "sphere" else "student-t")
        if self.target == "euclidean":
            return TargetSpace.euclidean(self.dim, family)
        if self.target == "sphere":
            return TargetSpace.sphere(self.dim, family)
        raise InvalidArgumentError(f"target must be euclidean or sphere, got {self.target!r}")

    def check_size(self, n: int):
        if self.sparse and math.floor(3 * self.perplexity) > n - 1:
            raise InvalidArgumentError(
                f"sparse mode needs floor(3 * perplexity) <= n - 1 = {n - 1}; "
                f"perplexity {self.perplexity} is too large"
            )

    @classmethod
    def from_dict(cls, values: dict) -> RunConfig:
        opt_names = {f.name for f in fields(OptimizerConfig)}
        # seed is shared: it drives both the VP-tree and the initial embedding
        top = {k: v for k, v in values.items() if (k not in opt_names or k == "seed") and k != "optimizer"}
        opt = dict(values.get("optimizer", {}))
        opt.update({k: v for k, v in values.items() if k in opt_names and k != "seed"})
        unknown = set(top) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        if "seed" in top:
            opt.setdefault("seed", top["seed"])
        return cls(**top, optimizer=OptimizerConfig(**opt))


def _build_p(table, config):
    return build_p(table, config.perplexity, mode="sparse" if config.sparse else "dense",
                   seed=config.seed, volume_chart=config.volume_chart)


def run_embedding(table: DatasetTable, config: RunConfig) -> EmbeddingState:
    """Build P on the data, then optimise the embedding."""
    config.check_size(table.n)
    P = _build_p(table, config)
    opt = replace(config.optimizer, seed=config.seed)
    return optimize(P, config.target_space(), opt)


def final_kl(table: DatasetTable, coords, config: RunConfig) -> float:
    """Exact KL cost of given coordinates against the data's P."""
    P = _build_p(table, config)
    return kl_divergence(P, np.asarray(coords, dtype=np.float64), config.target_space())

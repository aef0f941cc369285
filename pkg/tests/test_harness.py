import math

import numpy as np
import pytest
from sklearn.manifold import trustworthiness as sk_trustworthiness

from riesne import (
    DatasetTable,
    EmbeddingState,
    InvalidArgumentError,
    ManifoldDescriptor,
    OptimizerConfig,
    OutputPaths,
    RunConfig,
    emit_outputs,
    ingest_csv,
    knn_label_accuracy,
    rolling_covariance,
    trustworthiness,
)
from riesne.errors import DataError
from riesne.geometry import SPD_EPS, pairwise_distances
from riesne.harness import (
    final_kl,
    log_returns,
    read_coords_csv,
    read_series_csv,
    run_embedding,
    write_dataset_csv,
)

from conftest import random_spd, random_table


def _write(path, text):
    path.write_text(text)
    return str(path)


def _trust_oracle(high, low, k):
    """Textbook trustworthiness from full rank tables."""
    n = len(high)
    total = 0
    for i in range(n):
        order_h = [j for j in np.argsort(high[i], kind="stable") if j != i]
        rank = {j: r + 1 for r, j in enumerate(order_h)}
        order_l = [j for j in np.argsort(low[i], kind="stable") if j != i][:k]
        total += sum(max(0, rank[j] - k) for j in order_l)
    return 1 - 2.0 / (n * k * (2 * n - 3 * k - 1)) * total


# --- ingestion --------------------------------------------------------------------------

def test_ingest_sphere_projection(tmp_path):
    path = _write(tmp_path / "a.csv", "id,x,y,z,label\np,3,4,0,1\nq,0,0,2,0\n")
    table = ingest_csv(path, "sphere", project=True)
    np.testing.assert_allclose(table.points, [[0.6, 0.8, 0], [0, 0, 1]])
    assert table.ids == ["p", "q"] and table.labels.tolist() == [1, 0]
    assert table.manifold == ManifoldDescriptor.sphere(3)


def test_ingest_euclidean_passthrough(tmp_path):
    path = _write(tmp_path / "a.csv", "a,b\n1.5,-2\n0.25,7\n")
    table = ingest_csv(path, ManifoldDescriptor.euclidean(2))
    np.testing.assert_array_equal(table.points, [[1.5, -2], [0.25, 7]])
    assert table.labels is None and table.ids == ["0", "1"]


def test_ingest_rejects_off_manifold_rows(tmp_path):
    path = _write(tmp_path / "a.csv", "x,y,z\n1,0,0\n1,1,0\n0,1,0\n")
    with pytest.raises(DataError, match="lines 3"):
        ingest_csv(path, "sphere")
    ok = _write(tmp_path / "b.csv", "x,y,z\n1,0,0\n0,1,0\n")
    assert ingest_csv(ok, "sphere").n == 2


@pytest.mark.parametrize("body,match", [
    ("x,y\n1,2\n3\n", "line 3"),
    ("x,y\n1,2\n3,abc\n", "line 3"),
    ("x,y\n1,nan\n", "line 2"),
    ("x,y\n", "no data"),
    ("", "empty"),
    ("label\n1\n", "no feature"),
    ("x,y,label\n1,2,one\n", "line 2"),
])
def test_ingest_malformed(tmp_path, body, match):
    with pytest.raises(DataError, match=match):
        ingest_csv(_write(tmp_path / "a.csv", body), "euclidean")


def test_ingest_zero_vector_projection_names_line(tmp_path):
    path = _write(tmp_path / "a.csv", "x,y\n1,0\n0,0\n")
    with pytest.raises(DataError, match="line 3"):
        ingest_csv(path, "sphere", project=True)


def test_ingest_spd_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    table = DatasetTable(random_spd(rng, 5, 3), ManifoldDescriptor.spd(3), labels=[0, 1, 0, 1, 2],
                         ids=list("abcde"))
    path = str(tmp_path / "spd.csv")
    write_dataset_csv(table, path)
    back = ingest_csv(path, "spd")
    np.testing.assert_array_equal(back.points, table.points)
    assert back.ids == table.ids and back.labels.tolist() == [0, 1, 0, 1, 2]
    with pytest.raises(DataError):
        ingest_csv(_write(tmp_path / "bad.csv", "a,b\n1,2\n"), "spd")


# --- rolling covariance -------------------------------------------------------------------

def test_rolling_covariance_constant_series():
    table = rolling_covariance(np.ones((30, 3)), 20)
    assert table.n == 11
    np.testing.assert_allclose(table.points, np.broadcast_to(SPD_EPS * np.eye(3), (11, 3, 3)), atol=1e-24)


def test_rolling_covariance_scalar_variance_oracle():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(40)
    table = rolling_covariance(x, 10, timestamps=[f"t{i}" for i in range(40)])
    expected = [np.var(x[s:s + 10], ddof=1) + SPD_EPS for s in range(31)]
    np.testing.assert_allclose(table.points[:, 0, 0], expected, rtol=1e-12)
    assert table.ids[0] == "t9" and table.ids[-1] == "t39"


def test_rolling_covariance_matches_numpy_cov():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((25, 4))
    table = rolling_covariance(x, 25)
    assert table.n == 1
    np.testing.assert_allclose(table.points[0], np.cov(x.T) + SPD_EPS * np.eye(4), atol=1e-14)


def test_rolling_covariance_errors():
    with pytest.raises(InvalidArgumentError):
        rolling_covariance(np.ones((10, 2)), 20)
    with pytest.raises(InvalidArgumentError):
        rolling_covariance(np.ones((10, 2)), 1)
    with pytest.raises(DataError):
        rolling_covariance(np.full((10, 2), np.nan), 5)


def test_series_csv_and_returns(tmp_path):
    path = _write(tmp_path / "p.csv", "date,a,b\nd0,100,50\nd1,110,50\nd2,99,25\n")
    stamps, values, names = read_series_csv(path)
    assert stamps == ["d0", "d1", "d2"] and names == ["a", "b"]
    rets, rstamps = log_returns(values, stamps)
    np.testing.assert_allclose(rets, [[math.log(1.1), 0], [math.log(0.9), math.log(0.5)]])
    assert rstamps == ["d1", "d2"]
    with pytest.raises(DataError):
        log_returns([[1.0], [0.0]])


# --- metrics --------------------------------------------------------------------------------

def test_knn_accuracy_examples():
    rng = np.random.default_rng(3)
    coords = rng.standard_normal((40, 2))
    assert knn_label_accuracy(coords, np.zeros(40, dtype=int), 5) == 1.0
    clusters = np.vstack([rng.standard_normal((20, 2)), rng.standard_normal((20, 2)) + 50])
    assert knn_label_accuracy(clusters, np.repeat([0, 1], 20), 1) == 1.0


def test_knn_accuracy_random_labels():
    rng = np.random.default_rng(4)
    coords = rng.standard_normal((4000, 2))
    acc = knn_label_accuracy(coords, rng.integers(0, 2, 4000), 10)
    assert abs(acc - 0.5) < 0.05


def test_knn_accuracy_vote_tie_goes_to_smaller_label():
    coords = np.array([[0.0], [1.0], [-1.0], [10.0]])
    # point 0 sees labels {7, 3}: tie resolved to 3
    assert knn_label_accuracy(coords, [3, 7, 3, 7], 2) == 0.5
    with pytest.raises(InvalidArgumentError):
        knn_label_accuracy(coords, None, 2)
    with pytest.raises(InvalidArgumentError):
        knn_label_accuracy(coords, [0, 1, 0, 1], 4)


def test_knn_accuracy_uses_sphere_distance():
    # geodesic distance is monotone in chord length, so neighbour sets agree
    rng = np.random.default_rng(10)
    x = rng.standard_normal((200, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    labels = (x[:, 2] > 0).astype(int)
    s2 = ManifoldDescriptor.sphere(3)
    assert knn_label_accuracy(x, labels, 7, s2) == knn_label_accuracy(x, labels, 7)


def test_trustworthiness_examples():
    table = random_table("euclidean", 60, 3, seed=5)
    rot, _ = np.linalg.qr(np.random.default_rng(5).standard_normal((3, 3)))
    assert trustworthiness(table, table.points @ rot.T + 4, 7) == pytest.approx(1.0, abs=1e-15)
    dup = DatasetTable(np.ones((20, 2)), ManifoldDescriptor.euclidean(2))
    assert trustworthiness(dup, np.random.default_rng(0).standard_normal((20, 2)), 5) == 1.0


def test_trustworthiness_matches_rank_oracle_and_sklearn():
    rng = np.random.default_rng(6)
    table = random_table("euclidean", 50, 6, seed=6)
    coords = rng.standard_normal((50, 2))
    got = trustworthiness(table, coords, 5)
    high = pairwise_distances(table.manifold, table.points)
    low = pairwise_distances(ManifoldDescriptor.euclidean(2), coords)
    assert got == pytest.approx(_trust_oracle(high, low, 5), abs=1e-12)
    assert got == pytest.approx(sk_trustworthiness(table.points, coords, n_neighbors=5), abs=1e-12)


def test_trustworthiness_on_manifold_data():
    table = random_table("spd", 40, 2, seed=7)
    coords = np.random.default_rng(7).standard_normal((40, 2))
    high = pairwise_distances(table.manifold, table.points)
    low = pairwise_distances(ManifoldDescriptor.euclidean(2), coords)
    assert trustworthiness(table, coords, 4) == pytest.approx(_trust_oracle(high, low, 4), abs=1e-12)
    with pytest.raises(InvalidArgumentError):
        trustworthiness(table, coords, 21)
    with pytest.raises(InvalidArgumentError):
        trustworthiness(table, coords[:5], 3)


# --- outputs -----------------------------------------------------------------------------------

def test_emit_outputs(tmp_path):
    table = DatasetTable([[0.0, 1.0], [2.0, 3.0]], ManifoldDescriptor.euclidean(2), labels=[1, 0], ids=["a", "b"])
    state = EmbeddingState(np.array([[0.1, 1 / 3], [-2.5, 1e-17]]), np.zeros((2, 2)), kl_history=[1.0, 0.5])
    paths = OutputPaths(str(tmp_path / "c.csv"), str(tmp_path / "c.svg"), str(tmp_path / "kl.csv"))
    emit_outputs(state, table, paths)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "id,label,y1,y2" and len(lines) == 3
    ids, labels, coords = read_coords_csv(paths.coords)
    assert ids == ["a", "b"] and labels.tolist() == [1, 0]
    np.testing.assert_array_equal(coords, state.points)
    assert (tmp_path / "c.svg").read_text().count("<circle") == 2
    assert (tmp_path / "kl.csv").read_text().splitlines() == ["iteration,kl", "0,1.0", "1,0.5"]
    with pytest.raises(InvalidArgumentError):
        emit_outputs(state.points[:1], table, paths)
    with pytest.raises(OSError):
        emit_outputs(state, table, OutputPaths(str(tmp_path / "missing" / "c.csv")))


def test_svg_circle_count(tmp_path):
    coords = np.random.default_rng(8).standard_normal((37, 3))
    table = DatasetTable(np.zeros((37, 1)), ManifoldDescriptor.euclidean(1))
    emit_outputs(coords, table, OutputPaths(str(tmp_path / "c.csv"), str(tmp_path / "c.svg")))
    assert (tmp_path / "c.svg").read_text().count("<circle") == 37


# --- pipeline ---------------------------------------------------------------------------------

def test_run_config_validation():
    with pytest.raises(InvalidArgumentError):
        RunConfig(perplexity=1.5)
    with pytest.raises(InvalidArgumentError):
        RunConfig(target="sphere", family="student-t")
    with pytest.raises(InvalidArgumentError):
        RunConfig(manifold="hyperbolic")
    with pytest.raises(InvalidArgumentError):
        RunConfig(volume_chart="polar")
    with pytest.raises(InvalidArgumentError):
        RunConfig(sparse=True, perplexity=30).check_size(50)
    with pytest.raises(InvalidArgumentError):
        RunConfig.from_dict({"colour": "red"})
    cfg = RunConfig.from_dict({"iters": 20, "exaggeration_iters": 5, "seed": 4, "target": "sphere"})
    assert cfg.optimizer.iters == 20 and cfg.optimizer.seed == 4 and cfg.seed == 4
    assert cfg.target_space().family.value == "vmf"


def test_pipeline_is_deterministic_and_scores():
    rng = np.random.default_rng(9)
    x = np.vstack([rng.standard_normal((30, 4)), rng.standard_normal((30, 4)) + 6])
    table = DatasetTable(x, ManifoldDescriptor.euclidean(4), labels=np.repeat([0, 1], 30))
    cfg = RunConfig(perplexity=10, seed=3, optimizer=OptimizerConfig(iters=200, exaggeration_iters=50))
    a = run_embedding(table, cfg)
    b = run_embedding(table, cfg)
    np.testing.assert_array_equal(a.points, b.points)
    assert knn_label_accuracy(a.points, table.labels, 5) == 1.0
    assert final_kl(table, a.points, cfg) == pytest.approx(a.kl_history[-1], rel=1e-12)

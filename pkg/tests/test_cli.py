import json
import subprocess
import sys

import numpy as np
import pytest

from riesne import DatasetTable, ManifoldDescriptor
from riesne.cli import build_parser, main
from riesne.harness import write_dataset_csv


@pytest.fixture
def blobs_csv(tmp_path):
    rng = np.random.default_rng(0)
    x = np.vstack([rng.standard_normal((25, 3)) + [0, 0, 4], rng.standard_normal((25, 3)) + [4, 0, 0]])
    table = DatasetTable(x, ManifoldDescriptor.euclidean(3), labels=np.repeat([0, 1], 25))
    path = tmp_path / "data.csv"
    write_dataset_csv(table, path)
    return str(path)


def _embed(data, out, *extra):
    return main(["embed", "--input", data, "--output", str(out), "--perplexity", "8",
                 "--iters", "120", *extra])


def test_help_lists_defaults():
    text = build_parser()._subparsers._group_actions[0].choices["embed"].format_help()
    assert "(default: 30.0)" in text and "(default: 1000)" in text and "--volume-chart" in text


def test_embed_is_byte_identical(tmp_path, blobs_csv):
    for name in ("a.csv", "b.csv"):
        assert _embed(blobs_csv, tmp_path / name, "--seed", "7") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert _embed(blobs_csv, tmp_path / "c.csv", "--seed", "8") == 0
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_embed_writes_all_outputs(tmp_path, blobs_csv):
    svg, kl = tmp_path / "e.svg", tmp_path / "kl.csv"
    assert _embed(blobs_csv, tmp_path / "e.csv", "--svg", str(svg), "--kl-history", str(kl),
                  "--target", "sphere") == 0
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "id,label,y1,y2,y3" and len(lines) == 51
    assert svg.read_text().count("<circle") == 50
    assert len(kl.read_text().splitlines()) == 122


def test_eval_prints_json(tmp_path, blobs_csv, capsys):
    out = tmp_path / "e.csv"
    assert _embed(blobs_csv, out) == 0
    capsys.readouterr()
    assert main(["eval", "--input", blobs_csv, "--embedding", str(out), "--k", "5", "--perplexity", "8"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert set(result) == {"knn_accuracy", "trustworthiness", "final_kl"}
    assert result["knn_accuracy"] == 1.0 and 0.5 < result["trustworthiness"] <= 1.0
    assert result["final_kl"] > 0


def test_config_file_and_flag_override(tmp_path, blobs_csv):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"perplexity": 8, "iters": 60, "seed": 5}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["embed", "--input", blobs_csv, "--output", str(a), "--config", str(cfg)]) == 0
    assert main(["embed", "--input", blobs_csv, "--output", str(b), "--perplexity", "8",
                 "--iters", "60", "--seed", "5"]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert main(["embed", "--input", blobs_csv, "--output", str(c), "--config", str(cfg), "--seed", "6"]) == 0
    assert a.read_bytes() != c.read_bytes()


def test_baseline_command(tmp_path, blobs_csv):
    out = tmp_path / "pca.csv"
    assert main(["baseline", "--input", blobs_csv, "--output", str(out), "--dim", "2"]) == 0
    assert len(out.read_text().splitlines()) == 51


def test_ingest_cov_command(tmp_path):
    rng = np.random.default_rng(1)
    prices = 100 * np.exp(np.cumsum(0.01 * rng.standard_normal((40, 3)), axis=0))
    src = tmp_path / "prices.csv"
    src.write_text("date,a,b,c\n" + "".join(f"d{i}," + ",".join(f"{v:.12g}" for v in row) + "\n"
                                            for i, row in enumerate(prices)))
    out = tmp_path / "spd.csv"
    assert main(["ingest-cov", "--input", str(src), "--output", str(out), "--window", "10", "--returns"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "id,x0_0,x0_1,x0_2,x1_1,x1_2,x2_2"
    assert len(lines) == 1 + 30 and lines[1].startswith("d10,")
    emb = tmp_path / "emb.csv"
    assert main(["embed", "--input", str(out), "--manifold", "spd", "--output", str(emb),
                 "--perplexity", "5", "--iters", "30", "--volume-chart", "homogeneous"]) == 0


def test_exit_codes(tmp_path, blobs_csv, capsys):
    assert main(["embed", "--input", blobs_csv]) == 2
    assert main(["embed", "--input", blobs_csv, "--output", "x.csv", "--perplexity", "1"]) == 2
    assert main(["embed", "--input", blobs_csv, "--output", "x.csv", "--target", "sphere",
                 "--family", "student-t"]) == 2
    assert main(["embed", "--input", str(tmp_path / "missing.csv"), "--output", "x.csv"]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n3,oops\n")
    assert main(["embed", "--input", str(bad), "--output", "x.csv"]) == 3
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert main(["embed", "--input", blobs_csv, "--output", "x.csv", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "riesne: error" in err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exit_code(tmp_path, blobs_csv):
    assert _embed(blobs_csv, tmp_path / "x.csv", "--family", "brownian", "--learning-rate", "1e306",
                  "--exaggeration-iters", "0") == 4


def test_console_entry_point(tmp_path, blobs_csv):
    out = tmp_path / "e.csv"
    proc = subprocess.run([sys.executable, "-m", "riesne.cli", "embed", "--input", blobs_csv,
                           "--output", str(out), "--iters", "20", "--perplexity", "8"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()

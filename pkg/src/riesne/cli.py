"""Command-line interface: ``riesne {embed,baseline,eval,ingest-cov}``.

Exit codes: 0 success, 2 invalid arguments, 3 data errors, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .baseline import fit_tangent_pca, transform
from .embedding import OptimizerConfig
from .errors import DataError, InvalidArgumentError, RieSNEError

_FORMATTER = argparse.ArgumentDefaultsHelpFormatter
_DEFAULT_OPT = OptimizerConfig()


def _add_data_args(p):
    p.add_argument("--input", required=True, help="input CSV (header row; optional id/label columns)")
    p.add_argument("--manifold", choices=["euclidean", "sphere", "spd"], default="euclidean",
                   help="manifold the input rows live on")
    p.add_argument("--project", action="store_true", help="project rows onto the manifold instead of rejecting them")


def _add_run_args(p):
    p.add_argument("--config", help="JSON file of run settings; explicit flags override it")
    p.add_argument("--target", choices=["euclidean", "sphere"], default="euclidean",
                   help="embedding space: R^d or the sphere S^d")
    p.add_argument("--family", choices=["student-t", "vmf", "brownian"], default=None,
                   help="low-dimensional similarity; None picks student-t on euclidean, vmf on sphere")
    p.add_argument("--dim", type=int, default=2, help="embedding dimension d (R^d or S^d)")
    p.add_argument("--perplexity", type=float, default=30.0, help="target perplexity of each P row")
    p.add_argument("--sparse", action="store_true", help="kNN-sparse P (floor(3*perplexity) neighbours)")
    p.add_argument("--volume-chart", choices=["entries", "homogeneous"], default="entries",
                   help="H0 volume ratio: matrix-entries chart, or 1 (isometry-invariant volume)")
    p.add_argument("--theta", type=float, default=_DEFAULT_OPT.bh_theta, help="Barnes-Hut threshold")
    p.add_argument("--iters", type=int, default=_DEFAULT_OPT.iters, help="gradient-descent iterations")
    p.add_argument("--learning-rate", type=float, default=_DEFAULT_OPT.learning_rate, help="step size")
    p.add_argument("--exaggeration", type=float, default=_DEFAULT_OPT.exaggeration_factor,
                   help="early-exaggeration factor applied to P")
    p.add_argument("--exaggeration-iters", type=int, default=_DEFAULT_OPT.exaggeration_iters,
                   help="length of the early-exaggeration phase (capped at --iters unless given)")
    p.add_argument("--gradient", choices=["auto", "exact", "bh"], default=_DEFAULT_OPT.gradient,
                   help="auto uses Barnes-Hut for sparse P with student-t on R^2/R^3")
    p.add_argument("--seed", type=int, default=0, help="seed for the VP-tree and the initial embedding")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riesne", description="Riemannian stochastic neighbour embedding.",
                                     formatter_class=_FORMATTER)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed manifold-valued data", formatter_class=_FORMATTER)
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--output", required=True, help="coordinates CSV (id,label,y1..yd)")
    p.add_argument("--svg", help="optional SVG scatter")
    p.add_argument("--kl-history", help="optional CSV of the KL cost per iteration")

    p = sub.add_parser("baseline", help="tangent-space PCA at the intrinsic mean", formatter_class=_FORMATTER)
    _add_data_args(p)
    p.add_argument("--dim", type=int, default=2, help="number of principal components")
    p.add_argument("--output", required=True, help="coordinates CSV (id,label,y1..yd)")
    p.add_argument("--svg", help="optional SVG scatter")

    p = sub.add_parser("eval", help="score an embedding; prints JSON", formatter_class=_FORMATTER)
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--embedding", required=True, help="coordinates CSV to score")
    p.add_argument("--k", type=int, default=10, help="neighbourhood size for both metrics")

    p = sub.add_parser("ingest-cov", help="rolling covariances of a price/return table",
                       formatter_class=_FORMATTER)
    p.add_argument("--input", required=True, help="CSV: timestamp column, then one column per series")
    p.add_argument("--window", type=int, default=20, help="rows per covariance window")
    p.add_argument("--returns", action="store_true", help="use log returns of the input prices")
    p.add_argument("--output", required=True, help="SPD CSV (id + upper-triangle columns)")
    return parser


# flag name -> (RunConfig / OptimizerConfig key)
_FLAG_KEYS = {
    "manifold": "manifold", "project": "project", "target": "target", "family": "family",
    "dim": "dim", "perplexity": "perplexity", "sparse": "sparse", "seed": "seed", "volume_chart": "volume_chart",
    "theta": "bh_theta", "iters": "iters", "learning_rate": "learning_rate",
    "exaggeration": "exaggeration_factor", "exaggeration_iters": "exaggeration_iters",
    "gradient": "gradient",
}


def _run_config(args, parser) -> harness.RunConfig:
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(values, dict):
            raise InvalidArgumentError(f"{args.config}: expected a JSON object")
    required = {"embed": ["--output", "_"], "eval": ["--embedding", "_"]}[args.command]
    sub_defaults = vars(parser.parse_args([args.command, "--input", "_", *required]))
    explicit = set(values)
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag)
        # flags left at their default do not override the config file
        if key not in values or value != sub_defaults[flag]:
            values[key] = value
            if value != sub_defaults[flag]:
                explicit.add(key)
    if "exaggeration_iters" not in explicit:
        # short runs shorten the default early-exaggeration phase
        values["exaggeration_iters"] = min(values["exaggeration_iters"], values["iters"])
    values = {k: v for k, v in values.items() if k not in ("input", "output", "svg", "kl_history")}
    if "family" in values and values["family"] is None:
        del values["family"]
    try:
        return harness.RunConfig.from_dict(values)
    except TypeError as exc:
        raise InvalidArgumentError(str(exc)) from None


def _cmd_embed(args, parser):
    config = _run_config(args, parser)
    table = harness.ingest_csv(args.input, config.manifold, config.project)
    state = harness.run_embedding(table, config)
    harness.emit_outputs(state, table, harness.OutputPaths(args.output, args.svg, args.kl_history))
    return 0


def _cmd_baseline(args, parser):
    table = harness.ingest_csv(args.input, args.manifold, args.project)
    model = fit_tangent_pca(table, args.dim)
    harness.emit_outputs(transform(model, table), table, harness.OutputPaths(args.output, args.svg))
    return 0


def _cmd_eval(args, parser):
    config = _run_config(args, parser)
    table = harness.ingest_csv(args.input, config.manifold, config.project)
    ids, labels, coords = harness.read_coords_csv(args.embedding)
    if len(coords) != table.n:
        raise DataError(f"embedding has {len(coords)} rows, data has {table.n}")
    if list(ids) != list(table.ids):
        raise DataError("embedding ids do not match the input ids in order")
    target = config.target_space()
    if coords.shape[1] != target.dim:
        raise DataError(f"embedding has {coords.shape[1]} columns, target {target.manifold} needs {target.dim}")
    if labels is None:
        labels = table.labels
    acc = None if labels is None else harness.knn_label_accuracy(coords, labels, args.k, target.manifold)
    result = {
        "knn_accuracy": acc,
        "trustworthiness": harness.trustworthiness(table, coords, args.k, target.manifold),
        "final_kl": harness.final_kl(table, coords, config),
    }
    print(json.dumps(result, sort_keys=True))
    return 0


def _cmd_ingest_cov(args, parser):
    stamps, values, _ = harness.read_series_csv(args.input)
    if args.returns:
        values, stamps = harness.log_returns(values, stamps)
    table = harness.rolling_covariance(values, args.window, stamps)
    harness.write_dataset_csv(table, args.output)
    return 0


_COMMANDS = {"embed": _cmd_embed, "baseline": _cmd_baseline, "eval": _cmd_eval, "ingest-cov": _cmd_ingest_cov}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        return _COMMANDS[args.command](args, parser)
    except RieSNEError as exc:
        print(f"riesne: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"riesne: error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"riesne: numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

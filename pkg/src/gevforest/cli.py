"""Command-line interface wiring the library into reproducible workflows:
simulate | fit | predict | cv | benchmark | gof | block-sweep."""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .data import Dataset, make_blocks, read_csv, write_csv
from .evaluate import block_size_sweep, gof_tests, metric_report, pit
from .forest import (
    ForestParams,
    fit_forest,
    similarity_weights_matrix,
    weighted_empirical_quantile,
)
from .gev import gev_quantile
from .pipeline import (
    cross_validate,
    gev_erf_fit,
    gev_erf_fit_blocks,
    load_model,
    save_model,
)
from .simulate import (
    halton_points,
    sample_scenario,
    scenario,
    true_block_max_quantile,
    true_quantile_y,
)

DEFAULT_PENALTY = 0.001
DEFAULT_TAUS = "0.99,0.995,0.999,0.9995"
DEFAULT_PENALTY_GRID = "1e-4,1e-3,5e-3,1e-2,5e-2,1e-1"
DEFAULT_NODE_SIZE_GRID = "5,10,20,50"
DEFAULT_SWEEP_TAUS = "0.9,0.99,0.999"


def _float_list(value) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(tok) for tok in str(value).split(",") if tok.strip()]


def _int_list(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    text = str(value)
    if ":" in text:
        parts = [int(tok) for tok in text.split(":")]
        if len(parts) == 2:
            start, stop = parts
            step = 1
        elif len(parts) == 3:
            start, stop, step = parts
        else:
            raise ValueError(f"cannot parse integer range {value!r}")
        return list(range(start, stop + 1, step))
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _forest_params(args, num_trees_default_ignored=None) -> ForestParams:
    return ForestParams(
        num_trees=args.num_trees,
        min_node_size=args.min_node_size,
        mtry=args.mtry,
        subsample_fraction=args.subsample_fraction,
        honesty=args.honesty,
        split_quantile_levels=tuple(_float_list(args.split_quantile_levels)),
        seed=args.seed,
    )


def _add_forest_args(sp, num_trees_default=2000):
    sp.add_argument("--num-trees", type=int, default=num_trees_default)
    sp.add_argument("--min-node-size", type=int, default=5)
    sp.add_argument("--mtry", type=int, default=None)
    sp.add_argument("--subsample-fraction", type=float, default=0.5)
    sp.add_argument(
        "--honesty", action=argparse.BooleanOptionalAction, default=True
    )
    sp.add_argument("--split-quantile-levels", default="0.1,0.5,0.9")
    sp.add_argument("--seed", type=int, default=0)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec = scenario(args.scenario, args.p)
    ds = sample_scenario(spec, args.n, args.seed)
    table = {name: ds.features[:, j] for j, name in enumerate(ds.feature_names)}
    table["y"] = ds.response
    write_csv(table, args.out)
    sidecar = args.sidecar or f"{args.out}.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(
            {"scenario": args.scenario, "p": args.p, "n": args.n, "seed": args.seed},
            fh,
        )
    print(f"wrote {args.n} rows to {args.out} (sidecar {sidecar})")
    return 0


def cmd_fit(args) -> int:
    ds = read_csv(args.data, args.response_column, _columns_or_none(args))
    model = gev_erf_fit(ds, args.m, _forest_params(args), args.penalty)
    save_model(model, args.out)
    print(
        f"fitted {model.blocks.n_blocks} blocks of size {args.m}: "
        f"shape_anchor={model.shape_anchor:.6f} penalty={model.penalty:g} "
        f"-> {args.out}"
    )
    return 0


def _columns_or_none(args):
    cols = getattr(args, "feature_columns", None)
    if cols in (None, ""):
        return None
    if isinstance(cols, (list, tuple)):
        return list(cols)
    return [c.strip() for c in str(cols).split(",") if c.strip()]


def cmd_predict(args) -> int:
    model = load_model(args.model)
    taus = _float_list(args.tau)
    for tau in taus:
        model._check_tau(tau)
    names = model.blocks.feature_names
    queries = _read_query_matrix(args.queries, names)
    table: dict[str, list] = {name: [] for name in names}
    table.update({"mu": [], "sigma": [], "xi": []})
    for tau in taus:
        table[f"q_{tau:g}"] = []
    if queries.shape[0] > 0:
        params = model.predict_params_batch(queries)
        for row, par in zip(queries, params):
            for j, name in enumerate(names):
                table[name].append(row[j])
            table["mu"].append(par.mu)
            table["sigma"].append(par.sigma)
            table["xi"].append(par.xi)
            for tau in taus:
                table[f"q_{tau:g}"].append(gev_quantile(par, tau))
    write_csv(table, args.out)
    print(f"wrote {queries.shape[0]} prediction rows to {args.out}")
    return 0


def _read_query_matrix(path, feature_names) -> np.ndarray:
    """Query CSV must carry the model's feature columns; empty file is a
    legal request for zero predictions."""
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty") from None
        rows = [row for row in reader if row]
    missing = [c for c in feature_names if c not in header]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    if not rows:
        return np.empty((0, len(feature_names)))
    pos = [header.index(c) for c in feature_names]
    try:
        return np.array([[float(row[j]) for j in pos] for row in rows])
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None


def cmd_cv(args) -> int:
    ds = read_csv(args.data, args.response_column, _columns_or_none(args))
    result = cross_validate(
        ds,
        args.m,
        _forest_params(args),
        _float_list(args.penalty_grid),
        _int_list(args.node_size_grid),
        args.folds,
    )
    table = {
        "penalty": [c.penalty for c in result.table],
        "min_node_size": [c.min_node_size for c in result.table],
        "cv_error": [c.cv_error for c in result.table],
    }
    write_csv(table, args.out)
    print(
        f"best: penalty={result.best.penalty:g} "
        f"min_node_size={result.best.min_node_size} "
        f"(cv_error={result.best.cv_error:.6f}) -> {args.out}"
    )
    return 0


def _truth_fn(oracle: str, spec):
    if oracle == "block-max":
        def fn(X, tau, m):
            return np.array(
                [true_block_max_quantile(spec, x, tau, m) for x in np.atleast_2d(X)]
            )
    elif oracle == "y":
        def fn(X, tau, m):
            return np.array([true_quantile_y(spec, x, tau) for x in np.atleast_2d(X)])
    else:
        raise ValueError(f"unknown oracle {oracle!r}")
    return fn


def run_benchmark(
    scenario_id: int,
    p: int,
    n: int,
    m: int,
    reps: int,
    taus,
    forest_params: ForestParams,
    penalty: float,
    test_points: int,
    seed: int,
    oracle: str = "block-max",
    baseline_data: str = "blocks",
    on_replication=None,
) -> list[dict]:
    """Repeatedly simulate, fit the pipeline plus both forest baselines, and
    score every model against the exact quantile oracle.

    Returns long-format rows keyed by (replication, model, tau), sorted.
    ``on_replication`` (if given) receives each replication's rows as they
    finish, so partial results can be flushed.
    """
    if reps < 1:
        raise ValueError("need at least one replication")
    spec = scenario(scenario_id, p)
    truth = _truth_fn(oracle, spec)
    if baseline_data not in ("blocks", "raw"):
        raise ValueError("baseline_data must be 'blocks' or 'raw'")
    taus = [float(t) for t in taus]
    X_test = halton_points(test_points, p)
    truth_by_tau = {tau: truth(X_test, tau, m) for tau in taus}

    all_rows: list[dict] = []
    for rep in range(reps):
        ds = sample_scenario(spec, n, seed=[seed, rep])
        model = gev_erf_fit(ds, m, forest_params, penalty)
        for tau in taus:
            model._check_tau(tau)

        if baseline_data == "blocks":
            baseline_sample = model.blocks
        else:
            baseline_sample = make_blocks(ds, 1)
        from dataclasses import replace as _replace

        regression_forest = fit_forest(
            baseline_sample, _replace(forest_params, split_mode="regression")
        )
        # The quantile-split baseline shares the pipeline's forest when both
        # train on blocks; otherwise it gets its own quantile forest.
        if baseline_data == "blocks":
            quantile_forest = model.forest
        else:
            quantile_forest = fit_forest(
                baseline_sample, _replace(forest_params, split_mode="quantile")
            )
        w_quant = similarity_weights_matrix(quantile_forest, X_test)
        w_reg = similarity_weights_matrix(regression_forest, X_test)
        params = model.predict_params_batch(X_test)

        rep_rows = []
        for tau in taus:
            target = truth_by_tau[tau]
            preds = {
                "gev": np.array([gev_quantile(par, tau) for par in params]),
                "grf": np.array(
                    [
                        weighted_empirical_quantile(
                            w_quant[i], baseline_sample.maxima, tau
                        )
                        for i in range(test_points)
                    ]
                ),
                "qrf": np.array(
                    [
                        weighted_empirical_quantile(
                            w_reg[i], baseline_sample.maxima, tau
                        )
                        for i in range(test_points)
                    ]
                ),
            }
            for name, pred in preds.items():
                report = metric_report(pred, target)
                rep_rows.append(
                    {
                        "replication": rep,
                        "model": name,
                        "scenario": scenario_id,
                        "p": p,
                        "tau": tau,
                        "log_ise": math.log(report.ise),
                        "mae": report.mae,
                        "medae": report.medae,
                    }
                )
        rep_rows.sort(key=lambda r: (r["replication"], r["model"], r["tau"]))
        if on_replication is not None:
            on_replication(rep_rows)
        all_rows.extend(rep_rows)
    all_rows.sort(key=lambda r: (r["replication"], r["model"], r["tau"]))
    return all_rows


_BENCH_COLUMNS = ("replication", "model", "scenario", "p", "tau", "log_ise", "mae", "medae")


def cmd_benchmark(args) -> int:
    header_written = False

    def flush(rows):
        nonlocal header_written
        import csv as _csv

        mode = "a" if header_written else "w"
        with open(args.out, mode, newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            if not header_written:
                writer.writerow(_BENCH_COLUMNS)
                header_written = True
            for row in rows:
                writer.writerow(
                    [
                        row["replication"],
                        row["model"],
                        row["scenario"],
                        row["p"],
                        format(row["tau"], ".17g"),
                        format(row["log_ise"], ".17g"),
                        format(row["mae"], ".17g"),
                        format(row["medae"], ".17g"),
                    ]
                )

    rows = run_benchmark(
        scenario_id=args.scenario,
        p=args.p,
        n=args.n,
        m=args.m,
        reps=args.reps,
        taus=_float_list(args.tau),
        forest_params=_forest_params(args),
        penalty=args.penalty,
        test_points=args.test_points,
        seed=args.seed,
        oracle=args.oracle,
        baseline_data=args.baseline_data,
        on_replication=flush,
    )
    print(f"wrote {len(rows)} benchmark rows to {args.out}")
    return 0


def cmd_gof(args) -> int:
    ds = read_csv(args.data, args.response_column, _columns_or_none(args))
    blocks = make_blocks(ds, args.m)
    n = blocks.n_blocks
    n_hold = max(1, int(round(args.holdout_fraction * n)))
    if n_hold >= n:
        raise ValueError("holdout fraction leaves no training blocks")
    train = blocks.subset(np.arange(n - n_hold))
    test = blocks.subset(np.arange(n - n_hold, n))
    model = gev_erf_fit_blocks(train, _forest_params(args), args.penalty)
    report = gof_tests(pit(model, test))
    write_csv(
        {
            "n": [report.n],
            "ks_stat": [report.ks_stat],
            "ad_stat": [report.ad_stat],
            "cvm_stat": [report.cvm_stat],
        },
        args.out,
    )
    print(
        f"gof on {report.n} held-out blocks: ks={report.ks_stat:.4f} "
        f"ad={report.ad_stat:.4f} cvm={report.cvm_stat:.4f} -> {args.out}"
    )
    return 0


def cmd_block_sweep(args) -> int:
    spec = scenario(args.scenario, args.p)
    m_grid = _int_list(args.m_grid)
    if not m_grid:
        raise ValueError("block-size grid must be non-empty")
    ds = sample_scenario(spec, args.n, args.seed)
    n_hold = max(1, int(round(args.holdout_fraction * ds.n_rows)))
    if n_hold >= ds.n_rows:
        raise ValueError("holdout fraction leaves no training rows")
    split = ds.n_rows - n_hold
    train = Dataset(ds.features[:split], ds.response[:split], ds.feature_names)
    holdout = Dataset(ds.features[split:], ds.response[split:], ds.feature_names)
    rows = block_size_sweep(
        train,
        m_grid,
        _forest_params(args),
        args.penalty,
        halton_points(args.test_points, args.p),
        _float_list(args.tau),
        _truth_fn(args.oracle, spec),
        holdout,
        max_gof_blocks=args.max_gof_blocks,
    )
    write_csv(
        {
            "m": [r["m"] for r in rows],
            "tau": [r["tau"] for r in rows],
            "log_mise": [r["log_mise"] for r in rows],
            "ks_stat": [r["ks_stat"] for r in rows],
            "ad_stat": [r["ad_stat"] for r in rows],
            "cvm_stat": [r["cvm_stat"] for r in rows],
            "gof_n": [r["gof_n"] for r in rows],
        },
        args.out,
    )
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gevforest",
        description=(
            "Extreme conditional quantile regression: forest-localized GEV "
            "fits on block maxima"
        ),
    )
    parser.add_argument(
        "--config", default=None, help="TOML file of flag defaults (flags override)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="emit a synthetic scenario dataset")
    sp.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3))
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--sidecar", default=None)
    sp.set_defaults(handler=cmd_simulate)

    sp = sub.add_parser("fit", help="fit the model on a CSV dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--response-column", default="y")
    sp.add_argument("--feature-columns", default=None)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--penalty", type=float, default=DEFAULT_PENALTY)
    _add_forest_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(handler=cmd_fit)

    sp = sub.add_parser("predict", help="predict parameters and quantiles")
    sp.add_argument("--model", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--tau", default=DEFAULT_TAUS)
    sp.add_argument("--out", required=True)
    sp.set_defaults(handler=cmd_predict)

    sp = sub.add_parser("cv", help="cross-validate penalty and node size")
    sp.add_argument("--data", required=True)
    sp.add_argument("--response-column", default="y")
    sp.add_argument("--feature-columns", default=None)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--penalty-grid", default=DEFAULT_PENALTY_GRID)
    sp.add_argument("--node-size-grid", default=DEFAULT_NODE_SIZE_GRID)
    sp.add_argument("--folds", type=int, default=5)
    _add_forest_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(handler=cmd_cv)

    sp = sub.add_parser(
        "benchmark", help="simulate, fit all models, score against the oracle"
    )
    sp.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3))
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, default=40)
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--tau", default=DEFAULT_TAUS)
    sp.add_argument("--penalty", type=float, default=DEFAULT_PENALTY)
    sp.add_argument("--test-points", type=int, default=8000)
    sp.add_argument("--oracle", choices=("block-max", "y"), default="block-max")
    sp.add_argument("--baseline-data", choices=("blocks", "raw"), default="blocks")
    _add_forest_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(handler=cmd_benchmark)

    sp = sub.add_parser("gof", help="goodness of fit on held-out block maxima")
    sp.add_argument("--data", required=True)
    sp.add_argument("--response-column", default="y")
    sp.add_argument("--feature-columns", default=None)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--penalty", type=float, default=DEFAULT_PENALTY)
    sp.add_argument("--holdout-fraction", type=float, default=0.3)
    _add_forest_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(handler=cmd_gof)

    sp = sub.add_parser(
        "block-sweep", help="sensitivity of fit quality to the block size"
    )
    sp.add_argument("--scenario", type=int, required=True, choices=(1, 2, 3))
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m-grid", default="10:100:5")
    sp.add_argument("--tau", default=DEFAULT_SWEEP_TAUS)
    sp.add_argument("--penalty", type=float, default=DEFAULT_PENALTY)
    sp.add_argument("--test-points", type=int, default=200)
    sp.add_argument("--holdout-fraction", type=float, default=0.3)
    sp.add_argument("--max-gof-blocks", type=int, default=None)
    sp.add_argument("--oracle", choices=("block-max", "y"), default="block-max")
    _add_forest_args(sp, num_trees_default=500)
    sp.add_argument("--out", required=True)
    sp.set_defaults(handler=cmd_block_sweep)

    return parser


def _apply_config(parser: argparse.ArgumentParser, path: str) -> None:
    with open(path, "rb") as fh:
        config = tomllib.load(fh)
    flat = {}
    for key, value in config.items():
        flat[str(key).replace("-", "_")] = value
    parser.set_defaults(**flat)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        try:
            _apply_config(parser, known.config)
        except OSError as err:
            print(f"error: cannot read config: {err}", file=sys.stderr)
            return 2
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, OSError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

"""Command-line interface: explore, estimate, simulate, diagnose.

Every run emits a machine-readable document (JSON by default, CSV on
request) that embeds the fully resolved configuration for provenance.
Outputs are deterministic: the same configuration and seed produce
byte-identical files.  Exit codes: 0 success, 1 config/input error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from .data import Window, cell_counts, load_dataset, window
from .errors import (
    DataError,
    DgpOverflowError,
    EmptyArmError,
    SamplerError,
    UnidentifiedError,
)
from .explore import explore
from .freq import balke_pearl_bounds, first_stage_f, gmm_msmm
from .mcmc import SamplerConfig
from .models import KNOWN_TAGS, ModelSpec, fit_bayes
from .simlab import (
    CSV_COLUMNS,
    DEFAULT_BANDWIDTHS,
    EstimatorSpec,
    ScenarioSpec,
    run_grid,
    scenario_grid,
)

VALID_ESTIMATORS = ("gmm",) + KNOWN_TAGS


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: A003 - argparse API
        raise DataError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="rdrisk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p: _Parser, needs_input: bool = True) -> None:
        if needs_input:
            p.add_argument("--input", required=True, help="delimited text file")
            p.add_argument("--col-x", default="x", help="column holding the risk score")
            p.add_argument("--col-t", default="t", help="column holding the treatment")
            p.add_argument("--col-y", default="y", help="column holding the outcome")
            p.add_argument("--delimiter", default=",")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, default=0)

    def add_window(p: _Parser) -> None:
        p.add_argument("--threshold", type=float, default=0.2)
        p.add_argument(
            "--bandwidths", type=float, nargs="+", default=list(DEFAULT_BANDWIDTHS)
        )

    def add_sampler(p: _Parser) -> None:
        p.add_argument("--chains", type=int, default=2)
        p.add_argument("--burnin", type=int, default=10_000)
        p.add_argument("--iters", type=int, default=50_000)
        p.add_argument("--retain", type=int, default=1_000)
        p.add_argument("--init-scale", type=float, default=0.25)

    def add_models(p: _Parser, default: list[str]) -> None:
        p.add_argument("--models", nargs="+", default=default,
                       help=f"estimator tags among: {', '.join(VALID_ESTIMATORS)}")
        p.add_argument("--constrained", action="store_true",
                       help="use constrained variants of the Bayesian models")
        p.add_argument("--bootstrap", type=int, default=2000,
                       help="bootstrap replicates for gmm intervals")

    p_explore = sub.add_parser("explore", help="binned means and spline curves")
    add_io(p_explore)
    p_explore.add_argument("--range", type=float, nargs=2, default=[0.1, 0.3])
    p_explore.add_argument("--bins", type=int, default=20)
    p_explore.add_argument("--stiffness", type=float, default=None,
                           help="spline penalty; omit for cross-validated choice")
    p_explore.add_argument("--threshold", type=float, default=0.2)
    p_explore.add_argument("--grid-points", type=int, default=100)

    p_est = sub.add_parser("estimate", help="treated risk ratio per bandwidth/model")
    add_io(p_est)
    add_window(p_est)
    add_models(p_est, default=["pois.flex", "pois.pois", "pois.prod.flex", "gmm"])
    add_sampler(p_est)

    p_sim = sub.add_parser("simulate", help="replication study over scenarios")
    add_io(p_sim, needs_input=False)
    p_sim.add_argument("--iv", choices=("weak", "strong"), default="strong")
    p_sim.add_argument("--confounding", choices=("low", "high"), default="low")
    p_sim.add_argument("--effect", choices=("none", "low", "high"), default="high")
    p_sim.add_argument("--all-scenarios", action="store_true")
    p_sim.add_argument("--scenario-file", default=None,
                       help="JSON list of scenario objects")
    p_sim.add_argument("--n", type=int, default=10_000)
    p_sim.add_argument("--replications", type=int, default=100)
    p_sim.add_argument("--bandwidths", type=float, nargs="+",
                       default=list(DEFAULT_BANDWIDTHS))
    add_models(p_sim, default=["pois.flex", "gmm"])
    add_sampler(p_sim)

    p_diag = sub.add_parser("diagnose", help="instrument strength and bounds")
    add_io(p_diag)
    add_window(p_diag)
    return parser


def _estimators(args: argparse.Namespace) -> list[EstimatorSpec]:
    specs = []
    for tag in args.models:
        if tag not in VALID_ESTIMATORS:
            raise DataError(
                f"unknown estimator tag {tag!r}; valid tags: {', '.join(VALID_ESTIMATORS)}"
            )
        constrained = args.constrained and tag != "gmm"
        specs.append(EstimatorSpec(tag=tag, constrained=constrained))
    return specs


def _sampler_config(args: argparse.Namespace) -> SamplerConfig:
    try:
        return SamplerConfig(
            chains=args.chains,
            burnin=args.burnin,
            iterations=args.iters,
            retained=args.retain,
            seed=args.seed,
            initial_scale=args.init_scale,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _config_dict(args: argparse.Namespace) -> dict:
    resolved = {k: v for k, v in vars(args).items() if k != "command"}
    resolved["subcommand"] = args.command
    return resolved


def _load(args: argparse.Namespace) -> list:
    columns = {"x": args.col_x, "t": args.col_t, "y": args.col_y}
    return load_dataset(args.input, columns=columns, delimiter=args.delimiter)


def _cmd_explore(args: argparse.Namespace) -> tuple[dict, list[dict]]:
    data = _load(args)
    summary = explore(
        data,
        x_range=(args.range[0], args.range[1]),
        bins=args.bins,
        stiffness=args.stiffness,
        threshold=args.threshold,
        grid_points=args.grid_points,
    )
    doc = {
        "config": _config_dict(args),
        "bins": summary.to_rows(),
        "splines": summary.spline_payload(),
        "warnings": list(summary.warnings),
    }
    return doc, summary.to_rows()


def _cmd_estimate(args: argparse.Namespace) -> tuple[dict, list[dict]]:
    data = _load(args)
    estimators = sorted(_estimators(args), key=lambda e: e.label)
    sampler = _sampler_config(args)

    results = []
    windows = []
    for h in sorted(args.bandwidths):
        try:
            ws = window(data, Window(h=h, x0=args.threshold))
        except EmptyArmError:
            for est in estimators:
                results.append(_cell(h, est.label, status="unavailable: empty arm"))
            windows.append({"bandwidth": h, "n1": None, "n0": None})
            continue
        windows.append({"bandwidth": h, "n1": ws.n1, "n0": ws.n0})
        for est in estimators:
            try:
                if est.tag == "gmm":
                    fit = gmm_msmm(ws, b=args.bootstrap, seed=args.seed)
                    results.append(_cell(
                        h, est.label, mean=fit.rrt, l95=fit.l95, u95=fit.u95,
                        n1=ws.n1, n0=ws.n0,
                        warnings=[f"{fit.n_failed} bootstrap replicates discarded"]
                        if fit.n_failed else [],
                    ))
                else:
                    model = ModelSpec.from_tag(est.tag, constrained=est.constrained)
                    estimate, _ = fit_bayes(ws, model, sampler, h=h)
                    results.append(_cell(
                        h, est.label, mean=estimate.mean, median=estimate.median,
                        l95=estimate.l95, u95=estimate.u95, n1=ws.n1, n0=ws.n0,
                        rhat_max=estimate.rhat_max,
                        warnings=list(estimate.warnings),
                    ))
            except (UnidentifiedError, SamplerError) as exc:
                results.append(_cell(h, est.label, status=f"unavailable: {exc}",
                                     n1=ws.n1, n0=ws.n0))
    doc = {
        "config": _config_dict(args),
        "results": results,
        "diagnostics": {"windows": windows},
    }
    return doc, results


def _cell(h: float, estimator: str, status: str = "ok", mean=None, median=None,
          l95=None, u95=None, n1=None, n0=None, rhat_max=None,
          warnings: list | None = None) -> dict:
    return {
        "bandwidth": h,
        "estimator": estimator,
        "status": status,
        "mean": mean,
        "median": median,
        "l95": l95,
        "u95": u95,
        "n1": n1,
        "n0": n0,
        "rhat_max": rhat_max,
        "warnings": warnings or [],
    }


def _scenarios_from_args(args: argparse.Namespace) -> list[ScenarioSpec]:
    common = dict(
        n=args.n,
        bandwidths=tuple(args.bandwidths),
        replications=args.replications,
        seed=args.seed,
    )
    if args.scenario_file:
        raw = json.loads(Path(args.scenario_file).read_text())
        if not isinstance(raw, list):
            raise DataError("scenario file must hold a JSON list of objects")
        specs = []
        for entry in raw:
            merged = dict(common)
            merged.update(entry)
            specs.append(ScenarioSpec(**merged))
        return specs
    if args.all_scenarios:
        return scenario_grid(**common)
    return [
        ScenarioSpec(
            instrument=args.iv, confounding=args.confounding, effect=args.effect,
            **common,
        )
    ]


def _cmd_simulate(args: argparse.Namespace) -> tuple[dict, list[dict]]:
    estimators = sorted(_estimators(args), key=lambda e: e.label)
    sampler = _sampler_config(args)
    cells = []
    for spec in _scenarios_from_args(args):
        report = run_grid(spec, estimators, sampler=sampler, gmm_boot=args.bootstrap)
        cells.extend(c.to_dict() for c in report.cells)
    doc = {"config": _config_dict(args), "results": cells}
    return doc, cells


def _cmd_diagnose(args: argparse.Namespace) -> tuple[dict, list[dict]]:
    data = _load(args)
    blocks = []
    rows = []
    for h in sorted(args.bandwidths):
        try:
            ws = window(data, Window(h=h, x0=args.threshold))
        except EmptyArmError:
            blocks.append({"bandwidth": h, "status": "unavailable: empty arm"})
            rows.append({"bandwidth": h, "status": "unavailable: empty arm"})
            continue
        cells = cell_counts(ws)
        ftest = first_stage_f(ws)
        bounds = balke_pearl_bounds(ws)
        block = {
            "bandwidth": h,
            "status": "ok",
            "n1": ws.n1,
            "n0": ws.n0,
            "f_test": {"f": ftest.f, "df1": ftest.df1, "df2": ftest.df2, "p": ftest.p},
            "bounds": {
                "lower": bounds.lower,
                "upper": bounds.upper,
                "width": bounds.width,
                "inequality_violated": bounds.inequality_violated,
            },
            "cells": {
                "z0": cells.counts[0].tolist(),
                "z1": cells.counts[1].tolist(),
                "mean_y": [cells.mean_y(0), cells.mean_y(1)],
                "mean_t": [cells.mean_t(0), cells.mean_t(1)],
                "mean_y_tbar": [cells.mean_y_tbar(0), cells.mean_y_tbar(1)],
            },
        }
        blocks.append(block)
        rows.append({
            "bandwidth": h, "status": "ok", "n1": ws.n1, "n0": ws.n0,
            "f": ftest.f, "p": ftest.p,
            "bound_lower": bounds.lower, "bound_upper": bounds.upper,
            "inequality_violated": bounds.inequality_violated,
        })
    doc = {"config": _config_dict(args), "diagnostics": blocks}
    return doc, rows


def _emit(doc: dict, rows: list[dict], args: argparse.Namespace) -> None:
    if args.format == "json":
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        buffer = io.StringIO()
        buffer.write("# config: " + json.dumps(_config_dict(args), sort_keys=True) + "\n")
        if rows:
            columns = (
                CSV_COLUMNS
                if args.command == "simulate"
                else sorted({k for row in rows for k in row})
            )
            flat = [
                {k: ";".join(v) if isinstance(v, list) else v for k, v in row.items()}
                for row in rows
            ]
            writer = csv.DictWriter(buffer, fieldnames=columns, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(flat)
        if args.command == "explore":
            buffer.write("# splines: " + json.dumps(doc["splines"], sort_keys=True) + "\n")
        text = buffer.getvalue()

    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


_COMMANDS = {
    "explore": _cmd_explore,
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "diagnose": _cmd_diagnose,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        doc, rows = _COMMANDS[args.command](args)
        _emit(doc, rows, args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UnidentifiedError, SamplerError, DgpOverflowError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(main())

"""Batch command-line interface.

Subcommands: simulate, estimate, realize, refine, bfr, montecarlo.  Models
are JSON files, datasets CSV, tables JSON; see the README for the schemas.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .cra import CraConfig, estimate_table_cra
from .em import EmConfig, em_refine
from .fir import estimate_table_fir
from .gb import GbConfig, gb_refine
from .harness import ExperimentSpec, run_montecarlo, summarize
from .markov import SubMarkovTable
from .metrics import bfr as bfr_metric
from .models import DataSet, LpvSsModel, simulate
from .realization import (SelectionBasis, assemble_hankel, greedy_selection,
                          realize_svd, required_keys)


def _cmd_simulate(args):
    model = LpvSsModel.load(args.model)
    data = DataSet.from_csv(args.data)
    out = simulate(model, data.u, data.p, seed=args.seed)
    out.to_csv(args.out)
    return 0


def _cmd_estimate(args):
    data = DataSet.from_csv(args.data)
    basis = _basis_for(data)
    if args.method == "fir":
        table = estimate_table_fir(data, basis, args.nh)
    else:
        if not args.selection:
            raise SystemExit("cra estimation needs --selection to know "
                             "which keys to target")
        with open(args.selection) as fh:
            sel = SelectionBasis.from_json(json.load(fh))
        keys = required_keys(sel, basis.npsi)
        table = estimate_table_cra(data, basis, CraConfig(keys=tuple(keys)))
    table.save(args.out)
    return 0


def _basis_for(data: DataSet):
    from .models import BasisFunctionSet
    return BasisFunctionSet.poly_linear(data.p.shape[1])


def _cmd_realize(args):
    table = SubMarkovTable.load(args.table)
    order = "auto" if args.order == "auto" else int(args.order)
    if args.selection == "greedy":
        sel = greedy_selection(table, 1 if order == "auto" else order,
                               args.no, args.nr, max_depth=1)
    else:
        with open(args.selection) as fh:
            sel = SelectionBasis.from_json(json.load(fh))
    blocks = assemble_hankel(table, sel)
    model, sv = realize_svd(blocks, order=order)
    model.save(args.out)
    if args.verbose:
        print("singular values:", np.array2string(sv, precision=3))
    return 0


def _cmd_refine(args):
    model = LpvSsModel.load(args.model)
    data = DataSet.from_csv(args.data)
    if args.algorithm == "em":
        refined, trace = em_refine(model, data,
                                   EmConfig(max_iter=args.max_iter))
        trace_rows = [[i, ll] for i, ll in enumerate(trace)]
    else:
        refined, result = gb_refine(model, data,
                                    GbConfig(max_iter=args.max_iter))
        trace_rows = [[i, c] for i, c in enumerate(result.costs)]
        if result.stalled:
            print("warning: line search stalled; returned best iterate",
                  file=sys.stderr)
    refined.save(args.out)
    if args.trace:
        np.savetxt(args.trace, np.array(trace_rows), delimiter=",",
                   header="iter,value", comments="")
    return 0


def _cmd_bfr(args):
    ref = DataSet.from_csv(args.reference)
    est = DataSet.from_csv(args.estimate)
    ref_y = ref.yd if (args.against == "yd" and ref.yd is not None) else ref.y
    print(f"{bfr_metric(ref_y, est.y):.4f}")
    return 0


def _cmd_montecarlo(args):
    with open(args.config) as fh:
        spec = ExperimentSpec.from_json(json.load(fh))
    results = run_montecarlo(spec)
    print(summarize(results, spec))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpvss",
        description="LPV state-space identification: correlation/FIR "
                    "estimation, Ho-Kalman realization, EM/Gauss-Newton "
                    "refinement")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a model along u, p from "
                                        "a CSV dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV providing u and p")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="estimate a sub-Markov table")
    p.add_argument("--method", choices=["cra", "fir"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--nh", type=int, default=2)
    p.add_argument("--selection", help="selection JSON (cra target keys)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("realize", help="Ho-Kalman realization from a table")
    p.add_argument("--table", required=True)
    p.add_argument("--selection", default="greedy",
                   help="selection JSON path or 'greedy'")
    p.add_argument("--order", default="auto")
    p.add_argument("--no", type=int, default=10)
    p.add_argument("--nr", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_realize)

    p = sub.add_parser("refine", help="refine a model by EM or Gauss-Newton")
    p.add_argument("algorithm", choices=["em", "gb"])
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--max-iter", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("bfr", help="best fit rate between two datasets")
    p.add_argument("--reference", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--against", choices=["y", "yd"], default="y")
    p.set_defaults(func=_cmd_bfr)

    p = sub.add_parser("montecarlo", help="run the Monte-Carlo benchmark")
    p.add_argument("--config", required=True, help="ExperimentSpec JSON")
    p.set_defaults(func=_cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

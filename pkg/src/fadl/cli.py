"""Command line front end.

Four subcommands:

  train       run one method on a dataset (file or synthetic) and write metrics
  compare     run the surrogate method and the distributed Newton baseline on
              the same instance and report communication passes to a target gap
  cost-sweep  evaluate the closed-form cost model over the built-in benchmark
              shapes
  verify      run the independent-oracle property checks

Options may come from a config file (``--config``) holding ``key = value``
lines; explicit command line flags win over the file, the file wins over
defaults.  Exit code 0 means success/converged, 2 means the run finished
without meeting its goal, 1 means a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .approx import ApproxFamily
from .comm_cost import BENCHMARK_DIMS, CostParams, consistency_check, fadl_faster, total_cost
from .data_io import (
    PartitionScheme,
    parse_libsvm,
    synth_classification,
    write_metrics,
    write_metrics_table,
)
from .engine import Method, RunConfig, run, solve_reference
from .linesearch import LineSearchConfig
from .local_opt import InnerConfig, InnerMethod
from .losses import LossKind
from .objective import Objective
from .verify import PROPERTY_NAMES, run_properties

log = logging.getLogger("fadl")

_LOSS_NAMES = {
    "logistic": LossKind.LOGISTIC,
    "least-squares": LossKind.LEAST_SQUARES,
    "squared-hinge": LossKind.SQUARED_HINGE,
}
_FAMILY_NAMES = {f.value: f for f in ApproxFamily}
_METHOD_NAMES = {m.value: m for m in Method}
_INNER_NAMES = {m.value: m for m in InnerMethod}

_DEFAULTS = {
    "loss": "logistic",
    "lam": 1e-3,
    "method": "fadl",
    "family": "quadratic",
    "nodes": 4,
    "inner_method": "tron",
    "khat": 10,
    "eps_g": 1e-4,
    "max_outer": 200,
    "alpha": 1e-4,
    "beta": 0.9,
    "combine": "uniform",
    "partition": "round-robin",
    "seed": 0,
    "feature_skew": 0.0,
    "row_normalize": False,
    "backend": "sequential",
    "workers": None,
    "warm_start": "zero",
    "gamma": 100.0,
    "theory_mode": False,
    "rel_gap": 1e-4,
    "t_outer_fadl": 10.0,
    "outer_ratio": 3.0,
}


def _parse_scalar(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _read_config_file(path: str) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            dest = key.strip().replace("-", "_").replace(".", "_")
            out[dest] = _parse_scalar(value.strip())
    return out


def _merge_options(args: argparse.Namespace) -> dict:
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        file_opts = _read_config_file(args.config)
        unknown = set(file_opts) - set(_DEFAULTS)
        if unknown:
            raise SystemExit(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(file_opts)
    for dest in _DEFAULTS:
        value = getattr(args, dest, None)
        if value is not None:
            merged[dest] = value
    return merged


def _parse_synth(spec: str, seed: int, feature_skew: float, row_normalize: bool):
    fields = {"n": 2000, "m": 200, "density": 0.05, "separability": 0.95}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise SystemExit(f"bad synth field {part!r}; use n=...,m=...,density=...")
        key, value = part.split("=", 1)
        key = key.strip()
        if key not in fields:
            raise SystemExit(f"unknown synth field {key!r}")
        fields[key] = _parse_scalar(value.strip())
    ds, _ = synth_classification(
        int(fields["n"]),
        int(fields["m"]),
        float(fields["density"]),
        float(fields["separability"]),
        seed=seed,
        feature_skew=feature_skew,
        row_normalize=row_normalize,
    )
    return ds


def _load_dataset(args, opts):
    if getattr(args, "data", None):
        log.info("reading %s", args.data)
        return parse_libsvm(args.data)
    if getattr(args, "synth", None):
        return _parse_synth(
            args.synth,
            seed=int(opts["seed"]),
            feature_skew=float(opts["feature_skew"]),
            row_normalize=bool(opts["row_normalize"]),
        )
    raise SystemExit("one of --data or --synth is required")


def _build_config(opts, method, run_id, f_star=None) -> RunConfig:
    try:
        family = _FAMILY_NAMES[opts["family"]]
        loss_check = _LOSS_NAMES[opts["loss"]]  # validated here, used by caller
        inner_method = _INNER_NAMES[opts["inner_method"]]
    except KeyError as exc:
        raise SystemExit(f"unknown option value: {exc}") from None
    del loss_check
    scheme = {
        "round-robin": PartitionScheme.ROUND_ROBIN,
        "shuffled": PartitionScheme.SHUFFLED,
    }.get(opts["partition"])
    if scheme is None:
        raise SystemExit(f"unknown partition scheme {opts['partition']!r}")
    workers = opts["workers"]
    return RunConfig(
        method=method,
        family=family,
        nodes=int(opts["nodes"]),
        eps_g=float(opts["eps_g"]),
        max_outer=int(opts["max_outer"]),
        inner=InnerConfig(method=inner_method, budget=int(opts["khat"])),
        linesearch=LineSearchConfig(alpha=float(opts["alpha"]), beta=float(opts["beta"])),
        combine=opts["combine"],
        partition_scheme=scheme,
        seed=int(opts["seed"]),
        backend=opts["backend"],
        max_workers=None if workers is None else int(workers),
        warm_start=opts["warm_start"],
        theory_mode=bool(opts["theory_mode"]),
        gamma=float(opts["gamma"]),
        run_id=run_id,
        f_star=f_star,
    )


def _emit_metrics(result, args):
    if getattr(args, "metrics", None):
        write_metrics(result.records, args.metrics)
        log.info("wrote %d metric rows to %s", len(result.records), args.metrics)
    if getattr(args, "table", None):
        write_metrics_table(result.records, args.table)
        log.info("wrote table to %s", args.table)


def _cmd_train(args) -> int:
    opts = _merge_options(args)
    ds = _load_dataset(args, opts)
    obj = Objective(ds, _LOSS_NAMES[opts["loss"]], float(opts["lam"]))
    method = _METHOD_NAMES.get(opts["method"])
    if method is None:
        raise SystemExit(f"unknown method {opts['method']!r}")
    config = _build_config(opts, method, run_id=args.run_id)
    log.info(
        "training: method=%s family=%s nodes=%d n=%d m=%d nnz=%d",
        method.value, config.family.value, config.nodes,
        ds.n_examples, ds.n_features, ds.nnz,
    )
    result = run(obj, config)
    _emit_metrics(result, args)
    last = result.records[-1]
    print(
        f"status={result.status} outer={last.outer_iter} f={last.f:.10e} "
        f"grad_norm={last.grad_norm:.3e} comm_passes={last.comm_passes} "
        f"cost_units={last.cost_units:.1f}"
    )
    return 0 if result.converged else 2


def _cmd_compare(args) -> int:
    opts = _merge_options(args)
    ds = _load_dataset(args, opts)
    obj = Objective(ds, _LOSS_NAMES[opts["loss"]], float(opts["lam"]))
    target = float(opts["rel_gap"])
    log.info("computing reference optimum (tight trust-region solve)")
    _, f_star = solve_reference(obj)
    log.info("reference value %.12e", f_star)

    rows = []
    ok = True
    for method in (Method.FADL, Method.SQM):
        config = _build_config(opts, method, run_id=f"{args.run_id}-{method.value}",
                               f_star=f_star)
        result = run(obj, config)
        reached = None
        for rec in result.records:
            if rec.rel_gap is not None and rec.rel_gap <= target:
                reached = rec
                break
        if reached is None:
            ok = False
            rows.append((method.value, None, result.records[-1].comm_passes,
                         result.status))
        else:
            rows.append((method.value, reached.outer_iter, reached.comm_passes,
                         result.status))
        _emit_metrics(result, args) if method is Method.FADL else None
    print(f"target relative gap: {target:g}")
    for name, outer, passes, status in rows:
        where = "not reached" if outer is None else f"outer={outer}"
        print(f"{name:6s} comm_passes={passes:<8d} {where} status={status}")
    if ok and rows[0][2] > 0:
        print(f"comm ratio sqm/fadl: {rows[1][2] / rows[0][2]:.3f}")
    return 0 if ok else 2


def _cmd_cost_sweep(args) -> int:
    opts = _merge_options(args)
    nodes = int(opts["nodes"])
    khat = int(opts["khat"])
    gammas = [float(g) for g in (args.gammas or [100.0, 1000.0])]
    header = (
        f"{'dataset':10s} {'gamma':>7s} {'nnz/m':>12s} {'threshold':>10s} "
        f"{'faster':>7s} {'cost_fadl':>14s} {'cost_sqm':>14s} {'status':>13s}"
    )
    print(header)
    for name, (nz, m) in BENCHMARK_DIMS.items():
        for gamma in gammas:
            pred = fadl_faster(nz, m, gamma, nodes, khat)
            report = consistency_check(
                nz, m, gamma, nodes, khat,
                t_outer_fadl=float(opts["t_outer_fadl"]),
                outer_ratio=float(opts["outer_ratio"]),
            )
            print(
                f"{name:10s} {gamma:7.0f} {nz / m:12.2f} "
                f"{gamma * nodes / (2 * khat):10.2f} {str(pred):>7s} "
                f"{report.cost_fadl:14.4g} {report.cost_sqm:14.4g} "
                f"{report.status:>13s}"
            )
    return 0


def _cmd_verify(args) -> int:
    names = args.properties or None
    if names:
        bad = set(names) - set(PROPERTY_NAMES)
        if bad:
            raise SystemExit(
                f"unknown properties: {', '.join(sorted(bad))}; "
                f"available: {', '.join(PROPERTY_NAMES)}"
            )
    results = run_properties(names)
    all_ok = True
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"[{tag}] {res.name}: {res.detail}")
        all_ok = all_ok and res.passed
    return 0 if all_ok else 2


def _add_common(parser):
    parser.add_argument("--config", help="file of key = value option lines")
    parser.add_argument("--data", help="path to a file in svmlight/libsvm format")
    parser.add_argument("--synth",
                        help="synthetic instance, e.g. n=5000,m=1000,density=0.01")
    parser.add_argument("--loss", choices=sorted(_LOSS_NAMES))
    parser.add_argument("--lam", type=float, help="l2 regularization weight")
    parser.add_argument("--family", choices=sorted(_FAMILY_NAMES))
    parser.add_argument("--nodes", type=int)
    parser.add_argument("--inner-method", choices=sorted(_INNER_NAMES))
    parser.add_argument("--khat", type=int, help="inner iteration budget")
    parser.add_argument("--eps-g", type=float, help="relative gradient-norm stop")
    parser.add_argument("--max-outer", type=int)
    parser.add_argument("--alpha", type=float, help="sufficient-decrease constant")
    parser.add_argument("--beta", type=float, help="curvature constant")
    parser.add_argument("--combine", choices=["uniform", "sizes"])
    parser.add_argument("--partition", choices=["round-robin", "shuffled"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--feature-skew", type=float,
                        help="power-law exponent for synthetic feature supports")
    parser.add_argument("--row-normalize", action="store_const", const=True,
                        help="scale synthetic rows to unit length")
    parser.add_argument("--backend", choices=["sequential", "threads"])
    parser.add_argument("--workers", type=int)
    parser.add_argument("--warm-start", choices=["zero", "average"])
    parser.add_argument("--gamma", type=float,
                        help="relative cost of one vector reduction")
    parser.add_argument("--theory-mode", action="store_const", const=True)
    parser.add_argument("--metrics", help="write NDJSON metric rows here")
    parser.add_argument("--table", help="write a TSV metric table here")
    parser.add_argument("--run-id", default="run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fadl",
        description="distributed training of l2-regularized linear classifiers "
                    "via local function approximation",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one method on one instance")
    _add_common(p_train)
    p_train.add_argument("--method", choices=sorted(_METHOD_NAMES))
    p_train.set_defaults(fn=_cmd_train)

    p_cmp = sub.add_parser("compare",
                           help="surrogate method vs distributed Newton baseline")
    _add_common(p_cmp)
    p_cmp.add_argument("--rel-gap", type=float,
                       help="relative optimality gap both runs must reach")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_cost = sub.add_parser("cost-sweep", help="closed-form cost model table")
    p_cost.add_argument("--config", help="file of key = value option lines")
    p_cost.add_argument("--nodes", type=int)
    p_cost.add_argument("--khat", type=int)
    p_cost.add_argument("--gammas", type=float, nargs="*")
    p_cost.add_argument("--t-outer-fadl", type=float)
    p_cost.add_argument("--outer-ratio", type=float)
    p_cost.set_defaults(fn=_cmd_cost_sweep)

    p_ver = sub.add_parser("verify", help="independent-oracle property checks")
    p_ver.add_argument("properties", nargs="*",
                       help=f"subset of: {', '.join(PROPERTY_NAMES)}")
    p_ver.set_defaults(fn=_cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    np.seterr(over="ignore")
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())

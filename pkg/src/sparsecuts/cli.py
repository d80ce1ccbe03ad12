"""Command-line surface: instance generation, bound computation,
cutting-plane runs, strategy comparison, global solves and report
aggregation.

Exit codes: 0 success, 1 user error (bad flags, unreadable or malformed
files), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import backend as be
from . import bnb, driver, report
from .instances import (
    GeneratorConfig,
    SchemaViolationError,
    UnsupportedFeatureError,
    generate_boxqcqp,
    load_instance,
    write_json,
)
from .model import SupportMismatchError, build_support_set
from .relaxation import build_e_lp, build_shor_sdp
from .separation import CertificateError, cuts_from_json, cuts_to_json


class UserError(ValueError):
    pass


def _resolve_cone(arg: str, nonneg: bool) -> str:
    if arg == "epsd":
        return driver.CONE_EPSD
    if arg == "ednn":
        if not nonneg:
            raise UserError("--cone ednn requires a nonnegative instance box")
        return driver.CONE_EDNN_IF_NONNEG
    return driver.CONE_EDNN_IF_NONNEG  # auto


def _limits(args) -> driver.RunLimits:
    return driver.RunLimits(
        time=args.time_limit, max_iters=args.max_iters, gc_target=args.gc_target
    )


def cmd_generate(args) -> int:
    cfg = GeneratorConfig.from_index(args.n, args.rho, args.qc, args.seed)
    instance = generate_boxqcqp(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{instance.name}.json"
    path.write_bytes(write_json(instance))
    print(path)
    return 0


def cmd_solve_sdp(args) -> int:
    instance = load_instance(args.instance)
    dnn = args.cone == "ednn" or (args.cone == "auto" and instance.nonneg)
    if args.cone == "ednn" and not instance.nonneg:
        raise UserError("--cone ednn requires a nonnegative instance box")
    problem = build_shor_sdp(instance, mccormick=args.mccormick, dnn=dnn)
    result = be.solve_conic(problem, be.SolveLimits(time=args.time_limit), args.backend)
    if not result.is_optimal:
        raise be.BackendError(result, "conic relaxation")
    print(f"instance={instance.name}")
    print(f"cone={'DNN' if dnn else 'PSD'} mccormick={args.mccormick}")
    print(f"bound={result.objective!r}")
    print(f"solve_time={result.solve_time:.4f}")
    return 0


def _run_one(instance, variant: str, args) -> driver.Trace:
    strategy = driver.Strategy(
        variant=variant,
        cone_mode=_resolve_cone(args.cone, instance.nonneg),
        alpha=args.alpha,
    )
    return driver.run_cutting_plane(instance, strategy, _limits(args))


def cmd_cut_loop(args) -> int:
    instance = load_instance(args.instance)
    trace = _run_one(instance, args.strategy, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{instance.name}__{args.strategy}"
    report.write_trace_csv(trace, out_dir / f"{stem}.trace.csv")
    (out_dir / f"{stem}.cuts.json").write_text(cuts_to_json(trace.cuts))
    print(
        f"{instance.name} {args.strategy} status={trace.status} "
        f"iters={trace.iterations} cuts={trace.num_cuts} GC={trace.final_gc:.6f}"
    )
    if trace.status == "backend_error":
        return 2
    return 0


def _collect_instances(paths) -> list[Path]:
    files: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(p.glob("*.json")))
        elif p.exists():
            files.append(p)
        else:
            raise UserError(f"no such instance file or directory: {p}")
    if not files:
        raise UserError("no instance files found")
    return files


def cmd_compare(args) -> int:
    rows = []
    failures = 0
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in _collect_instances(args.instances):
        instance = load_instance(path)
        traces = []
        for variant in driver.VARIANTS:
            try:
                trace = _run_one(instance, variant, args)
            except driver.DegenerateGapError as exc:
                print(f"skipping {instance.name}: {exc}", file=sys.stderr)
                traces = []
                break
            traces.append(trace)
            if trace.status == "backend_error":
                failures += 1
        if traces:
            rows.extend(report.compare_row(t) for t in traces)
            report.progression_figure(traces, out_dir / f"{instance.name}.svg")
    report.write_compare_csv(rows, out_dir / "compare.csv")
    print(out_dir / "compare.csv")
    return 2 if failures else 0


def _gc_or_blank(value: float, z_mcc: float, z_qp: float) -> str:
    if z_qp - z_mcc <= 1e-9:
        return ""
    return f"{(value - z_mcc) / (z_qp - z_mcc):.6f}"


def cmd_bnb(args) -> int:
    instance = load_instance(args.instance)
    E = build_support_set(instance)
    root_lp = be.solve_conic(build_e_lp(instance), backend=args.backend)
    if not root_lp.is_optimal:
        raise be.BackendError(root_lp, "root relaxation")
    z_mcc = root_lp.objective

    cuts = []
    t_sdp = t_cuts = None
    gc_sdp = gc_cuts = ""
    if args.cuts is not None:
        cuts = cuts_from_json(Path(args.cuts).read_text(), E)
    elif args.with_cuts:
        trace = _run_one(instance, driver.SDP_SPARSE_CUTS, args)
        if trace.status == "backend_error":
            raise CertificateError("cut generation failed")
        cuts = driver.prune_slack_cuts(instance, trace.cuts)
        t_sdp, t_cuts = trace.t_sdp, trace.total_time
    result = bnb.solve_global(
        instance,
        cuts,
        eps_rel=args.eps_rel,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
        lp_backend=args.backend,
    )
    if result.status in ("backend_error",):
        return 2
    z_qp = result.z_best
    if args.with_cuts and t_sdp is not None:
        gc_sdp = _gc_or_blank(trace.z_sdp, z_mcc, z_qp)
        gc_cuts = _gc_or_blank(trace.z_lp, z_mcc, z_qp)
    row = {
        "instance": instance.name,
        "variant": "with_cuts" if (args.with_cuts or args.cuts) else "no_cuts",
        "GC_ro": _gc_or_blank(result.root_bound, z_mcc, z_qp),
        "nodes": result.nodes,
        "GC": _gc_or_blank(result.bound, z_mcc, z_qp),
        "t": f"{result.solve_time:.4f}",
        "t_SDP": f"{t_sdp:.4f}" if t_sdp is not None else "",
        "GC_sdp": gc_sdp,
        "t_cuts": f"{t_cuts:.4f}" if t_cuts is not None else "",
        "cuts": len(cuts),
        "GC_cuts": gc_cuts,
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{instance.name}__bnb_{row['variant']}.csv"
    report.write_bnb_csv([row], path)
    print(
        f"{instance.name} {row['variant']} status={result.status} "
        f"z_best={result.z_best!r} bound={result.bound!r} nodes={result.nodes}"
    )
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.csvs:
        p = Path(path)
        if not p.exists():
            raise UserError(f"no such CSV: {p}")
        rows.extend(report.read_csv_rows(p))
    if not rows:
        raise UserError("no rows to aggregate")
    summary = report.summarize_compare(rows)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_summary_csv(summary, out_dir / "summary.csv")
    report.summary_figure(summary, out_dir / "summary.svg")
    print(out_dir / "summary.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsecuts",
        description="Sparse conic cutting planes for nonconvex QCQP relaxations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_run_flags(p, with_strategy=False):
        p.add_argument("--cone", choices=["epsd", "ednn", "auto"], default="auto")
        p.add_argument("--alpha", type=float, default=0.001)
        p.add_argument("--gc-target", type=float, default=0.99, dest="gc_target")
        p.add_argument("--time-limit", type=float, default=60.0, dest="time_limit")
        p.add_argument("--max-iters", type=int, default=1000, dest="max_iters")
        p.add_argument("--backend", default="auto")
        p.add_argument("--out", default=".")
        if with_strategy:
            p.add_argument("--strategy", choices=list(driver.VARIANTS),
                           default=driver.SPARSE_CUTS)

    p = sub.add_parser("generate", help="generate a boxqcqp instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--qc", type=int, default=0)
    p.add_argument("--seed", type=int, default=1, help="instance variation index")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve-sdp", help="solve the lifted conic relaxation")
    p.add_argument("instance")
    p.add_argument("--cone", choices=["epsd", "ednn", "auto"], default="auto")
    p.add_argument("--mccormick", choices=["off", "E", "full"], default="E")
    p.add_argument("--time-limit", type=float, default=None, dest="time_limit")
    p.add_argument("--backend", default="auto")
    p.set_defaults(func=cmd_solve_sdp)

    p = sub.add_parser("cut-loop", help="run one cutting-plane strategy")
    p.add_argument("instance")
    add_common_run_flags(p, with_strategy=True)
    p.set_defaults(func=cmd_cut_loop)

    p = sub.add_parser("compare", help="run all four strategies side by side")
    p.add_argument("instances", nargs="+")
    add_common_run_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bnb", help="global solve with or without cuts")
    p.add_argument("instance")
    cuts_group = p.add_mutually_exclusive_group()
    cuts_group.add_argument("--with-cuts", action="store_true", dest="with_cuts")
    cuts_group.add_argument("--no-cuts", action="store_false", dest="with_cuts")
    cuts_group.add_argument("--cuts", default=None, help="replay a serialized cut pool")
    p.add_argument("--eps-rel", type=float, default=1e-4, dest="eps_rel")
    p.add_argument("--node-limit", type=int, default=100_000, dest="node_limit")
    add_common_run_flags(p)
    p.set_defaults(func=cmd_bnb, with_cuts=False)

    p = sub.add_parser("report", help="aggregate comparison CSVs into a summary")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (be.BackendError, CertificateError, driver.DegenerateGapError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (
        UserError,
        OSError,
        SchemaViolationError,
        UnsupportedFeatureError,
        SupportMismatchError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

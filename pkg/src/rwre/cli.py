"""Command-line front end.

Subcommands select an experiment or identity check, flags carry the
parameters, and results go to stdout or --out as JSON, CSV, or plain text.
Runs are reproducible: the seed defaults to a fixed constant (12345), can be
set with --seed or the RWRE_SEED environment variable, and the worker count
never changes the output, only the wall time.  Timing is therefore opt-in
(--timing); without it the wall_time_s field is null so that reruns are
byte-identical.

The weight vector --alpha is ordered (alpha_1, beta_1, alpha_2, beta_2, ...):
alpha_i weighs the +e_i step and beta_i the -e_i step.  Transposing a pair
silently flips the transience direction, so keep the order straight.

Exit status: 0 on success, 2 on precondition or usage errors (including
malformed inputs), 1 on internal errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

from .annealed import (
    annealed_path_probability_exact,
    annealed_path_probability_mc,
    parse_path_literal,
)
from .environment import sample_environment, write_environment
from .errors import GraphFormatError, PreconditionError
from .experiments import (
    cylinder_delta_exit,
    cylinder_exit_from_origin,
    lattice_transience,
    ruin_exit_probability,
    trap_condition,
    velocity_probe,
)
from .graph import (
    CylinderSpec,
    LatticeSpec,
    build_cylinder_graph,
    build_torus,
    read_graph,
)
from .reversal import check_cycle_reversal, verify_reversal_distribution
from .rng import RngStream

DEFAULT_SEED = 12345
GRID_GUARD = 10_000

RECORD_COLUMNS = [
    "experiment", "params", "estimate", "se", "replicas",
    "truncated", "undecided", "seed", "wall_time_s",
]


def _parse_weights(text: str) -> LatticeSpec:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise PreconditionError(f"malformed weight vector {text!r}")
    if not values or len(values) % 2 != 0 or any(v <= 0 for v in values):
        raise PreconditionError(
            "weight vector must be 2d positive comma-separated reals "
            "(alpha_1,beta_1,...,alpha_d,beta_d)"
        )
    return LatticeSpec(tuple(values))


def _parse_int_list(text: str) -> list:
    if text is None:
        return []
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise PreconditionError(f"malformed integer list {text!r}")


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("RWRE_SEED", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise PreconditionError(f"RWRE_SEED must be an integer, got {env!r}")
    return DEFAULT_SEED


def _lattice(args) -> LatticeSpec:
    if not getattr(args, "alpha", None):
        raise PreconditionError("--alpha is required here")
    lat = _parse_weights(args.alpha)
    if getattr(args, "d", None) is not None and lat.dimension != args.d:
        raise PreconditionError(
            f"--alpha has {lat.dimension} axes but --d says {args.d}"
        )
    return lat


def _load_graph(args, allow_cylinder: bool = False):
    """Graph plus weights from --graph-file, --torus, or cylinder flags."""
    if getattr(args, "graph_file", None):
        with open(args.graph_file) as fh:
            return read_graph(fh)
    if getattr(args, "torus", None):
        lat = _lattice(args)
        return build_torus(lat, _parse_int_list(args.torus))
    if allow_cylinder and getattr(args, "alpha", None):
        lat = _lattice(args)
        cg = build_cylinder_graph(CylinderSpec(args.N, args.L, lat))
        return cg.graph, cg.weights
    raise PreconditionError("need --graph-file, or --alpha with --torus")


def _graph_params(args) -> dict:
    if getattr(args, "graph_file", None):
        return {"graph_file": args.graph_file}
    out = {}
    if getattr(args, "alpha", None):
        out["alpha"] = [float(t) for t in args.alpha.split(",") if t.strip()]
    if getattr(args, "torus", None):
        out["torus"] = _parse_int_list(args.torus)
    return out


def _emit(text: str, args):
    out = getattr(args, "out", None)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(obj, args):
    _emit(json.dumps(obj, indent=2) + "\n", args)


def _records_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for rec in records:
        row = []
        for col in RECORD_COLUMNS:
            val = rec[col]
            if col == "params":
                val = json.dumps(val, separators=(",", ":"))
            elif val is None:
                val = ""
            row.append(val)
        writer.writerow(row)
    return buf.getvalue()


def _emit_results(results, args):
    records = [r.to_record() for r in results]
    if args.format == "csv":
        _emit(_records_csv(records), args)
    else:
        _emit_json(records[0] if len(records) == 1 else records, args)


def _timed(args, fn):
    """Run fn; attach wall time to its result(s) only when --timing is set."""
    t0 = time.perf_counter()
    out = fn()
    dt = time.perf_counter() - t0
    if getattr(args, "timing", False):
        results = out if isinstance(out, list) else [out]
        for r in results:
            r.wall_time_s = dt
    return out


# -- subcommand handlers ---------------------------------------------------


def _cmd_sample_env(args) -> int:
    g, w = _load_graph(args, allow_cylinder=True)
    seed = _resolve_seed(args)
    env = sample_environment(g, w, RngStream(seed))
    buf = io.StringIO()
    buf.write(f"# seed {seed}\n")
    write_environment(env, buf)
    _emit(buf.getvalue(), args)
    return 0


def _cmd_annealed_prob(args) -> int:
    g, w = _load_graph(args)
    traj = parse_path_literal(g, args.path, origin=args.origin)
    seed = _resolve_seed(args)
    exact = annealed_path_probability_exact(w, traj)
    record = {
        "experiment": "annealed-prob",
        "params": {**_graph_params(args), "path": args.path},
        "exact": exact,
        "estimate": None,
        "se": None,
        "z": None,
        "replicas": args.replicas,
        "seed": seed,
        "wall_time_s": None,
    }
    if args.replicas > 0:
        t0 = time.perf_counter()
        mc, se = annealed_path_probability_mc(
            g, w, traj, args.replicas, RngStream(seed), workers=args.workers)
        dt = time.perf_counter() - t0
        record["estimate"] = mc
        record["se"] = se
        record["z"] = (mc - exact) / se if se > 0 else 0.0
        if args.timing:
            record["wall_time_s"] = dt
    _emit_json(record, args)
    return 0


def _cmd_cycle_check(args) -> int:
    g, w = _load_graph(args)
    cycle = parse_path_literal(g, args.path, origin=args.origin)
    report = check_cycle_reversal(w, cycle)
    _emit_json({
        "experiment": "cycle-check",
        "params": {**_graph_params(args), "path": args.path},
        "forward": report.forward,
        "backward": report.backward,
        "rel_diff": report.rel_diff,
        "ok": report.ok(),
    }, args)
    return 0


def _cmd_reverse_check(args) -> int:
    g, w = _load_graph(args)
    seed = _resolve_seed(args)
    t0 = time.perf_counter()
    report = verify_reversal_distribution(
        g, w, args.k, args.replicas, RngStream(seed), root=args.root,
        workers=args.workers)
    dt = time.perf_counter() - t0
    if args.format == "json":
        _emit_json({
            "experiment": "reverse-check",
            "params": {**_graph_params(args), "k": args.k, "root": args.root},
            "replicas": args.replicas,
            "seed": seed,
            "paths": [
                {"path": report.literals[i], "exact": float(report.exact[i]),
                 "mc": float(report.mc[i]), "se": float(report.se[i]),
                 "z": float(report.z[i])}
                for i in range(len(report.literals))
            ],
            "max_abs_z": report.max_abs_z,
            "outliers": report.outliers(),
            "allowed_outliers": report.allowed_outliers,
            "policy_ok": report.policy_ok(),
            "wall_time_s": dt if args.timing else None,
        }, args)
    else:
        _emit("\n".join(report.lines() + [report.summary()]) + "\n", args)
    return 0


def _cmd_cylinder_delta(args) -> int:
    lat = _lattice(args)
    seed = _resolve_seed(args)
    res = _timed(args, lambda: cylinder_delta_exit(
        CylinderSpec(args.N, args.L, lat), args.replicas, RngStream(seed),
        step_cap=args.steps, workers=args.workers))
    _emit_results([res], args)
    return 0


def _cmd_cylinder_exit(args) -> int:
    lat = _lattice(args)
    seed = _resolve_seed(args)
    res = _timed(args, lambda: cylinder_exit_from_origin(
        CylinderSpec(args.N, args.L, lat), args.replicas, RngStream(seed),
        step_cap=args.steps, workers=args.workers))
    _emit_results([res], args)
    return 0


def _cmd_transience(args) -> int:
    lat = _lattice(args)
    levels = _parse_int_list(args.L)
    seed = _resolve_seed(args)
    results = _timed(args, lambda: lattice_transience(
        lat, levels, args.replicas, args.steps, RngStream(seed),
        workers=args.workers))
    _emit_results(results, args)
    return 0


def _cmd_trap_check(args) -> int:
    lat = _lattice(args)
    check = trap_condition(lat, args.axis)
    _emit_json({"holds": check.holds, "slack": check.slack}, args)
    return 0


def _cmd_velocity(args) -> int:
    lat = _lattice(args)
    horizons = _parse_int_list(args.horizons)
    seed = _resolve_seed(args)
    results = _timed(args, lambda: velocity_probe(
        lat, horizons, args.replicas, RngStream(seed), workers=args.workers))
    _emit_results(results, args)
    return 0


def _cmd_ruin(args) -> int:
    lat = _lattice(args)
    seed = _resolve_seed(args)
    res = _timed(args, lambda: ruin_exit_probability(
        lat, args.L, args.replicas, RngStream(seed), workers=args.workers))
    _emit_results([res], args)
    return 0


GRID_EXPERIMENTS = ("cylinder-delta", "cylinder-exit", "transience")


def run_grid(args) -> int:
    """Sweep N and L lists over one experiment, one CSV row per grid point.

    Rows are ordered N-major then L; the point with index i runs with seed
    (base seed XOR i), so points are independent but reproducible.  An empty
    sweep list yields a header-only table.
    """
    if args.experiment not in GRID_EXPERIMENTS:
        raise PreconditionError(
            f"grid supports {', '.join(GRID_EXPERIMENTS)}; got {args.experiment!r}"
        )
    lat = _lattice(args)
    ns = _parse_int_list(args.N) if args.experiment != "transience" else [0]
    ls = _parse_int_list(args.L)
    points = [(n, l) for n in ns for l in ls]
    if len(points) > GRID_GUARD:
        raise PreconditionError(f"grid has {len(points)} points, guard is {GRID_GUARD}")
    seed = _resolve_seed(args)
    records = []
    for i, (n, l) in enumerate(points):
        rng = RngStream(seed ^ i)
        if args.experiment == "cylinder-delta":
            res = cylinder_delta_exit(CylinderSpec(n, l, lat), args.replicas, rng,
                                      step_cap=args.steps, workers=args.workers)
        elif args.experiment == "cylinder-exit":
            res = cylinder_exit_from_origin(CylinderSpec(n, l, lat), args.replicas, rng,
                                            step_cap=args.steps, workers=args.workers)
        else:
            res = lattice_transience(lat, [l], args.replicas, args.steps, rng,
                                     workers=args.workers)[0]
        records.append(res.to_record())
    _emit(_records_csv(records), args)
    return 0


# -- parser ----------------------------------------------------------------


def _add_common(p, replicas=None, steps=True):
    p.add_argument("--seed", type=int, default=None,
                   help=f"RNG seed (default: RWRE_SEED env var, else {DEFAULT_SEED})")
    p.add_argument("--workers", type=int, default=1,
                   help="worker threads; affects speed only, never results (default 1)")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv", "text"), default="json",
                   help="output format where applicable (default json)")
    p.add_argument("--timing", action="store_true",
                   help="record wall time in the output (off by default so reruns are byte-identical)")
    if replicas is not None:
        p.add_argument("--replicas", type=int, default=replicas,
                       help=f"Monte Carlo replicas (default {replicas})")
    if steps:
        p.add_argument("--steps", type=int, default=100_000,
                       help="step cap per walk (default 100000)")


def _add_lattice(p, with_nl=True):
    p.add_argument("--alpha", default=None,
                   help="weights alpha_1,beta_1,...,alpha_d,beta_d (positive reals)")
    p.add_argument("--d", type=int, default=None,
                   help="dimension check against --alpha (optional)")
    if with_nl:
        p.add_argument("--N", type=int, default=1,
                       help="transverse torus period (default 1)")
        p.add_argument("--L", type=int, default=4,
                       help="cylinder length (default 4)")


def _add_graph_source(p):
    p.add_argument("--graph-file", default=None,
                   help="graph in the text format (vertices/edge lines)")
    p.add_argument("--alpha", default=None,
                   help="weights alpha_1,beta_1,... for a lattice-derived graph")
    p.add_argument("--d", type=int, default=None,
                   help="dimension check against --alpha (optional)")
    p.add_argument("--torus", default=None,
                   help="torus periods p_1,...,p_d to build from --alpha")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwre",
        description="Random walks in Dirichlet environments: exact identities and Monte Carlo experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample-env", help="sample one environment and dump it")
    _add_graph_source(p)
    p.add_argument("--N", type=int, default=1, help="transverse torus period (default 1)")
    p.add_argument("--L", type=int, default=4, help="cylinder length (default 4)")
    _add_common(p, steps=False)
    p.set_defaults(func=_cmd_sample_env)

    p = sub.add_parser("annealed-prob",
                       help="exact annealed path probability, optionally with a Monte Carlo check")
    _add_graph_source(p)
    p.add_argument("--path", required=True,
                   help="path literal: vertex ids `0,1,0`, steps `+1,-1`, or edges `e0,e3`")
    p.add_argument("--origin", type=int, default=0,
                   help="start vertex for step literals (default 0)")
    _add_common(p, replicas=0, steps=False)
    p.set_defaults(func=_cmd_annealed_prob)

    p = sub.add_parser("cycle-check", help="exact cycle-reversal identity on one cycle")
    _add_graph_source(p)
    p.add_argument("--path", required=True, help="cycle literal (must return to its start)")
    p.add_argument("--origin", type=int, default=0,
                   help="start vertex for step literals (default 0)")
    _add_common(p, steps=False)
    p.set_defaults(func=_cmd_cycle_check)

    p = sub.add_parser("reverse-check",
                       help="reversed Dirichlet environment vs exact annealed values, all short paths")
    _add_graph_source(p)
    p.add_argument("--k", type=int, default=3, help="maximum path length (default 3)")
    p.add_argument("--root", type=int, default=0, help="path enumeration root (default 0)")
    _add_common(p, replicas=100_000, steps=False)
    p.set_defaults(func=_cmd_reverse_check, format="text")

    p = sub.add_parser("cylinder-delta",
                       help="right-face return probability of the augmented cylinder")
    _add_lattice(p)
    _add_common(p, replicas=100_000)
    p.set_defaults(func=_cmd_cylinder_delta)

    p = sub.add_parser("cylinder-exit",
                       help="probability of exiting the plain cylinder to the right")
    _add_lattice(p)
    _add_common(p, replicas=100_000)
    p.set_defaults(func=_cmd_cylinder_exit)

    p = sub.add_parser("transience", help="lattice estimate of P(T_L < D) per level L")
    p.add_argument("--alpha", default=None,
                   help="weights alpha_1,beta_1,...,alpha_d,beta_d (positive reals)")
    p.add_argument("--d", type=int, default=None,
                   help="dimension check against --alpha (optional)")
    p.add_argument("--L", default="10,30", help="comma list of levels (default 10,30)")
    _add_common(p, replicas=10_000)
    p.set_defaults(func=_cmd_transience)

    p = sub.add_parser("trap-check", help="zero-speed trap inequality for one axis")
    p.add_argument("--alpha", default=None,
                   help="weights alpha_1,beta_1,...,alpha_d,beta_d (positive reals)")
    p.add_argument("--d", type=int, default=None,
                   help="dimension check against --alpha (optional)")
    p.add_argument("--axis", type=int, default=1, help="axis i of the inequality (default 1)")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.set_defaults(func=_cmd_trap_check)

    p = sub.add_parser("velocity", help="mean abscissa over n at increasing horizons")
    p.add_argument("--alpha", default=None,
                   help="weights alpha_1,beta_1,...,alpha_d,beta_d (positive reals)")
    p.add_argument("--d", type=int, default=None,
                   help="dimension check against --alpha (optional)")
    p.add_argument("--horizons", default="1000",
                   help="comma list of horizons n (default 1000)")
    _add_common(p, replicas=1_000, steps=False)
    p.set_defaults(func=_cmd_velocity)

    p = sub.add_parser("ruin", help="d=1 averaged gambler's-ruin oracle for cylinder-exit")
    p.add_argument("--alpha", default=None, help="weights alpha_1,beta_1 (d=1)")
    p.add_argument("--d", type=int, default=None,
                   help="dimension check against --alpha (optional)")
    p.add_argument("--L", type=int, default=4, help="target abscissa (default 4)")
    _add_common(p, replicas=100_000, steps=False)
    p.set_defaults(func=_cmd_ruin)

    p = sub.add_parser("grid", help="sweep N and L lists over one experiment into CSV")
    p.add_argument("experiment", help=f"one of {', '.join(GRID_EXPERIMENTS)}")
    p.add_argument("--alpha", default=None,
                   help="weights alpha_1,beta_1,...,alpha_d,beta_d (positive reals)")
    p.add_argument("--d", type=int, default=None,
                   help="dimension check against --alpha (optional)")
    p.add_argument("--N", default="1", help="comma list of transverse periods (default 1)")
    p.add_argument("--L", default="4", help="comma list of lengths/levels (default 4)")
    _add_common(p, replicas=10_000)
    p.set_defaults(func=run_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PreconditionError, GraphFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

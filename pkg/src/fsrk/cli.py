"""Command-line surface: fsrk <command> [options].

Commands
  methods       list built-in methods and tableaus
  check-order   verify order conditions of a method
  lem           third-order local error measure
  stability     raster |R| over a complex window (CSV + SVG + PNG)
  xhat          stability x-intercept table (CSV + PNG)
  optimize      derive a method from a design-spec file
  run           integrate a problem once, report MRMS (CSV + PNG)
  convergence   largest-stable-step study (CSV + PNG)

Unit conventions: z values are in lambda^[R]*dt units; step sizes are
in problem time units. Exit codes: 0 success, 1 domain error, 2 usage
error. Data files carry no timestamps, so reruns are byte-identical.
"""

import argparse
import os
import re
import sys
from pathlib import Path

import numpy as np

from .errors import BracketError, FsrkError
from .figures import save_dt_star_png, save_region_png, save_trace_png, save_xhat_png
from .integrators import integrate, trajectory_to_csv
from .methods import (
    SplittingMethod,
    get_method,
    lem3,
    order_condition_residuals,
    read_method_file,
    registry,
    write_method_file,
)
from .optimizer import ContextTemplate, DesignSpec, minimize_lem, minimize_xhat, read_design_file
from .plans import ORDERINGS, plan_from_string
from .problems import (
    benchmark_sample_times,
    default_fhn_benchmark,
    largest_stable_dt,
    mrms,
    read_problem_config,
    reference_solution,
)
from .stability import (
    StabilityContext,
    export_region_svg,
    find_xhat,
    raster,
    raster_to_csv,
)
from .tableaus import TABLEAUS

OUTDIR_ENV = "FSRK_OUTDIR"
DEFAULT_PLAN = "sdirk23:rk3"


class UsageError(Exception):
    """Bad invocation (missing file, malformed flag value): exit code 2."""


class RunConfig:
    """Validated invocation: command, input files, output directory,
    overwrite policy, and the numeric overrides namespace.

    Input paths are checked before any work starts; output paths are
    never overwritten unless --force was given.
    """

    def __init__(self, command, inputs, outdir, force, overrides):
        self.command = command
        self.inputs = [Path(p) for p in inputs]
        for p in self.inputs:
            if not p.is_file():
                raise UsageError(f"input file not found: {p}")
        self.outdir = Path(outdir)
        self.force = bool(force)
        self.overrides = overrides

    def output(self, name):
        """Reserve an output path, refusing silent overwrites."""
        self.outdir.mkdir(parents=True, exist_ok=True)
        path = self.outdir / name
        if path.exists() and not self.force:
            raise UsageError(f"refusing to overwrite {path} (pass --force)")
        return path


def _config(args, inputs=()):
    return RunConfig(args.command, inputs, args.outdir, args.force, args)


def _slug(name):
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name.strip()) or "method"


def _emit(lines, path=None):
    """Print a CSV block to stdout and optionally write it to a file."""
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _wrote(path):
    print(f"# wrote {path}")


def _fmt(x):
    return "" if x is None else f"{x:.12g}"


def _load_method(args, cfg):
    if getattr(args, "method_file", None):
        return read_method_file(args.method_file)
    return get_method(args.method)


def _method_inputs(args):
    return [args.method_file] if getattr(args, "method_file", None) else []


# ---------------------------------------------------------------- commands


def cmd_methods(args):
    cfg = _config(args)
    lines = ["name,stages,claimed_order"]
    for m in registry():
        lines.append(f"{m.name},{m.stages},{m.claimed_order}")
    _emit(lines)
    print()
    tab_lines = ["tableau,kind,rk_stages"]
    for name in sorted(TABLEAUS):
        t = TABLEAUS[name]
        tab_lines.append(f"{t.name},{t.kind},{getattr(t, 'n_stages', '')}")
    _emit(tab_lines)
    if args.method:
        m = get_method(args.method)
        print()
        coeff = ["stage,alpha_1,alpha_2"]
        for k in range(m.stages):
            coeff.append(f"{k + 1},{m.alpha[k, 0]:.17g},{m.alpha[k, 1]:.17g}")
        _emit(coeff)
    return 0


def cmd_check_order(args):
    cfg = _config(args, _method_inputs(args))
    m = _load_method(args, cfg)
    rep = order_condition_residuals(m, max_p=args.max_order, tol=args.tol)
    lines = ["order,max_abs_residual,satisfied"]
    for p in sorted(rep.residuals_by_order):
        worst = float(np.max(np.abs(rep.residuals_by_order[p])))
        lines.append(f"{p},{worst:.6g},{int(p <= rep.satisfied_order)}")
    lines.append(f"satisfied_order,{rep.satisfied_order}")
    _emit(lines)
    return 0


def cmd_lem(args):
    cfg = _config(args, _method_inputs(args))
    if not args.all and not (args.method or args.method_file):
        raise UsageError("lem needs --method, --method-file, or --all")
    if args.all:
        methods = [
            m
            for m in registry()
            if order_condition_residuals(m, max_p=3).satisfied_order >= 3
        ]
    else:
        methods = [_load_method(args, cfg)]
    lines = ["method,lem3"]
    for m in methods:
        lines.append(f"{m.name},{lem3(m).lem3:.6g}")
    _emit(lines)
    return 0


def cmd_stability(args):
    cfg = _config(args, _method_inputs(args))
    m = _load_method(args, cfg)
    plan = plan_from_string(args.plan, args.ordering)
    ctx = StabilityContext(m, plan, args.ordering, args.ratio)
    base = f"stability_{_slug(m.name)}_{args.ordering}"
    title = f"{m.name} {args.ordering} ratio={args.ratio:g} plan={args.plan}"
    csv_path = cfg.output(base + ".csv")
    svg_path = cfg.output(base + ".svg")
    png_path = cfg.output(base + ".png")
    r = raster(ctx, tuple(args.window), args.nx, args.ny)
    raster_to_csv(r, csv_path)
    export_region_svg(r, svg_path, title=title)
    save_region_png(r, png_path, title=title)
    inside = int(r.inside.sum())
    _emit(
        [
            "method,ordering,ratio,nx,ny,inside_cells",
            f"{m.name},{args.ordering},{args.ratio:.12g},{r.nx},{r.ny},{inside}",
        ]
    )
    for p in (csv_path, svg_path, png_path):
        _wrote(p)
    return 0


def cmd_xhat(args):
    inputs = list(args.method_file or [])
    cfg = _config(args, inputs)
    methods = []
    if args.methods:
        for name in args.methods.split(","):
            methods.append(get_method(name))
    for path in inputs:
        methods.append(read_method_file(path))
    if not methods:
        raise UsageError("xhat needs --methods and/or --method-file")
    orderings = list(ORDERINGS) if args.ordering == "both" else [args.ordering]
    csv_path = cfg.output("xhat.csv")
    png_path = cfg.output("xhat.png")
    lines = ["method,ordering,xhat"]
    bars = []
    for m in methods:
        for o in orderings:
            plan = plan_from_string(args.plan, o)
            res = find_xhat(
                StabilityContext(m, plan, o, args.ratio), scan_depth=args.depth
            )
            lines.append(f"{m.name},{o},{_fmt(res.xhat)}")
            bars.append((f"{m.name} {o}", res.xhat))
    _emit(lines, csv_path)
    save_xhat_png(bars, png_path, title=f"ratio={args.ratio:g} plan={args.plan}")
    for p in (csv_path, png_path):
        _wrote(p)
    return 0


def cmd_optimize(args):
    cfg = _config(args, [args.design])
    spec, extras = read_design_file(args.design)
    if args.seeds is not None or args.rng is not None:
        spec = DesignSpec(
            spec.stages,
            target_order=spec.target_order,
            zero_pattern=spec.zero_pattern,
            box=spec.box,
            objective=spec.objective,
            seeds=spec.seeds if args.seeds is None else args.seeds,
            rng_seed=spec.rng_seed if args.rng is None else args.rng,
        )
    tag = "lem" if spec.objective == "min_lem" else "xhat"
    name = extras["name"] or f"opt-{tag}-{spec.stages}s"
    out = cfg.output(f"{_slug(name)}.method")
    if spec.objective == "min_lem":
        cand = minimize_lem(spec)
    else:
        ordering = extras["ordering"] or "DR"
        ratio = extras["ratio"] if extras["ratio"] is not None else args.ratio
        if ratio is None:
            raise UsageError("objective xhat needs a ratio (design file or --ratio)")
        plan = plan_from_string(args.plan, ordering)
        cand = minimize_xhat(spec, ContextTemplate(ordering, ratio, plan))
    m = SplittingMethod(name, cand.method.alpha, claimed_order=cand.method.claimed_order)
    write_method_file(m, out)
    _emit(
        [
            "name,objective,objective_value,order_residual_norm,feasible,discarded",
            f"{name},{spec.objective},{cand.objective_value:.12g},"
            f"{cand.order_residual_norm:.6g},{int(cand.feasible)},"
            f"{cand.discarded_evaluations}",
        ]
    )
    _wrote(out)
    return 0


def _load_problem(args):
    """Problem plus time grid from a config file or the stock benchmark."""
    if args.problem:
        problem = read_problem_config(args.problem)
        t0 = args.t0 if args.t0 is not None else 0.0
        tf = args.tf if args.tf is not None else 8.0
    else:
        problem, t0, tf, _ = default_fhn_benchmark()
        if args.t0 is not None:
            t0 = args.t0
        if args.tf is not None:
            tf = args.tf
    if tf <= t0:
        raise UsageError(f"need tf > t0, got t0={t0} tf={tf}")
    samples = benchmark_sample_times(t0, tf, args.samples)
    return problem, t0, tf, samples


def _component(problem):
    return getattr(problem, "voltage_indices", None)


def cmd_run(args):
    inputs = [args.problem] if args.problem else []
    if getattr(args, "method_file", None):
        inputs.append(args.method_file)
    cfg = _config(args, inputs)
    base_problem, t0, tf, samples = _load_problem(args)
    m = _load_method(args, cfg)
    plan = plan_from_string(args.plan, args.ordering)
    base = f"run_{_slug(m.name)}_{args.ordering}"
    traj_path = cfg.output(base + "_trajectory.csv")
    png_path = cfg.output(base + ".png")
    problem = base_problem.swapped() if args.ordering == "RD" else base_problem
    traj = integrate(
        problem, m, plan, t0, tf, args.dt, substeps=args.substeps, checkpoints=samples
    )
    X = traj.at_times(samples)
    trajectory_to_csv(traj, traj_path, stride=args.stride)

    value = ""
    n_ref = 0
    if not args.no_reference:
        ref, _ = reference_solution(
            problem, t0, tf, samples, tol=args.ref_tol, cache_dir=args.cache_dir
        )
        comp = _component(problem)
        rep = mrms(X[:, comp], ref[:, comp]) if comp is not None else mrms(X, ref)
        value = f"{rep.value:.12g}"
        n_ref = rep.sample_count
    _emit(
        [
            "method,ordering,dt,mrms,compared_values",
            f"{m.name},{args.ordering},{args.dt:.12g},{value},{n_ref}",
        ]
    )

    comp = _component(problem)
    probes = (
        list(comp[:: max(1, len(comp) // 4)][:4])
        if comp is not None
        else list(range(min(4, X.shape[1])))
    )
    save_trace_png(
        samples,
        [X[:, j] for j in probes],
        [f"y[{j}]" for j in probes],
        png_path,
        title=f"{m.name} {args.ordering} dt={args.dt:g}",
    )
    for p in (traj_path, png_path):
        _wrote(p)
    return 0


def cmd_convergence(args):
    inputs = [args.problem] if args.problem else []
    cfg = _config(args, inputs)
    base_problem, t0, tf, samples = _load_problem(args)
    names = [n for n in args.methods.split(",") if n]
    methods = [get_method(n) for n in names]
    orderings = [o for o in args.orderings.split(",") if o]
    for o in orderings:
        if o not in ORDERINGS:
            raise UsageError(f"ordering must be DR or RD, got {o!r}")
    csv_path = cfg.output("convergence.csv")
    png_path = cfg.output("convergence.png")
    ref, _ = reference_solution(
        base_problem, t0, tf, samples, tol=args.ref_tol, cache_dir=args.cache_dir
    )
    comp = _component(base_problem)

    plan_text = args.plan + ("+negfe" if args.negfe else "")
    lines = ["method,ordering,plan,dt_star,sub_integrations"]
    bars = []
    for m in methods:
        subints = int(np.count_nonzero(m.alpha))
        for o in orderings:
            plan = plan_from_string(plan_text, o)
            problem = base_problem.swapped() if o == "RD" else base_problem
            try:
                dt_star = largest_stable_dt(
                    problem, m, plan, (args.dt_lo, args.dt_hi), args.threshold,
                    t0, tf, samples, ref, component=comp,
                )
            except BracketError:
                dt_star = None
            lines.append(f"{m.name},{o},{plan_text},{_fmt(dt_star)},{subints}")
            bars.append((f"{m.name} {o}", dt_star))
    _emit(lines, csv_path)
    save_dt_star_png(
        bars, png_path, title=f"MRMS <= {args.threshold:g}, plan {plan_text}"
    )
    for p in (csv_path, png_path):
        _wrote(p)
    return 0


# ----------------------------------------------------------------- parser


def _add_common(p):
    p.add_argument(
        "--outdir",
        default=os.environ.get(OUTDIR_ENV, "."),
        help=f"output directory (default: ${OUTDIR_ENV} or .)",
    )
    p.add_argument(
        "--force", action="store_true", help="allow overwriting existing outputs"
    )


def _add_method_arg(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--method", help="built-in method name")
    g.add_argument("--method-file", help="method coefficient file")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fsrk",
        description="2-split fractional-step Runge-Kutta toolbox",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("methods", help="list built-in methods and tableaus")
    _add_common(p)
    p.add_argument("--method", help="also print this method's coefficients")
    p.set_defaults(handler=cmd_methods)

    p = sub.add_parser("check-order", help="verify order conditions")
    _add_common(p)
    _add_method_arg(p)
    p.add_argument("--max-order", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(handler=cmd_check_order)

    p = sub.add_parser("lem", help="third-order local error measure")
    _add_common(p)
    _add_method_arg(p, required=False)
    p.add_argument(
        "--all", action="store_true", help="every built-in third-order method"
    )
    p.set_defaults(handler=cmd_lem)

    p = sub.add_parser("stability", help="raster |R| over a window")
    _add_common(p)
    _add_method_arg(p)
    p.add_argument("--ordering", choices=ORDERINGS, default="DR")
    p.add_argument("--ratio", type=float, required=True,
                   help="lambda_D / lambda_R eigenvalue ratio")
    p.add_argument("--plan", default=DEFAULT_PLAN,
                   help="<diffusion>:<reaction>[+negfe]")
    p.add_argument("--window", type=float, nargs=4, default=(-10.0, 1.0, -6.0, 6.0),
                   metavar=("X0", "X1", "Y0", "Y1"),
                   help="z window in lambda_R*dt units")
    p.add_argument("--nx", type=int, default=201)
    p.add_argument("--ny", type=int, default=201)
    p.set_defaults(handler=cmd_stability)

    p = sub.add_parser("xhat", help="stability x-intercept table")
    _add_common(p)
    p.add_argument("--methods", help="comma-separated built-in method names")
    p.add_argument("--method", dest="methods", help=argparse.SUPPRESS)
    p.add_argument("--method-file", action="append",
                   help="method coefficient file (repeatable)")
    p.add_argument("--ordering", choices=ORDERINGS + ("both",), default="both")
    p.add_argument("--ratio", type=float, required=True,
                   help="lambda_D / lambda_R eigenvalue ratio")
    p.add_argument("--plan", default=DEFAULT_PLAN)
    p.add_argument("--depth", type=float, default=50.0,
                   help="scan depth in lambda_R*dt units")
    p.set_defaults(handler=cmd_xhat)

    p = sub.add_parser("optimize", help="derive a method from a design file")
    _add_common(p)
    p.add_argument("--design", required=True, help="design-spec file")
    p.add_argument("--plan", default=DEFAULT_PLAN,
                   help="sub-integrator plan for the xhat objective")
    p.add_argument("--ratio", type=float, help="fallback eigenvalue ratio")
    p.add_argument("--seeds", type=int, help="override seed count")
    p.add_argument("--rng", type=int, help="override rng seed")
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("run", help="integrate a problem once")
    _add_common(p)
    _add_method_arg(p)
    p.add_argument("--problem", help="problem config file (default: stock benchmark)")
    p.add_argument("--ordering", choices=ORDERINGS, default="DR")
    p.add_argument("--plan", default=DEFAULT_PLAN)
    p.add_argument("--dt", type=float, required=True,
                   help="step size in problem time units")
    p.add_argument("--t0", type=float)
    p.add_argument("--tf", type=float)
    p.add_argument("--samples", type=int, default=21)
    p.add_argument("--substeps", type=int, default=1)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--no-reference", action="store_true",
                   help="skip the reference solve and MRMS")
    p.add_argument("--ref-tol", type=float, default=5e-4)
    p.add_argument("--cache-dir", help="reference solution cache directory")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("convergence", help="largest-stable-step study")
    _add_common(p)
    p.add_argument("--methods", required=True,
                   help="comma-separated built-in method names")
    p.add_argument("--problem", help="problem config file (default: stock benchmark)")
    p.add_argument("--orderings", default="DR,RD")
    p.add_argument("--plan", default=DEFAULT_PLAN)
    p.add_argument("--negfe", action="store_true",
                   help="replace negative sub-steps with forward Euler")
    p.add_argument("--threshold", type=float, default=0.05,
                   help="MRMS acceptance threshold")
    p.add_argument("--dt-lo", type=float, required=True)
    p.add_argument("--dt-hi", type=float, required=True)
    p.add_argument("--t0", type=float)
    p.add_argument("--tf", type=float)
    p.add_argument("--samples", type=int, default=21)
    p.add_argument("--ref-tol", type=float, default=5e-4)
    p.add_argument("--cache-dir", help="reference solution cache directory")
    p.set_defaults(handler=cmd_convergence)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"fsrk {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except FsrkError as exc:
        print(
            f"fsrk {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())

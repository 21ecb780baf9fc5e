import argparse
import json
import logging
import sys

import numpy as np
from pydantic import ValidationError

from .bounds import lambda_exponent, lambda_infinity, lambda_limit, make_bound, pcapacity, transformed_radius
from .config import settings
from .errors import ConfigError, InvalidInputError, ThreeSpheresError, VerificationGateError
from .fdm2d import disk_grid, solve_dirichlet
from .families import philox_generator
from .models import (
    CLASSICAL_MODES,
    BandRule,
    BoundMode,
    CapacityConvention,
    EnvelopeMode,
    NodeKind,
    RadiiTriple,
    Scheme,
    SolverConfig,
    StructuralParams,
)
from .presets import PRESETS, build_spec
from .radial import solve_radial_bvp, solve_radial_ivp
from .runner import (
    BOUNDARY_TERMS,
    ExperimentConfig,
    ProfileRecord,
    ReportFormat,
    atomic_write,
    collect_profiles,
    csv_text,
    emit_report,
    format_number,
    load_config,
    profiles_csv,
    resolve_output_dir,
    run_batch,
)

logger = logging.getLogger(__name__)


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def _params(args: argparse.Namespace) -> StructuralParams:
    return StructuralParams(n=args.n, p=args.p, a0=args.a0, a1=args.a1, b1=args.b1)


def _dump(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_bounds(args: argparse.Namespace) -> int:
    """Print the weight of one bound mode on one triple, with its large-r3 limits and optional extras."""
    params = _params(args)
    triple = RadiiTriple.of(args.radii)
    mode = BoundMode(args.mode)
    conv = CapacityConvention(normalization=args.normalization)
    bound = make_bound(mode, params, triple, args.C, conv)
    payload = {
        "params": params.model_dump(),
        "regime": params.regime.value,
        "bound": bound.model_dump(mode="json", by_alias=True),
    }
    if mode not in CLASSICAL_MODES:
        payload["exponent"] = lambda_exponent(mode, params, triple, conv)
    if args.C is not None and mode not in CLASSICAL_MODES:
        payload["lambda_infinity"] = lambda_infinity(args.C)
        if mode in (BoundMode.BORDER_N, BoundMode.A_HARMONIC_N):
            payload["lambda_limit"] = lambda_limit(mode, params, triple.r1, triple.r2, args.C)
    if args.transformed:
        payload["transformed_radii"] = [transformed_radius(params, r) for r in triple.as_tuple()]
    if args.capacity:
        r, R = args.capacity
        payload["capacity"] = pcapacity(params, r, R, conv)
    sys.stdout.write(_dump(payload))
    return 0


def cmd_radial(args: argparse.Namespace) -> int:
    """Integrate the radial reduction (IVP with --du-in, shooting BVP with --u-out)."""
    params = _params(args)
    spec = build_spec(args.preset, params, EnvelopeMode(args.envelope))
    if (args.du_in is None) == (args.u_out is None):
        raise InvalidInputError("give exactly one of --du-in (initial value problem) or --u-out (boundary value problem)")
    if args.u_out is None:
        prof = solve_radial_ivp(spec, args.r_in, args.u_in, args.du_in, args.r_out, args.steps)
    else:
        prof = solve_radial_bvp(spec, args.r_in, args.u_in, args.r_out, args.u_out, args.steps)

    target = resolve_output_dir(override=args.output_dir) / args.name
    rows = [
        (format_number(r), format_number(u), format_number(du))
        for r, u, du in zip(prof.mesh, prof.values, prof.derivative_values, strict=True)
    ]
    meta = {
        "preset": args.preset,
        "params": params.model_dump(),
        "envelope": args.envelope,
        "provenance": prof.provenance.value,
        "r_in": prof.r_in,
        "r_out": prof.r_out,
        "steps": args.steps,
        "u_out": float(prof.values[-1]),
        "du_in": float(prof.derivative_values[0]),
    }
    atomic_write(target / "radial.csv", csv_text(("r", "u", "du"), rows))
    atomic_write(target / "radial.json", _dump(meta))
    logger.info(f"Wrote {target / 'radial.csv'} and {target / 'radial.json'}")
    return 0


def cmd_fdm(args: argparse.Namespace) -> int:
    """Solve one 2-D Dirichlet problem and write the nodal values."""
    params = _params(args)
    if params.n != 2:
        raise InvalidInputError("the grid solver is planar; use --n 2")
    spec = build_spec(args.preset, params, EnvelopeMode(args.envelope))
    cfg = SolverConfig(
        epsilon=args.epsilon if args.epsilon is not None else settings.fdm_epsilon,
        tol=args.tol if args.tol is not None else settings.fdm_tol,
        max_iter=args.max_iter if args.max_iter is not None else settings.fdm_max_iter,
        scheme=Scheme(args.scheme),
        damping=args.damping,
        band_rule=BandRule(args.band_rule),
    )
    template = disk_grid(args.radius, args.h, tuple(args.center), args.inner_radius)
    boundary = BOUNDARY_TERMS[args.boundary](params, philox_generator(args.seed))
    solution = solve_dirichlet(spec, boundary, template, cfg)

    X, Y = solution.coordinates()
    live = solution.mask != NodeKind.EXTERIOR
    header = ("x", "y", "kind", "u") if args.node_kinds else ("x", "y", "u")
    rows = []
    for x, y, k, u in zip(X[live], Y[live], solution.mask[live], solution.values[live], strict=True):
        kind = (NodeKind(int(k)).name.lower(),) if args.node_kinds else ()
        rows.append((format_number(x), format_number(y), *kind, format_number(u)))
    interior_max = float(np.max(solution.values[solution.interior])) if solution.interior.any() else None
    band_max = float(np.max(solution.values[solution.band]))
    meta = {
        "preset": args.preset,
        "params": params.model_dump(),
        "boundary": args.boundary,
        "h": args.h,
        "radius": args.radius,
        "inner_radius": args.inner_radius,
        "report": solution.report.model_dump(mode="json"),
        "interior_max": interior_max,
        "band_max": band_max,
    }
    target = resolve_output_dir(override=args.output_dir) / args.name
    atomic_write(target / "nodes.csv", csv_text(header, rows))
    atomic_write(target / "solve.json", _dump(meta))
    logger.info(f"Wrote {target / 'nodes.csv'} and {target / 'solve.json'}")
    return 0


def _load_configs(args: argparse.Namespace) -> list[ExperimentConfig]:
    configs = [load_config(path) for path in args.config]
    if args.seed is not None:
        configs = [cfg.model_copy(update={"seed": args.seed}) for cfg in configs]
    return configs


def cmd_profile(args: argparse.Namespace) -> int:
    """Materialize the sources of each config and write their (r, M, m) profiles only."""
    for cfg in _load_configs(args):
        members = collect_profiles(cfg)
        records = [ProfileRecord.from_profile(m.label, m.profile) for m in members]
        path = resolve_output_dir(cfg, args.output_dir) / cfg.name / "profiles.csv"
        atomic_write(path, profiles_csv(records))
        logger.info(f"Wrote {path}")
    return 0


def _run_configs(args: argparse.Namespace, configs: list[ExperimentConfig]) -> int:
    results = run_batch(configs, output_dir=args.output_dir)
    for result in results:
        if result.bundle is not None and args.format:
            sys.stdout.write(emit_report(result.bundle, args.format))
    if any(r.error is not None and not r.gate_failed for r in results):
        return 1
    if any(r.gate_failed for r in results):
        return 2
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    configs = _load_configs(args)
    for cfg in configs:
        if cfg.bound.calibrate:
            raise ConfigError(f"'{cfg.name}' asks for calibration; use the calibrate subcommand")
    return _run_configs(args, configs)


def cmd_calibrate(args: argparse.Namespace) -> int:
    configs = _load_configs(args)
    for cfg in configs:
        if not cfg.bound.calibrate:
            raise ConfigError(f"'{cfg.name}' has a fixed bound; set bound.C to \"calibrate\"")
    return _run_configs(args, configs)


def cmd_run(args: argparse.Namespace) -> int:
    return _run_configs(args, _load_configs(args))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_params(parser: argparse.ArgumentParser, p: float = 2.0) -> None:
    parser.add_argument("--n", type=int, default=2, help="Space dimension")
    parser.add_argument("--p", type=float, default=p, help="Growth exponent p > 1")
    parser.add_argument("--a0", type=float, default=1.0, help="Ellipticity lower bound")
    parser.add_argument("--a1", type=float, default=1.0, help="Growth upper bound")
    parser.add_argument("--b1", type=float, default=0.0, help="Drift envelope constant")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=None, help="Output directory (overrides OUTPUT_DIR and configs)")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    batch = argparse.ArgumentParser(add_help=False)
    batch.add_argument("--config", action="append", required=True, help="Experiment config JSON (repeatable)")
    batch.add_argument("--seed", type=int, default=None, help="Override the config seed")
    batch.add_argument(
        "--format", choices=[f.value for f in ReportFormat], default=None, help="Also print each report to stdout"
    )

    parser = argparse.ArgumentParser(
        prog="threespheres",
        description="Three-spheres inequalities for quasilinear equations with Riccati-type drift",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bounds = sub.add_parser("bounds", parents=[common], help="Evaluate a convexity weight on a radii triple")
    _add_params(bounds)
    bounds.add_argument("--mode", required=True, choices=[m.value for m in BoundMode])
    bounds.add_argument("--radii", type=float, nargs=3, required=True, metavar=("R1", "R2", "R3"))
    bounds.add_argument("--C", type=float, default=None, help="Constant of the explicit modes")
    bounds.add_argument("--normalization", type=float, default=None, help="Capacity normalization multiplier")
    bounds.add_argument("--capacity", type=float, nargs=2, default=None, metavar=("r", "R"),
                        help="Also print the p-capacity of the condenser (B_r, B_R)")
    bounds.add_argument("--transformed", action="store_true",
                        help="Also print the convexity coordinate of each radius (p <= n)")
    bounds.set_defaults(func=cmd_bounds)

    radial = sub.add_parser("radial", parents=[common], help="Integrate a radial solution")
    _add_params(radial)
    radial.add_argument("--preset", default="p-laplace", choices=sorted(PRESETS))
    radial.add_argument("--envelope", default=EnvelopeMode.GLOBAL_DECAY.value, choices=[e.value for e in EnvelopeMode])
    radial.add_argument("--r-in", type=float, default=1.0)
    radial.add_argument("--r-out", type=float, default=8.0)
    radial.add_argument("--u-in", type=float, default=0.0)
    radial.add_argument("--du-in", type=float, default=None)
    radial.add_argument("--u-out", type=float, default=None)
    radial.add_argument("--steps", type=int, default=512)
    radial.add_argument("--name", default="radial", help="Output subdirectory")
    radial.set_defaults(func=cmd_radial)

    fdm = sub.add_parser("fdm", parents=[common], help="Solve a 2-D Dirichlet problem on a disk or annulus")
    _add_params(fdm)
    fdm.add_argument("--preset", default="p-laplace", choices=sorted(PRESETS))
    fdm.add_argument("--envelope", default=EnvelopeMode.GLOBAL_DECAY.value, choices=[e.value for e in EnvelopeMode])
    fdm.add_argument("--boundary", default="x2-y2", choices=sorted(BOUNDARY_TERMS))
    fdm.add_argument("--radius", type=float, default=1.0)
    fdm.add_argument("--inner-radius", type=float, default=0.0)
    fdm.add_argument("--center", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Y"))
    fdm.add_argument("--h", type=float, default=1.0 / 64.0)
    fdm.add_argument("--scheme", default=Scheme.PICARD.value, choices=[s.value for s in Scheme])
    fdm.add_argument("--epsilon", type=float, default=None)
    fdm.add_argument("--tol", type=float, default=None)
    fdm.add_argument("--max-iter", type=int, default=None)
    fdm.add_argument("--damping", type=float, default=1.0)
    fdm.add_argument("--band-rule", default=BandRule.DIRECT.value, choices=[b.value for b in BandRule])
    fdm.add_argument("--seed", type=int, default=0, help="Seed for random boundary data")
    fdm.add_argument("--node-kinds", action="store_true", help="Add the node kind (interior, band) column to nodes.csv")
    fdm.add_argument("--name", default="fdm", help="Output subdirectory")
    fdm.set_defaults(func=cmd_fdm)

    for name, func, text in (
        ("profile", cmd_profile, "Write the (r, M, m) profiles of config sources"),
        ("verify", cmd_verify, "Check a fixed bound against config sources"),
        ("calibrate", cmd_calibrate, "Calibrate the constant of an explicit bound, then check it"),
        ("run", cmd_run, "Run any experiment configs"),
    ):
        cmd = sub.add_parser(name, parents=[common, batch], help=text)
        cmd.set_defaults(func=func)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except VerificationGateError as exc:
        logger.error(str(exc))
        return 2
    except (ThreeSpheresError, ValidationError) as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return 1


def cli() -> None:
    """CLI entry point."""
    sys.exit(main())


if __name__ == "__main__":
    cli()

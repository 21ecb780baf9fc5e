"""Checks of the arithmetic three-spheres inequality against sampled profiles.

Also calibrates the unspecified constant of the explicit weights, computes the
energy ratios behind the estimates, and replays the Liouville contradiction.
"""

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline

from .ballstats import Source, empirical_lambda_star, profile
from .bounds import lambda_exponent, lambda_formula, regime_modes, sphere_area
from .config import settings
from .errors import InvalidInputError, MonotonicityError, RegimeMismatchError
from .models import (
    BallProfile,
    BoundMode,
    CalibrationResult,
    CapacityConvention,
    EnvelopeMode,
    Geometry,
    GridFunction2D,
    LambdaStar,
    PhiMode,
    RadialProfile,
    RadiiTriple,
    Regime,
    StructuralParams,
    ThreeSpheresBound,
    VerificationReport,
)
from .radial import ExactRadialSolution

logger = logging.getLogger(__name__)

BoundFn = Callable[[BallProfile, RadiiTriple], ThreeSpheresBound]


def _triple_values(prof: BallProfile, triple: RadiiTriple, dual: bool) -> tuple[float, float, float]:
    data = prof.m if dual else prof.M
    try:
        return tuple(float(data[prof.index_of(r)]) for r in triple.as_tuple())
    except KeyError as exc:
        raise InvalidInputError(f"radius {exc.args[0]} is not sampled by the profile") from None


def _scale(v1: float, v2: float, v3: float) -> float:
    spread = abs(v3 - v1)
    return spread if spread > 0.0 else max(abs(v1), abs(v2), abs(v3))


def check_three_spheres(
    prof: BallProfile,
    bound: ThreeSpheresBound,
    dual: bool = False,
    tol: float | None = None,
    local: bool = False,
) -> VerificationReport:
    """Margin of lam M(r1) + (1 - lam) M(r3) - M(r2), or of the minimum form when ``dual``.

    ``tol`` defaults to the configured relative tolerance times the oscillation
    of the sampled values over the triple. ``local`` is the form for a constant
    drift envelope and r3 <= 1.
    """
    if bound.mode not in regime_modes(prof.params):
        raise RegimeMismatchError(
            f"bound mode {bound.mode.value} does not match regime {prof.params.regime.value} of the profile"
        )
    triple = bound.triple
    if local:
        if prof.envelope != EnvelopeMode.CONSTANT:
            raise RegimeMismatchError(
                f"local inequality needs a constant drift envelope, the profile has {prof.envelope.value}"
            )
        if triple.r3 > 1.0:
            raise InvalidInputError(f"local inequality needs r3 <= 1, got r3={triple.r3}")
    v1, v2, v3 = _triple_values(prof, triple, dual)
    lam = bound.lam
    margin = v2 - lam * v1 - (1.0 - lam) * v3 if dual else lam * v1 + (1.0 - lam) * v3 - v2
    tol = settings.verify_tol * _scale(v1, v2, v3) if tol is None else tol
    try:
        star: LambdaStar | None = empirical_lambda_star(prof, triple, dual=dual)
    except MonotonicityError:
        star = None
    return VerificationReport(
        triple=triple, lambda_used=lam, margin=margin, passed=margin >= -tol, dual=dual, tol=tol, lambda_star=star
    )


def _family_pairs(
    profiles: Sequence[BallProfile], triples: Sequence[RadiiTriple] | Sequence[Sequence[RadiiTriple]]
) -> list[tuple[int, BallProfile, RadiiTriple]]:
    if len(profiles) == 0:
        raise InvalidInputError("the family is empty")
    if len(triples) == 0:
        raise InvalidInputError("no triples given")
    if isinstance(triples[0], RadiiTriple):
        per_profile = [triples] * len(profiles)
    else:
        if len(triples) != len(profiles):
            raise InvalidInputError("need one triple list per profile")
        per_profile = triples
    return [(k, prof, t) for k, prof in enumerate(profiles) for t in per_profile[k]]


def calibrate_constant(
    profiles: Sequence[BallProfile],
    triples: Sequence[RadiiTriple] | Sequence[Sequence[RadiiTriple]],
    mode: BoundMode,
    conv: CapacityConvention | None = None,
    dual: bool = False,
) -> CalibrationResult:
    """Smallest C making exp(-C K) <= lambda* on every (profile, triple) of the family."""
    best = -1.0
    binding: tuple[int, RadiiTriple] | None = None
    pairs = _family_pairs(profiles, triples)
    for k, prof, triple in pairs:
        star = empirical_lambda_star(prof, triple, dual=dual)
        if star == "all":
            raise InvalidInputError(f"profile {k} is constant on {triple.as_tuple()}; every lambda is admissible")
        if star <= 0.0:
            raise InvalidInputError(f"profile {k} has lambda*=0 on {triple.as_tuple()}; no finite constant works")
        K = lambda_exponent(mode, prof.params, triple, conv)
        C = -math.log(star) / K
        if C > best:
            best, binding = C, (k, triple)
    if binding is None or best <= 0.0:
        raise InvalidInputError("every member admits lambda = 1; the constant is not identifiable")
    result = CalibrationResult(
        C_min=best, family_size=len(pairs), binding_triple=binding[1], binding_index=binding[0], mode=mode
    )
    logger.info(
        f"Calibrated {mode.value}: C_min={result.C_min:.6g} over {result.family_size} members, "
        f"binding profile {result.binding_index} at {result.binding_triple.as_tuple()}"
    )
    return result


def family_lambda_floor(
    profiles: Sequence[BallProfile],
    triples: Sequence[RadiiTriple] | Sequence[Sequence[RadiiTriple]],
    dual: bool = False,
) -> float:
    """Smallest empirical lambda* over a family; constant members impose nothing."""
    stars = [
        star
        for _, prof, triple in _family_pairs(profiles, triples)
        if (star := empirical_lambda_star(prof, triple, dual=dual)) != "all"
    ]
    if not stars:
        raise InvalidInputError("every member is constant on its triples; no weight floor exists")
    floor = min(stars)
    if floor <= 0.0:
        raise InvalidInputError("some member has lambda* = 0; no positive weight works")
    logger.info(f"Weight floor {floor:.6g} over {len(stars)} (profile, triple) pairs")
    return floor


def validate_constant(
    profiles: Sequence[BallProfile],
    triples: Sequence[RadiiTriple] | Sequence[Sequence[RadiiTriple]],
    mode: BoundMode,
    C: float,
    conv: CapacityConvention | None = None,
    dual: bool = False,
) -> list[VerificationReport]:
    """Hold-out check of a calibrated constant on a second family."""
    reports = []
    for _, prof, triple in _family_pairs(profiles, triples):
        lam = lambda_formula(mode, prof.params, triple, C, conv)
        bound = ThreeSpheresBound(triple=triple, lam=lam, mode=mode, C=C)
        reports.append(check_three_spheres(prof, bound, dual=dual))
    failed = sum(not r.passed for r in reports)
    logger.info(f"Hold-out for {mode.value} with C={C:.6g}: {len(reports) - failed}/{len(reports)} passed")
    return reports


# ---------------------------------------------------------------------------
# Energy ratios
# ---------------------------------------------------------------------------

def _phi_slope(mode: PhiMode, anchor: float, eps: float) -> Callable[[np.ndarray], np.ndarray]:
    """|phi'(t)| of the logarithmic convex functions, anchored at M(r3) or m(r3)."""
    if mode == PhiMode.LOG_SUB:
        return lambda t: 1.0 / (anchor - t + eps)
    return lambda t: 1.0 / (t - anchor + eps)


def _radial_energy(
    source: ExactRadialSolution | RadialProfile, slope: Callable, lo: float, hi: float, p: float, n: int
) -> float:
    if isinstance(source, ExactRadialSolution):
        u, du = source.value, source.derivative
    else:
        spline = CubicHermiteSpline(source.mesh, source.values, source.derivative_values)
        u, du = spline, spline.derivative()

    def integrand(r: float) -> float:
        return r ** (n - 1) * abs(slope(u(r)) * du(r)) ** p

    value, _ = quad(integrand, lo, hi, limit=200, epsabs=0.0, epsrel=1e-10)
    return sphere_area(n) * value


def _grid_energy(
    source: GridFunction2D, slope: Callable, center: tuple[float, ...], lo: float, hi: float, p: float
) -> float:
    u = np.where(np.isnan(source.values), 0.0, source.values)
    gx, gy = np.gradient(u, source.h, source.h)
    X, Y = source.coordinates()
    dist = np.hypot(X - center[0], Y - center[1])
    sel = source.interior & (dist <= hi) & (dist >= lo)
    if not sel.any():
        raise InvalidInputError("no interior nodes in the integration region")
    density = np.abs(slope(u[sel])) ** p * np.hypot(gx[sel], gy[sel]) ** p
    return float(density.sum() * source.h**2)


def energy_ratio_diagnostic(
    source: Source,
    params: StructuralParams,
    phi_mode: PhiMode,
    triple: RadiiTriple,
    epsilon: float | None = None,
    center: tuple[float, ...] | None = None,
) -> float:
    """Ratio of the phi(u) energy to the right-hand side of the matching estimate.

    p != n: integral over B_{(r2+r3)/2} of |D phi(u)|^p, times delta^p / r3^(n-p)
    with delta = (r3 - r2)/(2 r3). p = n: integral over the annulus between r2
    and (r2+r3)/2, divided by the sum of the three logarithmic terms. Radial
    sources integrate over annuli starting at r1.
    """
    r1, r2, r3 = triple.as_tuple()
    n, p = params.n, params.p
    stats = profile(source, center, [r1, r3], Geometry.BALL_MAX, params=params)
    if phi_mode == PhiMode.LOG_SUB:
        anchor, spread = float(stats.M[1]), float(stats.M[1] - stats.M[0])
    else:
        anchor, spread = float(stats.m[1]), float(stats.m[0] - stats.m[1])
    if epsilon is None:
        base = spread if spread > 0.0 else max(1.0, abs(anchor))
        epsilon = settings.energy_epsilon_factor * base
    if epsilon < 0.0:
        raise InvalidInputError("epsilon must be nonnegative")
    if epsilon == 0.0 and spread == 0.0:
        raise InvalidInputError("degenerate phi: zero oscillation on the triple and epsilon = 0")
    slope = _phi_slope(phi_mode, anchor, epsilon)

    mid = 0.5 * (r2 + r3)
    border = params.regime == Regime.BORDER_N
    if isinstance(source, GridFunction2D):
        ctr = tuple(source.center) if center is None else tuple(center)
        lo = r2 if border else 0.0
        energy = _grid_energy(source, slope, ctr, lo, mid, p)
    else:
        lo = r2 if border else r1
        energy = _radial_energy(source, slope, lo, mid, p, n)

    if border:
        S = math.log(2.0 * r3 / (r2 + r3)) ** (1 - n) + math.log(r2 / r1) ** (1 - n) + math.log(r3 / r1)
        return energy / S
    delta = (r3 - r2) / (2.0 * r3)
    return energy * delta**p / r3 ** (n - p)


# ---------------------------------------------------------------------------
# Liouville arithmetic
# ---------------------------------------------------------------------------

def liouville_check(M_bound: float, lambda_inf: float, M_r1: float, M_r2: float, tol: float | None = None) -> bool:
    """True when M(r2) - (1 - lam) M exceeds lam M(r1): the bounded-solution inequality fails."""
    if not (0.0 < lambda_inf < 1.0):
        raise InvalidInputError(f"lambda_inf must lie in (0, 1), got {lambda_inf}")
    for label, value in (("M_r1", M_r1), ("M_r2", M_r2)):
        if not (0.0 <= value <= M_bound):
            raise InvalidInputError(f"{label}={value} lies outside [0, {M_bound}]")
    tol = settings.verify_tol * M_bound if tol is None else tol
    return M_r2 - (1.0 - lambda_inf) * M_bound > lambda_inf * M_r1 + tol


def liouville_witness(prof: BallProfile, lambda_inf: float) -> tuple[float, float] | None:
    """First radii pair r1 < r2 of a bounded profile on which liouville_check fires."""
    shift = float(prof.m.min())
    levels = prof.M - shift
    bound = float(levels.max())
    for i in range(prof.radii.size):
        for j in range(i + 1, prof.radii.size):
            if liouville_check(bound, lambda_inf, float(levels[i]), float(levels[j])):
                return float(prof.radii[i]), float(prof.radii[j])
    return None


# ---------------------------------------------------------------------------
# Family sweeps
# ---------------------------------------------------------------------------

def sweep(
    profiles: Sequence[BallProfile],
    triples: Sequence[RadiiTriple] | Sequence[Sequence[RadiiTriple]],
    bound_fn: BoundFn,
    dual: bool = False,
    max_workers: int | None = None,
) -> list[VerificationReport]:
    """check_three_spheres over a family; reports come back ordered by (profile, triple)."""
    pairs = _family_pairs(profiles, triples)
    keyed = [((k, j), prof, t) for j, (k, prof, t) in enumerate(pairs)]

    def run(item):
        key, prof, triple = item
        return key, check_three_spheres(prof, bound_fn(prof, triple), dual=dual)

    with ThreadPoolExecutor(max_workers=max_workers or settings.max_workers) as pool:
        results = list(pool.map(run, keyed))
    results.sort(key=lambda kr: kr[0])
    return [report for _, report in results]

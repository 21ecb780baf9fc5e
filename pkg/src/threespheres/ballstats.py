import logging
from collections.abc import Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .bounds import classical_weight
from .config import settings
from .errors import InvalidInputError, MonotonicityError
from .models import (
    BallProfile,
    ConvexityReport,
    EnvelopeMode,
    Geometry,
    GridFunction2D,
    LambdaStar,
    NodeKind,
    RadialProfile,
    RadiiTriple,
    SourceRole,
    StructuralParams,
)
from .radial import ExactRadialSolution

logger = logging.getLogger(__name__)

RadialSource = ExactRadialSolution | RadialProfile
Source = RadialSource | GridFunction2D

_BALL_SAMPLES = 2049


def _radial_values(source: RadialSource, r: np.ndarray) -> np.ndarray:
    if isinstance(source, ExactRadialSolution):
        return np.asarray(source.value(r), dtype=float)
    spline = CubicHermiteSpline(source.mesh, source.values, source.derivative_values)
    return np.asarray(spline(r), dtype=float)


def _radial_domain(source: RadialSource, radii: np.ndarray, inner_radius: float | None) -> tuple[float, float]:
    if isinstance(source, ExactRadialSolution):
        lo = max(source.r_min, float(radii[0])) if inner_radius is None else inner_radius
        return lo, np.inf
    lo = source.r_in if inner_radius is None else inner_radius
    return lo, source.r_out


def _radial_profile(
    source: RadialSource, radii: np.ndarray, geometry: Geometry, inner_radius: float | None
) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = _radial_domain(source, radii, inner_radius)
    slack = 1e-12 * max(1.0, float(radii[-1]))
    if radii[0] < lo - slack or radii[-1] > hi + slack:
        raise InvalidInputError(f"radii [{radii[0]}, {radii[-1]}] leave the radial domain [{lo}, {hi}]")
    if isinstance(source, ExactRadialSolution) and lo < source.r_min:
        raise InvalidInputError(f"inner radius {lo} lies below the admissible radius {source.r_min}")
    on_sphere = _radial_values(source, radii)
    if geometry == Geometry.SPHERE_MAX:
        return on_sphere, on_sphere.copy()

    # Ball statistics over the annulus [lo, r]: dense samples plus the endpoints.
    M = np.empty_like(radii)
    m = np.empty_like(radii)
    for k, r in enumerate(radii):
        if r <= lo:
            M[k] = m[k] = on_sphere[k]
            continue
        grid = np.linspace(lo, r, _BALL_SAMPLES)
        if isinstance(source, RadialProfile):
            grid = np.union1d(grid, source.mesh[(source.mesh >= lo) & (source.mesh <= r)])
        vals = _radial_values(source, grid)
        M[k] = max(float(vals.max()), on_sphere[k])
        m[k] = min(float(vals.min()), on_sphere[k])
    return M, m


def _grid_profile(
    source: GridFunction2D, center: tuple[float, float], radii: np.ndarray, geometry: Geometry
) -> tuple[np.ndarray, np.ndarray]:
    h = source.h
    if radii[0] < 2.0 * h:
        raise InvalidInputError(f"radius {radii[0]} is below 2h={2.0 * h}")
    offset = float(np.hypot(center[0] - source.center[0], center[1] - source.center[1]))
    slack = 1e-12 * source.radius
    if radii[-1] + offset > source.radius + slack:
        raise InvalidInputError(f"ball of radius {radii[-1]} about {center} leaves the disk of radius {source.radius}")
    if source.inner_radius > 0.0 and radii[-1] > offset - source.inner_radius + slack:
        raise InvalidInputError(f"ball of radius {radii[-1]} about {center} reaches the hole of the annulus")

    X, Y = source.coordinates()
    dist = np.hypot(X - center[0], Y - center[1])
    live = source.mask != NodeKind.EXTERIOR
    M = np.empty_like(radii)
    m = np.empty_like(radii)
    for k, r in enumerate(radii):
        if geometry == Geometry.BALL_MAX:
            sel = live & (dist <= r + slack)
        else:
            sel = live & (dist <= r + slack) & (dist >= r - h - slack)
        if not sel.any():
            raise InvalidInputError(f"no grid nodes in the {geometry.value} selection at r={r}")
        vals = source.values[sel]
        M[k] = float(vals.max())
        m[k] = float(vals.min())
    return M, m


def _check_monotone(M: np.ndarray, m: np.ndarray, role: SourceRole | None) -> None:
    scale = 1e-12 * (1.0 + float(np.max(np.abs(np.concatenate([M, m])))))
    if role in (SourceRole.SUBSOLUTION, SourceRole.SOLUTION) and np.any(np.diff(M) < -scale):
        k = int(np.flatnonzero(np.diff(M) < -scale)[0])
        raise MonotonicityError(f"M decreases between radius index {k} and {k + 1}: {M[k]:.12g} > {M[k + 1]:.12g}")
    if role in (SourceRole.SUPERSOLUTION, SourceRole.SOLUTION) and np.any(np.diff(m) > scale):
        k = int(np.flatnonzero(np.diff(m) > scale)[0])
        raise MonotonicityError(f"m increases between radius index {k} and {k + 1}: {m[k]:.12g} < {m[k + 1]:.12g}")


def profile(
    source: Source,
    center: tuple[float, ...] | None,
    radii: Sequence[float],
    geometry: Geometry = Geometry.BALL_MAX,
    *,
    role: SourceRole | None = None,
    params: StructuralParams | None = None,
    inner_radius: float | None = None,
    envelope: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY,
) -> BallProfile:
    """M(r) and m(r) of ``source`` over concentric balls (or spheres).

    Radial sources are centered at the origin; their balls are the annuli
    [inner_radius, r] (default: the source's inner radius). Grid sources use
    nodes within distance r of ``center`` (ball_max) or in the shell [r - h, r]
    (sphere_max). ``envelope`` records the drift envelope of the source's equation.
    """
    radii_arr = np.asarray(radii, dtype=float)
    if radii_arr.ndim != 1 or radii_arr.size == 0 or np.any(np.diff(radii_arr) <= 0.0) or radii_arr[0] <= 0.0:
        raise InvalidInputError("radii must be positive and strictly increasing")

    if isinstance(source, GridFunction2D):
        if params is None:
            raise InvalidInputError("grid sources need the structural parameters of their equation")
        ctr = tuple(source.center) if center is None else tuple(center)
        M, m = _grid_profile(source, ctr, radii_arr, geometry)
    else:
        n = source.params.n
        ctr = tuple([0.0] * n) if center is None else tuple(center)
        if any(c != 0.0 for c in ctr):
            raise InvalidInputError("radial sources are centered at the origin")
        M, m = _radial_profile(source, radii_arr, geometry, inner_radius)
        params = params or source.params

    _check_monotone(M, m, role)
    return BallProfile(
        center=ctr, radii=radii_arr, M=M, m=m, geometry=geometry, params=params, role=role, envelope=envelope,
        source=source,
    )


def empirical_lambda_star(prof: BallProfile, triple: RadiiTriple, dual: bool = False) -> LambdaStar:
    """Largest lambda for which the arithmetic inequality holds on ``triple``.

    ``dual`` inverts the minimum form on m(r) instead of M(r).
    """
    if dual:
        prof = prof.negated()
    try:
        idx = [prof.index_of(r) for r in triple.as_tuple()]
    except KeyError as exc:
        raise InvalidInputError(f"radius {exc.args[0]} is not sampled by the profile") from None
    M1, M2, M3 = (float(prof.M[i]) for i in idx)
    if not (M1 <= M2 <= M3):
        raise MonotonicityError(f"non-monotone {'m' if dual else 'M'} on {triple.as_tuple()}: ({M1}, {M2}, {M3})")
    if M3 == M1:
        return "all"
    return (M3 - M2) / (M3 - M1)


def convexity_check(prof: BallProfile, params: StructuralParams | None = None, tol: float | None = None) -> ConvexityReport:
    """Classical convexity margins on every consecutive radii triple."""
    params = params or prof.params
    if prof.radii.size < 3:
        raise InvalidInputError("convexity needs at least three radii")
    margins = []
    for k in range(prof.radii.size - 2):
        triple = RadiiTriple(r1=prof.radii[k], r2=prof.radii[k + 1], r3=prof.radii[k + 2])
        lam = classical_weight(params, triple)
        margins.append(float(lam * prof.M[k] + (1.0 - lam) * prof.M[k + 2] - prof.M[k + 1]))
    scale = float(np.max(prof.M) - np.min(prof.M)) or max(1.0, float(np.max(np.abs(prof.M))))
    tol = settings.verify_tol * scale if tol is None else tol
    worst = min(margins)
    return ConvexityReport(min_margin=worst, convex=worst >= -tol, margins=margins, tol=tol)

"""Manufactured solution families for calibration and property sweeps.

Randomized members draw from numpy's Philox counter-based generator keyed by
the run seed, so a (family, seed) pair always reproduces the same members.
"""

import itertools
import logging
from collections.abc import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .ballstats import profile
from .errors import InvalidInputError
from .fdm2d import disk_grid, solve_dirichlet
from .models import BallProfile, Geometry, RadiiTriple, SolverConfig, SourceRole, StructuralParams
from .presets import build_spec
from .radial import extremal_drift_solution, fundamental_solution, reflected_solution, solve_radial_bvp

logger = logging.getLogger(__name__)

SUB_N_RADII = (1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0)
BORDER_RADII = (1.0, 2.0, 3.0, 4.0, 6.0, 8.0)
GRID_RADII = (0.125, 0.25, 0.375, 0.5, 0.75, 1.0)


class ProfileFamily(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    profiles: list[BallProfile]
    triples: list[RadiiTriple]


def philox_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def admissible_triples(
    radii: Sequence[float],
    ordered_ratios: bool = False,
    tau: float | None = None,
    kappa: float | None = None,
) -> list[RadiiTriple]:
    """Increasing triples from ``radii``.

    Optional filters: r1/r2 < r2/r3 (``ordered_ratios``), tau <= r1/r2 and
    r2/r3 <= kappa. Lambda* tends to 0 as r1/r2 -> 0 or r2/r3 -> 1.
    """
    out = []
    slack = 1e-12
    for r1, r2, r3 in itertools.combinations(sorted(radii), 3):
        if ordered_ratios and not (r1 / r2 < r2 / r3):
            continue
        if tau is not None and r1 / r2 < tau - slack:
            continue
        if kappa is not None and r2 / r3 > kappa + slack:
            continue
        out.append(RadiiTriple(r1=r1, r2=r2, r3=r3))
    return out


def _radial_member(source, radii: Sequence[float]) -> BallProfile:
    return profile(source, None, radii, Geometry.SPHERE_MAX, role=SourceRole.SUBSOLUTION)


def _super_member(source, radii: Sequence[float]) -> BallProfile:
    return profile(source, None, radii, Geometry.BALL_MAX, role=SourceRole.SUPERSOLUTION)


def negated_family(family: ProfileFamily) -> ProfileFamily:
    """Profiles of -u: supersolutions of the sign-flipped equations."""
    return family.model_copy(
        update={"name": f"{family.name}-negated", "profiles": [p.negated() for p in family.profiles]}
    )


# ---------------------------------------------------------------------------
# 1 < p < n
# ---------------------------------------------------------------------------

def sub_n_family(seed: int = 0, bvp_per_branch: int = 6, steps: int = 128) -> ProfileFamily:
    """p=2, n=3 subsolutions with saturated drift envelope on the annulus [1, 8].

    Exact members: extremal-drift solutions for b1 in {0.5, 0.75, 1}, both signs,
    under affine changes u -> s u + c, plus increasing fundamental solutions.
    Numeric members: shooting solutions of the extremal presets with boundary
    values jittered around the exact ones.
    """
    radii = SUB_N_RADII
    rng = philox_generator(seed)
    members: list[BallProfile] = []
    for b1 in (0.5, 0.75, 1.0):
        params = StructuralParams(n=3, p=2.0, b1=b1)
        for sign, scale, u0 in itertools.product((1, -1), (1.0, 2.5), (0.0, -3.0)):
            members.append(_radial_member(extremal_drift_solution(params, sign, u0, 1.0, scale), radii))
    base = StructuralParams(n=3, p=2.0, b1=1.0)
    for a, b in itertools.product((0.0, 1.0), (-1.0, -2.0)):
        members.append(_radial_member(fundamental_solution(base, a, b), radii))

    r_in, r_out = radii[0], radii[-1]
    for b1, sign in itertools.product((0.5, 1.0), (1, -1)):
        params = StructuralParams(n=3, p=2.0, b1=b1)
        spec = build_spec("riccati-extremal-plus" if sign > 0 else "riccati-extremal-minus", params)
        exact = extremal_drift_solution(params, sign, 0.0, r_in)
        rise = float(exact.value(r_out))
        for _ in range(bvp_per_branch):
            u_in = float(rng.uniform(-1.0, 1.0))
            u_out = u_in + rise * float(rng.uniform(0.5, 2.0))
            prof = solve_radial_bvp(spec, r_in, u_in, r_out, u_out, steps=steps)
            members.append(_radial_member(prof, radii))

    triples = admissible_triples(radii, ordered_ratios=True, tau=0.4, kappa=0.8)
    logger.info(f"sub_n family: {len(members)} profiles, {len(triples)} triples")
    return ProfileFamily(name="sub-n", profiles=members, triples=triples)


def sub_n_super_family() -> ProfileFamily:
    """p=2, n=3 decreasing supersolutions on [1, 8], measured over balls.

    Reflections -v of the exact members of ``sub_n_family`` (b1 in {0.5, 0.75, 1})
    and decreasing fundamental solutions a + b/r with b > 0. On a ball the
    minimum sits on the outer sphere, so m(r) = u(r) while M(r) = u(1).
    """
    radii = SUB_N_RADII
    members: list[BallProfile] = []
    for b1 in (0.5, 0.75, 1.0):
        params = StructuralParams(n=3, p=2.0, b1=b1)
        for sign, scale, u0 in itertools.product((1, -1), (1.0, 2.5), (0.0, -3.0)):
            mirror = reflected_solution(extremal_drift_solution(params, sign, u0, 1.0, scale))
            members.append(_super_member(mirror, radii))
    base = StructuralParams(n=3, p=2.0, b1=1.0)
    for a, b in itertools.product((0.0, -1.0), (1.0, 2.0)):
        members.append(_super_member(fundamental_solution(base, a, b), radii))

    triples = admissible_triples(radii, ordered_ratios=True, tau=0.4, kappa=0.8)
    logger.info(f"sub_n supersolution family: {len(members)} profiles, {len(triples)} triples")
    return ProfileFamily(name="sub-n-super", profiles=members, triples=triples)


# ---------------------------------------------------------------------------
# p = n
# ---------------------------------------------------------------------------

def border_radial_family(b1: float = 0.5) -> ProfileFamily:
    """p=n=2 radial exact solutions on [1, 8]: logarithms and extremal-drift solutions."""
    radii = BORDER_RADII
    params = StructuralParams(n=2, p=2.0, b1=b1)
    members = [_radial_member(fundamental_solution(params, a, b), radii) for a, b in ((0.0, -1.0), (2.0, -0.5))]
    for sign, scale, u0 in itertools.product((1, -1), (1.0, 3.0), (0.0, 1.5)):
        members.append(_radial_member(extremal_drift_solution(params, sign, u0, 1.0, scale), radii))
    return ProfileFamily(name="border-radial", profiles=members, triples=admissible_triples(radii))


def harmonic_boundary(rng: np.random.Generator, degree: int = 3) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Random harmonic polynomial c0 + sum_k a_k Re(e^{-i t_k} z^k) with a nonvanishing linear term."""
    c0 = float(rng.uniform(-1.0, 1.0))
    amps = rng.uniform(0.2, 1.0, size=degree) / np.arange(1, degree + 1)
    amps[0] = max(amps[0], 0.5)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=degree)

    def g(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        z = np.asarray(x, dtype=float) + 1j * np.asarray(y, dtype=float)
        total = np.full(z.shape, c0, dtype=complex)
        for k in range(degree):
            total = total + amps[k] * np.exp(-1j * phases[k]) * z ** (k + 1)
        return total.real

    return g


def border_grid_family(
    seed: int = 0, b1: float = 0.5, h: float = 1.0 / 64.0, members_per_preset: int = 2, cfg: SolverConfig | None = None
) -> ProfileFamily:
    """p=n=2 grid solutions on the unit disk with perturbed harmonic boundary data."""
    if b1 > 0.5:
        raise InvalidInputError("grid families keep b1 <= 0.5 so the explicit drift lag converges")
    rng = philox_generator(seed)
    params = StructuralParams(n=2, p=2.0, b1=b1)
    template = disk_grid(1.0, h)
    members = []
    for name in ("p-laplace", "riccati-extremal-plus", "riccati-extremal-minus"):
        spec = build_spec(name, params)
        for _ in range(members_per_preset):
            solution = solve_dirichlet(spec, harmonic_boundary(rng), template, cfg)
            members.append(profile(solution, (0.0, 0.0), GRID_RADII, Geometry.BALL_MAX, params=params,
                                   role=SourceRole.SOLUTION))
    return ProfileFamily(name="border-grid", profiles=members, triples=admissible_triples(GRID_RADII))


# ---------------------------------------------------------------------------
# p > n
# ---------------------------------------------------------------------------

def p_gt_n_family(b1: float = 0.5) -> ProfileFamily:
    """p=4, n=2 radial exact solutions on [1, 8]."""
    radii = BORDER_RADII
    params = StructuralParams(n=2, p=4.0, b1=b1)
    members = [_radial_member(fundamental_solution(params, a, b), radii) for a, b in ((0.0, 1.0), (-1.0, 2.0))]
    for sign, scale in itertools.product((1, -1), (1.0, 2.0)):
        members.append(_radial_member(extremal_drift_solution(params, sign, 0.0, 1.0, scale), radii))
    return ProfileFamily(name="p-gt-n-radial", profiles=members, triples=admissible_triples(radii))


FAMILIES: dict[str, Callable[..., ProfileFamily]] = {
    "sub-n": sub_n_family,
    "sub-n-super": sub_n_super_family,
    "border-radial": border_radial_family,
    "border-grid": border_grid_family,
    "p-gt-n-radial": p_gt_n_family,
}


def build_family(name: str, seed: int = 0, **kwargs) -> ProfileFamily:
    try:
        builder = FAMILIES[name]
    except KeyError:
        raise InvalidInputError(f"Unknown family '{name}'; choose from {sorted(FAMILIES)}") from None
    if name in ("sub-n", "border-grid"):
        kwargs.setdefault("seed", seed)
    return builder(**kwargs)

"""Radial solutions of -(r^(n-1) A_r)' + r^(n-1) B = 0 on annuli.

Two closed-form families (fundamental solutions and extremal-drift solutions)
serve as ground truth; a fourth-order integrator and a shooting solver produce
numerical profiles for any EquationSpec.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .config import settings
from .errors import (
    FluxInversionError,
    InvalidInputError,
    NonConvergenceError,
    RadialBlowUpError,
    ShootingBracketError,
)
from .models import EquationSpec, Provenance, RadialProfile, Regime, StructuralParams
from .presets import build_spec

logger = logging.getLogger(__name__)


def phi(s: float | np.ndarray, p: float) -> float | np.ndarray:
    """|s|^(p-2) s."""
    s = np.asarray(s, dtype=float)
    out = np.sign(s) * np.abs(s) ** (p - 1.0)
    return float(out) if out.ndim == 0 else out


def phi_inverse(t: float | np.ndarray, p: float) -> float | np.ndarray:
    """Inverse of phi, extended by 0 at t = 0."""
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * np.abs(t) ** (1.0 / (p - 1.0))
    return float(out) if out.ndim == 0 else out


def _ray_points(params: StructuralParams, r: float | np.ndarray, k: int) -> np.ndarray:
    pts = np.zeros((k, params.n))
    pts[:, 0] = r
    return pts


# ---------------------------------------------------------------------------
# Closed-form families
# ---------------------------------------------------------------------------

class ExactRadialSolution(ABC):
    """Closed-form radial solution, evaluable at any admissible radius."""

    provenance: Provenance

    def __init__(self, params: StructuralParams):
        self.params = params

    @property
    @abstractmethod
    def preset_name(self) -> str:
        """Preset whose equation this function solves."""
        ...

    @abstractmethod
    def value(self, r: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def derivative(self, r: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def flux_derivative(self, r: np.ndarray) -> np.ndarray:
        """d/dr of r^(n-1) phi(u')."""
        ...

    @property
    def r_min(self) -> float:
        return 0.0

    def equation(self) -> EquationSpec:
        return build_spec(self.preset_name, self.params)

    def residual(self, r: np.ndarray, spec: EquationSpec | None = None) -> np.ndarray:
        """Pointwise residual (r^(n-1) phi(u'))' - r^(n-1) B along the first axis."""
        spec = spec or self.equation()
        r = np.atleast_1d(np.asarray(r, dtype=float))
        n = self.params.n
        pts = _ray_points(self.params, r, r.size)
        grads = np.zeros_like(pts)
        grads[:, 0] = self.derivative(r)
        B = np.asarray(spec.B(pts, self.value(r), grads), dtype=float)
        return self.flux_derivative(r) - r ** (n - 1) * B

    def profile(self, mesh: np.ndarray) -> RadialProfile:
        mesh = np.asarray(mesh, dtype=float)
        if mesh.size and mesh[0] < self.r_min:
            raise InvalidInputError(f"mesh starts at {mesh[0]}, below the admissible radius {self.r_min}")
        return RadialProfile(
            mesh=mesh,
            values=self.value(mesh),
            derivative_values=self.derivative(mesh),
            params=self.params,
            provenance=self.provenance,
        )

    def sample(self, r_in: float, r_out: float, steps: int = 512) -> RadialProfile:
        return self.profile(np.linspace(r_in, r_out, steps + 1))


class FundamentalSolution(ExactRadialSolution):
    """a + b r^alpha for p != n, a - b log r for p = n."""

    provenance = Provenance.EXACT_FUNDAMENTAL

    def __init__(self, params: StructuralParams, a: float, b: float):
        super().__init__(params)
        self.a = a
        self.b = b

    @property
    def preset_name(self) -> str:
        return "p-laplace"

    def value(self, r):
        r = np.asarray(r, dtype=float)
        if self.params.regime == Regime.BORDER_N:
            return self.a - self.b * np.log(r)
        return self.a + self.b * r**self.params.alpha

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        if self.params.regime == Regime.BORDER_N:
            return -self.b / r
        alpha = self.params.alpha
        return self.b * alpha * r ** (alpha - 1.0)

    def flux_derivative(self, r):
        # r^(n-1) phi(u') is constant in r
        return np.zeros_like(np.asarray(r, dtype=float))


class ExtremalDriftSolution(ExactRadialSolution):
    """Solution of (r^(n-1) (u')^(p-1))' = sign (b1/r) r^(n-1) (u')^(p-1) with u' = scale r^beta."""

    provenance = Provenance.EXACT_EXTREMAL_DRIFT

    def __init__(self, params: StructuralParams, sign: int, u0: float, r_in: float, scale: float = 1.0):
        super().__init__(params)
        if sign not in (1, -1):
            raise InvalidInputError(f"sign must be +1 or -1, got {sign}")
        if r_in < 1.0:
            raise InvalidInputError(f"r_in={r_in} < 1: the drift envelope changes branch inside the annulus")
        if scale <= 0.0:
            raise InvalidInputError("scale must be positive")
        self.sign = sign
        self.u0 = u0
        self.r_in = r_in
        self.scale = scale
        self.beta = (sign * params.b1 + 1.0 - params.n) / (params.p - 1.0)

    @property
    def preset_name(self) -> str:
        return "riccati-extremal-plus" if self.sign > 0 else "riccati-extremal-minus"

    @property
    def r_min(self) -> float:
        return 1.0

    def value(self, r):
        r = np.asarray(r, dtype=float)
        e = self.beta + 1.0
        if abs(e) < 1e-14:
            return self.u0 + self.scale * np.log(r / self.r_in)
        return self.u0 + self.scale * (r**e - self.r_in**e) / e

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        return self.scale * r**self.beta

    def flux_derivative(self, r):
        r = np.asarray(r, dtype=float)
        k = self.sign * self.params.b1
        return self.scale ** (self.params.p - 1.0) * k * r ** (k - 1.0)


_REFLECTED_PRESETS = {
    "p-laplace": "p-laplace",
    "riccati-extremal-plus": "riccati-extremal-minus",
    "riccati-extremal-minus": "riccati-extremal-plus",
}


class ReflectedSolution(ExactRadialSolution):
    """-v for an exact solution v.

    The p-Laplacian is odd in (u, Du) and the two extremal drifts trade places
    under u -> -u, so -v solves the preset with the drift sign flipped.
    """

    def __init__(self, base: ExactRadialSolution):
        if base.preset_name not in _REFLECTED_PRESETS:
            raise InvalidInputError(f"preset {base.preset_name} has no reflected counterpart")
        super().__init__(base.params)
        self.base = base
        self.provenance = base.provenance

    @property
    def preset_name(self) -> str:
        return _REFLECTED_PRESETS[self.base.preset_name]

    @property
    def r_min(self) -> float:
        return self.base.r_min

    def value(self, r):
        return -self.base.value(r)

    def derivative(self, r):
        return -self.base.derivative(r)

    def flux_derivative(self, r):
        return -self.base.flux_derivative(r)


def fundamental_solution(params: StructuralParams, a: float, b: float) -> FundamentalSolution:
    return FundamentalSolution(params, a, b)


def extremal_drift_solution(
    params: StructuralParams, sign: int, u0: float, r_in: float, scale: float = 1.0
) -> ExtremalDriftSolution:
    return ExtremalDriftSolution(params, sign, u0, r_in, scale)


def reflected_solution(base: ExactRadialSolution) -> ReflectedSolution:
    return ReflectedSolution(base)


# ---------------------------------------------------------------------------
# Numerical integration
# ---------------------------------------------------------------------------

class _RadialReduction:
    """First-order system u' = phi^-1(w r^(1-n) / a), w' = r^(n-1) B, vectorized over a batch."""

    def __init__(self, spec: EquationSpec):
        self.spec = spec
        self.p = spec.params.p
        self.n = spec.params.n

    def derivative(self, r: float, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        t = w / r ** (self.n - 1)
        pts = _ray_points(self.spec.params, r, u.size)
        if self.spec.coefficient is not None:
            a = np.asarray(self.spec.coefficient(pts, u), dtype=float)
            return phi_inverse(t / a, self.p)
        return self._invert_flux(pts, u, t)

    def _invert_flux(self, pts: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
        out = np.full_like(t, np.nan)
        a0 = self.spec.params.a0
        for i, ti in enumerate(t):
            if not (np.isfinite(ti) and np.isfinite(u[i])):
                continue
            if ti == 0.0:
                out[i] = 0.0
                continue
            # A.h >= a0 |h|^p pins the root inside [0, (|t|/a0)^(1/(p-1))]
            edge = math.copysign((abs(ti) / a0) ** (1.0 / (self.p - 1.0)) * (1.0 + 1e-9), ti)
            x, ui = pts[i : i + 1], u[i : i + 1]

            def radial_flux(s: float, x=x, ui=ui, ti=ti) -> float:
                h = np.zeros_like(x)
                h[0, 0] = s
                return float(np.asarray(self.spec.A(x, ui, h), dtype=float).reshape(-1)[0]) - ti

            try:
                out[i] = brentq(radial_flux, 0.0, edge, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            except ValueError as exc:
                raise FluxInversionError(f"could not invert the radial flux for t={ti:.6e}: {exc}") from exc
        return out

    def flux(self, r: float, u: np.ndarray, du: np.ndarray) -> np.ndarray:
        pts = _ray_points(self.spec.params, r, u.size)
        if self.spec.coefficient is not None:
            a = np.asarray(self.spec.coefficient(pts, u), dtype=float)
            return r ** (self.n - 1) * a * phi(du, self.p)
        grads = np.zeros_like(pts)
        grads[:, 0] = du
        A = np.asarray(self.spec.A(pts, u, grads), dtype=float).reshape(u.size, -1)
        return r ** (self.n - 1) * A[:, 0]

    def drift(self, r: float, u: np.ndarray, du: np.ndarray) -> np.ndarray:
        pts = _ray_points(self.spec.params, r, u.size)
        if self.spec.drift_factor is not None:
            b = np.asarray(self.spec.drift_factor(pts, u), dtype=float)
            B = b * np.abs(du) ** (self.p - 1.0)
        else:
            grads = np.zeros_like(pts)
            grads[:, 0] = du
            B = np.asarray(self.spec.B(pts, u, grads), dtype=float)
        return r ** (self.n - 1) * B

    def rhs(self, r: float, u: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        du = self.derivative(r, u, w)
        return du, self.drift(r, u, du)


@dataclass
class _Trajectory:
    mesh: np.ndarray
    U: np.ndarray
    DU: np.ndarray
    failed: np.ndarray
    failure: tuple[str, float, float, float] | None = None


def _integrate(
    spec: EquationSpec, r_in: float, u_in: np.ndarray, du_in: np.ndarray, r_out: float, steps: int, cap: float
) -> _Trajectory:
    red = _RadialReduction(spec)
    mesh = np.linspace(r_in, r_out, steps + 1)
    h = (r_out - r_in) / steps
    k = u_in.size
    U = np.empty((steps + 1, k))
    DU = np.empty((steps + 1, k))
    u = u_in.astype(float).copy()
    w = red.flux(r_in, u, du_in.astype(float))
    U[0], DU[0] = u, du_in
    failed = np.zeros(k, dtype=bool)
    failure = None

    with np.errstate(all="ignore"):
        for i in range(steps):
            r = mesh[i]
            k1u, k1w = red.rhs(r, u, w)
            k2u, k2w = red.rhs(r + 0.5 * h, u + 0.5 * h * k1u, w + 0.5 * h * k1w)
            k3u, k3w = red.rhs(r + 0.5 * h, u + 0.5 * h * k2u, w + 0.5 * h * k2w)
            k4u, k4w = red.rhs(r + h, u + h * k3u, w + h * k3w)
            u = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            w = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
            du = red.derivative(mesh[i + 1], u, w)

            flux_bad = ~failed & ~np.isfinite(w) & np.isfinite(u)
            blown = ~failed & ((np.abs(u) > cap) | (np.abs(du) > cap) | ~np.isfinite(u) | ~np.isfinite(du))
            newly = flux_bad | blown
            if failure is None and np.any(newly):
                j = int(np.flatnonzero(newly)[0])
                kind = "flux" if flux_bad[j] else "blowup"
                failure = (kind, float(mesh[i + 1]), float(u[j]), float(du[j]))
            failed |= newly
            u[failed], w[failed], du[failed] = np.nan, np.nan, np.nan
            U[i + 1], DU[i + 1] = u, du

    return _Trajectory(mesh=mesh, U=U, DU=DU, failed=failed, failure=failure)


def _validate_interval(r_in: float, r_out: float, steps: int) -> None:
    if not (0.0 < r_in < r_out):
        raise InvalidInputError(f"need 0 < r_in < r_out, got ({r_in}, {r_out})")
    if steps < 16:
        raise InvalidInputError(f"steps must be at least 16, got {steps}")


def solve_radial_ivp(
    spec: EquationSpec,
    r_in: float,
    u_in: float,
    du_in: float,
    r_out: float,
    steps: int = 512,
    cap: float | None = None,
) -> RadialProfile:
    """Classical RK4 on (u, w), w = r^(n-1) A_r, with a uniform mesh."""
    _validate_interval(r_in, r_out, steps)
    cap = settings.radial_blowup_cap if cap is None else cap
    traj = _integrate(spec, r_in, np.array([u_in]), np.array([du_in]), r_out, steps, cap)
    if traj.failure is not None:
        kind, radius, value, derivative = traj.failure
        if kind == "flux":
            raise FluxInversionError(f"non-finite radial flux at r={radius:.6g}")
        raise RadialBlowUpError(radius, value, derivative)
    return RadialProfile(
        mesh=traj.mesh,
        values=traj.U[:, 0],
        derivative_values=traj.DU[:, 0],
        params=spec.params,
        provenance=Provenance.NUMERIC_IVP,
    )


def _end_values(
    spec: EquationSpec, r_in: float, u_in: float, slopes: np.ndarray, r_out: float, steps: int, cap: float
) -> np.ndarray:
    """u(r_out) per initial slope; members that blow up overshoot in the direction of their slope."""
    traj = _integrate(spec, r_in, np.full(slopes.size, u_in), slopes, r_out, steps, cap)
    ends = traj.U[-1].copy()
    ends[traj.failed] = np.copysign(np.inf, slopes[traj.failed])
    return ends


def solve_radial_bvp(
    spec: EquationSpec,
    r_in: float,
    u_in: float,
    r_out: float,
    u_out: float,
    steps: int = 512,
    tol: float = 1e-9,
    derivative_cap: float | None = None,
) -> RadialProfile:
    """Shooting on u'(r_in): batched bracket scan, then brentq on the scalar map."""
    _validate_interval(r_in, r_out, steps)
    cap = settings.radial_blowup_cap
    derivative_cap = settings.shooting_derivative_cap if derivative_cap is None else derivative_cap

    if u_in == u_out:
        prof = solve_radial_ivp(spec, r_in, u_in, 0.0, r_out, steps)
        return prof.model_copy(update={"provenance": Provenance.NUMERIC_BVP})

    direction = math.copysign(1.0, u_out - u_in)
    guess = abs(u_out - u_in) / (r_out - r_in)
    ladder = direction * guess * 2.0 ** np.arange(-6, 40)
    ladder = ladder[np.abs(ladder) <= derivative_cap]
    if ladder.size == 0:
        raise ShootingBracketError(f"initial slope guess {guess:.3e} already exceeds the cap {derivative_cap:.3e}")

    miss = _end_values(spec, r_in, u_in, ladder, r_out, steps, cap) - u_out
    hits = np.flatnonzero(direction * miss >= 0.0)
    if hits.size == 0:
        raise ShootingBracketError(
            f"shooting cannot reach u({r_out})={u_out} with |u'({r_in})| <= {derivative_cap:.3e}"
        )
    j = int(hits[0])
    lo = 0.0 if j == 0 else float(ladder[j - 1])
    hi, hi_miss = float(ladder[j]), float(miss[j])
    logger.debug(f"Shooting bracket [{lo:.6e}, {hi:.6e}] after {j + 1} ladder rungs")

    # Pull an overshooting end back until the bracket is finite
    for _ in range(8):
        if np.isfinite(hi_miss):
            break
        inner = np.linspace(lo, hi, 17)[1:-1]
        inner_miss = _end_values(spec, r_in, u_in, inner, r_out, steps, cap) - u_out
        over = np.flatnonzero(direction * inner_miss >= 0.0)
        if over.size:
            k = int(over[0])
            hi, hi_miss = float(inner[k]), float(inner_miss[k])
            if k > 0:
                lo = float(inner[k - 1])
        else:
            lo = float(inner[-1])
        logger.debug(f"Shooting bracket refined to [{lo:.6e}, {hi:.6e}]")
    if not np.isfinite(hi_miss):
        raise ShootingBracketError(f"shooting map stays unbounded inside [{lo:.6e}, {hi:.6e}]")

    def shoot(s: float) -> float:
        return float(_end_values(spec, r_in, u_in, np.array([s]), r_out, steps, cap)[0] - u_out)

    slope = brentq(shoot, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    prof = solve_radial_ivp(spec, r_in, u_in, slope, r_out, steps)
    mismatch = abs(prof.values[-1] - u_out)
    if mismatch > tol:
        raise NonConvergenceError(f"shooting stopped {mismatch:.3e} away from u({r_out})={u_out}", [mismatch])
    logger.debug(f"Shooting converged: u'({r_in})={slope:.12e}, mismatch={mismatch:.3e}")
    return prof.model_copy(update={"provenance": Provenance.NUMERIC_BVP})

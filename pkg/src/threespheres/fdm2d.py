"""Finite differences for -div(a |Du|^(p-2) Du) + b |Du|^(p-1) = 0 on disks and annuli.

Embedded-boundary lattice: interior nodes carry unknowns, boundary-band nodes
carry Dirichlet data, exterior nodes are unused (NaN). Fluxes live on cell
faces with the regularized coefficient a (|Du|^2 + eps^2)^((p-2)/2).
"""

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from .config import settings
from .errors import InvalidInputError, NonConvergenceError
from .models import BandRule, EquationSpec, GridFunction2D, NodeKind, Scheme, SolveReport, SolverConfig

logger = logging.getLogger(__name__)

BoundaryData = Callable[[np.ndarray, np.ndarray], np.ndarray]


def disk_grid(
    radius: float, h: float, center: tuple[float, float] = (0.0, 0.0), inner_radius: float = 0.0
) -> GridFunction2D:
    """Lattice template covering the closed disk (or annulus) with node kinds assigned."""
    if radius <= 0.0 or h <= 0.0:
        raise InvalidInputError("radius and h must be positive")
    if not (0.0 <= inner_radius < radius):
        raise InvalidInputError(f"inner_radius must lie in [0, {radius}), got {inner_radius}")
    half = math.ceil(radius / h) + 3
    offsets = h * np.arange(-half, half + 1)
    x = center[0] + offsets
    y = center[1] + offsets
    X, Y = np.meshgrid(x, y, indexing="ij")
    dist = np.hypot(X - center[0], Y - center[1])

    slack = 1e-12 * radius
    inside = (dist <= radius + slack) & (dist >= inner_radius - slack)
    interior = inside.copy()
    interior[1:-1, 1:-1] &= inside[2:, 1:-1] & inside[:-2, 1:-1] & inside[1:-1, 2:] & inside[1:-1, :-2]
    interior[[0, -1], :] = False
    interior[:, [0, -1]] = False
    band = ~interior & (dist <= radius + 2.0 * h) & (dist >= inner_radius - 2.0 * h)

    mask = np.full(X.shape, NodeKind.EXTERIOR, dtype=np.int8)
    mask[interior] = NodeKind.INTERIOR
    mask[band] = NodeKind.BAND
    values = np.where(mask == NodeKind.EXTERIOR, np.nan, 0.0)
    return GridFunction2D(
        h=h, center=center, radius=radius, inner_radius=inner_radius, x=x, y=y, values=values, mask=mask
    )


class _Discretization:
    """Residual evaluation of the flux-form scheme on one lattice."""

    def __init__(self, spec: EquationSpec, grid: GridFunction2D, epsilon: float):
        if spec.params.n != 2:
            raise InvalidInputError(f"the grid solver is two-dimensional, got n={spec.params.n}")
        if spec.coefficient is None:
            raise InvalidInputError("the grid solver needs an operator declared through its coefficient a(x, t)")
        self.spec = spec
        self.p = spec.params.p
        self.h = grid.h
        self.eps2 = epsilon * epsilon
        self.interior = grid.interior
        X, Y = grid.coordinates()
        self.nodes = np.stack([X, Y], axis=-1)
        self.faces_x = np.stack([X[:-1] + 0.5 * grid.h, Y[:-1]], axis=-1)
        self.faces_y = np.stack([X[:, :-1], Y[:, :-1] + 0.5 * grid.h], axis=-1)

    def _central(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cx = np.zeros_like(u)
        cy = np.zeros_like(u)
        cx[1:-1, :] = (u[2:, :] - u[:-2, :]) / (2.0 * self.h)
        cy[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2.0 * self.h)
        return cx, cy

    def face_coefficients(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h, p, a = self.h, self.p, self.spec.coefficient
        cx, cy = self._central(u)
        gx = np.diff(u, axis=0) / h
        ty = 0.5 * (cy[:-1, :] + cy[1:, :])
        kx = np.asarray(a(self.faces_x, 0.5 * (u[:-1, :] + u[1:, :])), dtype=float)
        kx = kx * (gx * gx + ty * ty + self.eps2) ** (0.5 * (p - 2.0))
        gy = np.diff(u, axis=1) / h
        tx = 0.5 * (cx[:, :-1] + cx[:, 1:])
        ky = np.asarray(a(self.faces_y, 0.5 * (u[:, :-1] + u[:, 1:])), dtype=float)
        ky = ky * (gy * gy + tx * tx + self.eps2) ** (0.5 * (p - 2.0))
        return kx, ky

    def drift(self, u: np.ndarray) -> np.ndarray:
        cx, cy = self._central(u)
        if self.spec.drift_factor is not None:
            b = np.asarray(self.spec.drift_factor(self.nodes, u), dtype=float)
            return b * (cx * cx + cy * cy + self.eps2) ** (0.5 * (self.p - 1.0))
        grads = np.stack([cx, cy], axis=-1)
        return np.asarray(self.spec.B(self.nodes, u, grads), dtype=float)

    def residual(self, u: np.ndarray) -> np.ndarray:
        """-div + B on interior nodes, 0 elsewhere."""
        h = self.h
        # faces touching exterior nodes may be singular; they never reach interior rows
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            kx, ky = self.face_coefficients(u)
            fx = kx * np.diff(u, axis=0) / h
            fy = ky * np.diff(u, axis=1) / h
            div = np.zeros_like(u)
            div[1:-1, :] += (fx[1:, :] - fx[:-1, :]) / h
            div[:, 1:-1] += (fy[:, 1:] - fy[:, :-1]) / h
            res = self.drift(u) - div
        res[~self.interior] = 0.0
        return res


def _node_weights(kx: np.ndarray, ky: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, ...]:
    kE, kW, kN, kS = (np.zeros(shape) for _ in range(4))
    kE[:-1, :] = kx
    kW[1:, :] = kx
    kN[:, :-1] = ky
    kS[:, 1:] = ky
    return kE, kW, kN, kS


def _sor(
    u: np.ndarray,
    kx: np.ndarray,
    ky: np.ndarray,
    rhs: np.ndarray,
    interior: np.ndarray,
    h: float,
    omega: float,
    tol: float,
    max_sweeps: int,
) -> tuple[np.ndarray, int]:
    """Red-black SOR for sum_f k_f (u_nb - u) / h^2 = rhs on interior nodes.

    Stops once the Gauss-Seidel residual of a full sweep drops below ``tol``.
    """
    kE, kW, kN, kS = _node_weights(kx, ky, u.shape)
    diag = kE + kW + kN + kS
    I, J = np.indices(u.shape)
    colors = (interior & ((I + J) % 2 == 0), interior & ((I + J) % 2 == 1))
    h2 = h * h
    u = u.copy()
    for sweep in range(1, max_sweeps + 1):
        worst = 0.0
        for color in colors:
            nb = (
                kE * np.roll(u, -1, axis=0)
                + kW * np.roll(u, 1, axis=0)
                + kN * np.roll(u, -1, axis=1)
                + kS * np.roll(u, 1, axis=1)
            )
            gap = (nb - h2 * rhs)[color] - diag[color] * u[color]
            u[color] += omega * gap / diag[color]
            if gap.size:
                worst = max(worst, float(np.abs(gap).max()) / h2)
        if worst <= tol:
            return u, sweep
    logger.warning(f"SOR stopped at the sweep cap {max_sweeps} with residual {worst:.3e}")
    return u, max_sweeps


def _band_values(grid: GridFunction2D, boundary_data: BoundaryData, rule: BandRule) -> np.ndarray:
    X, Y = grid.coordinates()
    band = grid.band
    bx, by = X[band], Y[band]
    if rule == BandRule.PROJECT:
        cx, cy = grid.center
        d = np.hypot(bx - cx, by - cy)
        target = np.full_like(d, grid.radius)
        if grid.inner_radius > 0.0:
            near_inner = np.abs(d - grid.inner_radius) < np.abs(d - grid.radius)
            target[near_inner] = grid.inner_radius
        scale = np.where(d > 0.0, target / np.where(d > 0.0, d, 1.0), 1.0)
        bx, by = cx + (bx - cx) * scale, cy + (by - cy) * scale
    vals = np.asarray(boundary_data(bx, by), dtype=float) * np.ones_like(bx)
    if not np.all(np.isfinite(vals)):
        raise InvalidInputError("boundary data must be finite on the boundary band")
    return vals


def _default_omega(grid: GridFunction2D) -> float:
    return 2.0 / (1.0 + math.sin(math.pi * grid.h / (2.0 * grid.radius)))


def _linear_tol(tol: float) -> float:
    return 0.1 * tol


def _harmonic_extension(u: np.ndarray, grid: GridFunction2D, omega: float, tol: float) -> tuple[np.ndarray, int]:
    ones_x = np.ones((u.shape[0] - 1, u.shape[1]))
    ones_y = np.ones((u.shape[0], u.shape[1] - 1))
    return _sor(u, ones_x, ones_y, np.zeros_like(u), grid.interior, grid.h, omega, tol, settings.sor_max_sweeps)


def _jacobian(disc: _Discretization, u: np.ndarray, r0: np.ndarray, index: np.ndarray) -> coo_matrix:
    """Finite-difference Jacobian; nine colors separate every 3x3 stencil."""
    interior = disc.interior
    I, J = np.indices(u.shape)
    color = (I % 3) * 3 + (J % 3)
    step = np.sqrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(u))
    rows, cols, vals = [], [], []
    for c in range(9):
        pert = interior & (color == c)
        if not pert.any():
            continue
        up = u.copy()
        up[pert] += step[pert]
        dr = disc.residual(up) - r0
        ki, kj = np.nonzero(pert)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                qi, qj = ki + di, kj + dj
                keep = interior[qi, qj]
                rows.append(index[qi[keep], qj[keep]])
                cols.append(index[ki[keep], kj[keep]])
                vals.append(dr[qi[keep], qj[keep]] / step[ki[keep], kj[keep]])
    size = int(interior.sum())
    return coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


def _warn_dominance(jac) -> None:
    csr = jac.tocsr()
    diag = np.abs(csr.diagonal())
    off = np.asarray(abs(csr).sum(axis=1)).ravel() - diag
    lost = diag < off * (1.0 - 1e-12)
    if lost.any():
        logger.warning(f"Jacobian lost diagonal dominance on {lost.mean():.1%} of the interior rows")


def _picard(
    disc: _Discretization, u: np.ndarray, grid: GridFunction2D, cfg: SolverConfig, omega: float
) -> tuple[np.ndarray, list[float], int, int, bool]:
    interior = grid.interior
    history: list[float] = []
    sweeps = 0
    stalled = 0
    for it in range(cfg.max_iter + 1):
        rnorm = float(np.abs(disc.residual(u)).max()) if interior.any() else 0.0
        history.append(rnorm)
        logger.debug(f"Picard iteration {it}: residual {rnorm:.3e}")
        if rnorm <= cfg.tol:
            return u, history, it, sweeps, True
        if it == cfg.max_iter:
            break
        stalled = stalled + 1 if len(history) > 1 and rnorm > 0.99 * history[-2] else 0
        if stalled == 5:
            logger.warning(f"Picard iteration stagnating at residual {rnorm:.3e}")
        kx, ky = disc.face_coefficients(u)
        rhs = disc.drift(u)
        target, used = _sor(u, kx, ky, rhs, interior, grid.h, omega, _linear_tol(cfg.tol), settings.sor_max_sweeps)
        sweeps += used
        u = u + cfg.damping * (target - u)
    return u, history, cfg.max_iter, sweeps, False


def _newton(
    disc: _Discretization, u: np.ndarray, grid: GridFunction2D, cfg: SolverConfig
) -> tuple[np.ndarray, list[float], int, bool]:
    interior = grid.interior
    index = -np.ones(u.shape, dtype=int)
    index[interior] = np.arange(int(interior.sum()))
    history: list[float] = []
    warned = False
    for it in range(cfg.max_iter + 1):
        r0 = disc.residual(u)
        rnorm = float(np.abs(r0).max()) if interior.any() else 0.0
        history.append(rnorm)
        logger.debug(f"Newton iteration {it}: residual {rnorm:.3e}")
        if rnorm <= cfg.tol:
            return u, history, it, True
        if it == cfg.max_iter:
            break
        jac = _jacobian(disc, u, r0, index)
        if not warned:
            _warn_dominance(jac)
            warned = True
        du = spsolve(jac.tocsc(), -r0[interior])
        t = cfg.damping
        while True:
            trial = u.copy()
            trial[interior] += t * du
            trial_norm = float(np.abs(disc.residual(trial)).max())
            if trial_norm < (1.0 - 1e-4 * t) * rnorm or t < 1.0 / 64.0:
                break
            t *= 0.5
        u = trial
    return u, history, cfg.max_iter, False


def solve_dirichlet(
    spec: EquationSpec,
    boundary_data: BoundaryData,
    grid: GridFunction2D,
    cfg: SolverConfig | None = None,
) -> GridFunction2D:
    """Solve the Dirichlet problem on the template's lattice.

    Band nodes take ``boundary_data(x, y)`` (at the node, or at its radial
    projection with ``BandRule.PROJECT``); interior nodes start from the
    discrete harmonic extension of the band values.
    """
    cfg = cfg or SolverConfig()
    disc = _Discretization(spec, grid, cfg.epsilon)
    omega = cfg.omega or _default_omega(grid)

    u = np.zeros_like(grid.values)
    band_vals = _band_values(grid, boundary_data, cfg.band_rule)
    u[grid.band] = band_vals
    u[grid.interior] = float(np.median(band_vals))
    u, warm_sweeps = _harmonic_extension(u, grid, omega, _linear_tol(cfg.tol))

    logger.info(
        f"Solving {spec.name} (p={spec.params.p}) on {int(grid.interior.sum())} interior nodes "
        f"with {cfg.scheme.value}, h={grid.h:.4g}"
    )
    if cfg.scheme == Scheme.PICARD:
        u, history, iterations, sweeps, converged = _picard(disc, u, grid, cfg, omega)
    else:
        u, history, iterations, converged = _newton(disc, u, grid, cfg)
        sweeps = 0
    if not converged:
        raise NonConvergenceError(
            f"{cfg.scheme.value} did not reach residual {cfg.tol:.1e} in {cfg.max_iter} iterations "
            f"(last {history[-1]:.3e})",
            history,
        )
    logger.info(f"Converged in {iterations} iterations, residual {history[-1]:.3e}")

    values = np.where(grid.mask == NodeKind.EXTERIOR, np.nan, u)
    report = SolveReport(
        scheme=cfg.scheme,
        iterations=iterations,
        converged=True,
        residual_history=history,
        linear_sweeps=warm_sweeps + sweeps,
    )
    return grid.model_copy(update={"values": values, "report": report})


def residual_norm(spec: EquationSpec, grid: GridFunction2D, epsilon: float | None = None) -> float:
    """Max-norm of the discrete residual over interior nodes."""
    epsilon = settings.fdm_epsilon if epsilon is None else epsilon
    if not grid.interior.any():
        return 0.0
    disc = _Discretization(spec, grid, epsilon)
    u = np.where(grid.mask == NodeKind.EXTERIOR, 0.0, grid.values)
    return float(np.abs(disc.residual(u)).max())


def grid_from_function(template: GridFunction2D, fn: BoundaryData) -> GridFunction2D:
    """Evaluate ``fn`` on every non-exterior node of the template."""
    X, Y = template.coordinates()
    values = np.where(template.mask == NodeKind.EXTERIOR, np.nan, np.asarray(fn(X, Y), dtype=float) * np.ones_like(X))
    return template.model_copy(update={"values": values})

import logging
from collections.abc import Sequence

import numpy as np
from scipy.stats import qmc

from .config import settings
from .errors import InvalidInputError
from .models import EnvelopeMode, EquationSpec, GrowthEnvelope, StructureReport

logger = logging.getLogger(__name__)

Sample = tuple[Sequence[float], float, Sequence[float]]


def envelope_eval(env: GrowthEnvelope, radius: float | np.ndarray) -> float | np.ndarray:
    """Drift envelope g at distance ``radius`` from the origin.

    global_decay: b1 inside the unit ball, b1/|x| outside. constant: b1.
    Accepts scalars or arrays; scalars return a float.
    """
    r = np.asarray(radius, dtype=float)
    if np.any(r < 0.0):
        raise InvalidInputError("radius must be nonnegative")
    if env.mode == EnvelopeMode.CONSTANT:
        out = np.full_like(r, env.b1)
    else:
        out = np.where(r <= 1.0, env.b1, env.b1 / np.maximum(r, 1.0))
    return float(out) if out.ndim == 0 else out


def _stack_samples(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(samples) == 0:
        raise InvalidInputError("check_structure needs at least one sample")
    points = np.array([np.asarray(s[0], dtype=float) for s in samples])
    values = np.array([float(s[1]) for s in samples])
    grads = np.array([np.asarray(s[2], dtype=float) for s in samples])
    if points.ndim != 2 or grads.shape != points.shape:
        raise InvalidInputError("points and gradients must share one dimension")
    if not (np.all(np.isfinite(points)) and np.all(np.isfinite(values)) and np.all(np.isfinite(grads))):
        raise InvalidInputError("samples must have finite entries")
    return points, values, grads


def check_structure(spec: EquationSpec, samples: Sequence[Sample], tol: float | None = None) -> StructureReport:
    """Sample the structural inequalities of (A, B) and report worst-case margins.

    Margins are raw (unnormalized) minima over samples of
      A.h - a0|h|^p,  a1|h|^(p-1) - |A|,  g(x)|h|^(p-1) - |B|.
    Zero-gradient samples contribute 0 to every margin. A sample passes a
    margin if it is >= -tol times the magnitude of the bound it is compared to.
    """
    tol = settings.structure_tol if tol is None else tol
    prm = spec.params
    points, values, grads = _stack_samples(samples)

    A = np.asarray(spec.A(points, values, grads), dtype=float).reshape(grads.shape)
    B = np.asarray(spec.B(points, values, grads), dtype=float).reshape(values.shape)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise InvalidInputError("operator returned non-finite values on the samples")

    hnorm = np.linalg.norm(grads, axis=-1)
    hp = hnorm**prm.p
    hp1 = hnorm ** (prm.p - 1.0)
    g = envelope_eval(spec.envelope, np.linalg.norm(points, axis=-1))

    ellip = np.einsum("ij,ij->i", A, grads) - prm.a0 * hp
    growth = prm.a1 * hp1 - np.linalg.norm(A, axis=-1)
    drift = g * hp1 - np.abs(B)

    zero = hnorm == 0.0
    for margin in (ellip, growth, drift):
        margin[zero] = 0.0

    ok = (
        np.all(ellip >= -tol * np.maximum(prm.a0 * hp, 1.0))
        and np.all(growth >= -tol * np.maximum(prm.a1 * hp1, 1.0))
        and np.all(drift >= -tol * np.maximum(g * hp1, 1.0))
    )
    report = StructureReport(
        passed=bool(ok),
        ellipticity_margin=float(ellip.min()),
        growth_margin=float(growth.min()),
        drift_margin=float(drift.min()),
        sample_count=len(values),
        tol=tol,
    )
    if not report.passed:
        logger.warning(
            f"Structure check failed for {spec.name}: ellipticity={report.ellipticity_margin:.3e} "
            f"growth={report.growth_margin:.3e} drift={report.drift_margin:.3e}"
        )
    return report


def quasi_random_samples(
    n: int,
    count: int = 256,
    radius: float = 4.0,
    value_range: float = 2.0,
    gradient_scale: float = 3.0,
    seed: int = 0,
) -> list[Sample]:
    """Scrambled Sobol samples of (x, t, h) in a box, with the zero gradient appended."""
    sampler = qmc.Sobol(d=2 * n + 1, scramble=True, seed=seed)
    unit = sampler.random(count)
    lo = np.concatenate([np.full(n, -radius), [-value_range], np.full(n, -gradient_scale)])
    hi = -lo
    box = qmc.scale(unit, lo, hi)
    samples: list[Sample] = [(row[:n], float(row[n]), row[n + 1 :]) for row in box]
    samples.append((np.full(n, 0.5), 0.0, np.zeros(n)))
    return samples

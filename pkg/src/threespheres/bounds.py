"""Closed-form three-spheres quantities.

Classical interpolation weights and convexity coordinates for p <= n, the
exponential-of-capacity weights for p = n and p > n, condenser p-capacity of
concentric balls, and the Liouville limit.
"""

import logging
import math

from scipy.special import gamma

from .errors import InvalidInputError, RegimeMismatchError
from .models import (
    CLASSICAL_MODES,
    BoundMode,
    CapacityConvention,
    RadiiTriple,
    Regime,
    StructuralParams,
    ThreeSpheresBound,
)

logger = logging.getLogger(__name__)

_REGIME_MODES: dict[Regime, tuple[BoundMode, ...]] = {
    Regime.SUB_N: (BoundMode.CLASSICAL_SUB_N,),
    Regime.BORDER_N: (BoundMode.CLASSICAL_N, BoundMode.BORDER_N, BoundMode.A_HARMONIC_N),
    Regime.GT_N: (BoundMode.P_GT_N,),
}


def regime_modes(params: StructuralParams) -> tuple[BoundMode, ...]:
    return _REGIME_MODES[params.regime]


def _require_mode(mode: BoundMode, params: StructuralParams) -> None:
    if mode not in _REGIME_MODES[params.regime]:
        raise RegimeMismatchError(
            f"mode {mode.value} does not apply to regime {params.regime.value} (p={params.p}, n={params.n})"
        )


def _require_positive_constant(C: float) -> None:
    if not (C > 0.0 and math.isfinite(C)):
        raise InvalidInputError(f"calibration constant must be positive and finite, got {C}")


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


def default_normalization(params: StructuralParams) -> float:
    omega = sphere_area(params.n)
    if params.regime == Regime.BORDER_N:
        return omega
    return omega * abs(params.alpha) ** (params.p - 1.0)


# ---------------------------------------------------------------------------
# Classical (p <= n)
# ---------------------------------------------------------------------------

def transformed_radius(params: StructuralParams, r: float) -> float:
    """Convexity coordinate: log r for p = n, -r^alpha for p < n."""
    if r <= 0.0:
        raise InvalidInputError(f"radius must be positive, got {r}")
    regime = params.regime
    if regime == Regime.GT_N:
        raise RegimeMismatchError("no convexity coordinate for p > n")
    if regime == Regime.BORDER_N:
        return math.log(r)
    return -(r**params.alpha)


def classical_weight(params: StructuralParams, triple: RadiiTriple) -> float:
    regime = params.regime
    r1, r2, r3 = triple.as_tuple()
    if regime == Regime.GT_N:
        raise RegimeMismatchError("classical interpolation is only defined for p <= n")
    if regime == Regime.BORDER_N:
        return math.log(r3 / r2) / math.log(r3 / r1)
    # Ratios keep the weight exactly scale-invariant.
    a = params.alpha
    q2, q3 = (r2 / r1) ** a, (r3 / r1) ** a
    return (q2 - q3) / (1.0 - q3)


def classical_mode(params: StructuralParams) -> BoundMode:
    if params.regime == Regime.SUB_N:
        return BoundMode.CLASSICAL_SUB_N
    if params.regime == Regime.BORDER_N:
        return BoundMode.CLASSICAL_N
    raise RegimeMismatchError("classical interpolation is only defined for p <= n")


# ---------------------------------------------------------------------------
# Capacity and explicit weights
# ---------------------------------------------------------------------------

def pcapacity(
    params: StructuralParams, r: float, R: float, conv: CapacityConvention | None = None
) -> float:
    """p-capacity of the condenser (B_r, B_R).

    For p < n the absolute-value convention (r^alpha - R^alpha)^(1-p) is used.
    """
    if not (0.0 < r < R):
        raise InvalidInputError(f"capacity needs 0 < r < R, got r={r}, R={R}")
    conv = conv or CapacityConvention()
    norm = conv.normalization if conv.normalization is not None else default_normalization(params)
    p = params.p
    if params.regime == Regime.BORDER_N:
        return norm * math.log(R / r) ** (1.0 - params.n)
    a = params.alpha
    base = R**a - r**a if params.regime == Regime.GT_N else r**a - R**a
    return norm * base ** (1.0 - p)


def _log_terms(triple: RadiiTriple) -> tuple[float, float, float]:
    r1, r2, r3 = triple.as_tuple()
    mid = 0.5 * (r2 + r3)
    outer = math.log(r3 / mid)
    T = math.log(mid / r2)
    inner = math.log(r2 / r1)
    return outer, T, inner


def big_lambda(params: StructuralParams, triple: RadiiTriple, conv: CapacityConvention | None = None) -> float:
    """Capacity functional of the p > n weight; depends on radii ratios only."""
    if params.regime != Regime.GT_N:
        raise RegimeMismatchError("the capacity functional applies to p > n")
    p, n = params.p, params.n
    r1, r2, r3 = triple.as_tuple()
    mid = 0.5 * (r2 + r3)
    _, T, _ = _log_terms(triple)
    bracket = (
        pcapacity(params, mid, r3, conv)
        + pcapacity(params, r1, r2, conv)
        + r1 ** (n - p)
        - r3 ** (n - p)
    )
    return T ** (-1.0 / p) * mid ** (1.0 - n / p) * bracket ** (1.0 / p)


def lambda_exponent(
    mode: BoundMode,
    params: StructuralParams,
    triple: RadiiTriple,
    conv: CapacityConvention | None = None,
) -> float:
    """K with lambda_formula = exp(-C K)."""
    _require_mode(mode, params)
    n = params.n
    outer, T, inner = _log_terms(triple)
    if mode == BoundMode.BORDER_N:
        S = outer ** (1.0 - n) + inner ** (1.0 - n) + math.log(triple.r3 / triple.r1)
        return (S / T) ** (1.0 / n)
    if mode == BoundMode.A_HARMONIC_N:
        return outer ** ((1.0 - n) / n) * T ** (-1.0 / n)
    if mode == BoundMode.P_GT_N:
        return big_lambda(params, triple, conv)
    raise RegimeMismatchError(f"mode {mode.value} has no explicit formula; use classical_weight")


def lambda_formula(
    mode: BoundMode,
    params: StructuralParams,
    triple: RadiiTriple,
    C: float,
    conv: CapacityConvention | None = None,
) -> float:
    _require_positive_constant(C)
    return math.exp(-C * lambda_exponent(mode, params, triple, conv))


def lambda_infinity(C: float) -> float:
    _require_positive_constant(C)
    return math.exp(-C)


def lambda_limit(mode: BoundMode, params: StructuralParams, r1: float, r2: float, C: float) -> float:
    """Limit of lambda_formula as r3 grows without bound."""
    _require_mode(mode, params)
    _require_positive_constant(C)
    if not (0.0 < r1 < r2):
        raise InvalidInputError(f"need 0 < r1 < r2, got ({r1}, {r2})")
    if mode == BoundMode.BORDER_N:
        return lambda_infinity(C)
    if mode == BoundMode.A_HARMONIC_N:
        return 1.0
    raise RegimeMismatchError(f"no r3 limit is defined for mode {mode.value}")


def make_bound(
    mode: BoundMode,
    params: StructuralParams,
    triple: RadiiTriple,
    C: float | None = None,
    conv: CapacityConvention | None = None,
) -> ThreeSpheresBound:
    """Bound object for any mode: classical weights ignore C, explicit modes require it."""
    _require_mode(mode, params)
    if mode in CLASSICAL_MODES:
        return ThreeSpheresBound(triple=triple, lam=classical_weight(params, triple), mode=mode)
    if C is None:
        raise InvalidInputError(f"mode {mode.value} requires a calibration constant")
    lam = lambda_formula(mode, params, triple, C, conv)
    if lam <= 0.0:
        raise InvalidInputError(f"weight underflowed to 0 for C={C} on {triple.as_tuple()}")
    return ThreeSpheresBound(triple=triple, lam=lam, mode=mode, C=C)

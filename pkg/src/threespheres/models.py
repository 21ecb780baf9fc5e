from collections.abc import Callable
from enum import Enum, IntEnum
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import settings


class Regime(str, Enum):
    SUB_N = "sub_n"
    BORDER_N = "border_n"
    GT_N = "gt_n"


class EnvelopeMode(str, Enum):
    GLOBAL_DECAY = "global_decay"
    CONSTANT = "constant"


class BoundMode(str, Enum):
    CLASSICAL_SUB_N = "classical_sub_n"
    CLASSICAL_N = "classical_n"
    BORDER_N = "border_n"
    A_HARMONIC_N = "a_harmonic_n"
    P_GT_N = "p_gt_n"


CLASSICAL_MODES = frozenset({BoundMode.CLASSICAL_SUB_N, BoundMode.CLASSICAL_N})


class Provenance(str, Enum):
    EXACT_FUNDAMENTAL = "exact_fundamental"
    EXACT_EXTREMAL_DRIFT = "exact_extremal_drift"
    NUMERIC_IVP = "numeric_ivp"
    NUMERIC_BVP = "numeric_bvp"


class Geometry(str, Enum):
    BALL_MAX = "ball_max"
    SPHERE_MAX = "sphere_max"


class SourceRole(str, Enum):
    SUBSOLUTION = "subsolution"
    SUPERSOLUTION = "supersolution"
    SOLUTION = "solution"


class Scheme(str, Enum):
    PICARD = "picard"
    DAMPED_NEWTON = "damped_newton"


class BandRule(str, Enum):
    DIRECT = "direct"
    PROJECT = "project"


class NodeKind(IntEnum):
    EXTERIOR = 0
    INTERIOR = 1
    BAND = 2


class PhiMode(str, Enum):
    LOG_SUB = "log_sub"
    LOG_SUPER = "log_super"


def _float_array(value: Any) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D array, got shape {arr.shape}")
    return arr


def _strictly_increasing_positive(arr: np.ndarray, label: str) -> np.ndarray:
    if arr.size == 0:
        raise ValueError(f"{label} must not be empty")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError(f"{label} must be finite and positive")
    if np.any(np.diff(arr) <= 0.0):
        raise ValueError(f"{label} must be strictly increasing")
    return arr


# ---------------------------------------------------------------------------
# Equation class
# ---------------------------------------------------------------------------

class StructuralParams(BaseModel):
    """The quintuple (n, p, a0, a1, b1) of the structural conditions."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=2)
    p: float = Field(gt=1.0, allow_inf_nan=False)
    a0: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    a1: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    b1: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _ellipticity_bounds(self) -> "StructuralParams":
        if self.a0 > self.a1:
            raise ValueError(f"a0={self.a0} must not exceed a1={self.a1}")
        return self

    @property
    def regime(self) -> Regime:
        if self.p < self.n:
            return Regime.SUB_N
        if self.p == self.n:
            return Regime.BORDER_N
        return Regime.GT_N

    @property
    def alpha(self) -> float:
        """Exponent (p-n)/(p-1) of the radial fundamental solution."""
        return (self.p - self.n) / (self.p - 1.0)


class GrowthEnvelope(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY
    b1: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)


class EquationSpec(BaseModel):
    """Operator pair (A, B) of -div A(x,u,Du) + B(x,u,Du) = 0.

    A and B are vectorized over leading axes: points and gradients have a
    trailing axis of length n, values are scalars (or arrays of the leading
    shape). A declared ``coefficient`` a(x, t) means A = a |h|^{p-2} h, a
    declared ``drift_factor`` b(x, t) means B = b |h|^{p-1}; solvers use these
    forms when present.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str = "custom"
    params: StructuralParams
    A: Callable[..., Any]
    B: Callable[..., Any]
    envelope: GrowthEnvelope
    coefficient: Callable[..., Any] | None = None
    drift_factor: Callable[..., Any] | None = None


class StructureReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    passed: bool
    ellipticity_margin: float
    growth_margin: float
    drift_margin: float
    sample_count: int
    tol: float


# ---------------------------------------------------------------------------
# Bounds
# ---------------------------------------------------------------------------

class RadiiTriple(BaseModel):
    model_config = ConfigDict(frozen=True)

    r1: float = Field(gt=0.0, allow_inf_nan=False)
    r2: float = Field(gt=0.0, allow_inf_nan=False)
    r3: float = Field(gt=0.0, allow_inf_nan=False)

    @model_validator(mode="after")
    def _ordered(self) -> "RadiiTriple":
        if not (self.r1 < self.r2 < self.r3):
            raise ValueError(f"radii must satisfy r1 < r2 < r3, got ({self.r1}, {self.r2}, {self.r3})")
        return self

    @classmethod
    def of(cls, radii: tuple[float, float, float] | list[float]) -> "RadiiTriple":
        r1, r2, r3 = radii
        return cls(r1=r1, r2=r2, r3=r3)

    def scaled(self, k: float) -> "RadiiTriple":
        return RadiiTriple(r1=k * self.r1, r2=k * self.r2, r3=k * self.r3)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r1, self.r2, self.r3)


class CapacityConvention(BaseModel):
    """Normalization multiplier of the condenser capacity; None selects the standard constant."""

    model_config = ConfigDict(frozen=True)

    normalization: float | None = Field(default=None, gt=0.0, allow_inf_nan=False)


class ThreeSpheresBound(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    triple: RadiiTriple
    lam: float = Field(alias="lambda", gt=0.0, le=1.0)
    mode: BoundMode
    C: float | None = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _constant_matches_mode(self) -> "ThreeSpheresBound":
        if self.mode in CLASSICAL_MODES and self.C is not None:
            raise ValueError(f"classical mode {self.mode.value} carries no calibration constant")
        if self.mode not in CLASSICAL_MODES and self.C is None:
            raise ValueError(f"mode {self.mode.value} requires a calibration constant C")
        return self


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------

class RadialProfile(BaseModel):
    """Radial solution sampled on an annular mesh."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mesh: np.ndarray
    values: np.ndarray
    derivative_values: np.ndarray
    params: StructuralParams
    provenance: Provenance

    @field_validator("mesh", "values", "derivative_values", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return _float_array(value)

    @model_validator(mode="after")
    def _consistent(self) -> "RadialProfile":
        _strictly_increasing_positive(self.mesh, "mesh")
        if not (self.mesh.shape == self.values.shape == self.derivative_values.shape):
            raise ValueError("mesh, values and derivative_values must have equal length")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.derivative_values))):
            raise ValueError("profile values must be finite")
        return self

    @property
    def r_in(self) -> float:
        return float(self.mesh[0])

    @property
    def r_out(self) -> float:
        return float(self.mesh[-1])


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(default_factory=lambda: settings.fdm_epsilon, gt=0.0)
    tol: float = Field(default_factory=lambda: settings.fdm_tol, gt=0.0)
    max_iter: int = Field(default_factory=lambda: settings.fdm_max_iter, ge=1)
    scheme: Scheme = Scheme.PICARD
    damping: float = Field(default=1.0, gt=0.0, le=1.0)
    omega: float | None = Field(default=None, gt=0.0, lt=2.0)
    band_rule: BandRule = BandRule.DIRECT


class SolveReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    scheme: Scheme
    iterations: int
    converged: bool
    residual_history: list[float]
    linear_sweeps: int = 0


class GridFunction2D(BaseModel):
    """Nodal values on a lattice covering a disk (or annulus) with a node-kind mask.

    ``values[i, j]`` sits at ``(x[i], y[j])``; exterior nodes hold NaN.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    h: float = Field(gt=0.0)
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = Field(gt=0.0)
    inner_radius: float = Field(default=0.0, ge=0.0)
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    report: SolveReport | None = None

    @model_validator(mode="after")
    def _shapes(self) -> "GridFunction2D":
        shape = (self.x.size, self.y.size)
        if self.values.shape != shape or self.mask.shape != shape:
            raise ValueError(f"values and mask must have shape {shape}")
        if self.inner_radius >= self.radius:
            raise ValueError("inner_radius must be smaller than radius")
        live = self.mask != NodeKind.EXTERIOR
        if not np.all(np.isfinite(self.values[live])):
            raise ValueError("values must be finite on interior and boundary-band nodes")
        return self

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def distance(self) -> np.ndarray:
        X, Y = self.coordinates()
        return np.hypot(X - self.center[0], Y - self.center[1])

    @property
    def interior(self) -> np.ndarray:
        return self.mask == NodeKind.INTERIOR

    @property
    def band(self) -> np.ndarray:
        return self.mask == NodeKind.BAND


class BallProfile(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    center: tuple[float, ...]
    radii: np.ndarray
    M: np.ndarray
    m: np.ndarray
    geometry: Geometry
    params: StructuralParams
    role: SourceRole | None = None
    envelope: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY
    source: Any = Field(default=None, exclude=True, repr=False)

    @field_validator("radii", "M", "m", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return _float_array(value)

    @model_validator(mode="after")
    def _consistent(self) -> "BallProfile":
        _strictly_increasing_positive(self.radii, "radii")
        if not (self.radii.shape == self.M.shape == self.m.shape):
            raise ValueError("radii, M and m must have equal length")
        if not (np.all(np.isfinite(self.M)) and np.all(np.isfinite(self.m))):
            raise ValueError("M and m must be finite")
        if np.any(self.M < self.m):
            raise ValueError("M(r) must dominate m(r) at every radius")
        return self

    @property
    def osc(self) -> np.ndarray:
        return self.M - self.m

    def index_of(self, radius: float) -> int:
        hits = np.flatnonzero(np.isclose(self.radii, radius, rtol=1e-12, atol=0.0))
        if hits.size == 0:
            raise KeyError(radius)
        return int(hits[0])

    def negated(self) -> "BallProfile":
        """Profile of -u: M and m swap roles and change sign."""
        role = {
            SourceRole.SUBSOLUTION: SourceRole.SUPERSOLUTION,
            SourceRole.SUPERSOLUTION: SourceRole.SUBSOLUTION,
        }.get(self.role, self.role)
        return self.model_copy(update={"M": -self.m, "m": -self.M, "role": role})


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

LambdaStar = float | Literal["all"]


class VerificationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    triple: RadiiTriple
    lambda_used: float
    margin: float
    passed: bool
    dual: bool = False
    tol: float = 0.0
    lambda_star: LambdaStar | None = None


class CalibrationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    C_min: float = Field(gt=0.0)
    family_size: int = Field(ge=1)
    binding_triple: RadiiTriple
    binding_index: int = 0
    mode: BoundMode


class ConvexityReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_margin: float
    convex: bool
    margins: list[float]
    tol: float

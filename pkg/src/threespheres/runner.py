"""Reproducible experiment runs: JSON config in, profiles CSV + report JSON + summary table out.

A config names one equation preset, a list of sources (exact radial solutions,
radial shooting solutions, 2-D grid solutions or manufactured families), the
radii geometry and the bound to check. Everything randomized is drawn from a
Philox generator keyed by the config seed.
"""

import contextlib
import csv
import io
import json
import logging
import os
import tempfile
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from decimal import ROUND_DOWN, Decimal
from enum import Enum
from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from jinja2 import Environment, FileSystemLoader
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .ballstats import profile
from .bounds import make_bound
from .config import settings
from .errors import ConfigError, InvalidInputError, ThreeSpheresError, VerificationGateError
from .families import FAMILIES, build_family, harmonic_boundary, philox_generator
from .fdm2d import BoundaryData, disk_grid, solve_dirichlet
from .models import (
    CLASSICAL_MODES,
    BallProfile,
    BoundMode,
    CalibrationResult,
    CapacityConvention,
    EnvelopeMode,
    EquationSpec,
    Geometry,
    LambdaStar,
    RadiiTriple,
    Regime,
    SolverConfig,
    SourceRole,
    StructuralParams,
    ThreeSpheresBound,
    VerificationReport,
)
from .presets import PRESETS, build_spec
from .radial import extremal_drift_solution, fundamental_solution, solve_radial_bvp, solve_radial_ivp
from .verify import calibrate_constant, family_lambda_floor, sweep, validate_constant

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).parent / "templates"
CSV_HEADER = ("r1", "r2", "r3", "lambda", "lambda_star", "margin", "pass")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# Boundary data for grid sources
# ---------------------------------------------------------------------------

def _radial_power(params: StructuralParams) -> BoundaryData:
    """Planar fundamental solution: log|x| for p = 2, |x|^((p-2)/(p-1)) otherwise."""
    if params.p == 2.0:
        return lambda x, y: np.log(np.hypot(x, y))
    return lambda x, y: np.hypot(x, y) ** params.alpha


BOUNDARY_TERMS: dict[str, Callable[[StructuralParams, np.random.Generator], BoundaryData]] = {
    "constant": lambda params, rng: lambda x, y: np.full(np.shape(x), 2.5),
    "linear": lambda params, rng: lambda x, y: np.asarray(x, dtype=float),
    "x2-y2": lambda params, rng: lambda x, y: np.asarray(x) ** 2 - np.asarray(y) ** 2,
    "exp-cos": lambda params, rng: lambda x, y: np.exp(x) * np.cos(y),
    "radial-power": lambda params, rng: _radial_power(params),
    "harmonic-random": lambda params, rng: harmonic_boundary(rng),
}


# ---------------------------------------------------------------------------
# Config schema (version 1)
# ---------------------------------------------------------------------------

class FundamentalSource(_Strict):
    kind: Literal["fundamental"]
    a: float = 0.0
    b: float = -1.0
    role: SourceRole | None = None


class ExtremalSource(_Strict):
    kind: Literal["extremal"]
    sign: Literal[1, -1] = 1
    u0: float = 0.0
    r_in: float = Field(default=1.0, ge=1.0)
    scale: float = Field(default=1.0, gt=0.0)
    role: SourceRole | None = None


class RadialIVPSource(_Strict):
    kind: Literal["radial_ivp"]
    r_in: float = Field(gt=0.0)
    r_out: float = Field(gt=0.0)
    u_in: float = 0.0
    du_in: float = 1.0
    steps: int = Field(default=512, ge=16)
    role: SourceRole | None = None


class RadialBVPSource(_Strict):
    kind: Literal["radial_bvp"]
    r_in: float = Field(gt=0.0)
    r_out: float = Field(gt=0.0)
    u_in: float
    u_out: float
    steps: int = Field(default=512, ge=16)
    role: SourceRole | None = None


class GridSource(_Strict):
    kind: Literal["grid"]
    boundary: str
    h: float = Field(default=1.0 / 64.0, gt=0.0)
    radius: float = Field(default=1.0, gt=0.0)
    inner_radius: float = Field(default=0.0, ge=0.0)
    center: tuple[float, float] = (0.0, 0.0)
    role: SourceRole | None = SourceRole.SOLUTION

    @field_validator("boundary")
    @classmethod
    def _known_boundary(cls, value: str) -> str:
        if value not in BOUNDARY_TERMS:
            raise ValueError(f"unknown boundary term '{value}'; choose from {sorted(BOUNDARY_TERMS)}")
        return value


class FamilySource(_Strict):
    kind: Literal["family"]
    family: str
    negate: bool = False

    @field_validator("family")
    @classmethod
    def _known_family(cls, value: str) -> str:
        if value not in FAMILIES:
            raise ValueError(f"unknown family '{value}'; choose from {sorted(FAMILIES)}")
        return value


SourceConfig = Annotated[
    FundamentalSource | ExtremalSource | RadialIVPSource | RadialBVPSource | GridSource | FamilySource,
    Field(discriminator="kind"),
]


class GeometryConfig(_Strict):
    center: tuple[float, ...] | None = None
    radii: list[float]
    triples: list[tuple[float, float, float]]
    kind: Geometry = Geometry.BALL_MAX

    @model_validator(mode="after")
    def _triples_in_radii(self) -> "GeometryConfig":
        if not self.radii or any(b <= a for a, b in zip(self.radii, self.radii[1:], strict=False)):
            raise ValueError("radii must be a nonempty, strictly increasing list")
        if not self.triples:
            raise ValueError("triples must not be empty")
        for triple in self.triples:
            RadiiTriple.of(triple)
            missing = [r for r in triple if not np.any(np.isclose(self.radii, r, rtol=1e-12, atol=0.0))]
            if missing:
                raise ValueError(f"triple {triple} uses radii {missing} outside the radii list")
        return self

    def radii_triples(self) -> list[RadiiTriple]:
        return [RadiiTriple.of(t) for t in self.triples]


class BoundConfig(_Strict):
    """Which weight each (profile, triple) is checked with.

    Classical modes use the closed-form weight unless ``weight`` fixes one
    (a number, or "family_min" for the smallest empirical lambda* of the
    run's own profiles, or of ``weight_family`` when given). Explicit modes
    take C, or "calibrate" for C_min.
    """

    mode: BoundMode
    C: float | Literal["calibrate"] | None = None
    weight: float | Literal["family_min"] | None = None
    weight_family: str | None = None
    holdout: str | None = None
    normalization: float | None = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _constant_matches_mode(self) -> "BoundConfig":
        if self.mode in CLASSICAL_MODES:
            if self.C is not None or self.holdout is not None:
                raise ValueError(f"classical mode {self.mode.value} takes no constant and no hold-out family")
        elif self.weight is not None:
            raise ValueError(f"mode {self.mode.value} derives its weight from C; drop 'weight'")
        elif self.C is None:
            raise ValueError(f"mode {self.mode.value} needs C (a positive number or \"calibrate\")")
        elif not isinstance(self.C, str) and self.C <= 0.0:
            raise ValueError("C must be positive")
        if isinstance(self.weight, float) and not (0.0 < self.weight <= 1.0):
            raise ValueError(f"weight must lie in (0, 1], got {self.weight}")
        if self.holdout is not None and self.holdout not in FAMILIES:
            raise ValueError(f"unknown hold-out family '{self.holdout}'")
        if self.weight_family is not None:
            if self.weight != "family_min":
                raise ValueError("weight_family only applies to weight \"family_min\"")
            if self.weight_family not in FAMILIES:
                raise ValueError(f"unknown weight family '{self.weight_family}'")
        return self

    @property
    def calibrate(self) -> bool:
        return self.C == "calibrate"


class ExperimentConfig(_Strict):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    schema_version: Literal[1] = Field(alias="schema")
    name: str = Field(pattern=r"^[A-Za-z][A-Za-z0-9_.-]*$")
    preset: str = "p-laplace"
    regime: Regime
    params: StructuralParams | None = None
    envelope: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY
    sources: list[SourceConfig] = Field(min_length=1)
    geometry: GeometryConfig | None = None
    solver: SolverConfig = Field(default_factory=SolverConfig)
    bound: BoundConfig
    seed: int = Field(default=0, ge=0)
    dual: bool = False
    output_dir: str | None = None

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value: str) -> str:
        if value not in PRESETS:
            raise ValueError(f"unknown preset '{value}'; choose from {sorted(PRESETS)}")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if self.family_only:
            # families are built with their own presets, parameters and envelopes
            stray = sorted({"preset", "params", "envelope"} & self.model_fields_set)
            if stray:
                raise ValueError(f"family sources carry their own equations; drop {stray}")
            return self
        if self.params is None:
            raise ValueError("sources other than families need 'params'")
        if self.params.regime != self.regime:
            raise ValueError(f"params give regime {self.params.regime.value}, config says {self.regime.value}")
        if self.geometry is None:
            raise ValueError("sources other than families need a geometry block")
        return self

    @property
    def family_only(self) -> bool:
        return all(s.kind == "family" for s in self.sources)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate one experiment config; malformed files raise ConfigError."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw, source=str(path))


def parse_config(raw: dict, source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {source}:\n{exc}") from exc


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------

class ReportRow(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    source: str
    r1: float
    r2: float
    r3: float
    lam: float = Field(alias="lambda")
    lambda_star: LambdaStar | None = None
    margin: float
    passed: bool = Field(alias="pass")
    dual: bool = False

    @classmethod
    def from_report(cls, source: str, report: VerificationReport) -> "ReportRow":
        r1, r2, r3 = report.triple.as_tuple()
        return cls(
            source=source, r1=r1, r2=r2, r3=r3, lam=report.lambda_used, lambda_star=report.lambda_star,
            margin=report.margin, passed=report.passed, dual=report.dual,
        )


class ProfileRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: str
    geometry: Geometry
    radii: list[float]
    M: list[float]
    m: list[float]

    @classmethod
    def from_profile(cls, source: str, prof: BallProfile) -> "ProfileRecord":
        return cls(
            source=source, geometry=prof.geometry, radii=prof.radii.tolist(), M=prof.M.tolist(), m=prof.m.tolist()
        )


class ReportBundle(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    schema_version: Literal[1] = Field(default=1, alias="schema")
    name: str
    preset: str | None = None
    regime: Regime
    mode: BoundMode
    seed: int
    dual: bool
    C: float | None = None
    weight: float | None = None
    calibration: CalibrationResult | None = None
    rows: list[ReportRow]
    holdout_family: str | None = None
    holdout_rows: list[ReportRow] = Field(default_factory=list)
    profiles: list[ProfileRecord]

    @property
    def failures(self) -> int:
        return sum(not row.passed for row in [*self.rows, *self.holdout_rows])

    @property
    def passed(self) -> bool:
        return self.failures == 0


class ReportFormat(str, Enum):
    JSON = "json"
    CSV = "csv"
    TABLE = "table"


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

class _Member(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    label: str
    profile: BallProfile
    triples: list[RadiiTriple]


def _radial_member(label: str, source, cfg: ExperimentConfig, role: SourceRole | None) -> _Member:
    geo = cfg.geometry
    prof = profile(source, geo.center, geo.radii, geo.kind, role=role, params=cfg.params, envelope=cfg.envelope)
    return _Member(label=label, profile=prof, triples=geo.radii_triples())


def _grid_member(
    label: str, src: GridSource, cfg: ExperimentConfig, spec: EquationSpec, rng: np.random.Generator
) -> _Member:
    geo = cfg.geometry
    template = disk_grid(src.radius, src.h, src.center, src.inner_radius)
    boundary = BOUNDARY_TERMS[src.boundary](cfg.params, rng)
    solution = solve_dirichlet(spec, boundary, template, cfg.solver)
    center = src.center if geo.center is None else geo.center
    prof = profile(solution, center, geo.radii, geo.kind, role=src.role, params=cfg.params, envelope=cfg.envelope)
    return _Member(label=label, profile=prof, triples=geo.radii_triples())


def _family_members(src: FamilySource, seed: int) -> list[_Member]:
    family = build_family(src.family, seed=seed)
    profiles = [p.negated() for p in family.profiles] if src.negate else family.profiles
    tag = f"{family.name}-negated" if src.negate else family.name
    return [_Member(label=f"{tag}[{k}]", profile=p, triples=family.triples) for k, p in enumerate(profiles)]


def collect_profiles(cfg: ExperimentConfig) -> list[_Member]:
    """Materialize every source of the config into ball profiles, in config order."""
    spec = None if cfg.family_only else build_spec(cfg.preset, cfg.params, cfg.envelope)
    rng = philox_generator(cfg.seed)
    members: list[_Member] = []
    for k, src in enumerate(cfg.sources):
        label = f"{src.kind}[{k}]"
        if isinstance(src, FundamentalSource):
            members.append(_radial_member(label, fundamental_solution(cfg.params, src.a, src.b), cfg, src.role))
        elif isinstance(src, ExtremalSource):
            exact = extremal_drift_solution(cfg.params, src.sign, src.u0, src.r_in, src.scale)
            members.append(_radial_member(label, exact, cfg, src.role))
        elif isinstance(src, RadialIVPSource):
            prof = solve_radial_ivp(spec, src.r_in, src.u_in, src.du_in, src.r_out, src.steps)
            members.append(_radial_member(label, prof, cfg, src.role))
        elif isinstance(src, RadialBVPSource):
            prof = solve_radial_bvp(spec, src.r_in, src.u_in, src.r_out, src.u_out, src.steps)
            members.append(_radial_member(label, prof, cfg, src.role))
        elif isinstance(src, GridSource):
            members.append(_grid_member(label, src, cfg, spec, rng))
        else:
            members.extend(_family_members(src, cfg.seed))

    for member in members:
        if member.profile.params.regime != cfg.regime:
            raise ConfigError(
                f"source {member.label} lives in regime {member.profile.params.regime.value}, "
                f"config says {cfg.regime.value}"
            )
    logger.info(f"Collected {len(members)} profiles for '{cfg.name}'")
    return members


def run_experiment(cfg: ExperimentConfig) -> ReportBundle:
    """Profiles, bound (fixed or calibrated), verification rows and optional hold-out rows.

    Deterministic in (config, seed). Solver failures propagate as ThreeSpheresError;
    failed gates are recorded in the bundle (see ``raise_for_gates``).
    """
    preset = None if cfg.family_only else cfg.preset
    logger.info(f"Experiment '{cfg.name}' started: preset={preset or '-'}, mode={cfg.bound.mode.value}, seed={cfg.seed}")
    members = collect_profiles(cfg)
    profiles = [m.profile for m in members]
    triples = [m.triples for m in members]
    mode = cfg.bound.mode
    conv = CapacityConvention(normalization=cfg.bound.normalization)

    calibration = None
    weight = None
    C = None
    if cfg.bound.calibrate:
        calibration = calibrate_constant(profiles, triples, mode, conv, dual=cfg.dual)
        C = calibration.C_min
    elif cfg.bound.weight == "family_min" and cfg.bound.weight_family is not None:
        reference = build_family(cfg.bound.weight_family, seed=cfg.seed)
        weight = family_lambda_floor(reference.profiles, reference.triples)
        logger.info(f"Weight {weight:.6g} taken from family '{reference.name}'")
    elif cfg.bound.weight == "family_min":
        weight = family_lambda_floor(profiles, triples, dual=cfg.dual)
    elif cfg.bound.weight is not None:
        weight = cfg.bound.weight
    else:
        C = cfg.bound.C

    def bound_fn(prof: BallProfile, triple: RadiiTriple) -> ThreeSpheresBound:
        if weight is not None:
            return ThreeSpheresBound(triple=triple, lam=weight, mode=mode)
        return make_bound(mode, prof.params, triple, C, conv)

    reports = sweep(profiles, triples, bound_fn, dual=cfg.dual)
    labels = [m.label for m in members for _ in m.triples]
    rows = [ReportRow.from_report(label, rep) for label, rep in zip(labels, reports, strict=True)]

    holdout_rows: list[ReportRow] = []
    if cfg.bound.holdout is not None:
        family = build_family(cfg.bound.holdout, seed=cfg.seed)
        held = validate_constant(family.profiles, family.triples, mode, C, conv, dual=cfg.dual)
        per_member = len(family.triples)
        holdout_rows = [
            ReportRow.from_report(f"{family.name}[{j // per_member}]", rep) for j, rep in enumerate(held)
        ]

    bundle = ReportBundle(
        name=cfg.name,
        preset=preset,
        regime=cfg.regime,
        mode=mode,
        seed=cfg.seed,
        dual=cfg.dual,
        C=C,
        weight=weight,
        calibration=calibration,
        rows=rows,
        holdout_family=cfg.bound.holdout,
        holdout_rows=holdout_rows,
        profiles=[ProfileRecord.from_profile(m.label, m.profile) for m in members],
    )
    logger.info(
        f"Experiment '{cfg.name}' finished: {len(rows)} rows, {len(holdout_rows)} hold-out rows, "
        f"{bundle.failures} failures"
    )
    return bundle


def raise_for_gates(bundle: ReportBundle) -> None:
    if not bundle.passed:
        raise VerificationGateError(f"experiment '{bundle.name}': {bundle.failures} rows failed", bundle.failures)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def format_number(value: float) -> str:
    return repr(float(value))


def _star(value: LambdaStar | None) -> str:
    if value is None:
        return ""
    return value if isinstance(value, str) else format_number(value)


def csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def truncate_significant(value: float | str | None, digits: int | None = None) -> str:
    """Cut ``value`` to ``digits`` significant digits (toward zero) for the summary table."""
    if value is None:
        return "-"
    if isinstance(value, str):
        return value
    digits = settings.table_digits if digits is None else digits
    exact = Decimal(repr(float(value)))
    if not exact.is_finite() or exact.is_zero():
        return f"{float(value):g}"
    step = Decimal(1).scaleb(exact.adjusted() - digits + 1)
    return f"{float(exact.quantize(step, rounding=ROUND_DOWN)):.{digits}g}"


def _render_table(bundle: ReportBundle) -> str:
    env = Environment(
        loader=FileSystemLoader(str(TEMPLATES_DIR)),
        autoescape=False,
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )
    env.filters["sig"] = truncate_significant
    template = env.get_template("summary.txt.j2")
    return template.render(bundle=bundle, digits=settings.table_digits)


def emit_report(bundle: ReportBundle, fmt: ReportFormat | str) -> str:
    """Serialize a bundle; the same bundle always yields the same text."""
    try:
        fmt = ReportFormat(fmt)
    except ValueError:
        raise InvalidInputError(f"unsupported report format '{fmt}'; choose from {[f.value for f in ReportFormat]}") from None
    if fmt == ReportFormat.JSON:
        return json.dumps(bundle.model_dump(mode="json", by_alias=True), indent=2) + "\n"
    if fmt == ReportFormat.CSV:
        rows = [
            (
                format_number(r.r1),
                format_number(r.r2),
                format_number(r.r3),
                format_number(r.lam),
                _star(r.lambda_star),
                format_number(r.margin),
                "true" if r.passed else "false",
            )
            for r in [*bundle.rows, *bundle.holdout_rows]
        ]
        return csv_text(CSV_HEADER, rows)
    return _render_table(bundle)


def profiles_csv(records: Sequence[ProfileRecord]) -> str:
    rows = [
        (rec.source, format_number(r), format_number(M), format_number(m))
        for rec in records
        for r, M, m in zip(rec.radii, rec.M, rec.m, strict=True)
    ]
    return csv_text(("source", "r", "M", "m"), rows)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def resolve_output_dir(cfg: ExperimentConfig | None = None, override: str | None = None) -> Path:
    """CLI flag, then OUTPUT_DIR from the environment, then the config, then the default."""
    if override:
        return Path(override)
    if "output_dir" in settings.model_fields_set:
        return Path(settings.output_dir)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(settings.output_dir)


def write_bundle(bundle: ReportBundle, output_dir: str | Path) -> dict[str, Path]:
    """Write profiles.csv, report.json and summary.txt under <output_dir>/<name>/."""
    target = Path(output_dir) / bundle.name
    paths = {
        "profiles": target / "profiles.csv",
        "report": target / "report.json",
        "summary": target / "summary.txt",
    }
    atomic_write(paths["profiles"], profiles_csv(bundle.profiles))
    atomic_write(paths["report"], emit_report(bundle, ReportFormat.JSON))
    atomic_write(paths["summary"], emit_report(bundle, ReportFormat.TABLE))
    logger.info(f"Wrote {', '.join(str(p) for p in paths.values())}")
    return paths


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------

class BatchResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    bundle: ReportBundle | None = None
    paths: dict[str, Path] = Field(default_factory=dict)
    error: ThreeSpheresError | None = None

    @property
    def gate_failed(self) -> bool:
        return isinstance(self.error, VerificationGateError)


def run_batch(
    configs: Sequence[ExperimentConfig], output_dir: str | None = None, max_workers: int | None = None
) -> list[BatchResult]:
    """Run independent experiments concurrently; results keep the input order."""

    def run_one(cfg: ExperimentConfig) -> BatchResult:
        bundle = None
        paths: dict[str, Path] = {}
        try:
            bundle = run_experiment(cfg)
            paths = write_bundle(bundle, resolve_output_dir(cfg, output_dir))
            raise_for_gates(bundle)
        except VerificationGateError as exc:
            logger.error(str(exc))
            return BatchResult(name=cfg.name, bundle=bundle, paths=paths, error=exc)
        except ThreeSpheresError as exc:
            logger.exception(f"Experiment '{cfg.name}' failed")
            return BatchResult(name=cfg.name, bundle=bundle, paths=paths, error=exc)
        return BatchResult(name=cfg.name, bundle=bundle, paths=paths)

    names = [cfg.name for cfg in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"experiment names must be unique within a batch, got {names}")
    with ThreadPoolExecutor(max_workers=max_workers or settings.max_workers) as pool:
        return list(pool.map(run_one, configs))

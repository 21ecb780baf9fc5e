from abc import ABC, abstractmethod

import numpy as np

from ..models import EnvelopeMode, EquationSpec, GrowthEnvelope, StructuralParams
from ..params import envelope_eval


def power_flux(coef: np.ndarray | float, grads: np.ndarray, p: float) -> np.ndarray:
    """coef * |h|^(p-2) * h over the trailing axis, extended by 0 at h = 0."""
    h = np.asarray(grads, dtype=float)
    norm = np.linalg.norm(h, axis=-1, keepdims=True)
    safe = np.where(norm > 0.0, norm, 1.0)
    scale = np.where(norm > 0.0, safe ** (p - 2.0), 0.0)
    return np.asarray(coef, dtype=float)[..., None] * scale * h


def power_drift(factor: np.ndarray | float, grads: np.ndarray, p: float) -> np.ndarray:
    """factor * |h|^(p-1) over the trailing axis."""
    norm = np.linalg.norm(np.asarray(grads, dtype=float), axis=-1)
    return factor * norm ** (p - 1.0)


class BasePreset(ABC):
    """Base interface for named equation presets."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Name the preset is addressed by from configs and the CLI."""
        ...

    @abstractmethod
    def build(self, params: StructuralParams, envelope_mode: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY) -> EquationSpec:
        """Bind the preset to structural parameters."""
        ...

    def _envelope(self, params: StructuralParams, envelope_mode: EnvelopeMode) -> GrowthEnvelope:
        return GrowthEnvelope(mode=envelope_mode, b1=params.b1)

    @staticmethod
    def _radius(points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.asarray(points, dtype=float), axis=-1)

    @staticmethod
    def _envelope_factor(env: GrowthEnvelope, points: np.ndarray) -> np.ndarray:
        return np.asarray(envelope_eval(env, BasePreset._radius(points)), dtype=float)

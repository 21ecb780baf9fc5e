import numpy as np

from ..models import EnvelopeMode, EquationSpec, StructuralParams
from .base import BasePreset, power_flux


class PLaplacePreset(BasePreset):
    """A(h) = |h|^(p-2) h, B = 0. Saturates both bounds with a0 = a1 = 1."""

    @property
    def name(self) -> str:
        return "p-laplace"

    def build(self, params: StructuralParams, envelope_mode: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY) -> EquationSpec:
        p = params.p

        def coefficient(points, values):
            return np.ones(np.shape(values), dtype=float)

        def drift_factor(points, values):
            return np.zeros(np.shape(values), dtype=float)

        return EquationSpec(
            name=self.name,
            params=params,
            A=lambda x, t, h: power_flux(1.0, h, p),
            B=lambda x, t, h: np.zeros(np.shape(t), dtype=float),
            envelope=self._envelope(params, envelope_mode),
            coefficient=coefficient,
            drift_factor=drift_factor,
        )

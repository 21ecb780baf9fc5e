import numpy as np

from ..models import EnvelopeMode, EquationSpec, StructuralParams
from .base import BasePreset, power_flux


class WeightedPLaplacePreset(BasePreset):
    """a(x)|h|^(p-2) h with a(x) = a0 + (a1 - a0)(1 + cos(2 pi |x|))/2, B = 0.

    The weight depends on |x| only, so radial reductions stay exact.
    """

    @property
    def name(self) -> str:
        return "weighted-p-laplace"

    def build(self, params: StructuralParams, envelope_mode: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY) -> EquationSpec:
        p, a0, a1 = params.p, params.a0, params.a1

        def coefficient(points, values):
            r = self._radius(points)
            return a0 + (a1 - a0) * 0.5 * (1.0 + np.cos(2.0 * np.pi * r))

        return EquationSpec(
            name=self.name,
            params=params,
            A=lambda x, t, h: power_flux(coefficient(x, t), h, p),
            B=lambda x, t, h: np.zeros(np.shape(t), dtype=float),
            envelope=self._envelope(params, envelope_mode),
            coefficient=coefficient,
            drift_factor=lambda x, t: np.zeros(np.shape(t), dtype=float),
        )


class SolutionWeightedPLaplacePreset(BasePreset):
    """a(u)|h|^(p-2) h with a(t) = a0 + (a1 - a0)(1 + tanh t)/2, B = 0.

    No closed-form solutions; exercised through residuals and structure margins.
    """

    @property
    def name(self) -> str:
        return "u-weighted-p-laplace"

    def build(self, params: StructuralParams, envelope_mode: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY) -> EquationSpec:
        p, a0, a1 = params.p, params.a0, params.a1

        def coefficient(points, values):
            return a0 + (a1 - a0) * 0.5 * (1.0 + np.tanh(np.asarray(values, dtype=float)))

        return EquationSpec(
            name=self.name,
            params=params,
            A=lambda x, t, h: power_flux(coefficient(x, t), h, p),
            B=lambda x, t, h: np.zeros(np.shape(t), dtype=float),
            envelope=self._envelope(params, envelope_mode),
            coefficient=coefficient,
            drift_factor=lambda x, t: np.zeros(np.shape(t), dtype=float),
        )

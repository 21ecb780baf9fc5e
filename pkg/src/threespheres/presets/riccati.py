import numpy as np

from ..models import EnvelopeMode, EquationSpec, StructuralParams
from .base import BasePreset, power_drift, power_flux


class RiccatiExtremalPreset(BasePreset):
    """p-Laplacian with extremal drift B = sign * g(x) |h|^(p-1).

    Saturates the drift bound. Negating a solution of the plus preset gives a
    solution of the minus preset, and vice versa.
    """

    def __init__(self, sign: int):
        if sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {sign}")
        self.sign = sign

    @property
    def name(self) -> str:
        return "riccati-extremal-plus" if self.sign > 0 else "riccati-extremal-minus"

    def build(self, params: StructuralParams, envelope_mode: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY) -> EquationSpec:
        p = params.p
        env = self._envelope(params, envelope_mode)
        sign = float(self.sign)

        def drift_factor(points, values):
            return sign * self._envelope_factor(env, points)

        return EquationSpec(
            name=self.name,
            params=params,
            A=lambda x, t, h: power_flux(1.0, h, p),
            B=lambda x, t, h: power_drift(drift_factor(x, t), h, p),
            envelope=env,
            coefficient=lambda x, t: np.ones(np.shape(t), dtype=float),
            drift_factor=drift_factor,
        )

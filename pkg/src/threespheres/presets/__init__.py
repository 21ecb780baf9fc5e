from ..errors import InvalidInputError
from ..models import EnvelopeMode, EquationSpec, StructuralParams
from .base import BasePreset
from .p_laplace import PLaplacePreset
from .riccati import RiccatiExtremalPreset
from .weighted import SolutionWeightedPLaplacePreset, WeightedPLaplacePreset

PRESETS: dict[str, BasePreset] = {
    preset.name: preset
    for preset in (
        PLaplacePreset(),
        WeightedPLaplacePreset(),
        SolutionWeightedPLaplacePreset(),
        RiccatiExtremalPreset(+1),
        RiccatiExtremalPreset(-1),
    )
}


def get_preset(name: str) -> BasePreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"Unknown preset '{name}'; choose from {sorted(PRESETS)}") from None


def build_spec(
    name: str, params: StructuralParams, envelope_mode: EnvelopeMode = EnvelopeMode.GLOBAL_DECAY
) -> EquationSpec:
    return get_preset(name).build(params, envelope_mode)


__all__ = ["BasePreset", "PRESETS", "build_spec", "get_preset"]

import logging
from dataclasses import dataclass, replace
from typing import List

from .constants import VALID_PRESETS
from .errors import ConfigurationError
from .simulator import ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Preset:
    """A named sweep: one ScenarioConfig per curve family (arm)."""

    name: str
    arms: List[ScenarioConfig]
    note: str = ""


def _fig1a(base: ScenarioConfig) -> Preset:
    template = replace(base, m=120, k=6, b2=10, channel="rayleigh", schemes=("analog", "mrt-hybrid"))
    return Preset(
        name="fig1a",
        arms=[replace(template, b1=b1) for b1 in (1, 5)],
        note="MRT hybrid vs analog; B1=1 lies below the B1 threshold, B1=5 above it",
    )


def _fig1b(base: ScenarioConfig) -> Preset:
    template = replace(base, m=60, k=6, b1=2, channel="rayleigh", schemes=("analog", "zf-hybrid"))
    return Preset(
        name="fig1b",
        arms=[replace(template, b2=b2) for b2 in (3, 10)],
        note="B2 arms {3, 10} chosen to straddle the B2 threshold of about 4.3 to 4.8",
    )


def _fig2(base: ScenarioConfig) -> Preset:
    template = replace(
        base, m=40, k=5, b1=2, channel="mmwave", num_paths=10, schemes=("analog", "zf-hybrid")
    )
    return Preset(
        name="fig2",
        arms=[replace(template, b2=b2) for b2 in (3, 12)],
        note="mmWave channel; crossover checked qualitatively since thresholds assume Rayleigh fading",
    )


_BUILDERS = {"fig1a": _fig1a, "fig1b": _fig1b, "fig2": _fig2}

# Experiment keys every preset sets itself
FIXED_KEYS = ("m", "k", "b1", "b2", "channel", "paths", "scheme")


def build_preset(name: str, base: ScenarioConfig) -> Preset:
    """
    Bind a preset to the run settings of `base`.

    The preset fixes the array size, users, bit widths, channel and schemes; the SNR grid, path
    losses, trials and seed come from `base`.
    """
    if name not in VALID_PRESETS:
        raise ConfigurationError(f"Unknown preset '{name}'. Must be one of: {', '.join(VALID_PRESETS)}")
    preset = _BUILDERS[name](base)
    logger.info(f"Preset {name}: {len(preset.arms)} arms. {preset.note}")
    return preset

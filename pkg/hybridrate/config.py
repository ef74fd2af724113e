import logging
import math
import shutil
from pathlib import Path
from typing import Dict, Optional, Tuple

import typer
from diskcache import Cache  # pyright: ignore[reportMissingTypeStubs]
from platformdirs import user_cache_dir
from rich.console import Console

from . import constants
from .constants import DEFAULT_CACHE_SIZE, DEFAULT_TRIALS, DEFAULT_WORKERS, VALID_SCHEMES
from .errors import ConfigurationError
from .numerics import Bits

console = Console()
logger = logging.getLogger(__name__)

CACHE_DIR = Path(user_cache_dir("hybridrate"))

# Keys accepted in an experiment file given with --config
EXPERIMENT_KEYS = [
    "m",
    "k",
    "b1",
    "b2",
    "snr-db",
    "beta",
    "channel",
    "paths",
    "trials",
    "seed",
    "workers",
    "scheme",
    "preset",
    "per-trial-beta",
    "freeze-codebook",
]


def _read_pairs(path: Path) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if "=" in line:
                k, v = line.split("=", 1)
                pairs[k.strip()] = v.strip()
    return pairs


def load_config() -> Tuple[int, int, int]:
    """Load the user defaults (workers, trials, cache size) from the config file."""
    workers = DEFAULT_WORKERS
    trials = DEFAULT_TRIALS
    cache_size = DEFAULT_CACHE_SIZE

    config_file = constants.CONFIG_FILE
    if config_file.exists():
        try:
            with open(config_file) as f:
                for line in f:
                    line = line.strip()
                    if line.startswith("workers="):
                        value = line.split("=", 1)[1].strip()
                        if value.isdigit() and int(value) >= 1:
                            workers = int(value)
                        else:
                            console.print("[yellow]Warning: Invalid workers, using default.[/yellow]")
                    elif line.startswith("trials="):
                        value = line.split("=", 1)[1].strip()
                        if value.isdigit() and int(value) >= 1:
                            trials = int(value)
                        else:
                            console.print("[yellow]Warning: Invalid trials, using default.[/yellow]")
                    elif line.startswith("cache-size="):
                        value = line.split("=", 1)[1].strip()
                        try:
                            cache_size = int(value)
                        except ValueError:
                            console.print("[yellow]Warning: Invalid cache-size, using default.[/yellow]")
        except OSError:
            console.print("[yellow]Warning: Could not load config file.[/yellow]")

    return workers, trials, cache_size


def get_cache() -> Optional[Cache]:
    """Open the result cache, or delete it and return None when the cache size is 0."""
    _, _, cache_size = load_config()
    if cache_size == 0:
        if CACHE_DIR.exists():
            shutil.rmtree(CACHE_DIR)
            logger.info(f"Removed result cache at {CACHE_DIR}")
        return None
    return Cache(str(CACHE_DIR), size_limit=cache_size)


def set_config(key: str, value: str) -> None:
    """Set a configuration key-value pair."""
    config_file = constants.CONFIG_FILE
    current_config: Dict[str, str] = {}
    if config_file.exists():
        try:
            current_config = _read_pairs(config_file)
        except OSError:
            console.print("[yellow]Warning: Could not load existing config.[/yellow]")

    if key in ("workers", "trials"):
        if not value.isdigit() or int(value) < 1:
            console.print(f"[red]Invalid {key}: must be a positive integer[/red]")
            raise typer.Exit(1)
    elif key == "cache-size":
        try:
            int(value)
        except ValueError:
            console.print("[red]Invalid cache size: must be integer[/red]")
            raise typer.Exit(1) from None

    current_config[key] = value
    console.print(f"[green]Set {key} to: {value}[/green]")
    _write_config(current_config)


def reset_config(key: str) -> None:
    """Remove a key so its built-in default applies again."""
    config_file = constants.CONFIG_FILE
    current_config = _read_pairs(config_file) if config_file.exists() else {}
    current_config.pop(key, None)
    _write_config(current_config)


def _write_config(values: Dict[str, str]) -> None:
    config_file = constants.CONFIG_FILE
    try:
        config_file.parent.mkdir(parents=True, exist_ok=True)
        with open(config_file, "w") as f:
            for k, v in values.items():
                f.write(f"{k}={v}\n")
    except OSError as e:
        console.print(f"[red]Error writing config: {e}[/red]")
        raise typer.Exit(1) from e


def load_experiment_file(path: Path) -> Dict[str, str]:
    """Read an experiment file of key=value lines mirroring the long flags; '#' starts a comment."""
    if not path.exists():
        raise ConfigurationError(f"Experiment file not found: {path}")
    values: Dict[str, str] = {}
    with open(path) as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{number}: expected key=value, got '{line}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in EXPERIMENT_KEYS:
                raise ConfigurationError(f"{path}:{number}: unknown key '{key}'")
            values[key] = value
    logger.debug(f"Loaded {len(values)} keys from {path}")
    return values


# Parsers shared by flags and experiment files


def parse_bits(text: str, name: str = "bits") -> Bits:
    value = text.strip().lower()
    if value == "inf":
        return math.inf
    if not value.isdigit() or int(value) < 1:
        raise ConfigurationError(f"{name} must be a positive integer or 'inf', got '{text}'")
    return int(value)


def parse_int(text: str, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got '{text}'") from None


def parse_bool(text: str, name: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise ConfigurationError(f"{name} must be true or false, got '{text}'")


def parse_snr_grid(text: str) -> Tuple[float, ...]:
    """Parse 'start:stop:step' (stop included when it lands on the grid) or a comma list, in dB."""
    text = text.strip()
    if not text:
        raise ConfigurationError("SNR grid is empty")
    try:
        if ":" not in text:
            return tuple(float(part) for part in text.split(",") if part.strip())
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise ConfigurationError(f"Invalid SNR grid: '{text}'") from None
    if step <= 0:
        raise ConfigurationError(f"SNR step must be positive, got {step}")
    if stop < start:
        raise ConfigurationError(f"SNR grid stop {stop} is below start {start}")
    count = math.floor((stop - start) / step + 1e-9) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


def parse_beta(text: str) -> Tuple[Optional[Tuple[float, ...]], Optional[Tuple[float, float]]]:
    """Return (fixed path losses, uniform range); exactly one of them is set."""
    text = text.strip()
    try:
        if text.startswith("uniform:"):
            lo, hi = (float(part) for part in text[len("uniform:") :].split(","))
            return None, (lo, hi)
        values = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigurationError(f"Invalid path losses: '{text}'") from None
    return values, None


def parse_schemes(text: str) -> Tuple[str, ...]:
    schemes = tuple(s.strip() for s in text.split(",") if s.strip())
    if not schemes or not all(s in VALID_SCHEMES for s in schemes):
        raise ConfigurationError(
            f"Invalid scheme list '{text}'. Must be comma-separated list of: {', '.join(VALID_SCHEMES)}"
        )
    return schemes

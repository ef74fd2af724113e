import logging
import math
from dataclasses import dataclass, replace
from typing import Literal, Optional, Sequence

import numpy as np

from .constants import MAX_USERS
from .errors import ConfigurationError
from .numerics import RngStream

logger = logging.getLogger(__name__)

ChannelModel = Literal["rayleigh", "mmwave"]


def validate_dimensions(m: int, k: int) -> int:
    """Check the sub-connected layout and return the block size N = M/K."""
    if k < 1 or m < k:
        raise ConfigurationError(f"Need M >= K >= 1, got M={m}, K={k}")
    if k > MAX_USERS:
        raise ConfigurationError(f"At most {MAX_USERS} users are supported, got K={k}")
    if m % k != 0:
        raise ConfigurationError(f"M={m} is not divisible by K={k}; every RF chain needs an equal antenna block")
    return m // k


@dataclass(frozen=True)
class MmWaveParams:
    num_paths: int = 10

    def __post_init__(self) -> None:
        if self.num_paths < 1:
            raise ConfigurationError(f"mmWave channel needs at least one path, got {self.num_paths}")


@dataclass(frozen=True)
class ChannelRealization:
    """Downlink channel of one trial; row k of `h` is h_k^H."""

    h: np.ndarray
    beta: np.ndarray
    model: ChannelModel = "rayleigh"

    def __post_init__(self) -> None:
        if self.h.ndim != 2:
            raise ConfigurationError(f"Channel must be a KxM matrix, got shape {self.h.shape}")
        if self.beta.shape != (self.h.shape[0],):
            raise ConfigurationError(f"Need one path loss per user ({self.h.shape[0]}), got {self.beta.shape}")
        if np.any(self.beta <= 0):
            raise ConfigurationError("Path losses must be positive")

    @property
    def num_users(self) -> int:
        return self.h.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.h.shape[1]

    def with_pathloss(self, beta: Sequence[float]) -> "ChannelRealization":
        return replace(self, beta=np.asarray(beta, dtype=float))


def _unit_pathloss(k: int, beta: Optional[Sequence[float]]) -> np.ndarray:
    return np.ones(k) if beta is None else np.asarray(beta, dtype=float)


def sample_rayleigh(
    stream: RngStream, m: int, k: int, beta: Optional[Sequence[float]] = None
) -> ChannelRealization:
    """I.i.d. CN(0, 1) channel entries."""
    validate_dimensions(m, k)
    h = stream.cgauss((k, m))
    return ChannelRealization(h=h, beta=_unit_pathloss(k, beta), model="rayleigh")


def ula_response(m: int, phi: float | np.ndarray) -> np.ndarray:
    """
    Half-wavelength ULA response (1/sqrt(M)) exp(j pi m sin(phi)), m = 0..M-1.

    An array of angles returns one response per angle along a new last axis.
    """
    n = np.arange(m)
    angles = np.asarray(phi, dtype=float)
    return np.exp(1j * np.pi * np.multiply.outer(np.sin(angles), n)) / math.sqrt(m)


def geometric_channel(m: int, gains: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rows sqrt(M/Np) sum_l alpha_l a^H(phi_l) for per-user path gains and angles (K x Np)."""
    gains = np.asarray(gains, dtype=complex)
    angles = np.asarray(angles, dtype=float)
    if gains.shape != angles.shape or gains.ndim != 2:
        raise ConfigurationError(f"Gains {gains.shape} and angles {angles.shape} must both be K x Np")
    num_paths = gains.shape[1]
    steering = ula_response(m, angles)
    return math.sqrt(m / num_paths) * np.einsum("kl,klm->km", gains, steering.conj())


def sample_mmwave(
    stream: RngStream,
    m: int,
    k: int,
    params: MmWaveParams,
    beta: Optional[Sequence[float]] = None,
) -> ChannelRealization:
    """Geometric channel with CN(0, 1) path gains and Uniform[0, 2pi) departure angles."""
    validate_dimensions(m, k)
    gains = stream.cgauss((k, params.num_paths))
    angles = stream.uniform(0.0, 2.0 * math.pi, (k, params.num_paths))
    h = geometric_channel(m, gains, angles)
    return ChannelRealization(h=h, beta=_unit_pathloss(k, beta), model="mmwave")


def sample_pathloss(stream: RngStream, k: int, lo: float, hi: float) -> np.ndarray:
    """Draw K power-domain path losses from Uniform[lo, hi]."""
    if lo <= 0:
        raise ConfigurationError(f"Path loss bounds must be positive, got lo={lo}")
    if hi < lo:
        raise ConfigurationError(f"Path loss upper bound {hi} is below lower bound {lo}")
    if lo == hi:
        return np.full(k, float(lo))
    beta = stream.uniform(lo, hi, k)
    logger.debug(f"Drew path losses {beta.tolist()}")
    return beta

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, Optional, Union

import numpy as np

from .channel import validate_dimensions
from .constants import DIAGONAL_LOADING, MAX_FEEDBACK_BITS
from .errors import ConfigurationError, DegenerateChannelError, ResourceLimitError, SingularMatrixError
from .numerics import Bits, RngStream, hermitian, hermitian_solve, phase_halfwidth, sinc

logger = logging.getLogger(__name__)

Scheme = Literal["mrt", "zf", "identity"]
FeedbackMode = Literal["quantized", "perfect"]

_TIE_TOL = 1e-12


def check_bits(bits: Bits, name: str) -> None:
    if math.isinf(bits):
        if bits < 0:
            raise ConfigurationError(f"{name} cannot be negative infinity")
        return
    if bits != int(bits) or bits < 1:
        raise ConfigurationError(f"{name} must be a positive integer or inf, got {bits}")


def _phase_indices(h: np.ndarray, b1: Bits) -> np.ndarray:
    """Index n maximizing cos(2 pi n / 2^B1 - arg h) elementwise, lowest index on ties."""
    levels = 2 ** int(b1)
    theta = np.angle(h)
    step = 2.0 * math.pi / levels
    lower = np.floor(theta / step).astype(np.int64) % levels
    upper = (lower + 1) % levels
    score_lower = np.cos(step * lower - theta)
    score_upper = np.cos(step * upper - theta)
    tied = np.abs(score_upper - score_lower) <= _TIE_TOL
    pick_upper = np.where(tied, upper < lower, score_upper > score_lower)
    return np.where(pick_upper, upper, lower)


def quantize_phase(h: complex, b1: Bits) -> Union[int, float]:
    """
    Quantize the phase of h to the B1-bit codebook.

    Returns the codebook index, or the exact phase when B1 is inf. A zero h maps to index 0.
    """
    check_bits(b1, "B1")
    if h == 0:
        logger.debug("Phase of a zero channel coefficient is undefined, using index 0")
        return 0
    if math.isinf(b1):
        return float(np.angle(h))
    return int(_phase_indices(np.asarray(h), b1))


@dataclass(frozen=True)
class AnalogPrecoder:
    """Quantized phases of the sub-connected phase shifters, one row of N per RF chain."""

    phases: np.ndarray
    indices: Optional[np.ndarray]
    b1: Bits

    @property
    def num_users(self) -> int:
        return self.phases.shape[0]

    @property
    def block_size(self) -> int:
        return self.phases.shape[1]

    @cached_property
    def a(self) -> np.ndarray:
        """M x K analog precoder with entries e^{j phi}/N on the block of each column."""
        k, n = self.phases.shape
        a = np.zeros((k * n, k), dtype=complex)
        for col in range(k):
            a[col * n : (col + 1) * n, col] = np.exp(1j * self.phases[col]) / n
        return a

    @cached_property
    def f(self) -> np.ndarray:
        """Phase-shifter matrix sqrt(N) A; its columns are unit norm with disjoint support."""
        return math.sqrt(self.block_size) * self.a


def build_analog_precoder(h: np.ndarray, b1: Bits) -> AnalogPrecoder:
    """Co-phase each RF chain with its own user's antenna block."""
    check_bits(b1, "B1")
    k, m = h.shape
    n = validate_dimensions(m, k)
    rows = np.arange(k)
    # h_k^H is stored, so the block coefficients are conjugated back to h_k
    own_blocks = np.conj(h.reshape(k, k, n)[rows, rows])
    zeros = own_blocks == 0
    if np.any(zeros):
        logger.debug(f"{int(zeros.sum())} zero channel coefficient(s), using phase index 0")
    if math.isinf(b1):
        return AnalogPrecoder(phases=np.where(zeros, 0.0, np.angle(own_blocks)), indices=None, b1=b1)
    indices = np.where(zeros, 0, _phase_indices(own_blocks, b1))
    phases = 2.0 * math.pi * indices / 2 ** int(b1)
    return AnalogPrecoder(phases=phases, indices=indices, b1=b1)


@dataclass(frozen=True)
class EffectiveChannel:
    """K x K effective channel; row k is g_k^H = h_k^H A."""

    g: np.ndarray

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.g, axis=1)

    def vector(self, k: int) -> np.ndarray:
        """g_k as a column vector (conjugate of row k)."""
        return np.conj(self.g[k])


def effective_channel(h: np.ndarray, a: np.ndarray) -> EffectiveChannel:
    if h.shape[1] != a.shape[0]:
        raise ConfigurationError(f"Channel {h.shape} and analog precoder {a.shape} are not conformable")
    return EffectiveChannel(g=h @ a)


@dataclass(frozen=True)
class EffectiveCorrelation:
    """Diagonal correlation of user k's effective channel."""

    user: int
    diag: np.ndarray
    delta: float
    w1: float
    w2: float

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)

    @property
    def sqrt_diag(self) -> np.ndarray:
        return np.sqrt(self.diag)

    @property
    def sigma1_sq(self) -> float:
        return float(self.diag[self.user])

    @property
    def sigma2_sq(self) -> float:
        others = np.delete(self.diag, self.user)
        return float(others.max()) if others.size else 0.0


def correlation_matrix(k: int, num_users: int, n: int, b1: Bits) -> EffectiveCorrelation:
    if not 0 <= k < num_users:
        raise ConfigurationError(f"User index {k} outside 0..{num_users - 1}")
    if n < 1:
        raise ConfigurationError(f"Block size must be positive, got N={n}")
    delta = phase_halfwidth(b1)
    s = sinc(delta)
    s2 = s * s
    w1 = (1.0 + s * math.cos(delta)) / 2.0 - math.pi * s2 / 4.0
    w2 = (1.0 - s * math.cos(delta)) / 2.0
    diag = np.full(num_users, 1.0 / n)
    diag[k] = math.pi * s2 / 4.0 + 1.0 / n - math.pi * s2 / (4.0 * n)
    return EffectiveCorrelation(user=k, diag=diag, delta=delta, w1=w1, w2=w2)


@dataclass(frozen=True)
class FeedbackCodebook:
    codewords: np.ndarray
    bits: int

    @property
    def size(self) -> int:
        return self.codewords.shape[0]


def check_feedback_bits(b2: Bits) -> None:
    check_bits(b2, "B2")
    if not math.isinf(b2) and b2 > MAX_FEEDBACK_BITS:
        raise ResourceLimitError(f"B2={int(b2)} exceeds the codebook limit of B2={MAX_FEEDBACK_BITS}")


def generate_codebook(
    stream: RngStream, num_users: int, b2: Bits, corr: EffectiveCorrelation
) -> Optional[FeedbackCodebook]:
    """
    Statistics-based RVQ codebook R^{1/2} v / ||R^{1/2} v|| with 2^B2 entries.

    Returns None for B2 = inf, meaning the effective channel direction is fed back exactly.
    """
    check_feedback_bits(b2)
    if math.isinf(b2):
        return None
    if corr.diag.shape != (num_users,):
        raise ConfigurationError(f"Correlation has {corr.diag.shape[0]} entries, expected {num_users}")
    v = stream.cgauss((2 ** int(b2), num_users))
    colored = v * corr.sqrt_diag
    codewords = colored / np.linalg.norm(colored, axis=1, keepdims=True)
    return FeedbackCodebook(codewords=codewords, bits=int(b2))


def quantize_effective_channel(g_k: np.ndarray, codebook: Optional[FeedbackCodebook]) -> np.ndarray:
    """Codeword maximizing |g_k^H c|, or g_k/||g_k|| when the codebook is None (perfect feedback)."""
    norm = float(np.linalg.norm(g_k))
    if norm == 0.0:
        raise DegenerateChannelError("Effective channel is zero and has no direction to quantize")
    if codebook is None:
        return g_k / norm
    if codebook.size == 0:
        raise ConfigurationError("Codebook is empty")
    scores = np.abs(codebook.codewords @ np.conj(g_k))
    return codebook.codewords[int(np.argmax(scores))].copy()


@dataclass(frozen=True)
class DigitalPrecoder:
    w: np.ndarray
    scheme: Scheme
    mode: FeedbackMode = "quantized"
    degenerate: bool = False


def mrt_precoder(g_hat: np.ndarray, mode: FeedbackMode = "quantized") -> DigitalPrecoder:
    """W = G_hat; the columns are already unit norm."""
    return DigitalPrecoder(w=np.array(g_hat, dtype=complex), scheme="mrt", mode=mode)


def zf_precoder(g_hat: np.ndarray, f: Optional[np.ndarray] = None, mode: FeedbackMode = "quantized") -> DigitalPrecoder:
    """
    W = G_hat (G_hat^H G_hat)^{-1} with columns scaled to ||F w_k|| = 1.

    A singular Gram matrix is retried once with diagonal loading and flagged as degenerate.
    """
    k = g_hat.shape[1]
    gram = hermitian(g_hat) @ g_hat
    identity = np.eye(k, dtype=complex)
    degenerate = False
    try:
        inverse = hermitian_solve(gram, identity)
    except SingularMatrixError as e:
        loading = DIAGONAL_LOADING * float(np.trace(gram).real) / k
        logger.warning(f"Singular ZF Gram matrix ({e}), retrying with diagonal loading {loading:.3e}")
        inverse = hermitian_solve(gram + loading * identity, identity)
        degenerate = True
    w = g_hat @ inverse
    scaled = w if f is None else f @ w
    w = w / np.linalg.norm(scaled, axis=0)
    return DigitalPrecoder(w=w, scheme="zf", mode=mode, degenerate=degenerate)


def identity_precoder(k: int) -> DigitalPrecoder:
    return DigitalPrecoder(w=np.eye(k, dtype=complex), scheme="identity", mode="perfect")

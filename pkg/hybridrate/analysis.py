import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Literal, Optional, Sequence

from .channel import validate_dimensions
from .constants import BOUNDARY_RTOL
from .errors import BoundaryCaseError, ConfigurationError, UndefinedThresholdError
from .numerics import Bits, phase_halfwidth, sinc

logger = logging.getLogger(__name__)

Comparison = Literal["mrt-vs-analog", "zf-vs-analog"]


def feedback_term(b2: Bits, k: int) -> float:
    """2^{-B2/(K-1)}; zero for unquantized feedback or a single user."""
    if math.isinf(b2) or k < 2:
        return 0.0
    return 2.0 ** (-b2 / (k - 1))


def sinc_sq(b1: Bits) -> float:
    return sinc(phase_halfwidth(b1)) ** 2


@dataclass(frozen=True)
class SystemParams:
    """Parameters of one user's closed-form rate; gamma is linear P/sigma^2."""

    m: int
    k: int
    b1: Bits
    b2: Bits
    gamma: float
    beta_k: float = 1.0
    beta_bar: float = 0.0

    def __post_init__(self) -> None:
        validate_dimensions(self.m, self.k)
        if not self.gamma > 0:
            raise ConfigurationError(f"SNR must be positive, got gamma={self.gamma}")
        if not self.beta_k > 0:
            raise ConfigurationError(f"Path loss must be positive, got beta_k={self.beta_k}")
        if self.beta_bar < 0:
            raise ConfigurationError(f"Interfering path loss sum must be non-negative, got {self.beta_bar}")

    @classmethod
    def for_user(
        cls, m: int, k: int, b1: Bits, b2: Bits, gamma: float, beta: Sequence[float], user: int
    ) -> "SystemParams":
        if len(beta) != k:
            raise ConfigurationError(f"Need {k} path losses, got {len(beta)}")
        beta_bar = math.fsum(b for j, b in enumerate(beta) if j != user)
        return cls(m=m, k=k, b1=b1, b2=b2, gamma=gamma, beta_k=float(beta[user]), beta_bar=beta_bar)

    @property
    def n(self) -> int:
        return self.m // self.k

    @property
    def delta(self) -> float:
        return phase_halfwidth(self.b1)

    @property
    def s2(self) -> float:
        return sinc_sq(self.b1)

    @property
    def q(self) -> float:
        return feedback_term(self.b2, self.k)


# Closed-form rates, bps/Hz


def rate_mrt_hybrid(p: SystemParams) -> float:
    """MRT hybrid precoding with B1-bit phases and B2-bit feedback."""
    k, n, s2, q, g = p.k, p.n, p.s2, p.q, p.gamma
    numerator = (g * p.beta_k / k) * (math.pi * s2 / 4 + k / n - q / n) * (math.pi * n * s2 / 4 + k)
    denominator = math.pi * n * s2 / 4 + k + (g / k) * p.beta_bar * (k / n + math.pi * s2 / 2)
    return math.log2(1 + numerator / denominator)


def rate_mrt_hybrid_perfect(p: SystemParams) -> float:
    """MRT hybrid precoding with unquantized phases and perfect feedback."""
    k, n, g = p.k, p.n, p.gamma
    numerator = (g * p.beta_k * n / k) * (math.pi / 4 + k / n) ** 2
    denominator = math.pi * n / 4 + k + (g * p.beta_bar / k) * (math.pi / 2 + k / n)
    return math.log2(1 + numerator / denominator)


def rate_zf_hybrid_lb(p: SystemParams) -> float:
    """
    ZF hybrid rate built on the large-N leakage bound; may be negative at tiny B2 and large gamma.

    At desk-scale N the simulated rate can fall below it at high SNR, so it is not a strict bound there.
    """
    k, n, g = p.k, p.n, p.gamma
    numerator = 4 * k * n + math.pi * n * g * p.beta_k * p.s2
    denominator = 4 * k * n + 4 * g * p.beta_bar * p.q
    return math.log2(numerator / denominator)


def rate_zf_perfect_asymptote(p: SystemParams) -> float:
    """Large-N ZF rate with perfect feedback."""
    return math.log2(1 + p.gamma * p.beta_k * math.pi * p.s2 / (4 * p.k))


def zf_rate_loss_bound(p: SystemParams) -> float:
    """Upper bound on the ZF rate lost to B2-bit feedback."""
    return math.log2(1 + p.gamma * p.beta_bar * p.q / (p.k * p.n))


def rate_analog(p: SystemParams) -> float:
    """Pure analog precoding (W = I); independent of B2."""
    k, n, g = p.k, p.n, p.gamma
    return math.log2(1 + g * p.beta_k * (math.pi * n * p.s2 / 4 + 1) / (k * n + g * p.beta_bar))


def rate_analog_perfect(p: SystemParams) -> float:
    k, n, g = p.k, p.n, p.gamma
    return math.log2(1 + (math.pi * n * g * p.beta_k / 4) / (k * n + g * p.beta_bar))


FORMULAS: Dict[str, Callable[[SystemParams], float]] = {
    "analog": rate_analog,
    "analog-perfect": rate_analog_perfect,
    "mrt-approx": rate_mrt_hybrid,
    "mrt-perfect": rate_mrt_hybrid_perfect,
    "zf-lb": rate_zf_hybrid_lb,
    "zf-perfect": rate_zf_perfect_asymptote,
    "zf-loss": zf_rate_loss_bound,
}

# Closed form used next to each Monte Carlo scheme
SCHEME_FORMULAS: Dict[str, Callable[[SystemParams], float]] = {
    "analog": rate_analog,
    "mrt-hybrid": rate_mrt_hybrid,
    "zf-hybrid": rate_zf_hybrid_lb,
}


# Regime thresholds


def b1_threshold(n: int, k: int, b2: Bits) -> float:
    """Largest B1 for which MRT hybrid beats analog at every SNR; inf when unbounded."""
    q = feedback_term(b2, k)
    denominator = 3 * math.pi * n - 12 * (k - 2 - q)
    if denominator <= 0:
        logger.debug(f"B1 threshold unbounded for N={n}, K={k}, B2={b2}")
        return math.inf
    return 0.5 * math.log2(math.pi**3 * n / denominator)


def k_threshold(n: int, b1: Bits, b2: Bits, k: int) -> float:
    """Right-hand side of the user-count condition for MRT hybrid to always win."""
    if k < 2:
        raise ConfigurationError(f"The user-count condition needs K >= 2, got K={k}")
    return math.pi * n * sinc_sq(b1) / 4 + feedback_term(b2, k) + 2


def gamma0(p: SystemParams) -> float:
    """SNR below which MRT hybrid beats analog, meaningful only when B1 exceeds its threshold."""
    if p.k < 2:
        raise ConfigurationError("Crossover SNR needs at least two users")
    q, n = p.q, p.n
    tail = math.pi * n * p.s2 / 4
    denominator = p.beta_bar * (p.k - 2 - q - tail)
    if abs(denominator) <= BOUNDARY_RTOL * p.beta_bar * (p.k + tail):
        raise BoundaryCaseError(f"gamma0 denominator vanishes at K={p.k}, N={n}, B1={p.b1}, B2={p.b2}")
    return p.m * (q - p.k + 1) / denominator


def b2_threshold(p: SystemParams) -> float:
    """Feedback bits at or below which analog beats ZF hybrid at every SNR."""
    if p.k < 2:
        return 0.0
    return (p.k - 1) * math.log2(1 + 4 * (p.beta_k + p.beta_bar) / (math.pi * p.n * p.beta_k * p.s2))


def gamma1(p: SystemParams) -> float:
    """SNR above which ZF hybrid beats analog; raises when B2 does not exceed its threshold."""
    if p.k < 2:
        raise ConfigurationError("Crossover SNR needs at least two users")
    q, n, b, bb = p.q, p.n, p.beta_k, p.beta_bar
    lead = math.pi * n * b * p.s2
    denominator = bb * (lead * (1 - q) - 4 * (b + bb) * q)
    if denominator <= BOUNDARY_RTOL * bb * lead:
        raise UndefinedThresholdError(f"gamma1 undefined: B2={p.b2} does not exceed its threshold")
    return 4 * p.m * (bb * q + b) / denominator


@dataclass(frozen=True)
class RegimeVerdict:
    comparison: Comparison
    regime: str
    winner: str
    threshold: float
    crossover_gamma: Optional[float] = None

    @property
    def crossover_db(self) -> Optional[float]:
        if self.crossover_gamma is None:
            return None
        return 10 * math.log10(self.crossover_gamma)


def predict_winner(p: SystemParams, comparison: Comparison) -> RegimeVerdict:
    if p.k < 2:
        raise ConfigurationError("Regime comparison needs at least two users")
    if comparison == "mrt-vs-analog":
        threshold = b1_threshold(p.n, p.k, p.b2)
        if p.b1 <= threshold:
            return RegimeVerdict(comparison, "hybrid-always", "mrt-hybrid", threshold)
        try:
            crossover = gamma0(p)
        except BoundaryCaseError:
            logger.info("gamma0 on its boundary, user-count condition holds with equality")
            return RegimeVerdict(comparison, "hybrid-always", "mrt-hybrid", threshold)
        if not crossover > 0 or math.isinf(crossover):
            return RegimeVerdict(comparison, "hybrid-always", "mrt-hybrid", threshold)
        winner = "mrt-hybrid" if p.gamma < crossover else "analog"
        return RegimeVerdict(comparison, "crossover", winner, threshold, crossover)
    if comparison == "zf-vs-analog":
        threshold = b2_threshold(p)
        if p.b2 <= threshold:
            return RegimeVerdict(comparison, "analog-always", "analog", threshold)
        try:
            crossover = gamma1(p)
        except UndefinedThresholdError:
            return RegimeVerdict(comparison, "analog-always", "analog", threshold)
        winner = "zf-hybrid" if p.gamma > crossover else "analog"
        return RegimeVerdict(comparison, "crossover", winner, threshold, crossover)
    raise ConfigurationError(f"Unknown comparison: {comparison}")


def delta_rate(p: SystemParams, scheme: str) -> float:
    """Closed-form hybrid rate minus closed-form analog rate."""
    if scheme in ("mrt", "mrt-hybrid"):
        return rate_mrt_hybrid(p) - rate_analog(p)
    if scheme in ("zf", "zf-hybrid"):
        return rate_zf_hybrid_lb(p) - rate_analog(p)
    raise ConfigurationError(f"Unknown hybrid scheme: {scheme}")


# Moments of the effective channel


def expected_re_lambda(b1: Bits) -> float:
    """Mean of Re(|h| e^{j eps}) for Rayleigh |h| and uniform phase error."""
    return math.sqrt(math.pi) * sinc(phase_halfwidth(b1)) / 2


def var_re_lambda(b1: Bits) -> float:
    delta = phase_halfwidth(b1)
    s = sinc(delta)
    return (1 + s * math.cos(delta)) / 2 - math.pi * s * s / 4


def expected_gkk_power(n: int, b1: Bits) -> float:
    delta = phase_halfwidth(b1)
    s = sinc(delta)
    w_sum = 1 - math.pi * s * s / 4
    return math.pi * s * s / 4 + w_sum / n


def expected_gki_power(n: int) -> float:
    return 1.0 / n


def expected_gain_norm(n: int, k: int, b1: Bits) -> float:
    """E||g_k||^2."""
    s2 = sinc_sq(b1)
    return math.pi * s2 / 4 + k / n - math.pi * s2 / (4 * n)


def quantization_loss(n: int, k: int, b1: Bits, b2: Bits) -> float:
    """(sigma_2^2 / sigma_1^2) 2^{-B2/(K-1)} of the statistics-based codebook."""
    s2 = sinc_sq(b1)
    r_kk = math.pi * s2 / 4 + 1 / n - math.pi * s2 / (4 * n)
    return (1 / n) / r_kk * feedback_term(b2, k)


def quantization_correlation(n: int, k: int, b1: Bits, b2: Bits) -> float:
    return 1 - quantization_loss(n, k, b1, b2)


def mrt_signal_power(n: int, k: int, b1: Bits, b2: Bits) -> float:
    s2 = sinc_sq(b1)
    return math.pi * s2 / 4 + k / n - feedback_term(b2, k) / n


def mrt_interference_power(n: int, k: int, b1: Bits) -> float:
    s2 = sinc_sq(b1)
    return (math.pi * s2 / 2 + k / n) / (math.pi * n * s2 / 4 + k)


def zf_leakage_bound(n: int, k: int, b2: Bits) -> float:
    return feedback_term(b2, k) / n

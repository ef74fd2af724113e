import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache, partial
from multiprocessing import Pool
from typing import Callable, Dict, Iterator, List, Optional, Tuple, TypeVar

import numpy as np

from .analysis import SCHEME_FORMULAS, SystemParams
from .channel import (
    ChannelModel,
    ChannelRealization,
    MmWaveParams,
    sample_mmwave,
    sample_pathloss,
    sample_rayleigh,
    validate_dimensions,
)
from .constants import CODEBOOK_STREAM, MIN_RATE_TRIALS, PATHLOSS_STREAM, VALID_CHANNELS, VALID_SCHEMES
from .errors import ConfigurationError
from .numerics import Bits, MeanCI, RngStream, db_to_linear, mean_ci
from .precoding import (
    EffectiveChannel,
    FeedbackCodebook,
    build_analog_precoder,
    check_bits,
    check_feedback_bits,
    correlation_matrix,
    effective_channel,
    generate_codebook,
    identity_precoder,
    mrt_precoder,
    quantize_effective_channel,
    zf_precoder,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_GRID: Tuple[float, ...] = tuple(float(x) for x in range(-10, 31, 5))


@dataclass(frozen=True)
class ScenarioConfig:
    """All parameters of one Monte Carlo experiment."""

    m: int = 120
    k: int = 6
    b1: Bits = 2
    b2: Bits = 10
    channel: ChannelModel = "rayleigh"
    num_paths: int = 10
    schemes: Tuple[str, ...] = ("analog", "mrt-hybrid", "zf-hybrid")
    snr_db: Tuple[float, ...] = DEFAULT_GRID
    beta: Optional[Tuple[float, ...]] = None
    beta_range: Optional[Tuple[float, float]] = None
    per_trial_beta: bool = False
    freeze_codebook: bool = False
    trials: int = 2000
    seed: int = 0

    @property
    def n(self) -> int:
        return self.m // self.k

    @property
    def gammas(self) -> np.ndarray:
        return np.array([db_to_linear(x) for x in self.snr_db])

    @property
    def mmwave(self) -> MmWaveParams:
        return MmWaveParams(num_paths=self.num_paths)

    def validate(self, min_trials: int = MIN_RATE_TRIALS) -> None:
        """Raise before any trial runs if the configuration cannot produce a result."""
        validate_dimensions(self.m, self.k)
        check_bits(self.b1, "B1")
        check_feedback_bits(self.b2)
        if self.channel not in VALID_CHANNELS:
            raise ConfigurationError(f"Unknown channel model: {self.channel}")
        MmWaveParams(num_paths=self.num_paths)
        if not self.schemes:
            raise ConfigurationError("At least one scheme is required")
        unknown = [s for s in self.schemes if s not in VALID_SCHEMES]
        if unknown:
            raise ConfigurationError(f"Unknown scheme(s): {', '.join(unknown)}")
        if not self.snr_db:
            raise ConfigurationError("SNR grid is empty")
        if self.trials < min_trials:
            raise ConfigurationError(f"Need at least {min_trials} trials, got {self.trials}")
        if self.beta is not None and self.beta_range is not None:
            raise ConfigurationError("Give either fixed path losses or a uniform range, not both")
        if self.beta is not None:
            if len(self.beta) not in (1, self.k):
                raise ConfigurationError(f"Need 1 or {self.k} path losses, got {len(self.beta)}")
            if any(b <= 0 for b in self.beta):
                raise ConfigurationError("Path losses must be positive")
        if self.beta_range is not None:
            lo, hi = self.beta_range
            if lo <= 0 or hi < lo:
                raise ConfigurationError(f"Invalid path loss range [{lo}, {hi}]")
        if self.per_trial_beta and self.beta_range is None:
            raise ConfigurationError("Per-trial path loss redraw needs a uniform range")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")

    def digest(self) -> str:
        """Stable identifier of the configuration, used as the result cache key."""
        payload = {key: (str(v) if isinstance(v, float) and math.isinf(v) else v) for key, v in asdict(self).items()}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def experiment_beta(self) -> np.ndarray:
        """Path losses held fixed for the experiment; a single value applies to every user."""
        if self.beta is not None:
            return np.broadcast_to(np.asarray(self.beta, dtype=float), (self.k,)).copy()
        if self.beta_range is not None:
            lo, hi = self.beta_range
            return sample_pathloss(RngStream(self.seed, PATHLOSS_STREAM), self.k, lo, hi)
        return np.ones(self.k)


@dataclass
class TrialSamples:
    """Rate samples of one trial, scheme -> (len(snr_db), K)."""

    rates: Dict[str, np.ndarray]
    beta: np.ndarray
    degenerate: int = 0


@dataclass
class RateResult:
    """Monte Carlo rates; `beta` is the experiment path loss, or the mean draw when redrawn per trial."""

    config: ScenarioConfig
    beta: np.ndarray
    users: Dict[str, List[List[MeanCI]]]
    sums: Dict[str, List[MeanCI]]
    degenerate: int = 0

    def rate(self, scheme: str, snr_index: int, user: int) -> MeanCI:
        return self.users[scheme][snr_index][user]

    def means(self, scheme: str) -> np.ndarray:
        """Per-user means, shape (len(snr_db), K)."""
        return np.array([[cell.mean for cell in row] for row in self.users[scheme]])


def instantaneous_rates(
    g: np.ndarray, w: np.ndarray, beta: np.ndarray, gamma: float | np.ndarray, k: Optional[int] = None
) -> np.ndarray:
    """
    Per-user log2(1 + SINR) for one channel draw.

    A scalar gamma returns K rates; an array of gammas returns one row of K rates per gamma.
    """
    k = g.shape[0] if k is None else k
    if g.shape != (k, w.shape[0]) or np.shape(beta) != (k,):
        raise ConfigurationError(f"Shapes G {g.shape}, W {w.shape}, beta {np.shape(beta)} do not match K={k}")
    power = np.abs(g @ w) ** 2
    signal = np.diag(power) * beta
    cross = power * beta[np.newaxis, :]
    np.fill_diagonal(cross, 0.0)
    interference = cross.sum(axis=1)
    gam = np.asarray(gamma, dtype=float)
    sinr = (np.multiply.outer(gam, signal) / k) / (1.0 + np.multiply.outer(gam, interference) / k)
    return np.log2(1.0 + sinr)


def draw_channel(cfg: ScenarioConfig, stream: RngStream) -> ChannelRealization:
    if cfg.channel == "mmwave":
        return sample_mmwave(stream, cfg.m, cfg.k, cfg.mmwave)
    return sample_rayleigh(stream, cfg.m, cfg.k)


@lru_cache(maxsize=8)
def frozen_codebooks(cfg: ScenarioConfig) -> Tuple[Optional[FeedbackCodebook], ...]:
    """One codebook per user for the whole experiment, from the reserved codebook stream."""
    stream = RngStream(cfg.seed, CODEBOOK_STREAM)
    return tuple(
        generate_codebook(stream, cfg.k, cfg.b2, correlation_matrix(user, cfg.k, cfg.n, cfg.b1))
        for user in range(cfg.k)
    )


def feedback_directions(cfg: ScenarioConfig, stream: RngStream, eff: EffectiveChannel) -> np.ndarray:
    """Columns are the fed-back directions g_hat_k, drawn user by user from the trial stream."""
    g_hat = np.empty((cfg.k, cfg.k), dtype=complex)
    frozen = frozen_codebooks(cfg) if cfg.freeze_codebook else None
    for user in range(cfg.k):
        if frozen is not None:
            codebook = frozen[user]
        else:
            corr = correlation_matrix(user, cfg.k, cfg.n, cfg.b1)
            codebook = generate_codebook(stream, cfg.k, cfg.b2, corr)
        g_hat[:, user] = quantize_effective_channel(eff.vector(user), codebook)
    return g_hat


def run_trial(cfg: ScenarioConfig, trial_index: int) -> TrialSamples:
    """
    One channel draw pushed through every scheme on the whole SNR grid.

    Draw order within the trial stream: channel, path losses (per-trial mode only), codebooks.
    """
    stream = RngStream(cfg.seed, trial_index)
    channel = draw_channel(cfg, stream)
    if cfg.per_trial_beta:
        lo, hi = cfg.beta_range  # type: ignore[misc]
        beta = sample_pathloss(stream, cfg.k, lo, hi)
    else:
        beta = fixed_beta(cfg)
    analog = build_analog_precoder(channel.h, cfg.b1)
    eff = effective_channel(channel.h, analog.a)
    gammas = cfg.gammas

    rates: Dict[str, np.ndarray] = {}
    degenerate = 0
    if "analog" in cfg.schemes:
        rates["analog"] = instantaneous_rates(eff.g, identity_precoder(cfg.k).w, beta, gammas, cfg.k)
    if "mrt-hybrid" in cfg.schemes or "zf-hybrid" in cfg.schemes:
        mode = "perfect" if math.isinf(cfg.b2) else "quantized"
        g_hat = feedback_directions(cfg, stream, eff)
        if "mrt-hybrid" in cfg.schemes:
            rates["mrt-hybrid"] = instantaneous_rates(eff.g, mrt_precoder(g_hat, mode).w, beta, gammas, cfg.k)
        if "zf-hybrid" in cfg.schemes:
            zf = zf_precoder(g_hat, analog.f, mode)
            degenerate += int(zf.degenerate)
            rates["zf-hybrid"] = instantaneous_rates(eff.g, zf.w, beta, gammas, cfg.k)
    return TrialSamples(rates=rates, beta=beta, degenerate=degenerate)


@lru_cache(maxsize=8)
def _fixed_beta_cached(cfg: ScenarioConfig) -> Tuple[float, ...]:
    return tuple(cfg.experiment_beta().tolist())


def fixed_beta(cfg: ScenarioConfig) -> np.ndarray:
    """Experiment path losses, drawn once per process."""
    return np.asarray(_fixed_beta_cached(cfg))


def map_trials(func: Callable[[int], T], trials: int, workers: int = 1) -> Iterator[T]:
    """Yield func(t) for t = 0..trials-1 in trial order, using a process pool when workers > 1."""
    if workers < 1:
        raise ConfigurationError(f"Worker count must be at least 1, got {workers}")
    if workers == 1:
        for t in range(trials):
            yield func(t)
        return
    chunksize = max(1, trials // (workers * 16))
    with Pool(processes=workers) as pool:
        yield from pool.imap(func, range(trials), chunksize=chunksize)


def run_experiment(cfg: ScenarioConfig, workers: int = 1) -> RateResult:
    """Average run_trial over trials 0..T-1; the result does not depend on `workers`."""
    cfg.validate()
    beta = cfg.experiment_beta()
    drawn = f"per trial in {cfg.beta_range}" if cfg.per_trial_beta else str(beta.tolist())
    logger.info(f"Running {cfg.trials} trials, M={cfg.m}, K={cfg.k}, B1={cfg.b1}, B2={cfg.b2}, beta={drawn}")

    stacks: Dict[str, List[np.ndarray]] = {scheme: [] for scheme in cfg.schemes}
    degenerate = 0
    beta_total = np.zeros(cfg.k)
    for samples in map_trials(partial(run_trial, cfg), cfg.trials, workers):
        degenerate += samples.degenerate
        beta_total += samples.beta
        for scheme in cfg.schemes:
            stacks[scheme].append(samples.rates[scheme])
    if degenerate:
        logger.warning(f"ZF diagonal loading fired in {degenerate} of {cfg.trials} trials")
    if cfg.per_trial_beta:
        # closed forms are then evaluated at the average draw
        beta = beta_total / cfg.trials

    users: Dict[str, List[List[MeanCI]]] = {}
    sums: Dict[str, List[MeanCI]] = {}
    for scheme in cfg.schemes:
        stack = np.stack(stacks[scheme])
        users[scheme] = [[mean_ci(stack[:, s, u]) for u in range(cfg.k)] for s in range(len(cfg.snr_db))]
        sums[scheme] = []
        for s, row in enumerate(users[scheme]):
            spread = mean_ci(stack[:, s, :].sum(axis=1))
            sums[scheme].append(MeanCI(math.fsum(cell.mean for cell in row), spread.half_width, spread.count))
    return RateResult(config=cfg, beta=beta, users=users, sums=sums, degenerate=degenerate)


def closed_form_rates(cfg: ScenarioConfig, beta: np.ndarray) -> Dict[str, np.ndarray]:
    """Closed-form rate next to every simulated scheme, shape (len(snr_db), K)."""
    out: Dict[str, np.ndarray] = {}
    values = beta.tolist()
    for scheme in cfg.schemes:
        formula = SCHEME_FORMULAS[scheme]
        out[scheme] = np.array(
            [
                [formula(SystemParams.for_user(cfg.m, cfg.k, cfg.b1, cfg.b2, gamma, values, u)) for u in range(cfg.k)]
                for gamma in cfg.gammas
            ]
        )
    return out


def cached_experiment(cfg: ScenarioConfig, workers: int = 1, use_cache: bool = True) -> RateResult:
    """run_experiment behind the on-disk result cache."""
    from .config import get_cache

    cache = get_cache() if use_cache else None
    if cache is None:
        return run_experiment(cfg, workers)
    key = f"rates:{cfg.digest()}"
    with cache:
        hit = cache.get(key)
        if hit is not None:
            logger.info(f"Using cached result for {key[:18]}")
            return hit
        result = run_experiment(cfg, workers)
        cache.set(key, result)
    return result


def crossover_db(result: RateResult, scheme_a: str, scheme_b: str) -> Optional[float]:
    """First SNR (dB) where the Monte Carlo sum rates of two schemes swap order, by linear interpolation."""
    grid = result.config.snr_db
    diff = [a.mean - b.mean for a, b in zip(result.sums[scheme_a], result.sums[scheme_b])]
    for i in range(len(diff) - 1):
        lo, hi = diff[i], diff[i + 1]
        if lo == 0.0:
            return float(grid[i])
        if lo * hi < 0:
            return float(grid[i] + (grid[i + 1] - grid[i]) * lo / (lo - hi))
    return None

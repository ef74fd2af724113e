import logging
import math
from dataclasses import dataclass, replace
from functools import partial
from typing import Dict, List

import numpy as np

from .analysis import (
    SystemParams,
    expected_gain_norm,
    expected_gki_power,
    expected_gkk_power,
    expected_re_lambda,
    mrt_interference_power,
    mrt_signal_power,
    quantization_correlation,
    quantization_loss,
    var_re_lambda,
    zf_leakage_bound,
    zf_rate_loss_bound,
)
from .channel import sample_rayleigh
from .constants import CI_Z, DEFAULT_APPROX_TOL, DEFAULT_LOSS_SNR_DB, MIN_MOMENT_TRIALS, MOMENT_SE_MULTIPLIER
from .errors import ConfigurationError
from .numerics import RngStream, db_to_linear
from .precoding import build_analog_precoder, effective_channel, mrt_precoder, zf_precoder
from .simulator import ScenarioConfig, feedback_directions, fixed_beta, instantaneous_rates, map_trials
from .types import MomentRow

logger = logging.getLogger(__name__)

# Absolute slack for bound rows whose closed form is zero (unquantized feedback)
_BOUND_FLOOR = 1e-12

SAMPLE_KEYS = (
    "re_lambda",
    "gkk",
    "gki",
    "gain_norm",
    "correlation",
    "mrt_signal",
    "mrt_interference",
    "zf_leakage",
    "zf_leakage_excess",
    "feedback_error",
    "zf_rate_perfect",
    "zf_rate_quantized",
)


def _power_sums(x: np.ndarray) -> np.ndarray:
    """[count, sum x, sum x^2, sum x^3, sum x^4]."""
    x = np.asarray(x, dtype=float).ravel()
    return np.array([x.size, x.sum(), (x**2).sum(), (x**3).sum(), (x**4).sum()])


@dataclass(frozen=True)
class SampleStats:
    count: int
    mean: float
    variance: float
    fourth_central: float

    @classmethod
    def from_sums(cls, sums: np.ndarray) -> "SampleStats":
        n, s1, s2, s3, s4 = (float(v) for v in sums)
        mean = s1 / n
        m2 = s2 / n - mean**2
        m4 = s4 / n - 4 * mean * s3 / n + 6 * mean**2 * s2 / n - 3 * mean**4
        variance = max(m2, 0.0) * n / (n - 1)
        return cls(count=int(n), mean=mean, variance=variance, fourth_central=max(m4, 0.0))

    @property
    def std_error(self) -> float:
        return math.sqrt(self.variance / self.count)

    @property
    def variance_std_error(self) -> float:
        """Standard error of the sample variance."""
        return math.sqrt(max(self.fourth_central - self.variance**2, 0.0) / self.count)


def moment_trial(cfg: ScenarioConfig, loss_gamma: float, trial_index: int) -> Dict[str, np.ndarray]:
    """Power sums of every moment sample drawn in one trial."""
    stream = RngStream(cfg.seed, trial_index)
    h = sample_rayleigh(stream, cfg.m, cfg.k).h
    beta = fixed_beta(cfg)
    analog = build_analog_precoder(h, cfg.b1)
    eff = effective_channel(h, analog.a)
    k, n = cfg.k, cfg.n
    off = ~np.eye(k, dtype=bool)

    users = np.arange(k)
    own_blocks = np.conj(h.reshape(k, k, n)[users, users])
    re_lambda = np.real(own_blocks * np.exp(-1j * analog.phases))

    g_power = np.abs(eff.g) ** 2
    gain_norm = g_power.sum(axis=1)

    g_hat = feedback_directions(cfg, stream, eff)
    g_perfect = np.conj(eff.g).T / np.sqrt(gain_norm)
    aligned = np.abs(np.einsum("kj,jk->k", eff.g, g_hat)) ** 2
    correlation = aligned / gain_norm

    mrt = np.abs(eff.g @ mrt_precoder(g_hat).w) ** 2
    zf = zf_precoder(g_hat, analog.f)
    leakage = (np.abs(eff.g @ zf.w) ** 2)[off]
    feedback_error = np.repeat(gain_norm * (1 - correlation), k - 1)

    zf_perfect = zf_precoder(g_perfect, analog.f, mode="perfect")
    rate_perfect = instantaneous_rates(eff.g, zf_perfect.w, beta, loss_gamma, k)
    rate_quantized = instantaneous_rates(eff.g, zf.w, beta, loss_gamma, k)

    samples = {
        "re_lambda": re_lambda,
        "gkk": np.diag(g_power),
        "gki": g_power[off],
        "gain_norm": gain_norm,
        "correlation": correlation,
        "mrt_signal": np.diag(mrt),
        "mrt_interference": mrt[off],
        "zf_leakage": leakage,
        "zf_leakage_excess": leakage - feedback_error,
        "feedback_error": feedback_error,
        "zf_rate_perfect": rate_perfect,
        "zf_rate_quantized": rate_quantized,
    }
    return {key: _power_sums(value) for key, value in samples.items()}


@dataclass
class MomentReport:
    rows: List[MomentRow]
    trials: int

    @property
    def passed(self) -> bool:
        return all(row["passed"] for row in self.rows)


def _row(name: str, kind: str, empirical: float, closed: float, se: float, passed: bool, note: str = "") -> MomentRow:
    return {
        "name": name,
        "kind": kind,
        "empirical": empirical,
        "closed_form": closed,
        "std_error": se,
        "passed": bool(passed),
        "note": note,
    }


def bound_excess_note(empirical: float, bound: float) -> str:
    """'exceeds bound by X%' when a bound row passes only through its slack, else empty."""
    if bound <= 0 or empirical <= bound:
        return ""
    return f"exceeds bound by {100.0 * (empirical - bound) / bound:.0f}%"


def _exact(name: str, stats: SampleStats, closed: float) -> MomentRow:
    se = stats.std_error
    return _row(name, "exact", stats.mean, closed, se, abs(stats.mean - closed) <= MOMENT_SE_MULTIPLIER * se)


def _approx(name: str, stats: SampleStats, closed: float, tol: float, note: str = "") -> MomentRow:
    se = stats.std_error
    slack = max(MOMENT_SE_MULTIPLIER * se, tol * abs(closed))
    return _row(name, "approx", stats.mean, closed, se, abs(stats.mean - closed) <= slack, note)


def validate_moments(
    cfg: ScenarioConfig,
    workers: int = 1,
    approx_tol: float = DEFAULT_APPROX_TOL,
    loss_snr_db: float = DEFAULT_LOSS_SNR_DB,
) -> MomentReport:
    """
    Compare Monte Carlo moments of the effective channel and precoders with their closed forms.

    Exact identities pass within 4 standard errors. Large-N approximations pass within the relative
    tolerance `approx_tol`, and bounds pass when not exceeded beyond the same slack.
    """
    if cfg.channel != "rayleigh":
        raise ConfigurationError("Moment identities hold for the Rayleigh channel only")
    if approx_tol < 0:
        raise ConfigurationError(f"Relative tolerance must be non-negative, got {approx_tol}")
    cfg = replace(cfg, schemes=("mrt-hybrid", "zf-hybrid"))
    cfg.validate(min_trials=MIN_MOMENT_TRIALS)
    if cfg.k < 2:
        raise ConfigurationError("Moment validation needs at least two users")
    loss_gamma = db_to_linear(loss_snr_db)
    logger.info(f"Validating moments over {cfg.trials} trials, N={cfg.n}, K={cfg.k}, B1={cfg.b1}, B2={cfg.b2}")

    totals = {key: np.zeros(5) for key in SAMPLE_KEYS}
    for sums in map_trials(partial(moment_trial, cfg, loss_gamma), cfg.trials, workers):
        for key in SAMPLE_KEYS:
            totals[key] += sums[key]
    stats = {key: SampleStats.from_sums(value) for key, value in totals.items()}

    n, k, b1, b2 = cfg.n, cfg.k, cfg.b1, cfg.b2
    rows: List[MomentRow] = [
        _exact("E[Re lambda]", stats["re_lambda"], expected_re_lambda(b1)),
    ]

    lam = stats["re_lambda"]
    var_closed = var_re_lambda(b1)
    var_se = lam.variance_std_error
    rows.append(
        _row(
            "Var[Re lambda]",
            "exact",
            lam.variance,
            var_closed,
            var_se,
            abs(lam.variance - var_closed) <= MOMENT_SE_MULTIPLIER * var_se,
        )
    )
    rows.append(_exact("E|g_kk|^2", stats["gkk"], expected_gkk_power(n, b1)))
    rows.append(_exact("E|g_ki|^2", stats["gki"], expected_gki_power(n)))
    rows.append(_exact("E||g_k||^2", stats["gain_norm"], expected_gain_norm(n, k, b1)))

    loss = quantization_loss(n, k, b1, b2)
    corr = stats["correlation"]
    in_bracket = 1 - 1.1 * loss <= corr.mean <= 1 - 0.5 * loss
    rows.append(
        _approx(
            "quantization correlation",
            corr,
            quantization_correlation(n, k, b1, b2),
            approx_tol,
            note="inside [1-1.1L, 1-0.5L]" if in_bracket else "outside [1-1.1L, 1-0.5L]",
        )
    )
    rows.append(_approx("MRT signal power", stats["mrt_signal"], mrt_signal_power(n, k, b1, b2), approx_tol))
    interference = mrt_interference_power(n, k, b1)
    rows.append(_approx("MRT interference power", stats["mrt_interference"], interference, approx_tol))

    leak = stats["zf_leakage"]
    leak_bound = zf_leakage_bound(n, k, b2)
    leak_slack = max(MOMENT_SE_MULTIPLIER * leak.std_error, approx_tol * leak_bound, _BOUND_FLOOR)
    rows.append(
        _row(
            "ZF leakage power",
            "bound",
            leak.mean,
            leak_bound,
            leak.std_error,
            leak.mean <= leak_bound + leak_slack,
            note=bound_excess_note(leak.mean, leak_bound),
        )
    )
    excess = stats["zf_leakage_excess"]
    rows.append(
        _row(
            "ZF leakage vs feedback error",
            "bound",
            leak.mean,
            stats["feedback_error"].mean,
            excess.std_error,
            excess.mean <= MOMENT_SE_MULTIPLIER * excess.std_error + _BOUND_FLOOR,
        )
    )

    perfect, quantized = stats["zf_rate_perfect"], stats["zf_rate_quantized"]
    beta = cfg.experiment_beta()
    loss_bound = math.fsum(
        zf_rate_loss_bound(SystemParams.for_user(cfg.m, k, b1, b2, loss_gamma, beta.tolist(), u)) for u in range(k)
    ) / k
    combined_ci = CI_Z * math.hypot(perfect.std_error, quantized.std_error)
    rate_loss = perfect.mean - quantized.mean
    rows.append(
        _row(
            "ZF rate loss",
            "bound",
            rate_loss,
            loss_bound,
            combined_ci / CI_Z,
            rate_loss <= loss_bound + 2 * combined_ci + _BOUND_FLOOR,
            note=f"at {loss_snr_db:g} dB",
        )
    )

    failed = [row["name"] for row in rows if not row["passed"]]
    if failed:
        logger.warning(f"Moment rows failed: {', '.join(failed)}")
    return MomentReport(rows=rows, trials=cfg.trials)

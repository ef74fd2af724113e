import math
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from hybridrate.analysis import SystemParams, predict_winner, rate_analog, rate_zf_perfect_asymptote
from hybridrate.channel import sample_rayleigh
from hybridrate.errors import ConfigurationError, ResourceLimitError
from hybridrate.numerics import MeanCI, RngStream, db_to_linear
from hybridrate.precoding import build_analog_precoder, effective_channel, quantize_effective_channel
from hybridrate.report import zf_shortfalls
from hybridrate.simulator import (
    RateResult,
    ScenarioConfig,
    cached_experiment,
    closed_form_rates,
    crossover_db,
    feedback_directions,
    fixed_beta,
    frozen_codebooks,
    instantaneous_rates,
    run_experiment,
    run_trial,
)

SMALL = ScenarioConfig(m=24, k=4, b1=2, b2=6, snr_db=(-10.0, 0.0, 10.0), beta=(1.0,), trials=100, seed=7)


class TestInstantaneousRates:
    def test_no_interference(self):
        rates = instantaneous_rates(np.eye(2), np.eye(2), np.ones(2), 4.0)
        assert np.allclose(rates, math.log2(1 + 4.0 / 2))

    def test_single_stream(self):
        w = np.array([[1, 0], [0, 0]], dtype=complex)
        rates = instantaneous_rates(np.eye(2), w, np.ones(2), 4.0)
        assert rates[0] == pytest.approx(math.log2(3.0))
        assert rates[1] == 0.0

    def test_interference_and_pathloss(self):
        g = np.array([[1.0, 0.5], [0.0, 1.0]], dtype=complex)
        beta = np.array([2.0, 3.0])
        rates = instantaneous_rates(g, np.eye(2), beta, 2.0)
        # user 0: signal 2 * 1, interference 3 * 0.25
        assert rates[0] == pytest.approx(math.log2(1 + (2.0 * 2.0 / 2) / (1 + 2.0 * 3.0 * 0.25 / 2)))
        assert rates[1] == pytest.approx(math.log2(1 + 2.0 * 3.0 / 2))

    def test_gamma_grid(self):
        rates = instantaneous_rates(np.eye(3), np.eye(3), np.ones(3), np.array([1e-12, 1.0, 10.0]))
        assert rates.shape == (3, 3)
        assert np.all(rates[0] < 1e-11)
        assert np.all(np.diff(rates, axis=0) > 0)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            instantaneous_rates(np.eye(2), np.eye(3), np.ones(2), 1.0)


class TestScenarioConfig:
    def test_defaults_valid(self):
        ScenarioConfig().validate()

    @pytest.mark.parametrize(
        "overrides",
        [
            {"trials": 99},
            {"m": 25},
            {"schemes": ()},
            {"schemes": ("mmse",)},
            {"snr_db": ()},
            {"beta": (1.0, 2.0)},
            {"beta": (0.0,)},
            {"beta_range": (0.0, 1.0)},
            {"per_trial_beta": True},
            {"channel": "rician"},
            {"b1": 0},
        ],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ConfigurationError):
            replace(SMALL, **overrides).validate()

    def test_both_pathloss_modes_rejected(self):
        with pytest.raises(ConfigurationError):
            replace(SMALL, beta_range=(0.5, 1.5)).validate()

    def test_codebook_limit(self):
        with pytest.raises(ResourceLimitError):
            replace(SMALL, b2=21).validate()

    def test_digest(self):
        assert SMALL.digest() == replace(SMALL).digest()
        assert SMALL.digest() != replace(SMALL, seed=8).digest()
        assert replace(SMALL, b2=math.inf).digest() != SMALL.digest()

    def test_experiment_beta(self):
        assert np.array_equal(SMALL.experiment_beta(), np.ones(4))
        assert np.array_equal(replace(SMALL, beta=(1.0, 2.0, 3.0, 4.0)).experiment_beta(), [1.0, 2.0, 3.0, 4.0])
        drawn = replace(SMALL, beta=None, beta_range=(0.5, 1.5))
        assert np.array_equal(drawn.experiment_beta(), drawn.experiment_beta())
        assert np.all((drawn.experiment_beta() >= 0.5) & (drawn.experiment_beta() <= 1.5))
        assert np.array_equal(fixed_beta(drawn), drawn.experiment_beta())


class TestRunTrial:
    def test_deterministic(self):
        a = run_trial(SMALL, 0)
        b = run_trial(SMALL, 0)
        for scheme in SMALL.schemes:
            assert np.array_equal(a.rates[scheme], b.rates[scheme])

    def test_trials_differ(self):
        assert not np.array_equal(run_trial(SMALL, 0).rates["analog"], run_trial(SMALL, 1).rates["analog"])

    def test_shapes_and_sign(self):
        samples = run_trial(SMALL, 3)
        for scheme in SMALL.schemes:
            assert samples.rates[scheme].shape == (3, 4)
            assert np.all(samples.rates[scheme] >= 0)

    def test_analog_ignores_feedback(self):
        coarse = run_trial(replace(SMALL, b2=1), 5).rates["analog"]
        fine = run_trial(replace(SMALL, b2=12), 5).rates["analog"]
        assert np.array_equal(coarse, fine)

    def test_single_user_schemes_coincide(self):
        cfg = ScenarioConfig(m=8, k=1, b1=2, b2=4, snr_db=(0.0, 10.0), beta=(1.0,), trials=100, seed=3)
        for t in range(20):
            rates = run_trial(cfg, t).rates
            assert np.allclose(rates["mrt-hybrid"], rates["analog"], rtol=0, atol=1e-12)
            assert np.allclose(rates["zf-hybrid"], rates["analog"], rtol=0, atol=1e-12)

    def test_per_trial_pathloss(self):
        cfg = replace(SMALL, beta=None, beta_range=(0.5, 1.5), per_trial_beta=True)
        assert not np.array_equal(run_trial(cfg, 0).beta, run_trial(cfg, 1).beta)

    def test_mmwave(self):
        cfg = replace(SMALL, m=40, k=5, channel="mmwave", num_paths=10)
        samples = run_trial(cfg, 0)
        assert samples.rates["zf-hybrid"].shape == (3, 5)

    def test_unquantized_feedback(self):
        samples = run_trial(replace(SMALL, b1=math.inf, b2=math.inf), 0)
        assert np.all(np.isfinite(samples.rates["zf-hybrid"]))


class TestFrozenCodebook:
    def test_shared_across_trials(self):
        cfg = replace(SMALL, freeze_codebook=True)
        books = frozen_codebooks(cfg)
        assert len(books) == 4
        assert frozen_codebooks(cfg) is books
        a = run_trial(cfg, 0)
        b = run_trial(cfg, 0)
        assert np.array_equal(a.rates["zf-hybrid"], b.rates["zf-hybrid"])

    def test_differs_from_per_trial_codebooks(self):
        frozen = run_trial(replace(SMALL, freeze_codebook=True), 2).rates["mrt-hybrid"]
        fresh = run_trial(SMALL, 2).rates["mrt-hybrid"]
        assert not np.array_equal(frozen, fresh)


def _effective(cfg: ScenarioConfig, stream: RngStream):
    channel = sample_rayleigh(stream, cfg.m, cfg.k)
    return effective_channel(channel.h, build_analog_precoder(channel.h, cfg.b1).a)


class TestFeedbackDirections:
    def test_frozen_codebooks_follow_config(self):
        cfg = replace(SMALL, freeze_codebook=True)
        stream = RngStream(cfg.seed, 0)
        eff = _effective(cfg, stream)
        g_hat = feedback_directions(cfg, stream, eff)
        books = frozen_codebooks(cfg)
        for user in range(cfg.k):
            assert np.array_equal(g_hat[:, user], quantize_effective_channel(eff.vector(user), books[user]))

    def test_perfect_feedback(self):
        cfg = replace(SMALL, b2=math.inf)
        stream = RngStream(cfg.seed, 1)
        eff = _effective(cfg, stream)
        g_hat = feedback_directions(cfg, stream, eff)
        for user in range(cfg.k):
            assert np.allclose(g_hat[:, user], eff.vector(user) / np.linalg.norm(eff.vector(user)))

    def test_unit_norm_codewords(self):
        stream = RngStream(SMALL.seed, 2)
        g_hat = feedback_directions(SMALL, stream, _effective(SMALL, stream))
        assert np.allclose(np.linalg.norm(g_hat, axis=0), 1.0)


class TestRunExperiment:
    def test_deterministic(self):
        a = run_experiment(SMALL)
        b = run_experiment(SMALL)
        for scheme in SMALL.schemes:
            assert np.array_equal(a.means(scheme), b.means(scheme))

    def test_independent_of_workers(self):
        single = run_experiment(SMALL, workers=1)
        pooled = run_experiment(SMALL, workers=2)
        for scheme in SMALL.schemes:
            assert np.array_equal(single.means(scheme), pooled.means(scheme))
            assert [c.half_width for c in single.sums[scheme]] == [c.half_width for c in pooled.sums[scheme]]

    def test_sum_is_sum_of_user_means(self):
        result = run_experiment(SMALL)
        for scheme in SMALL.schemes:
            for s in range(3):
                assert result.sums[scheme][s].mean == math.fsum(result.means(scheme)[s].tolist())

    def test_cells(self):
        result = run_experiment(SMALL)
        cell = result.rate("analog", 1, 2)
        assert cell.count == 100
        assert cell.mean >= 0
        assert np.array_equal(result.beta, np.ones(4))

    def test_per_trial_pathloss_records_mean_draw(self):
        cfg = replace(SMALL, beta=None, beta_range=(0.5, 1.5), per_trial_beta=True)
        result = run_experiment(cfg)
        draws = np.stack([run_trial(cfg, t).beta for t in range(cfg.trials)])
        assert np.allclose(result.beta, draws.mean(axis=0))
        assert not np.array_equal(result.beta, cfg.experiment_beta())
        assert np.all((result.beta > 0.5) & (result.beta < 1.5))

    def test_rejects_before_running(self):
        with pytest.raises(ConfigurationError):
            run_experiment(replace(SMALL, trials=10))

    def test_rejects_bad_workers(self):
        with pytest.raises(ConfigurationError):
            run_experiment(SMALL, workers=0)


def _result_with_sums(grid, a, b) -> RateResult:
    cfg = replace(SMALL, snr_db=tuple(grid), schemes=("analog", "zf-hybrid"))
    sums = {
        "analog": [MeanCI(v, 0.0, 100) for v in a],
        "zf-hybrid": [MeanCI(v, 0.0, 100) for v in b],
    }
    return RateResult(config=cfg, beta=np.ones(4), users={}, sums=sums)


class TestCrossover:
    def test_interpolated(self):
        result = _result_with_sums([0.0, 10.0, 20.0], [1.0, 2.0, 3.0], [0.0, 3.0, 5.0])
        assert crossover_db(result, "zf-hybrid", "analog") == pytest.approx(5.0)

    def test_none(self):
        result = _result_with_sums([0.0, 10.0], [1.0, 2.0], [0.0, 1.0])
        assert crossover_db(result, "zf-hybrid", "analog") is None


class TestClosedFormRates:
    def test_matches_formula(self):
        beta = np.array([0.5, 1.0, 1.5, 2.0])
        curves = closed_form_rates(SMALL, beta)
        assert set(curves) == set(SMALL.schemes)
        assert curves["analog"].shape == (3, 4)
        p = SystemParams.for_user(24, 4, 2, 6, db_to_linear(10.0), beta.tolist(), 3)
        assert curves["analog"][2, 3] == pytest.approx(rate_analog(p))


class TestCachedExperiment:
    def test_hit_returns_stored_result(self, isolated_home):
        first = cached_experiment(SMALL)
        assert (isolated_home / "cache").exists()
        second = cached_experiment(SMALL)
        assert np.array_equal(first.means("zf-hybrid"), second.means("zf-hybrid"))

    def test_bypass(self, isolated_home):
        cached_experiment(SMALL, use_cache=False)
        assert not (isolated_home / "cache").exists()


@pytest.mark.slow
class TestAgainstClosedForms:
    def test_analog_close_to_approximation(self):
        cfg = ScenarioConfig(
            m=120, k=6, b1=2, b2=10, schemes=("analog",), snr_db=(10.0,), beta=(1.0,), trials=10_000, seed=11
        )
        result = run_experiment(cfg)
        p = SystemParams(m=120, k=6, b1=2, b2=10, gamma=10.0, beta_k=1.0, beta_bar=5.0)
        for user in range(6):
            assert abs(result.rate("analog", 0, user).mean - rate_analog(p)) < 0.3

    @pytest.mark.parametrize("b1", [2, math.inf])
    def test_zf_perfect_feedback_asymptote(self, b1):
        cfg = ScenarioConfig(
            m=512,
            k=4,
            b1=b1,
            b2=math.inf,
            schemes=("zf-hybrid",),
            snr_db=(0.0, 10.0, 20.0),
            beta=(1.0,),
            trials=2000,
            seed=12,
        )
        result = run_experiment(cfg)
        for s, snr in enumerate(cfg.snr_db):
            p = SystemParams(m=512, k=4, b1=b1, b2=math.inf, gamma=db_to_linear(snr), beta_k=1.0, beta_bar=3.0)
            for user in range(4):
                assert abs(result.rate("zf-hybrid", s, user).mean - rate_zf_perfect_asymptote(p)) < 0.15

    def test_analog_beats_zf_with_coarse_feedback_at_low_snr(self):
        cfg = ScenarioConfig(
            m=60, k=6, b1=2, b2=3, schemes=("analog", "zf-hybrid"), snr_db=(-10.0,), beta=(1.0,), trials=4000, seed=13
        )
        result = run_experiment(cfg)
        analog, zf = result.sums["analog"][0], result.sums["zf-hybrid"][0]
        assert analog.mean >= zf.mean - (analog.half_width + zf.half_width)

    def test_mrt_beats_analog_with_one_bit_phases_at_low_snr(self):
        cfg = ScenarioConfig(
            m=120, k=6, b1=1, b2=10, schemes=("analog", "mrt-hybrid"), snr_db=(-10.0,), beta=(1.0,), trials=2000, seed=4
        )
        result = run_experiment(cfg)
        mrt, analog = result.sums["mrt-hybrid"][0], result.sums["analog"][0]
        assert mrt.mean >= analog.mean - (analog.half_width + mrt.half_width)

    def test_zf_beats_analog_with_fine_feedback_at_high_snr(self):
        cfg = ScenarioConfig(
            m=60, k=6, b1=2, b2=10, schemes=("analog", "zf-hybrid"), snr_db=(30.0,), beta=(1.0,), trials=2000, seed=15
        )
        result = run_experiment(cfg)
        assert result.sums["zf-hybrid"][0].mean > result.sums["analog"][0].mean


@lru_cache(maxsize=None)
def _sweep(m: int, k: int, b1: int, b2: int, channel: str = "rayleigh") -> RateResult:
    """Every scheme on the default grid with unit path losses, shared by the grid-wide checks."""
    cfg = ScenarioConfig(m=m, k=k, b1=b1, b2=b2, channel=channel, beta=(1.0,), trials=2000, seed=16)
    return run_experiment(cfg)


def _beats(result: RateResult, winner: str, loser: str, s: int) -> bool:
    w, lo = result.sums[winner][s], result.sums[loser][s]
    return w.mean >= lo.mean - (w.half_width + lo.half_width)


@pytest.mark.slow
class TestAcrossGrid:
    @pytest.mark.parametrize("b1", [1, 5])
    def test_mrt_and_analog_track_closed_forms(self, b1):
        result = _sweep(120, 6, b1, 10)
        closed = closed_form_rates(result.config, result.beta)
        for scheme in ("mrt-hybrid", "analog"):
            assert np.all(np.abs(result.means(scheme) - closed[scheme]) < 0.3), scheme

    def test_one_bit_phases_favor_mrt_everywhere(self):
        result = _sweep(120, 6, 1, 10)
        for s in range(len(result.config.snr_db)):
            assert _beats(result, "mrt-hybrid", "analog", s), result.config.snr_db[s]

    @pytest.mark.parametrize(
        ("m", "b1", "b2", "comparison", "hybrid"),
        [
            (120, 5, 10, "mrt-vs-analog", "mrt-hybrid"),
            (60, 2, 10, "zf-vs-analog", "zf-hybrid"),
        ],
    )
    def test_winner_matches_prediction_away_from_crossover(self, m, b1, b2, comparison, hybrid):
        result = _sweep(m, 6, b1, b2)
        checked = 0
        for s, snr in enumerate(result.config.snr_db):
            p = SystemParams(m=m, k=6, b1=b1, b2=b2, gamma=db_to_linear(snr), beta_k=1.0, beta_bar=5.0)
            verdict = predict_winner(p, comparison)
            assert verdict.regime == "crossover"
            if abs(snr - verdict.crossover_db) < 5.0:
                continue
            loser = "analog" if verdict.winner == hybrid else hybrid
            assert _beats(result, verdict.winner, loser, s), snr
            checked += 1
        assert checked >= 6

    def test_mmwave_coarse_feedback_favors_analog(self):
        result = _sweep(40, 5, 2, 3, channel="mmwave")
        for s in range(len(result.config.snr_db)):
            assert _beats(result, "analog", "zf-hybrid", s), result.config.snr_db[s]


@pytest.mark.slow
class TestZfClosedFormShortfall:
    """rate_zf_hybrid_lb is not a strict bound at N=20; these pin how far the simulated rate falls below it."""

    def test_high_snr_fine_phases_fall_below(self):
        result = _sweep(120, 6, 5, 10)
        closed = closed_form_rates(result.config, result.beta)["zf-hybrid"]
        gap = result.means("zf-hybrid") - closed
        top = result.config.snr_db.index(30.0)
        assert -0.8 < gap[top].mean() < -0.3
        assert 30.0 in [snr for snr, _ in zf_shortfalls(result)]

    @pytest.mark.parametrize("b1", [1, 5])
    def test_shortfall_stays_bounded(self, b1):
        result = _sweep(120, 6, b1, 10)
        closed = closed_form_rates(result.config, result.beta)["zf-hybrid"]
        gap = result.means("zf-hybrid") - closed
        assert gap.min() > -0.8
        # low SNR, where the closed form is nearly zero
        assert np.all(gap[0] > -0.1)

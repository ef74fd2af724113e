import math
from dataclasses import replace

import numpy as np
import pytest

from hybridrate.errors import ConfigurationError
from hybridrate.moments import SAMPLE_KEYS, SampleStats, _power_sums, bound_excess_note, moment_trial, validate_moments
from hybridrate.simulator import ScenarioConfig

BASE = ScenarioConfig(m=24, k=4, b1=2, b2=4, beta=(1.0,), trials=10_000, seed=21)


def test_power_sums():
    assert np.array_equal(_power_sums([1.0, 2.0]), [2, 3, 5, 9, 17])


def test_sample_stats():
    stats = SampleStats.from_sums(_power_sums([1.0, 2.0, 3.0, 4.0]))
    assert stats.count == 4
    assert stats.mean == pytest.approx(2.5)
    assert stats.variance == pytest.approx(5 / 3)
    assert stats.fourth_central == pytest.approx(2.5625)
    assert stats.std_error == pytest.approx(math.sqrt(5 / 12))


def test_moment_trial_sample_counts():
    sums = moment_trial(BASE, 10.0, 0)
    assert set(sums) == set(SAMPLE_KEYS)
    counts = {key: int(value[0]) for key, value in sums.items()}
    assert counts["re_lambda"] == 24
    assert counts["gkk"] == 4
    assert counts["gki"] == 12
    assert counts["zf_leakage"] == 12
    assert counts["feedback_error"] == 12
    assert counts["zf_rate_quantized"] == 4


def test_leakage_never_exceeds_feedback_error():
    for t in range(50):
        sums = moment_trial(BASE, 10.0, t)
        # every sample of leakage minus feedback error is non-positive, so is their sum
        assert sums["zf_leakage_excess"][1] <= 1e-9


def test_perfect_feedback_has_no_rate_loss():
    cfg = replace(BASE, b2=math.inf)
    sums = moment_trial(cfg, 10.0, 0)
    assert sums["zf_rate_perfect"][1] == pytest.approx(sums["zf_rate_quantized"][1])


@pytest.mark.parametrize(
    "overrides",
    [
        {"channel": "mmwave"},
        {"trials": 9_999},
        {"m": 8, "k": 1},
    ],
)
def test_rejected(overrides):
    with pytest.raises(ConfigurationError):
        validate_moments(replace(BASE, **overrides))


def test_negative_tolerance():
    with pytest.raises(ConfigurationError):
        validate_moments(BASE, approx_tol=-0.1)


@pytest.mark.slow
class TestValidateMoments:
    def test_exact_identities_hold(self):
        report = validate_moments(BASE)
        assert report.trials == 10_000
        assert len(report.rows) == 11
        for row in report.rows:
            if row["kind"] == "exact":
                assert row["passed"], row
        by_name = {row["name"]: row for row in report.rows}
        assert by_name["E|g_ki|^2"]["closed_form"] == pytest.approx(1 / 6)
        assert by_name["ZF leakage vs feedback error"]["passed"]

    def test_unquantized_phases(self):
        report = validate_moments(replace(BASE, b1=math.inf))
        first = report.rows[0]
        assert first["name"] == "E[Re lambda]"
        assert first["closed_form"] == pytest.approx(math.sqrt(math.pi) / 2)
        assert first["passed"]

    def test_leakage_row_reports_excess(self):
        report = validate_moments(BASE)
        leak = next(row for row in report.rows if row["name"] == "ZF leakage power")
        if leak["empirical"] > leak["closed_form"]:
            assert leak["note"].startswith("exceeds bound by ")
        else:
            assert leak["note"] == ""


@pytest.mark.parametrize(
    ("empirical", "bound", "note"),
    [
        (0.0182, 0.0125, "exceeds bound by 46%"),
        (0.0250, 0.0125, "exceeds bound by 100%"),
        (0.0125, 0.0125, ""),
        (0.0100, 0.0125, ""),
        (0.0100, 0.0, ""),
    ],
)
def test_bound_excess_note(empirical, bound, note):
    assert bound_excess_note(empirical, bound) == note

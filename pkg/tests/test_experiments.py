import math

import numpy as np
import pytest

from fissurescan.calibrate import calibrate_threshold
from fissurescan.exceptions import ConfigError, DomainError
from fissurescan.experiments import (
    DetectionScenario,
    StudyTable,
    angles_needed,
    detection_rate_study,
    fast_scan,
    fp_rate_study,
    min_angles_for_target,
    power_study,
    wilson_interval,
)
from fissurescan.geometry import Segment, WindowSpec, build_offset_mask
from fissurescan.stats import StatConfig, heatmap, significance_mask

W = WindowSpec(0.1, 0.02)
SMALL = WindowSpec(0.3, 0.1)


@pytest.fixture(scope="module")
def beta100():
    return calibrate_threshold("fnb1", W, (0.0,), T=100, replicates=200, seed=21)


def test_wilson():
    lo, hi = wilson_interval(5, 100)
    assert lo < 0.05 < hi
    assert wilson_interval(0, 10)[0] == 0.0


def test_fp_large_beta():
    row = fp_rate_study(StatConfig("fnb1", SMALL, (0.0,)), 1e9, T=30, replicates=20, seed=1)
    assert row["rate"] == 0.0 and row["replicates"] == 20


def test_fp_threshold_mismatch(beta100):
    with pytest.raises(ConfigError):
        fp_rate_study(StatConfig("fnb1", W, (0.0,)), beta100, T=80, replicates=5)
    with pytest.raises(ConfigError):
        fp_rate_study(StatConfig("f1", W, (0.0,)), beta100, T=100, replicates=5)


def test_fp_rate_single_angle(beta100):
    row = fp_rate_study(StatConfig("fnb1", W, (0.0,)), beta100, T=100, replicates=200, seed=22)
    assert 0.0 <= row["rate"] <= 0.12
    assert row["calibration_angles_deg"] == [0.0]


def test_detection_null_and_strong(beta100):
    table = detection_rate_study(W, beta100, T=100, widths=[0.02], deltas=[0.0, 2.0], offsets_deg=[0], replicates=60, seed=5)
    rates = {r["delta"]: r["rate"] for r in table}
    assert rates[0.0] <= 0.12
    assert rates[2.0] >= 0.95


def test_detection_monotone_in_delta_indicators(beta100):
    _, ind = detection_rate_study(W, beta100, T=100, widths=[0.02], deltas=[0.5, 1.0, 1.5], offsets_deg=[0],
                                  replicates=30, seed=6, return_indicators=True)
    a, b, c = (ind[(0.02, d, 0.0)] for d in (0.5, 1.0, 1.5))
    # nondecreasing up to a few replicates where the detection-window overlap changes
    assert np.sum(a & ~b) <= 2 and np.sum(b & ~c) <= 2
    assert a.sum() <= b.sum() <= c.sum()


def test_min_angles_examples():
    rows = [{"width": 0.02, "delta": 1.5, "offset_deg": o, "rate": r} for o, r in [(0, 1.0), (5, 0.9), (20, 0.8), (25, 0.5)]]
    assert min_angles_for_target(rows) == {(0.02, 1.5): (20, 5)}
    assert angles_needed(25) == 4
    assert angles_needed(5) == 18
    assert angles_needed(90) == 1
    assert angles_needed(0) is None
    assert min_angles_for_target([{"width": 1, "delta": 1, "offset_deg": 0, "rate": 0.1}]) == {(1, 1): None}


def test_scenario_validation():
    with pytest.raises(DomainError):
        DetectionScenario(100, 0.02, 1.0, 95.0, StatConfig("fnb1", W, (0.0,)), 1.0, 10, 0)


def test_study_table_csv():
    t = StudyTable([{"a": 1, "rate": 0.5, "angles": [1.0, 2.0]}])
    lines = t.to_csv().splitlines()
    assert lines[0] == "a,rate,angles"
    assert lines[1] == "1,0.5,1 2"


def test_power_study_small():
    res = power_study(W, T=100, deltas=(0.0, 1.0), replicates=20, seed=1)
    assert res["median_f1"][1] > res["median_f1"][0]
    assert 0.4 < res["continuum_slope"] < 0.6


class TestFastScan:
    def _field(self, seed=0, delta=1.0):
        rng = np.random.default_rng(seed)
        y = rng.standard_normal((60, 60))
        inner = build_offset_mask(SMALL, Segment.INNER, 0.0, 60)
        y[29 + inner.offsets[:, 0], 29 + inner.offsets[:, 1]] -= delta
        return y

    def test_full_equivalence(self):
        y = self._field()
        cfg = StatConfig("fnb1", SMALL, (0.0, 1.0), "silverman")
        hm = heatmap(y, cfg)
        beta = float(np.nanquantile(hm.values, 0.9))
        res = fast_scan(y, SMALL, (0.0, 1.0), (0.0, 1.0), 1.0, -math.inf, beta)
        assert np.array_equal(res.mask, significance_mask(hm, beta))
        assert res.evaluations <= res.full_evaluations

    def test_containment(self):
        y = self._field(1)
        cfg = StatConfig("fnb1", SMALL, (0.0,), "silverman")
        hm = heatmap(y, cfg)
        beta = float(np.nanquantile(hm.values, 0.8))
        res = fast_scan(y, SMALL, (0.0,), (0.0,), 0.3, beta * 0.5, beta)
        assert not np.any(res.mask & ~significance_mask(hm, beta))

    def test_empty_candidates(self):
        with pytest.warns(UserWarning):
            res = fast_scan(self._field(), SMALL, (0.0,), (0.0,), 0.0, 0.0, 0.0)
        assert not res.mask.any() and res.evaluations == 0

    def test_strip_survives(self):
        y = np.zeros((60, 60))
        inner = build_offset_mask(SMALL, Segment.INNER, 0.0, 60)
        y[29 + inner.offsets[:, 0], 29 + inner.offsets[:, 1]] = -1.0
        res = fast_scan(y + 1e-3 * np.random.default_rng(0).standard_normal((60, 60)), SMALL, (0.0,), (0.0,), 0.5, 1.0, 5.0, 1.0)
        assert res.mask[29, 29]
        assert res.summary()["final"] >= 1

    def test_bad_quantile(self):
        with pytest.raises(DomainError):
            fast_scan(self._field(), SMALL, (0.0,), (0.0,), 1.5, 0.0, 0.0)

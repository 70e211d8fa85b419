import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fissurescan.exceptions import DomainError
from fissurescan.geometry import Segment, WindowSpec, build_offset_mask
from fissurescan.stats import (
    KINDS,
    NORMAL_Q75,
    StatConfig,
    contrasts,
    equidistant_angles,
    heatmap,
    local_mean_scaled,
    local_sum,
    significance_mask,
    silverman_limit,
    silverman_sigma,
    stat_at,
)

W = WindowSpec(0.1, 0.02)
SMALL = WindowSpec(0.3, 0.1)


def _strip_field(delta=0.1, T=100, anchor=(50, 50)):
    inner = build_offset_mask(W, Segment.INNER, 0.0, T)
    f = np.zeros((T, T))
    f[anchor[0] - 1 + inner.offsets[:, 0], anchor[1] - 1 + inner.offsets[:, 1]] = -delta
    return f


class TestLocal:
    def test_constant(self):
        m = build_offset_mask(W, Segment.UPPER, 0.2, 100)
        f = np.full((100, 100), 2.5)
        assert local_sum(f, m, (50, 50)) == pytest.approx(2.5 * m.count)
        assert local_mean_scaled(f, m, (50, 50)) == pytest.approx(100 * 2.5)

    def test_zero(self):
        m = build_offset_mask(W, Segment.INNER, 0.0, 100)
        assert local_sum(np.zeros((100, 100)), m, (40, 40)) == 0.0

    def test_hand_pattern(self):
        from fissurescan.geometry import OffsetMask

        m = OffsetMask(Segment.INNER, 0.0, 6, np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]]))
        f = np.arange(36, dtype=float).reshape(6, 6)
        # anchor (3, 4) is 0-based (2, 3): values 15, 21, 9, 16, 14
        assert local_sum(f, m, (3, 4)) == 15 + 21 + 9 + 16 + 14

    def test_out_of_range(self):
        m = build_offset_mask(W, Segment.INNER, 0.0, 100)
        with pytest.raises(IndexError):
            local_sum(np.zeros((100, 100)), m, (2, 50))

    def test_normalisations_agree(self):
        from fissurescan.geometry import exact_area

        T = 200
        y = np.random.default_rng(0).standard_normal((T, T))
        m = build_offset_mask(SMALL, None, 0.0, T)
        a = local_mean_scaled(y, m, (100, 100))
        b = local_sum(y, m, (100, 100)) / (T * exact_area(SMALL, None))
        assert abs(a - b) <= 5.0 / T * max(1.0, abs(a))


class TestContrasts:
    def test_constant(self):
        cfg = StatConfig("f1", W, (0.0,), 1.0)
        assert contrasts(np.full((100, 100), 3.0), cfg, (50, 50), 0.0) == pytest.approx((0.0, 0.0, 0.0), abs=1e-9)

    def test_perfect_strip(self):
        cfg = StatConfig("f1", W, (0.0,), 1.0)
        c12, c13, c45 = contrasts(_strip_field(), cfg, (50, 50), 0.0)
        assert c12 == pytest.approx(10.0)
        assert c13 == pytest.approx(10.0)
        assert c45 == 0.0

    def test_axis_symmetric_field(self):
        # mirror image about the row of the anchor; with alpha = pi/2 the halves swap
        rng = np.random.default_rng(2)
        g = rng.standard_normal((49, 99))
        f = np.concatenate([g, rng.standard_normal((1, 99)), g[::-1]], axis=0)
        cfg = StatConfig("nb", W, (math.pi / 2,), 1.0)
        _, _, c45 = contrasts(f, cfg, (50, 50), math.pi / 2)
        assert c45 == pytest.approx(0.0, abs=1e-9)


class TestStatAt:
    def test_constant(self):
        f = np.full((60, 60), 1.7)
        for kind in KINDS:
            cfg = StatConfig(kind, SMALL, equidistant_angles(4), 1.0)
            assert stat_at(f, cfg, 1.0, (30, 30)) == pytest.approx(0.0, abs=1e-9)

    def test_perfect_strip(self):
        f = _strip_field()
        vals = {k: stat_at(f, StatConfig(k, W, (0.0,), 1.0), 1.0, (50, 50)) for k in KINDS}
        assert vals["f1"] == pytest.approx(10.0)
        assert vals["nb"] == 0.0
        assert vals["fnb1"] == pytest.approx(10.0)

    def test_sigma_positive(self):
        with pytest.raises(DomainError):
            stat_at(np.zeros((100, 100)), StatConfig("f1", W, (0.0,), 1.0), 0.0, (50, 50))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_clamping(self, seed):
        f = np.random.default_rng(seed).standard_normal((30, 30))
        cfg = StatConfig("f1", SMALL, equidistant_angles(3), 1.0)
        for j in [(15, 15), (10, 20)]:
            f1 = stat_at(f, cfg, 1.0, j)
            nb = stat_at(f, cfg.with_kind("nb"), 1.0, j)
            fnb1 = stat_at(f, cfg.with_kind("fnb1"), 1.0, j)
            fnb2 = stat_at(f, cfg.with_kind("fnb2"), 1.0, j)
            f2 = stat_at(f, cfg.with_kind("f2"), 1.0, j)
            assert fnb1 >= 0 and fnb2 >= 0 and fnb1 <= max(f1, 0.0)
            assert fnb1 == max(f1 - nb, 0.0)
            assert fnb2 == max(f2 - nb, 0.0)


class TestHeatmap:
    def test_oracle_all_kinds(self):
        rng = np.random.default_rng(7)
        f = rng.standard_normal((30, 30))
        for kind in KINDS:
            cfg = StatConfig(kind, SMALL, (0.0, 0.9, 2.0), 1.3)
            hm = heatmap(f, cfg, 1.3)
            for j in hm.anchors.pixels():
                assert hm.values[j[0] - 1, j[1] - 1] == stat_at(f, cfg, 1.3, j)
            assert np.isnan(hm.values[0, 0])

    def test_constant(self):
        hm = heatmap(np.full((40, 40), 5.0), StatConfig("fnb2", SMALL, (0.0,), 1.0))
        assert np.allclose(hm.anchor_values, 0.0)

    def test_translation(self):
        rng = np.random.default_rng(1)
        f = rng.standard_normal((40, 40))
        g = np.roll(f, (2, 3), axis=(0, 1))
        cfg = StatConfig("f2", SMALL, (0.4,), 1.0)
        a, b = heatmap(f, cfg, 1.0).values, heatmap(g, cfg, 1.0).values
        assert np.allclose(a[8:28, 8:28], b[10:30, 11:31], atol=1e-12)

    def test_angle_subset_monotone(self):
        f = np.random.default_rng(4).standard_normal((40, 40))
        sub = StatConfig("f1", SMALL, (0.0, math.pi / 2), 1.0)
        full = StatConfig("f1", SMALL, equidistant_angles(4), 1.0)
        for kind in ("f1", "f2", "nb"):
            a = heatmap(f, sub.with_kind(kind), 1.0)
            b = heatmap(f, full.with_kind(kind), 1.0)
            sl = b.anchors.slices
            assert np.all(a.values[sl] <= b.values[sl] + 1e-12)

    def test_scale_and_shift(self):
        f = np.random.default_rng(5).standard_normal((40, 40))
        for kind in KINDS:
            cfg = StatConfig(kind, SMALL, (0.0, 1.0), 1.0)
            a = heatmap(f, cfg, 1.0).anchor_values
            b = heatmap(3.0 * f + 11.0, cfg, 3.0).anchor_values
            assert np.allclose(a, b, rtol=1e-9, atol=1e-9)

    def test_silverman_default(self):
        f = np.random.default_rng(5).standard_normal((40, 40))
        cfg = StatConfig("f1", SMALL, (0.0,))
        s = silverman_sigma(f).value
        assert np.allclose(heatmap(f, cfg).anchor_values, heatmap(f, cfg, s).anchor_values)


class TestMask:
    def test_extremes(self):
        f = np.random.default_rng(0).standard_normal((40, 40))
        hm = heatmap(f, StatConfig("fnb1", SMALL, (0.0,), 1.0))
        assert not significance_mask(hm, 1e9).any()
        m = significance_mask(hm, float(np.nanmin(hm.values)))
        assert m.sum() == hm.anchors.size
        assert not m[0, 0]

    def test_oracle(self):
        f = np.random.default_rng(1).standard_normal((40, 40))
        hm = heatmap(f, StatConfig("f1", SMALL, (0.0,), 1.0))
        beta = float(np.nanmedian(hm.values))
        m = significance_mask(hm, beta)
        for j in hm.anchors.pixels():
            assert m[j[0] - 1, j[1] - 1] == (hm.values[j[0] - 1, j[1] - 1] >= beta)


class TestConfig:
    def test_angles_validated(self):
        with pytest.raises(DomainError):
            StatConfig("f1", W, (0.5, 0.2))
        with pytest.raises(DomainError):
            StatConfig("f1", W, (math.pi,))
        with pytest.raises(DomainError):
            StatConfig("g1", W, (0.0,))

    def test_equidistant(self):
        assert equidistant_angles(4) == pytest.approx((0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4))


class TestSilverman:
    def test_definition(self):
        # quartiles exactly at +-q75
        x = np.array([-3.0, -NORMAL_Q75, 0.0, NORMAL_Q75, 3.0]).reshape(1, 5)
        f = np.repeat(x, 1, axis=0)
        # 5 values: linear quantile positions 1 and 3
        est = silverman_sigma(f)
        assert est.value == pytest.approx(1.0)

    def test_constant_degenerate(self):
        est = silverman_sigma(np.ones((10, 10)))
        assert est.value == 0.0 and est.degenerate

    def test_scale(self):
        f = 2.0 * np.random.default_rng(3).standard_normal((100, 100))
        assert silverman_sigma(f).value == pytest.approx(2.0, abs=0.05)

    def test_linear_quantile_oracle(self):
        f = np.random.default_rng(6).standard_normal((13, 13))
        v = np.sort(f.ravel())
        n = v.size

        def q(p):
            pos = p * (n - 1)
            lo = int(math.floor(pos))
            return v[lo] + (pos - lo) * (v[min(lo + 1, n - 1)] - v[lo])

        assert silverman_sigma(f).value == pytest.approx((q(0.75) - q(0.25)) / (2 * NORMAL_Q75), rel=1e-12)

    @pytest.mark.parametrize(
        "dist,params,want",
        [("t", {"df": 3}, 1.134), ("t", {"df": 4}, 1.098), ("t", {"df": 5}, 1.077), ("t", {"df": 6}, 1.064),
         ("t", {"df": 7}, 1.054), ("exp", {"rate": 1}, 0.814), ("gamma", {"shape": 4, "rate": 2}, 0.954),
         ("normal", {"sd": 2.5}, 2.5)],
    )
    def test_limits(self, dist, params, want):
        assert silverman_limit(dist, **params) == pytest.approx(want, abs=0.001)

    def test_unknown(self):
        with pytest.raises(DomainError):
            silverman_limit("cauchy")

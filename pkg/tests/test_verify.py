import math

import numpy as np
import pytest

from fissurescan.field import IIDGaussian, MovingAverage
from fissurescan.geometry import Region, Segment, WindowSpec, exact_area
from fissurescan.verify import (
    Check,
    WindowPlacement,
    area_intersection_estimate,
    count_area_errors,
    grid_count_check,
    lens_area,
    standard_shapes,
    verify_area_convergence,
    verify_clt,
    verify_covariance,
    verify_normalization_equiv,
)

DISK = WindowSpec(0.3, 0.1)
S2 = WindowSpec(0.2, 0.04)


def test_check_modes():
    assert Check.ratio("x", 1.1, 1.0, 0.2).passed
    assert not Check.ratio("x", 1.3, 1.0, 0.2).passed
    assert Check.absolute("x", -0.05, 0.0, 0.1).passed


class TestArea:
    def test_identical_disks(self):
        d = Region.segment(S2, None, 0.0, (0.5, 0.5))
        a, bound = area_intersection_estimate(d, d, 400)
        assert abs(a - math.pi * 0.01) <= bound

    def test_disjoint(self):
        a = Region.segment(S2, None, 0.0, (0.2, 0.2))
        b = Region.segment(S2, None, 0.0, (0.7, 0.7))
        assert area_intersection_estimate(a, b, 200) == (0.0, 0.0)

    @pytest.mark.parametrize("alpha", [0.0, math.pi / 6])
    def test_inner_half(self, alpha):
        a = Region.segment(S2, Segment.INNER, alpha, (0.5, 0.5))
        b = Region.segment(S2, Segment.HALF_POS, alpha, (0.5, 0.5))
        est, bound = area_intersection_estimate(a, b, 400)
        assert abs(est - exact_area(S2, Segment.INNER) / 2) <= bound

    def test_lens_oracle(self):
        a = Region.segment(S2, None, 0.0, (0.5, 0.5))
        b = Region.segment(S2, None, 0.0, (0.56, 0.5))
        est, bound = area_intersection_estimate(a, b, 800)
        assert abs(est - lens_area(0.1, 0.06)) <= bound

    def test_small_resolution(self):
        d = Region.segment(S2, None, 0.0, (0.5, 0.5))
        with pytest.raises(ValueError):
            area_intersection_estimate(d, d, 50)

    def test_convergence_rate(self):
        rep = verify_area_convergence(standard_shapes())
        assert rep.passed, rep.to_dict()


class TestCLT:
    def test_gauss(self):
        rep = verify_clt(DISK, None, 0.0, 60, 1000, IIDGaussian(1.0), seed=1)
        assert rep.passed, rep.to_dict()
        assert rep.check("variance").target == pytest.approx(exact_area(DISK, None))

    def test_ma_target(self):
        rep = verify_clt(DISK, None, 0.0, 60, 1000, MovingAverage.box(1), seed=2)
        assert rep.check("variance").target == pytest.approx(81 * exact_area(DISK, None))
        assert rep.passed, rep.to_dict()

    def test_preconditions(self):
        with pytest.raises(ValueError):
            verify_clt(DISK, replicates=100)


class TestCovariance:
    def test_identical_matches_clt_bitwise(self):
        c = (30, 30)
        p = WindowPlacement(DISK, None, 0.0, c)
        cov = verify_covariance(p, p, 60, 300, IIDGaussian(1.0), seed=9)
        clt = verify_clt(DISK, None, 0.0, 60, 300, IIDGaussian(1.0), seed=9)
        assert cov.check("covariance").estimate == clt.check("variance").estimate

    def test_disjoint_zero(self):
        a = WindowPlacement(DISK, None, 0.0, (12, 12))
        b = WindowPlacement(DISK, None, 0.0, (45, 45))
        rep = verify_covariance(a, b, 60, 400, IIDGaussian(1.0), seed=4)
        assert rep.check("covariance").mode == "absolute"
        assert rep.passed, rep.to_dict()

    def test_inner_half_oblique(self):
        a = WindowPlacement(DISK, Segment.INNER, math.pi / 6, (30, 30))
        b = WindowPlacement(DISK, Segment.HALF_POS, math.pi / 6, (30, 30))
        rep = verify_covariance(a, b, 60, 1000, IIDGaussian(1.0), seed=5)
        assert rep.params["intersection_area"] == pytest.approx(exact_area(DISK, Segment.INNER) / 2, abs=rep.params["intersection_bound"])
        assert rep.passed, rep.to_dict()


class TestNormalization:
    def test_constant_zero_field(self):
        # for c = 0 the gap is exactly 0 at every resolution
        from fissurescan.geometry import build_offset_mask, valid_anchor_pixels
        from fissurescan.stats import _grid_means

        m = build_offset_mask(DISK, None, 0.0, 50)
        a = valid_anchor_pixels([m], 50)
        assert np.all(_grid_means(np.zeros((50, 50)), m, a) == 0.0)

    def test_constant_field_formula(self):
        from fissurescan.geometry import build_offset_mask
        from fissurescan.stats import local_mean_scaled, local_sum

        T, c = 50, 0.7
        m = build_offset_mask(DISK, None, 0.0, T)
        f = np.full((T, T), c)
        gap = abs(local_mean_scaled(f, m, (25, 25)) - local_sum(f, m, (25, 25)) / (T * exact_area(DISK, None)))
        assert gap == pytest.approx(abs(T * c - c * m.count / (T * exact_area(DISK, None))))

    def test_gaussian_decreasing(self):
        # the literal monotonicity claim for the disk d=0.3 on T = 50, 100, 200
        rep = verify_normalization_equiv(DISK, None, 0.0, (50, 100, 200), 20, IIDGaussian(1.0), seed=13)
        assert rep.passed, rep.params

    def test_gap_identity_and_rate(self):
        # D(T) = mean_r max_j |Sbar_r(j)| * |1 - count / (T^2 lambda)|, and the count factor is O(1/T)
        from fissurescan.field import generate_noise
        from fissurescan.geometry import boundary_length, build_offset_mask, valid_anchor_pixels
        from fissurescan.stats import _grid_means

        lam = exact_area(DISK, None)
        rep = verify_normalization_equiv(DISK, None, 0.0, (50, 100, 200), 3, IIDGaussian(1.0), seed=13)
        for T, D in zip(rep.params["Ts"], rep.params["D"]):
            m = build_offset_mask(DISK, None, 0.0, T)
            a = valid_anchor_pixels([m], T)
            mx = np.mean([np.abs(_grid_means(generate_noise(IIDGaussian(1.0), T, 13, r), m, a)).max() for r in range(3)])
            factor = abs(1.0 - m.count / (T * T * lam))
            assert D == pytest.approx(mx * factor, rel=1e-9)
            assert factor * T <= (4 * boundary_length(DISK, None) + 4 / T) / lam

    def test_increasing_required(self):
        with pytest.raises(ValueError):
            verify_normalization_equiv(DISK, Ts=(100, 50))


def test_grid_count_check():
    for seg in Segment:
        rep = grid_count_check(S2, seg, math.pi / 6)
        assert rep.passed, rep.to_dict()
    assert len(count_area_errors(S2, None, 0.0, (50, 100))) == 2

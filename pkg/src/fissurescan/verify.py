"""Desk-scale empirical checks of the limit theory.

* window sums over null fields are approximately ``N(0, sigma^2 lambda(A))``
  after dividing by ``T``;
* covariances of two window sums match ``sigma^2 lambda(A cap B)``;
* count-normalised and area-normalised means agree with an ``O(1/T)`` gap;
* pixel counts approximate areas with an ``O(1/T)`` error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .field import IIDGaussian, MovingAverage, NoiseModel, generate_noise
from .geometry import (
    Region,
    Segment,
    WindowSpec,
    boundary_length,
    build_offset_mask,
    exact_area,
    valid_anchor_pixels,
)
from .stats import _grid_means


@dataclass
class Check:
    name: str
    estimate: float
    target: float
    tolerance: float
    mode: str  # "ratio" or "absolute"
    passed: bool

    @classmethod
    def ratio(cls, name, estimate, target, tolerance):
        est, tgt = float(estimate), float(target)
        return cls(name, est, tgt, float(tolerance), "ratio", bool(abs(est / tgt - 1.0) <= tolerance))

    @classmethod
    def absolute(cls, name, estimate, target, tolerance):
        est, tgt = float(estimate), float(target)
        return cls(name, est, tgt, float(tolerance), "absolute", bool(abs(est - tgt) <= tolerance))


@dataclass
class VerifyReport:
    name: str
    replicates: int
    checks: list[Check] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "replicates": self.replicates,
            "passed": self.passed,
            "params": self.params,
            "checks": [asdict(c) for c in self.checks],
        }


@dataclass(frozen=True)
class WindowPlacement:
    """A segment (``None`` = whole disk) at an angle, anchored at a 1-based pixel."""

    spec: WindowSpec
    segment: Segment | None
    angle: float
    anchor: tuple[int, int]

    def mask(self, T: int):
        return build_offset_mask(self.spec, self.segment, self.angle, T)

    def region(self, T: int) -> Region:
        return Region.segment(self.spec, self.segment, self.angle, (self.anchor[0] / T, self.anchor[1] / T))


def sample_cov(a: np.ndarray, b: np.ndarray) -> float:
    return float(((a - a.mean()) * (b - b.mean())).sum() / (len(a) - 1))


def center_anchor(T: int) -> tuple[int, int]:
    c = int(math.floor(0.5 * T))
    return c, c


def window_sums(placements: Sequence[WindowPlacement], T: int, replicates: int, noise: NoiseModel, seed: int) -> np.ndarray:
    """``S_A / T`` for each placement and replicate, shape ``(replicates, k)``."""
    masks = [p.mask(T) for p in placements]
    valid_anchor_pixels(masks, T)  # raises if any window leaves the image
    out = np.empty((replicates, len(placements)))
    for r in range(replicates):
        y = generate_noise(noise, T, seed, r)
        for i, (p, m) in enumerate(zip(placements, masks)):
            idx1 = p.anchor[0] - 1 + m.offsets[:, 0]
            idx2 = p.anchor[1] - 1 + m.offsets[:, 1]
            if idx1.min() < 0 or idx2.min() < 0 or idx1.max() >= T or idx2.max() >= T:
                raise IndexError(f"window {p} leaves the {T}x{T} image")
            out[r, i] = y[idx1, idx2].sum() / T
    return out


def verify_clt(
    spec: WindowSpec,
    segment: Segment | None = None,
    angle: float = 0.0,
    T: int = 60,
    replicates: int = 1000,
    noise: NoiseModel | None = None,
    seed: int = 11,
) -> VerifyReport:
    """Moments of ``S_A(centre) / T`` against ``N(0, sigma^2 lambda(A))``."""
    noise = IIDGaussian(1.0) if noise is None else noise
    if replicates < 200:
        raise ValueError("verify_clt needs at least 200 replicates")
    if not noise.long_run_variance() > 0:
        raise ValueError("noise with zero long-run variance is excluded")
    place = WindowPlacement(spec, segment, angle, center_anchor(T))
    x = window_sums([place], T, replicates, noise, seed)[:, 0]
    target_var = noise.long_run_variance() * exact_area(spec, segment)
    sd = x.std(ddof=1)
    rep = VerifyReport("clt", replicates, params={"T": T, "noise": noise.describe(), "d": spec.d, "h": spec.h,
                                                   "segment": _seg_name(segment), "angle": angle, "seed": seed})
    rep.checks.append(Check.absolute("mean", x.mean(), 0.0, 4.0 * sd / math.sqrt(replicates)))
    rep.checks.append(Check.ratio("variance", sample_cov(x, x), target_var, 5.0 * math.sqrt(2.0 / replicates)))
    rep.checks.append(Check.absolute("skewness", sps.skew(x), 0.0, 0.3))
    rep.checks.append(Check.absolute("excess_kurtosis", sps.kurtosis(x), 0.0, 0.6))
    return rep


def area_intersection_estimate(a: Region, b: Region, resolution: int = 400) -> tuple[float, float]:
    """Grid-count estimate of ``lambda(A cap B)`` and a bound on its error.

    Counts cell midpoints of a ``resolution x resolution`` grid over the
    common bounding box.  The bound is ``sqrt(2) * L * (Pa + Pb) / R +
    4 L^2 / R^2`` with ``L`` the box side: every misclassified cell meets a
    boundary.
    """
    if resolution < 100:
        raise ValueError("resolution must be at least 100")
    lo1, hi1 = max(a.bbox[0], b.bbox[0]), min(a.bbox[1], b.bbox[1])
    lo2, hi2 = max(a.bbox[2], b.bbox[2]), min(a.bbox[3], b.bbox[3])
    if lo1 >= hi1 or lo2 >= hi2:
        return 0.0, 0.0
    side = max(hi1 - lo1, hi2 - lo2)
    R = int(resolution)
    t = (np.arange(R) + 0.5) / R * side
    x1 = lo1 + t[:, None]
    x2 = lo2 + t[None, :]
    inside = a.contains(x1, x2) & b.contains(x1, x2)
    area = inside.sum() / R**2 * side**2
    bound = math.sqrt(2.0) * side * (a.perimeter + b.perimeter) / R + 4.0 * side**2 / R**2
    return float(area), float(bound)


def verify_covariance(
    first: WindowPlacement,
    second: WindowPlacement,
    T: int = 60,
    replicates: int = 2000,
    noise: NoiseModel | None = None,
    seed: int = 12,
    resolution: int = 800,
) -> VerifyReport:
    """Sample covariance of two window sums against ``sigma^2 lambda(A cap B)``.

    Ratio tolerance ``5 sqrt(2 / n)`` when the target is positive, otherwise
    an absolute tolerance of three standard errors of the covariance.
    """
    noise = IIDGaussian(1.0) if noise is None else noise
    x = window_sums([first, second], T, replicates, noise, seed)
    inter, bound = area_intersection_estimate(first.region(T), second.region(T), resolution)
    sigma2 = noise.long_run_variance()
    target = sigma2 * inter
    cov = sample_cov(x[:, 0], x[:, 1])
    rep = VerifyReport(
        "covariance",
        replicates,
        params={
            "T": T,
            "noise": noise.describe(),
            "first": _placement_dict(first),
            "second": _placement_dict(second),
            "intersection_area": inter,
            "intersection_bound": bound,
            "seed": seed,
        },
    )
    if target > 0:
        rep.checks.append(Check.ratio("covariance", cov, target, 5.0 * math.sqrt(2.0 / replicates)))
    else:
        prod = (x[:, 0] - x[:, 0].mean()) * (x[:, 1] - x[:, 1].mean())
        se = prod.std(ddof=1) / math.sqrt(replicates)
        rep.checks.append(Check.absolute("covariance", cov, 0.0, 3.0 * se))
    return rep


def verify_normalization_equiv(
    spec: WindowSpec,
    segment: Segment | None = None,
    angle: float = 0.0,
    Ts: Sequence[int] = (50, 100, 200),
    replicates: int = 20,
    noise: NoiseModel | None = None,
    seed: int = 13,
    slack: float = 0.2,
) -> VerifyReport:
    """Uniform gap between count- and area-normalised window means.

    ``D(T)`` is the replicate average of ``max_j |Sbar_A(j) - S_A(j)/(T lambda(A))|``
    over valid anchors; it must not increase by more than ``slack`` from one
    resolution to the next.
    """
    noise = IIDGaussian(1.0) if noise is None else noise
    Ts = list(Ts)
    if any(b <= a for a, b in zip(Ts, Ts[1:])):
        raise ValueError("resolutions must be increasing")
    lam = exact_area(spec, segment)
    D = []
    for T in Ts:
        mask = build_offset_mask(spec, segment, angle, T)
        anchors = valid_anchor_pixels([build_offset_mask(spec, None, angle, T), mask], T)
        gaps = np.empty(replicates)
        for r in range(replicates):
            y = generate_noise(noise, T, seed, r)
            sbar = _grid_means(y, mask, anchors)
            s = sbar * (mask.count / T)
            gaps[r] = np.max(np.abs(sbar - s / (T * lam)))
        D.append(float(gaps.mean()))
    rep = VerifyReport("normalization", replicates, params={"Ts": Ts, "D": D, "D_times_T": [d * t for d, t in zip(D, Ts)],
                                                           "noise": noise.describe(), "seed": seed})
    for (t0, d0), (t1, d1) in zip(zip(Ts, D), zip(Ts[1:], D[1:])):
        rep.checks.append(Check("D(%d)<=D(%d)" % (t1, t0), d1, d0, slack, "nonincreasing", bool(d1 <= (1.0 + slack) * d0)))
    return rep


def count_area_errors(spec: WindowSpec, segment: Segment | None, angle: float, Ts: Sequence[int]) -> list[float]:
    """``|count(T)/T^2 - lambda(A)| * T`` for every resolution."""
    lam = exact_area(spec, segment)
    return [abs(build_offset_mask(spec, segment, angle, T).count / T**2 - lam) * T for T in Ts]


def grid_count_check(spec: WindowSpec, segment: Segment | None, angle: float, Ts: Sequence[int] = (50, 100, 200, 400)) -> VerifyReport:
    """``|count(T)/T^2 - lambda(A)| * T`` against ``C = 4 L + 4 / min(T)``.

    At most ``4 (L T + 1)`` grid cells of side ``1/T`` meet a boundary of
    length ``L``, and only those cells can be miscounted.
    """
    errs = count_area_errors(spec, segment, angle, Ts)
    C = 4.0 * boundary_length(spec, segment) + 4.0 / min(Ts)
    rep = VerifyReport("grid_count", 0, params={"Ts": list(Ts), "scaled_errors": errs, "C": C, "d": spec.d, "h": spec.h,
                                                "segment": _seg_name(segment), "angle": angle})
    for T, e in zip(Ts, errs):
        rep.checks.append(Check.absolute(f"T={T}", e, 0.0, C))
    return rep


def verify_area_convergence(
    shapes: Sequence[tuple[Region, Region, float]],
    resolutions: Sequence[int] = (100, 200, 400, 800, 1600),
    min_factor: float = 1.8,
) -> VerifyReport:
    """Rate of :func:`area_intersection_estimate` against exact intersection areas.

    The error is averaged over the shapes at each resolution; the check is on
    the geometric-mean shrink factor per doubling of ``R`` across the ladder,
    since single midpoint-grid errors fluctuate by orders of magnitude.
    """
    Rs = list(resolutions)
    if any(b != 2 * a for a, b in zip(Rs, Rs[1:])):
        raise ValueError("resolutions must double")
    errs = np.array([[abs(area_intersection_estimate(a, b, R)[0] - exact) for R in Rs] for a, b, exact in shapes])
    mean = errs.mean(axis=0)
    factor = float((mean[0] / mean[-1]) ** (1.0 / (len(Rs) - 1))) if mean[-1] > 0 else math.inf
    rep = VerifyReport("area_convergence", 0, params={"resolutions": Rs, "mean_errors": mean.tolist(),
                                                     "shapes": len(shapes)})
    rep.checks.append(Check("shrink_per_doubling", factor, min_factor, 0.0, "at_least", bool(factor >= min_factor)))
    return rep


def lens_area(r: float, dist: float) -> float:
    """Area of the intersection of two disks of radius ``r`` at centre distance ``dist``."""
    if dist >= 2 * r:
        return 0.0
    return 2 * r * r * math.acos(dist / (2 * r)) - dist / 2 * math.sqrt(4 * r * r - dist * dist)


def standard_shapes(spec: WindowSpec | None = None) -> list[tuple[Region, Region, float]]:
    """Five region pairs with closed-form intersection areas."""
    spec = WindowSpec(0.2, 0.04) if spec is None else spec
    r, c = spec.radius, (0.5, 0.5)
    disk = Region.segment(spec, None, 0.0, c)
    return [
        (disk, disk, math.pi * r * r),
        (disk, Region.segment(spec, None, 0.0, (0.5 + r / 2, 0.5)), lens_area(r, r / 2)),
        (Region.segment(spec, Segment.INNER, 0.3, c), Region.segment(spec, Segment.HALF_POS, 0.3, c),
         exact_area(spec, Segment.INNER) / 2),
        (Region.segment(spec, Segment.UPPER, 1.0, c), Region.segment(spec, Segment.HALF_POS, 1.0, c),
         exact_area(spec, Segment.UPPER)),
        (disk, Region.segment(spec, None, 0.0, (0.5, 0.5 + 1.3 * r)), lens_area(r, 1.3 * r)),
    ]


def default_suite(seed: int = 0, quick: bool = False) -> list[VerifyReport]:
    """The desk-scale verification battery run by the ``verify`` command."""
    reps_clt = 300 if quick else 1000
    reps_cov = 400 if quick else 2000
    T = 60
    disk = WindowSpec(0.3, 0.1)
    c = center_anchor(T)
    reports = [
        verify_clt(disk, None, 0.0, T, reps_clt, IIDGaussian(1.0), seed + 1),
        verify_clt(disk, None, 0.0, T, reps_clt, MovingAverage.box(1), seed + 2),
    ]
    shift = int(round(0.05 * T))
    pairs = [
        (WindowPlacement(disk, None, 0.0, c), WindowPlacement(disk, None, 0.0, c)),
        (WindowPlacement(disk, None, 0.0, c), WindowPlacement(disk, None, 0.0, (c[0] + shift, c[1]))),
        (WindowPlacement(disk, Segment.INNER, math.pi / 6, c), WindowPlacement(disk, Segment.HALF_POS, math.pi / 6, c)),
    ]
    for i, (a, b) in enumerate(pairs):
        reports.append(verify_covariance(a, b, T, reps_cov, IIDGaussian(1.0), seed + 10 + i))
    reports.append(verify_normalization_equiv(WindowSpec(0.3, 0.1), None, 0.0, (50, 100, 200), 10 if quick else 20,
                                              IIDGaussian(1.0), seed + 20))
    reports.append(verify_area_convergence(standard_shapes()))
    return reports


def _seg_name(seg):
    return "DISK" if seg is None else Segment(seg).name


def _placement_dict(p: WindowPlacement) -> dict:
    return {"d": p.spec.d, "h": p.spec.h, "segment": _seg_name(p.segment), "angle": p.angle, "anchor": list(p.anchor)}

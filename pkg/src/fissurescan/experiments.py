"""Simulation studies: false positives, detection under angle misspecification,
power growth, and the two-stage fast scan.

Replicate ``r`` of every study uses noise stream ``(seed, r)`` and, when the
fissure orientation is random, orientation stream ``(seed, r, 1)``.  Cells of
one study therefore share their random numbers, which makes comparisons
across ``delta`` or the angle offset paired.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import binomtest

from .calibrate import ThresholdRecord, null_fields, sigma_tag
from .exceptions import ConfigError, DomainError
from .field import IIDGaussian, NoiseModel, generate_noise, replicate_rng
from .geometry import (
    AnchorRect,
    RectAnomaly,
    Segment,
    WindowSpec,
    build_offset_mask,
    exact_area,
    rect_pixel_mask,
)
from .stats import (
    StatConfig,
    _grid_means,
    angle_parts,
    combine_parts,
    resolve_sigma,
    scan_batch,
)

logger = logging.getLogger(__name__)


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class StudyTable:
    """Rows of a study; every row carries its parameters, rate and Wilson interval."""

    rows: list[dict] = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    @property
    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            cols.extend(c for c in row if c not in cols)
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _csv_cell(v) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.rows, indent=2, sort_keys=True)


def _csv_cell(v):
    if isinstance(v, (list, tuple)):
        return " ".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
    return v


def _rate_row(k: int, n: int, **params) -> dict:
    lo, hi = wilson_interval(k, n)
    return {**params, "detections": int(k), "replicates": int(n), "rate": k / n, "ci_low": lo, "ci_high": hi}


def check_threshold(config: StatConfig, threshold: ThresholdRecord, T: int) -> None:
    if (threshold.d, threshold.h, threshold.T) != (config.window.d, config.window.h, T):
        raise ConfigError(
            f"threshold calibrated for (d={threshold.d}, h={threshold.h}, T={threshold.T}) "
            f"cannot be used with (d={config.window.d}, h={config.window.h}, T={T})"
        )
    if threshold.stat_kind != config.kind:
        raise ConfigError(f"threshold is for {threshold.stat_kind}, statistic is {config.kind}")


# ---------------------------------------------------------------------------
# false positives


def fp_rate_study(
    config: StatConfig,
    threshold: ThresholdRecord | float,
    T: int = 100,
    replicates: int = 1000,
    noise: NoiseModel | None = None,
    seed: int = 1,
    batch_size: int = 100,
) -> dict:
    """Fraction of null images with at least one anchor at or above the threshold."""
    noise = IIDGaussian(1.0) if noise is None else noise
    if isinstance(threshold, ThresholdRecord):
        check_threshold(config, threshold, T)
        beta = threshold.beta
        calib = [math.degrees(a) for a in threshold.calibration_angles]
    else:
        beta, calib = float(threshold), []
    anchors = config.anchors(T)
    hits = 0
    for start in range(0, replicates, batch_size):
        reps = list(range(start, min(start + batch_size, replicates)))
        fields, sig, _ = null_fields(noise, T, seed, reps, config.sigma)
        vals = scan_batch(fields, config, sig, anchors)
        hits += int((vals.reshape(len(reps), -1).max(axis=1) >= beta).sum())
    return _rate_row(
        hits,
        replicates,
        stat=config.kind,
        d=config.window.d,
        h=config.window.h,
        T=T,
        n_angles=config.n_angles,
        angles_deg=[math.degrees(a) for a in config.angles],
        calibration_angles_deg=calib,
        beta=beta,
        noise=noise.describe(),
        sigma=sigma_tag(config.sigma),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# detection under misspecification


def window_touch_map(fissure: np.ndarray, window: WindowSpec, anchors: AnchorRect) -> np.ndarray:
    """True at anchors whose window pixel set meets the fissure pixel set."""
    disk = build_offset_mask(window, None, 0.0, fissure.shape[-1])
    return _grid_means(fissure.astype(float), disk, anchors) > 0


def fissure_angle(seed: int, replicate: int) -> float:
    return float(replicate_rng(seed, replicate, 1).uniform(0.0, math.pi))


@dataclass(frozen=True)
class DetectionScenario:
    T: int
    width: float
    delta: float
    offset_deg: float
    config: StatConfig
    threshold: ThresholdRecord | float
    replicates: int
    seed: int
    length: float = 0.5
    true_angle: float | None = None
    center: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if not 0.0 <= self.offset_deg <= 90.0:
            raise DomainError("angle offset must lie in [0, 90] degrees")
        if self.replicates < 1:
            raise DomainError("at least one replicate is required")


def detection_rate_study(
    window: WindowSpec,
    threshold: ThresholdRecord | float,
    T: int = 100,
    widths: Sequence[float] = (0.02,),
    deltas: Sequence[float] = (1.5,),
    offsets_deg: Sequence[float] = (0, 5, 10, 15, 20, 25),
    replicates: int = 300,
    seed: int = 2,
    length: float = 0.5,
    kind: str = "fnb1",
    sigma="silverman",
    true_angle: float | None = None,
    center=(0.5, 0.5),
    noise: NoiseModel | None = None,
    return_indicators: bool = False,
):
    """Detection rates over a ``(width, delta, offset)`` grid.

    The statistic uses one angle, the fissure angle plus the offset.  A
    replicate counts as a detection when some significant anchor's window
    pixel set intersects the fissure pixel set.  With ``true_angle=None`` the
    fissure orientation is drawn uniformly on [0, pi) per replicate.
    """
    noise = IIDGaussian(1.0) if noise is None else noise
    if isinstance(threshold, ThresholdRecord):
        check_threshold(StatConfig(kind, window, (0.0,), sigma), threshold, T)
        beta = threshold.beta
    else:
        beta = float(threshold)
    anchors = StatConfig(kind, window, (0.0,), sigma).anchors(T)
    offsets = [float(o) for o in offsets_deg]
    for o in offsets:
        if not 0.0 <= o <= 90.0:
            raise DomainError("angle offsets must lie in [0, 90] degrees")
    ind = {(w, dl, o): np.zeros(replicates, dtype=bool) for w in widths for dl in deltas for o in offsets}
    clipped = False
    for r in range(replicates):
        eps = generate_noise(noise, T, seed, r)
        theta = fissure_angle(seed, r) if true_angle is None else float(true_angle)
        for w in widths:
            rect = RectAnomaly(tuple(center), length, w, theta)
            fmask = rect_pixel_mask(rect, T)
            touch = window_touch_map(fmask, window, anchors)
            for dl in deltas:
                y = eps - dl * fmask
                sig = float(resolve_sigma(y, sigma))
                for o in offsets:
                    a = (theta + math.radians(o)) % math.pi
                    cfg = StatConfig(kind, window, (a,), sigma)
                    vals = scan_batch(y, cfg, sig, anchors)
                    ind[(w, dl, o)][r] = bool(np.any((vals >= beta) & touch))
    table = StudyTable()
    for (w, dl, o), hits in ind.items():
        table.append(
            _rate_row(
                int(hits.sum()),
                replicates,
                stat=kind,
                d=window.d,
                h=window.h,
                T=T,
                width=w,
                delta=dl,
                offset_deg=o,
                length=length,
                true_angle_deg="random" if true_angle is None else math.degrees(true_angle),
                beta=beta,
                sigma=sigma_tag(sigma),
                seed=seed,
            )
        )
    if return_indicators:
        return table, ind
    return table


def min_angles_for_target(table: Iterable[dict], target: float = 0.75) -> dict:
    """Largest studied offset with rate >= target, and the angle count it implies.

    Returns ``{(width, delta): (delta_max, P)}`` with ``P = ceil(90 / delta_max)``;
    cells where no offset qualifies map to ``None``.  A qualifying offset of 0
    gives ``P = None`` (no finite equidistant grid guarantees it).
    """
    best: dict = {}
    for row in table:
        key = (row["width"], row["delta"])
        best.setdefault(key, None)
        if row["rate"] >= target:
            cur = best[key]
            if cur is None or row["offset_deg"] > cur:
                best[key] = row["offset_deg"]
    return {k: (None if v is None else (v, angles_needed(v))) for k, v in best.items()}


def angles_needed(delta_max_deg: float) -> int | None:
    if delta_max_deg <= 0:
        return None
    return int(math.ceil(90.0 / delta_max_deg - 1e-12))


# ---------------------------------------------------------------------------
# power growth at the fissure centre


def power_study(
    window: WindowSpec,
    T: int = 100,
    length: float = 0.1,
    width: float = 0.01,
    deltas: Sequence[float] = (0.0, 0.25, 0.5, 1.0),
    replicates: int = 200,
    seed: int = 3,
    true_angle: float | None = None,
    sigma: float = 1.0,
    center=(0.5, 0.5),
    noise: NoiseModel | None = None,
) -> dict:
    """F1, nB and FnB1 at the fissure centre with the correctly specified angle.

    Returns per-delta medians together with the continuum slope
    ``lambda(INNER & F) / lambda(INNER)`` and the per-replicate lattice ratios
    ``|INNER & F| / |INNER|`` actually realised on the pixel grid.
    """
    noise = IIDGaussian(1.0) if noise is None else noise
    if width >= window.h or length < window.d:
        warnings.warn("power prediction assumes length >= d and width < h", stacklevel=2)
    anchor = (int(math.floor(center[0] * T + 1e-9)), int(math.floor(center[1] * T + 1e-9)))
    pts = (np.array([anchor[0]]), np.array([anchor[1]]))
    f1 = np.empty((len(deltas), replicates))
    nb = np.empty_like(f1)
    lattice = np.empty(replicates)
    for r in range(replicates):
        eps = generate_noise(noise, T, seed, r)
        theta = fissure_angle(seed, r) if true_angle is None else float(true_angle)
        fmask = rect_pixel_mask(RectAnomaly(tuple(center), length, width, theta), T)
        inner = build_offset_mask(window, Segment.INNER, theta, T)
        hit = fmask[anchor[0] + inner.offsets[:, 0] - 1, anchor[1] + inner.offsets[:, 1] - 1]
        lattice[r] = hit.sum() / inner.count
        for i, dl in enumerate(deltas):
            y = eps - dl * fmask
            f, n = angle_parts(y, window, (theta,), points=pts)
            f1[i, r] = f[0] / sigma
            nb[i, r] = n[0] / sigma
    slope = exact_area(WindowSpec(window.d, width), Segment.INNER) / exact_area(window, Segment.INNER)
    fnb1 = np.maximum(f1 - nb, 0.0)
    return {
        "deltas": list(map(float, deltas)),
        "median_f1": np.median(f1, axis=1).tolist(),
        "median_nb": np.median(nb, axis=1).tolist(),
        "median_fnb1": np.median(fnb1, axis=1).tolist(),
        "continuum_slope": slope,
        "lattice_ratio_mean": float(lattice.mean()),
        "T": T,
        "anchor": anchor,
        "replicates": replicates,
        "f1": f1,
        "nb": nb,
    }


# ---------------------------------------------------------------------------
# two-stage fast scan


@dataclass
class FastScanResult:
    mask: np.ndarray
    candidates: int
    stage1_survivors: int
    stage2_survivors: int
    final: int
    evaluations: int
    full_evaluations: int
    sigma: float
    stage_values: dict = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {
            "candidates": self.candidates,
            "stage1_survivors": self.stage1_survivors,
            "stage2_survivors": self.stage2_survivors,
            "final": self.final,
            "evaluations": self.evaluations,
            "full_evaluations": self.full_evaluations,
            "evaluation_fraction": self.evaluations / self.full_evaluations,
            "sigma": self.sigma,
        }


def fast_scan(
    field: np.ndarray,
    window: WindowSpec,
    angles_stage1: Sequence[float],
    angles_stage2: Sequence[float],
    darkness_quantile: float,
    beta_liberal: float,
    beta_conservative: float,
    sigma="silverman",
) -> FastScanResult:
    """Significance mask of FnB1 evaluated only where it can matter.

    Stage 0 keeps anchors whose own gray value is at most the
    ``darkness_quantile`` quantile of the image (none for 0).  Stage 1 keeps
    candidates with F1 over ``angles_stage1`` at least ``beta_liberal``;
    stage 2 those with F1 over ``angles_stage2`` at least
    ``beta_conservative``; stage 3 those with FnB1 over ``angles_stage2`` at
    least ``beta_conservative``.  One evaluation is one (anchor, angle) pair
    of one contrast family (F or nB); F values at angles shared by both
    stages are computed once.  A full FnB1 scan costs
    ``2 * anchors * len(angles_stage2)``.
    """
    field = np.asarray(field, dtype=float)
    T = field.shape[0]
    if not 0.0 <= darkness_quantile <= 1.0:
        raise DomainError("darkness quantile must lie in [0, 1]")
    a1 = StatConfig("f1", window, tuple(angles_stage1), sigma).angles
    a2 = StatConfig("fnb1", window, tuple(angles_stage2), sigma).angles
    anchors = StatConfig("fnb1", window, tuple(sorted(set(a1) | set(a2))), sigma).anchors(T)
    anchors = _intersect(anchors, StatConfig("fnb1", window, a2, sigma).anchors(T))
    sig = float(resolve_sigma(field, sigma))
    if not sig > 0:
        raise DomainError("sigma estimate is degenerate")
    full = 2 * anchors.size * len(a2)

    sl = anchors.slices
    gray = field[sl]
    if darkness_quantile == 0.0:
        cand = np.zeros(gray.shape, dtype=bool)
    else:
        cand = gray <= np.quantile(field, darkness_quantile)
    i1, i2 = np.nonzero(cand)
    p1, p2 = i1 + anchors.lo1, i2 + anchors.lo2
    mask = np.zeros((T, T), dtype=bool)
    evals = 0
    counts = [len(p1), 0, 0, 0]
    values = {}
    if len(p1) == 0:
        warnings.warn("fast_scan: no candidate anchors", stacklevel=2)
    else:
        # per-angle F values; stage 2 reuses the stage-1 angles it shares
        per_angle = {}
        for a in a1:
            per_angle[a], _ = angle_parts(field, window, (a,), need_nb=False, points=(p1, p2))
            evals += len(p1)
        f = np.max([per_angle[a] for a in a1], axis=0)
        keep = f / sig >= beta_liberal
        p1, p2 = p1[keep], p2[keep]
        per_angle = {a: v[keep] for a, v in per_angle.items()}
        counts[1] = len(p1)
        if len(p1):
            for a in a2:
                if a not in per_angle:
                    per_angle[a], _ = angle_parts(field, window, (a,), need_nb=False, points=(p1, p2))
                    evals += len(p1)
            f = np.max([per_angle[a] for a in a2], axis=0)
            keep = f / sig >= beta_conservative
            p1, p2, f = p1[keep], p2[keep], f[keep]
            counts[2] = len(p1)
        if counts[2]:
            _, nb = angle_parts(field, window, a2, need_f=False, points=(p1, p2))
            evals += len(p1) * len(a2)
            fnb = combine_parts("fnb1", f, nb, sig)
            keep = fnb >= beta_conservative
            values = {"fnb1": fnb[keep], "points": (p1[keep], p2[keep])}
            mask[p1[keep] - 1, p2[keep] - 1] = True
            counts[3] = int(keep.sum())
    return FastScanResult(mask, counts[0], counts[1], counts[2], counts[3], evals, full, sig, values)


def _intersect(a: AnchorRect, b: AnchorRect) -> AnchorRect:
    return AnchorRect(max(a.lo1, b.lo1), min(a.hi1, b.hi1), max(a.lo2, b.lo2), min(a.hi2, b.hi2))

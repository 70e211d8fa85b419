"""Local means, window contrasts and the five fissure scan statistics.

Scaled means use the actual pixel count of each segment::

    mean_A(j) = (T / |A|) * sum_{o in A} Y[j + o]

and the statistics at an anchor are, with ``c12 = mean_UPPER - mean_INNER``,
``c13 = mean_LOWER - mean_INNER`` and ``c45 = mean_HALF_POS - mean_HALF_NEG``::

    F1   = max_a min(c12, c13) / sigma
    F2   = max_a min(|c12|, |c13|) / sigma
    NB   = max_a |c45| / sigma
    FNB1 = max(F1 - NB, 0)
    FNB2 = max(F2 - NB, 0)

The vectorised engine (:func:`scan_batch`) and the per-anchor functions
(:func:`local_sum`, :func:`stat_at`) add offsets in the same order, so they
agree bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .exceptions import DegenerateWindowError, DomainError
from .geometry import AnchorRect, OffsetMask, Segment, WindowSpec, build_offset_mask, check_angle, valid_anchor_pixels

KINDS = ("f1", "f2", "nb", "fnb1", "fnb2")

# Phi^{-1}(0.75); the IQR of N(0,1) is twice this.
NORMAL_Q75 = 0.674489750196082
NORMAL_IQR = 2.0 * NORMAL_Q75

_F_SEGMENTS = (Segment.INNER, Segment.UPPER, Segment.LOWER)
_NB_SEGMENTS = (Segment.HALF_POS, Segment.HALF_NEG)


def _needs(kind: str) -> tuple[bool, bool]:
    """(needs F-part, needs nB-part)."""
    return kind != "nb", kind in ("nb", "fnb1", "fnb2")


@dataclass(frozen=True)
class StatConfig:
    """Which statistic to compute, on which window, over which angles.

    ``sigma`` is either the string ``"silverman"`` (global robust estimate per
    image) or a known positive long-run standard deviation.
    """

    kind: str
    window: WindowSpec
    angles: tuple[float, ...] = (0.0,)
    sigma: float | str = "silverman"

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in KINDS:
            raise DomainError(f"unknown statistic {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        angles = tuple(check_angle(a) for a in self.angles)
        if not angles:
            raise DomainError("at least one angle is required")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise DomainError("angles must be strictly increasing")
        object.__setattr__(self, "angles", angles)
        if isinstance(self.sigma, str):
            if self.sigma != "silverman":
                raise DomainError(f"unknown sigma source {self.sigma!r}")
        elif not self.sigma > 0:
            raise DomainError("a known sigma must be positive")

    @classmethod
    def equidistant(cls, kind: str, window: WindowSpec, n_angles: int, sigma="silverman") -> "StatConfig":
        return cls(kind, window, equidistant_angles(n_angles), sigma)

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    def with_angles(self, angles) -> "StatConfig":
        return StatConfig(self.kind, self.window, tuple(angles), self.sigma)

    def with_kind(self, kind: str) -> "StatConfig":
        return StatConfig(kind, self.window, self.angles, self.sigma)

    def masks(self, T: int) -> dict[float, dict[Segment, OffsetMask]]:
        need_f, need_nb = _needs(self.kind)
        segs = (_F_SEGMENTS if need_f else ()) + (_NB_SEGMENTS if need_nb else ())
        return {a: {s: build_offset_mask(self.window, s, a, T) for s in segs} for a in self.angles}

    def anchors(self, T: int) -> AnchorRect:
        return valid_anchor_pixels(
            (build_offset_mask(self.window, s, a, T) for a in self.angles for s in Segment), T
        )


def equidistant_angles(n: int) -> tuple[float, ...]:
    """``n`` angles ``k*pi/n``, ``k = 0..n-1``."""
    if n < 1:
        raise DomainError("number of angles must be at least 1")
    return tuple(k * math.pi / n for k in range(n))


@dataclass(frozen=True)
class SigmaEstimate:
    value: float
    method: str
    n: int
    degenerate: bool = False


@dataclass
class HeatMap:
    """Statistic values on a ``T x T`` grid; NaN outside the valid anchors."""

    values: np.ndarray
    anchors: AnchorRect
    kind: str = ""

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def anchor_values(self) -> np.ndarray:
        return self.values[self.anchors.slices]

    def max(self) -> float:
        return float(self.anchor_values.max())

    def argmax(self) -> tuple[int, int]:
        """1-based pixel of the maximum."""
        a = self.anchor_values
        i, j = np.unravel_index(int(np.argmax(a)), a.shape)
        return int(i) + self.anchors.lo1, int(j) + self.anchors.lo2


# ---------------------------------------------------------------------------
# per-anchor reference operations


def _check_anchor(field: np.ndarray, mask: OffsetMask, anchor) -> tuple[int, int]:
    T1, T2 = field.shape
    j1, j2 = int(anchor[0]), int(anchor[1])
    a1, b1, a2, b2 = mask.extent
    if j1 + a1 < 1 or j1 + b1 > T1 or j2 + a2 < 1 or j2 + b2 > T2:
        raise IndexError(f"anchor {anchor} puts the window outside the {T1}x{T2} field")
    return j1, j2


def local_sum(field: np.ndarray, mask: OffsetMask, anchor) -> float:
    """Sum of ``field`` over the segment placed at the 1-based pixel ``anchor``."""
    j1, j2 = _check_anchor(field, mask, anchor)
    s = 0.0
    for o1, o2 in mask.offsets:
        s += field[j1 + o1 - 1, j2 + o2 - 1]
    return float(s)


def local_mean_scaled(field: np.ndarray, mask: OffsetMask, anchor, T: int | None = None) -> float:
    if mask.count == 0:
        raise DegenerateWindowError("empty mask")
    T = mask.T if T is None else T
    return (T / mask.count) * local_sum(field, mask, anchor)


def contrasts(field: np.ndarray, config: StatConfig, anchor, alpha: float) -> tuple[float, float, float]:
    """``(c12, c13, c45)`` at one anchor and angle."""
    T = field.shape[0]
    m = {s: local_mean_scaled(field, build_offset_mask(config.window, s, alpha, T), anchor, T) for s in Segment}
    return (
        m[Segment.UPPER] - m[Segment.INNER],
        m[Segment.LOWER] - m[Segment.INNER],
        m[Segment.HALF_POS] - m[Segment.HALF_NEG],
    )


def _combine(kind: str, f: float, nb: float) -> float:
    if kind in ("f1", "f2"):
        return f
    if kind == "nb":
        return nb
    return max(f - nb, 0.0)


def stat_at(field: np.ndarray, config: StatConfig, sigma: float, anchor) -> float:
    """Statistic ``config.kind`` at one anchor, by direct enumeration."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    field = np.asarray(field, dtype=float)
    f_vals, nb_vals = [], []
    for a in config.angles:
        c12, c13, c45 = contrasts(field, config, anchor, a)
        if config.kind in ("f2", "fnb2"):
            f_vals.append(min(abs(c12), abs(c13)))
        else:
            f_vals.append(min(c12, c13))
        nb_vals.append(abs(c45))
    f = max(f_vals) / sigma
    nb = max(nb_vals) / sigma
    return _combine(config.kind, f, nb)


# ---------------------------------------------------------------------------
# vectorised engine


def _grid_means(fields: np.ndarray, mask: OffsetMask, anchors: AnchorRect) -> np.ndarray:
    n1, n2 = anchors.shape
    b1, b2 = anchors.lo1 - 1, anchors.lo2 - 1
    acc = np.zeros(fields.shape[:-2] + (n1, n2))
    for o1, o2 in mask.offsets:
        acc += fields[..., b1 + o1 : b1 + o1 + n1, b2 + o2 : b2 + o2 + n2]
    return (mask.T / mask.count) * acc


def _point_means(fields: np.ndarray, mask: OffsetMask, idx1: np.ndarray, idx2: np.ndarray) -> np.ndarray:
    acc = np.zeros(fields.shape[:-2] + idx1.shape)
    for o1, o2 in mask.offsets:
        acc += fields[..., idx1 + o1, idx2 + o2]
    return (mask.T / mask.count) * acc


def angle_parts(
    fields: np.ndarray,
    window: WindowSpec,
    angles: Sequence[float],
    *,
    two_sided: bool = False,
    need_f: bool = True,
    need_nb: bool = True,
    anchors: AnchorRect | None = None,
    points: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Un-normalised F- and nB-parts maximised over ``angles``.

    ``fields`` has shape ``(..., T, T)``.  Evaluation happens either on the
    anchor rectangle ``anchors`` or at the 1-based pixel coordinates
    ``points``; exactly one must be given.
    """
    T = fields.shape[-1]
    if points is not None:
        idx1 = np.asarray(points[0], dtype=np.int64) - 1
        idx2 = np.asarray(points[1], dtype=np.int64) - 1

        def means(mask):
            return _point_means(fields, mask, idx1, idx2)

    else:

        def means(mask):
            return _grid_means(fields, mask, anchors)

    f = nb = None
    for a in angles:
        if need_f:
            m1 = means(build_offset_mask(window, Segment.INNER, a, T))
            c12 = means(build_offset_mask(window, Segment.UPPER, a, T)) - m1
            c13 = means(build_offset_mask(window, Segment.LOWER, a, T)) - m1
            fa = np.minimum(np.abs(c12), np.abs(c13)) if two_sided else np.minimum(c12, c13)
            f = fa if f is None else np.maximum(f, fa)
        if need_nb:
            c45 = means(build_offset_mask(window, Segment.HALF_POS, a, T)) - means(
                build_offset_mask(window, Segment.HALF_NEG, a, T)
            )
            nba = np.abs(c45)
            nb = nba if nb is None else np.maximum(nb, nba)
    return f, nb


def combine_parts(kind: str, f, nb, sigma):
    """Normalise by ``sigma`` (broadcast over leading axes) and combine."""
    sigma = np.asarray(sigma, dtype=float)
    s = sigma.reshape(sigma.shape + (1,) * ((f if f is not None else nb).ndim - sigma.ndim))
    if kind in ("f1", "f2"):
        return f / s
    if kind == "nb":
        return nb / s
    return np.maximum(f / s - nb / s, 0.0)


def scan_batch(fields: np.ndarray, config: StatConfig, sigma, anchors: AnchorRect | None = None) -> np.ndarray:
    """Statistic values on the valid anchors for a stack of fields.

    ``sigma`` is a scalar or one value per field.  Returns an array of shape
    ``fields.shape[:-2] + anchors.shape``.
    """
    fields = np.asarray(fields, dtype=float)
    T = fields.shape[-1]
    anchors = config.anchors(T) if anchors is None else anchors
    need_f, need_nb = _needs(config.kind)
    f, nb = angle_parts(
        fields,
        config.window,
        config.angles,
        two_sided=config.kind in ("f2", "fnb2"),
        need_f=need_f,
        need_nb=need_nb,
        anchors=anchors,
    )
    return combine_parts(config.kind, f, nb, sigma)


def scan_points(field: np.ndarray, config: StatConfig, sigma: float, points) -> np.ndarray:
    """Statistic values at selected 1-based anchor pixels ``(idx1, idx2)``."""
    need_f, need_nb = _needs(config.kind)
    f, nb = angle_parts(
        np.asarray(field, dtype=float),
        config.window,
        config.angles,
        two_sided=config.kind in ("f2", "fnb2"),
        need_f=need_f,
        need_nb=need_nb,
        points=points,
    )
    return combine_parts(config.kind, f, nb, sigma)


def resolve_sigma(fields: np.ndarray, sigma) -> np.ndarray:
    """Per-field sigma: the known value, or Silverman's estimate of each field."""
    fields = np.asarray(fields, dtype=float)
    lead = fields.shape[:-2]
    if isinstance(sigma, str):
        return silverman_values(fields)
    return np.full(lead, float(sigma))


def heatmap(field: np.ndarray, config: StatConfig, sigma: float | None = None) -> HeatMap:
    """Evaluate the statistic at every valid anchor of a single field."""
    field = np.asarray(field, dtype=float)
    T = field.shape[0]
    if sigma is None:
        sigma = float(resolve_sigma(field, config.sigma))
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    anchors = config.anchors(T)
    values = np.full((T, T), np.nan)
    values[anchors.slices] = scan_batch(field, config, sigma, anchors)
    return HeatMap(values, anchors, config.kind)


def significance_mask(hm: HeatMap, beta: float) -> np.ndarray:
    """Anchors whose statistic is at least ``beta``; False off the anchors."""
    out = np.zeros(hm.values.shape, dtype=bool)
    out[hm.anchors.slices] = hm.anchor_values >= beta
    return out


# ---------------------------------------------------------------------------
# robust scale


def silverman_values(fields: np.ndarray) -> np.ndarray:
    """IQR / (2 * Phi^{-1}(0.75)) of every ``T x T`` field in a stack."""
    fields = np.asarray(fields, dtype=float)
    flat = fields.reshape(fields.shape[:-2] + (-1,))
    q25, q75 = np.quantile(flat, [0.25, 0.75], axis=-1)
    return (q75 - q25) / NORMAL_IQR


def silverman_sigma(field: np.ndarray) -> SigmaEstimate:
    field = np.asarray(field, dtype=float)
    if field.size < 4:
        raise DomainError("Silverman's estimator needs at least four pixels")
    value = float(silverman_values(field))
    return SigmaEstimate(value, "silverman-global", int(field.size), degenerate=not value > 0)


def silverman_limit(dist: str, **params) -> float:
    """Population value of Silverman's estimator for a marginal law.

    ``dist`` is one of ``normal`` (``sd``), ``t`` (``df``), ``exp``
    (``rate``) or ``gamma`` (``shape``, ``rate``).
    """
    dist = dist.lower()
    if dist == "normal":
        law = sps.norm(scale=params.get("sd", 1.0))
    elif dist == "t":
        law = sps.t(params["df"])
    elif dist == "exp":
        law = sps.expon(scale=1.0 / params.get("rate", 1.0))
    elif dist == "gamma":
        law = sps.gamma(params["shape"], scale=1.0 / params["rate"])
    else:
        raise DomainError(f"unsupported distribution {dist!r}")
    return float((law.ppf(0.75) - law.ppf(0.25)) / NORMAL_IQR)

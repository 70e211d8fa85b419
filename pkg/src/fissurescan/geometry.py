"""Scan-window segments, rectangular anomalies and their pixel rasterisation.

A scan window is a disk of diameter ``d`` split by a strip of width ``h``
whose axis points in direction ``alpha`` (counter-clockwise from the first
coordinate axis).  With ``u = -x1*sin(alpha) + x2*cos(alpha)`` the signed
distance of ``x`` to the strip axis, the five segments are::

    INNER     |u| <= h/2
    UPPER      u  >  h/2
    LOWER      u  < -h/2
    HALF_POS   u  >  0
    HALF_NEG   u  <  0

all intersected with the closed disk ``|x| <= d/2``.  The half-disks are open
along the axis, so the pixel sets of HALF_POS and HALF_NEG are point
reflections of each other at every angle.

Coordinates are rescaled: pixel ``k`` in ``{1..T}^2`` sits at ``k / T``.  The
first coordinate is array axis 0.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DegenerateWindowError, DomainError, WindowTooLargeError

# Boundary tolerance in rescaled units; lattice points that land on a segment
# boundary up to float rounding are resolved by the tie rules above.
EPS = 1e-12


class Segment(enum.IntEnum):
    INNER = 1
    UPPER = 2
    LOWER = 3
    HALF_POS = 4
    HALF_NEG = 5


@dataclass(frozen=True)
class WindowSpec:
    """Disk diameter ``d`` and inner-strip width ``h``, both rescaled."""

    d: float
    h: float

    def __post_init__(self):
        if not (0.0 < self.d):
            raise DomainError(f"window diameter must be positive, got d={self.d}")
        if self.d >= 1.0:
            raise WindowTooLargeError(f"window diameter d={self.d} does not fit in [0,1]^2")
        if not (0.0 < self.h < self.d):
            raise DomainError(f"strip width must satisfy 0 < h < d, got h={self.h}, d={self.d}")

    @property
    def radius(self) -> float:
        return self.d / 2.0


@dataclass(frozen=True)
class RectAnomaly:
    """Rectangle of length ``length`` along direction ``angle``, centred at ``center``."""

    center: tuple[float, float]
    length: float
    width: float
    angle: float = 0.0
    amplitude: float = 0.0

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise DomainError("rectangle length and width must be positive")
        if self.amplitude < 0:
            raise DomainError("anomaly amplitude must be non-negative")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.length + self.width)


def check_angle(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha < math.pi):
        raise DomainError(f"angle must lie in [0, pi), got {alpha}")
    return alpha


def _membership(spec: WindowSpec, seg: Segment | None, alpha: float, x1, x2):
    """Vectorised segment membership; ``seg=None`` is the whole disk."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = spec.radius
    inside = x1 * x1 + x2 * x2 <= r * r + EPS
    if seg is None:
        return inside
    u = -x1 * math.sin(alpha) + x2 * math.cos(alpha)
    c = spec.h / 2.0
    if seg is Segment.INNER:
        return inside & (np.abs(u) <= c + EPS)
    if seg is Segment.UPPER:
        return inside & (u > c + EPS)
    if seg is Segment.LOWER:
        return inside & (u < -(c + EPS))
    if seg is Segment.HALF_POS:
        return inside & (u > EPS)
    if seg is Segment.HALF_NEG:
        return inside & (u < -EPS)
    raise DomainError(f"unknown segment {seg!r}")


def segment_contains(spec: WindowSpec, seg: Segment | None, alpha: float, x) -> bool:
    """Whether the point ``x`` (relative to the window centre) lies in ``seg``."""
    alpha = check_angle(alpha)
    return bool(_membership(spec, None if seg is None else Segment(seg), alpha, x[0], x[1]))


def _rect_membership(rect: RectAnomaly, x1, x2):
    dx1 = np.asarray(x1, dtype=float) - rect.center[0]
    dx2 = np.asarray(x2, dtype=float) - rect.center[1]
    ca, sa = math.cos(rect.angle), math.sin(rect.angle)
    v = dx1 * ca + dx2 * sa
    u = -dx1 * sa + dx2 * ca
    return (np.abs(v) <= rect.length / 2.0 + EPS) & (np.abs(u) <= rect.width / 2.0 + EPS)


def rect_contains(rect: RectAnomaly, x) -> bool:
    return bool(_rect_membership(rect, x[0], x[1]))


def rect_pixel_mask(rect: RectAnomaly, T: int) -> np.ndarray:
    """Boolean ``T x T`` array marking pixels ``k`` with ``k/T`` inside ``rect``."""
    k = np.arange(1, T + 1) / T
    return _rect_membership(rect, k[:, None], k[None, :])


@dataclass(frozen=True, eq=False)
class OffsetMask:
    """Integer pixel offsets realising one segment at resolution ``T``.

    ``offsets`` is an ``(n, 2)`` read-only integer array in row-major
    (lexicographic) order; the order fixes the summation order of local sums.
    """

    segment: Segment | None
    angle: float
    T: int
    offsets: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.offsets.shape[0])

    @property
    def extent(self) -> tuple[int, int, int, int]:
        """(min o1, max o1, min o2, max o2)."""
        o = self.offsets
        return int(o[:, 0].min()), int(o[:, 0].max()), int(o[:, 1].min()), int(o[:, 1].max())

    def __eq__(self, other):
        if not isinstance(other, OffsetMask):
            return NotImplemented
        return (
            self.segment == other.segment
            and self.angle == other.angle
            and self.T == other.T
            and np.array_equal(self.offsets, other.offsets)
        )

    def __hash__(self):
        return hash((self.segment, self.angle, self.T, self.count))

    def to_text(self) -> str:
        name = "DISK" if self.segment is None else self.segment.name
        lines = [f"{name} {self.angle!r} {self.T} {self.count}"]
        lines.extend(f"{a} {b}" for a, b in self.offsets)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OffsetMask":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        name, angle, T, count = lines[0].split()
        seg = None if name == "DISK" else Segment[name]
        offsets = np.array([[int(v) for v in ln.split()] for ln in lines[1:]], dtype=np.int64)
        offsets = offsets.reshape(-1, 2)
        if offsets.shape[0] != int(count):
            raise ValueError(f"mask header announces {count} offsets, found {offsets.shape[0]}")
        offsets.setflags(write=False)
        return cls(seg, float(angle), int(T), offsets)


@functools.lru_cache(maxsize=512)
def _cached_offsets(d: float, h: float, seg: Segment | None, alpha: float, T: int) -> np.ndarray:
    spec = WindowSpec(d, h)
    R = int(math.ceil(spec.radius * T)) + 1
    o = np.arange(-R, R + 1)
    o1, o2 = np.meshgrid(o, o, indexing="ij")
    inside = _membership(spec, seg, alpha, o1 / T, o2 / T)
    offsets = np.column_stack([o1[inside], o2[inside]]).astype(np.int64)
    offsets.setflags(write=False)
    return offsets


def build_offset_mask(spec: WindowSpec, seg: Segment | None, alpha: float, T: int) -> OffsetMask:
    """Rasterise a segment: all ``o`` in Z^2 with ``o/T`` inside the segment."""
    alpha = check_angle(alpha)
    if T < 1:
        raise DomainError(f"resolution must be positive, got T={T}")
    seg = None if seg is None else Segment(seg)
    offsets = _cached_offsets(spec.d, spec.h, seg, alpha, int(T))
    if offsets.shape[0] == 0:
        raise DegenerateWindowError(
            f"segment {seg!r} at angle {alpha} is empty for d={spec.d}, h={spec.h}, T={T}"
        )
    return OffsetMask(seg, alpha, int(T), offsets)


def build_masks(spec: WindowSpec, angles: Sequence[float], T: int) -> dict[float, dict[Segment, OffsetMask]]:
    """All five segment masks for every angle."""
    return {a: {s: build_offset_mask(spec, s, a, T) for s in Segment} for a in angles}


def exact_area(spec: WindowSpec, seg: Segment | None) -> float:
    """Lebesgue measure of a segment (independent of the angle)."""
    r = spec.radius
    disk = math.pi * r * r
    if seg is None:
        return disk
    seg = Segment(seg)
    c = spec.h / 2.0
    inner = 2.0 * c * math.sqrt(r * r - c * c) + 2.0 * r * r * math.asin(c / r)
    if seg is Segment.INNER:
        return inner
    if seg in (Segment.UPPER, Segment.LOWER):
        return (disk - inner) / 2.0
    return disk / 2.0


def boundary_length(spec: WindowSpec, seg: Segment | None) -> float:
    """Perimeter of a segment, used for grid-count error bounds."""
    r = spec.radius
    if seg is None:
        return 2.0 * math.pi * r
    seg = Segment(seg)
    c = spec.h / 2.0
    chord = 2.0 * math.sqrt(r * r - c * c)
    theta = math.asin(c / r)
    if seg is Segment.INNER:
        return 2.0 * chord + 4.0 * r * theta
    if seg in (Segment.UPPER, Segment.LOWER):
        return chord + r * (math.pi - 2.0 * theta)
    return math.pi * r + 2.0 * r


@dataclass(frozen=True)
class AnchorRect:
    """Inclusive, 1-based pixel rectangle ``[lo1, hi1] x [lo2, hi2]``."""

    lo1: int
    hi1: int
    lo2: int
    hi2: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.hi1 - self.lo1 + 1, self.hi2 - self.lo2 + 1

    @property
    def size(self) -> int:
        n1, n2 = self.shape
        return n1 * n2

    @property
    def slices(self) -> tuple[slice, slice]:
        """Zero-based array slices selecting the anchors."""
        return slice(self.lo1 - 1, self.hi1), slice(self.lo2 - 1, self.hi2)

    def __contains__(self, j) -> bool:
        return self.lo1 <= j[0] <= self.hi1 and self.lo2 <= j[1] <= self.hi2

    def pixels(self) -> Iterable[tuple[int, int]]:
        for a in range(self.lo1, self.hi1 + 1):
            for b in range(self.lo2, self.hi2 + 1):
                yield a, b

    def to_dict(self) -> dict:
        return {"lo1": self.lo1, "hi1": self.hi1, "lo2": self.lo2, "hi2": self.hi2}


def valid_anchor_pixels(masks: Iterable[OffsetMask], T: int) -> AnchorRect:
    """Anchors ``j`` with ``1 <= j + o <= T`` for every offset of every mask."""
    lo1 = lo2 = 0
    hi1 = hi2 = 0
    any_mask = False
    for m in masks:
        any_mask = True
        a1, b1, a2, b2 = m.extent
        lo1, hi1 = min(lo1, a1), max(hi1, b1)
        lo2, hi2 = min(lo2, a2), max(hi2, b2)
    if not any_mask:
        raise DomainError("at least one mask is required")
    rect = AnchorRect(1 - lo1, T - hi1, 1 - lo2, T - hi2)
    if rect.lo1 > rect.hi1 or rect.lo2 > rect.hi2:
        raise WindowTooLargeError(f"window does not fit into a {T}x{T} image")
    return rect


def fattening_contains(spec: WindowSpec, seg: Segment | None, alpha: float, gamma: float, x) -> bool:
    """Whether ``x`` lies within sup-norm distance ``gamma`` of the segment.

    Decided by a dense search over the sup-norm ball around ``x`` at spacing
    ``gamma / 100``.
    """
    if gamma < 0:
        raise DomainError("fattening radius must be non-negative")
    alpha = check_angle(alpha)
    seg = None if seg is None else Segment(seg)
    if gamma == 0:
        return bool(_membership(spec, seg, alpha, x[0], x[1]))
    t = np.linspace(-gamma, gamma, 201)
    z1 = x[0] + t[:, None]
    z2 = x[1] + t[None, :]
    return bool(_membership(spec, seg, alpha, z1, z2).any())


@dataclass(frozen=True)
class Region:
    """A planar set with vectorised membership, bounding box and perimeter."""

    contains: object
    bbox: tuple[float, float, float, float]
    perimeter: float

    @classmethod
    def segment(cls, spec: WindowSpec, seg: Segment | None, alpha: float = 0.0, center=(0.0, 0.0)) -> "Region":
        alpha = check_angle(alpha)
        seg = None if seg is None else Segment(seg)
        c1, c2 = float(center[0]), float(center[1])
        r = spec.radius

        def contains(x1, x2):
            return _membership(spec, seg, alpha, np.asarray(x1) - c1, np.asarray(x2) - c2)

        return cls(contains, (c1 - r, c1 + r, c2 - r, c2 + r), boundary_length(spec, seg))

    @classmethod
    def rectangle(cls, rect: RectAnomaly) -> "Region":
        half = 0.5 * math.hypot(rect.length, rect.width)
        c1, c2 = rect.center
        return cls(
            lambda x1, x2: _rect_membership(rect, x1, x2),
            (c1 - half, c1 + half, c2 - half, c2 + half),
            rect.perimeter,
        )

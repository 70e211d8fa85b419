"""Monte-Carlo family-wise thresholds and their on-disk cache."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import CacheLoadError, DomainError
from .field import IIDGaussian, NoiseModel, generate_noise, replicate_rng
from .geometry import WindowSpec
from .stats import StatConfig, resolve_sigma, scan_batch

logger = logging.getLogger(__name__)

DEFAULT_BATCH = 100
MAX_RETRIES = 20


@dataclass(frozen=True)
class ThresholdRecord:
    beta: float
    stat_kind: str
    d: float
    h: float
    T: int
    calibration_angles: tuple[float, ...]
    level: float
    replicates: int
    seed: int
    noise_model: str
    sigma_source: str
    retries: int = 0

    def __post_init__(self):
        object.__setattr__(self, "calibration_angles", tuple(float(a) for a in self.calibration_angles))
        if not math.isfinite(self.beta):
            raise DomainError("threshold must be finite")
        if self.replicates < 1:
            raise DomainError("at least one replicate is required")

    @property
    def key(self) -> tuple:
        return cache_key(
            self.stat_kind,
            self.d,
            self.h,
            self.T,
            self.calibration_angles,
            self.level,
            self.noise_model,
            self.sigma_source,
            self.replicates,
            self.seed,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["calibration_angles"] = list(self.calibration_angles)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdRecord":
        return cls(**data)


def cache_key(stat_kind, d, h, T, calibration_angles, level, noise_model, sigma_source, replicates, seed) -> tuple:
    return (
        str(stat_kind).lower(),
        float(d),
        float(h),
        int(T),
        tuple(round(float(a), 12) for a in calibration_angles),
        float(level),
        str(noise_model),
        str(sigma_source),
        int(replicates),
        int(seed),
    )


def sigma_tag(sigma) -> str:
    return "silverman" if isinstance(sigma, str) else f"known:{float(sigma):g}"


def empirical_quantile(values, level: float) -> float:
    """Linear interpolation between order statistics at position ``level*(n-1)``."""
    return float(np.quantile(np.asarray(values, dtype=float), level))


@dataclass
class NullMaxima:
    """Per-replicate maxima of a statistic over null fields."""

    maxima: np.ndarray
    retries: int = 0
    retried: list = field(default_factory=list)


def null_fields(noise: NoiseModel, T: int, seed: int, replicates: Sequence[int], sigma) -> tuple[np.ndarray, np.ndarray, list]:
    """Draw null fields and their sigmas, redrawing fields with a degenerate estimate."""
    fields = np.empty((len(replicates), T, T))
    retried = []
    for i, r in enumerate(replicates):
        fields[i] = generate_noise(noise, T, seed, r)
    sig = resolve_sigma(fields, sigma)
    for i in np.flatnonzero(~(sig > 0)):
        r = replicates[i]
        for attempt in range(1, MAX_RETRIES + 1):
            fields[i] = noise.sample(replicate_rng(seed, r, attempt), T)
            sig[i] = resolve_sigma(fields[i], sigma)
            if sig[i] > 0:
                retried.append((int(r), attempt))
                break
        else:
            raise DomainError(f"replicate {r}: sigma estimate stays degenerate after {MAX_RETRIES} redraws")
    return fields, sig, retried


def null_maxima(
    config: StatConfig,
    T: int,
    replicates: int,
    noise: NoiseModel | None = None,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH,
    first_replicate: int = 0,
) -> NullMaxima:
    """Maximum over valid anchors of ``config``'s statistic on null fields."""
    noise = IIDGaussian(1.0) if noise is None else noise
    anchors = config.anchors(T)
    out = np.empty(replicates)
    retried = []
    for start in range(0, replicates, batch_size):
        reps = list(range(first_replicate + start, first_replicate + min(start + batch_size, replicates)))
        fields, sig, r = null_fields(noise, T, seed, reps, config.sigma)
        retried.extend(r)
        vals = scan_batch(fields, config, sig, anchors)
        out[start : start + len(reps)] = vals.reshape(len(reps), -1).max(axis=1)
    if retried:
        logger.warning("%d replicate(s) redrawn because of a degenerate sigma estimate", len(retried))
    return NullMaxima(out, len(retried), retried)


def calibrate_threshold(
    stat_kind: str,
    window: WindowSpec,
    calibration_angles: Sequence[float] = (0.0,),
    T: int = 100,
    level: float = 0.95,
    replicates: int = 2000,
    noise: NoiseModel | None = None,
    sigma="silverman",
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH,
) -> ThresholdRecord:
    """Empirical ``level``-quantile of the null maximum of the statistic."""
    if replicates < 1:
        raise DomainError("at least one replicate is required")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    noise = IIDGaussian(1.0) if noise is None else noise
    config = StatConfig(stat_kind, window, tuple(calibration_angles), sigma)
    res = null_maxima(config, T, replicates, noise, seed, batch_size)
    return ThresholdRecord(
        beta=empirical_quantile(res.maxima, level),
        stat_kind=config.kind,
        d=window.d,
        h=window.h,
        T=int(T),
        calibration_angles=config.angles,
        level=float(level),
        replicates=int(replicates),
        seed=int(seed),
        noise_model=noise.describe(),
        sigma_source=sigma_tag(sigma),
        retries=res.retries,
    )


class ThresholdCache:
    """JSON file holding an array of :class:`ThresholdRecord` objects.

    The file is the authoritative storage: hand edits are honoured.
    """

    def __init__(self, path):
        self.path = Path(path)

    def _load(self) -> list[dict]:
        if not self.path.exists():
            return []
        try:
            data = json.loads(self.path.read_text(encoding="utf-8"))
            if not isinstance(data, list):
                raise ValueError("top-level JSON value must be an array")
            return data
        except (ValueError, OSError) as exc:
            raise CacheLoadError(f"cannot read threshold cache {self.path}: {exc}") from exc

    def records(self) -> list[ThresholdRecord]:
        try:
            return [ThresholdRecord.from_dict(d) for d in self._load()]
        except (TypeError, DomainError) as exc:
            raise CacheLoadError(f"malformed record in threshold cache {self.path}: {exc}") from exc

    def get(self, key: tuple) -> ThresholdRecord | None:
        for rec in self.records():
            if rec.key == key:
                return rec
        return None

    def put(self, record: ThresholdRecord) -> None:
        recs = [r for r in self.records() if r.key != record.key]
        recs.append(record)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        tmp.write_text(json.dumps([r.to_dict() for r in recs], indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.path)

    def get_or_calibrate(self, **kwargs) -> ThresholdRecord:
        noise = kwargs.get("noise") or IIDGaussian(1.0)
        window = kwargs["window"]
        angles = StatConfig(kwargs["stat_kind"], window, tuple(kwargs.get("calibration_angles", (0.0,)))).angles
        key = cache_key(
            kwargs["stat_kind"],
            window.d,
            window.h,
            kwargs.get("T", 100),
            angles,
            kwargs.get("level", 0.95),
            noise.describe(),
            sigma_tag(kwargs.get("sigma", "silverman")),
            kwargs.get("replicates", 2000),
            kwargs.get("seed", 0),
        )
        rec = self.get(key)
        if rec is None:
            rec = calibrate_threshold(**kwargs)
            self.put(rec)
        return rec

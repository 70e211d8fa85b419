"""Synthetic gray-value fields: null noise models and rectangular fissures.

Every random draw goes through :func:`replicate_rng`, which derives an
independent Philox (counter-based) stream from ``(seed, replicate)``.  A
replicate's field therefore does not depend on which other replicates were
generated, in which order, or by which worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .exceptions import DomainError
from .geometry import RectAnomaly, rect_pixel_mask


def replicate_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class NoiseModel:
    """Base class of the stationary, centred noise models."""

    tag = "noise"

    def sample(self, rng: np.random.Generator, T: int) -> np.ndarray:
        raise NotImplementedError

    def long_run_variance(self) -> float:
        raise NotImplementedError

    def m_dependence_range(self) -> int:
        return 0

    def describe(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.describe()


@dataclass(frozen=True)
class IIDGaussian(NoiseModel):
    sd: float = 1.0

    def __post_init__(self):
        if not self.sd > 0:
            raise DomainError("Gaussian noise needs sd > 0")

    def sample(self, rng, T):
        return self.sd * rng.standard_normal((T, T))

    def long_run_variance(self):
        return self.sd**2

    def describe(self):
        return f"gauss:{self.sd:g}"


@dataclass(frozen=True)
class IIDStudentT(NoiseModel):
    df: float

    def __post_init__(self):
        if not self.df > 2:
            raise DomainError("Student-t noise needs df > 2 for a finite variance")

    def sample(self, rng, T):
        return rng.standard_t(self.df, size=(T, T))

    def long_run_variance(self):
        return self.df / (self.df - 2.0)

    def describe(self):
        return f"t:{self.df:g}"


@dataclass(frozen=True)
class IIDExponential(NoiseModel):
    """Exponential noise, centred by subtracting its mean ``1/rate``."""

    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("exponential noise needs rate > 0")

    def sample(self, rng, T):
        return rng.exponential(1.0 / self.rate, size=(T, T)) - 1.0 / self.rate

    def long_run_variance(self):
        return 1.0 / self.rate**2

    def describe(self):
        return f"exp:{self.rate:g}"


@dataclass(frozen=True)
class IIDGamma(NoiseModel):
    """Gamma(shape, rate) noise, centred by subtracting ``shape/rate``."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise DomainError("gamma noise needs shape > 0 and rate > 0")

    def sample(self, rng, T):
        return rng.gamma(self.shape, 1.0 / self.rate, size=(T, T)) - self.shape / self.rate

    def long_run_variance(self):
        return self.shape / self.rate**2

    def describe(self):
        return f"gamma:{self.shape:g}:{self.rate:g}"


@dataclass(frozen=True, eq=False)
class MovingAverage(NoiseModel):
    """Finite moving average of i.i.d. N(0,1) innovations.

    ``eps_k = innovation_sd * sum_{|j|_inf <= m} w_j eta_{k+j}``, which is
    exactly ``2m``-dependent in the sup-norm.
    """

    weights: np.ndarray = field(repr=False)
    innovation_sd: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 != 1:
            raise DomainError("moving-average weights must be a (2m+1)x(2m+1) array")
        if not np.any(w != 0):
            raise DomainError("moving-average weights must not all vanish")
        if not self.innovation_sd > 0:
            raise DomainError("innovation sd must be positive")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def box(cls, m: int, innovation_sd: float = 1.0) -> "MovingAverage":
        return cls(np.ones((2 * m + 1, 2 * m + 1)), innovation_sd)

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2

    def __eq__(self, other):
        return (
            isinstance(other, MovingAverage)
            and self.innovation_sd == other.innovation_sd
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash((self.weights.tobytes(), self.innovation_sd))

    def sample(self, rng, T):
        m = self.radius
        eta = rng.standard_normal((T + 2 * m, T + 2 * m))
        out = np.zeros((T, T))
        n = 2 * m + 1
        for a in range(n):
            for b in range(n):
                w = self.weights[a, b]
                if w != 0.0:
                    out += w * eta[a : a + T, b : b + T]
        return self.innovation_sd * out

    def long_run_variance(self):
        return self.innovation_sd**2 * float(self.weights.sum()) ** 2

    def m_dependence_range(self):
        return 2 * self.radius

    def describe(self):
        if np.all(self.weights == 1.0):
            return f"ma:{self.radius}:{self.innovation_sd:g}"
        return f"ma-custom:{self.radius}:{self.innovation_sd:g}"


def parse_noise(text: str) -> NoiseModel:
    """Parse the CLI noise syntax (``gauss:<sd>``, ``t:<nu>``, ``exp:<rate>``,
    ``gamma:<shape>:<rate>``, ``ma:<m>:<sd>``)."""
    parts = text.strip().lower().split(":")
    name, args = parts[0], [float(p) for p in parts[1:]]
    try:
        if name in ("gauss", "normal"):
            return IIDGaussian(*(args or [1.0]))
        if name == "t":
            return IIDStudentT(*args)
        if name == "exp":
            return IIDExponential(*(args or [1.0]))
        if name == "gamma":
            return IIDGamma(*args)
        if name == "ma":
            m = int(args[0])
            return MovingAverage.box(m, *(args[1:] or [1.0]))
    except TypeError as exc:
        raise DomainError(f"bad parameters for noise model {text!r}") from exc
    raise DomainError(f"unknown noise model {text!r}")


def generate_noise(model: NoiseModel, T: int, seed: int, replicate: int = 0) -> np.ndarray:
    """Draw one ``T x T`` null field; deterministic in ``(model, T, seed, replicate)``."""
    if T < 1:
        raise DomainError(f"resolution must be positive, got T={T}")
    return model.sample(replicate_rng(seed, replicate), T)


def generate_noise_batch(model: NoiseModel, T: int, seed: int, replicates: Sequence[int]) -> np.ndarray:
    """Stack of fields for the given replicate indices, shape ``(n, T, T)``."""
    out = np.empty((len(replicates), T, T))
    for i, r in enumerate(replicates):
        out[i] = generate_noise(model, T, seed, r)
    return out


@dataclass(frozen=True)
class SignalSpec:
    """Baseline level plus one darker rectangle of depth ``anomaly.amplitude``."""

    baseline: float = 0.0
    anomaly: RectAnomaly | None = None


def inject_anomaly(values: np.ndarray, signal: SignalSpec) -> np.ndarray:
    """``baseline - delta * 1{k/T in F} + values`` for a square field (or stack)."""
    values = np.asarray(values, dtype=float)
    T = values.shape[-1]
    out = values + signal.baseline
    rect = signal.anomaly
    if rect is not None and rect.amplitude != 0.0:
        mask = rect_pixel_mask(rect, T)
        if not mask.any():
            raise DomainError("anomaly rectangle does not cover any pixel of the image")
        out = out - rect.amplitude * mask
    return out


def long_run_variance(model: NoiseModel) -> float:
    return model.long_run_variance()


def m_dependence_range(model: NoiseModel) -> int:
    return model.m_dependence_range()


def distribution_quartiles(model: NoiseModel) -> tuple[float, float]:
    """Population quartiles of the (centred) marginal law of an i.i.d. model."""
    if isinstance(model, IIDGaussian):
        dist = stats.norm(scale=model.sd)
    elif isinstance(model, IIDStudentT):
        dist = stats.t(model.df)
    elif isinstance(model, IIDExponential):
        dist = stats.expon(loc=-1.0 / model.rate, scale=1.0 / model.rate)
    elif isinstance(model, IIDGamma):
        dist = stats.gamma(model.shape, loc=-model.shape / model.rate, scale=1.0 / model.rate)
    else:
        raise DomainError(f"no closed-form marginal for {model}")
    return float(dist.ppf(0.25)), float(dist.ppf(0.75))


def clip_report(rect: RectAnomaly) -> dict:
    """Whether the rectangle sticks out of the unit square (it is clipped by the grid)."""
    c1, c2 = rect.center
    ca, sa = math.cos(rect.angle), math.sin(rect.angle)
    corners = [
        (c1 + sv * rect.length / 2 * ca - su * rect.width / 2 * sa, c2 + sv * rect.length / 2 * sa + su * rect.width / 2 * ca)
        for sv in (-1, 1)
        for su in (-1, 1)
    ]
    clipped = any(not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0) for x, y in corners)
    return {"clipped": clipped, "corners": corners}

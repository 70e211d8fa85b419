"""Input checks shared by the estimator, the CLI and the public functions."""

from __future__ import annotations

import math

import numpy as np

from .exceptions import ConfigError, DataError


def check_field(X, allow_stack: bool = True) -> np.ndarray:
    """Return ``X`` as a float array of one square field or a stack of them.

    Raises
    ------
    DataError
        If ``X`` is not 2D (or 3D when ``allow_stack``), not square, empty or
        contains non-finite values.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 3 and not allow_stack:
        raise DataError("expected a single 2D field, got a stack")
    if arr.ndim not in (2, 3):
        raise DataError(f"expected a 2D field or a 3D stack, got shape {arr.shape}")
    if arr.shape[-1] != arr.shape[-2]:
        raise DataError(f"field must be square, got {arr.shape[-2]}x{arr.shape[-1]}")
    if arr.shape[-1] < 2:
        raise DataError("field is too small")
    if not np.all(np.isfinite(arr)):
        raise DataError("field contains non-finite values")
    return arr


def check_angles_deg(angles) -> tuple[float, ...]:
    """Degrees in [0, 180) to sorted, de-duplicated radians."""
    out = []
    for a in angles:
        a = float(a)
        if not (math.isfinite(a) and 0.0 <= a < 180.0):
            raise ConfigError(f"angle {a} deg is outside [0, 180)")
        out.append(math.radians(a))
    if not out:
        raise ConfigError("at least one angle is required")
    return tuple(sorted(set(out)))


def check_level(level: float) -> float:
    level = float(level)
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must lie in (0, 1), got {level}")
    return level


def parse_sigma(text):
    """``"silverman"`` or ``"known:<v>"`` (a bare positive number also works)."""
    if not isinstance(text, str):
        v = float(text)
    elif text.strip().lower() == "silverman":
        return "silverman"
    else:
        body = text.strip().lower()
        if body.startswith("known:"):
            body = body[len("known:"):]
        try:
            v = float(body)
        except ValueError:
            raise ConfigError(f"sigma must be 'silverman' or 'known:<v>', got {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise ConfigError(f"known sigma must be positive, got {v}")
    return v

"""Scikit-learn style front end: calibrate on ``fit``, map or mask on ``transform``/``predict``."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_angles_deg, check_field, check_level, parse_sigma
from .calibrate import ThresholdCache, calibrate_threshold
from .exceptions import ConfigError
from .field import parse_noise
from .geometry import WindowSpec
from .stats import KINDS, StatConfig, equidistant_angles, resolve_sigma, scan_batch


class FissureScanner(TransformerMixin, BaseEstimator):
    """Window-contrast scan for thin dark anomalies in square gray images.

    Parameters
    ----------
    statistic : {"f1", "f2", "nb", "fnb1", "fnb2"}
    d, h : float
        Window diameter and inner strip width, in units of the image side.
    n_angles : int
        Number of equidistant angles on [0, 180) degrees; ignored when
        ``angles`` is given.
    angles : sequence of float, optional
        Explicit angles in degrees.
    sigma : "silverman", "known:<v>" or float
        Scale used to normalise the contrasts.
    beta : float, optional
        Threshold.  When omitted, ``fit`` calibrates it by simulation.
    level : float
        Quantile level of the calibrated threshold.
    n_replicates : int
        Null replicates for calibration.
    calibration_angles : sequence of float
        Angles (degrees) used during calibration.
    noise : str
        Null noise model, e.g. ``"gauss:1"`` or ``"ma:1:1"``.
    random_state : int
        Seed of the calibration streams.
    threshold_cache : path, optional
        JSON cache of calibrated thresholds.

    Attributes
    ----------
    T_ : int
        Image side seen during ``fit``.
    beta_ : float
        Threshold used by ``predict``.
    threshold_ : ThresholdRecord or None
        Calibration record when the threshold was simulated.
    config_ : StatConfig
    """

    def __init__(
        self,
        statistic="fnb1",
        d=0.1,
        h=0.02,
        n_angles=1,
        angles=None,
        sigma="silverman",
        beta=None,
        level=0.95,
        n_replicates=2000,
        calibration_angles=(0.0,),
        noise="gauss:1",
        random_state=0,
        threshold_cache=None,
    ):
        self.statistic = statistic
        self.d = d
        self.h = h
        self.n_angles = n_angles
        self.angles = angles
        self.sigma = sigma
        self.beta = beta
        self.level = level
        self.n_replicates = n_replicates
        self.calibration_angles = calibration_angles
        self.noise = noise
        self.random_state = random_state
        self.threshold_cache = threshold_cache

    def _make_config(self) -> StatConfig:
        kind = str(self.statistic).lower()
        if kind not in KINDS:
            raise ConfigError(f"statistic must be one of {KINDS}, got {self.statistic!r}")
        window = WindowSpec(float(self.d), float(self.h))
        if self.angles is not None:
            angles = check_angles_deg(self.angles)
        else:
            if int(self.n_angles) < 1:
                raise ConfigError("n_angles must be at least 1")
            angles = equidistant_angles(int(self.n_angles))
        return StatConfig(kind, window, angles, parse_sigma(self.sigma))

    def fit(self, X, y=None):
        """Validate the configuration against ``X`` and fix the threshold.

        Only the image side of ``X`` is used; the threshold is calibrated on
        simulated null fields of that size.
        """
        X = check_field(X)
        config = self._make_config()
        T = X.shape[-1]
        config.anchors(T)  # raises if the window does not fit
        self.config_ = config
        self.T_ = T
        self.threshold_ = None
        if self.beta is not None:
            self.beta_ = float(self.beta)
        else:
            kwargs = dict(
                stat_kind=config.kind,
                window=config.window,
                calibration_angles=check_angles_deg(self.calibration_angles),
                T=T,
                level=check_level(self.level),
                replicates=int(self.n_replicates),
                noise=parse_noise(self.noise),
                sigma=config.sigma,
                seed=int(self.random_state),
            )
            if self.threshold_cache is not None:
                rec = ThresholdCache(self.threshold_cache).get_or_calibrate(**kwargs)
            else:
                rec = calibrate_threshold(**kwargs)
            self.threshold_ = rec
            self.beta_ = rec.beta
        return self

    def _check_T(self, X):
        check_is_fitted(self, "beta_")
        X = check_field(X)
        if X.shape[-1] != self.T_:
            raise ConfigError(f"scanner was fitted for T={self.T_}, got T={X.shape[-1]}")
        return X

    def sigma_estimates(self, X) -> np.ndarray:
        X = self._check_T(X)
        return resolve_sigma(X, self.config_.sigma)

    def transform(self, X):
        """Heat maps, NaN off the valid anchors; same leading shape as ``X``."""
        X = self._check_T(X)
        anchors = self.config_.anchors(self.T_)
        sig = resolve_sigma(X, self.config_.sigma)
        if np.any(~(sig > 0)):
            raise ConfigError("sigma estimate is degenerate (constant image?)")
        out = np.full(X.shape, np.nan)
        out[(...,) + anchors.slices] = scan_batch(X, self.config_, sig, anchors)
        return out

    def predict(self, X):
        """Boolean significance masks (statistic >= ``beta_``)."""
        hm = self.transform(X)
        with np.errstate(invalid="ignore"):
            return np.nan_to_num(hm, nan=-math.inf) >= self.beta_

    def decision_function(self, X):
        """Maximum statistic over anchors minus ``beta_``, per image."""
        hm = self.transform(X)
        return np.nanmax(hm, axis=(-2, -1)) - self.beta_

"""Window-contrast scan statistics for thin dark anomalies in gray-value images."""

__version__ = "0.1.0"

from .calibrate import ThresholdCache, ThresholdRecord, calibrate_threshold, null_maxima
from .estimator import FissureScanner
from .exceptions import (
    CacheLoadError,
    ConfigError,
    DataError,
    DegenerateWindowError,
    DomainError,
    ScanError,
    WindowTooLargeError,
)
from .field import (
    IIDExponential,
    IIDGamma,
    IIDGaussian,
    IIDStudentT,
    MovingAverage,
    SignalSpec,
    generate_noise,
    inject_anomaly,
    parse_noise,
)
from .geometry import (
    AnchorRect,
    OffsetMask,
    RectAnomaly,
    Segment,
    WindowSpec,
    build_offset_mask,
    exact_area,
    segment_contains,
    valid_anchor_pixels,
)
from .stats import (
    HeatMap,
    StatConfig,
    contrasts,
    equidistant_angles,
    heatmap,
    significance_mask,
    silverman_limit,
    silverman_sigma,
    stat_at,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Image and table files: PGM/PBM, 16-bit PNG, heat-map CSV, JSON sidecars.

Gray images are read as ``value / maxval``.  Fields are written as 16-bit
PGM through an affine map ``value = round((y - offset) / scale)``; the map
and the quantization error it implies go to a JSON sidecar.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import DataError

MAXVAL16 = 65535
MISSING_VALUE = 0


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# PGM / PBM


def _pnm_tokens(data: bytes, count: int, pos: int = 0):
    """Read ``count`` header tokens, skipping comments; return tokens and offset."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DataError("truncated PNM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Raw gray values and ``maxval`` of a P2 or P5 file."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pnm_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if not 0 < maxval <= MAXVAL16:
        raise DataError(f"{path}: maxval {maxval} out of range")
    if magic == b"P5":
        pos += 1  # single whitespace before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        nbytes = w * h * dtype.itemsize
        raw = data[pos : pos + nbytes]
        if len(raw) != nbytes:
            raise DataError(f"{path}: truncated raster")
        arr = np.frombuffer(raw, dtype=dtype).reshape(h, w)
    elif magic == b"P2":
        vals = data[pos:].split()
        if len(vals) < w * h:
            raise DataError(f"{path}: truncated raster")
        arr = np.array([int(v) for v in vals[: w * h]]).reshape(h, w)
    elif magic in (b"P3", b"P6"):
        raise DataError(f"{path}: color images are not supported")
    else:
        raise DataError(f"{path}: not a PGM file (magic {magic!r})")
    return arr.astype(np.int64), maxval


def write_pgm(path, values: np.ndarray, maxval: int = MAXVAL16) -> None:
    """Binary (P5) PGM, 8 bit for ``maxval < 256`` and big-endian 16 bit otherwise."""
    v = np.asarray(values)
    if v.ndim != 2:
        raise DataError("PGM images are 2D")
    if v.min() < 0 or v.max() > maxval:
        raise DataError("gray values out of range")
    dtype = ">u2" if maxval > 255 else "u1"
    head = f"P5\n{v.shape[1]} {v.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(head + v.astype(dtype).tobytes())


def write_pbm(path, mask: np.ndarray, plain: bool = False) -> None:
    """Bitmap of a boolean mask (1 = set pixel), P4 by default or P1 when ``plain``."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    if plain:
        rows = "\n".join(" ".join("1" if b else "0" for b in row) for row in m)
        Path(path).write_text(f"P1\n{w} {h}\n{rows}\n", encoding="ascii")
    else:
        packed = np.packbits(m, axis=1)
        Path(path).write_bytes(f"P4\n{w} {h}\n".encode("ascii") + packed.tobytes())


def read_pbm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h), pos = _pnm_tokens(data, 3)
    w, h = int(w), int(h)
    if magic == b"P4":
        pos += 1
        rowbytes = (w + 7) // 8
        raw = np.frombuffer(data[pos : pos + rowbytes * h], dtype=np.uint8).reshape(h, rowbytes)
        return np.unpackbits(raw, axis=1)[:, :w].astype(bool)
    if magic == b"P1":
        bits = [c for c in data[pos:].decode("ascii") if c in "01"]
        return np.array([c == "1" for c in bits[: w * h]]).reshape(h, w)
    raise DataError(f"{path}: not a PBM file")


# ---------------------------------------------------------------------------
# gray images in general


def read_gray(path) -> tuple[np.ndarray, int]:
    """Gray values and ``maxval`` of a PGM or a grayscale PNG."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in (b"P2", b"P5", b"P3", b"P6"):
        return read_pgm(path)
    try:
        img = Image.open(path)
    except OSError as exc:
        raise DataError(f"{path}: unreadable image ({exc})") from exc
    if img.mode == "L":
        return np.asarray(img, dtype=np.int64), 255
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.int64)
        if arr.min() < 0 or arr.max() > MAXVAL16:
            raise DataError(f"{path}: values outside the 16-bit range")
        return arr, MAXVAL16
    raise DataError(f"{path}: image mode {img.mode} is not 8/16-bit grayscale")


def load_field(path, sidecar=None) -> tuple[np.ndarray, dict]:
    """Square gray image as reals: ``value / maxval``, or ``offset + scale * value``
    when a sidecar with an affine map is given."""
    raw, maxval = read_gray(path)
    if raw.shape[0] != raw.shape[1]:
        raise DataError(f"{path}: image must be square, got {raw.shape[0]}x{raw.shape[1]}")
    info = {"path": str(path), "maxval": int(maxval), "T": int(raw.shape[0]), "mapping": "value/maxval"}
    if sidecar is not None:
        meta = read_json(sidecar)
        try:
            offset, scale = float(meta["offset"]), float(meta["scale"])
        except (KeyError, TypeError, ValueError):
            raise DataError(f"{sidecar}: sidecar needs numeric 'offset' and 'scale'") from None
        info.update(mapping="offset+scale*value", offset=offset, scale=scale)
        return offset + scale * raw.astype(float), info
    return raw.astype(float) / maxval, info


def quantize_field(y: np.ndarray, maxval: int = MAXVAL16) -> tuple[np.ndarray, dict]:
    """Affine 16-bit quantization of a real field and its sidecar.

    ``scale`` is the quantization step, so each pixel moves by at most
    ``scale / 2``.  A scaled window mean then moves by at most ``T scale / 2``,
    a contrast by ``T scale`` and an FnB statistic's numerator by
    ``2 T scale``.
    """
    y = np.asarray(y, dtype=float)
    lo, hi = float(y.min()), float(y.max())
    scale = (hi - lo) / maxval if hi > lo else 1.0
    q = np.rint((y - lo) / scale).astype(np.int64)
    T = y.shape[0]
    meta = {
        "offset": lo,
        "scale": scale,
        "maxval": int(maxval),
        "quantization": {
            "max_pixel_error": scale / 2.0,
            "contrast_error_bound": T * scale,
            "statistic_numerator_error_bound": 2.0 * T * scale,
            "sigma_error_bound": scale / (2.0 * 0.674489750196082),
        },
    }
    return q, meta


def statistic_error_bound(stat_value: float, sigma: float, numerator_bound: float, sigma_bound: float) -> float:
    """Bound on ``|N'/s' - N/s|`` when ``|N' - N| <= numerator_bound`` and
    ``|s' - s| <= sigma_bound``."""
    if sigma <= sigma_bound:
        return math.inf
    return (numerator_bound + abs(stat_value) * sigma_bound) / (sigma - sigma_bound)


# ---------------------------------------------------------------------------
# heat maps


def heatmap_to_csv(values: np.ndarray) -> str:
    """Row-major CSV, one line per image row; missing (non-finite) cells are empty."""
    lines = []
    for row in np.asarray(values, dtype=float):
        lines.append(",".join(repr(float(v)) if np.isfinite(v) else "" for v in row))
    return "\n".join(lines) + "\n"


def heatmap_from_csv(text: str) -> np.ndarray:
    rows = [line.split(",") for line in text.strip("\n").split("\n")]
    return np.array([[float(c) if c.strip() else np.nan for c in row] for row in rows])


def write_heatmap_png(path, values: np.ndarray) -> dict:
    """16-bit PNG with valid cells mapped linearly onto ``1..65535`` and missing
    cells stored as 0.  Returns the sidecar ``{min, max, missingValue}``."""
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    out = np.full(v.shape, MISSING_VALUE, dtype=np.uint16)
    if ok.any():
        lo, hi = float(v[ok].min()), float(v[ok].max())
        span = hi - lo if hi > lo else 1.0
        out[ok] = 1 + np.rint((v[ok] - lo) / span * (MAXVAL16 - 1)).astype(np.uint16)
    else:
        lo = hi = float("nan")
    Image.fromarray(out).save(path)
    return {"min": lo, "max": hi, "missingValue": MISSING_VALUE}


def read_heatmap_png(path, meta: dict) -> np.ndarray:
    raw = np.asarray(Image.open(path), dtype=float)
    out = np.full(raw.shape, np.nan)
    ok = raw != meta["missingValue"]
    span = meta["max"] - meta["min"] if meta["max"] > meta["min"] else 1.0
    out[ok] = meta["min"] + (raw[ok] - 1) / (MAXVAL16 - 1) * span
    return out

"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import check_angles_deg, check_field, check_level, parse_sigma
from .calibrate import ThresholdCache, calibrate_threshold, sigma_tag
from .exceptions import CacheLoadError, ConfigError, DataError, DomainError, ScanError
from .experiments import StudyTable, detection_rate_study, fast_scan, fp_rate_study, min_angles_for_target
from .field import SignalSpec, clip_report, generate_noise, inject_anomaly, parse_noise
from .geometry import RectAnomaly, WindowSpec, rect_pixel_mask
from .io import heatmap_to_csv, load_field, quantize_field, write_heatmap_png, write_json, write_pbm, write_pgm
from .stats import KINDS, StatConfig, equidistant_angles, heatmap, resolve_sigma, significance_mask, silverman_sigma
from .verify import default_suite

logger = logging.getLogger("fissurescan")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared flags


def _add_window(p, stat=True):
    if stat:
        p.add_argument("--stat", choices=KINDS, default="fnb1", help="scan statistic (default fnb1)")
    p.add_argument("--d", type=float, default=0.1, help="window diameter (default 0.1)")
    p.add_argument("--h", type=float, default=0.02, help="inner strip width (default 0.02)")


def _add_angles(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--angles", type=float, nargs="+", metavar="DEG", help="explicit angles in degrees")
    g.add_argument("--num-angles", type=int, default=1, help="equidistant angles on [0,180) (default 1)")


def _add_threshold(p):
    p.add_argument("--beta", type=float, help="explicit threshold")
    p.add_argument("--threshold-cache", type=Path, help="JSON threshold cache to look the threshold up in")
    p.add_argument("--calibration-angles", type=float, nargs="+", metavar="DEG",
                   help="calibration angles of the cached threshold")


def _add_sim(p, reps):
    p.add_argument("--reps", type=int, default=reps, help=f"replicates (default {reps})")
    p.add_argument("--seed", type=int, required=True, help="master seed (required)")
    p.add_argument("--noise", default="gauss:1", help="noise model (default gauss:1)")


def _add_common(p):
    p.add_argument("--sigma", default="silverman", help="'silverman' or 'known:<v>' (default silverman)")
    p.add_argument("--level", type=float, default=0.95, help="calibration quantile level (default 0.95)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fissurescan", description="Scan statistics for fissures in gray-value images.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a null field, optionally with a dark rectangle")
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--delta", type=float, default=0.0, help="fissure depth (0 = null field)")
    p.add_argument("--width", type=float, default=0.02)
    p.add_argument("--length", type=float, default=0.5)
    p.add_argument("--angle", type=float, default=0.0, help="fissure angle in degrees")
    p.add_argument("--center", type=float, nargs=2, default=(0.5, 0.5))
    p.add_argument("--baseline", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise", default="gauss:1")
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("scan", help="heat map and significance mask of an image")
    p.add_argument("image", type=Path)
    p.add_argument("--sidecar", type=Path, help="sidecar JSON with an affine gray-value map")
    _add_window(p)
    _add_angles(p)
    _add_threshold(p)
    _add_common(p)
    p.add_argument("--reps", type=int, help="replicates of the cached threshold")
    p.add_argument("--seed", type=int, help="seed of the cached threshold")
    p.add_argument("--noise", help="noise model of the cached threshold")

    p = sub.add_parser("calibrate", help="simulate the family-wise threshold")
    _add_window(p)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--calibration-angles", type=float, nargs="+", default=[0.0], metavar="DEG")
    p.add_argument("--threshold-cache", type=Path, help="cache to store the record in")
    _add_sim(p, 2000)
    _add_common(p)

    p = sub.add_parser("simulate-fp", help="false-positive rate on null images")
    _add_window(p)
    _add_angles(p)
    _add_threshold(p)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--calibration-reps", type=int, help="replicates of the cached threshold")
    p.add_argument("--calibration-seed", type=int, help="seed of the cached threshold")
    _add_sim(p, 1000)
    _add_common(p)

    p = sub.add_parser("simulate-detect", help="detection rates under angle misspecification")
    _add_window(p)
    _add_threshold(p)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--widths", type=float, nargs="+", default=[0.02])
    p.add_argument("--deltas", type=float, nargs="+", default=[1.5])
    p.add_argument("--offsets", type=float, nargs="+", default=[0, 5, 10, 15, 20, 25], metavar="DEG")
    p.add_argument("--length", type=float, default=0.5)
    p.add_argument("--true-angle", type=float, metavar="DEG", help="fixed fissure angle (default random)")
    p.add_argument("--target", type=float, default=0.75)
    p.add_argument("--calibration-reps", type=int)
    p.add_argument("--calibration-seed", type=int)
    _add_sim(p, 300)
    _add_common(p)

    p = sub.add_parser("fast-scan", help="two-stage scan restricted to dark pixels")
    p.add_argument("image", type=Path)
    p.add_argument("--sidecar", type=Path)
    _add_window(p, stat=False)
    p.add_argument("--angles1", type=float, nargs="+", default=[0.0], metavar="DEG")
    p.add_argument("--angles2", type=float, nargs="+", default=[0.0], metavar="DEG")
    p.add_argument("--darkness-quantile", type=float, default=0.1)
    p.add_argument("--beta-liberal", type=float, required=True)
    p.add_argument("--beta-conservative", type=float, required=True)
    _add_common(p)

    p = sub.add_parser("verify", help="empirical checks of the limit theory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--quick", action="store_true", help="fewer replicates")
    p.add_argument("--out", type=Path, default=Path("."))

    p = sub.add_parser("estimate-sigma", help="Silverman scale estimate of an image")
    p.add_argument("image", type=Path)
    p.add_argument("--sidecar", type=Path)
    p.add_argument("--out", type=Path, default=Path("."))
    return parser


# ---------------------------------------------------------------------------
# helpers


def _config_echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _stat_config(args, kind=None) -> StatConfig:
    window = WindowSpec(args.d, args.h)
    angles = check_angles_deg(args.angles) if getattr(args, "angles", None) else equidistant_angles(args.num_angles)
    return StatConfig(kind or args.stat, window, angles, parse_sigma(args.sigma))


def _lookup_threshold(args, kind, T, reps=None, seed=None, noise=None):
    """Explicit ``--beta`` or a unique matching cache record."""
    if args.beta is not None:
        return float(args.beta), None
    if args.threshold_cache is None:
        raise ConfigError("no threshold: pass --beta or --threshold-cache")
    want = {
        "stat_kind": kind,
        "d": float(args.d),
        "h": float(args.h),
        "T": int(T),
        "level": check_level(args.level),
        "sigma_source": sigma_tag(parse_sigma(args.sigma)),
    }
    cands = [r for r in ThresholdCache(args.threshold_cache).records() if all(getattr(r, k) == v for k, v in want.items())]
    if args.calibration_angles:
        ang = tuple(round(a, 12) for a in check_angles_deg(args.calibration_angles))
        cands = [r for r in cands if tuple(round(a, 12) for a in r.calibration_angles) == ang]
    if reps is not None:
        cands = [r for r in cands if r.replicates == reps]
    if seed is not None:
        cands = [r for r in cands if r.seed == seed]
    if noise is not None:
        cands = [r for r in cands if r.noise_model == parse_noise(noise).describe()]
    if not cands:
        raise ConfigError(f"no cached threshold matches {want}; run 'fissurescan calibrate' first")
    if len({r.beta for r in cands}) > 1:
        raise ConfigError(f"{len(cands)} cached thresholds match; narrow the lookup with more flags")
    return cands[0].beta, cands[0]


def _heatmap_safe(field, config):
    """Heat map; a degenerate scale (constant image) gives 0 where every contrast vanishes."""
    sig = float(resolve_sigma(field, config.sigma))
    if sig > 0:
        return heatmap(field, config, sig), sig
    logger.warning("sigma estimate is 0; statistics are 0 where all contrasts vanish and +inf elsewhere")
    hm = heatmap(field, config, 1.0)
    v = hm.values
    ok = np.isfinite(v)
    # contrasts of a constant patch are zero up to summation rounding
    tol = 1e-9 * field.shape[0] * max(1.0, float(np.abs(field).max()))
    v[ok] = np.where(np.abs(v[ok]) <= tol, 0.0, math.inf)
    return hm, sig


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    noise = parse_noise(args.noise)
    eps = generate_noise(noise, args.T, args.seed, 0)
    truth = {"T": args.T, "noise": noise.describe(), "seed": args.seed}
    rect = None
    if args.delta != 0.0:
        rect = RectAnomaly(tuple(args.center), args.length, args.width, math.radians(args.angle), args.delta)
        fmask = rect_pixel_mask(rect, args.T)
        truth.update(
            null=False,
            fissure={
                "center": list(args.center),
                "length": args.length,
                "width": args.width,
                "angle_deg": args.angle,
                "delta": args.delta,
                "pixels": int(fmask.sum()),
                **{k: v for k, v in clip_report(rect).items() if k == "clipped"},
            },
        )
    else:
        truth.update(null=True, fissure=None)
    y = inject_anomaly(eps, SignalSpec(args.baseline, rect))
    q, meta = quantize_field(y)
    meta["fissure"] = truth["fissure"]
    args.out.mkdir(parents=True, exist_ok=True)
    write_pgm(args.out / "field.pgm", q)
    write_json(args.out / "field.json", meta)
    truth["config"] = _config_echo(args)
    write_json(args.out / "truth.json", truth)
    print(f"wrote {args.out / 'field.pgm'}")
    return EXIT_OK


def cmd_scan(args) -> int:
    field, info = load_field(args.image, args.sidecar)
    config = _stat_config(args)
    T = field.shape[0]
    beta, rec = _lookup_threshold(args, config.kind, T, args.reps, args.seed, args.noise)
    hm, sig = _heatmap_safe(field, config)
    mask = significance_mask(hm, beta)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "heatmap.csv").write_text(heatmap_to_csv(hm.values), encoding="utf-8")
    png_meta = write_heatmap_png(args.out / "heatmap.png", hm.values)
    write_json(args.out / "heatmap.json", png_meta)
    write_pbm(args.out / "mask.pbm", mask)
    summary = {
        "sigma": sig,
        "beta": beta,
        "nSignificant": int(mask.sum()),
        "anchorRect": hm.anchors.to_dict(),
        "max": float(np.nanmax(hm.values)),
        "argmax": list(hm.argmax()),
        "image": info,
        "threshold": None if rec is None else rec.to_dict(),
        "config": _config_echo(args),
    }
    write_json(args.out / "summary.json", summary)
    print(f"{summary['nSignificant']} significant anchor(s); max {summary['max']:.4g} vs beta {beta:.4g}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    kwargs = dict(
        stat_kind=args.stat,
        window=WindowSpec(args.d, args.h),
        calibration_angles=check_angles_deg(args.calibration_angles),
        T=args.T,
        level=check_level(args.level),
        replicates=args.reps,
        noise=parse_noise(args.noise),
        sigma=parse_sigma(args.sigma),
        seed=args.seed,
    )
    if args.reps < 1:
        raise ConfigError("--reps must be positive")
    if args.threshold_cache is not None:
        rec = ThresholdCache(args.threshold_cache).get_or_calibrate(**kwargs)
    else:
        rec = calibrate_threshold(**kwargs)
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "threshold.json", {"threshold": rec.to_dict(), "config": _config_echo(args)})
    print(f"beta = {rec.beta:.6g}")
    return EXIT_OK


def cmd_simulate_fp(args) -> int:
    config = _stat_config(args)
    beta, rec = _lookup_threshold(args, config.kind, args.T, args.calibration_reps, args.calibration_seed)
    row = fp_rate_study(config, rec if rec is not None else beta, args.T, args.reps, parse_noise(args.noise), args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    table = StudyTable([row])
    (args.out / "fp_rate.csv").write_text(table.to_csv(), encoding="utf-8")
    write_json(args.out / "fp_rate.json", {"rows": table.rows, "config": _config_echo(args)})
    print(f"false-positive rate {row['rate']:.4f} [{row['ci_low']:.4f}, {row['ci_high']:.4f}]")
    return EXIT_OK


def cmd_simulate_detect(args) -> int:
    kind = args.stat
    beta, rec = _lookup_threshold(args, kind, args.T, args.calibration_reps, args.calibration_seed)
    true_angle = None if args.true_angle is None else math.radians(args.true_angle)
    table = detection_rate_study(
        WindowSpec(args.d, args.h),
        rec if rec is not None else beta,
        T=args.T,
        widths=args.widths,
        deltas=args.deltas,
        offsets_deg=args.offsets,
        replicates=args.reps,
        seed=args.seed,
        length=args.length,
        kind=kind,
        sigma=parse_sigma(args.sigma),
        true_angle=true_angle,
        noise=parse_noise(args.noise),
    )
    rule = min_angles_for_target(table, args.target)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "detection.csv").write_text(table.to_csv(), encoding="utf-8")
    write_json(
        args.out / "detection.json",
        {
            "rows": table.rows,
            "min_angles": [
                {"width": w, "delta": dl, "delta_max_deg": None if v is None else v[0], "P": None if v is None else v[1]}
                for (w, dl), v in sorted(rule.items())
            ],
            "config": _config_echo(args),
        },
    )
    for (w, dl), v in sorted(rule.items()):
        print(f"w={w:g} delta={dl:g}: " + ("no offset reaches the target" if v is None else f"delta_max={v[0]:g} deg, P={v[1]}"))
    return EXIT_OK


def cmd_fast_scan(args) -> int:
    field, info = load_field(args.image, args.sidecar)
    res = fast_scan(
        field,
        WindowSpec(args.d, args.h),
        check_angles_deg(args.angles1),
        check_angles_deg(args.angles2),
        args.darkness_quantile,
        args.beta_liberal,
        args.beta_conservative,
        parse_sigma(args.sigma),
    )
    args.out.mkdir(parents=True, exist_ok=True)
    write_pbm(args.out / "fast_mask.pbm", res.mask)
    write_json(args.out / "fast_scan.json", {**res.summary(), "image": info, "config": _config_echo(args)})
    s = res.summary()
    print(f"{s['final']} significant anchor(s); {s['evaluation_fraction']:.1%} of the full-scan evaluations")
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = default_suite(seed=args.seed, quick=args.quick)
    ok = all(r.passed for r in reports)
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "verify.json", {"passed": ok, "reports": [r.to_dict() for r in reports], "config": _config_echo(args)})
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  " + ", ".join(f"{c.name}={c.estimate:.4g}" for c in r.checks))
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_estimate_sigma(args) -> int:
    field, info = load_field(args.image, args.sidecar)
    check_field(field, allow_stack=False)
    est = silverman_sigma(field)
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(
        args.out / "sigma.json",
        {"sigma": est.value, "method": est.method, "n": est.n, "degenerate": est.degenerate, "image": info,
         "config": _config_echo(args)},
    )
    print(f"sigma = {est.value:.6g}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "scan": cmd_scan,
    "calibrate": cmd_calibrate,
    "simulate-fp": cmd_simulate_fp,
    "simulate-detect": cmd_simulate_detect,
    "fast-scan": cmd_fast_scan,
    "verify": cmd_verify,
    "estimate-sigma": cmd_estimate_sigma,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"fissurescan: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (DataError, CacheLoadError) as exc:
        print(f"fissurescan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, DomainError, ScanError, ValueError) as exc:
        print(f"fissurescan: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

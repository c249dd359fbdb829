"""``edgeci`` command line: sample, fit, detect, ci, simulate, analyze, bench.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bootstrap import METHODS, PERC, BootstrapConfig, confidence_interval
from .detectors import GambiniDetector, KruskalWallisDetector, PixelStrip, SplitSearchConfig
from .g0i import G0IParams, fit_moments, gamma_for_unit_mean, sample
from .imaging import (
    HORIZONTAL,
    VERTICAL,
    WindowSpec,
    analyze_rectangle,
    extract_windows,
    load_raster,
    overlay_svg,
    parse_rectangles,
    results_rows,
)
from .simulation import (
    AGGREGATIONS,
    ExperimentConfig,
    SyntheticImageSpec,
    cost_benchmark,
    image_to_strip,
    rows_to_csv,
    run_experiment,
)


class UsageError(Exception):
    """Bad flags or inputs; maps to exit code 2."""


def _seed(args) -> int:
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy)
    return args.seed


def _workers(value: Optional[int]) -> int:
    return value if value else (os.cpu_count() or 1)


def _meta(args, **extra) -> dict:
    return {"version": __version__, "numpy": np.__version__, "command": args.command,
            "seed": args.seed, **extra}


def _emit(text: str, path: Optional[str]) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"


def _methods(text: str) -> tuple:
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return methods


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


# ---- argument groups ------------------------------------------------------

def _add_bootstrap(p, standard_defaults=True):
    p.add_argument("--B", type=int, default=1000, help="outer resamples")
    p.add_argument("--B-prime", type=int, default=50, help="inner resamples for ST1/ST2")
    p.add_argument("--B-double-prime", type=int, default=200,
                   help="cap on fresh draws in the zero-variance fallback")
    p.add_argument("--B-x", type=int, default=200, help="auxiliary pool size for ST2")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--no-clamp", action="store_true",
                   help="do not clamp studentized/basic endpoints to the split range")


def _bootstrap_config(args, method=PERC) -> BootstrapConfig:
    try:
        return BootstrapConfig(B=args.B, B_prime=args.B_prime, B_double_prime=args.B_double_prime,
                               B_x=args.B_x, level=args.level, method=method,
                               clamp=not args.no_clamp)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_strip_input(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="strip file: one position per line, comma-separated "
                                     "values for a multi-pixel window ('-' for stdin)")
    src.add_argument("--image", help="PGM or CSV raster; use with --rect")
    p.add_argument("--rect", help="x,y,w,h of a single window in --image")
    p.add_argument("--orientation", choices=(VERTICAL, HORIZONTAL), default=VERTICAL)
    p.add_argument("--aggregation", choices=AGGREGATIONS, default="window")
    p.add_argument("--detector", choices=("kw", "gambini"), default="kw")
    p.add_argument("--looks", type=float, default=1.0)
    p.add_argument("--j-min", type=int, default=None)
    p.add_argument("--j-max", type=int, default=None)


def _read_strip_file(path: str) -> np.ndarray:
    text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise UsageError(f"{path}:{lineno}: not a number") from None
        if len(rows[-1]) != len(rows[0]):
            raise UsageError(f"{path}:{lineno}: expected {len(rows[0])} values")
    if not rows:
        raise UsageError(f"{path}: no data")
    a = np.array(rows)
    return a[:, 0] if a.shape[1] == 1 else a


def _load_strip(args) -> PixelStrip:
    if args.input is not None:
        values = _read_strip_file(args.input)
        try:
            strip = PixelStrip(values)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if args.aggregation != "window" and values.ndim == 2:
            strip = image_to_strip(values.T, args.aggregation)
        return strip
    if not args.rect:
        raise UsageError("--image needs --rect x,y,w,h")
    try:
        x, y, w, h = (int(v) for v in args.rect.split(","))
        spec = WindowSpec(x, y, w, h, args.orientation, 1, args.aggregation)
        raster = load_raster(args.image)
        (pixels, geom), = extract_windows(raster, spec)
        if np.any(pixels <= 0):
            pos = pixels[pixels > 0]
            pixels = pixels + (pos.min() / 2 if pos.size else 1.0)
        strip = image_to_strip(pixels.T, args.aggregation)
        return PixelStrip(strip.values, geom.origin)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None


def _detector(args):
    try:
        cfg = SplitSearchConfig(args.j_min if args.j_min is not None else 1,
                                args.j_max if args.j_max is not None else -1)
        if args.detector == "kw":
            return KruskalWallisDetector(cfg)
        if args.j_min is None and args.j_max is None:
            cfg = SplitSearchConfig()
        return GambiniDetector(args.looks, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# ---- subcommands ----------------------------------------------------------

def cmd_sample(args) -> int:
    if args.n < 1:
        raise UsageError("-n must be positive")
    if (args.gamma is None) == (not args.unit_mean):
        raise UsageError("give exactly one of --gamma or --unit-mean")
    try:
        gamma = gamma_for_unit_mean(args.alpha, args.looks) if args.unit_mean else args.gamma
        params = G0IParams(args.alpha, gamma, args.looks)
    except ValueError as exc:
        raise UsageError(f"{exc} (alpha < -1, gamma > 0 and looks >= 1 are required)") from None
    seed = _seed(args)
    z = sample(params, args.n, np.random.default_rng(seed))
    head = (f"# edgeci {__version__} sample alpha={params.alpha!r} gamma={params.gamma!r} "
            f"looks={params.looks!r} n={args.n} seed={seed}\n")
    _emit(head + "".join(f"{v!r}\n" for v in z.tolist()), args.output)
    return 0


def cmd_fit(args) -> int:
    data = _read_strip_file(args.input).ravel()
    if np.any(data <= 0):
        raise UsageError("data must be strictly positive")
    fit = fit_moments(data, args.looks)
    out = {"meta": {"version": __version__, "command": "fit", "looks": args.looks,
                    "n": int(data.size)}, **asdict(fit)}
    _emit(_dump(out), args.output)
    return 0 if fit.converged else 1


def cmd_detect(args) -> int:
    strip = _load_strip(args)
    det = _detector(args)
    t0 = time.perf_counter()
    est = det.estimate(strip)
    out = {"meta": _meta(args, input=args.input or args.image, detector=args.detector,
                         aggregation=args.aggregation),
           "n": len(strip), "j_hat": est.j_hat, "objective": est.objective,
           "edge_pixel": (list(strip.origin.to_image(est.j_hat - 1))
                          if strip.origin is not None else None),
           "runtime": time.perf_counter() - t0}
    _emit(_dump(out), args.output)
    return 0


def cmd_ci(args) -> int:
    methods = _methods(args.methods)
    configs = [_bootstrap_config(args, m) for m in methods]
    strip = _load_strip(args)
    det = _detector(args)
    seed = _seed(args)
    est = det.estimate(strip)
    intervals = {}
    for k, cfg in enumerate(configs):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        t0 = time.perf_counter()
        try:
            ci = confidence_interval(strip, det, cfg, rng)
        except Exception as exc:  # reported, not fatal
            intervals[cfg.method] = {"ok": False, "error": f"{type(exc).__name__}: {exc}",
                                     "runtime": time.perf_counter() - t0}
            continue
        intervals[cfg.method] = {"ok": True, "lower": ci.lower, "upper": ci.upper,
                                 "length": ci.length, "diagnostics": ci.diagnostics,
                                 "runtime": time.perf_counter() - t0}
    out = {"meta": _meta(args, input=args.input or args.image, detector=args.detector,
                         aggregation=args.aggregation,
                         bootstrap={k: v for k, v in asdict(configs[0]).items() if k != "method"},
                         methods=list(methods)),
           "n": len(strip), "j_hat": est.j_hat, "objective": est.objective,
           "intervals": intervals}
    _emit(_dump(out), args.output)
    return 0 if any(v["ok"] for v in intervals.values()) else 1


def _read_config(path: Optional[str]) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except configparser.Error as exc:
            raise UsageError(f"bad config file: {exc}") from None
    for s in ("experiment", "image", "bootstrap", "grid"):
        if not cp.has_section(s):
            cp.add_section(s)
    return cp


def _experiment_from(args) -> tuple[ExperimentConfig, Optional[tuple]]:
    cp = _read_config(args.config)
    for key in ("R", "methods", "aggregation", "detector"):
        if getattr(args, key) is not None:
            cp["experiment"][key] = str(getattr(args, key))
    for key in ("alpha_left", "alpha_right", "edge_j", "height", "width", "looks"):
        if getattr(args, key) is not None:
            cp["image"][key] = str(getattr(args, key))
    for key in ("B", "B_prime", "B_double_prime", "B_x", "level"):
        if getattr(args, key) is not None:
            cp["bootstrap"][key] = str(getattr(args, key))
    if args.no_clamp:
        cp["bootstrap"]["clamp"] = "false"
    if args.grid_alpha_left:
        cp["grid"]["alpha_left"] = args.grid_alpha_left
    if args.grid_alpha_right:
        cp["grid"]["alpha_right"] = args.grid_alpha_right
    try:
        im, ex, bs = cp["image"], cp["experiment"], cp["bootstrap"]
        edge = im.get("edge_j", "50").strip().lower()
        opt = lambda s, k: None if s.get(k) in (None, "", "none") else s.getfloat(k)
        spec = SyntheticImageSpec(
            height=im.getint("height", 20), width=im.getint("width", 100),
            edge_j=None if edge == "none" else int(edge),
            alpha_left=im.getfloat("alpha_left", -2.0), alpha_right=im.getfloat("alpha_right", -10.0),
            looks=im.getfloat("looks", 1.0),
            gamma_left=opt(im, "gamma_left"), gamma_right=opt(im, "gamma_right"))
        boot = BootstrapConfig(
            B=bs.getint("B", 1000), B_prime=bs.getint("B_prime", 50),
            B_double_prime=bs.getint("B_double_prime", 200), B_x=bs.getint("B_x", 200),
            level=bs.getfloat("level", 0.95), clamp=bs.getboolean("clamp", False))
        config = ExperimentConfig(
            spec=spec, R=ex.getint("R", 200), bootstrap=boot,
            methods=_methods(ex.get("methods", ",".join(METHODS))),
            master_seed=args.seed, aggregation=ex.get("aggregation", "window"),
            detector=ex.get("detector", "kw"))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    grid = None
    if args.grid:
        gl, gr = cp["grid"].get("alpha_left"), cp["grid"].get("alpha_right")
        if not gl or not gr:
            raise UsageError("--grid needs alpha_left and alpha_right lists")
        grid = (_floats(gl), _floats(gr))
    return config, grid


def cmd_simulate(args) -> int:
    if args.seed is None:
        from_file = _read_config(args.config)["experiment"].get("master_seed")
        try:
            args.seed = int(from_file) if from_file else None
        except ValueError:
            raise UsageError(f"master_seed must be an integer, got {from_file!r}") from None
        _seed(args)
    config, grid = _experiment_from(args)
    workers = _workers(args.workers)
    pairs = [(config.spec.alpha_left, config.spec.alpha_right)] if grid is None else \
        [(a, b) for a in grid[0] for b in grid[1]]
    rows, reports, failed = [], [], 0
    for al, ar in pairs:
        edge = config.spec.edge_j
        if grid is not None:
            edge = None if al == ar else (edge or config.spec.width // 2)
        try:
            cfg = replace(config, spec=replace(config.spec, alpha_left=al, alpha_right=ar,
                                               edge_j=edge))
            report = run_experiment(cfg, workers)
        except Exception as exc:
            failed += 1
            rows.append({"alpha_left": al, "alpha_right": ar, "method": "",
                         "error": f"{type(exc).__name__}: {exc}"})
            continue
        reports.append(report)
        for row in report.rows():
            if row["n_failed"]:
                row["flag"] = "partial_failure"
            rows.append(row)
    if args.csv or not args.json:
        _emit(rows_to_csv(rows), args.csv)
    if args.json:
        doc = {"meta": _meta(args, workers=workers), "reports": [r.to_dict() for r in reports]}
        _emit(_dump(doc), args.json)
    if args.trace:
        trace = []
        for rep in reports:
            for rec in rep.trace_rows():
                rec.update(alpha_left=rep.config.spec.alpha_left,
                           alpha_right=rep.config.spec.alpha_right)
                trace.append(rec)
        _emit(rows_to_csv(trace), args.trace)
    return 0 if reports else 1


def cmd_analyze(args) -> int:
    methods = _methods(args.methods)
    configs = [_bootstrap_config(args, m) for m in methods]
    if args.overlay_method not in methods:
        raise UsageError(f"--overlay-method {args.overlay_method} is not among --methods")
    if not 0 < args.no_edge_fraction <= 1:
        raise UsageError("--no-edge-fraction must lie in (0, 1]")
    try:
        raster = load_raster(args.image)
        specs = parse_rectangles(Path(args.rectangles).read_text(encoding="utf-8"))
        for s in specs:
            s.check(raster)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if not specs:
        raise UsageError(f"{args.rectangles}: no rectangles")
    seed = _seed(args)
    det = _detector(args)
    results, rows = [], []
    for i, spec in enumerate(specs):
        res = analyze_rectangle(raster, spec, det, configs, seed, i, args.no_edge_fraction)
        results += res
        rows += results_rows(res, methods, i)
    if not any(r.ok for r in results):
        return 1
    svg = overlay_svg(results, raster.width, raster.height, args.overlay_method)
    meta = (f"<!-- edgeci {__version__} seed={seed} image={args.image} "
            f"methods={','.join(methods)} B={args.B} level={args.level} -->\n")
    Path(args.svg).write_text(svg.replace(">\n", ">\n" + meta, 1), encoding="utf-8")
    _emit(rows_to_csv(rows), args.csv)
    return 0


def cmd_bench(args) -> int:
    seed = _seed(args)
    boot = _bootstrap_config(args)
    spec = SyntheticImageSpec(alpha_left=args.alpha_left, alpha_right=args.alpha_right)
    config = ExperimentConfig(spec=spec, R=args.repeats, bootstrap=boot, master_seed=seed)
    table = cost_benchmark(config, args.repeats)
    _emit(_dump({"meta": _meta(args, config=config.to_dict()), "methods": table}), args.output)
    return 0


# ---- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgeci", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"edgeci {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw G0I intensities")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--gamma", type=float)
    s.add_argument("--unit-mean", action="store_true", help="choose gamma so that E[Z] = 1")
    s.add_argument("--looks", type=float, default=1.0)
    s.add_argument("-n", type=int, required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("fit", help="moment estimates of (alpha, gamma)")
    s.add_argument("--input", required=True)
    s.add_argument("--looks", type=float, default=1.0)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_fit, seed=None)

    s = sub.add_parser("detect", help="point estimate of the edge position")
    _add_strip_input(s)
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("ci", help="bootstrap confidence intervals for the edge")
    _add_strip_input(s)
    _add_bootstrap(s)
    s.add_argument("--methods", default=PERC, help=f"comma list from {','.join(METHODS)}")
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_ci)

    s = sub.add_parser("simulate", help="Monte Carlo coverage/length study")
    s.add_argument("--config", help="INI file with [experiment], [image], [bootstrap], [grid]")
    s.add_argument("--R", type=int)
    s.add_argument("--B", type=int)
    s.add_argument("--B-prime", type=int)
    s.add_argument("--B-double-prime", type=int)
    s.add_argument("--B-x", type=int)
    s.add_argument("--level", type=float)
    s.add_argument("--no-clamp", action="store_true")
    s.add_argument("--alpha-left", type=float)
    s.add_argument("--alpha-right", type=float)
    s.add_argument("--edge-j", help="edge column or 'none'")
    s.add_argument("--height", type=int)
    s.add_argument("--width", type=int)
    s.add_argument("--looks", type=float)
    s.add_argument("--methods")
    s.add_argument("--aggregation", choices=AGGREGATIONS)
    s.add_argument("--detector", choices=("kw", "gambini"))
    s.add_argument("--grid", action="store_true", help="sweep the alpha lists")
    s.add_argument("--grid-alpha-left", help="comma list")
    s.add_argument("--grid-alpha-right", help="comma list")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, help="processes (default: CPU count)")
    s.add_argument("--csv", help="summary CSV (default stdout)")
    s.add_argument("--json", help="full JSON report")
    s.add_argument("--trace", help="per-replication CSV")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", help="windowed intervals on a raster")
    s.add_argument("image")
    s.add_argument("rectangles", help="lines of 'x y w h orientation n_windows aggregation'")
    _add_bootstrap(s)
    s.add_argument("--methods", default=PERC)
    s.add_argument("--overlay-method", default=PERC)
    s.add_argument("--detector", choices=("kw", "gambini"), default="kw")
    s.add_argument("--looks", type=float, default=1.0)
    s.add_argument("--j-min", type=int, default=None)
    s.add_argument("--j-max", type=int, default=None)
    s.add_argument("--no-edge-fraction", type=float, default=0.4)
    s.add_argument("--seed", type=int)
    s.add_argument("--svg", required=True)
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("bench", help="relative cost of the interval methods")
    _add_bootstrap(s)
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--alpha-left", type=float, default=-2.0)
    s.add_argument("--alpha-right", type=float, default=-3.0)
    s.add_argument("--seed", type=int)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on bad flags
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"edgeci {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"edgeci {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

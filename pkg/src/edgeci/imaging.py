"""Windowed edge intervals on real rasters and their overlay output.

A user-chosen rectangle is cut into equal windows across the detection
direction.  In each window the detection line runs through the transverse
midline; every pixel of the window contributes to the strip at its position
along the line.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import quoteattr

import numpy as np

from .bootstrap import PERC, BootstrapConfig, ConfidenceInterval, confidence_interval
from .detectors import EdgeEstimate, KruskalWallisDetector, PixelStrip, StripOrigin
from .simulation import AGGREGATIONS, image_to_strip

VERTICAL = "vertical"      # detection line runs down a column
HORIZONTAL = "horizontal"  # detection line runs along a row


class RasterFormatError(ValueError):
    pass


@dataclass
class Raster:
    pixels: np.ndarray  # (height, width)
    source: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2:
            raise ValueError("raster must be 2-D")
        if np.any(self.pixels < 0):
            raise ValueError("intensities must be nonnegative")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _pgm_tokens(data: bytes, count: int, start: int = 0):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = start
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i >= len(data):
            raise RasterFormatError(f"truncated PGM header at byte {i}")
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        tokens.append((data[i:j], i))
        i = j
    return tokens, i


def _parse_pgm(data: bytes) -> np.ndarray:
    header, end = _pgm_tokens(data, 4)
    magic = header[0][0]
    if magic not in (b"P2", b"P5"):
        raise RasterFormatError(f"not a PGM file (magic {magic!r} at byte 0)")
    try:
        width, height, maxval = (int(tok) for tok, _ in header[1:])
    except ValueError:
        bad = next(off for tok, off in header[1:] if not tok.isdigit())
        raise RasterFormatError(f"non-integer PGM header field at byte {bad}") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise RasterFormatError(f"invalid PGM header {width}x{height} maxval {maxval}")
    n = width * height
    if magic == b"P5":
        body = data[end + 1:]  # exactly one whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        if len(body) < n * dtype.itemsize:
            raise RasterFormatError(
                f"P5 raster needs {n * dtype.itemsize} data bytes after byte {end + 1}, "
                f"found {len(body)}")
        values = np.frombuffer(body, dtype=dtype, count=n).astype(float)
    else:
        text = re.sub(rb"#[^\n]*", b"", data[end:])
        fields = text.split()
        if len(fields) != n:
            raise RasterFormatError(f"P2 raster expects {n} samples, found {len(fields)}")
        try:
            values = np.array([int(f) for f in fields], dtype=float)
        except ValueError as exc:
            raise RasterFormatError(f"bad P2 sample: {exc}") from None
    if values.max(initial=0) > maxval:
        raise RasterFormatError("sample exceeds maxval")
    return values.reshape(height, width)


def _parse_csv(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise RasterFormatError(f"non-numeric CSV value on line {lineno}") from None
        if len(rows[-1]) != len(rows[0]):
            raise RasterFormatError(
                f"line {lineno} has {len(rows[-1])} values, expected {len(rows[0])}")
    if not rows:
        raise RasterFormatError("empty CSV raster")
    return np.array(rows)


def load_raster(path, format: Optional[str] = None) -> Raster:
    """Load a PGM (P2/P5) or CSV-matrix raster.

    ``format`` is ``"pgm"`` or ``"csv"``; by default it is taken from the file
    extension, falling back to the PGM magic number.
    """
    path = Path(path)
    data = path.read_bytes()
    if format is None:
        ext = path.suffix.lower()
        format = "csv" if ext in (".csv", ".txt") else "pgm" if ext in (".pgm", ".pnm") else (
            "pgm" if data[:2] in (b"P2", b"P5") else "csv")
    if format == "pgm":
        pixels = _parse_pgm(data)
    elif format == "csv":
        pixels = _parse_csv(data.decode("utf-8"))
    else:
        raise ValueError(f"unknown raster format {format!r}")
    return Raster(pixels, str(path))


def save_csv_matrix(raster: Raster, path) -> None:
    # repr() round-trips floats exactly
    lines = [",".join(repr(float(v)) for v in row) for row in raster.pixels]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_pgm(pixels, path, binary: bool = True, maxval: Optional[int] = None) -> None:
    """Write integer samples as PGM P5 (binary) or P2 (plain)."""
    a = np.asarray(pixels)
    if np.any(a < 0) or np.any(a != np.round(a)):
        raise ValueError("PGM samples must be nonnegative integers")
    a = a.astype(np.int64)
    maxval = int(maxval or max(int(a.max()), 1))
    if maxval > 65535 or a.max() > maxval:
        raise ValueError("samples exceed the PGM range")
    h, w = a.shape
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        body = a.astype(dtype).tobytes()
        Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + body)
    else:
        lines = "\n".join(" ".join(str(v) for v in row) for row in a)
        Path(path).write_text(f"P2\n{w} {h}\n{maxval}\n{lines}\n")


@dataclass(frozen=True)
class WindowSpec:
    """Rectangle ``(x, y, w, h)`` split into ``n_windows`` across the line direction."""

    x: int
    y: int
    w: int
    h: int
    orientation: str = VERTICAL
    n_windows: int = 10
    aggregation: str = "window"

    def __post_init__(self):
        if self.orientation not in (VERTICAL, HORIZONTAL):
            raise ValueError(f"orientation must be {VERTICAL!r} or {HORIZONTAL!r}")
        if self.n_windows < 1:
            raise ValueError("n_windows must be positive")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if min(self.w, self.h) < 1 or min(self.x, self.y) < 0:
            raise ValueError("rectangle must have positive size and nonnegative origin")

    @property
    def transverse(self) -> int:
        return self.w if self.orientation == VERTICAL else self.h

    @property
    def line_length(self) -> int:
        return self.h if self.orientation == VERTICAL else self.w

    def check(self, raster: Raster) -> None:
        if self.x + self.w > raster.width or self.y + self.h > raster.height:
            raise ValueError(f"rectangle {self.x, self.y, self.w, self.h} exceeds raster "
                             f"{raster.width}x{raster.height}")
        if self.transverse % self.n_windows:
            raise ValueError(f"{self.n_windows} windows do not divide the transverse "
                             f"extent {self.transverse}")


@dataclass(frozen=True)
class WindowGeometry:
    index: int
    x: int
    y: int
    w: int
    h: int
    origin: StripOrigin
    length: int

    def to_image(self, k: int) -> tuple[int, int]:
        """(row, col) of strip position ``k`` (0-based)."""
        return self.origin.to_image(k)


def extract_windows(raster: Raster, spec: WindowSpec):
    """List of ``(pixels, geometry)``; ``pixels`` is ``(line_length, thickness)``."""
    spec.check(raster)
    step = spec.transverse // spec.n_windows
    out = []
    for i in range(spec.n_windows):
        if spec.orientation == VERTICAL:
            x, y, w, h = spec.x + i * step, spec.y, step, spec.h
            block = raster.pixels[y:y + h, x:x + w]
            origin = StripOrigin(row=y, col=x + w // 2, drow=1, dcol=0)
            pixels = block
        else:
            x, y, w, h = spec.x, spec.y + i * step, spec.w, step
            block = raster.pixels[y:y + h, x:x + w]
            origin = StripOrigin(row=y + h // 2, col=x, drow=0, dcol=1)
            pixels = block.T
        out.append((pixels, WindowGeometry(i, x, y, w, h, origin, spec.line_length)))
    return out


@dataclass
class WindowResult:
    index: int
    geometry: WindowGeometry
    estimate: Optional[EdgeEstimate] = None
    intervals: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    offset: float = 0.0
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.estimate is not None

    def edge_pixel(self, j: int) -> tuple[int, int]:
        """Image (row, col) of the last pixel left of split ``j``."""
        return self.geometry.to_image(int(j) - 1)


def _positive(pixels: np.ndarray) -> tuple[np.ndarray, float]:
    if np.all(pixels > 0):
        return pixels, 0.0
    pos = pixels[pixels > 0]
    if not pos.size:
        raise ValueError("window has no positive pixels")
    offset = float(pos.min()) / 2
    return pixels + offset, offset


def analyze_window(pixels, geometry: WindowGeometry, detector=None,
                   configs: Sequence[BootstrapConfig] = (BootstrapConfig(),),
                   rng: Optional[np.random.Generator] = None, aggregation: str = "window",
                   no_edge_fraction: float = 0.4) -> WindowResult:
    """Edge estimate and intervals for one window.

    Zero pixels are shifted by half the smallest positive value; the shift is
    kept in ``offset``.  A method whose interval covers at least
    ``no_edge_fraction`` of the line is flagged ``no_edge_suspected:<method>``.
    """
    detector = detector or KruskalWallisDetector()
    rng = rng if rng is not None else np.random.default_rng()
    result = WindowResult(geometry.index, geometry)
    try:
        values, result.offset = _positive(np.asarray(pixels, dtype=float))
        strip = image_to_strip(values.T, aggregation)
        strip = PixelStrip(strip.values, geometry.origin)
        result.estimate = detector.estimate(strip)
    except Exception as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        return result
    for cfg in configs:
        try:
            ci = confidence_interval(strip, detector, cfg, rng)
        except Exception as exc:
            result.intervals[cfg.method] = None
            result.flags.append(f"failed:{cfg.method}")
            continue
        result.intervals[cfg.method] = ci
        if ci.length >= no_edge_fraction * geometry.length:
            result.flags.append(f"no_edge_suspected:{cfg.method}")
    return result


def analyze_rectangle(raster: Raster, spec: WindowSpec, detector=None,
                      configs: Sequence[BootstrapConfig] = (BootstrapConfig(),),
                      seed: int = 0, rect_index: int = 0,
                      no_edge_fraction: float = 0.4) -> list[WindowResult]:
    results = []
    for pixels, geom in extract_windows(raster, spec):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rect_index, geom.index)))
        results.append(analyze_window(pixels, geom, detector, configs, rng,
                                      spec.aggregation, no_edge_fraction))
    return results


def parse_rectangles(text: str) -> list[WindowSpec]:
    """Parse ``x y w h orientation n_windows aggregation`` lines (``#`` comments)."""
    specs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (6, 7):
            raise ValueError(f"line {lineno}: expected 'x y w h orientation n_windows "
                             f"[aggregation]', got {len(parts)} fields")
        try:
            x, y, w, h = (int(p) for p in parts[:4])
            n = int(parts[5])
        except ValueError:
            raise ValueError(f"line {lineno}: integer field expected") from None
        agg = parts[6] if len(parts) == 7 else "window"
        try:
            specs.append(WindowSpec(x, y, w, h, parts[4].lower(), n, agg))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return specs


def _pt(rc) -> str:
    r, c = rc
    return f"{c + 0.5:g},{r + 0.5:g}"


def overlay_svg(results: Sequence[WindowResult], width: int, height: int,
                method: str = PERC) -> str:
    """SVG with yellow window frames, green limit lines and a red estimate line."""
    ok = sorted((r for r in results if r.ok), key=lambda r: r.index)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">']
    for r in sorted(results, key=lambda r: r.index):
        g = r.geometry
        parts.append(f'  <rect class="window" x="{g.x}" y="{g.y}" width="{g.w}" height="{g.h}" '
                     f'fill="none" stroke="yellow" stroke-width="1"/>')
    with_ci = [r for r in ok if r.intervals.get(method) is not None]
    for name, pick in (("lower", lambda ci: ci.lower), ("upper", lambda ci: ci.upper)):
        pts = " ".join(_pt(r.edge_pixel(pick(r.intervals[method]))) for r in with_ci)
        parts.append(f'  <polyline class="{name}" points={quoteattr(pts)} fill="none" '
                     f'stroke="green" stroke-width="1"/>')
    pts = " ".join(_pt(r.edge_pixel(r.estimate.j_hat)) for r in ok)
    parts.append(f'  <polyline class="estimate" points={quoteattr(pts)} fill="none" '
                 f'stroke="red" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def results_rows(results: Sequence[WindowResult], methods: Sequence[str], rect_index: int = 0):
    rows = []
    for r in sorted(results, key=lambda r: r.index):
        row = {"rectangle": rect_index, "window": r.index}
        if r.ok:
            er, ec = r.edge_pixel(r.estimate.j_hat)
            row.update(j_hat=r.estimate.j_hat, est_row=er, est_col=ec)
        for m in methods:
            ci: Optional[ConfidenceInterval] = r.intervals.get(m)
            if ci is None:
                continue
            lr, lc = r.edge_pixel(ci.lower)
            ur, uc = r.edge_pixel(ci.upper)
            row.update({f"{m}_lower": ci.lower, f"{m}_upper": ci.upper,
                        f"{m}_length": ci.length, f"{m}_lower_row": lr, f"{m}_lower_col": lc,
                        f"{m}_upper_row": ur, f"{m}_upper_col": uc})
        row.update(flags=";".join(r.flags), offset=r.offset, error=r.error)
        rows.append(row)
    return rows


def emit_overlay(results: Sequence[WindowResult], width: int, height: int, svg_path,
                 csv_path=None, method: str = PERC, methods: Optional[Sequence[str]] = None):
    """Write the SVG overlay and, if ``csv_path`` is given, the per-window table."""
    if not results:
        raise ValueError("no window results to draw")
    Path(svg_path).write_text(overlay_svg(results, width, height, method), encoding="utf-8")
    if csv_path is not None:
        methods = methods or sorted({m for r in results for m in r.intervals})
        from .simulation import rows_to_csv
        Path(csv_path).write_text(rows_to_csv(results_rows(results, methods)), encoding="utf-8")

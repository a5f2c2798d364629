"""Rasterize grid-keyed values into map images and demand curves.

Outputs must be byte-identical across runs and library versions, so PNGs are
written by a minimal encoder here (8-bit RGB, zlib level 9, no timestamps)
and SVGs use fixed-precision text. Higher values render brighter and warmer
on the default ramp; error maps run black (accurate) to white (wrong).
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .evalx import SurfacePoint
from .geo_grid import GeoPoint, GridSpec, grid_shape, project

N_HOURS = 24
MISSING_COLOR = (128, 128, 255)  # distinct from every gray and ramp stop


# ---------------------------------------------------------------------------
# Minimal PNG writer
# ---------------------------------------------------------------------------


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF))


def write_png(path: str | Path, pixels: np.ndarray, text: dict | None = None) -> None:
    """Write an 8-bit RGB PNG; identical pixels yield identical bytes."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"pixels must have shape (h, w, 3), got {pixels.shape}")
    h, w, _ = pixels.shape
    raw = b"".join(b"\x00" + pixels[row].tobytes() for row in range(h))
    out = [b"\x89PNG\r\n\x1a\n",
           _chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))]
    for key in sorted(text or {}):
        out.append(_chunk(b"tEXt", key.encode("latin-1") + b"\x00"
                          + str((text or {})[key]).encode("latin-1")))
    out.append(_chunk(b"IDAT", zlib.compress(raw, 9)))
    out.append(_chunk(b"IEND", b""))
    Path(path).write_bytes(b"".join(out))


# ---------------------------------------------------------------------------
# Rasters and color ramps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridRaster:
    """Per-cell values on the sampling lattice; NaN marks missing cells."""

    values: np.ndarray  # (rows, cols), row 0 southernmost
    cell_size_m: float
    origin: GeoPoint

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ShapeError("raster values must be 2-D")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ColorRamp:
    """Ordered RGB stops over the [0, 1] value domain."""

    stops: tuple[tuple[float, tuple[int, int, int]], ...]

    def __post_init__(self):
        pos = [p for p, _ in self.stops]
        if len(pos) < 2 or any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("ramp stops must be strictly increasing")
        if pos[0] != 0.0 or pos[-1] != 1.0:
            raise ValueError("ramp must cover [0, 1]")

    def sample(self, v: float) -> tuple[int, int, int]:
        v = min(1.0, max(0.0, v))
        for (p0, c0), (p1, c1) in zip(self.stops, self.stops[1:]):
            if v <= p1:
                t = (v - p0) / (p1 - p0)
                return tuple(int(round(c0[i] + t * (c1[i] - c0[i]))) for i in range(3))
        return self.stops[-1][1]


RAMPS = {
    "heat": ColorRamp(((0.0, (8, 8, 64)), (0.5, (200, 60, 40)), (1.0, (255, 235, 90)))),
    "gray": ColorRamp(((0.0, (0, 0, 0)), (1.0, (255, 255, 255)))),
    "viridis-ish": ColorRamp(((0.0, (68, 1, 84)), (0.5, (33, 145, 140)), (1.0, (253, 231, 37)))),
}


def raster_from_values(centers: list[GeoPoint], values: np.ndarray,
                       spec: GridSpec) -> GridRaster:
    """Place per-center values onto the lattice; unseen cells stay missing."""
    rows, cols = grid_shape(spec)
    grid = np.full((rows, cols), np.nan)
    for center, v in zip(centers, values):
        xy = project(center, spec.min)
        ix = int(round(xy.x / spec.step_m))
        iy = int(round(xy.y / spec.step_m))
        if 0 <= iy < rows and 0 <= ix < cols:
            grid[iy, ix] = v
    return GridRaster(grid, spec.step_m, spec.min)


def raster_from_surface(points: list[SurfacePoint], spec: GridSpec,
                        field: str = "accuracy") -> GridRaster:
    centers = [GeoPoint(p.lon, p.lat) for p in points]
    values = np.array([getattr(p, field) for p in points], dtype=float)
    return raster_from_values(centers, values, spec)


def render_heatmap(raster: GridRaster, ramp: ColorRamp, path: str | Path,
                   cell_px: int = 4, metadata: dict | None = None) -> None:
    """Max-normalize the raster to [0, 1] and write one pixel block per cell."""
    v = raster.values
    vmax = np.nanmax(v) if np.isfinite(v).any() else 0.0
    norm = v / vmax if vmax > 0 else np.zeros_like(v)
    rows, cols = v.shape
    img = np.zeros((rows, cols, 3), dtype=np.uint8)
    for iy in range(rows):
        for ix in range(cols):
            if math.isnan(norm[iy, ix]):
                img[iy, ix] = MISSING_COLOR
            else:
                img[iy, ix] = ramp.sample(float(norm[iy, ix]))
    img = np.kron(img[::-1], np.ones((cell_px, cell_px, 1), dtype=np.uint8))  # north-up
    write_png(path, img, metadata)


def render_error_map(surface: list[SurfacePoint], spec: GridSpec, path: str | Path,
                     cell_px: int = 4, metadata: dict | None = None) -> None:
    """Grayscale error map: value = clamp(1 - accuracy, 0, 1), black to white."""
    raster = raster_from_surface(surface, spec, "accuracy")
    rows, cols = raster.values.shape
    img = np.zeros((rows, cols, 3), dtype=np.uint8)
    for iy in range(rows):
        for ix in range(cols):
            acc = raster.values[iy, ix]
            if math.isnan(acc):
                img[iy, ix] = MISSING_COLOR
            else:
                level = int(round(255 * min(1.0, max(0.0, 1.0 - acc))))
                img[iy, ix] = (level, level, level)
    img = np.kron(img[::-1], np.ones((cell_px, cell_px, 1), dtype=np.uint8))
    write_png(path, img, metadata)


# ---------------------------------------------------------------------------
# Demand curves (SVG)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurveSeries:
    label: str
    values: np.ndarray  # 24 entries
    faded: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (N_HOURS,):
            raise ShapeError(f"a curve needs 24 values, got {v.shape}")
        object.__setattr__(self, "values", v)


_PALETTE = ("#d81b60", "#1e88e5", "#43a047", "#fb8c00", "#8e24aa", "#00acc1")


def render_curves(series: list[CurveSeries], path: str | Path,
                  metadata: dict | None = None) -> None:
    """Overlaid 24-hour line chart with legend; deterministic SVG text."""
    if not series:
        raise ShapeError("need at least one series")
    width, height, pad = 640, 400, 48
    ymax = max(float(np.max(s.values)) for s in series)
    ymax = ymax if ymax > 0 else 1.0
    sx = (width - 2 * pad) / (N_HOURS - 1)
    sy = (height - 2 * pad) / ymax

    def px(hour: int) -> str:
        return f"{pad + hour * sx:.2f}"

    def py(v: float) -> str:
        return f"{height - pad - v * sy:.2f}"

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
    ]
    if metadata:
        meta = ",".join(f"{k}={metadata[k]}" for k in sorted(metadata))
        lines.append(f"<!-- {meta} -->")
    lines.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    lines.append(f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
                 f'y2="{height - pad}" stroke="#444" stroke-width="1"/>')
    lines.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
                 f'stroke="#444" stroke-width="1"/>')
    for hour in range(0, N_HOURS, 3):
        lines.append(f'<text x="{px(hour)}" y="{height - pad + 18}" font-size="11" '
                     f'text-anchor="middle" fill="#444">{hour}</text>')
    lines.append(f'<text x="{pad - 8}" y="{py(ymax)}" font-size="11" text-anchor="end" '
                 f'fill="#444">{ymax:.3f}</text>')
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        opacity = "0.35" if s.faded else "1.0"
        pts = " ".join(f"{px(h)},{py(float(s.values[h]))}" for h in range(N_HOURS))
        lines.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="2" stroke-opacity="{opacity}"/>')
        ly = pad + 16 * i
        lines.append(f'<line x1="{width - pad - 110}" y1="{ly}" x2="{width - pad - 86}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2" '
                     f'stroke-opacity="{opacity}"/>')
        lines.append(f'<text x="{width - pad - 80}" y="{ly + 4}" font-size="11" '
                     f'fill="#222">{_escape(s.label)}</text>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")

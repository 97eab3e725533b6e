"""Zone partitions of normalized image space.

A partition is an ordered list of named zones, each a union of half-open
rectangles in [0, 1)^2.  Half-open bounds resolve boundary ties: a point on a
shared edge belongs to exactly one zone.  Annular zones are stored as a frame
decomposition (at most 4 disjoint rectangles), which keeps areas exactly
computable.

Zone areas are computed with rational arithmetic at build time, so e.g. the
innermost ring of a 5-ring partition has area fraction exactly 0.04 and the
border union exactly 0.96.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .coco import ImageInfo
from .errors import OutsideImageError, PartitionError

_FRAC = Fraction


@dataclass(frozen=True)
class Annular:
    n: int


@dataclass(frozen=True)
class StripX:
    n: int


@dataclass(frozen=True)
class StripY:
    n: int


@dataclass(frozen=True)
class Grid:
    rows: int
    cols: int


@dataclass(frozen=True)
class Custom:
    # tuple of (name, ((x0, y0, x1, y1), ...)) in normalized coordinates
    zones: tuple


ZoneSpec = Annular | StripX | StripY | Grid | Custom


@dataclass(frozen=True)
class Rect:
    """Half-open rectangle [x0, x1) x [y0, y1) in normalized coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, u: float, v: float) -> bool:
        return self.x0 <= u < self.x1 and self.y0 <= v < self.y1

    @property
    def is_empty(self) -> bool:
        return self.x1 <= self.x0 or self.y1 <= self.y0


class Zone:
    """Named union of non-overlapping rectangles with an exact area."""

    def __init__(self, zone_id: str, rects: list[Rect], area_exact: Fraction) -> None:
        self.id = zone_id
        self.rects = [r for r in rects if not r.is_empty]
        self.area_exact = area_exact

    @property
    def area_fraction(self) -> float:
        return float(self.area_exact)

    def contains(self, u: float, v: float) -> bool:
        return any(r.contains(u, v) for r in self.rects)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Zone({self.id!r}, area={float(self.area_exact):.6f})"


def annular_rect(i: int, n: int) -> Rect:
    """Centered square region number i of an n-ring layout.

    The region spans [i/(2n), 1 - i/(2n)) on both axes; i = n gives the empty
    degenerate rectangle at the image center.
    """
    if not 0 <= i <= n:
        raise PartitionError(f"annular region index {i} out of range for n={n}")
    lo = _FRAC(i, 2 * n)
    hi = 1 - lo
    return Rect(float(lo), float(lo), float(hi), float(hi))


def _frame_rects(a: Fraction, b: Fraction) -> list[Rect]:
    """Decompose the frame [a,1-a)^2 \\ [b,1-b)^2 into disjoint rectangles.

    a < b <= 1/2. When b >= 1/2 the inner square is empty and the top/bottom
    strips alone tile the whole outer square.
    """
    a_, b_ = float(a), float(b)
    ca, cb = float(1 - a), float(1 - b)
    rects = [
        Rect(a_, a_, ca, b_),   # top strip
        Rect(a_, cb, ca, ca),   # bottom strip
        Rect(a_, b_, b_, cb),   # left strip
        Rect(cb, b_, ca, cb),   # right strip
    ]
    return [r for r in rects if not r.is_empty]


class Partition:
    """Ordered disjoint cover of [0, 1)^2. Immutable after build."""

    def __init__(self, spec: ZoneSpec, zones: list[Zone]) -> None:
        self.spec = spec
        self.zones = zones
        self.zones_by_id = {z.id: z for z in zones}
        if len(self.zones_by_id) != len(zones):
            raise PartitionError("duplicate zone id in partition")

    @property
    def zone_ids(self) -> list[str]:
        return [z.id for z in self.zones]

    def zone_of(self, point: tuple[float, float], img: ImageInfo) -> str:
        """Zone id of a pixel-coordinate point.

        The point is normalized by the image size; coordinates exactly on the
        right/bottom edge are nudged inward so every point of the closed image
        domain gets a zone.
        """
        x, y = point
        if not (0.0 <= x <= img.width and 0.0 <= y <= img.height):
            raise OutsideImageError(
                f"point ({x}, {y}) outside image {img.id} ({img.width}x{img.height})"
            )
        u = x / img.width
        v = y / img.height
        if u >= 1.0:
            u = math.nextafter(1.0, 0.0)
        if v >= 1.0:
            v = math.nextafter(1.0, 0.0)
        for z in self.zones:
            if z.contains(u, v):
                return z.id
        # unreachable for a valid partition
        raise PartitionError(f"no zone contains normalized point ({u}, {v})")

    def zone_of_clamped(self, point: tuple[float, float], img: ImageInfo) -> str:
        """Like zone_of, but clamps out-of-image points onto the border first.

        Evaluation uses this so that boxes overflowing the image edge still
        land in exactly one (border) zone and zone counts partition the data.
        """
        x = min(max(point[0], 0.0), img.width)
        y = min(max(point[1], 0.0), img.height)
        return self.zone_of((x, y), img)

    def area_fraction(self, zone_id: str) -> float:
        if zone_id not in self.zones_by_id:
            raise PartitionError(f"unknown zone id {zone_id!r}")
        return self.zones_by_id[zone_id].area_fraction

    def membership_counts(self, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """Number of zones containing each normalized point (vectorized).

        Equals 1 everywhere for a valid partition; used by validation and
        property tests.
        """
        count = np.zeros(np.broadcast(us, vs).shape, dtype=np.int32)
        for z in self.zones:
            for r in z.rects:
                count += (
                    (us >= r.x0) & (us < r.x1) & (vs >= r.y0) & (vs < r.y1)
                ).astype(np.int32)
        return count


def _build_annular(n: int) -> list[Zone]:
    zones = []
    for i in range(n):
        a = _FRAC(i, 2 * n)
        b = _FRAC(i + 1, 2 * n)
        rects = _frame_rects(a, b)
        outer = (1 - 2 * a) ** 2
        inner = (1 - 2 * b) ** 2 if b < _FRAC(1, 2) else _FRAC(0)
        zones.append(Zone(f"z{i},{i + 1}", rects, outer - inner))
    return zones


def _build_strips(n: int, axis: str) -> list[Zone]:
    zones = []
    for k in range(n):
        lo, hi = float(_FRAC(k, n)), float(_FRAC(k + 1, n))
        if axis == "x":
            rect = Rect(lo, 0.0, hi, 1.0)
            zid = f"x{k}"
        else:
            rect = Rect(0.0, lo, 1.0, hi)
            zid = f"y{k}"
        zones.append(Zone(zid, [rect], _FRAC(1, n)))
    return zones


def _build_grid(rows: int, cols: int) -> list[Zone]:
    zones = []
    for r in range(rows):
        y0, y1 = float(_FRAC(r, rows)), float(_FRAC(r + 1, rows))
        for c in range(cols):
            x0, x1 = float(_FRAC(c, cols)), float(_FRAC(c + 1, cols))
            zones.append(Zone(f"g{r}_{c}", [Rect(x0, y0, x1, y1)], _FRAC(1, rows * cols)))
    return zones


def _build_custom(spec: Custom) -> list[Zone]:
    zones = []
    for name, rects in spec.zones:
        rect_objs = []
        area = _FRAC(0)
        for x0, y0, x1, y1 in rects:
            if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
                raise PartitionError(f"zone {name!r}: rectangle {(x0, y0, x1, y1)} not normalized")
            rect_objs.append(Rect(float(x0), float(y0), float(x1), float(y1)))
            area += (_FRAC(float(x1)) - _FRAC(float(x0))) * (_FRAC(float(y1)) - _FRAC(float(y0)))
        zones.append(Zone(str(name), rect_objs, area))
    return zones


_VALIDATION_RES = 1000


def build_partition(spec: ZoneSpec) -> Partition:
    """Build a partition from a spec and, for custom specs, validate coverage."""
    if isinstance(spec, Annular):
        if spec.n < 1:
            raise PartitionError("annular partition needs n >= 1")
        zones = _build_annular(spec.n)
    elif isinstance(spec, StripX):
        if spec.n < 1:
            raise PartitionError("strip partition needs n >= 1")
        zones = _build_strips(spec.n, "x")
    elif isinstance(spec, StripY):
        if spec.n < 1:
            raise PartitionError("strip partition needs n >= 1")
        zones = _build_strips(spec.n, "y")
    elif isinstance(spec, Grid):
        if spec.rows < 1 or spec.cols < 1:
            raise PartitionError("grid partition needs rows, cols >= 1")
        zones = _build_grid(spec.rows, spec.cols)
    elif isinstance(spec, Custom):
        if not spec.zones:
            raise PartitionError("custom partition has no zones")
        zones = _build_custom(spec)
        p = Partition(spec, zones)
        _validate_cover(p)
        return p
    else:
        raise PartitionError(f"unknown zone spec {spec!r}")
    return Partition(spec, zones)


def _validate_cover(p: Partition) -> None:
    ticks = (np.arange(_VALIDATION_RES) + 0.5) / _VALIDATION_RES
    us, vs = np.meshgrid(ticks, ticks)
    counts = p.membership_counts(us, vs)
    if (counts > 1).any():
        i, j = np.argwhere(counts > 1)[0]
        raise PartitionError(f"custom zones overlap near ({us[i, j]:.4f}, {vs[i, j]:.4f})")
    if (counts == 0).any():
        i, j = np.argwhere(counts == 0)[0]
        raise PartitionError(f"custom zones leave a gap near ({us[i, j]:.4f}, {vs[i, j]:.4f})")


def spec_label(spec: ZoneSpec) -> str:
    """Stable CLI-style label for a spec, used in report metadata."""
    if isinstance(spec, Annular):
        return f"annular:{spec.n}"
    if isinstance(spec, StripX):
        return f"strip-x:{spec.n}"
    if isinstance(spec, StripY):
        return f"strip-y:{spec.n}"
    if isinstance(spec, Grid):
        return f"grid:{spec.rows}x{spec.cols}"
    if isinstance(spec, Custom):
        return f"custom:{len(spec.zones)} zones"
    raise PartitionError(f"unknown zone spec {spec!r}")


def parse_zone_spec(text: str) -> ZoneSpec:
    """Parse the CLI partition syntax.

    Accepted forms: ``annular:5``, ``strip-x:5``, ``strip-y:5``,
    ``grid:11x11``, ``custom:@zones.json``.
    """
    m = re.fullmatch(r"annular:(\d+)", text)
    if m:
        return Annular(int(m.group(1)))
    m = re.fullmatch(r"strip-x:(\d+)", text)
    if m:
        return StripX(int(m.group(1)))
    m = re.fullmatch(r"strip-y:(\d+)", text)
    if m:
        return StripY(int(m.group(1)))
    m = re.fullmatch(r"grid:(\d+)x(\d+)", text)
    if m:
        return Grid(int(m.group(1)), int(m.group(2)))
    m = re.fullmatch(r"custom:@(.+)", text)
    if m:
        return load_custom_spec(m.group(1))
    raise PartitionError(f"cannot parse partition spec {text!r}")


def load_custom_spec(path: str | Path) -> Custom:
    """Read a custom-zones JSON file: list of {name, rects: [[x0,y0,x1,y1], ...]}."""
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise PartitionError(f"cannot read zones file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise PartitionError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, list):
        raise PartitionError(f"{path}: custom zones file must be a JSON list")
    zones = []
    for rec in data:
        try:
            zones.append((str(rec["name"]), tuple(tuple(map(float, r)) for r in rec["rects"])))
        except (KeyError, TypeError, ValueError) as e:
            raise PartitionError(f"{path}: malformed zone record {rec!r}") from e
    return Custom(tuple(zones))

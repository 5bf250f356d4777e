"""Boxes, masks and contours, and the conversions between them.

Pixel ``(i, j)`` (row ``i``, column ``j``) occupies the unit cell
``[j, j + 1] x [i, i + 1]``; x grows rightward and y downward. Contours live
on cell corners, so mask -> contour -> mask round trips are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

_EIGHT = np.ones((3, 3), dtype=bool)
_CROSS = ndimage.generate_binary_structure(2, 1)


class EmptyMask(ValueError):
    """Raised when an operation needs at least one foreground pixel."""


class DegenerateContour(ValueError):
    """Raised for polygons with fewer than 3 vertices or zero area."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel units, ``[x_min, y_min, x_max, y_max]``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        for c in coords:
            if isinstance(c, bool) or not isinstance(c, (int, float, np.integer, np.floating)):
                raise TypeError(f"box coordinate must be a number, got {c!r}")
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box {coords}")
        if min(coords) < 0:
            raise ValueError(f"negative box coordinate in {coords}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"box has non-positive area: {coords}")
        # normalise numpy scalars and ints to plain floats
        for name, c in zip(("x_min", "y_min", "x_max", "y_max"), coords):
            object.__setattr__(self, name, float(c))

    @classmethod
    def from_list(cls, xs: Sequence[float]) -> "BBox":
        if len(xs) != 4:
            raise ValueError(f"expected 4 coordinates, got {len(xs)}")
        return cls(*xs)

    def to_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def normalized(self, width: int, height: int, scale: float = 1.0) -> tuple[float, ...]:
        """Coordinates divided by the image size and multiplied by ``scale``.

        ``scale=1`` gives the [0, 1] view, ``scale=1000`` the integer-token view
        some grounding models emit.
        """
        return (
            self.x_min / width * scale,
            self.y_min / height * scale,
            self.x_max / width * scale,
            self.y_max / height * scale,
        )

    @classmethod
    def from_normalized(cls, coords: Sequence[float], width: int, height: int,
                        scale: float = 1.0) -> "BBox":
        x0, y0, x1, y1 = coords
        return cls(x0 / scale * width, y0 / scale * height,
                   x1 / scale * width, y1 / scale * height)


class BinaryMask:
    """Immutable H x W binary grid backed by a read-only bool array."""

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=bool, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def zeros(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def from_box(cls, box: BBox, height: int, width: int) -> "BinaryMask":
        """Pixels whose centers fall inside ``box``."""
        xs = np.arange(width) + 0.5
        ys = np.arange(height) + 0.5
        cols = (xs > box.x_min) & (xs < box.x_max)
        rows = (ys > box.y_min) & (ys < box.y_max)
        return cls(np.outer(rows, cols))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    def foreground_count(self) -> int:
        return int(self._data.sum())

    def is_empty(self) -> bool:
        return not self._data.any()

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self, other)
        return BinaryMask(self._data | other._data)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        _check_same_shape(self, other)
        return BinaryMask(self._data & other._data)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self) -> int:
        return hash((self.shape, np.packbits(self._data).tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMask({self.height}x{self.width}, fg={self.foreground_count()})"


def _check_same_shape(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")


class Contour:
    """Closed polygon over pixel-corner coordinates; last vertex joins the first."""

    __slots__ = ("_vertices",)

    def __init__(self, vertices: Iterable[Sequence[float]]):
        verts = tuple((float(x), float(y)) for x, y in vertices)
        if len(verts) < 3:
            raise DegenerateContour(f"contour needs >= 3 vertices, got {len(verts)}")
        for k, v in enumerate(verts):
            if not (math.isfinite(v[0]) and math.isfinite(v[1])):
                raise ValueError(f"non-finite vertex {v}")
            if v == verts[(k + 1) % len(verts)]:
                raise DegenerateContour(f"repeated consecutive vertex {v} at index {k}")
        self._vertices = verts

    @property
    def vertices(self) -> tuple[tuple[float, float], ...]:
        return self._vertices

    def __len__(self) -> int:
        return len(self._vertices)

    def __iter__(self):
        return iter(self._vertices)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Contour):
            return NotImplemented
        return self._vertices == other._vertices

    def __hash__(self) -> int:
        return hash(self._vertices)

    def __repr__(self) -> str:
        return f"Contour({list(self._vertices)})"

    def signed_area(self) -> float:
        """Shoelace area; positive for clockwise order in y-down image coordinates."""
        v = np.asarray(self._vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def to_list(self) -> list[list[float]]:
        return [[x, y] for x, y in self._vertices]


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)


def bbox_centroid(b: BBox) -> Point:
    return Point((b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2)


def label_components(m: BinaryMask) -> list[np.ndarray]:
    """8-connected foreground components as bool arrays, ordered by (y_min, x_min)."""
    labels, n = ndimage.label(m.data, structure=_EIGHT)
    if n == 0:
        return []
    slices = ndimage.find_objects(labels)
    order = sorted(
        range(n),
        key=lambda k: (slices[k][0].start, slices[k][1].start,
                       slices[k][0].stop, slices[k][1].stop, k),
    )
    return [labels == (k + 1) for k in order]


def tight_box(arr: np.ndarray) -> BBox:
    rows = np.flatnonzero(arr.any(axis=1))
    cols = np.flatnonzero(arr.any(axis=0))
    return BBox(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def mask_to_bbox(m: BinaryMask, per_component: bool = False) -> list[BBox]:
    """Tight pixel-cell boxes around the foreground (Mask2Bbox).

    With ``per_component`` one box per 8-connected component, sorted by
    ``(y_min, x_min)``; otherwise a single box over all foreground.
    """
    if per_component:
        return [tight_box(c) for c in label_components(m)]
    if m.is_empty():
        raise EmptyMask("mask has no foreground pixels")
    return [tight_box(m.data)]


# Heading vectors in (dx, dy), y pointing down.
_EAST = (1, 0)


def _trace_outer(comp: np.ndarray) -> list[tuple[int, int]]:
    """Follow the outer boundary of one component along pixel edges.

    Walks clockwise (foreground on the right) from the top-left corner of the
    top-most, left-most pixel. At each corner the two cells ahead decide the
    turn; a diagonal pair is kept connected, which gives 8-connectivity. The
    walk ends when the start corner is re-entered with the start heading
    (Jacob's stopping criterion), so pinch corners visited twice do not stop it
    early. Only corners where the heading changes are returned.
    """
    h, w = comp.shape

    def fg(row: int, col: int) -> bool:
        return 0 <= row < h and 0 <= col < w and bool(comp[row, col])

    rows = np.flatnonzero(comp.any(axis=1))
    i0 = int(rows[0])
    j0 = int(np.flatnonzero(comp[i0])[0])
    start = (j0, i0)

    x, y = start
    dx, dy = _EAST
    verts = [start]
    while True:
        x, y = x + dx, y + dy
        # cell centers ahead-left / ahead-right, doubled to stay in integers
        lx2, ly2 = 2 * x + dx + dy, 2 * y + dy - dx
        rx2, ry2 = 2 * x + dx - dy, 2 * y + dy + dx
        if fg(ly2 // 2, lx2 // 2):
            ndx, ndy = dy, -dx
        elif fg(ry2 // 2, rx2 // 2):
            ndx, ndy = dx, dy
        else:
            ndx, ndy = -dy, dx
        if (x, y) == start and (ndx, ndy) == _EAST:
            break
        if (ndx, ndy) != (dx, dy):
            verts.append((x, y))
        dx, dy = ndx, ndy
    return verts


def _perp_dist(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    norm = math.hypot(ab[0], ab[1])
    if norm == 0:
        return np.hypot(p[:, 0] - a[0], p[:, 1] - a[1])
    return np.abs(ab[0] * (p[:, 1] - a[1]) - ab[1] * (p[:, 0] - a[0])) / norm


def _douglas_peucker(pts: np.ndarray, eps: float) -> list[int]:
    """Indices kept by Douglas-Peucker on an open polyline (endpoints always kept)."""
    keep = {0, len(pts) - 1}
    stack = [(0, len(pts) - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        d = _perp_dist(pts[lo + 1:hi], pts[lo], pts[hi])
        k = int(np.argmax(d))
        if d[k] > eps:
            mid = lo + 1 + k
            keep.add(mid)
            stack.append((lo, mid))
            stack.append((mid, hi))
    return sorted(keep)


def simplify_ring(verts: Sequence[tuple[float, float]], eps: float) -> list[tuple[float, float]]:
    """Douglas-Peucker on a closed ring, split at the vertex farthest from the first."""
    if eps <= 0 or len(verts) <= 3:
        return list(verts)
    pts = np.asarray(verts, dtype=float)
    far = int(np.argmax(np.hypot(*(pts - pts[0]).T)))
    first = _douglas_peucker(pts[: far + 1], eps)
    second = _douglas_peucker(np.vstack([pts[far:], pts[:1]]), eps)
    idx = first + [far + k for k in second[1:-1]]
    if len(idx) < 3:
        # keep the vertex farthest from the chord so the ring stays a polygon
        chord = _perp_dist(pts, pts[0], pts[far])
        idx = sorted({0, far, int(np.argmax(chord))})
        if len(idx) < 3:
            return list(verts)
    return [tuple(pts[k]) for k in idx]


def mask_to_contour(m: BinaryMask, simplify_eps: float = 0.0) -> list[Contour]:
    """Outer boundary polygon of each 8-connected component (Mask2Contour).

    Holes are ignored. Collinear corners are always dropped, which is
    lossless; ``simplify_eps > 0`` additionally applies Douglas-Peucker.
    """
    out = []
    for comp in label_components(m):
        verts = _trace_outer(comp)
        out.append(Contour(simplify_ring(verts, simplify_eps)))
    return out


def rasterize_contour(c: Contour, width: int, height: int) -> BinaryMask:
    """Even-odd fill; pixel (i, j) is set iff its center lies inside ``c``."""
    if c.signed_area() == 0:
        raise DegenerateContour("contour encloses zero area")
    v = np.asarray(c.vertices, dtype=float)
    if (v < 0).any() or (v[:, 0] > width).any() or (v[:, 1] > height).any():
        raise ValueError("contour leaves the image bounds")
    ys = np.arange(height) + 0.5
    xs = np.arange(width) + 0.5
    parity = np.zeros((height, width), dtype=bool)
    for (x0, y0), (x1, y1) in zip(v, np.roll(v, -1, axis=0)):
        if y0 == y1:
            continue
        rows = np.flatnonzero((ys >= min(y0, y1)) & (ys < max(y0, y1)))
        if rows.size == 0:
            continue
        xint = x0 + (ys[rows] - y0) * (x1 - x0) / (y1 - y0)
        # a center left of the crossing sees one more edge on its ray to +x
        parity[rows] ^= xs[None, :] < xint[:, None]
    return BinaryMask(parity)


def dilate(m: BinaryMask, radius_px: int) -> BinaryMask:
    """Dilation by a (2r+1) x (2r+1) square."""
    if radius_px < 1:
        raise ValueError("radius_px must be >= 1")
    side = 2 * int(radius_px) + 1
    return BinaryMask(ndimage.binary_dilation(m.data, structure=np.ones((side, side), bool)))


def boundary_pixels(m: BinaryMask) -> BinaryMask:
    """Foreground pixels with a background 4-neighbour or lying on the image border."""
    interior = ndimage.binary_erosion(m.data, structure=_CROSS, border_value=0)
    return BinaryMask(m.data & ~interior)


def boundary_points(m: BinaryMask) -> np.ndarray:
    """Pixel-center coordinates ``(x, y)`` of :func:`boundary_pixels`, shape (n, 2)."""
    rows, cols = np.nonzero(boundary_pixels(m).data)
    return np.column_stack([cols + 0.5, rows + 0.5])


def fill_holes(m: BinaryMask) -> BinaryMask:
    return BinaryMask(ndimage.binary_fill_holes(m.data))

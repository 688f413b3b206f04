"""Contours, hulls, minimum-area rectangles and the upright warp.

Sub-pixel positions use the corner-space convention from imagecore: pixel
(x, y) covers [x, x+1) x [y, y+1) and has its center at (x+0.5, y+0.5).
Rectangle sizes are pixel extents: caliper extents over pixel centers plus
one, so a single pixel measures 1x1 and an axis-aligned w x h block
measures exactly (w, h).  Polygon orientation is counter-clockwise as
drawn on screen (y down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import EmptyInputError, GeometryError, SingularQuadError
from .imagecore import BinaryImage, PixelPoint


class PointF(NamedTuple):
    """Sub-pixel position."""

    x: float
    y: float


@dataclass(frozen=True)
class Contour:
    """Closed boundary loop of pixel coordinates.

    Loops produced by trace_contour visit 8-neighboring pixels counter-
    clockwise starting at the topmost-then-leftmost pixel.  The class does
    not validate chain adjacency so that arbitrary point sets can be fed
    to the hull and rectangle operations.
    """

    points: tuple[PixelPoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


@dataclass(frozen=True)
class RotatedRect:
    """Oriented rectangle: center, sizes and an angle in [-90, 0) degrees.

    size_w lies along direction (cos angle, sin angle); it is the edge that
    leaves the lowest corner counter-clockwise.  An axis-aligned enclosure
    therefore reports angle -90 with size_w vertical.
    """

    center: PointF
    size_w: float
    size_h: float
    angle: float

    @property
    def area(self) -> float:
        return self.size_w * self.size_h

    def corners(self) -> list[PointF]:
        """Corner loop, counter-clockwise on screen, lowest corner first."""
        t = math.radians(self.angle)
        wx, wy = math.cos(t), math.sin(t)
        hx, hy = -math.sin(t), math.cos(t)
        cx, cy = self.center
        w2, h2 = self.size_w / 2.0, self.size_h / 2.0
        c0 = PointF(cx - w2 * wx + h2 * hx, cy - w2 * wy + h2 * hy)
        c1 = PointF(c0.x + self.size_w * wx, c0.y + self.size_w * wy)
        c2 = PointF(c1.x - self.size_h * hx, c1.y - self.size_h * hy)
        c3 = PointF(c0.x - self.size_h * hx, c0.y - self.size_h * hy)
        return [c0, c1, c2, c3]


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so m[2][2] == 1."""

    m: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.m, dtype=np.float64)
        if a.shape != (3, 3):
            raise SingularQuadError(f"homography matrix must be 3x3, got {a.shape}")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "m", a)

    def apply(self, p: PointF | tuple[float, float]) -> PointF:
        x, y = p
        m = self.m
        w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
        return PointF(
            (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w,
            (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w,
        )


# Moore neighborhood, counter-clockwise on screen, starting west.  After a
# move along direction k the next scan resumes from _BACKTRACK[k], which
# points at the last background pixel examined before the move.
_MOORE = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
_BACKTRACK = (6, 6, 0, 0, 2, 2, 4, 4)


def trace_contour(img: BinaryImage) -> Contour:
    """Outer boundary of the first white component in row-major order.

    Moore-neighbor following; the walk ends when the opening move out of
    the start pixel repeats.  Holes are ignored.  A lone pixel yields a
    length-1 contour.
    """
    px = img.px
    flat = np.flatnonzero(px.ravel())
    if flat.size == 0:
        raise EmptyInputError("no white pixels to trace")
    h, w = px.shape
    sy, sx = divmod(int(flat[0]), w)

    # 1-px black border lets neighbor checks skip bounds tests; a bytes
    # object is much faster to index from Python than the ndarray.
    pad = np.zeros((h + 2, w + 2), dtype=np.uint8)
    pad[1:-1, 1:-1] = px
    data = pad.tobytes()
    stride = w + 2

    pts: list[PixelPoint] = []
    cx, cy, prev = sx, sy, 0
    first_k = -1
    cap = 4 * flat.size + 8
    for _ in range(cap):
        k = -1
        for s in range(1, 9):
            t = (prev + s) & 7
            dx, dy = _MOORE[t]
            if data[(cy + dy + 1) * stride + (cx + dx + 1)]:
                k = t
                break
        if k < 0:
            return Contour((PixelPoint(sx, sy),))
        if first_k < 0:
            first_k = k
        elif cx == sx and cy == sy and k == first_k:
            return Contour(tuple(pts))
        pts.append(PixelPoint(cx, cy))
        dx, dy = _MOORE[k]
        cx += dx
        cy += dy
        prev = _BACKTRACK[k]
    raise GeometryError("contour walk failed to close")


def arc_length(c: Contour) -> float:
    """Closed-loop perimeter: unit steps count 1, diagonal steps sqrt(2)."""
    pts = c.points
    n = len(pts)
    if n < 2:
        return 0.0
    total = 0.0
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        total += math.hypot(x2 - x1, y2 - y1)
    return total


def convex_hull(points: Iterable[tuple[float, float]]) -> list[PointF]:
    """Convex hull, counter-clockwise on screen, collinear points removed.

    Starts at the lexicographically smallest point.  One distinct point
    hulls to itself; collinear input hulls to its two extremes.
    """
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if not pts:
        raise EmptyInputError("convex_hull of no points")
    if len(pts) == 1:
        return [PointF(*pts[0])]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) > 2:
        # monotone chain builds the screen-clockwise cycle; flip it while
        # keeping the smallest point in front
        hull = [hull[0]] + hull[:0:-1]
    return [PointF(x, y) for x, y in hull]


def _extents(arr: np.ndarray, ux: float, uy: float) -> tuple[float, float]:
    proj = arr[:, 0] * ux + arr[:, 1] * uy
    return float(proj.min()), float(proj.max())


def _rect_of_centers(arr: np.ndarray) -> RotatedRect:
    """Calipers over pixel-center points (n x 2 array), +1 pixel extents."""
    hull = convex_hull(arr)
    harr = np.asarray(hull, dtype=np.float64)
    # candidate angles: every hull edge, plus 0 so axis-aligned input wins
    # ties deterministically
    cands = [0.0]
    for i in range(len(hull) if len(hull) > 2 else len(hull) - 1):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        cands.append(math.atan2(b.y - a.y, b.x - a.x))
    best_area = math.inf
    best_t = 0.0
    for t in cands:
        c, s = math.cos(t), math.sin(t)
        lo1, hi1 = _extents(harr, c, s)
        lo2, hi2 = _extents(harr, -s, c)
        area = (hi1 - lo1 + 1.0) * (hi2 - lo2 + 1.0)
        if area < best_area - 1e-12:
            best_area = area
            best_t = t
    angle = math.degrees(best_t) % 90.0 - 90.0
    t = math.radians(angle)
    wx, wy = math.cos(t), math.sin(t)
    lo_w, hi_w = _extents(harr, wx, wy)
    lo_h, hi_h = _extents(harr, -wy, wx)
    mw = (lo_w + hi_w) / 2.0
    mh = (lo_h + hi_h) / 2.0
    center = PointF(mw * wx + mh * -wy, mw * wy + mh * wx)
    return RotatedRect(center, hi_w - lo_w + 1.0, hi_h - lo_h + 1.0, angle)


def min_area_rect(c: Contour) -> RotatedRect:
    """Minimum-area enclosing rectangle of a contour's pixels.

    Rotating calipers on the convex hull of the pixel centers; extents are
    dilated by 1 so the result reads as a pixel count.  One edge is flush
    with a hull edge, the angle lands in [-90, 0), and ties prefer the
    axis-aligned candidate.
    """
    if not c.points:
        raise EmptyInputError("min_area_rect of an empty contour")
    arr = np.asarray(c.points, dtype=np.float64) + 0.5
    return _rect_of_centers(arr)


def _mask_rect_px(px: np.ndarray) -> RotatedRect | None:
    """Caliper rect of a bool array via per-row extremes; None when blank."""
    rows = np.flatnonzero(px.any(axis=1))
    if rows.size == 0:
        return None
    sub = px[rows]
    left = np.argmax(sub, axis=1)
    right = px.shape[1] - 1 - np.argmax(sub[:, ::-1], axis=1)
    ys = np.concatenate([rows, rows]).astype(np.float64) + 0.5
    xs = np.concatenate([left, right]).astype(np.float64) + 0.5
    return _rect_of_centers(np.column_stack([xs, ys]))


def rect_of_mask(img: BinaryImage) -> RotatedRect:
    """min_area_rect without the contour walk.

    Uses the per-row extreme pixels, whose hull equals the full component
    hull; cheaper when a rectangle is probed repeatedly.
    """
    rect = _mask_rect_px(img.px)
    if rect is None:
        raise EmptyInputError("rect_of_mask of an all-black image")
    return rect


def is_contour_convex(c: Contour, tol: float = 1.5) -> bool:
    """True when no point dents deeper than tol inside the contour's hull.

    Pixelation puts genuine corners a fraction of a pixel off the hull, so
    the default tolerance accepts deviations up to 1.5 px.  Fewer than 3
    distinct points count as convex.
    """
    pts = np.unique(np.asarray(c.points, dtype=np.float64), axis=0)
    if pts.shape[0] < 3:
        return True
    hull = convex_hull(pts)
    if len(hull) < 3:
        return True
    harr = np.asarray(hull, dtype=np.float64)
    best = np.full(pts.shape[0], np.inf)
    m = len(hull)
    for i in range(m):
        a = harr[i]
        b = harr[(i + 1) % m]
        ab = b - a
        denom = float(ab @ ab)
        t = ((pts - a) @ ab) / denom
        np.clip(t, 0.0, 1.0, out=t)
        closest = a + t[:, None] * ab
        d = np.hypot(pts[:, 0] - closest[:, 0], pts[:, 1] - closest[:, 1])
        np.minimum(best, d, out=best)
    return float(best.max()) <= tol


def _collinear_triple(q: Sequence[tuple[float, float]]) -> bool:
    xs = [p[0] for p in q]
    ys = [p[1] for p in q]
    span = max(max(xs) - min(xs), max(ys) - min(ys), 1.0)
    for i in range(4):
        a, b, c = (q[j] for j in (i, (i + 1) % 4, (i + 2) % 4))
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) <= 1e-9 * span * span:
            return True
    return False


def homography_from_quad(
    src: Sequence[tuple[float, float]], dst: Sequence[tuple[float, float]]
) -> Homography:
    """Projective map sending the 4 src corners onto the 4 dst corners.

    Solved exactly from the 8x8 linear system; quads with any 3 corners
    collinear have no invertible solution and are rejected.
    """
    if len(src) != 4 or len(dst) != 4:
        raise SingularQuadError("both quads must have exactly 4 points")
    if _collinear_triple(src) or _collinear_triple(dst):
        raise SingularQuadError("quad has 3 collinear corners")
    a = np.zeros((8, 8), dtype=np.float64)
    rhs = np.zeros(8, dtype=np.float64)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -x * u, -y * u]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -x * v, -y * v]
        rhs[2 * i] = u
        rhs[2 * i + 1] = v
    try:
        h = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularQuadError(f"degenerate quad: {exc}") from exc
    m = np.array(
        [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]],
        dtype=np.float64,
    )
    return Homography(m)


def warp_to_upright(img: BinaryImage, r: RotatedRect) -> BinaryImage:
    """Resample the rect's content into an upright round(w) x round(h) image.

    Output pixel centers are inverse-mapped through the homography from the
    upright corners to the rect corners and sampled nearest-neighbor, so the
    result stays strictly binary; samples outside the source are black.
    Output x runs along the rect's size_w axis.
    """
    if not (math.isfinite(r.size_w) and math.isfinite(r.size_h)):
        raise GeometryError("rect size is not finite")
    out_w = int(round(r.size_w))
    out_h = int(round(r.size_h))
    if out_w < 1 or out_h < 1:
        raise GeometryError(f"degenerate rect size ({r.size_w}, {r.size_h})")
    t = math.radians(r.angle)
    wx, wy = math.cos(t), math.sin(t)
    hx, hy = -math.sin(t), math.cos(t)
    cx, cy = r.center
    w2, h2 = r.size_w / 2.0, r.size_h / 2.0
    src = [
        (cx - w2 * wx - h2 * hx, cy - w2 * wy - h2 * hy),
        (cx + w2 * wx - h2 * hx, cy + w2 * wy - h2 * hy),
        (cx + w2 * wx + h2 * hx, cy + w2 * wy + h2 * hy),
        (cx - w2 * wx + h2 * hx, cy - w2 * wy + h2 * hy),
    ]
    hom = homography_from_quad([(0, 0), (out_w, 0), (out_w, out_h), (0, out_h)], src)
    m = hom.m
    xs = np.arange(out_w, dtype=np.float64) + 0.5
    ys = np.arange(out_h, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    denom = m[2, 0] * gx + m[2, 1] * gy + m[2, 2]
    sx = np.floor((m[0, 0] * gx + m[0, 1] * gy + m[0, 2]) / denom).astype(np.int64)
    sy = np.floor((m[1, 0] * gx + m[1, 1] * gy + m[1, 2]) / denom).astype(np.int64)
    h_src, w_src = img.px.shape
    valid = (sx >= 0) & (sx < w_src) & (sy >= 0) & (sy < h_src)
    out = np.zeros((out_h, out_w), dtype=bool)
    out[valid] = img.px[sy[valid], sx[valid]]
    return BinaryImage(out)

"""Planar domains, slits, and slit-conforming graded triangulations.

The mesher embeds the slit as a chain of mesh edges with node spacing
shrinking geometrically toward the two tips, so Dirichlet data on the
slit is imposable exactly on nodes.  Strategy: fixed points (slit chain,
a protective halo of points around it, boundary polyline) plus a
size-graded hexagonal background cloud, relaxed by an edge-spring
iteration over repeated Delaunay triangulations, then verified against
quality and conformity requirements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import (
    InvalidDomain,
    InvalidSlit,
    MeshQualityFailure,
    SlitTooCloseToBoundary,
)

# ---------------------------------------------------------------------------
# Domain and slit specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle [0, width] x [0, height]."""

    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise InvalidDomain("rectangle dimensions must be strictly positive")

    def polygon(self) -> np.ndarray:
        w, h = self.width, self.height
        return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


@dataclass(frozen=True)
class Disk:
    """Disk of given radius; `center` supports rigid frame changes."""

    radius: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidDomain("disk radius must be strictly positive")


@dataclass(frozen=True)
class Polygon:
    """Simple polygon, vertices in counterclockwise order."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise InvalidDomain("polygon needs at least 3 planar vertices")
        if _polygon_area(v) <= 0:
            raise InvalidDomain("polygon vertices must be counterclockwise")
        if _polygon_self_intersects(v):
            raise InvalidDomain("polygon must be simple (non-self-intersecting)")
        object.__setattr__(
            self, "vertices", tuple((float(x), float(y)) for x, y in v)
        )

    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)


DomainSpec = Rectangle | Disk | Polygon


@dataclass(frozen=True)
class SlitSpec:
    """Removed segment: center, half-length eps > 0, axis angle in radians."""

    center: tuple[float, float]
    half_length: float
    angle: float = 0.0

    def __post_init__(self):
        if not self.half_length > 0:
            raise InvalidSlit(
                "slit half-length must be strictly positive; "
                "request the unperturbed problem by passing no slit"
            )

    def endpoints(self) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        d = self.half_length * np.array([math.cos(self.angle), math.sin(self.angle)])
        return np.array([c - d, c + d])


@dataclass(frozen=True)
class MeshParams:
    h_max: float = 0.1
    tip_ratio: float = 0.7
    tip_levels: int = 6
    min_angle: float = 20.0

    def __post_init__(self):
        if not self.h_max > 0:
            raise InvalidDomain("h_max must be positive")
        if not 0.0 < self.tip_ratio < 1.0:
            raise InvalidDomain("tip_ratio must lie in (0, 1)")
        if self.tip_levels < 0:
            raise InvalidDomain("tip_levels must be >= 0")
        if not 15.0 <= self.min_angle <= 30.0:
            raise InvalidDomain("min_angle must lie in [15, 30] degrees")


# ---------------------------------------------------------------------------
# Small planar utilities
# ---------------------------------------------------------------------------


def _polygon_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(a, b, c, d) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return o1 * o2 < 0 and o3 * o4 < 0


def _polygon_self_intersects(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(a, b, v[j], v[(j + 1) % n]):
                return True
    return False


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distance from points p (n,2) to segment ab, via clamped projection."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(p - a, axis=-1)
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    proj = a + np.outer(t, ab) if p.ndim == 2 else a + t * ab
    return np.linalg.norm(p - proj, axis=-1)


def _segment_segment_distance(a, b, c, d) -> float:
    if _segments_cross(a, b, c, d):
        return 0.0
    return min(
        float(_point_segment_distance(np.asarray(a), np.asarray(c), np.asarray(d))),
        float(_point_segment_distance(np.asarray(b), np.asarray(c), np.asarray(d))),
        float(_point_segment_distance(np.asarray(c), np.asarray(a), np.asarray(b))),
        float(_point_segment_distance(np.asarray(d), np.asarray(a), np.asarray(b))),
    )


def _point_in_polygon(p, poly: np.ndarray) -> bool:
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def domain_polygon(domain: DomainSpec, h_boundary: float | None = None) -> np.ndarray:
    """Boundary polyline; for disks a polygonal approximation on the circle."""
    if isinstance(domain, Rectangle):
        return domain.polygon()
    if isinstance(domain, Polygon):
        return domain.array()
    if isinstance(domain, Disk):
        h = h_boundary if h_boundary is not None else domain.radius / 16
        n = max(12, int(math.ceil(2 * math.pi * domain.radius / h)))
        t = 2 * math.pi * np.arange(n) / n
        c = np.asarray(domain.center)
        return c + domain.radius * np.column_stack([np.cos(t), np.sin(t)])
    raise InvalidDomain(f"unsupported domain type {type(domain).__name__}")


def domain_contains(domain: DomainSpec, p) -> bool:
    p = np.asarray(p, dtype=float)
    if isinstance(domain, Rectangle):
        return 0 <= p[0] <= domain.width and 0 <= p[1] <= domain.height
    if isinstance(domain, Disk):
        return float(np.hypot(*(p - np.asarray(domain.center)))) <= domain.radius
    return _point_in_polygon(p, domain.array())


def contains_many(domain: DomainSpec, pts: np.ndarray) -> np.ndarray:
    """Vectorized membership test for an (n, 2) array of points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if isinstance(domain, Rectangle):
        return (
            (pts[:, 0] >= 0)
            & (pts[:, 0] <= domain.width)
            & (pts[:, 1] >= 0)
            & (pts[:, 1] <= domain.height)
        )
    if isinstance(domain, Disk):
        return (
            np.linalg.norm(pts - np.asarray(domain.center), axis=1) <= domain.radius
        )
    poly = domain.array()
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xc)
    return inside


def boundary_distance(domain: DomainSpec, p) -> np.ndarray:
    """Unsigned distance from points p (n,2) to the true domain boundary."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if isinstance(domain, Disk):
        return np.abs(
            np.linalg.norm(p - np.asarray(domain.center), axis=1) - domain.radius
        )
    poly = domain_polygon(domain)
    n = len(poly)
    d = np.full(len(p), np.inf)
    for i in range(n):
        d = np.minimum(
            d, _point_segment_distance(p, poly[i], poly[(i + 1) % n])
        )
    return d


def domain_inradius(domain: DomainSpec) -> float:
    if isinstance(domain, Rectangle):
        return 0.5 * min(domain.width, domain.height)
    if isinstance(domain, Disk):
        return domain.radius
    poly = domain.array()
    centroid = poly.mean(axis=0)
    return float(boundary_distance(domain, centroid)[0])


def slit_boundary_distance(domain: DomainSpec, slit: SlitSpec) -> float:
    """Distance from the closed slit segment to the domain boundary."""
    a, b = slit.endpoints()
    if not (domain_contains(domain, a) and domain_contains(domain, b)):
        return 0.0
    if isinstance(domain, Disk):
        c = np.asarray(domain.center)
        reach = max(float(np.hypot(*(a - c))), float(np.hypot(*(b - c))))
        return domain.radius - reach
    poly = domain_polygon(domain)
    n = len(poly)
    return min(
        _segment_segment_distance(a, b, poly[i], poly[(i + 1) % n]) for i in range(n)
    )


def rotate_frame(
    domain: DomainSpec, slit: SlitSpec
) -> tuple[DomainSpec, SlitSpec]:
    """Rigidly move domain and slit so the slit is horizontal at the origin.

    Eigenvalues are invariant under this map; rectangles become their
    polygonal images, disks keep an analytic center+radius description.
    """
    theta, c = slit.angle, np.asarray(slit.center, dtype=float)
    if theta == 0.0 and c[0] == 0.0 and c[1] == 0.0:
        return domain, slit
    ct, st = math.cos(-theta), math.sin(-theta)
    rot = np.array([[ct, -st], [st, ct]])

    def motion(pts):
        return (np.asarray(pts, dtype=float) - c) @ rot.T

    new_slit = SlitSpec((0.0, 0.0), slit.half_length, 0.0)
    if isinstance(domain, Disk):
        cx, cy = motion(np.asarray(domain.center))
        return Disk(domain.radius, (float(cx), float(cy))), new_slit
    poly = domain_polygon(domain) if isinstance(domain, Rectangle) else domain.array()
    moved = motion(poly)
    return Polygon(tuple(map(tuple, moved))), new_slit


# ---------------------------------------------------------------------------
# Mesh container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mesh:
    """Triangulation with slit chain, boundary markers and size metadata.

    ``slit_nodes`` is ordered along the slit from one tip to the other and
    includes both tips; ``tip_nodes`` holds the two endpoints.
    """

    vertices: np.ndarray  # (n, 2) float
    triangles: np.ndarray  # (m, 3) int, counterclockwise
    boundary_nodes: np.ndarray  # int
    slit_nodes: np.ndarray  # int, chain order
    tip_nodes: np.ndarray  # int, the two ends (empty when no slit)
    h_max: float
    h_tip: float

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def min_angle(self) -> float:
        return float(np.min(triangle_min_angles(self.vertices, self.triangles)))

    def edge_set(self) -> set[tuple[int, int]]:
        edges = set()
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                edges.add((min(a, b), max(a, b)))
        return edges

    def export_text(self, path) -> None:
        markers = np.full(self.n_vertices, "interior", dtype=object)
        markers[self.boundary_nodes] = "boundary"
        markers[self.slit_nodes] = "slit"
        markers[self.tip_nodes] = "tip"
        lines = [f"vertices {self.n_vertices} triangles {len(self.triangles)}"]
        for (x, y), m in zip(self.vertices, markers):
            lines.append(f"{x:.17g} {y:.17g} {m}")
        for i, j, k in self.triangles:
            lines.append(f"{i} {j} {k}")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


def import_mesh_text(path) -> Mesh:
    with open(path) as f:
        tokens = f.readline().split()
        if len(tokens) != 4 or tokens[0] != "vertices" or tokens[2] != "triangles":
            raise InvalidDomain(f"bad mesh header in {path}")
        n, m = int(tokens[1]), int(tokens[3])
        verts = np.empty((n, 2))
        markers = []
        for i in range(n):
            x, y, mark = f.readline().split()
            verts[i] = (float(x), float(y))
            markers.append(mark)
        tris = np.empty((m, 3), dtype=np.int32)
        for i in range(m):
            tris[i] = [int(t) for t in f.readline().split()]
    markers = np.array(markers, dtype=object)
    boundary = np.flatnonzero(markers == "boundary")
    tips = np.flatnonzero(markers == "tip")
    slit_all = np.flatnonzero((markers == "slit") | (markers == "tip"))
    if len(tips) == 2:
        direction = verts[tips[1]] - verts[tips[0]]
        order = np.argsort(verts[slit_all] @ direction)
        slit_all = slit_all[order]
    edge_lens = np.linalg.norm(
        verts[tris[:, [0, 1, 2]]] - verts[tris[:, [1, 2, 0]]], axis=2
    )
    h_max = float(edge_lens.max())
    if len(slit_all) >= 2:
        h_tip = float(np.min(np.linalg.norm(np.diff(verts[slit_all], axis=0), axis=1)))
    else:
        h_tip = h_max
    return Mesh(verts, tris, boundary, slit_all, tips, h_max, h_tip)


def triangle_min_angles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    a = np.linalg.norm(p1 - p2, axis=1)
    b = np.linalg.norm(p0 - p2, axis=1)
    c = np.linalg.norm(p0 - p1, axis=1)
    angles = np.empty((len(triangles), 3))
    for i, (opp, s1, s2) in enumerate(((a, b, c), (b, c, a), (c, a, b))):
        cosv = np.clip((s1 ** 2 + s2 ** 2 - opp ** 2) / (2 * s1 * s2), -1.0, 1.0)
        angles[:, i] = np.degrees(np.arccos(cosv))
    return angles.min(axis=1)


# ---------------------------------------------------------------------------
# Mesh generation
# ---------------------------------------------------------------------------

_GROWTH = 0.45  # size-function slope away from the slit
_HALO = math.sqrt(3.0) / 2.0  # halo row height relative to local slit spacing


def _slit_positions(eps: float, h_max: float, tip_ratio: float, tip_levels: int):
    """Node abscissas on [-eps, eps], graded toward both tips.

    Spacing grows geometrically from h_tip at each tip, and the leftover
    middle is filled uniformly with a spacing matched to the last graded
    step, so adjacent-edge ratios never jump.
    """
    h_mid = min(h_max, 0.5 * eps)
    h_tip = h_mid * tip_ratio ** tip_levels
    steps: list[float] = []
    s, total = h_tip, 0.0
    while s < h_mid * (1.0 - 1e-12) and total + s < eps:
        steps.append(s)
        total += s
        s /= tip_ratio
    gap = 2.0 * (eps - total)
    # avoid a sliver middle: fold graded steps back until the gap is healthy
    while steps and gap < 0.5 * steps[-1] / tip_ratio:
        gap += 2.0 * steps.pop()
    last = steps[-1] if steps else h_tip
    target = min(h_mid, last / tip_ratio)
    n = max(1, round(gap / target), int(math.ceil(gap / h_mid)))
    left = -eps + np.concatenate([[0.0], np.cumsum(steps)]) if steps else np.array([-eps])
    middle = left[-1] + (gap / n) * np.arange(1, n)
    right = -left[::-1]
    return np.concatenate([left, middle, right]), h_tip, h_mid


def _slit_spacing_profile(xs: np.ndarray):
    """Local spacing at a projection abscissa, piecewise from the chain."""
    gaps = np.diff(xs)
    mids = 0.5 * (xs[:-1] + xs[1:])

    def spacing(x1):
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        idx = np.clip(np.searchsorted(mids, x1), 0, len(gaps) - 1)
        near = np.clip(idx, 0, len(gaps) - 1)
        other = np.clip(idx - 1, 0, len(gaps) - 1)
        return np.minimum(gaps[near], gaps[other])

    return spacing


def _tip_ring_seeds(eps: float, h_tip: float, h_mid: float, r_end: float) -> np.ndarray:
    """Concentric point rings around each tip, spacing grown with radius.

    Around a tip both the slit grading and the distance ramp give a local
    size of about h_tip + growth * r, so rings with that radial step stay
    isotropic; they carry the whole deep-grading zone.  Where the two
    tips' rings overlap, each point keeps only its nearer tip's ring.
    """
    pts = []
    for tip_x in (-eps, eps):
        r = 2.05 * h_tip
        while r < r_end:
            step = h_tip + _GROWTH * r
            n = max(6, int(math.ceil(2 * math.pi * r / (0.92 * step))))
            th = 2 * math.pi * (np.arange(n) + (0.5 if tip_x > 0 else 0.0)) / n
            ring = np.column_stack([tip_x + r * np.cos(th), r * np.sin(th)])
            other = np.hypot(ring[:, 0] + tip_x, ring[:, 1])
            pts.append(ring[other > r * (1.0 + 1e-9)])
            r += 0.8 * step
    return np.vstack(pts) if pts else np.zeros((0, 2))


def _middle_row_seeds(
    eps: float, spacing_fn, h_mid: float, h_cap: float, tip_clear: float
) -> np.ndarray:
    """Rows of points flanking the slit at geometrically growing heights."""
    rows = []
    y = 2.05 * _HALO * h_mid
    while h_mid + _GROWTH * y < h_cap:
        xs = []
        x = -(eps + 1.5 * y)
        while x <= eps + 1.5 * y:
            xs.append(x)
            s = float(spacing_fn(np.clip(x, -eps, eps))[0])
            d = math.hypot(max(abs(x) - eps, 0.0), y)
            x += 0.92 * (s + _GROWTH * d)
        xs = np.asarray(xs)
        # the tip disks belong to the rings
        keep = np.minimum(
            np.hypot(xs - eps, y), np.hypot(xs + eps, y)
        ) >= tip_clear
        xs = xs[keep]
        for sgn in (1.0, -1.0):
            rows.append(np.column_stack([xs, np.full(len(xs), sgn * y)]))
        y += 0.8 * (h_mid + _GROWTH * y)
    return np.vstack(rows) if rows else np.zeros((0, 2))


def _hex_lattice(bbox, spacing: float, jitter_rng) -> np.ndarray:
    x0, x1, y0, y1 = bbox
    if x1 <= x0 or y1 <= y0:
        return np.zeros((0, 2))
    row_h = spacing * math.sqrt(3.0) / 2.0
    rows = int(math.ceil((y1 - y0) / row_h)) + 1
    cols = int(math.ceil((x1 - x0) / spacing)) + 1
    pts = []
    for r in range(rows):
        y = y0 + (r + 0.5) * row_h
        if y > y1:
            break
        xoff = 0.25 * spacing if r % 2 == 0 else 0.75 * spacing
        for q in range(cols):
            x = x0 + xoff + q * spacing
            if x > x1:
                break
            pts.append((x, y))
    pts = np.asarray(pts, dtype=float)
    if len(pts):
        pts = pts + 0.06 * spacing * (jitter_rng.random(pts.shape) - 0.5)
    return pts


def _mesh_in_frame(
    domain: DomainSpec, eps: float | None, params: MeshParams, seed: int
) -> tuple[np.ndarray, int, int, np.ndarray, np.ndarray, float]:
    """Build the point cloud and relax it; slit is [-eps, eps] x {0} or absent.

    Returns (points, n_fixed, n_slit, boundary_idx, slit_xs, h_tip); the
    first n_slit points are the slit chain in order, and the first
    n_fixed points held still during relaxation.
    """
    rng = np.random.default_rng(seed * 7919 + 11)
    h_max = params.h_max
    is_disk = isinstance(domain, Disk)

    fixed = []
    near_seeds = []
    slit_xs = np.zeros(0)
    h_tip = h_max
    h_mid = h_max
    spacing_fn = None
    if eps is not None:
        slit_xs, h_tip, h_mid = _slit_positions(
            eps, h_max, params.tip_ratio, params.tip_levels
        )
        spacing_fn = _slit_spacing_profile(slit_xs)
        chain = np.column_stack([slit_xs, np.zeros_like(slit_xs)])
        fixed.append(chain)
        # protective halo: apex above/below each slit edge midpoint.  These
        # stay fixed so each slit edge keeps an empty diametral circle and
        # is forced into the Delaunay triangulation.
        gaps = np.diff(slit_xs)
        mids = 0.5 * (slit_xs[:-1] + slit_xs[1:])
        for sgn in (1.0, -1.0):
            fixed.append(np.column_stack([mids, sgn * _HALO * gaps]))
        # fans continuing the grading beyond each tip
        for tip_x, outward in ((-eps, -1.0), (eps, 1.0)):
            for ang in (-60.0, 0.0, 60.0):
                a = math.radians(ang)
                fixed.append(
                    np.array(
                        [[tip_x + outward * h_tip * math.cos(a), h_tip * math.sin(a)]]
                    )
                )
        # relaxable near field: tip rings for the deep scales, rows at the
        # middle scale, both faded into the coarse hex background
        r_end = (1.35 * h_mid - h_tip) / _GROWTH
        near_seeds.append(_tip_ring_seeds(eps, h_tip, h_mid, r_end))
        near_seeds.append(
            _middle_row_seeds(eps, spacing_fn, h_mid, 0.37 * h_max, 0.85 * r_end)
        )
    n_slit = len(slit_xs)

    def size_at(p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        h = np.full(len(p), h_max)
        if eps is not None:
            x_proj = np.clip(p[:, 0], -eps, eps)
            d = np.hypot(p[:, 0] - x_proj, p[:, 1])
            s_loc = spacing_fn(x_proj)
            h = np.minimum(h, s_loc + _GROWTH * d)
        if is_disk:
            db = boundary_distance(domain, p)
            h = np.minimum(h, 0.5 * h_max + _GROWTH * db)
        return h

    # boundary polyline, spaced by the local size target
    if is_disk:
        bpoly = domain_polygon(domain, h_boundary=0.5 * h_max)
        boundary_pts = bpoly
    else:
        poly = domain_polygon(domain)
        parts = []
        for i in range(len(poly)):
            a, b = poly[i], poly[(i + 1) % len(poly)]
            length = float(np.hypot(*(b - a)))
            target = min(
                h_max,
                float(size_at(np.atleast_2d(0.5 * (a + b)))[0]) * 1.2,
            )
            n = max(1, int(math.ceil(length / target)))
            t = np.arange(n) / n
            parts.append(a + np.outer(t, b - a))
        boundary_pts = np.vstack(parts)
    n_before_boundary = sum(len(f) for f in fixed)
    fixed.append(boundary_pts)
    fixed_pts = np.vstack(fixed) if fixed else np.zeros((0, 2))
    boundary_idx = np.arange(
        n_before_boundary, n_before_boundary + len(boundary_pts)
    )

    # admit free seeds source by source, each filtered against what is
    # already kept: containment, boundary/strip clearance, local spacing
    kept = [fixed_pts]

    def admit(cand: np.ndarray) -> None:
        if not len(cand):
            return
        h_c = size_at(cand)
        ok = contains_many(domain, cand)
        ok &= boundary_distance(domain, cand) >= 0.55 * h_c
        if eps is not None:
            x_proj = np.clip(cand[:, 0], -eps, eps)
            d = np.hypot(cand[:, 0] - x_proj, cand[:, 1])
            ok &= d >= 1.55 * _HALO * spacing_fn(x_proj)
        cand, h_c = cand[ok], h_c[ok]
        if not len(cand):
            return
        tree = cKDTree(np.vstack(kept))
        near = tree.query(cand, k=1)[0]
        sel = near >= 0.58 * h_c
        if np.any(sel):
            kept.append(cand[sel])

    for src in near_seeds:
        admit(src)

    # coarse interior seeds: hex lattices banded by the size function; the
    # slit's fine scales are already covered by rings and rows
    floor = 0.33 * h_max if eps is not None else h_max
    if is_disk:
        floor = min(floor, 0.5 * h_max)
    levels = [h_max]
    while levels[-1] > floor * 1.05:
        levels.append(levels[-1] * 0.7)
    gx0, gy0 = fixed_pts.min(axis=0)
    gx1, gy1 = fixed_pts.max(axis=0)
    tiny = 1e-12 * h_max
    for li, a in enumerate(levels):
        cand = _hex_lattice((gx0, gx1, gy0, gy1), a, rng)
        if not len(cand):
            continue
        h_c = size_at(cand)
        lower = a - tiny if len(levels) > 1 else -np.inf
        upper = levels[li - 1] - tiny if li else np.inf
        admit(cand[(h_c >= lower) & (h_c < upper)])

    free = np.vstack(kept[1:]) if len(kept) > 1 else np.zeros((0, 2))
    pts = np.vstack([fixed_pts, free])
    n_fixed = len(fixed_pts)
    pts = _relax(pts, n_fixed, domain, size_at, rng)
    return pts, n_fixed, n_slit, boundary_idx, slit_xs, h_tip


def _nearest_boundary_point(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Closest point on the polygon boundary for each input point."""
    best_d = np.full(len(pts), np.inf)
    best_q = np.zeros_like(pts)
    n = len(poly)
    for j in range(n):
        a, b = poly[j], poly[(j + 1) % n]
        ab = b - a
        denom = float(ab @ ab)
        t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
        q = a + t[:, None] * ab
        d = np.linalg.norm(pts - q, axis=1)
        closer = d < best_d
        best_d[closer] = d[closer]
        best_q[closer] = q[closer]
    return best_q


def _project_inside(domain: DomainSpec, pts: np.ndarray, clearance: np.ndarray):
    """Pull points that left the domain (or hug the boundary) back inside."""
    if isinstance(domain, Disk):
        c = np.asarray(domain.center)
        rel = pts - c
        r = np.linalg.norm(rel, axis=1)
        r = np.where(r == 0, 1e-30, r)
        rmax = domain.radius - clearance
        bad = r > rmax
        if np.any(bad):
            pts[bad] = c + rel[bad] * (rmax[bad] / r[bad])[:, None]
        return pts
    poly = domain_polygon(domain)
    inside = contains_many(domain, pts)
    d = boundary_distance(domain, pts)
    bad = (~inside) | (d < clearance)
    if np.any(bad):
        q = _nearest_boundary_point(poly, pts[bad])
        normal = pts[bad] - q
        nn = np.linalg.norm(normal, axis=1)
        nn = np.where(nn == 0, 1e-30, nn)
        sign = np.where(inside[bad], 1.0, -1.0)
        pts[bad] = q + normal * (sign * clearance[bad] / nn)[:, None]
    return pts


def _relax(pts, n_fixed, domain, size_at, rng, iters: int = 80):
    """Edge-spring relaxation of the free points over Delaunay edges."""
    n = len(pts)
    free_mask = np.zeros(n, dtype=bool)
    free_mask[n_fixed:] = True
    if not np.any(free_mask):
        return pts
    last_tri_pts = None
    edges = None
    h_free = size_at(pts[free_mask])
    for it in range(iters):
        if last_tri_pts is None or np.max(
            np.linalg.norm(pts[free_mask] - last_tri_pts[free_mask], axis=1) / h_free
        ) > 0.08:
            tri = Delaunay(pts)
            simp = tri.simplices
            cent = pts[simp].mean(axis=1)
            simp = simp[contains_many(domain, cent)]
            e = np.vstack([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [2, 0]]])
            e.sort(axis=1)
            edges = np.unique(e, axis=0)
            last_tri_pts = pts.copy()
        vec = pts[edges[:, 0]] - pts[edges[:, 1]]
        lengths = np.linalg.norm(vec, axis=1)
        lengths = np.where(lengths == 0, 1e-30, lengths)
        hmid = size_at(0.5 * (pts[edges[:, 0]] + pts[edges[:, 1]]))
        scale = math.sqrt(float(np.sum(lengths ** 2) / np.sum(hmid ** 2)))
        want = hmid * 1.2 * scale
        force = np.maximum(want - lengths, 0.0) / lengths
        fvec = vec * force[:, None]
        move = np.zeros_like(pts)
        np.add.at(move, edges[:, 0], fvec)
        np.add.at(move, edges[:, 1], -fvec)
        move[~free_mask] = 0.0
        pts = pts + 0.2 * move
        h_free = size_at(pts[free_mask])
        clearance = 0.5 * size_at(pts)
        pts[free_mask] = _project_inside(
            domain, pts[free_mask], clearance[free_mask]
        )
        rel_step = np.max(
            np.linalg.norm(0.2 * move[free_mask], axis=1) / h_free, initial=0.0
        )
        if rel_step < 2e-3:
            break
    return pts


def generate_mesh(
    domain: DomainSpec, slit: SlitSpec | None, params: MeshParams
) -> Mesh:
    """Triangulate the domain with the slit embedded as graded mesh edges.

    Raises SlitTooCloseToBoundary when the 2*eps margin fails and
    MeshQualityFailure when the minimum-angle target cannot be met after
    bounded reseeding.
    """
    if slit is not None:
        margin = slit_boundary_distance(domain, slit)
        if margin < 2.0 * slit.half_length - 1e-12:
            raise SlitTooCloseToBoundary(
                f"slit needs clearance {2 * slit.half_length:.6g} from the "
                f"boundary, has {margin:.6g}"
            )
        frame_domain, frame_slit = rotate_frame(domain, slit)
        eps = frame_slit.half_length
    else:
        frame_domain, eps = domain, None

    last_err = None
    for seed in range(3):
        try:
            mesh = _finalize_mesh(frame_domain, eps, params, seed)
        except MeshQualityFailure as exc:
            last_err = exc
            continue
        if slit is not None and (slit.angle != 0.0 or slit.center != (0.0, 0.0)):
            theta = slit.angle
            rot = np.array(
                [[math.cos(theta), -math.sin(theta)],
                 [math.sin(theta), math.cos(theta)]]
            )
            verts = mesh.vertices @ rot.T + np.asarray(slit.center, dtype=float)
            mesh = replace(mesh, vertices=verts)
        return mesh
    raise MeshQualityFailure(
        f"could not reach min angle {params.min_angle} deg after retries: {last_err}"
    )


def _finalize_mesh(
    domain: DomainSpec, eps: float | None, params: MeshParams, seed: int
) -> Mesh:
    pts, n_fixed, n_slit, boundary_idx, slit_xs, h_tip = _mesh_in_frame(
        domain, eps, params, seed
    )
    # surgical cleanup: drop free vertices of sliver triangles, retriangulate
    for round_ in range(5):
        tri = Delaunay(pts)
        simp = tri.simplices
        cent = pts[simp].mean(axis=1)
        simp = np.asarray(simp[contains_many(domain, cent)], dtype=np.int32)
        angles = triangle_min_angles(pts, simp)
        bad = angles < params.min_angle
        if not np.any(bad) or round_ == 4:
            break
        victims = np.unique(simp[bad].ravel())
        victims = victims[victims >= n_fixed]
        if not len(victims):
            break
        # minimal surgery: drop only the most crowded offender per round
        tree = cKDTree(np.delete(pts, victims, axis=0))
        crowd = tree.query(pts[victims], k=1)[0]
        keep = np.ones(len(pts), dtype=bool)
        keep[victims[int(np.argmin(crowd))]] = False
        pts = pts[keep]

    # counterclockwise orientation
    p = pts[simp]
    areas = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    flip = areas < 0
    simp[flip] = simp[flip][:, [0, 2, 1]]

    angles = triangle_min_angles(pts, simp)
    if float(angles.min()) < params.min_angle:
        raise MeshQualityFailure(
            f"min angle {angles.min():.2f} deg below target {params.min_angle}"
        )

    edges = set()
    for t in simp:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edges.add((min(a, b), max(a, b)))
    for i in range(n_slit - 1):
        if (i, i + 1) not in edges:
            raise MeshQualityFailure("slit chain edge missing from triangulation")
    nb = len(boundary_idx)
    for i in range(nb):
        a, b = boundary_idx[i], boundary_idx[(i + 1) % nb]
        if (min(a, b), max(a, b)) not in edges:
            raise MeshQualityFailure("boundary edge missing from triangulation")

    if n_slit:
        slit_nodes = np.arange(n_slit)
        tips = np.array([0, n_slit - 1])
    else:
        slit_nodes = np.zeros(0, dtype=int)
        tips = np.zeros(0, dtype=int)
    return Mesh(
        vertices=pts,
        triangles=simp,
        boundary_nodes=np.asarray(boundary_idx, dtype=int),
        slit_nodes=slit_nodes,
        tip_nodes=tips,
        h_max=params.h_max,
        h_tip=h_tip if n_slit else params.h_max,
    )

"""Domain polygons, polygonal faults, corner frames and the closing arc.

Conventions used throughout the package:

* the fault is traversed in vertex order; ``side = +1`` means the enclosed
  region (the "inside", region id 1) lies to the left of the traversal,
  ``side = -1`` to the right;
* the fault normal points from the inside (``-`` side) to the outside
  (``+`` side), so jumps are ``[p] = p(outside) - p(inside)``;
* a corner frame stores the sector on the inside, with the ``+`` edge at
  argument ``theta_M`` and the ``-`` edge at ``theta_m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid or unresolvable geometry."""


# ---------------------------------------------------------------------------
# small planar helpers
# ---------------------------------------------------------------------------

def signed_area(points):
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(p1, p2, q1, q2, tol=1e-12):
    """True if closed segments p1p2 and q1q2 share a point."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
            ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
        return True

    def on_seg(a, b, c, d):
        return abs(d) <= tol and min(a[0], b[0]) - tol <= c[0] <= max(a[0], b[0]) + tol \
            and min(a[1], b[1]) - tol <= c[1] <= max(a[1], b[1]) + tol

    return (on_seg(q1, q2, p1, d1) or on_seg(q1, q2, p2, d2)
            or on_seg(p1, p2, q1, d3) or on_seg(p1, p2, q2, d4))


def segment_distance(p1, p2, q1, q2):
    """Euclidean distance between two closed segments."""
    if segments_intersect(p1, p2, q1, q2):
        return 0.0
    return min(point_segment_distance(p1, q1, q2), point_segment_distance(p2, q1, q2),
               point_segment_distance(q1, p1, p2), point_segment_distance(q2, p1, p2))


def point_segment_distance(p, a, b):
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def polyline_is_simple(points, closed):
    """Brute-force check that no two non-adjacent edges of a polyline meet."""
    p = np.asarray(points, dtype=float)
    n = len(p)
    edges = [(i, (i + 1) % n) for i in range(n if closed else n - 1)]
    for i, (a, b) in enumerate(edges):
        if np.allclose(p[a], p[b]):
            return False
        for j in range(i + 1, len(edges)):
            c, d = edges[j]
            if b == c or a == d:
                # adjacent edges may only share their common vertex
                if segments_intersect(p[a], p[b], p[c], p[d]):
                    u = p[b] - p[a]
                    v = p[d] - p[c]
                    if abs(u[0] * v[1] - u[1] * v[0]) <= 1e-14 * np.dot(u, u) and np.dot(u, v) < 0:
                        return False  # folds back onto itself
                continue
            if segments_intersect(p[a], p[b], p[c], p[d]):
                return False
    return True


def is_convex_ccw(points, tol=1e-12):
    p = np.asarray(points, dtype=float)
    n = len(p)
    for i in range(n):
        if _orient(p[i - 1], p[i], p[(i + 1) % n]) <= tol:
            return False
    return True


def wrap_angle(a):
    """Map an angle into (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------

BOUNDARY_TAGS = ("D", "N")


@dataclass(frozen=True)
class DomainPolygon:
    """Outer boundary with Dirichlet/Neumann tags per polygon edge.

    Edge ``i`` runs from ``vertices[i]`` to ``vertices[i + 1]``. ``observation``
    lists polygon edges forming the measurement arc; they must be Neumann.
    """

    vertices: np.ndarray
    tags: tuple
    observation: tuple = ()

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("domain needs at least three 2D vertices")
        if signed_area(v) < 0:
            raise GeometryError("domain boundary must be positively oriented")
        if not polyline_is_simple(v, closed=True):
            raise GeometryError("domain boundary is not simple")
        tags = tuple(str(t).upper() for t in self.tags)
        if len(tags) != len(v) or any(t not in BOUNDARY_TAGS for t in tags):
            raise GeometryError("one tag in {'D','N'} is required per boundary edge")
        obs = tuple(int(i) for i in self.observation)
        for i in obs:
            if not 0 <= i < len(v):
                raise GeometryError(f"observation edge {i} does not exist")
            if tags[i] != "N":
                raise GeometryError(f"observation edge {i} is not traction-free")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "observation", obs)

    @classmethod
    def unit_square(cls, tags=("D", "N", "N", "N"), observation=(1, 2, 3)):
        return cls(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), tags, observation)

    @property
    def diameter(self):
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    def edges(self):
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    def contains(self, point):
        return point_in_polygon(point, self.vertices)

    def distance_to_boundary(self, a, b):
        return min(segment_distance(a, b, p, q) for p, q in self.edges())

    def observation_polyline(self):
        """Ordered points of the observation arc (edges must be consecutive)."""
        if not self.observation:
            raise GeometryError("domain has no observation arc")
        n = len(self.vertices)
        obs = list(self.observation)
        for a, b in zip(obs, obs[1:]):
            if b != (a + 1) % n:
                raise GeometryError("observation edges must be consecutive")
        pts = [self.vertices[obs[0]]] + [self.vertices[(i + 1) % n] for i in obs]
        return np.array(pts)


def point_in_polygon(point, polygon):
    """Ray-casting test; points on the boundary may go either way."""
    x, y = float(point[0]), float(point[1])
    p = np.asarray(polygon, dtype=float)
    inside = False
    n = len(p)
    for i in range(n):
        x1, y1 = p[i]
        x2, y2 = p[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


# ---------------------------------------------------------------------------
# fault
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CornerFrame:
    vertex: int
    x_c: np.ndarray
    theta_m: float
    theta_M: float
    h: float

    @property
    def opening(self):
        return self.theta_M - self.theta_m

    @property
    def rotation(self):
        """Angle that maps the sector bisector onto the positive x-axis (negated)."""
        return 0.5 * (self.theta_m + self.theta_M)

    def direction(self, which):
        a = self.theta_M if which == "+" else self.theta_m
        return np.array([math.cos(a), math.sin(a)])

    def normal(self, which):
        """Outward unit normal of the sector on the given edge."""
        if which == "+":
            return np.array([-math.sin(self.theta_M), math.cos(self.theta_M)])
        return np.array([math.sin(self.theta_m), -math.cos(self.theta_m)])


DEFAULT_PROBE_FRACTION = 0.4


@dataclass(frozen=True)
class FaultGeometry:
    """Oriented polygonal fault.

    Closed faults must be given counter-clockwise and have the inside on the
    left (``side = +1``). Open faults carry ``side = 0`` until a closing arc has
    been chosen; :func:`close_open_fault` returns a copy with the side set.
    ``graph_angle`` is the rotation under which an open fault is the graph
    of a piecewise-linear function.
    """

    vertices: np.ndarray
    closed: bool = False
    side: int = 0
    probe_radii: tuple | None = None
    graph_angle: float | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("fault vertices must be an (n, 2) array")
        if len(v) < (3 if self.closed else 2):
            raise GeometryError("too few fault vertices")
        seg = np.diff(np.vstack([v, v[:1]]) if self.closed else v, axis=0)
        if np.any(np.linalg.norm(seg, axis=1) <= 0):
            raise GeometryError("degenerate fault segment")
        if not polyline_is_simple(v, self.closed):
            raise GeometryError("fault polyline is not simple")
        side = int(self.side)
        if self.closed:
            # reversing would silently reassign per-segment jump data
            if signed_area(v) < 0:
                raise GeometryError("closed fault vertices must be listed counter-clockwise")
            if not is_convex_ccw(v):
                raise GeometryError("closed faults must bound a convex polygon")
            side = 1
            angle = None
        else:
            if side not in (-1, 0, 1):
                raise GeometryError("side must be -1, 0 or +1")
            angle = self.graph_angle if self.graph_angle is not None else _graph_angle(v)
            if angle is None:
                raise GeometryError("open fault is not the graph of a function in any rotated frame")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "side", side)
        object.__setattr__(self, "graph_angle", angle)
        if self.probe_radii is not None:
            object.__setattr__(self, "probe_radii", tuple(float(r) for r in self.probe_radii))

    @property
    def n_segments(self):
        return len(self.vertices) if self.closed else len(self.vertices) - 1

    def segment(self, k):
        n = len(self.vertices)
        return self.vertices[k], self.vertices[(k + 1) % n]

    def segment_lengths(self):
        return np.array([np.linalg.norm(b - a) for a, b in map(self.segment, range(self.n_segments))])

    @property
    def corner_indices(self):
        """Vertices with two incident fault segments."""
        n = len(self.vertices)
        return list(range(n)) if self.closed else list(range(1, n - 1))

    def with_side(self, side):
        return replace(self, side=side)

    def frames(self):
        return [corner_frame_of(self, k) for k in self.corner_indices]

    def incident_segments(self, k):
        """(segment on the + edge, segment on the - edge) at corner vertex k."""
        n = len(self.vertices)
        before = (k - 1) % n if self.closed else k - 1
        after = k
        # the + edge is the one reached by rotating counter-clockwise across the inside
        if self.side > 0:
            return before, after
        return after, before


def _graph_angle(v):
    """Rotation angle under which the polyline is a strictly monotone graph."""
    chord = v[-1] - v[0]
    base = math.atan2(chord[1], chord[0])
    for delta in np.concatenate([[0.0], np.linspace(-math.pi / 2, math.pi / 2, 181)]):
        a = base + delta
        x = v @ np.array([math.cos(a), math.sin(a)])
        if np.all(np.diff(x) > 1e-12):
            return float(a)
    return None


def corner_frame_of(fault, vertex):
    """Corner frame at an interior fault vertex, sector on the inside."""
    if fault.side == 0:
        raise GeometryError("inside of the fault is undetermined; close the fault first")
    if vertex not in fault.corner_indices:
        raise GeometryError(f"vertex {vertex} is not an interior corner of the fault")
    n = len(fault.vertices)
    x_c = fault.vertices[vertex]
    nxt = fault.vertices[(vertex + 1) % n] - x_c
    prv = fault.vertices[(vertex - 1) % n] - x_c
    a_next = math.atan2(nxt[1], nxt[0])
    a_prev = math.atan2(prv[1], prv[0])
    if fault.side > 0:
        # inside on the left: sweep counter-clockwise from next to previous
        theta_m = a_next
        opening = (a_prev - a_next) % (2 * math.pi)
    else:
        theta_m = a_prev
        opening = (a_next - a_prev) % (2 * math.pi)
    if not 1e-9 < opening < math.pi - 1e-9:
        raise GeometryError(f"no valid sector at vertex {vertex} (opening {opening:.6g} rad)")
    theta_m = wrap_angle(theta_m)
    if fault.probe_radii is not None:
        idx = fault.corner_indices.index(vertex)
        h = fault.probe_radii[idx]
    else:
        h = DEFAULT_PROBE_FRACTION * min(np.linalg.norm(nxt), np.linalg.norm(prv))
    if not 0 < h <= 0.5 * min(np.linalg.norm(nxt), np.linalg.norm(prv)) + 1e-12:
        raise GeometryError(f"probe radius at vertex {vertex} exceeds half the shorter edge")
    return CornerFrame(vertex, np.array(x_c), theta_m, theta_m + opening, float(h))


# ---------------------------------------------------------------------------
# closing arc
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Closure:
    """A fault together with the closing arc that makes it a closed curve."""

    fault: FaultGeometry
    arc: np.ndarray           # Gamma_0 polyline from the last to the first fault vertex
    polygon: np.ndarray       # Gamma = fault followed by the arc interior points

    @property
    def inside_point(self):
        return _interior_point(self.polygon)


def closed_closure(fault):
    if not fault.closed:
        raise GeometryError("fault is open")
    return Closure(fault, np.zeros((0, 2)), np.array(fault.vertices))


def _interior_point(polygon):
    p = np.asarray(polygon, dtype=float)
    if signed_area(p) < 0:
        p = p[::-1]
    # ear test: the centroid of a convex vertex triangle with no vertex inside
    n = len(p)
    for i in range(n):
        a, b, c = p[i - 1], p[i], p[(i + 1) % n]
        if _orient(a, b, c) <= 0:
            continue
        tri = np.array([a, b, c])
        others = [p[j] for j in range(n) if j not in ((i - 1) % n, i, (i + 1) % n)]
        if not any(point_in_polygon(q, tri) for q in others):
            return tri.mean(axis=0)
    raise GeometryError("could not find an interior point")


def close_open_fault(fault, domain, clearance=None, schedule=(1.0, 0.75, 0.5, 0.35, 0.25, 0.15, 0.1)):
    """Build a cap-shaped closing arc for an open fault.

    The arc leaves the last vertex along a unit direction ``d``, runs parallel
    to the chord and returns to the first vertex. ``d`` is the right normal
    of the chord unless the fault bulges to that side. Clearances are tried
    from ``schedule`` (fractions of ``clearance``) on the preferred side first.
    """
    if fault.closed:
        raise GeometryError("fault already closed")
    v = fault.vertices
    if not all(domain.contains(p) for p in v):
        raise GeometryError("fault is not inside the domain")
    base = 0.05 * domain.diameter if clearance is None else float(clearance)
    chord = v[-1] - v[0]
    right = np.array([chord[1], -chord[0]]) / np.linalg.norm(chord)
    bulge = float(np.sum((v - v[0]) @ right))
    sides = [right, -right] if bulge <= 1e-12 else [-right, right]
    last_problem = None
    for d in sides:
        for frac in schedule:
            c = base * frac
            arc = np.array([v[-1], v[-1] + c * d, v[0] + c * d, v[0]])
            problem = _check_arc(v, arc, domain, c)
            if problem is None:
                polygon = np.vstack([v, arc[1:-1]])
                # inside lies to the left when the closed curve runs counter-clockwise
                side = 1 if signed_area(polygon) > 0 else -1
                closed_fault = fault.with_side(side)
                return Closure(closed_fault, arc, polygon)
            last_problem = problem
    raise GeometryError(f"no simple closing arc found: {last_problem}")


def _check_arc(v, arc, domain, clearance):
    """None if the arc is admissible, else a description of the problem."""
    for k in range(len(arc) - 1):
        a, b = arc[k], arc[k + 1]
        if not (domain.contains(b) and domain.contains(a)):
            return f"closing segment {k} leaves the domain"
        if domain.distance_to_boundary(a, b) < 0.5 * clearance:
            return f"closing segment {k} too close to the domain boundary"
    # fault/arc crossings are caught by the simplicity test of the joint curve
    polygon = np.vstack([v, arc[1:-1]])
    if not polyline_is_simple(polygon, closed=True):
        return "fault plus closing arc is not a simple curve"
    return None

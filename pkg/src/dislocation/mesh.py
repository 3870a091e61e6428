"""Conforming triangle meshes with duplicated nodes along the fault.

Region ids: 1 for triangles inside the closed curve fault + closing arc,
0 outside. Every fault node except open-fault endpoints carries two node
ids: the original one is used by inside triangles (the ``-`` copy), a new
one by outside triangles (the ``+`` copy). ``parent[i]`` maps a ``+`` copy
to its ``-`` copy and every other node to itself.

Interface edges are stored as ``(segment_id, plus_n1, plus_n2, minus_n1,
minus_n2)`` and oriented along the fault traversal. Fault segment ``k``
has id ``k``; closing-arc segment ``j`` has id ``-(j + 1)`` (both node
pairs coincide there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import triangle as tr

from .geometry import (Closure, DomainPolygon, GeometryError, closed_closure,
                       segment_distance)

DOMAIN_MARKER = 10
FAULT_MARKER = 1000
ARC_MARKER = 2000


class MeshError(GeometryError):
    """Raised when the geometry cannot be meshed at the requested size."""


@dataclass(frozen=True)
class TransmissionMesh:
    nodes: np.ndarray            # (N, 2)
    triangles: np.ndarray        # (T, 3), positively oriented
    region: np.ndarray           # (T,), 1 inside, 0 outside
    parent: np.ndarray           # (N,)
    interface: np.ndarray        # (E, 5)
    interface_normals: np.ndarray  # (E, 2), pointing from inside to outside
    boundary: np.ndarray         # (B, 2), oriented counter-clockwise
    boundary_edge_id: np.ndarray   # (B,), index of the domain polygon edge
    boundary_tags: tuple         # (B,), "D", "N" or "N0"
    h_mesh: float
    domain: DomainPolygon | None = None
    closure: Closure | None = None

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_dofs(self):
        return 2 * len(self.nodes)

    @property
    def plus_copies(self):
        return np.flatnonzero(self.parent != np.arange(self.n_nodes))

    @property
    def fault_edges(self):
        return self.interface[self.interface[:, 0] >= 0]

    @property
    def arc_edges(self):
        return self.interface[self.interface[:, 0] < 0]

    def fault_node_pairs(self):
        """(plus, minus) node ids of every node on the fault, endpoints included."""
        e = self.fault_edges
        plus = np.concatenate([e[:, 1], e[:, 2]])
        minus = np.concatenate([e[:, 3], e[:, 4]])
        pairs = np.unique(np.stack([plus, minus], axis=1), axis=0)
        return pairs[:, 0], pairs[:, 1]

    def dirichlet_nodes(self):
        mask = np.array([t == "D" for t in self.boundary_tags], dtype=bool)
        return np.unique(self.boundary[mask])

    def boundary_nodes(self):
        return np.unique(self.boundary)

    def edges_with_tag(self, tag):
        """Indices of boundary edges carrying ``tag`` ("N" includes "N0")."""
        tags = np.array(self.boundary_tags)
        if tag == "N":
            return np.flatnonzero((tags == "N") | (tags == "N0"))
        return np.flatnonzero(tags == tag)

    def node_regions(self):
        """Bit mask per node: 1 if used by an outside triangle, 2 if by an inside one."""
        mask = np.zeros(self.n_nodes, dtype=int)
        for reg, bit in ((0, 1), (1, 2)):
            mask[np.unique(self.triangles[self.region == reg])] |= bit
        return mask

    def triangle_diameters(self):
        p = self.nodes[self.triangles]
        d = [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
        return np.max(d, axis=0)

    def areas(self):
        p = self.nodes[self.triangles]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def _split_polyline(points, closed, h, grading=0):
    """Subdivide each edge into pieces no longer than h; returns points and edge ids.

    ``grading`` extra points at distances ``h / 2**j`` (j = 1..grading) from
    both ends of every edge refine the mesh geometrically towards vertices.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    out, owner = [], []
    m = n if closed else n - 1
    for k in range(m):
        a, b = points[k], points[(k + 1) % n]
        length = float(np.linalg.norm(b - a))
        pieces = max(1, int(math.ceil(length / h - 1e-9)))
        t = list(np.arange(pieces) / pieces)
        if grading:
            first = 1.0 / pieces
            near = [h / 2 ** j / length for j in range(1, grading + 1)]
            near = [d for d in near if d < 0.5 * first]
            t = sorted(set(t) | set(near) | {1.0 - d for d in near})
        for tj in t:
            out.append(a + (b - a) * tj)
            owner.append(k)
    if not closed:
        out.append(points[-1])
    return np.array(out), np.array(owner)


def _check_separation(domain, closure, h):
    """Reject geometry where distinct features are closer than h/4."""
    gamma = closure.polygon
    ng = len(gamma)
    g_edges = [(gamma[i], gamma[(i + 1) % ng]) for i in range(ng)]
    for i, (a, b) in enumerate(g_edges):
        for j, (p, q) in enumerate(domain.edges()):
            if segment_distance(a, b, p, q) < h / 4:
                raise MeshError(f"fault/arc segment {i} lies within h_mesh/4 of boundary edge {j}; "
                                "refine h_mesh or move the fault")
        for j in range(i + 2, ng):
            if i == 0 and j == ng - 1:
                continue
            p, q = g_edges[j]
            if segment_distance(a, b, p, q) < h / 4:
                raise MeshError(f"curve segments {i} and {j} are within h_mesh/4; refine h_mesh")


def build_mesh(domain, closure, h_mesh, min_angle=28.0, corner_grading=0):
    """Triangulate ``domain`` with the fault and closing arc as constrained edges.

    ``closure`` is the result of :func:`close_open_fault` or, for a closed fault,
    the fault itself (wrapped automatically). ``corner_grading`` levels of
    geometric refinement are added at every fault vertex, which shortens the
    zone where a jump that changes at a corner is smeared over one element.
    """
    if not isinstance(closure, Closure):
        closure = closed_closure(closure)
    fault = closure.fault
    h = float(h_mesh)
    if not h > 0:
        raise MeshError("h_mesh must be positive")
    if h >= fault.segment_lengths().min():
        raise MeshError("h_mesh must be smaller than the shortest fault segment")
    _check_separation(domain, closure, h)

    pts, segs, marks = [], [], []

    def add_chain(chain, closed, marker_base, grading=0):
        p, owner = _split_polyline(chain, closed, h, grading)
        start = sum(len(x) for x in pts)
        idx = np.arange(len(p)) + start
        nseg = len(p) if closed else len(p) - 1
        for j in range(nseg):
            segs.append((idx[j], idx[(j + 1) % len(p)]))
            marks.append(marker_base + owner[j])
        pts.append(p)
        return idx

    add_chain(domain.vertices, True, DOMAIN_MARKER)
    fidx = add_chain(fault.vertices, fault.closed, FAULT_MARKER, int(corner_grading))
    if not fault.closed:
        # arc interior points are new; its end points coincide with the fault ends
        arc = closure.arc
        p, owner = _split_polyline(arc, False, h)
        start = sum(len(x) for x in pts)
        inner = p[1:-1]
        idx = np.concatenate([[fidx[-1]], np.arange(len(inner)) + start, [fidx[0]]])
        for j in range(len(idx) - 1):
            segs.append((idx[j], idx[j + 1]))
            marks.append(ARC_MARKER + owner[j])
        pts.append(inner)

    vertices = np.vstack(pts)
    area = math.sqrt(3.0) / 4.0 * h * h
    geo = {
        "vertices": vertices,
        "segments": np.array(segs, dtype=np.int32),
        "segment_markers": np.array(marks, dtype=np.int32)[:, None],
        "regions": np.array([[*closure.inside_point, 1.0, 0.0]]),
    }
    # fixed-point: the switch parser does not understand exponents
    out = tr.triangulate(geo, f"pq{min_angle:g}Aa{area:.20f}")
    nodes = np.array(out["vertices"], dtype=float)
    tris = np.array(out["triangles"], dtype=np.int64)
    region = np.rint(np.asarray(out["triangle_attributes"]).ravel()).astype(np.int64)
    osegs = np.array(out["segments"], dtype=np.int64)
    omarks = np.asarray(out["segment_markers"]).ravel().astype(np.int64)

    # positive orientation
    p = nodes[tris]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - \
          (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = det < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    return _split_along_fault(domain, closure, h, nodes, tris, region, osegs, omarks)


def _param_on(a, b, x):
    d = b - a
    return float(np.dot(x - a, d) / np.dot(d, d))


def _split_along_fault(domain, closure, h, nodes, tris, region, osegs, omarks):
    fault = closure.fault
    fv = fault.vertices
    nf = len(fv)

    is_fault = (omarks >= FAULT_MARKER) & (omarks < ARC_MARKER)
    fault_nodes = np.unique(osegs[is_fault])
    if not fault.closed:
        ends = [int(np.argmin(np.linalg.norm(nodes - fv[i], axis=1))) for i in (0, nf - 1)]
        fault_nodes = np.setdiff1d(fault_nodes, ends)

    n0 = len(nodes)
    plus_of = {int(n): n0 + j for j, n in enumerate(fault_nodes)}
    parent = np.concatenate([np.arange(n0), fault_nodes]).astype(np.int64)
    nodes = np.vstack([nodes, nodes[fault_nodes]])

    outside = region == 0
    sub = tris[outside]
    for n, p in plus_of.items():
        sub[sub == n] = p
    tris = tris.copy()
    tris[outside] = sub

    iface, normals = [], []
    for (a, b), m in zip(osegs, omarks):
        if m < FAULT_MARKER:
            continue
        if m < ARC_MARKER:
            k = int(m - FAULT_MARKER)
            sa, sb = fault.segment(k)
            sid = k
        else:
            k = int(m - ARC_MARKER)
            sa, sb = closure.arc[k], closure.arc[k + 1]
            sid = -(k + 1)
        if _param_on(sa, sb, nodes[a]) > _param_on(sa, sb, nodes[b]):
            a, b = b, a
        t = (sb - sa) / np.linalg.norm(sb - sa)
        # the inside lies on the left of a counter-clockwise traversal of the curve
        curve_side = fault.side if sid >= 0 else fault.side
        nu = curve_side * np.array([t[1], -t[0]])
        pa = plus_of.get(int(a), int(a)) if sid >= 0 else int(a)
        pb = plus_of.get(int(b), int(b)) if sid >= 0 else int(b)
        iface.append((sid, pa, pb, int(a), int(b)))
        normals.append(nu)

    bnd, bid, btag = [], [], []
    for (a, b), m in zip(osegs, omarks):
        if not DOMAIN_MARKER <= m < FAULT_MARKER:
            continue
        i = int(m - DOMAIN_MARKER)
        va, vb = domain.vertices[i], domain.vertices[(i + 1) % len(domain.vertices)]
        if _param_on(va, vb, nodes[a]) > _param_on(va, vb, nodes[b]):
            a, b = b, a
        bnd.append((int(a), int(b)))
        bid.append(i)
        btag.append("N0" if i in domain.observation else domain.tags[i])

    iface = np.array(iface, dtype=np.int64).reshape(-1, 5)
    order = np.lexsort((iface[:, 3], iface[:, 0] < 0, np.abs(iface[:, 0])))
    border = np.lexsort((np.array([b[0] for b in bnd]), np.array(bid)))
    return TransmissionMesh(
        nodes=_frozen(nodes), triangles=_frozen(tris), region=_frozen(region),
        parent=_frozen(parent), interface=_frozen(iface[order]),
        interface_normals=_frozen(np.array(normals).reshape(-1, 2)[order]),
        boundary=_frozen(np.array(bnd, dtype=np.int64)[border]),
        boundary_edge_id=_frozen(np.array(bid, dtype=np.int64)[border]),
        boundary_tags=tuple(np.array(btag)[border].tolist()),
        h_mesh=h, domain=domain, closure=closure)


def morph_mesh(mesh, closure, min_quality=0.3):
    """Move the nodes of ``mesh`` so that its fault and arc follow ``closure``.

    Nodes on a fault or arc segment keep their relative position on that
    segment, outer boundary nodes stay fixed and all other nodes follow a
    discrete harmonic extension. The topology is unchanged, so observations
    computed on morphed meshes depend continuously on the geometry. Raises
    :class:`MeshError` if a triangle inverts or its quality (relative to the
    original triangle) drops below ``min_quality``.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.linalg import spsolve

    if not isinstance(closure, Closure):
        closure = closed_closure(closure)
    old = mesh.closure
    if (old.fault.closed != closure.fault.closed or len(old.fault.vertices) != len(closure.fault.vertices)
            or len(old.arc) != len(closure.arc)):
        raise MeshError("morph target has a different structure")
    n = mesh.n_nodes
    par = mesh.parent
    target = {}
    for sid, p1, p2, m1, m2 in mesh.interface:
        if sid >= 0:
            a, b = old.fault.segment(sid)
            na, nb = closure.fault.segment(sid)
        else:
            k = -sid - 1
            a, b, na, nb = old.arc[k], old.arc[k + 1], closure.arc[k], closure.arc[k + 1]
        for m in (m1, m2):
            t = _param_on(a, b, mesh.nodes[m])
            target[int(par[m])] = na + t * (nb - na)
    for i in np.unique(mesh.boundary):
        target[int(par[i])] = mesh.nodes[i]
    # harmonic extension on the merged (parent) nodes; small elements are
    # stiffened (weight 1/area) so graded corner regions move almost rigidly
    tri = par[mesh.triangles]
    p = mesh.nodes[mesh.triangles]
    area = _areas(mesh.nodes, mesh.triangles)
    grads = np.stack([np.stack([p[:, (i + 1) % 3, 1] - p[:, (i + 2) % 3, 1],
                                p[:, (i + 2) % 3, 0] - p[:, (i + 1) % 3, 0]], axis=1)
                      for i in range(3)], axis=1) / (2.0 * area)[:, None, None]
    ke = np.einsum("tid,tjd->tij", grads, grads)   # element stiffness divided by area
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    L = coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    used = np.unique(tri)
    fixed = np.array(sorted(target), dtype=np.int64)
    free = np.setdiff1d(used, fixed)
    disp = np.zeros((n, 2))
    disp[fixed] = np.array([target[i] for i in fixed]) - mesh.nodes[fixed]
    if free.size:
        rhs = -(L[free][:, fixed] @ disp[fixed])
        A = L[free][:, free].tocsc()
        disp[free] = np.column_stack([spsolve(A, rhs[:, j]) for j in range(2)])
    nodes = mesh.nodes + disp[par]
    new_area = _areas(nodes, mesh.triangles)
    q_old = _quality(mesh.nodes, mesh.triangles)
    q_new = _quality(nodes, mesh.triangles)
    if np.any(new_area <= 0) or np.any(q_new < min_quality * q_old):
        raise MeshError("morphed mesh is degenerate; remesh instead")
    normals = []
    for sid, p1, p2, m1, m2 in mesh.interface:
        if sid >= 0:
            a, b = closure.fault.segment(sid)
        else:
            k = -sid - 1
            a, b = closure.arc[k], closure.arc[k + 1]
        t = (b - a) / np.linalg.norm(b - a)
        normals.append(closure.fault.side * np.array([t[1], -t[0]]))
    return replace(mesh, nodes=_frozen(nodes), interface_normals=_frozen(np.array(normals).reshape(-1, 2)),
                   closure=closure)


def _areas(nodes, tris):
    p = nodes[tris]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def _quality(nodes, tris):
    """``4 sqrt(3) area / sum of squared edge lengths`` (1 for equilateral)."""
    p = nodes[tris]
    e2 = sum(np.sum((p[:, i] - p[:, j]) ** 2, axis=1) for i, j in ((0, 1), (1, 2), (2, 0)))
    return 4.0 * math.sqrt(3.0) * _areas(nodes, tris) / e2


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def write_mesh(mesh, path):
    lines = [f"# h_mesh {mesh.h_mesh:.17g}", f"NODES {mesh.n_nodes}"]
    lines += [f"{i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(mesh.nodes)]
    lines.append(f"TRIANGLES {len(mesh.triangles)}")
    lines += [f"{i} {a} {b} {c} {r}" for i, ((a, b, c), r) in enumerate(zip(mesh.triangles, mesh.region))]
    lines.append(f"INTERFACE_EDGES {len(mesh.interface)}")
    lines += [" ".join(str(int(v)) for v in row) for row in mesh.interface]
    lines.append(f"BOUNDARY_EDGES {len(mesh.boundary)}")
    lines += [f"{a} {b} {t}" for (a, b), t in zip(mesh.boundary, mesh.boundary_tags)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read a mesh file; returns a dict of arrays (geometry objects are not stored)."""
    sections = {}
    current = None
    h = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["h_mesh"]:
                    h = float(parts[1])
                continue
            head = line.split()
            if head[0] in ("NODES", "TRIANGLES", "INTERFACE_EDGES", "BOUNDARY_EDGES"):
                current = head[0]
                sections[current] = []
                continue
            if current is None:
                raise ValueError(f"data before first section: {line!r}")
            sections[current].append(head)
    nodes = np.array([[float(r[1]), float(r[2])] for r in sections.get("NODES", [])])
    tri = np.array([[int(v) for v in r[1:5]] for r in sections.get("TRIANGLES", [])], dtype=np.int64)
    iface = np.array([[int(v) for v in r] for r in sections.get("INTERFACE_EDGES", [])],
                     dtype=np.int64).reshape(-1, 5)
    bnd = sections.get("BOUNDARY_EDGES", [])
    return {
        "h_mesh": h,
        "nodes": nodes,
        "triangles": tri[:, :3],
        "region": tri[:, 3],
        "interface": iface,
        "boundary": np.array([[int(r[0]), int(r[1])] for r in bnd], dtype=np.int64).reshape(-1, 2),
        "boundary_tags": tuple(r[2] for r in bnd),
    }

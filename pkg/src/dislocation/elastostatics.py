"""Isotropic 2D elastostatics with displacement and traction jumps.

Gradients follow ``grad[i, j] = d u_i / d x_j``. The direct solver works on
the split mesh of :mod:`dislocation.mesh`: the jump ``f`` is carried by a
discrete Dirichlet lift supported outside, and the remaining unknown is a
continuous P1 field obtained from

    a(w, phi) = (b, phi) - int_Gamma g . phi - a_out(lift, phi)

with ``phi`` vanishing on the clamped boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import TRIANGLE_BARY, TRIANGLE_WEIGHTS, gauss_legendre


class ElasticityError(ValueError):
    """Invalid material data or jump data."""


class SolverError(RuntimeError):
    """Numerical failure of a linear solve."""


# ---------------------------------------------------------------------------
# material law
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LameParams:
    """Lamé pair, optionally with per-triangle overrides for variable media."""

    lam: float
    mu: float
    lam_map: np.ndarray | None = None
    mu_map: np.ndarray | None = None

    def __post_init__(self):
        maps = [m for m in (self.lam_map, self.mu_map) if m is not None]
        lam, mu = self.per_triangle(len(maps[0]) if maps else None)
        bad = np.flatnonzero(~((mu > 0) & (2 * mu + 2 * lam > 0)))
        if bad.size:
            i = int(bad[0])
            raise ElasticityError(f"strong convexity violated (mu > 0, 2 mu + 2 lambda > 0) at triangle {i}"
                                  if self.mu_map is not None or self.lam_map is not None
                                  else "strong convexity violated (mu > 0, 2 mu + 2 lambda > 0)")

    def per_triangle(self, n):
        if n is None:
            return np.array([float(self.lam)]), np.array([float(self.mu)])
        lam = np.full(n, float(self.lam)) if self.lam_map is None else np.asarray(self.lam_map, dtype=float)
        mu = np.full(n, float(self.mu)) if self.mu_map is None else np.asarray(self.mu_map, dtype=float)
        if len(lam) != n or len(mu) != n:
            raise ElasticityError("per-triangle parameter map has the wrong length")
        return lam, mu

    def d_matrix(self):
        lam, mu = float(self.lam), float(self.mu)
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


def stress(gradient, params):
    """Cauchy stress ``lam tr(G) I + mu (G + G^T)``; works on stacks of matrices."""
    g = np.asarray(gradient)
    tr_ = np.trace(g, axis1=-2, axis2=-1)
    eye = np.eye(2)
    return params.lam * tr_[..., None, None] * eye + params.mu * (g + np.swapaxes(g, -1, -2))


def traction(gradient, params, nu, normalize=False):
    """Traction ``stress(G) . nu``. Non-unit normals are rejected unless ``normalize``."""
    nu = np.asarray(nu, dtype=float)
    norm = np.linalg.norm(nu, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-12):
        if not normalize:
            raise ElasticityError("normal vector is not of unit length")
        nu = nu / norm[..., None]
    return np.einsum("...ij,...j->...i", stress(gradient, params), nu)


# ---------------------------------------------------------------------------
# jump data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trace:
    """A vector trace on one fault segment.

    ``kind`` is "constant" (``data`` is a 2-vector), "function" (``data``
    maps an (n, 2) array of points to (n, 2) values) or "sampled" (``data``
    is a pair of arc lengths and (m, 2) values, interpolated linearly).
    "sum" and "scale" are built by arithmetic on traces. ``holder`` is the
    declared Hölder exponent.
    """

    kind: str
    data: object
    holder: float = 1.0

    @classmethod
    def constant(cls, value):
        return cls("constant", np.asarray(value, dtype=float).reshape(2))

    @classmethod
    def function(cls, fn, holder=1.0):
        return cls("function", fn, holder)

    @classmethod
    def sampled(cls, arc, values, holder=1.0):
        arc = np.asarray(arc, dtype=float)
        values = np.asarray(values, dtype=float).reshape(len(arc), 2)
        if np.any(np.diff(arc) <= 0):
            raise ElasticityError("sample arc lengths must increase")
        return cls("sampled", (arc, values), holder)

    def __call__(self, t, points):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind == "constant":
            return np.broadcast_to(self.data, (len(t), 2)).copy()
        if self.kind == "function":
            return np.asarray(self.data(np.atleast_2d(points)), dtype=float).reshape(len(t), 2)
        if self.kind == "sampled":
            arc, vals = self.data
            return np.stack([np.interp(t, arc, vals[:, i]) for i in range(2)], axis=1)
        if self.kind == "sum":
            return self.data[0](t, points) + self.data[1](t, points)
        if self.kind == "scale":
            return self.data[0] * self.data[1](t, points)
        raise ElasticityError(f"unknown trace kind {self.kind!r}")

    def on_segment(self, a, b, t):
        """Values at arc lengths ``t`` of the segment from a to b."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d = (b - a) / np.linalg.norm(b - a)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self(t, a[None, :] + t[:, None] * d[None, :])

    def end_derivative(self, a, b, at_start):
        """One-sided tangential derivative at one end of the segment a-b."""
        length = float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
        if self.kind == "constant":
            return np.zeros(2)
        if self.kind == "sum":
            return sum(x.end_derivative(a, b, at_start) for x in self.data)
        if self.kind == "scale":
            return self.data[0] * self.data[1].end_derivative(a, b, at_start)
        if self.kind == "sampled":
            arc, vals = self.data
            if at_start:
                return (vals[1] - vals[0]) / (arc[1] - arc[0])
            return (vals[-1] - vals[-2]) / (arc[-1] - arc[-2])
        step = 1e-6 * length
        t0 = 0.0 if at_start else length
        t1 = step if at_start else length - step
        v = self.on_segment(a, b, [t0, t1])
        return (v[1] - v[0]) / (t1 - t0)

    def scaled(self, c):
        if self.kind == "constant":
            return Trace.constant(c * self.data)
        if self.kind == "sampled":
            return Trace("sampled", (self.data[0], c * self.data[1]), self.holder)
        return Trace("scale", (float(c), self), self.holder)


ZERO = Trace.constant((0.0, 0.0))


@dataclass(frozen=True)
class SegmentJump:
    f: Trace = ZERO
    g: Trace = ZERO


@dataclass(frozen=True)
class JumpData:
    """Jump pair per fault segment; data on the closing arc is zero."""

    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def constant(cls, f_values, g_values=None):
        f_values = np.asarray(f_values, dtype=float).reshape(-1, 2)
        g_values = np.zeros_like(f_values) if g_values is None else np.asarray(g_values, dtype=float).reshape(-1, 2)
        if len(f_values) != len(g_values):
            raise ElasticityError("f and g need one value per segment")
        return cls(tuple(SegmentJump(Trace.constant(f), Trace.constant(g)) for f, g in zip(f_values, g_values)))

    @classmethod
    def zero(cls, n_segments):
        return cls(tuple(SegmentJump() for _ in range(n_segments)))

    def __len__(self):
        return len(self.segments)

    def __add__(self, other):
        return JumpData(tuple(SegmentJump(_sum_trace(a.f, b.f), _sum_trace(a.g, b.g))
                              for a, b in zip(self.segments, other.segments)))

    def scaled(self, c):
        return JumpData(tuple(SegmentJump(s.f.scaled(c), s.g.scaled(c)) for s in self.segments))


def _sum_trace(a, b):
    if a.kind == b.kind == "constant":
        return Trace.constant(a.data + b.data)
    return Trace("sum", (a, b), min(a.holder, b.holder))


def nodal_jump(mesh, jumps, tol=1e-12):
    """Prescribed displacement jump at every fault node pair.

    Returns ``(plus, minus, values)``. A node shared by two segments gets the
    mean of both segment values; open-fault endpoints must carry zero.
    """
    fault = mesh.closure.fault
    if len(jumps) != fault.n_segments:
        raise ElasticityError(f"jump data has {len(jumps)} segments, fault has {fault.n_segments}")
    e = mesh.fault_edges
    per_node = {}
    for k, p1, p2, m1, m2 in e:
        a, _ = fault.segment(k)
        for p, m in ((p1, m1), (p2, m2)):
            x = mesh.nodes[m]
            val = jumps.segments[k].f([np.linalg.norm(x - a)], x[None, :])[0]
            per_node.setdefault((int(p), int(m)), {})[int(k)] = val
    keys = sorted(per_node)
    plus = np.array([k[0] for k in keys], dtype=np.int64)
    minus = np.array([k[1] for k in keys], dtype=np.int64)
    vals = np.array([np.mean(list(per_node[k].values()), axis=0) for k in keys]).reshape(-1, 2)
    ends = plus == minus
    scale = 1.0 + (np.max(np.abs(vals)) if vals.size else 0.0)
    if np.any(np.abs(vals[ends]) > tol * scale):
        raise ElasticityError("displacement jump must vanish at open-fault endpoints")
    vals[ends] = 0.0
    return plus, minus, vals


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def shape_gradients(points):
    """Barycentric gradients and areas for a stack of triangles (T, 3, 2)."""
    p = np.asarray(points, dtype=float)
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / det[:, None]
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / det[:, None]
    return np.stack([b, c], axis=2), 0.5 * det


def element_stiffness(points, lam, mu):
    """P1 element matrices (T, 6, 6) with dof order (x0, y0, x1, y1, x2, y2)."""
    p = np.asarray(points, dtype=float).reshape(-1, 3, 2)
    grads, area = shape_gradients(p)
    n = len(p)
    B = np.zeros((n, 3, 6))
    B[:, 0, 0::2] = grads[:, :, 0]
    B[:, 1, 1::2] = grads[:, :, 1]
    B[:, 2, 0::2] = grads[:, :, 1]
    B[:, 2, 1::2] = grads[:, :, 0]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (n,))
    D = np.zeros((n, 3, 3))
    D[:, 0, 0] = D[:, 1, 1] = lam + 2 * mu
    D[:, 0, 1] = D[:, 1, 0] = lam
    D[:, 2, 2] = mu
    return area[:, None, None] * np.einsum("tki,tkl,tlj->tij", B, D, B)


def _tri_dofs(tris):
    return np.stack([2 * tris[:, 0], 2 * tris[:, 0] + 1, 2 * tris[:, 1],
                     2 * tris[:, 1] + 1, 2 * tris[:, 2], 2 * tris[:, 2] + 1], axis=1)


def _global_matrix(mesh, params, mask=None):
    lam, mu = params.per_triangle(len(mesh.triangles))
    tris = mesh.triangles if mask is None else mesh.triangles[mask]
    if mask is not None:
        lam, mu = lam[mask], mu[mask]
    ke = element_stiffness(mesh.nodes[tris], lam, mu)
    dofs = _tri_dofs(tris)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = mesh.n_dofs
    return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))


def body_load(mesh, body_force):
    """Load vector of ``int b . phi`` with the 6-point triangle rule.

    ``body_force`` is a callable of points or a dict {region id: callable}.
    """
    rhs = np.zeros(mesh.n_dofs)
    if body_force is None:
        return rhs
    p = mesh.nodes[mesh.triangles]
    _, area = shape_gradients(p)
    xq = np.einsum("qk,tkd->tqd", TRIANGLE_BARY, p)
    vals = np.zeros(xq.shape)
    for reg in (0, 1):
        sel = mesh.region == reg
        if not np.any(sel):
            continue
        fn = body_force.get(reg) if isinstance(body_force, dict) else body_force
        if fn is None:
            continue
        vals[sel] = np.asarray(fn(xq[sel].reshape(-1, 2)), dtype=float).reshape(-1, len(TRIANGLE_WEIGHTS), 2)
    contrib = np.einsum("q,qk,tqd->tkd", TRIANGLE_WEIGHTS, TRIANGLE_BARY, vals) * area[:, None, None]
    dofs = _tri_dofs(mesh.triangles)
    np.add.at(rhs, dofs.ravel(), contrib.reshape(len(dofs), 6).ravel())
    return rhs


def prolongation(mesh):
    """Map from continuous dofs (non-copy nodes) to split dofs."""
    n0 = int(np.count_nonzero(mesh.parent == np.arange(mesh.n_nodes)))
    rows = np.arange(mesh.n_dofs)
    cols = 2 * mesh.parent[rows // 2] + rows % 2
    return sp.csr_matrix((np.ones(mesh.n_dofs), (rows, cols)), shape=(mesh.n_dofs, 2 * n0))


@dataclass
class SparseSystem:
    """Stiffness on the split dofs, load, clamped dofs and the prolongation."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray
    prolongation: sp.csr_matrix

    def reduced(self, rhs=None):
        """Matrix and load on the continuous space (interface pairs glued)."""
        P = self.prolongation
        K = (P.T @ self.matrix @ P).tocsr()
        r = P.T @ (self.rhs if rhs is None else rhs)
        return K, r

    def free_dofs(self):
        n = self.prolongation.shape[1]
        mask = np.ones(n, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)


def assemble(mesh, params, body_force=None):
    A = _global_matrix(mesh, params)
    dn = mesh.dirichlet_nodes()
    if dn.size == 0:
        raise ElasticityError("at least one clamped boundary edge is required")
    dn = np.unique(mesh.parent[dn])
    constrained = np.sort(np.concatenate([2 * dn, 2 * dn + 1]))
    return SparseSystem(A, body_load(mesh, body_force), constrained, prolongation(mesh))


def solve_linear(K, r, kind="direct", tol=1e-12):
    """Solve an SPD system; falls back to Jacobi-preconditioned CG."""
    K = sp.csc_matrix(K)
    if kind == "direct":
        try:
            x = spla.splu(K).solve(r)
            if np.all(np.isfinite(x)):
                return x
        except RuntimeError:
            pass
    elif kind != "cg":
        raise ElasticityError(f"unknown solver kind {kind!r}")
    d = K.diagonal()
    if np.any(d <= 0):
        raise SolverError("system has a non-positive diagonal entry")
    M = sp.diags(1.0 / d)
    x, info = spla.cg(K, r, rtol=tol, atol=0.0, M=M, maxiter=20 * K.shape[0])
    if info != 0:
        raise SolverError(f"conjugate gradients did not converge (info={info})")
    return x


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisplacementField:
    """Nodal displacements on a split mesh."""

    mesh: object
    values: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def jump(self):
        e = self.mesh.fault_edges
        plus = np.concatenate([e[:, 1], e[:, 2]])
        minus = np.concatenate([e[:, 3], e[:, 4]])
        return self.values[plus] - self.values[minus]

    def triangle_gradients(self):
        grads, _ = shape_gradients(self.mesh.nodes[self.mesh.triangles])
        u = self.values[self.mesh.triangles]
        return np.einsum("tki,tkj->tij", u, grads)

    def node_region(self):
        """1 if any inside triangle uses the node, else 0."""
        return (self.mesh.node_regions() >= 2).astype(int)

    def restrict(self, region):
        return _RegionView(self, region)

    def value(self, pts, region=None):
        tri, bary = locate(self.mesh, pts, region)
        return np.einsum("nk,nkd->nd", bary, self.values[self.mesh.triangles[tri]])

    def gradient(self, pts, region=None):
        tri, _ = locate(self.mesh, pts, region)
        return self.triangle_gradients()[tri]

    def to_csv(self, path):
        reg = self.node_region()
        with open(path, "w") as fh:
            fh.write("node_id,x,y,ux,uy,region\n")
            for i, ((x, y), (ux, uy)) in enumerate(zip(self.mesh.nodes, self.values)):
                fh.write(f"{i},{x:.17g},{y:.17g},{ux:.17g},{uy:.17g},{reg[i]}\n")


@dataclass(frozen=True)
class _RegionView:
    base: DisplacementField
    region: int

    def value(self, pts):
        return self.base.value(pts, self.region)

    def gradient(self, pts):
        return self.base.gradient(pts, self.region)


def read_field_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {"node_id": data[:, 0].astype(int), "xy": data[:, 1:3], "u": data[:, 3:5],
            "region": data[:, 5].astype(int)}


def locate(mesh, pts, region=None, tol=1e-10, chunk=256):
    """Triangle index and barycentric coordinates of each point."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    cand = np.arange(len(mesh.triangles)) if region is None else np.flatnonzero(mesh.region == region)
    p = mesh.nodes[mesh.triangles[cand]]
    x0 = p[:, 0]
    e1 = p[:, 1] - x0
    e2 = p[:, 2] - x0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    tri = np.empty(len(pts), dtype=np.int64)
    bary = np.empty((len(pts), 3))
    for s in range(0, len(pts), chunk):
        q = pts[s:s + chunk, None, :] - x0[None, :, :]
        l1 = (q[..., 0] * e2[:, 1] - q[..., 1] * e2[:, 0]) / det
        l2 = (e1[:, 0] * q[..., 1] - e1[:, 1] * q[..., 0]) / det
        l0 = 1.0 - l1 - l2
        worst = np.minimum(np.minimum(l0, l1), l2)
        best = np.argmax(worst, axis=1)
        rows = np.arange(len(best))
        if np.any(worst[rows, best] < -tol):
            bad = s + int(np.flatnonzero(worst[rows, best] < -tol)[0])
            raise ElasticityError(f"point {pts[bad]} lies outside the mesh region")
        tri[s:s + chunk] = cand[best]
        bary[s:s + chunk] = np.stack([l0[rows, best], l1[rows, best], l2[rows, best]], axis=1)
    return tri, bary


class LinearField:
    """Affine displacement ``u(x) = A x + b``; every affine field solves the Lamé system."""

    def __init__(self, A, b=(0.0, 0.0)):
        self.A = np.asarray(A, dtype=float).reshape(2, 2)
        self.b = np.asarray(b, dtype=float).reshape(2)

    def value(self, pts):
        return np.atleast_2d(pts) @ self.A.T + self.b

    def gradient(self, pts):
        return np.broadcast_to(self.A, (len(np.atleast_2d(pts)), 2, 2)).copy()


class AnalyticField:
    """Field given by callables for the value and the gradient."""

    def __init__(self, value, gradient):
        self._value = value
        self._gradient = gradient

    def value(self, pts):
        return np.asarray(self._value(np.atleast_2d(pts)))

    def gradient(self, pts):
        return np.asarray(self._gradient(np.atleast_2d(pts)))


# ---------------------------------------------------------------------------
# direct problem
# ---------------------------------------------------------------------------

class _Factor:
    """Reusable solve for one SPD matrix (factorised once when direct)."""

    def __init__(self, K, kind="direct", tol=1e-12):
        self.K = sp.csc_matrix(K)
        self.kind = kind
        self.tol = tol
        self.lu = None
        if kind == "direct" and self.K.shape[0]:
            try:
                self.lu = spla.splu(self.K)
            except RuntimeError:
                self.lu = None
        elif kind not in ("direct", "cg"):
            raise ElasticityError(f"unknown solver kind {kind!r}")

    def solve(self, r):
        if self.K.shape[0] == 0:
            return np.zeros(0)
        if self.lu is not None:
            x = self.lu.solve(r)
            if np.all(np.isfinite(x)):
                return x
        return solve_linear(self.K, r, kind="cg", tol=self.tol)


class TransmissionSolver:
    """Direct solver for one mesh and material; factorisations are reused across jump data."""

    def __init__(self, mesh, params, kind="direct", tol=1e-12):
        self.mesh = mesh
        self.params = params
        self.system = assemble(mesh, params)
        self.K, _ = self.system.reduced()
        self.free = self.system.free_dofs()
        self.main = _Factor(self.K[self.free][:, self.free], kind, tol)
        regions = mesh.node_regions()
        free_nodes = np.ones(mesh.n_nodes, dtype=bool)
        free_nodes[regions != 1] = False
        free_nodes[mesh.plus_copies] = False
        free_nodes[mesh.boundary_nodes()] = False
        free_nodes = np.flatnonzero(free_nodes)
        self.lift_free = np.sort(np.concatenate([2 * free_nodes, 2 * free_nodes + 1]))
        self.A_out = _global_matrix(mesh, params, mesh.region == 0)
        self.lift = _Factor(self.A_out[self.lift_free][:, self.lift_free], kind, tol)

    def lift_field(self, jumps):
        mesh = self.mesh
        lift = np.zeros((mesh.n_nodes, 2))
        plus, _, vals = nodal_jump(mesh, jumps)
        lift[plus] = vals
        if not np.any(vals):
            return DisplacementField(mesh, lift, {"residual": 0.0})
        x = lift.ravel()
        fd = self.lift_free
        rhs = -(self.A_out @ x)[fd]
        x[fd] = self.lift.solve(rhs)
        res = self.A_out @ x
        scale = max(np.linalg.norm(rhs), 1e-300)
        return DisplacementField(mesh, x.reshape(-1, 2), {"residual": float(np.linalg.norm(res[fd]) / scale)})

    def solve(self, jumps, body_force=None, neumann_lift_term=False):
        mesh, params, system = self.mesh, self.params, self.system
        plus, minus, fvals = nodal_jump(mesh, jumps)
        lift = self.lift_field(jumps)
        x_lift = lift.values.ravel()
        rhs = body_load(mesh, body_force) - system.matrix @ x_lift - interface_load(mesh, jumps)
        if neumann_lift_term:
            rhs = rhs + neumann_lift_load(mesh, params, lift)
        r = system.prolongation.T @ rhs
        free = self.free
        w = np.zeros(self.K.shape[0])
        w[free] = self.main.solve(r[free])
        u = (system.prolongation @ w + x_lift).reshape(-1, 2)
        res = np.linalg.norm(self.main.K @ w[free] - r[free]) / max(np.linalg.norm(r[free]), 1e-300)
        jump_err = float(np.max(np.abs(u[plus] - u[minus] - fvals))) if len(plus) else 0.0
        dn = mesh.dirichlet_nodes()
        info = {
            "jump_error": jump_err,
            "jump_scale": 1.0 + float(np.max(np.abs(fvals))) if fvals.size else 1.0,
            "dirichlet_max": float(np.max(np.abs(u[dn]))) if dn.size else 0.0,
            "relative_residual": float(res),
            "lift_residual": lift.info.get("residual", 0.0),
            "n_dofs": int(self.K.shape[0]),
        }
        return DisplacementField(mesh, u, info)


def lift_dirichlet(mesh, params, jumps, kind="direct", tol=1e-12):
    """Discrete Lamé extension of the jump into the outside region.

    Equal to the jump on the ``+`` copies of fault nodes and zero on the
    closing arc, on the outer boundary and at every inside node.
    """
    return TransmissionSolver(mesh, params, kind, tol).lift_field(jumps)


def interface_load(mesh, jumps, n_gauss=2):
    """Split-dof vector of ``int_Gamma g . phi`` on the ``-`` copies."""
    fault = mesh.closure.fault
    xq, wq = gauss_legendre(n_gauss)
    G = np.zeros((mesh.n_nodes, 2))
    for k, _, _, m1, m2 in mesh.fault_edges:
        a, _ = fault.segment(k)
        x1, x2 = mesh.nodes[m1], mesh.nodes[m2]
        length = np.linalg.norm(x2 - x1)
        pts = x1[None, :] + xq[:, None] * (x2 - x1)[None, :]
        t = np.linalg.norm(pts - a[None, :], axis=1)
        g = jumps.segments[k].g(t, pts)
        G[m1] += length * np.einsum("q,q,qd->d", wq, 1.0 - xq, g)
        G[m2] += length * np.einsum("q,q,qd->d", wq, xq, g)
    return G.ravel()


def neumann_lift_load(mesh, params, lift):
    """``int_{Sigma_N} T(lift) . phi`` from one-sided boundary-triangle gradients."""
    load = np.zeros((mesh.n_nodes, 2))
    grads = lift.triangle_gradients()
    owner = _edge_owner(mesh)
    lam, mu = params.per_triangle(len(mesh.triangles))
    for e in mesh.edges_with_tag("N"):
        a, b = mesh.boundary[e]
        t = owner[(min(a, b), max(a, b))]
        d = mesh.nodes[b] - mesh.nodes[a]
        length = np.linalg.norm(d)
        nu = np.array([d[1], -d[0]]) / length
        tr_ = traction(grads[t], LameParams(lam[t], mu[t]), nu)
        load[a] += 0.5 * length * tr_
        load[b] += 0.5 * length * tr_
    return load.ravel()


def _edge_owner(mesh):
    owner = {}
    for t, tri in enumerate(mesh.triangles):
        for i, j in ((0, 1), (1, 2), (2, 0)):
            a, b = int(tri[i]), int(tri[j])
            owner.setdefault((min(a, b), max(a, b)), t)
    return owner


def solve_direct(mesh, params, jumps, body_force=None, kind="direct", tol=1e-12,
                 neumann_lift_term=False):
    """Solve the transmission problem; returns the field with diagnostics in ``info``.

    ``neumann_lift_term`` adds ``+int_{Sigma_N} T(lift) . phi`` to the load.
    Integration by parts does not produce this term, so it is off by default
    and kept only for comparison.
    """
    return TransmissionSolver(mesh, params, kind, tol).solve(jumps, body_force, neumann_lift_term)


def weak_traction_jump(field, params, jumps, body_force=None):
    """Per fault node pair: discrete traction jump versus the ``g`` line load.

    For each pair the split residuals of both copies are added; the solve
    makes this sum equal to ``-int g phi``. Returns ``(minus_nodes, sum, load)``.
    """
    mesh = field.mesh
    system = assemble(mesh, params, body_force)
    r = (system.matrix @ field.values.ravel() - system.rhs).reshape(-1, 2)
    G = interface_load(mesh, jumps).reshape(-1, 2)
    plus, minus, _ = nodal_jump(mesh, jumps)
    inner = plus != minus
    return minus[inner], r[plus[inner]] + r[minus[inner]], -G[minus[inner]]


# ---------------------------------------------------------------------------
# traces and reciprocity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceSamples:
    points: np.ndarray        # (E, 3, 2): start, midpoint, end
    displacement: np.ndarray  # (E, 3, 2)
    traction: np.ndarray      # (E, 2), constant per edge for P1
    normals: np.ndarray       # (E, 2)


def boundary_trace(field, params, edge_ids, kind="boundary", side="+"):
    """Displacement and traction samples on boundary or interface edges.

    Interface tractions are one-sided (``side`` "+" or "-") and use the fault
    normal pointing from inside to outside; boundary tractions use the outward
    normal of the domain.
    """
    mesh = field.mesh
    edge_ids = np.atleast_1d(np.asarray(edge_ids, dtype=np.int64))
    if kind == "boundary":
        table = mesh.boundary
        if np.any((edge_ids < 0) | (edge_ids >= len(table))):
            raise ElasticityError("unknown boundary edge id")
        pairs = table[edge_ids]
        d = mesh.nodes[pairs[:, 1]] - mesh.nodes[pairs[:, 0]]
        normals = np.stack([d[:, 1], -d[:, 0]], axis=1) / np.linalg.norm(d, axis=1)[:, None]
    elif kind == "interface":
        table = mesh.interface
        if np.any((edge_ids < 0) | (edge_ids >= len(table))):
            raise ElasticityError("unknown interface edge id")
        if side not in ("+", "-"):
            raise ElasticityError("side must be '+' or '-'")
        cols = [1, 2] if side == "+" else [3, 4]
        pairs = table[edge_ids][:, cols]
        normals = mesh.interface_normals[edge_ids]
    else:
        raise ElasticityError(f"unknown edge kind {kind!r}")
    owner = _edge_owner(mesh)
    grads = field.triangle_gradients()
    lam, mu = params.per_triangle(len(mesh.triangles))
    trac = np.zeros((len(pairs), 2))
    for i, (a, b) in enumerate(pairs):
        t = owner[(min(a, b), max(a, b))]
        trac[i] = traction(grads[t], LameParams(lam[t], mu[t]), normals[i])
    xa, xb = mesh.nodes[pairs[:, 0]], mesh.nodes[pairs[:, 1]]
    ua, ub = field.values[pairs[:, 0]], field.values[pairs[:, 1]]
    points = np.stack([xa, 0.5 * (xa + xb), xb], axis=1)
    disp = np.stack([ua, 0.5 * (ua + ub), ub], axis=1)
    return TraceSamples(points, disp, trac, normals)


def _field_traction(fld, pts, params, nu):
    g = np.asarray(fld.gradient(pts))
    sig = params.lam * np.trace(g, axis1=-2, axis2=-1)[:, None, None] * np.eye(2) \
        + params.mu * (g + np.swapaxes(g, -1, -2))
    return np.einsum("nij,nj->ni", sig, nu)


def betti_residual(v, w, curve, params, panels=8, order=8):
    """``oint (T v . w - T w . v) ds`` along a closed polyline (outward normal).

    ``curve`` must repeat its first point at the end. Fields need ``value``
    and ``gradient`` methods and may be complex.
    """
    c = np.asarray(curve, dtype=float)
    if len(c) < 4 or not np.allclose(c[0], c[-1]):
        raise ElasticityError("betti_residual needs a closed curve (first point repeated)")
    x = c[:-1]
    area = 0.5 * np.sum(x[:, 0] * np.roll(x[:, 1], -1) - np.roll(x[:, 0], -1) * x[:, 1])
    orient = 1.0 if area > 0 else -1.0
    xq, wq = gauss_legendre(order)
    total = 0.0
    for a, b in zip(c[:-1], c[1:]):
        d = b - a
        length = np.linalg.norm(d)
        nu = orient * np.array([d[1], -d[0]]) / length
        t = ((np.arange(panels)[:, None] + xq[None, :]) / panels).ravel()
        wt = np.tile(wq, panels) / panels * length
        pts = a[None, :] + t[:, None] * d[None, :]
        nus = np.broadcast_to(nu, pts.shape)
        tv = _field_traction(v, pts, params, nus)
        tw = _field_traction(w, pts, params, nus)
        integrand = np.sum(tv * w.value(pts), axis=1) - np.sum(tw * v.value(pts), axis=1)
        total = total + np.dot(wt, integrand)
    return complex(total)


def l2_error(field, exact):
    """L2 norm of ``field - exact`` with ``exact`` a callable or {region: callable}."""
    mesh = field.mesh
    p = mesh.nodes[mesh.triangles]
    _, area = shape_gradients(p)
    xq = np.einsum("qk,tkd->tqd", TRIANGLE_BARY, p)
    uh = np.einsum("qk,tkd->tqd", TRIANGLE_BARY, field.values[mesh.triangles])
    ue = np.zeros_like(uh)
    for reg in (0, 1):
        sel = mesh.region == reg
        fn = exact.get(reg) if isinstance(exact, dict) else exact
        if np.any(sel):
            ue[sel] = np.asarray(fn(xq[sel].reshape(-1, 2))).reshape(-1, len(TRIANGLE_WEIGHTS), 2)
    err = np.sum((uh - ue) ** 2, axis=2)
    return math.sqrt(float(np.sum(area[:, None] * TRIANGLE_WEIGHTS[None, :] * err)))


def write_system(system, path):
    """Matrix-market triplet dump of the split stiffness matrix."""
    scipy.io.mmwrite(path, system.matrix.tocoo(), comment="split-dof stiffness", symmetry="general")

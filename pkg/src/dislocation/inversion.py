"""Forward map to boundary observations, misfit and fault reconstruction.

Observations are displacement samples at ``n_samples`` arc-length midpoints
of the observation arc, a grid fixed by the domain and independent of any
mesh. Jumps are constant per fault segment, so for a fixed geometry the
observation is linear in the ``4 m`` jump components. Reconstruction
exploits this: a pattern search moves the vertices and each trial
geometry is scored with the jumps eliminated by linear least squares.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .elastostatics import (ElasticityError, JumpData, LameParams, SegmentJump,
                            SolverError, Trace, TransmissionSolver)
from .geometry import (DomainPolygon, FaultGeometry, GeometryError, close_open_fault,
                       signed_area)
from .mesh import build_mesh, morph_mesh
from .probe import admissibility_check


class InversionError(ValueError):
    """Invalid inverse-problem input (grid mismatch, invalid initial guess)."""


class InadmissibleError(InversionError):
    """A hypothesis fails the corner admissibility gate."""

    def __init__(self, message, corners):
        super().__init__(message)
        self.corners = list(corners)


# ---------------------------------------------------------------------------
# scene and observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scene:
    """Domain, material, mesh size and the observation sampling grid."""

    domain: DomainPolygon
    params: LameParams
    h_mesh: float
    n_samples: int = 64
    min_angle: float = 28.0
    corner_grading: int = 5
    solver: str = "direct"
    tol: float = 1e-12

    def __post_init__(self):
        if not self.h_mesh > 0:
            raise InversionError("h_mesh must be positive")
        if self.n_samples < 1:
            raise InversionError("n_samples must be positive")
        if not self.domain.observation:
            raise InversionError("the domain has no observation arc")

    def refined(self, factor=2):
        """Same scene on a mesh ``factor`` times finer (truth data)."""
        return replace(self, h_mesh=self.h_mesh / factor)

    def sample_grid(self):
        """(arc_length, points) at the midpoints of ``n_samples`` equal arc pieces."""
        poly = self.domain.observation_polyline()
        seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        arc = (np.arange(self.n_samples) + 0.5) * cum[-1] / self.n_samples
        k = np.clip(np.searchsorted(cum, arc, side="right") - 1, 0, len(seg) - 1)
        t = (arc - cum[k]) / seg[k]
        pts = poly[k] + t[:, None] * (poly[k + 1] - poly[k])
        return arc, pts


@dataclass(frozen=True)
class Observation:
    """Displacement samples on the observation arc.

    An invalid observation (``valid=False``, values NaN) is the sentinel
    returned for hypotheses that cannot be decoded or meshed; its misfit
    against any data is infinite.
    """

    arc: np.ndarray
    points: np.ndarray
    values: np.ndarray
    noise: float = 0.0
    valid: bool = True
    reason: str = ""

    @classmethod
    def invalid(cls, scene, reason):
        arc, pts = scene.sample_grid()
        return cls(arc, pts, np.full((len(arc), 2), np.nan), valid=False, reason=reason)

    def with_noise(self, level, seed):
        """Add Gaussian noise with standard deviation ``level`` times the data RMS."""
        rng = np.random.default_rng(seed)
        rms = math.sqrt(float(np.mean(self.values ** 2)))
        noisy = self.values + level * rms * rng.standard_normal(self.values.shape)
        return replace(self, values=noisy, noise=float(level))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("arc_length,ux,uy\n")
            for s, (ux, uy) in zip(self.arc, self.values):
                fh.write(f"{s:.17g},{ux:.17g},{uy:.17g}\n")


def read_observation_csv(path, scene):
    """Read ``arc_length,ux,uy`` rows; the arc grid must match the scene's grid."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 3:
        raise InversionError(f"{path}: expected three columns arc_length,ux,uy")
    arc, pts = scene.sample_grid()
    if len(data) != len(arc) or not np.allclose(data[:, 0], arc, rtol=0, atol=1e-9 * scene.domain.diameter):
        raise InversionError(f"{path}: arc-length grid does not match the scene sampling grid")
    return Observation(arc, pts, data[:, 1:3].copy())


def sample_boundary(field, scene):
    """Interpolate nodal displacements linearly along observation boundary edges."""
    mesh = field.mesh
    arc, pts = scene.sample_grid()
    obs_edges = np.isin(mesh.boundary_edge_id, scene.domain.observation)
    pairs = mesh.boundary[obs_edges]
    a, b = mesh.nodes[pairs[:, 0]], mesh.nodes[pairs[:, 1]]
    d = b - a
    L2 = np.sum(d * d, axis=1)
    # parameter of every sample on every edge, clipped to the edge
    t = np.clip(np.einsum("sed,ed->se", pts[:, None, :] - a[None], d) / L2[None], 0.0, 1.0)
    proj = a[None] + t[..., None] * d[None]
    dist = np.linalg.norm(proj - pts[:, None, :], axis=2)
    e = np.argmin(dist, axis=1)
    if np.any(dist[np.arange(len(pts)), e] > 1e-9 * scene.domain.diameter):
        raise ElasticityError("a sample point is not on an observation edge of the mesh")
    te = t[np.arange(len(pts)), e][:, None]
    u = field.values
    vals = (1 - te) * u[pairs[e, 0]] + te * u[pairs[e, 1]]
    return Observation(arc, pts, vals)


def misfit(predicted, measured):
    """``0.5 * sum |u_pred - u_meas|^2``; infinite for the invalid sentinel."""
    if len(predicted.arc) != len(measured.arc) or not np.allclose(predicted.arc, measured.arc,
                                                                  rtol=0, atol=1e-12):
        raise InversionError("observation grids differ")
    if not (predicted.valid and measured.valid):
        return math.inf
    r = predicted.values - measured.values
    return 0.5 * float(np.sum(r * r))


def data_distance(a, b):
    """``|a - b| / |a|`` over all samples (infinite if either is invalid)."""
    if not (a.valid and b.valid):
        return math.inf
    den = float(np.linalg.norm(a.values))
    num = float(np.linalg.norm(a.values - b.values))
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

def _rot(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class FaultHypothesis:
    """Polygonal fault with per-segment constant jumps ``f`` and ``g`` (shape ``(m, 2)``).

    Closed faults are parametrised by their vertex coordinates. Open faults
    are parametrised as the graph ``y = h(x)`` in a frame rotated by
    ``angle``: breakpoints ``abscissae`` and heights ``heights``. On an open
    fault the displacement jump must vanish at the two free ends, so ``f``
    ramps linearly from zero on the first and last segment.
    """

    vertices: np.ndarray
    f: np.ndarray
    g: np.ndarray
    closed: bool = True
    angle: float = 0.0

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        m = len(v) if self.closed else len(v) - 1
        f = np.array(self.f, dtype=float).reshape(-1, 2) if np.size(self.f) else np.zeros((m, 2))
        g = np.array(self.g, dtype=float).reshape(-1, 2) if np.size(self.g) else np.zeros((m, 2))
        if v.ndim != 2 or v.shape[1] != 2:
            raise InversionError("vertices must have shape (n, 2)")
        if len(f) != m or len(g) != m:
            raise InversionError(f"need one f and one g vector per segment ({m})")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @classmethod
    def from_graph(cls, angle, abscissae, heights, f, g):
        x = np.asarray(abscissae, dtype=float)
        if np.any(np.diff(x) <= 0):
            raise InversionError("breakpoints must be strictly increasing")
        v = np.stack([x, np.asarray(heights, dtype=float)], axis=1) @ _rot(angle).T
        return cls(v, f, g, closed=False, angle=float(angle))

    @property
    def n_segments(self):
        return len(self.f)

    # geometry parameter vector
    def geometry_vector(self):
        if self.closed:
            return self.vertices.ravel().copy()
        local = self.vertices @ _rot(self.angle)
        return np.concatenate([[self.angle], local[:, 0], local[:, 1]])

    def with_geometry(self, x):
        x = np.asarray(x, dtype=float)
        if self.closed:
            return replace(self, vertices=x.reshape(-1, 2))
        n = len(self.vertices)
        angle, a, h = float(x[0]), x[1:n + 1], x[n + 1:]
        v = np.stack([a, h], axis=1) @ _rot(angle).T
        return replace(self, vertices=v, angle=angle)

    def with_jumps(self, f, g):
        return replace(self, f=np.asarray(f, dtype=float).reshape(-1, 2),
                       g=np.asarray(g, dtype=float).reshape(-1, 2))

    def jump_vector(self):
        """Jump components ordered per segment as ``(f_x, f_y, g_x, g_y)``."""
        return np.concatenate([self.f, self.g], axis=1).ravel()

    def canonicalize(self):
        """Closed faults: vertices counter-clockwise by angle about the centroid,
        starting with the smallest angle in ``(-pi, pi]``; segment jumps follow
        their segments. Open faults are returned unchanged."""
        if not self.closed:
            return self
        v = self.vertices
        n = len(v)
        c = v.mean(axis=0)
        ang = np.arctan2(v[:, 1] - c[1], v[:, 0] - c[0])
        order = np.argsort(ang, kind="stable")
        new_v = v[order]
        seg_of = {}
        for k in range(n):
            seg_of[frozenset((k, (k + 1) % n))] = k
        f = np.zeros_like(self.f)
        g = np.zeros_like(self.g)
        for j in range(n):
            key = frozenset((int(order[j]), int(order[(j + 1) % n])))
            if key not in seg_of:
                raise GeometryError("vertex order is not a relabelling of the polygon")
            f[j], g[j] = self.f[seg_of[key]], self.g[seg_of[key]]
        return replace(self, vertices=new_v, f=f, g=g)

    def fault(self):
        """Decoded :class:`FaultGeometry`; raises :class:`GeometryError` if invalid."""
        if self.closed:
            if len(self.vertices) >= 3 and signed_area(self.vertices) < 0:
                return self.canonicalize().fault()
            return FaultGeometry(self.vertices, closed=True)
        return FaultGeometry(self.vertices, closed=False, graph_angle=self.angle)

    def closure(self, domain):
        fault = self.fault()
        if fault.closed:
            return fault
        return close_open_fault(fault, domain)

    def jumps(self):
        """Jump data on the decoded fault (segment order of :meth:`fault`)."""
        hyp = self.canonicalize() if self.closed and signed_area(self.vertices) < 0 else self
        return _jump_data(hyp.vertices, hyp.f, hyp.g, hyp.closed)

    def has_full_support(self, tol=0.0):
        """True when every segment carries a nonzero f and a nonzero g."""
        return bool(np.all(np.linalg.norm(self.f, axis=1) > tol)
                    and np.all(np.linalg.norm(self.g, axis=1) > tol))


def _ramp(value, anchor, length):
    value = np.asarray(value, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    return Trace.function(lambda p: np.linalg.norm(np.atleast_2d(p) - anchor, axis=1)[:, None]
                          / length * value[None, :])


def _jump_data(vertices, f, g, closed):
    m = len(f)
    segs = []
    for k in range(m):
        fk = Trace.constant(f[k])
        if not closed and m >= 1:
            a, b = vertices[k], vertices[k + 1]
            L = float(np.linalg.norm(b - a))
            if m == 1:
                # single open segment: a hat vanishing at both ends
                mid = 0.5 * (a + b)
                val = np.asarray(f[k], dtype=float)
                fk = Trace.function(lambda p, a=a, b=b, L=L, val=val: np.maximum(
                    0.0, 1.0 - np.abs(np.linalg.norm(np.atleast_2d(p) - a, axis=1) - 0.5 * L) / (0.5 * L)
                )[:, None] * val[None, :])
            elif k == 0:
                fk = _ramp(f[k], a, L)
            elif k == m - 1:
                fk = _ramp(f[k], b, L)
        segs.append(SegmentJump(fk, Trace.constant(g[k])))
    return JumpData(segs)


# ---------------------------------------------------------------------------
# forward map
# ---------------------------------------------------------------------------

_DECODE_ERRORS = (GeometryError, ElasticityError, SolverError, InversionError)


def _prepare(hyp, scene, reference=None):
    closure = hyp.closure(scene.domain)
    mesh = None
    if reference is not None:
        try:
            mesh = morph_mesh(reference, closure)
        except GeometryError:
            mesh = None
    if mesh is None:
        mesh = build_mesh(scene.domain, closure, scene.h_mesh, scene.min_angle, scene.corner_grading)
    return mesh, TransmissionSolver(mesh, scene.params, scene.solver, scene.tol)


def reference_mesh(hyp, scene):
    """Mesh of ``hyp`` used as the morphing reference during a reconstruction."""
    return _prepare(hyp, scene)[0]


def forward(hyp, scene, reference=None):
    """Observation of the hypothesis; the invalid sentinel if it cannot be decoded.

    With a ``reference`` mesh of the same fault structure the mesh is morphed
    instead of rebuilt (falling back to a new mesh if morphing fails).
    """
    try:
        mesh, solver = _prepare(hyp, scene, reference)
        field = solver.solve(hyp.jumps())
        return sample_boundary(field, scene)
    except _DECODE_ERRORS as exc:
        return Observation.invalid(scene, f"{type(exc).__name__}: {exc}")


@dataclass(frozen=True)
class Basis:
    """Observation of each unit jump component: ``data = matrix @ jump_vector``."""

    matrix: np.ndarray      # (2 n_samples, 4 m)
    arc: np.ndarray
    points: np.ndarray
    valid: bool = True
    reason: str = ""


def forward_basis(hyp, scene, reference=None):
    """Unit-jump responses for the geometry of ``hyp`` (one factorisation, ``4 m`` solves)."""
    arc, pts = scene.sample_grid()
    m = hyp.n_segments
    try:
        mesh, solver = _prepare(hyp, scene, reference)
        canon = hyp.canonicalize() if hyp.closed and signed_area(hyp.vertices) < 0 else hyp
        cols = []
        for k in range(m):
            for which in range(4):
                e = np.zeros((m, 4))
                e[k, which] = 1.0
                jumps = _jump_data(canon.vertices, e[:, :2], e[:, 2:], canon.closed)
                obs = sample_boundary(solver.solve(jumps), scene)
                cols.append(obs.values.ravel())
        mat = np.array(cols).T
        if canon is not hyp:
            # reorder columns back to the caller's segment labelling
            mat = _relabel_columns(hyp, canon, mat)
        return Basis(mat, arc, pts)
    except _DECODE_ERRORS as exc:
        return Basis(np.full((2 * len(arc), 4 * m), np.nan), arc, pts, False, f"{type(exc).__name__}: {exc}")


def _relabel_columns(hyp, canon, mat):
    m = hyp.n_segments
    tag = np.arange(m, dtype=float)
    probe = replace(hyp, f=np.stack([tag, tag], axis=1), g=np.zeros((m, 2))).canonicalize()
    src = probe.f[:, 0].astype(int)       # canonical segment j came from hyp segment src[j]
    out = np.empty_like(mat)
    for j, k in enumerate(src):
        out[:, 4 * k:4 * k + 4] = mat[:, 4 * j:4 * j + 4]
    return out


@dataclass(frozen=True)
class JumpFit:
    jumps: np.ndarray          # (4 m,) regularised least-squares solution
    misfit: float              # data misfit of ``jumps`` (penalty excluded)
    singular_values: np.ndarray
    null_dim: int              # singular values below ``rcond * s_max``
    condition: float           # ratio of extreme singular values kept in the fit
    full_condition: float      # ratio including the discarded (null) directions


def fit_jumps(basis, measured, rcond=1e-8, ridge=0.0):
    """Least-squares jumps for a fixed geometry.

    Directions with singular value below ``rcond * s_max`` are dropped (the
    constant-``f`` null space of a closed fault). ``ridge > 0`` adds a
    Tikhonov penalty with parameter ``ridge * s_max``, which damps the
    near-null directions that otherwise trade jump amplitude for geometry.
    """
    if not basis.valid:
        return JumpFit(np.full(basis.matrix.shape[1], np.nan), math.inf, np.array([]), 0, math.inf, math.inf)
    if len(basis.arc) != len(measured.arc) or not np.allclose(basis.arc, measured.arc, rtol=0, atol=1e-12):
        raise InversionError("observation grids differ")
    A = basis.matrix
    d = measured.values.ravel()
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    sk = s[keep]
    alpha = ridge * s[0] if s.size else 0.0
    coef = sk * (U[:, keep].T @ d) / (sk ** 2 + alpha ** 2)
    x = Vt[keep].T @ coef
    r = A @ x - d
    cond = float(sk[0] / sk[-1]) if sk.size else math.inf
    full = float(s[0] / s[-1]) if s.size and s[-1] > 0 else math.inf
    return JumpFit(x, 0.5 * float(r @ r), s, int(np.sum(~keep)), cond, full)


def null_space_projector(hyp, basis=None, scene=None, rcond=1e-8):
    """Orthonormal basis (columns) of the numerical null space of the jump block."""
    if basis is None:
        basis = forward_basis(hyp, scene)
    _, s, Vt = np.linalg.svd(basis.matrix, full_matrices=True)
    rank = int(np.sum(s > rcond * s[0]))
    return Vt[rank:].T


# ---------------------------------------------------------------------------
# null pattern of the uniqueness theorem for closed faults
# ---------------------------------------------------------------------------

def _corner_relation(fault, k, relation):
    from .geometry import corner_frame_of
    from .probe import traction_relation_matrix, w_matrix
    delta = corner_frame_of(fault, k).opening
    return traction_relation_matrix(delta) if relation == "rotation" else w_matrix(delta)


def null_pattern(hyp, df, dg0, relation="rotation"):
    """Jump differences ``(df_k, dg_k)`` chained around a closed fault.

    ``df`` is copied to every segment; ``dg`` is propagated corner by corner
    with ``dg_plus = M dg_minus`` (``M`` the traction relation at the
    corner) starting from ``dg0`` on segment 0. ``dg0`` is first projected
    onto the vectors for which the chain closes consistently.
    """
    if not hyp.closed:
        raise InversionError("the null pattern is defined for closed faults")
    fault = hyp.fault()
    m = fault.n_segments
    # at corner k the + segment is k-1 and the - segment is k (inside on the left)
    steps = []
    for k in range(m):
        seg_p, seg_m = fault.incident_segments((k + 1) % m)
        M = _corner_relation(fault, (k + 1) % m, relation)
        # propagate from segment k to segment k+1
        if seg_p == k:
            steps.append(np.linalg.inv(M))
        else:
            steps.append(M)
    total = np.eye(2)
    for S in steps:
        total = S @ total
    U, s, Vt = np.linalg.svd(total - np.eye(2))
    fixed = Vt[s <= 1e-10 * max(1.0, s.max())].T
    dg = np.zeros((m, 2))
    dg[0] = fixed @ (fixed.T @ np.asarray(dg0, dtype=float)) if fixed.size else 0.0
    for k in range(m - 1):
        dg[k + 1] = steps[k] @ dg[k]
    dfs = np.tile(np.asarray(df, dtype=float), (m, 1))
    return dfs, dg


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InversionConfig:
    max_iter: int = 60
    step: float = 0.04          # initial poll step, fraction of the domain diameter
    min_step: float = 0.0025    # stop when the step falls below this fraction
    shrink: float = 0.5
    misfit_rtol: float = 1e-14  # stop when misfit <= rtol * 0.5 |data|^2
    rcond: float = 1e-8
    ridge: float = 1e-2         # Tikhonov parameter relative to the largest singular value
    workers: int = 1
    morph: bool = True          # morph one reference mesh instead of remeshing every trial
    admissibility_tol: float = 1e-8


@dataclass
class Evaluation:
    hypothesis: FaultHypothesis
    misfit: float
    fit: JumpFit | None
    valid: bool
    reason: str = ""


@dataclass
class ReconstructionResult:
    hypothesis: FaultHypothesis
    misfit: float
    history: list                       # misfit after every iteration (non-increasing)
    steps: list                         # poll step length per iteration
    geometry_steps: int
    evaluations: int
    stop_reason: str
    identifiability: dict = field(default_factory=dict)

    def convergence_rows(self):
        return [(i, self.history[i], self.steps[i]) for i in range(len(self.history))]


def _admissible_somewhere(hyp, tol):
    try:
        rep = admissibility_check(hyp.fault(), hyp.jumps(), tol=tol)
    except _DECODE_ERRORS:
        return False
    return any(r.admissible for r in rep) if rep else True


def evaluate(hyp, measured, scene, config=InversionConfig(), reference=None):
    """Score a geometry with its least-squares jumps (variable projection)."""
    basis = forward_basis(hyp, scene, reference)
    if not basis.valid:
        return Evaluation(hyp, math.inf, None, False, basis.reason)
    fit = fit_jumps(basis, measured, config.rcond, config.ridge)
    jv = fit.jumps.reshape(-1, 4)
    best = hyp.with_jumps(jv[:, :2], jv[:, 2:])
    if not _admissible_somewhere(best, config.admissibility_tol):
        return Evaluation(best, math.inf, fit, False, "no admissible corner")
    return Evaluation(best, fit.misfit, fit, True)


def _evaluate_packed(args):
    return evaluate(*args)


def _evaluate_many(hyps, measured, scene, config, reference):
    if config.workers > 1 and len(hyps) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            args = [(h, measured, scene, config, reference) for h in hyps]
            return list(pool.map(_evaluate_packed, args))
    return [evaluate(h, measured, scene, config, reference) for h in hyps]


def poll_points(hyp, step, diam):
    """Geometry vectors polled around ``hyp``.

    ``+-step`` along every coordinate, plus for closed faults the rigid
    moves and dilation of the whole polygon (translation by ``step``,
    rotation and scaling that move the farthest vertex by ``step``).
    """
    x = hyp.geometry_vector()
    out = []
    scale = np.ones_like(x)
    if not hyp.closed:
        scale[0] = 1.0 / diam          # the angle moves in radians
    for i in range(len(x)):
        for sgn in (1.0, -1.0):
            y = x.copy()
            y[i] += sgn * step * scale[i]
            out.append(y)
    if hyp.closed:
        v = hyp.vertices
        c = v.mean(axis=0)
        rmax = float(np.max(np.linalg.norm(v - c, axis=1)))
        for sgn in (1.0, -1.0):
            for d in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
                out.append((v + sgn * step * d).ravel())
            out.append((c + (v - c) * (1.0 + sgn * step / rmax)).ravel())
            out.append((c + (v - c) @ _rot(sgn * step / rmax).T).ravel())
    return out


def reconstruct(measured, initial, scene, config=InversionConfig(), callback=None):
    """Coordinate pattern search over the geometry with least-squares jumps.

    Every iteration polls the points of :func:`poll_points` and moves to the
    best strictly improving trial; otherwise the step shrinks.
    Invalid trials score ``inf``. The recorded misfit history is therefore
    non-increasing. Trial meshes are morphed from the mesh of the initial
    guess so the objective is continuous in the vertex coordinates.
    """
    diam = scene.domain.diameter
    try:
        start = initial.canonicalize()
    except GeometryError as exc:
        raise InversionError(f"initial hypothesis is invalid: {exc}") from exc
    reference = None
    if config.morph:
        try:
            reference = reference_mesh(start, scene)
        except _DECODE_ERRORS:
            reference = None
    current = evaluate(start, measured, scene, config, reference)
    if not current.valid:
        raise InversionError(f"initial hypothesis is invalid: {current.reason}")
    d2 = 0.5 * float(np.sum(measured.values ** 2))
    target = config.misfit_rtol * d2
    step = config.step * diam
    history, steps = [current.misfit], [step]
    n_geo, n_eval, reason = 0, 1, "max_iter"
    for _ in range(config.max_iter):
        if current.misfit <= target:
            reason = "misfit_tol"
            break
        if step < config.min_step * diam:
            reason = "step_tol"
            break
        # labels are kept fixed during the search so morphing stays smooth
        trials = [current.hypothesis.with_geometry(y)
                  for y in poll_points(current.hypothesis, step, diam)]
        results = _evaluate_many(trials, measured, scene, config, reference)
        n_eval += len(results)
        best = min(results, key=lambda e: e.misfit)
        if best.valid and best.misfit < current.misfit:
            current = best
            n_geo += 1
        else:
            step *= config.shrink
        history.append(current.misfit)
        steps.append(step)
        if callback is not None:
            callback(len(history) - 1, current, step)
    else:
        if current.misfit <= target:
            reason = "misfit_tol"
    fit = current.fit
    report = {
        "n_jump_unknowns": int(fit.jumps.size),
        "null_space_dim": fit.null_dim,
        "condition": fit.condition,
        "full_condition": fit.full_condition,
        "singular_values": [float(v) for v in fit.singular_values],
        "full_support": current.hypothesis.has_full_support(),
    }
    return ReconstructionResult(current.hypothesis.canonicalize(), current.misfit, history, steps, n_geo, n_eval,
                                reason, report)


def vertex_error(a, b):
    """Largest vertex distance after canonical ordering of both hypotheses."""
    va, vb = a.canonicalize().vertices, b.canonicalize().vertices
    if va.shape != vb.shape:
        return math.inf
    return float(np.max(np.linalg.norm(va - vb, axis=1)))


def project_out_null(hyp, null_basis):
    """Jump vector with its component in the given null directions removed."""
    x = hyp.jump_vector()
    if null_basis.size == 0:
        return x
    return x - null_basis @ (null_basis.T @ x)


# ---------------------------------------------------------------------------
# distinguishability
# ---------------------------------------------------------------------------

def require_admissible(hyp, tol=1e-8):
    rep = admissibility_check(hyp.fault(), hyp.jumps(), tol=tol)
    bad = [r.vertex for r in rep if not r.admissible]
    if bad:
        raise InadmissibleError(f"corners {bad} satisfy neither admissibility assumption", bad)
    return rep


def distinguishability_experiment(hyp_a, hyp_b, scene, check=True, tol=1e-8):
    """Relative observation distance ``|d_A - d_B| / |d_A|`` of two admissible hypotheses."""
    if check:
        require_admissible(hyp_a, tol)
        require_admissible(hyp_b, tol)
    oa, ob = forward(hyp_a, scene), forward(hyp_b, scene)
    for name, o in (("A", oa), ("B", ob)):
        if not o.valid:
            raise InversionError(f"hypothesis {name} could not be evaluated: {o.reason}")
    return data_distance(oa, ob)


def default_workers():
    """Worker count from ``DISLOCATION_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DISLOCATION_THREADS", "1")))
    except ValueError:
        return 1

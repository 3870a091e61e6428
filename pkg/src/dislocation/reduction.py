"""Edge reduction of 3D edge-corner data to a 2D in-plane problem and an
antiplane scalar problem.

``P(h)(x') = int phi(x3) h(x', x3) dx3`` for a smooth bump ``phi``. For jump
data that do not depend on ``x3`` this is multiplication by
``M0 = int phi``. The in-plane part feeds the vector corner probe, the
third component the scalar probe with Neumann data ``P(g3) / mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .probe import (DEFAULT_S_GRID, HOLDS, TOL_ANALYTIC, CornerCauchyData,
                    ProbeError, combine, extract_f_mismatch, extract_g_relation,
                    extract_scalar_f_mismatch, extract_scalar_g_values)
from .quadrature import gauss_legendre


class ReductionError(ValueError):
    """Profile support or data consistency problem."""


def mollifier(t):
    """``exp(-1 / (1 - t^2))`` on (-1, 1), zero elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass(frozen=True)
class BumpProfile:
    """Smooth nonnegative bump on ``(center - half_width, center + half_width)``.

    Nodes and weights form a composite Gauss rule refined until the total
    mass ``M0`` is stable to ``rtol`` between two levels.
    """

    center: float = 0.0
    half_width: float = 1.0
    order: int = 16
    rtol: float = 1e-14
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    m0: float = field(init=False)
    panels: int = field(init=False)

    def __post_init__(self):
        if not self.half_width > 0:
            raise ReductionError("half_width must be positive")
        prev = None
        panels = 4
        while True:
            x, w = self._rule(panels)
            m0 = float(np.dot(w, self(x)))
            if prev is not None and abs(m0 - prev) <= self.rtol * abs(m0):
                break
            if panels > 4096:
                raise ReductionError("bump moment did not converge")
            prev = m0
            panels *= 2
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w * self(x))
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "panels", panels)

    def _rule(self, panels):
        x, w = gauss_legendre(self.order)
        a, L = self.center - self.half_width, 2.0 * self.half_width
        edges = a + L * np.arange(panels + 1) / panels
        xs = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * x[None, :]).ravel()
        ws = ((edges[1:] - edges[:-1])[:, None] * w[None, :]).ravel()
        return xs, ws

    def __call__(self, x3):
        return mollifier((np.asarray(x3, dtype=float) - self.center) / self.half_width)

    def check_support(self, slab_half_width):
        lo, hi = self.center - self.half_width, self.center + self.half_width
        if not (-slab_half_width < lo and hi < slab_half_width):
            raise ReductionError("profile support must lie strictly inside the slab (-M, M)")


def reduce(profile, h3d, slab_half_width=math.inf):
    """``P(h)``: ``h3d`` maps an array of x3 values to an array with leading axis x3."""
    profile.check_support(slab_half_width)
    vals = np.asarray(h3d(profile.nodes))
    return np.tensordot(profile.weights, vals, axes=(0, 0))


@dataclass(frozen=True)
class EdgeData3D:
    """x3-independent 3-component jump data on the two edges of a 2D corner."""

    theta_m: float
    theta_M: float
    h: float
    r_plus: np.ndarray
    f_plus: np.ndarray     # (n, 3)
    g_plus: np.ndarray
    r_minus: np.ndarray
    f_minus: np.ndarray
    g_minus: np.ndarray
    zero_gradient: bool = False
    holder: tuple = (0.5, 0.5, 0.5, 0.5)

    def __post_init__(self):
        for k in ("f_plus", "g_plus", "f_minus", "g_minus"):
            a = np.asarray(getattr(self, k), dtype=float)
            if a.ndim != 2 or a.shape[1] != 3:
                raise ReductionError(f"{k} must have shape (n, 3)")
            object.__setattr__(self, k, a)
        if not all(0.0 < a <= 1.0 for a in self.holder):
            raise ReductionError("Hölder exponents must lie in (0, 1]")

    @classmethod
    def constant(cls, theta_m, theta_M, h, f_plus, g_plus, f_minus, g_minus, n=64, **kw):
        from .probe import chebyshev_radii
        r = chebyshev_radii(h, n)
        tile = lambda v: np.tile(np.asarray(v, dtype=float), (n, 1))
        return cls(theta_m, theta_M, h, r, tile(f_plus), tile(g_plus), r, tile(f_minus), tile(g_minus), **kw)

    def in_plane(self):
        return {k: getattr(self, k)[:, :2] for k in ("f_plus", "g_plus", "f_minus", "g_minus")}

    def antiplane(self):
        return {k: getattr(self, k)[:, 2:] for k in ("f_plus", "g_plus", "f_minus", "g_minus")}


def split_systems(edge, profile, mu=1.0, lam=None, coefficient="mu"):
    """Reduced 2D problems: (in-plane vector data, antiplane scalar data).

    Both data sets are scaled by ``M0``; the antiplane traction jump is divided
    by ``mu`` (``coefficient="lambda"`` divides by ``lam`` instead).
    """
    m0 = profile.m0
    div = mu if coefficient == "mu" else lam
    if coefficient not in ("mu", "lambda") or div is None or div == 0:
        raise ReductionError("antiplane coefficient must be 'mu' or 'lambda' with a nonzero value")
    ip = edge.in_plane()
    ap = edge.antiplane()
    common = dict(zero_gradient=edge.zero_gradient, holder=edge.holder)
    vec = CornerCauchyData(edge.theta_m, edge.theta_M, edge.h,
                           edge.r_plus, m0 * ip["f_plus"], m0 * ip["g_plus"],
                           edge.r_minus, m0 * ip["f_minus"], m0 * ip["g_minus"], **common)
    sca = CornerCauchyData(edge.theta_m, edge.theta_M, edge.h,
                           edge.r_plus, m0 * ap["f_plus"], m0 * ap["g_plus"] / div,
                           edge.r_minus, m0 * ap["f_minus"], m0 * ap["g_minus"] / div,
                           components=1, **common)
    return vec, sca


@dataclass(frozen=True)
class EdgeProbeReport:
    in_plane_f: object
    in_plane_g: object | None
    antiplane_f: object
    antiplane_g: object | None
    m0: float

    @property
    def verdict(self):
        reps = [r for r in (self.in_plane_f, self.in_plane_g, self.antiplane_f, self.antiplane_g) if r is not None]
        return combine(r.verdict for r in reps)

    def lines(self):
        out = [f"m0: {self.m0:.15e}", f"verdict: {self.verdict}"]
        for name in ("in_plane_f", "in_plane_g", "antiplane_f", "antiplane_g"):
            rep = getattr(self, name)
            if rep is None:
                out.append(f"{name}: skipped")
            else:
                out += [f"{name}.{line}" for line in rep.lines()]
        return out


def edge_probe_3d(edge, profile, s_grid=DEFAULT_S_GRID, mu=1.0, lam=0.0, tol=TOL_ANALYTIC,
                  coefficient="mu"):
    """Displacement and traction stages on both reduced problems.

    Traction stages run only after their displacement stage holds and when
    zero tangential derivatives are declared; skipped stages are ``None``.
    """
    vec, sca = split_systems(edge, profile, mu, lam, coefficient)
    f_vec = extract_f_mismatch(vec, s_grid, mu, lam, tol)
    g_vec = None
    if f_vec.verdict == HOLDS and edge.zero_gradient:
        g_vec = extract_g_relation(vec, s_grid, mu, lam, tol, f_report=f_vec)
    f_sca = extract_scalar_f_mismatch(sca, s_grid, tol)
    g_sca = None
    if f_sca.verdict == HOLDS and edge.zero_gradient:
        g_sca = extract_scalar_g_values(sca, s_grid, tol, f_report=f_sca)
    return EdgeProbeReport(f_vec, g_vec, f_sca, g_sca, profile.m0)


# ---------------------------------------------------------------------------
# text format: one sample per line, "side arc_length f1 f2 f3 g1 g2 g3"
# ---------------------------------------------------------------------------

def write_edge_data(edge, path):
    with open(path, "w") as fh:
        fh.write(f"# theta_m {edge.theta_m:.17g}\n# theta_M {edge.theta_M:.17g}\n# h {edge.h:.17g}\n")
        fh.write(f"# zero_gradient {int(edge.zero_gradient)}\n")
        for side, r, f, g in (("+", edge.r_plus, edge.f_plus, edge.g_plus),
                              ("-", edge.r_minus, edge.f_minus, edge.g_minus)):
            for ri, fi, gi in zip(r, f, g):
                fh.write(side + " " + " ".join(f"{v:.17g}" for v in (ri, *fi, *gi)) + "\n")


def read_edge_data(path, theta_m=None, theta_M=None, h=None, zero_gradient=None):
    """Parse an edge data file; header comments supply defaults for the frame."""
    meta = {}
    rows = {"+": [], "-": []}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2:
                    meta[parts[0]] = float(parts[1])
                continue
            parts = line.split()
            if len(parts) != 8 or parts[0] not in rows:
                raise ReductionError(f"line {lineno}: expected 'side arc_length f1 f2 f3 g1 g2 g3'")
            rows[parts[0]].append([float(v) for v in parts[1:]])
    arr = {k: np.array(v) for k, v in rows.items()}
    for k in arr:
        if len(arr[k]) == 0:
            raise ReductionError(f"no samples for side {k}")
        arr[k] = arr[k][np.argsort(arr[k][:, 0])]
    pick = lambda given, key: given if given is not None else meta.get(key)
    tm, tM, hh = pick(theta_m, "theta_m"), pick(theta_M, "theta_M"), pick(h, "h")
    if tm is None or tM is None or hh is None:
        raise ReductionError("corner frame (theta_m, theta_M, h) missing")
    zg = bool(zero_gradient) if zero_gradient is not None else bool(meta.get("zero_gradient", 0))
    p, m = arr["+"], arr["-"]
    return EdgeData3D(tm, tM, hh, p[:, 0], p[:, 1:4], p[:, 4:7], m[:, 0], m[:, 1:4], m[:, 4:7],
                      zero_gradient=zg)

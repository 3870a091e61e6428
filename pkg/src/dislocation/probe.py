"""Corner probes built on the reciprocity identity with CGO test fields.

For Cauchy data ``(f, g)`` of a Lamé field ``W`` on the two edges of a
corner sector and ``W`` itself on the closing arc, reciprocity with the CGO
field ``u0`` gives

    sum_edges int (g . u0 - T u0 . f) + int_arc (T W . u0 - T u0 . W) = 0

(bilinear products, outward normals). As ``s`` grows the edge terms expose
the corner values of the data:

* ``D(s) / 2 -> -mu [i, -1] . (f+(0) - f-(0))`` where
  ``D(s) = sum_edges int (T u0 . f - g . u0)``;
* if ``f`` is continuous with zero tangential derivatives at the vertex,
  ``s^2 sum_edges int g . u0 -> 2 (z+ e^{-i theta_M} + z- e^{-i theta_m})``
  with ``z = g_1 + i g_2``. The normalised constant is
  ``c = z+ + e^{i Delta} z-`` and ``|c| = |g+ - Q g-|`` with ``Q`` the
  rotation by ``Delta + pi`` (see :func:`traction_relation_matrix`).

All probes work in a canonical frame whose sector bisector is the positive
x-axis, which keeps the CGO branch cut away from the sector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cgo import (cgo_eval, cgo_scalar_eval, cgo_scalar_grad, cgo_traction,
                  edge_normal, mu_hat)
from .quadrature import gauss_legendre

HOLDS, VIOLATED, INCONCLUSIVE = "holds", "violated", "inconclusive"

DEFAULT_S_GRID = tuple(np.geomspace(5.0, 80.0, 12))
DEFAULT_GAMMAS = tuple(np.round(np.arange(0.25, 6.0001, 0.05), 10))
TOL_ANALYTIC = 1e-4
TOL_FEM = 1e-2
MIN_EDGE_SAMPLES = 8


class ProbeError(ValueError):
    """Invalid probe input or violated precondition chain."""


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

def _check_opening(delta):
    if not 0.0 < delta < math.pi:
        raise ProbeError("opening angle must lie in (0, pi)")


def w_matrix(delta):
    """Reflection ``[[-cos D, -sin D], [-sin D, cos D]]`` (orthogonal, det -1, involutive)."""
    _check_opening(delta)
    c, s = math.cos(delta), math.sin(delta)
    W = np.array([[-c, -s], [-s, c]])
    if not np.allclose(W.T @ W, np.eye(2), atol=1e-14):
        raise ProbeError("W is not orthogonal")
    return W


def traction_relation_matrix(delta):
    """Rotation by ``delta + pi``: the map ``g- -> g+`` forced by the corner identity.

    It coincides with :func:`w_matrix` when ``g-`` is an eigenvector of the
    product of the two, e.g. ``g- = (1, 0)`` at ``delta = pi / 2``.
    """
    _check_opening(delta)
    c, s = math.cos(delta), math.sin(delta)
    return -np.array([[c, -s], [s, c]])


def rotation(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# Cauchy data
# ---------------------------------------------------------------------------

def chebyshev_radii(h, n):
    """``n`` radii in [0, h] clustered at the vertex."""
    k = np.arange(n)
    return h * (1.0 - np.cos(0.5 * math.pi * k / (n - 1)))


def arc_quadrature(theta_m, theta_M, panels=16, order=8):
    x, w = gauss_legendre(order)
    edges = np.linspace(theta_m, theta_M, panels + 1)
    th = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * x[None, :]).ravel()
    wt = ((edges[1:] - edges[:-1])[:, None] * w[None, :]).ravel()
    return th, wt


@dataclass(frozen=True)
class CornerCauchyData:
    """Jump data on the two edges of a corner sector and the field on its arc.

    Edge arrays are sampled at radii ``r_*`` (increasing from 0); vectors are
    in world coordinates and may be complex. The arc part is optional: its
    contribution decays exponentially in ``s`` and only the full reciprocity
    residual needs it. ``zero_gradient`` declares vanishing tangential
    derivatives of ``f`` at the vertex; ``holder`` holds the declared
    exponents ``(alpha+, alpha-, beta+, beta-)``.
    """

    theta_m: float
    theta_M: float
    h: float
    r_plus: np.ndarray
    f_plus: np.ndarray
    g_plus: np.ndarray
    r_minus: np.ndarray
    f_minus: np.ndarray
    g_minus: np.ndarray
    arc_theta: np.ndarray | None = None
    arc_weights: np.ndarray | None = None
    arc_value: np.ndarray | None = None
    arc_traction: np.ndarray | None = None
    zero_gradient: bool = False
    holder: tuple = (1.0, 1.0, 1.0, 1.0)
    x_c: tuple = (0.0, 0.0)
    components: int = 2

    def __post_init__(self):
        if not 0.0 < self.theta_M - self.theta_m < math.pi:
            raise ProbeError("sector opening must lie in (0, pi)")
        for r in (self.r_plus, self.r_minus):
            r = np.asarray(r)
            if len(r) < MIN_EDGE_SAMPLES:
                raise ProbeError(f"at least {MIN_EDGE_SAMPLES} samples per edge are required")
            if r[0] != 0.0 or np.any(np.diff(r) <= 0):
                raise ProbeError("edge samples must start at the vertex and increase")

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_traces(cls, theta_m, theta_M, h, f_plus, g_plus, f_minus, g_minus, n=64, **kw):
        """Sample callables of the radius (returning (n, 2) arrays) on both edges."""
        r = chebyshev_radii(h, n)
        ev = lambda fn: np.asarray(fn(r)).reshape(n, -1)
        return cls(theta_m, theta_M, h, r, ev(f_plus), ev(g_plus), r, ev(f_minus), ev(g_minus), **kw)

    @classmethod
    def constant(cls, theta_m, theta_M, h, f_plus, g_plus, f_minus, g_minus, n=64, **kw):
        const = lambda v: (lambda r: np.tile(np.asarray(v, dtype=float), (len(r), 1)))
        return cls.from_traces(theta_m, theta_M, h, const(f_plus), const(g_plus),
                               const(f_minus), const(g_minus), n=n, **kw)

    @classmethod
    def from_fields(cls, theta_m, theta_M, h, v, w, params, x_c=(0.0, 0.0), n=64, arc_panels=16, **kw):
        """Data of ``W = v - w`` for two analytic fields with ``value``/``gradient``."""
        x_c = np.asarray(x_c, dtype=float)
        r = chebyshev_radii(h, n)

        def edge(theta, side):
            d = np.array([math.cos(theta), math.sin(theta)])
            pts = x_c + r[:, None] * d
            nu = edge_normal(theta, side)
            f = v.value(pts) - w.value(pts)
            g = _traction(v.gradient(pts), params, nu) - _traction(w.gradient(pts), params, nu)
            return f, g

        fp, gp = edge(theta_M, "+")
        fm, gm = edge(theta_m, "-")
        th, wt = arc_quadrature(theta_m, theta_M, arc_panels)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        pts = x_c + h * dirs
        av = v.value(pts) - w.value(pts)
        at = _traction(v.gradient(pts), params, dirs) - _traction(w.gradient(pts), params, dirs)
        return cls(theta_m, theta_M, h, r, fp, gp, r, fm, gm, th, wt * h, av, at,
                   x_c=tuple(x_c), **kw)

    # -- transformations ----------------------------------------------------

    @property
    def opening(self):
        return self.theta_M - self.theta_m

    @property
    def bisector(self):
        return 0.5 * (self.theta_m + self.theta_M)

    def _map_vectors(self, M):
        if self.components != 2:
            return {}
        out = {k: np.asarray(getattr(self, k)) @ M.T for k in ("f_plus", "g_plus", "f_minus", "g_minus")}
        if self.arc_value is not None:
            out["arc_value"] = np.asarray(self.arc_value) @ M.T
            out["arc_traction"] = np.asarray(self.arc_traction) @ M.T
        return out

    def rotated(self, phi):
        """Rotate geometry and vectors by ``phi`` about the vertex."""
        kw = self._map_vectors(rotation(phi))
        if self.arc_theta is not None:
            kw["arc_theta"] = np.asarray(self.arc_theta) + phi
        return replace(self, theta_m=self.theta_m + phi, theta_M=self.theta_M + phi, **kw)

    def canonical(self):
        return self.rotated(-self.bisector)

    def reflected(self):
        """Mirror about the sector bisector; the two edges swap roles."""
        c = self.canonical()
        F = np.diag([1.0, -1.0])
        kw = c._map_vectors(F)
        get = lambda k: kw.get(k, getattr(c, k))
        out = replace(c, theta_m=-c.theta_M, theta_M=-c.theta_m,
                      r_plus=c.r_minus, f_plus=get("f_minus"), g_plus=get("g_minus"),
                      r_minus=c.r_plus, f_minus=get("f_plus"), g_minus=get("g_plus"),
                      holder=(c.holder[1], c.holder[0], c.holder[3], c.holder[2]))
        if c.arc_theta is not None:
            order = np.argsort(-np.asarray(c.arc_theta))
            out = replace(out, arc_theta=-np.asarray(c.arc_theta)[order],
                          arc_weights=np.asarray(c.arc_weights)[order],
                          arc_value=np.asarray(get("arc_value"))[order],
                          arc_traction=np.asarray(get("arc_traction"))[order])
        return out

    def scaled(self, c):
        kw = {k: c * np.asarray(getattr(self, k)) for k in ("f_plus", "g_plus", "f_minus", "g_minus")}
        if self.arc_value is not None:
            kw["arc_value"] = c * np.asarray(self.arc_value)
            kw["arc_traction"] = c * np.asarray(self.arc_traction)
        return replace(self, **kw)

    def channel(self, part):
        """Real (``part="re"``) or imaginary part of all data."""
        fn = np.real if part == "re" else np.imag
        kw = {k: fn(np.asarray(getattr(self, k))) for k in ("f_plus", "g_plus", "f_minus", "g_minus")}
        if self.arc_value is not None:
            kw["arc_value"] = fn(np.asarray(self.arc_value))
            kw["arc_traction"] = fn(np.asarray(self.arc_traction))
        return replace(self, **kw)

    def has_imaginary_part(self):
        arrays = [self.f_plus, self.g_plus, self.f_minus, self.g_minus]
        if self.arc_value is not None:
            arrays += [self.arc_value, self.arc_traction]
        return any(np.any(np.imag(np.asarray(a)) != 0) for a in arrays)

    def f_sup(self):
        return float(max(np.max(np.abs(self.f_plus)), np.max(np.abs(self.f_minus))))

    def g_sup(self):
        return float(max(np.max(np.abs(self.g_plus)), np.max(np.abs(self.g_minus))))


def _traction(grad, params, nu):
    g = np.asarray(grad)
    sig = params.lam * np.trace(g, axis1=-2, axis2=-1)[:, None, None] * np.eye(2) \
        + params.mu * (g + np.swapaxes(g, -1, -2))
    return np.einsum("nij,nj->ni", sig, np.broadcast_to(nu, (len(g), 2)))


# ---------------------------------------------------------------------------
# edge quadrature
# ---------------------------------------------------------------------------

def _edge_nodes(r, order=12):
    """Panel Gauss nodes in ``t = sqrt(r)`` between consecutive samples.

    Returns radii, weights for ``dr`` and the linear-interpolation stencil.
    """
    x, w = gauss_legendre(order)
    t = np.sqrt(r)
    t0, t1 = t[:-1, None], t[1:, None]
    tq = t0 + (t1 - t0) * x[None, :]
    rq = tq * tq
    wq = (t1 - t0) * w[None, :] * 2.0 * tq
    lo = np.repeat(np.arange(len(r) - 1), order)
    frac = ((rq - r[:-1, None]) / (r[1:] - r[:-1])[:, None]).ravel()
    return rq.ravel(), wq.ravel(), lo, frac


def _interp(values, lo, frac):
    v = np.asarray(values)
    return v[lo] + frac[:, None] * (v[lo + 1] - v[lo]) if v.ndim == 2 else v[lo] + frac * (v[lo + 1] - v[lo])


@dataclass(frozen=True)
class EdgeTerms:
    f_term: complex     # sum_edges int T u0 . f
    g_term: complex     # sum_edges int g . u0
    arc_term: complex   # int_arc (T W . u0 - T u0 . W), 0 without arc data

    @property
    def residual(self):
        return self.g_term - self.f_term + self.arc_term


def vector_terms(data, s, mu, lam=0.0):
    """Edge and arc integrals for one real channel in the canonical frame."""
    c = data.canonical()
    f_term = 0.0
    g_term = 0.0
    for side, theta, r, f, g in (("+", c.theta_M, c.r_plus, c.f_plus, c.g_plus),
                                 ("-", c.theta_m, c.r_minus, c.f_minus, c.g_minus)):
        rq, wq, lo, frac = _edge_nodes(np.asarray(r))
        d = np.array([math.cos(theta), math.sin(theta)])
        pts = rq[:, None] * d
        nu = edge_normal(theta, side)
        u0 = cgo_eval(pts, s)
        tu0 = cgo_traction(pts, s, mu, nu, lam)
        f_term += np.dot(wq, np.sum(tu0 * _interp(f, lo, frac), axis=1))
        g_term += np.dot(wq, np.sum(_interp(g, lo, frac) * u0, axis=1))
    arc = 0.0
    if c.arc_theta is not None:
        th = np.asarray(c.arc_theta)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        pts = c.h * dirs
        u0 = cgo_eval(pts, s)
        tu0 = cgo_traction(pts, s, mu, dirs, lam)
        integrand = np.sum(np.asarray(c.arc_traction) * u0, axis=1) - np.sum(tu0 * np.asarray(c.arc_value), axis=1)
        arc = np.dot(np.asarray(c.arc_weights), integrand)
    return EdgeTerms(complex(f_term), complex(g_term), complex(arc))


@dataclass(frozen=True)
class IdentityValue:
    """Reciprocity terms per channel (index 0 real data, 1 imaginary data)."""

    edges: tuple
    arc: tuple

    @property
    def residual(self):
        return tuple(e + a for e, a in zip(self.edges, self.arc))

    @property
    def max_residual(self):
        return max(abs(r) for r in self.residual)


def identity_lhs(data, s, mu, lam=0.0):
    """Both sides of the corner reciprocity identity; their sum is the residual."""
    edges, arcs = [], []
    for part in ("re", "im"):
        t = vector_terms(data.channel(part), s, mu, lam)
        edges.append(t.g_term - t.f_term)
        arcs.append(t.arc_term)
    return IdentityValue(tuple(edges), tuple(arcs))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Fit:
    constant: complex
    amplitude: complex
    gamma: float
    rms: float
    remainder_slope: float
    remainder_max: float
    decaying: bool


def fit_limit(s, y, exp_cols, gammas=DEFAULT_GAMMAS, floor=1e-12):
    """Least-squares fit of ``a + b s^-gamma + sum_k c_k e_k(s)`` with a scan over gamma.

    ``exp_cols`` are the known exponentially decaying basis functions.
    The remainder ``y - a - sum c_k e_k`` must decay (negative log-log slope)
    unless it sits below ``floor`` relative to ``max|y|``.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=complex)
    E = np.array(exp_cols, dtype=complex).reshape(-1, len(s)).T if len(exp_cols) else np.zeros((len(s), 0))
    best = None
    for gm in gammas:
        A = np.column_stack([np.ones(len(s)), s ** -gm, E])
        scale = np.linalg.norm(A, axis=0)
        scale[scale == 0] = 1.0
        coef, *_ = np.linalg.lstsq(A / scale, y, rcond=None)
        coef = coef / scale
        res = np.linalg.norm(A @ coef - y)
        if best is None or res < best[0] - 1e-15 * np.linalg.norm(y):
            best = (res, gm, coef)
    res, gm, coef = best
    rem = y - coef[0] - (E @ coef[2:] if E.shape[1] else 0.0)
    ymax = max(float(np.max(np.abs(y))), 1e-300)
    absr = np.abs(rem)
    if np.max(absr) <= floor * ymax:
        slope, decaying = float("-inf"), True
    else:
        keep = absr > floor * ymax
        slope = float(np.polyfit(np.log(s[keep]), np.log(absr[keep]), 1)[0]) if keep.sum() >= 2 else float("-inf")
        decaying = slope < 0
    return Fit(complex(coef[0]), complex(coef[1]), float(gm), float(res / math.sqrt(len(s))),
               slope, float(np.max(absr)), decaying)


def _check_grid(s_grid):
    s = np.asarray(s_grid, dtype=float)
    if len(s) < 5 or np.any(np.diff(s) <= 0) or s[0] <= 0:
        raise ProbeError("s-grid must be increasing, positive and have at least 5 values")
    return s


def _exp_columns(c, s, powers, scalar=False):
    cols = []
    for theta in (c.theta_M, c.theta_m):
        if scalar:
            e = np.exp(-np.sqrt(s * c.h) * mu_hat(theta))
        else:
            e = np.exp(-s * math.sqrt(c.h) * mu_hat(theta))
        cols += [e * s ** k for k in powers]
    return cols


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelResult:
    constant: complex
    fit: Fit
    verdict: str
    margin: float


@dataclass(frozen=True)
class ProbeReport:
    stage: str
    s_grid: tuple
    values: dict                  # channel -> per-s complex values of the probed functional
    channels: dict                # channel -> ChannelResult
    verdict: str
    tolerance: float
    estimate: np.ndarray | None = None    # extracted jump (canonical frame rotated back)
    residual: float | None = None         # relation residual for the traction stage
    expected_slope: float | None = None
    extras: dict = field(default_factory=dict)

    def lines(self):
        out = [f"stage: {self.stage}", f"verdict: {self.verdict}", f"tolerance: {self.tolerance:.3e}"]
        for ch, res in self.channels.items():
            out += [f"{ch}.constant: {res.constant.real:.12e}{res.constant.imag:+.12e}j",
                    f"{ch}.gamma: {res.fit.gamma:.4f}",
                    f"{ch}.remainder_slope: {res.fit.remainder_slope:.4f}",
                    f"{ch}.verdict: {res.verdict}",
                    f"{ch}.margin: {res.margin:.6e}"]
        if self.estimate is not None:
            out.append("estimate: " + " ".join(f"{v:.12e}" for v in np.ravel(self.estimate)))
        if self.residual is not None:
            out.append(f"residual: {self.residual:.12e}")
        if self.expected_slope is not None:
            out.append(f"expected_slope: {self.expected_slope:.4f}")
        for k, v in self.extras.items():
            out.append(f"{k}: {v}")
        return out


def combine(verdicts):
    """Conjunctive combination of three-valued verdicts."""
    verdicts = list(verdicts)
    if VIOLATED in verdicts:
        return VIOLATED
    if INCONCLUSIVE in verdicts:
        return INCONCLUSIVE
    return HOLDS


def _judge(value, fit, threshold):
    if not fit.decaying:
        return INCONCLUSIVE, threshold - abs(value)
    return (HOLDS if abs(value) <= threshold else VIOLATED), threshold - abs(value)


def _expected_slope(holder, stage):
    a_p, a_m, b_p, b_m = holder
    rate = min(2 * a_p + 2, 2 * a_m + 2, 2 * b_p + 2, 2 * b_m + 2, 2.0)
    return -rate if stage == "f" else -min(2 * a_p, 2 * a_m, 2 * b_p, 2 * b_m, 2.0)


def extract_f_mismatch(data, s_grid=DEFAULT_S_GRID, mu=1.0, lam=0.0, tol=TOL_ANALYTIC):
    """Fit the large-``s`` limit of ``D(s) / 2``; equals ``-mu [i, -1] . (f+(0) - f-(0))``."""
    s = _check_grid(s_grid)
    c0 = data.canonical()
    threshold = tol * (1.0 + data.f_sup())
    values, channels = {}, {}
    est = np.zeros(2)
    for part in ("re", "im"):
        ch = c0.channel(part)
        y = np.array([0.5 * _d_value(ch, si, mu, lam) for si in s])
        fit = fit_limit(s, y, _exp_columns(c0, s, (0, -1, -2)))
        verdict, margin = _judge(fit.constant, fit, threshold)
        values[part] = tuple(y)
        channels[part] = ChannelResult(fit.constant, fit, verdict, margin)
        a = fit.constant
        df = np.array([-a.imag / mu, a.real / mu])
        est = est + (df if part == "re" else 1j * df)
    if not data.has_imaginary_part():
        channels.pop("im")
        values.pop("im")
    estimate = rotation(data.bisector) @ est
    return ProbeReport("f", tuple(s), values, channels, combine(r.verdict for r in channels.values()),
                       threshold, estimate=estimate, expected_slope=_expected_slope(data.holder, "f"))


def _d_value(ch, s, mu, lam):
    t = vector_terms(replace(ch, arc_theta=None), s, mu, lam)
    return t.f_term - t.g_term


def extract_g_relation(data, s_grid=DEFAULT_S_GRID, mu=1.0, lam=0.0, tol=TOL_ANALYTIC,
                       f_report=None, relation_tol=None):
    """Fit ``s^2`` times the edge functional; returns the relation residual ``|g+ - Q g-|``.

    Requires the displacement stage to hold and ``data.zero_gradient``.
    """
    s = _check_grid(s_grid)
    if f_report is None:
        f_report = extract_f_mismatch(data, s, mu, lam, tol)
    if f_report.verdict != HOLDS:
        raise ProbeError("traction stage needs a displacement stage that holds")
    if not data.zero_gradient:
        raise ProbeError("traction stage needs declared zero tangential derivatives of f at the vertex")
    c0 = data.canonical()
    threshold = tol * (1.0 + data.g_sup()) if relation_tol is None else relation_tol
    rot = np.exp(1j * c0.theta_M) / 2.0
    values, channels = {}, {}
    res_total = 0.0
    for part in ("re", "im"):
        ch = c0.channel(part)
        y = np.array([-(si ** 2) * _d_value(ch, si, mu, lam) * rot for si in s])
        fit = fit_limit(s, y, _exp_columns(c0, s, (2, 1, 0)))
        verdict, margin = _judge(fit.constant, fit, threshold)
        values[part] = tuple(y)
        channels[part] = ChannelResult(fit.constant, fit, verdict, margin)
        res_total += abs(fit.constant) ** 2
    if not data.has_imaginary_part():
        channels.pop("im")
        values.pop("im")
        res_total = abs(channels["re"].constant) ** 2
    return ProbeReport("g", tuple(s), values, channels, combine(r.verdict for r in channels.values()),
                       threshold, residual=math.sqrt(res_total),
                       expected_slope=_expected_slope(data.holder, "g"))


# ---------------------------------------------------------------------------
# scalar (antiplane) probes
# ---------------------------------------------------------------------------

def scalar_terms(data, s):
    """Edge and arc integrals with the scalar CGO for scalar data.

    ``data.g_*`` must hold normal-derivative jumps (traction divided by mu).
    """
    c = data.canonical()
    f_term = 0.0
    g_term = 0.0
    for side, theta, r, f, g in (("+", c.theta_M, c.r_plus, c.f_plus, c.g_plus),
                                 ("-", c.theta_m, c.r_minus, c.f_minus, c.g_minus)):
        rq, wq, lo, frac = _edge_nodes(np.asarray(r))
        d = np.array([math.cos(theta), math.sin(theta)])
        pts = rq[:, None] * d
        nu = edge_normal(theta, side)
        u0 = cgo_scalar_eval(pts, s)
        du0 = cgo_scalar_grad(pts, s) @ nu
        f_term += np.dot(wq, du0 * _interp(np.ravel(f), lo, frac))
        g_term += np.dot(wq, _interp(np.ravel(g), lo, frac) * u0)
    arc = 0.0
    if c.arc_theta is not None:
        th = np.asarray(c.arc_theta)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        pts = c.h * dirs
        u0 = cgo_scalar_eval(pts, s)
        du0 = np.sum(cgo_scalar_grad(pts, s) * dirs, axis=1)
        integrand = np.ravel(c.arc_traction) * u0 - du0 * np.ravel(c.arc_value)
        arc = np.dot(np.asarray(c.arc_weights), integrand)
    return EdgeTerms(complex(f_term), complex(g_term), complex(arc))


def scalar_identity_residual(data, s):
    t = scalar_terms(data, s)
    return t.residual


def extract_scalar_f_mismatch(data, s_grid=DEFAULT_S_GRID, tol=TOL_ANALYTIC):
    """Limit of ``sum_edges int (d_nu u0 f - g u0)``; equals ``-i (f+(0) - f-(0))``."""
    s = _check_grid(s_grid)
    c0 = data.canonical()
    threshold = tol * (1.0 + data.f_sup())
    values, channels = {}, {}
    est = 0.0
    for part in ("re", "im"):
        ch = replace(c0.channel(part), arc_theta=None)
        y = []
        for si in s:
            t = scalar_terms(ch, si)
            y.append(t.f_term - t.g_term)
        y = np.array(y)
        fit = fit_limit(s, y, _exp_columns(c0, s, (0, -0.5, -1), scalar=True))
        verdict, margin = _judge(fit.constant, fit, threshold)
        values[part] = tuple(y)
        channels[part] = ChannelResult(fit.constant, fit, verdict, margin)
        df = -fit.constant.imag
        est = est + (df if part == "re" else 1j * df)
    if not data.has_imaginary_part():
        channels.pop("im")
        values.pop("im")
    return ProbeReport("f3", tuple(s), values, channels, combine(r.verdict for r in channels.values()),
                       threshold, estimate=np.array([est]))


def extract_scalar_g_values(data, s_grid=DEFAULT_S_GRID, tol=TOL_ANALYTIC, f_report=None):
    """Recover both corner values of the normal-derivative jump from ``s`` times the functional.

    With continuous, flat ``f`` the limit is ``c = G+ + e^{i Delta} G-`` after
    normalisation, so for real data ``G- = Im c / sin Delta`` and
    ``G+ = Re c - cos Delta G-``. The verdict "holds" certifies ``G+ = G- = 0``.
    """
    s = _check_grid(s_grid)
    if f_report is None:
        f_report = extract_scalar_f_mismatch(data, s, tol)
    if f_report.verdict != HOLDS:
        raise ProbeError("traction stage needs a displacement stage that holds")
    if not data.zero_gradient:
        raise ProbeError("traction stage needs declared zero tangential derivatives of f at the vertex")
    c0 = data.canonical()
    D = c0.opening
    threshold = tol * (1.0 + data.g_sup())
    rot = np.exp(1j * c0.theta_M) / 2.0
    values, channels = {}, {}
    G = np.zeros(2, dtype=complex)
    for part in ("re", "im"):
        ch = replace(c0.channel(part), arc_theta=None)
        y = []
        for si in s:
            t = scalar_terms(ch, si)
            y.append(-si * (t.f_term - t.g_term) * rot)
        y = np.array(y)
        fit = fit_limit(s, y, _exp_columns(c0, s, (1, 0.5, 0), scalar=True))
        c = fit.constant
        g_minus = c.imag / math.sin(D)
        g_plus = c.real - math.cos(D) * g_minus
        vals = np.array([g_plus, g_minus])
        verdict, margin = _judge(np.max(np.abs(vals)), fit, threshold)
        values[part] = tuple(y)
        channels[part] = ChannelResult(c, fit, verdict, margin)
        G = G + (vals if part == "re" else 1j * vals)
    if not data.has_imaginary_part():
        channels.pop("im")
        values.pop("im")
        G = G.real
    return ProbeReport("g3", tuple(s), values, channels, combine(r.verdict for r in channels.values()),
                       threshold, estimate=G, residual=float(np.linalg.norm(G)))


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CornerAdmissibility:
    vertex: int
    f_plus: np.ndarray
    f_minus: np.ndarray
    assumption_1: bool     # f+ != f- at the vertex
    assumption_2: bool     # f continuous and flat, g+ off the traction relation
    admissible: bool


def admissibility_check(fault, jumps, tol=1e-10, relation="rotation"):
    """Per-corner admissibility of jump data.

    ``relation`` selects the map used in the second assumption: "rotation"
    (:func:`traction_relation_matrix`, the one the corner probe detects) or
    "reflection" (:func:`w_matrix`).
    """
    from .geometry import corner_frame_of

    report = []
    for k in fault.corner_indices:
        frame = corner_frame_of(fault, k)
        seg_p, seg_m = fault.incident_segments(k)
        x_c = fault.vertices[k]

        def at_vertex(seg, which):
            a, b = fault.segment(seg)
            t = float(np.linalg.norm(x_c - a))
            trace = getattr(jumps.segments[seg], which)
            return trace.on_segment(a, b, [t])[0]

        def derivative(seg):
            a, b = fault.segment(seg)
            at_start = np.allclose(x_c, a)
            return jumps.segments[seg].f.end_derivative(a, b, at_start)

        fp, fm = at_vertex(seg_p, "f"), at_vertex(seg_m, "f")
        a1 = bool(np.linalg.norm(fp - fm) > tol * (1 + np.linalg.norm(fp) + np.linalg.norm(fm)))
        a2 = False
        if not a1:
            flat = np.linalg.norm(derivative(seg_p)) <= tol and np.linalg.norm(derivative(seg_m)) <= tol
            if flat:
                gp, gm = at_vertex(seg_p, "g"), at_vertex(seg_m, "g")
                M = traction_relation_matrix(frame.opening) if relation == "rotation" else w_matrix(frame.opening)
                a2 = bool(np.linalg.norm(gp - M @ gm) > tol * (1 + np.linalg.norm(gp) + np.linalg.norm(gm)))
        report.append(CornerAdmissibility(k, fp, fm, a1, a2, a1 or a2))
    return report


def is_admissible(fault, jumps, **kw):
    return all(r.admissible for r in admissibility_check(fault, jumps, **kw))


# ---------------------------------------------------------------------------
# Cauchy data from a finite-element solution
# ---------------------------------------------------------------------------

def cauchy_data_from_fem(field, params, vertex, h=None, n=64):
    """Edge data at a fault corner from a discrete solution.

    The jump is read from the nodal values of both copies; the vertex value
    on each edge is extrapolated linearly from that edge's own nodes, so a
    jump that changes at the corner is seen one-sidedly. Traction jumps are
    differences of one-sided element tractions at edge midpoints.
    """
    from .elastostatics import boundary_trace
    from .geometry import corner_frame_of

    mesh = field.mesh
    fault = mesh.closure.fault
    frame = corner_frame_of(fault, vertex)
    h = frame.h if h is None else float(h)
    x_c = frame.x_c
    seg_p, seg_m = fault.incident_segments(vertex)
    u = field.values

    def edge(seg):
        ids = np.flatnonzero(mesh.interface[:, 0] == seg)
        e = mesh.interface[ids]
        nodes = np.concatenate([e[:, [1, 3]], e[:, [2, 4]]])
        nodes = np.unique(nodes, axis=0)
        r_n = np.linalg.norm(mesh.nodes[nodes[:, 1]] - x_c, axis=1)
        order = np.argsort(r_n)
        r_n, nodes = r_n[order], nodes[order]
        jump = u[nodes[:, 0]] - u[nodes[:, 1]]
        keep = r_n > 1e-12
        rr, jj = r_n[keep], jump[keep]
        j0 = jj[0] - rr[0] * (jj[1] - jj[0]) / (rr[1] - rr[0])
        rr, jj = np.concatenate([[0.0], rr]), np.vstack([j0, jj])
        tp = boundary_trace(field, params, ids, kind="interface", side="+")
        tm = boundary_trace(field, params, ids, kind="interface", side="-")
        r_mid = np.linalg.norm(tp.points[:, 1] - x_c, axis=1)
        om = np.argsort(r_mid)
        r_mid, gj = r_mid[om], (tp.traction - tm.traction)[om]
        r_mid, gj = np.concatenate([[0.0], r_mid]), np.vstack([gj[0], gj])
        r = chebyshev_radii(h, n)
        f = np.stack([np.interp(r, rr, jj[:, i]) for i in range(2)], axis=1)
        g = np.stack([np.interp(r, r_mid, gj[:, i]) for i in range(2)], axis=1)
        return r, f, g

    rp, fp, gp = edge(seg_p)
    rm, fm, gm = edge(seg_m)
    return CornerCauchyData(frame.theta_m, frame.theta_M, h, rp, fp, gp, rm, fm, gm, x_c=tuple(x_c))


def write_probe_csv(report, path):
    with open(path, "w") as fh:
        chans = list(report.values)
        fh.write("s," + ",".join(f"{c}_real,{c}_imag" for c in chans) + "\n")
        for i, s in enumerate(report.s_grid):
            vals = ",".join(f"{report.values[c][i].real:.15e},{report.values[c][i].imag:.15e}" for c in chans)
            fh.write(f"{s:.15e},{vals}\n")

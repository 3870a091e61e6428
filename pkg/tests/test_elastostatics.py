import math

import numpy as np
import pytest
import sympy

from dislocation.elastostatics import (AnalyticField, ElasticityError, JumpData, LameParams,
                                       LinearField, SegmentJump, Trace, TransmissionSolver,
                                       assemble, betti_residual, element_stiffness, l2_error,
                                       lift_dirichlet, solve_direct, traction, weak_traction_jump)
from dislocation.geometry import DomainPolygon, FaultGeometry, closed_closure
from dislocation.mesh import build_mesh

from conftest import SQUARE


def linear_jump_data(fault, field, params):
    """Jumps for ``u = field`` inside and ``u = 0`` outside the closed fault."""
    segs = []
    for k in range(fault.n_segments):
        a, b = fault.segment(k)
        t = (b - a) / np.linalg.norm(b - a)
        nu = np.array([t[1], -t[0]])
        segs.append(SegmentJump(Trace.function(lambda p: -field.value(p)),
                                Trace.constant(-traction(field.A, params, nu))))
    return JumpData(segs)


def manufactured_body_force(lam, mu):
    x, y = sympy.symbols("x y")
    u = [sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y), x * (1 - x) * y * (1 - y)]
    div = sympy.diff(u[0], x) + sympy.diff(u[1], y)
    f = [-(mu * (sympy.diff(u[i], x, 2) + sympy.diff(u[i], y, 2)) + (lam + mu) * sympy.diff(div, (x, y)[i]))
         for i in range(2)]
    ff = sympy.lambdify((x, y), f, "numpy")
    uf = sympy.lambdify((x, y), u, "numpy")
    body = lambda p: np.stack(np.broadcast_arrays(*ff(p[:, 0], p[:, 1])), 1).astype(float)
    exact = lambda p: np.stack(np.broadcast_arrays(*uf(p[:, 0], p[:, 1])), 1).astype(float)
    return body, exact


@pytest.fixture(scope="module")
def clamped_mesh():
    domain = DomainPolygon.unit_square(tags=("D", "D", "D", "D"), observation=())
    return build_mesh(domain, closed_closure(FaultGeometry(SQUARE, closed=True)), 0.07)


@pytest.fixture(scope="module")
def observed_mesh():
    return build_mesh(DomainPolygon.unit_square(), closed_closure(FaultGeometry(SQUARE, closed=True)), 0.07)


class TestMaterial:
    def test_strong_convexity(self):
        with pytest.raises(ElasticityError):
            LameParams(1.0, 0.0)
        with pytest.raises(ElasticityError):
            LameParams(-2.0, 1.0)
        LameParams(-0.9, 1.0)

    def test_element_stiffness_kernel(self):
        p = np.array([[[0.0, 0.0], [1.0, 0.2], [0.3, 0.8]]])
        ke = element_stiffness(p, 1.5, 0.7)[0]
        assert np.allclose(ke, ke.T, atol=1e-14)
        ev = np.linalg.eigvalsh(ke)
        assert np.sum(np.abs(ev) < 1e-12 * ev.max()) == 3
        assert np.all(ev > -1e-12 * ev.max())
        # rigid motions lie in the kernel
        rot = np.array([[-y, x] for x, y in p[0]]).ravel()
        assert np.allclose(ke @ rot, 0.0, atol=1e-13)

    def test_element_energy_of_affine_field(self):
        # u = A x: energy = area * sigma : eps
        p = np.array([[[0.1, 0.0], [0.9, 0.3], [0.2, 0.7]]])
        A = np.array([[0.3, -0.2], [0.5, 0.1]])
        lam, mu = 1.2, 0.8
        u = (p[0] @ A.T).ravel()
        eps = 0.5 * (A + A.T)
        sig = lam * np.trace(eps) * np.eye(2) + 2 * mu * eps
        a = p[0, 1] - p[0, 0]
        b = p[0, 2] - p[0, 0]
        area = 0.5 * abs(a[0] * b[1] - a[1] * b[0])
        assert u @ element_stiffness(p, lam, mu)[0] @ u == pytest.approx(area * np.sum(sig * eps), rel=1e-13)


class TestDirectSolver:
    def test_piecewise_linear_exact(self, clamped_mesh):
        params = LameParams(1.3, 0.7)
        v = LinearField([[1.0, 0.3], [0.2, -1.0]], [0.1, 0.2])
        fault = clamped_mesh.closure.fault
        u = solve_direct(clamped_mesh, params, linear_jump_data(fault, v, params))
        inside = np.unique(clamped_mesh.triangles[clamped_mesh.region == 1])
        outside = np.unique(clamped_mesh.triangles[clamped_mesh.region == 0])
        assert np.max(np.abs(u.values[inside] - v.value(clamped_mesh.nodes[inside]))) <= 1e-9
        assert np.max(np.abs(u.values[outside])) <= 1e-9

    def test_jump_exact_at_interface_nodes(self, observed_mesh):
        params = LameParams(1.0, 1.0)
        jumps = JumpData.constant([[1, 0.2], [0.3, -0.5], [-0.4, 0.6], [0.2, 0.9]],
                                  [[0.5, 0.1], [-0.2, 0.3], [0.1, -0.4], [0.3, 0.2]])
        u = solve_direct(observed_mesh, params, jumps)
        e = observed_mesh.fault_edges
        for k in range(4):
            sel = e[:, 0] == k
            # interior nodes of each segment carry exactly that segment's value
            a, b = observed_mesh.closure.fault.segment(k)
            for col_p, col_m in ((1, 3), (2, 4)):
                pts = observed_mesh.nodes[e[sel, col_m]]
                interior = (np.linalg.norm(pts - a, axis=1) > 1e-9) & (np.linalg.norm(pts - b, axis=1) > 1e-9)
                jump = u.values[e[sel, col_p]] - u.values[e[sel, col_m]]
                assert np.max(np.abs(jump[interior] - jumps.segments[k].f.data)) <= 1e-9
        assert u.info["jump_error"] <= 1e-9

    def test_superposition_and_scaling(self, observed_mesh, unit_params):
        solver = TransmissionSolver(observed_mesh, unit_params)
        rng = np.random.default_rng(0)
        j1 = JumpData.constant(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)))
        j2 = JumpData.constant(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)))
        u1, u2, u12 = solver.solve(j1).values, solver.solve(j2).values, solver.solve(j1 + j2).values
        scale = np.max(np.abs(u12))
        assert np.max(np.abs(u12 - u1 - u2)) <= 1e-10 * scale
        u3 = solver.solve(j1.scaled(-2.5)).values
        assert np.max(np.abs(u3 + 2.5 * u1)) <= 1e-10 * np.max(np.abs(u3))

    def test_zero_jumps_give_zero_field(self, observed_mesh, unit_params):
        u = solve_direct(observed_mesh, unit_params, JumpData.zero(4))
        assert np.all(u.values == 0.0)

    def test_solver_reuse_matches_fresh_solve(self, observed_mesh, unit_params):
        jumps = JumpData.constant([[1, 0], [0, 1], [1, 1], [0, 0]])
        a = solve_direct(observed_mesh, unit_params, jumps).values
        b = TransmissionSolver(observed_mesh, unit_params).solve(jumps).values
        assert np.array_equal(a, b)

    def test_cg_matches_direct(self, observed_mesh, unit_params):
        jumps = JumpData.constant([[1, 0.5], [0, 1], [-1, 1], [0.3, 0]], [[0.1, 0], [0, 0], [0, 0.2], [0, 0]])
        a = solve_direct(observed_mesh, unit_params, jumps).values
        b = solve_direct(observed_mesh, unit_params, jumps, kind="cg", tol=1e-13).values
        assert np.max(np.abs(a - b)) <= 1e-8 * np.max(np.abs(a))

    def test_lift_is_supported_outside(self, observed_mesh, unit_params):
        jumps = JumpData.constant(np.ones((4, 2)))
        lift = lift_dirichlet(observed_mesh, unit_params, jumps)
        inside_only = observed_mesh.node_regions() == 2
        assert np.all(lift.values[inside_only] == 0.0)
        assert np.all(lift.values[observed_mesh.dirichlet_nodes()] == 0.0)

    def test_weak_traction_jump_balances_load(self, observed_mesh, unit_params):
        jumps = JumpData.constant(np.zeros((4, 2)), [[1, 0], [0, 1], [1, 1], [0.5, -0.5]])
        u = solve_direct(observed_mesh, unit_params, jumps)
        _, residual, load = weak_traction_jump(u, unit_params, jumps)
        assert np.max(np.abs(residual - load)) <= 1e-10 * np.max(np.abs(load))

    def test_missing_clamp_rejected(self, unit_params):
        domain = DomainPolygon.unit_square(tags=("N", "N", "N", "N"), observation=())
        mesh = build_mesh(domain, closed_closure(FaultGeometry(SQUARE, closed=True)), 0.1)
        with pytest.raises(ElasticityError):
            assemble(mesh, unit_params)

    def test_wrong_segment_count_rejected(self, observed_mesh, unit_params):
        with pytest.raises(ElasticityError):
            solve_direct(observed_mesh, unit_params, JumpData.zero(3))


class TestConvergence:
    def test_l2_order(self):
        body, exact = manufactured_body_force(1.0, 1.0)
        domain = DomainPolygon.unit_square(tags=("D", "D", "D", "D"), observation=())
        closure = closed_closure(FaultGeometry(SQUARE, closed=True))
        hs = [0.1, 0.05, 0.025]
        errs = []
        for h in hs:
            mesh = build_mesh(domain, closure, h)
            u = solve_direct(mesh, LameParams(1.0, 1.0), JumpData.zero(4), body_force=body)
            errs.append(l2_error(u, exact))
        order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert order >= 1.8


class TestReciprocity:
    def test_betti_for_affine_fields(self):
        params = LameParams(2.0, 0.5)
        v = LinearField([[0.3, 1.0], [-0.2, 0.4]], [1.0, 0.0])
        w = LinearField([[1.0, -0.5], [0.1, 0.0]])
        curve = np.array([[0.1, 0.1], [0.8, 0.2], [0.6, 0.9], [0.1, 0.1]])
        assert abs(betti_residual(v, w, curve, params)) <= 1e-12

    def test_betti_detects_non_solution(self):
        params = LameParams(1.0, 1.0)
        v = AnalyticField(lambda p: np.stack([p[:, 0] ** 2, 0 * p[:, 0]], 1),
                          lambda p: np.stack([np.stack([2 * p[:, 0], 0 * p[:, 0]], 1),
                                              np.zeros((len(p), 2))], 1))
        w = LinearField([[0.0, 0.0], [0.0, 0.0]], [1.0, 0.0])
        curve = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]])
        # int T v . w = int div(sigma v) . w = (lam + 2 mu) * 2 over the unit square
        assert betti_residual(v, w, curve, params).real == pytest.approx(6.0, rel=1e-12)

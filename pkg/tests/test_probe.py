import math
from dataclasses import replace

import numpy as np
import pytest

from dislocation.elastostatics import JumpData, LameParams, LinearField, solve_direct
from dislocation.geometry import DomainPolygon, FaultGeometry, closed_closure
from dislocation.mesh import build_mesh
from dislocation.probe import (HOLDS, INCONCLUSIVE, VIOLATED, CornerCauchyData, ProbeError,
                               admissibility_check, cauchy_data_from_fem, combine,
                               extract_f_mismatch, extract_g_relation, extract_scalar_f_mismatch,
                               extract_scalar_g_values, fit_limit, identity_lhs, rotation,
                               traction_relation_matrix, w_matrix, write_probe_csv)

from conftest import SQUARE


@pytest.fixture(scope="module")
def analytic_data():
    params = LameParams(1.5, 1.0)
    v = LinearField([[1.0, 0.3], [0.2, -1.0]], [0.1, 0.2])
    w = LinearField([[0.5, -0.3], [0.7, 0.2]], [0.0, 1.0])
    return CornerCauchyData.from_fields(0.4, 1.9, 0.2, v, w, params, x_c=(0.3, 0.4)), params


class TestMatrices:
    def test_w_invariants(self):
        rng = np.random.default_rng(3)
        for d in rng.uniform(0.05, math.pi - 0.05, 20):
            W = w_matrix(d)
            assert np.allclose(W.T @ W, np.eye(2), atol=1e-14)
            assert np.linalg.det(W) == pytest.approx(-1.0, abs=1e-14)
            assert np.allclose(W @ W, np.eye(2), atol=1e-14)

    def test_traction_relation_is_rotation(self):
        d = 1.1
        Q = traction_relation_matrix(d)
        assert np.allclose(Q, rotation(d + math.pi), atol=1e-15)

    def test_opening_checked(self):
        with pytest.raises(ProbeError):
            w_matrix(math.pi)

    def test_combine(self):
        assert combine([HOLDS, HOLDS]) == HOLDS
        assert combine([HOLDS, INCONCLUSIVE]) == INCONCLUSIVE
        assert combine([INCONCLUSIVE, VIOLATED]) == VIOLATED


class TestIdentity:
    def test_residual_vanishes_for_lame_fields(self, analytic_data):
        data, params = analytic_data
        for s in (5.0, 10.0, 20.0, 40.0):
            assert identity_lhs(data, s, params.mu, params.lam).max_residual <= 1e-8

    def test_perturbed_traction_breaks_identity(self, analytic_data):
        data, params = analytic_data
        bad = replace(data, g_plus=data.g_plus + 0.1)
        assert identity_lhs(bad, 10.0, params.mu, params.lam).max_residual > 1e-3

    def test_rotation_invariance(self, analytic_data):
        data, params = analytic_data
        a = identity_lhs(data, 10.0, params.mu, params.lam)
        b = identity_lhs(data.rotated(0.3), 10.0, params.mu, params.lam)
        assert np.allclose(a.edges, b.edges, rtol=1e-12, atol=1e-14)


class TestFit:
    def test_recovers_constant_and_rate(self):
        s = np.geomspace(5, 80, 12)
        fit = fit_limit(s, 0.7 + 2.0 * s ** -1.5, [])
        assert fit.constant == pytest.approx(0.7, abs=1e-10)
        assert fit.gamma == pytest.approx(1.5)
        assert fit.decaying

    def test_constant_remainder_is_flagged(self):
        s = np.geomspace(5, 80, 12)
        fit = fit_limit(s, 1.0 + np.sin(s), [])
        assert not fit.decaying or fit.rms > 1e-3


class TestDisplacementStage:
    def test_mismatch_magnitude(self):
        df = np.array([1.0, 0.4])
        data = CornerCauchyData.constant(-0.3, 1.0, 0.2, df, [0, 0], [0, 0], [0, 0])
        rep = extract_f_mismatch(data, mu=1.3)
        analytic = abs(np.array([1j, -1.0]) @ df) * 1.3
        assert abs(rep.channels["re"].constant) == pytest.approx(analytic, rel=0.05)
        assert rep.verdict == VIOLATED
        assert np.allclose(rep.estimate, df, atol=1e-3)

    def test_continuous_f_holds(self):
        data = CornerCauchyData.constant(-0.3, 1.0, 0.2, [1, 0], [0.3, 0.2], [1, 0], [0.5, -1])
        assert extract_f_mismatch(data).verdict == HOLDS

    def test_grid_checked(self):
        data = CornerCauchyData.constant(-0.3, 1.0, 0.2, [1, 0], [0, 0], [1, 0], [0, 0])
        with pytest.raises(ProbeError):
            extract_f_mismatch(data, s_grid=[5, 10, 20])


class TestTractionStage:
    def test_w_related_data_right_angle(self):
        d = math.pi / 2
        gm = np.array([1.0, 0.0])
        data = CornerCauchyData.constant(0.1, 0.1 + d, 0.2, [1, 0], w_matrix(d) @ gm, [1, 0], gm,
                                         zero_gradient=True)
        rep = extract_g_relation(data)
        assert rep.verdict == HOLDS and rep.residual <= 1e-6

    def test_rotation_relation_detected(self):
        d = 1.1
        gm = np.array([0.3, -0.7])
        data = CornerCauchyData.constant(0.5, 0.5 + d, 0.2, [1, 2], traction_relation_matrix(d) @ gm, [1, 2], gm,
                                         zero_gradient=True)
        rep = extract_g_relation(data)
        assert rep.verdict == HOLDS and rep.residual <= 1e-6

    def test_residual_equals_relation_distance(self):
        d = 1.1
        gm = np.array([0.3, -0.7])
        gp = np.array([0.2, 0.5])
        data = CornerCauchyData.constant(0.5, 0.5 + d, 0.2, [1, 2], gp, [1, 2], gm, zero_gradient=True)
        rep = extract_g_relation(data)
        assert rep.verdict == VIOLATED
        assert rep.residual == pytest.approx(np.linalg.norm(gp - traction_relation_matrix(d) @ gm), rel=1e-4)

    def test_requires_preconditions(self):
        data = CornerCauchyData.constant(0.0, 1.0, 0.2, [1, 0], [0, 0], [0, 0], [0, 0], zero_gradient=True)
        with pytest.raises(ProbeError):
            extract_g_relation(data)
        data = CornerCauchyData.constant(0.0, 1.0, 0.2, [1, 0], [0, 0], [1, 0], [0, 0])
        with pytest.raises(ProbeError):
            extract_g_relation(data)


class TestScalarStages:
    def test_scalar_mismatch(self):
        data = CornerCauchyData.constant(-0.4, 0.8, 0.2, [0.7], [0.0], [0.0], [0.0], components=1)
        rep = extract_scalar_f_mismatch(data)
        assert rep.verdict == VIOLATED
        assert rep.estimate[0] == pytest.approx(0.7, rel=1e-3)

    def test_scalar_g_values(self):
        data = CornerCauchyData.constant(-0.4, 0.8, 0.2, [0.7], [0.25], [0.7], [-0.4], components=1,
                                         zero_gradient=True)
        rep = extract_scalar_g_values(data)
        assert np.allclose(rep.estimate, [0.25, -0.4], atol=1e-5)
        zero = CornerCauchyData.constant(-0.4, 0.8, 0.2, [0.7], [0.0], [0.7], [0.0], components=1,
                                         zero_gradient=True)
        assert extract_scalar_g_values(zero).verdict == HOLDS


class TestAdmissibility:
    def test_distinct_segment_values_are_admissible(self, square_fault):
        jumps = JumpData.constant([[1, 0], [0, 1], [1, 1], [0, 0]])
        assert all(r.admissible for r in admissibility_check(square_fault, jumps))

    def test_constant_f_without_g_is_not(self, square_fault):
        jumps = JumpData.constant(np.ones((4, 2)))
        rep = admissibility_check(square_fault, jumps)
        assert not any(r.admissible for r in rep)


class TestFemData:
    def test_fem_corner_mismatch(self, tmp_path):
        fault = FaultGeometry(SQUARE, closed=True)
        mesh = build_mesh(DomainPolygon.unit_square(), closed_closure(fault), 0.03, corner_grading=4)
        f = np.array([[1.0, 0.2], [0.3, -0.5], [-0.4, 0.6], [0.2, 0.9]])
        u = solve_direct(mesh, LameParams(1.0, 1.0), JumpData.constant(f))
        data = cauchy_data_from_fem(u, LameParams(1.0, 1.0), 1)
        rep = extract_f_mismatch(data, tol=1e-2)
        seg_p, seg_m = fault.incident_segments(1)
        assert rep.verdict == VIOLATED
        assert np.allclose(rep.estimate, f[seg_p] - f[seg_m], atol=0.1)
        write_probe_csv(rep, tmp_path / "probe.csv")
        lines = (tmp_path / "probe.csv").read_text().splitlines()
        assert lines[0] == "s,re_real,re_imag" and len(lines) == 1 + len(rep.s_grid)

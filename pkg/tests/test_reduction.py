import math

import numpy as np
import pytest
from scipy import integrate

from dislocation.probe import (HOLDS, VIOLATED, CornerCauchyData, extract_f_mismatch,
                               extract_g_relation, traction_relation_matrix)
from dislocation.reduction import (BumpProfile, EdgeData3D, ReductionError, edge_probe_3d, mollifier,
                                   read_edge_data, reduce, split_systems, write_edge_data)


@pytest.fixture(scope="module")
def profile():
    return BumpProfile(0.2, 0.8)


class TestProfile:
    def test_mass_against_quad(self, profile):
        ref, _ = integrate.quad(lambda t: float(mollifier(np.array([t]))[0]), -1, 1, epsabs=1e-14, epsrel=1e-12)
        assert profile.m0 == pytest.approx(0.8 * ref, rel=1e-12)

    def test_support_must_fit_slab(self, profile):
        with pytest.raises(ReductionError):
            reduce(profile, lambda x3: np.ones_like(x3), slab_half_width=0.9)

    def test_constant_shortcut(self, profile):
        h = np.array([0.3, -1.2, 2.0])
        out = reduce(profile, lambda x3: np.tile(h, (len(x3), 1)), slab_half_width=2.0)
        assert np.allclose(out, profile.m0 * h, rtol=1e-12, atol=0)

    def test_linearity(self, profile):
        a = lambda x3: np.sin(x3)[:, None] * np.array([1.0, 2.0])
        b = lambda x3: (x3 ** 2)[:, None] * np.array([0.5, -1.0])
        lhs = reduce(profile, lambda x3: 2.0 * a(x3) - 3.0 * b(x3))
        rhs = 2.0 * reduce(profile, a) - 3.0 * reduce(profile, b)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-15)

    def test_invalid_width(self):
        with pytest.raises(ReductionError):
            BumpProfile(0.0, 0.0)


class TestSplit:
    def test_in_plane_verdict_matches_scaled_2d(self, profile):
        fp, fm = [1.0, 0.5, 0.2], [0.2, 0.1, 0.2]
        edge = EdgeData3D.constant(-0.4, 0.9, 0.3, fp, [0, 0, 0], fm, [0, 0, 0])
        rep = edge_probe_3d(edge, profile)
        twod = CornerCauchyData.constant(-0.4, 0.9, 0.3, profile.m0 * np.array(fp[:2]), [0, 0],
                                         profile.m0 * np.array(fm[:2]), [0, 0])
        assert rep.in_plane_f.verdict == extract_f_mismatch(twod).verdict == VIOLATED
        assert np.allclose(rep.in_plane_f.estimate, profile.m0 * (np.array(fp[:2]) - fm[:2]), atol=1e-6)

    def test_antiplane_certifies_zero_traction(self, profile):
        d = 1.2
        gm = np.array([0.4, -0.3])
        gp = traction_relation_matrix(d) @ gm
        f = [0.3, -0.2, 0.7]
        edge = EdgeData3D.constant(0.1, 0.1 + d, 0.3, f, [*gp, 0.0], f, [*gm, 0.0], zero_gradient=True)
        rep = edge_probe_3d(edge, profile)
        assert rep.antiplane_g.verdict == HOLDS
        assert rep.antiplane_g.residual <= 1e-6
        assert rep.in_plane_g.residual <= 1e-6
        assert rep.verdict == HOLDS
        vec, _ = split_systems(edge, profile)
        assert rep.in_plane_g.verdict == extract_g_relation(vec).verdict

    def test_antiplane_detects_nonzero_traction(self, profile):
        f = [0.3, -0.2, 0.7]
        edge = EdgeData3D.constant(0.1, 1.3, 0.3, f, [0, 0, 0.5], f, [0, 0, 0.0], zero_gradient=True)
        rep = edge_probe_3d(edge, profile)
        assert rep.antiplane_g.verdict == VIOLATED
        assert rep.antiplane_g.estimate[0] == pytest.approx(0.5 * profile.m0, rel=1e-4)

    def test_antiplane_uses_mu(self, profile):
        edge = EdgeData3D.constant(0.1, 1.3, 0.3, [0, 0, 0], [0, 0, 2.0], [0, 0, 0], [0, 0, 0])
        _, sca = split_systems(edge, profile, mu=4.0)
        assert np.allclose(sca.g_plus, profile.m0 * 0.5)
        with pytest.raises(ReductionError):
            split_systems(edge, profile, coefficient="lambda", lam=None)

    def test_shape_checked(self):
        r = np.linspace(0, 1, 10)
        with pytest.raises(ReductionError):
            EdgeData3D(0.0, 1.0, 1.0, r, np.zeros((10, 2)), np.zeros((10, 3)), r, np.zeros((10, 3)),
                       np.zeros((10, 3)))

    def test_file_roundtrip(self, tmp_path):
        edge = EdgeData3D.constant(0.1, 1.3, 0.3, [1, 2, 3], [4, 5, 6], [0, 1, 0], [0, 0, 1],
                                   n=16, zero_gradient=True)
        write_edge_data(edge, tmp_path / "edge.txt")
        back = read_edge_data(tmp_path / "edge.txt")
        assert back.theta_m == edge.theta_m and back.zero_gradient
        assert np.array_equal(back.f_plus, edge.f_plus) and np.array_equal(back.r_minus, edge.r_minus)

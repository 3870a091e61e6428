import math

import numpy as np
import pytest

from dislocation.elastostatics import LameParams, solve_direct
from dislocation.geometry import DomainPolygon
from dislocation.inversion import (FaultHypothesis, InadmissibleError, InversionConfig,
                                   InversionError, Observation, Scene, data_distance,
                                   distinguishability_experiment, fit_jumps, forward,
                                   forward_basis, misfit, null_pattern, null_space_projector,
                                   poll_points, read_observation_csv, reconstruct, reference_mesh,
                                   sample_boundary, vertex_error)

from conftest import SQUARE

F_TRUE = np.array([[1, 0.2], [0.3, -0.5], [-0.4, 0.6], [0.2, 0.9]])
G_TRUE = np.array([[0.5, 0.1], [-0.2, 0.3], [0.1, -0.4], [0.3, 0.2]])


@pytest.fixture(scope="module")
def scene():
    return Scene(DomainPolygon.unit_square(), LameParams(1.0, 1.0), 0.1, n_samples=32, corner_grading=2)


@pytest.fixture(scope="module")
def truth():
    return FaultHypothesis(SQUARE, F_TRUE, G_TRUE)


class TestObservations:
    def test_sample_grid_on_arc(self, scene):
        arc, pts = scene.sample_grid()
        assert len(arc) == 32
        assert np.all(np.diff(arc) > 0)
        assert arc[-1] < 3.0
        on_obs = (np.isclose(pts[:, 0], 1.0) | np.isclose(pts[:, 1], 1.0) | np.isclose(pts[:, 0], 0.0))
        assert np.all(on_obs)

    def test_zero_jumps_give_zero_data(self, scene):
        obs = forward(FaultHypothesis(SQUARE, np.zeros((4, 2)), np.zeros((4, 2))), scene)
        assert obs.valid and np.all(obs.values == 0.0)

    def test_sampling_matches_field_evaluation(self, scene, truth):
        mesh = reference_mesh(truth, scene)
        u = solve_direct(mesh, scene.params, truth.jumps())
        obs = sample_boundary(u, scene)
        assert np.allclose(obs.values, u.value(obs.points), atol=1e-13)

    def test_linearity_in_jumps(self, scene, truth):
        a = forward(truth, scene)
        b = forward(truth.with_jumps(2 * F_TRUE, 2 * G_TRUE), scene)
        assert np.allclose(b.values, 2 * a.values, rtol=1e-10, atol=1e-14)

    def test_basis_reproduces_forward(self, scene, truth):
        basis = forward_basis(truth, scene)
        obs = forward(truth, scene)
        assert np.allclose(basis.matrix @ truth.jump_vector(), obs.values.ravel(), rtol=1e-10, atol=1e-13)

    def test_invalid_geometry_sentinel(self, scene):
        bad = FaultHypothesis([[0.3, 0.3], [0.7, 0.7], [0.7, 0.3], [0.3, 0.7]], F_TRUE, G_TRUE)
        obs = forward(bad, scene)
        assert not obs.valid and obs.reason
        assert misfit(obs, forward(FaultHypothesis(SQUARE, F_TRUE, G_TRUE), scene)) == math.inf

    def test_noise_is_seeded(self, scene, truth):
        obs = forward(truth, scene)
        a, b = obs.with_noise(0.01, 7), obs.with_noise(0.01, 7)
        assert np.array_equal(a.values, b.values)
        rms = math.sqrt(np.mean(obs.values ** 2))
        assert np.std(a.values - obs.values) == pytest.approx(0.01 * rms, rel=0.3)

    def test_csv_roundtrip(self, scene, truth, tmp_path):
        obs = forward(truth, scene)
        obs.to_csv(tmp_path / "obs.csv")
        back = read_observation_csv(tmp_path / "obs.csv", scene)
        assert np.array_equal(back.values, obs.values)
        with pytest.raises(InversionError):
            read_observation_csv(tmp_path / "obs.csv", Scene(scene.domain, scene.params, 0.1, n_samples=16))

    def test_grid_mismatch_rejected(self, scene, truth):
        obs = forward(truth, scene)
        other = Observation(obs.arc[:-1], obs.points[:-1], obs.values[:-1])
        with pytest.raises(InversionError):
            misfit(obs, other)


class TestHypothesis:
    def test_canonicalization_is_relabelling_invariant(self, scene, truth):
        shifted = FaultHypothesis(np.roll(SQUARE, 2, axis=0), np.roll(F_TRUE, 2, axis=0), np.roll(G_TRUE, 2, axis=0))
        a, b = truth.canonicalize(), shifted.canonicalize()
        assert np.allclose(a.vertices, b.vertices) and np.allclose(a.f, b.f) and np.allclose(a.g, b.g)
        assert vertex_error(truth, shifted) == 0.0
        assert np.allclose(forward(truth, scene).values, forward(shifted, scene).values, atol=1e-12)

    def test_open_fault_jump_vanishes_at_ends(self, scene):
        hyp = FaultHypothesis.from_graph(0.2, [0.3, 0.5, 0.7], [0.4, 0.55, 0.45], [[1, 0], [0.5, 0.5]],
                                         [[0, 0.2], [0.1, 0]])
        jumps = hyp.jumps()
        fault = hyp.fault()
        a, b = fault.segment(0)
        assert np.allclose(jumps.segments[0].f([0.0], a[None, :]), 0.0)
        assert forward(hyp, scene).valid

    def test_geometry_vector_roundtrip(self):
        hyp = FaultHypothesis.from_graph(0.3, [0.2, 0.5, 0.8], [0.4, 0.6, 0.5], np.ones((2, 2)), np.ones((2, 2)))
        again = hyp.with_geometry(hyp.geometry_vector())
        assert np.allclose(again.vertices, hyp.vertices)

    def test_poll_points_include_similarity_moves(self, truth):
        pts = poll_points(truth, 0.01, math.sqrt(2))
        assert len(pts) == 2 * 8 + 8
        moved = np.array([pts[-5], pts[-1]])      # the two rotations
        c = SQUARE.mean(axis=0)
        for p in moved:
            assert np.allclose(np.linalg.norm(p.reshape(-1, 2) - c, axis=1),
                               np.linalg.norm(SQUARE - c, axis=1), atol=1e-12)


class TestJumpFit:
    def test_constant_f_is_null(self, scene, truth):
        basis = forward_basis(truth, scene)
        fit = fit_jumps(basis, forward(truth, scene))
        assert fit.null_dim == 2
        null = null_space_projector(truth, basis)
        expected = np.tile([1.0, 0.0, 0.0, 0.0], 4) / 2.0
        assert np.linalg.norm(null @ (null.T @ expected) - expected) < 1e-8

    def test_recovers_jumps_up_to_constant_f(self, scene, truth):
        fit = fit_jumps(forward_basis(truth, scene), forward(truth, scene))
        jv = fit.jumps.reshape(4, 4)
        f = jv[:, :2]
        assert np.allclose(f - f.mean(0), F_TRUE - F_TRUE.mean(0), atol=1e-6)
        assert np.allclose(jv[:, 2:], G_TRUE, atol=1e-6)
        assert fit.misfit < 1e-20

    def test_ridge_shrinks(self, scene, truth):
        basis = forward_basis(truth, scene)
        meas = forward(truth, scene)
        plain = fit_jumps(basis, meas)
        damped = fit_jumps(basis, meas, ridge=0.1)
        assert np.linalg.norm(damped.jumps) < np.linalg.norm(plain.jumps)
        assert damped.misfit > plain.misfit


class TestNullPattern:
    def test_constant_df_gives_no_data(self, scene, truth):
        df, dg = null_pattern(truth, [0.7, -0.3], [0.0, 0.0])
        other = truth.with_jumps(F_TRUE + df, G_TRUE + dg)
        assert data_distance(forward(truth, scene), forward(other, scene)) < 1e-10

    def test_chain_closes(self, truth):
        _, dg = null_pattern(truth, [0.0, 0.0], [1.0, 0.5])
        # around a square the product of four quarter-turn relations is the identity
        assert np.linalg.norm(dg[0]) > 0
        assert np.allclose(np.linalg.norm(dg, axis=1), np.linalg.norm(dg[0]))


class TestDistinguishability:
    def test_identical_faults(self, scene, truth):
        assert distinguishability_experiment(truth, truth, scene) <= 1e-12

    def test_distinct_faults(self, scene, truth):
        other = FaultHypothesis([[0.3, 0.35], [0.7, 0.3], [0.65, 0.7], [0.35, 0.65]], F_TRUE, G_TRUE)
        assert distinguishability_experiment(truth, other, scene) > 1e-3

    def test_inadmissible_refused(self, scene, truth):
        flat = FaultHypothesis(SQUARE, np.ones((4, 2)), np.zeros((4, 2)))
        with pytest.raises(InadmissibleError) as info:
            distinguishability_experiment(truth, flat, scene)
        assert info.value.corners == [0, 1, 2, 3]


class TestReconstruction:
    def test_truth_start_takes_no_steps(self, scene, truth):
        meas = forward(truth, scene)
        res = reconstruct(meas, truth, scene, InversionConfig(ridge=0.0, max_iter=3))
        assert res.stop_reason == "misfit_tol"
        assert res.geometry_steps == 0
        assert vertex_error(res.hypothesis, truth) == 0.0

    def test_short_run_monotone(self, scene, truth):
        meas = forward(truth, scene.refined())
        c = SQUARE.mean(axis=0)
        init = truth.with_geometry(((SQUARE - c) * 1.15 + c).ravel())
        seen = []
        res = reconstruct(meas, init, scene, InversionConfig(max_iter=4), callback=lambda i, e, s: seen.append(i))
        assert np.all(np.diff(res.history) <= 0)
        assert len(seen) == len(res.history) - 1
        assert vertex_error(res.hypothesis, truth) < vertex_error(init, truth)
        assert res.identifiability["null_space_dim"] == 2

    def test_invalid_initial_rejected(self, scene, truth):
        bad = FaultHypothesis([[0.3, 0.3], [0.7, 0.7], [0.7, 0.3], [0.3, 0.7]], F_TRUE, G_TRUE)
        with pytest.raises(InversionError):
            reconstruct(forward(truth, scene), bad, scene)

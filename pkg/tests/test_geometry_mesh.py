import math

import numpy as np
import pytest
from shapely.geometry import LineString, Point, Polygon

from dislocation.geometry import (DomainPolygon, FaultGeometry, GeometryError,
                                  close_open_fault, closed_closure, corner_frame_of)
from dislocation.mesh import MeshError, build_mesh, morph_mesh, read_mesh, write_mesh

from conftest import SQUARE


class TestFaultGeometry:
    def test_clockwise_closed_fault_rejected(self):
        with pytest.raises(GeometryError, match="counter-clockwise"):
            FaultGeometry(SQUARE[::-1], closed=True)

    def test_nonconvex_closed_fault_rejected(self):
        v = [[0.3, 0.3], [0.7, 0.3], [0.5, 0.4], [0.7, 0.7], [0.3, 0.7]]
        with pytest.raises(GeometryError):
            FaultGeometry(v, closed=True)

    def test_self_intersecting_open_fault_rejected(self):
        with pytest.raises(GeometryError):
            FaultGeometry([[0.2, 0.2], [0.8, 0.8], [0.8, 0.2], [0.2, 0.8]])

    def test_simplicity_agrees_with_shapely(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            v = rng.uniform(0.1, 0.9, size=(4, 2))
            simple = LineString(v).is_simple
            try:
                FaultGeometry(v, graph_angle=0.0)
                ours = True
            except GeometryError as exc:
                ours = "not simple" not in str(exc)
            if not simple:
                assert not ours

    def test_corner_frames_of_square_are_right_angles(self, square_fault):
        for k in square_fault.corner_indices:
            fr = corner_frame_of(square_fault, k)
            assert fr.opening == pytest.approx(math.pi / 2, abs=1e-12)
            # the bisector points into the square
            b = 0.5 * (fr.theta_m + fr.theta_M)
            probe = fr.x_c + 0.01 * np.array([math.cos(b), math.sin(b)])
            assert Polygon(SQUARE).contains(Point(probe))

    def test_domain_orientation_and_tags(self):
        with pytest.raises(GeometryError):
            DomainPolygon(np.array([[0, 0], [0, 1], [1, 1], [1, 0.0]]), ("D", "N", "N", "N"))
        with pytest.raises(GeometryError, match="traction-free"):
            DomainPolygon.unit_square(observation=(0,))

    def test_open_fault_closure_encloses_region(self, unit_domain):
        fault = FaultGeometry([[0.3, 0.4], [0.5, 0.55], [0.7, 0.45]])
        cl = close_open_fault(fault, unit_domain)
        poly = Polygon(cl.polygon)
        assert poly.is_valid and poly.area > 0
        assert cl.fault.side != 0
        assert Polygon(unit_domain.vertices).contains(poly)


@pytest.fixture(scope="module")
def mesh():
    fault = FaultGeometry(SQUARE, closed=True)
    return build_mesh(DomainPolygon.unit_square(), closed_closure(fault), 0.08)


class TestMesh:
    def test_area_partition(self, mesh):
        areas = mesh.areas()
        assert np.all(areas > 0)
        assert areas.sum() == pytest.approx(1.0, rel=1e-12)
        assert areas[mesh.region == 1].sum() == pytest.approx(Polygon(SQUARE).area, rel=1e-12)

    def test_triangles_inside_have_centroids_in_fault(self, mesh):
        poly = Polygon(SQUARE)
        cent = mesh.nodes[mesh.triangles].mean(axis=1)
        inside = np.array([poly.contains(Point(c)) for c in cent])
        assert np.array_equal(inside, mesh.region == 1)

    def test_split_copies_coincide(self, mesh):
        plus, minus = mesh.fault_node_pairs()
        assert np.allclose(mesh.nodes[plus], mesh.nodes[minus])
        assert np.all(mesh.parent[plus] == minus)
        # no triangle mixes the two copies
        regions = mesh.node_regions()
        assert np.all(regions[plus] == 1)
        assert np.all(regions[minus] == 2)

    def test_interface_normals_point_outward(self, mesh):
        e = mesh.fault_edges
        mid = 0.5 * (mesh.nodes[e[:, 3]] + mesh.nodes[e[:, 4]])
        c = SQUARE.mean(axis=0)
        assert np.all(np.einsum("ij,ij->i", mesh.interface_normals[mesh.interface[:, 0] >= 0], mid - c) > 0)
        assert np.allclose(np.linalg.norm(mesh.interface_normals, axis=1), 1.0)

    def test_minimum_angle(self, mesh):
        p = mesh.nodes[mesh.triangles]
        ang = []
        for i in range(3):
            a, b, c = p[:, i], p[:, (i + 1) % 3], p[:, (i + 2) % 3]
            u, v = b - a, c - a
            ang.append(np.degrees(np.arccos(np.einsum("ij,ij->i", u, v)
                                            / np.linalg.norm(u, axis=1) / np.linalg.norm(v, axis=1))))
        assert np.min(ang) >= 28.0 - 1e-6

    def test_size_bound(self, mesh):
        # area switch area = h^2 * sqrt(3)/4 keeps element diameters near h
        assert np.max(mesh.triangle_diameters()) <= 2.0 * 0.08

    def test_boundary_tags(self, mesh):
        assert set(mesh.boundary_tags) <= {"D", "N", "N0"}
        assert len(mesh.dirichlet_nodes()) > 0
        length = np.linalg.norm(mesh.nodes[mesh.boundary[:, 1]] - mesh.nodes[mesh.boundary[:, 0]], axis=1)
        assert length.sum() == pytest.approx(4.0, rel=1e-12)

    def test_corner_grading_adds_small_edges(self):
        fault = FaultGeometry(SQUARE, closed=True)
        cl = closed_closure(fault)
        plain = build_mesh(DomainPolygon.unit_square(), cl, 0.08)
        graded = build_mesh(DomainPolygon.unit_square(), cl, 0.08, corner_grading=3)
        e = graded.fault_edges
        lg = np.linalg.norm(graded.nodes[e[:, 3]] - graded.nodes[e[:, 4]], axis=1)
        assert lg.min() == pytest.approx(0.08 / 8, rel=1e-9)
        assert len(graded.fault_edges) > len(plain.fault_edges)

    def test_fault_too_close_to_boundary(self):
        fault = FaultGeometry([[0.001, 0.3], [0.3, 0.3], [0.3, 0.6]], graph_angle=None)
        with pytest.raises(GeometryError):
            cl = close_open_fault(fault, DomainPolygon.unit_square())
            build_mesh(DomainPolygon.unit_square(), cl, 0.05)

    def test_write_read_roundtrip(self, mesh, tmp_path):
        path = tmp_path / "mesh.txt"
        write_mesh(mesh, path)
        back = read_mesh(path)
        assert np.array_equal(back["nodes"], mesh.nodes)
        assert np.array_equal(back["triangles"], mesh.triangles)


class TestMorph:
    def test_morph_preserves_topology_and_tracks_fault(self):
        fault = FaultGeometry(SQUARE, closed=True)
        mesh = build_mesh(DomainPolygon.unit_square(), closed_closure(fault), 0.08, corner_grading=2)
        moved = SQUARE + np.array([[0.02, -0.01], [0.03, 0.0], [0.0, 0.02], [-0.01, 0.01]])
        new = morph_mesh(mesh, closed_closure(FaultGeometry(moved, closed=True)))
        assert np.array_equal(new.triangles, mesh.triangles)
        assert np.all(new.areas() > 0)
        assert new.areas().sum() == pytest.approx(1.0, rel=1e-12)
        assert new.areas()[new.region == 1].sum() == pytest.approx(Polygon(moved).area, rel=1e-12)
        # boundary nodes stay put
        b = mesh.boundary_nodes()
        assert np.array_equal(new.nodes[b], mesh.nodes[b])

    def test_identity_morph(self):
        fault = FaultGeometry(SQUARE, closed=True)
        mesh = build_mesh(DomainPolygon.unit_square(), closed_closure(fault), 0.1)
        new = morph_mesh(mesh, closed_closure(fault))
        assert np.allclose(new.nodes, mesh.nodes, atol=1e-12)

    def test_large_motion_rejected(self):
        fault = FaultGeometry(SQUARE, closed=True)
        mesh = build_mesh(DomainPolygon.unit_square(), closed_closure(fault), 0.1)
        far = np.array([[0.05, 0.05], [0.95, 0.05], [0.95, 0.95], [0.05, 0.95]])
        with pytest.raises(MeshError):
            morph_mesh(mesh, closed_closure(FaultGeometry(far, closed=True)), min_quality=0.9)

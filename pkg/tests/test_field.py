"""Tests for the admissible-domain field: meshes, Poisson solve, gradient recovery, evaluation."""

from pathlib import Path

import numpy as np
import pytest

from wecflow.field import (
    GAMMA_AD,
    OMEGA_AD,
    OMEGA_EXT,
    DomainField,
    FieldError,
    MeshError,
    TriMesh,
    cut_square_mesh,
    disk_mesh,
    load_mesh,
    smooth_gradient,
    solve_field,
    square_mesh,
)

DATA = Path(__file__).resolve().parents[1] / "data" / "meshes"


def disk_exact(points):
    return -(1.0 - np.sum(points ** 2, axis=1)) / 4.0


def region_nodes(mesh, region):
    """Nodes that belong only to triangles of ``region`` (interface excluded)."""
    mine = np.zeros(len(mesh.nodes), bool)
    other = np.zeros(len(mesh.nodes), bool)
    mine[mesh.triangles[mesh.regions == region].ravel()] = True
    other[mesh.triangles[mesh.regions != region].ravel()] = True
    return mine & ~other & (mesh.node_tags != GAMMA_AD)


@pytest.fixture(scope="module", params=["square", "cut_square"])
def shipped(request):
    mesh = load_mesh(DATA / f"{request.param}.mesh")
    return mesh, DomainField.from_mesh(mesh)


class TestMesh:
    def test_builders_are_delaunay(self):
        for mesh in (square_mesh(5.0), cut_square_mesh(5.0), disk_mesh(6)):
            assert mesh.delaunay_violations() == 0
            assert np.all(mesh.areas > 0)

    def test_shipped_meshes(self, shipped):
        mesh, _ = shipped
        assert mesh.delaunay_violations() == 0
        assert np.all(mesh.areas > 0)
        iface = np.flatnonzero(mesh.node_tags == GAMMA_AD)
        for region in (OMEGA_AD, OMEGA_EXT):
            touched = np.zeros(len(mesh.nodes), bool)
            touched[mesh.triangles[mesh.regions == region].ravel()] = True
            assert touched[iface].all()

    def test_violation_detected(self):
        mesh = TriMesh([[0, 0], [1, 0], [0.5, 0.1], [0.5, -0.1]], [[0, 1, 2], [0, 3, 1]],
                       [0, 0, 0, 0], [0, 0])
        assert mesh.delaunay_violations() == 2

    def test_round_trip(self, tmp_path):
        mesh = cut_square_mesh(10.0)
        mesh.save(tmp_path / "m.mesh")
        back = load_mesh(tmp_path / "m.mesh")
        assert back.hash() == mesh.hash()

    def test_missing_header(self, tmp_path):
        (tmp_path / "m.mesh").write_text("nodes 0\ntriangles 0\n")
        with pytest.raises(MeshError, match="header"):
            load_mesh(tmp_path / "m.mesh")

    def test_truncated(self, tmp_path):
        cut_square_mesh(10.0).save(tmp_path / "m.mesh")
        lines = (tmp_path / "m.mesh").read_text().splitlines()
        (tmp_path / "m.mesh").write_text("\n".join(lines[: len(lines) // 2]))
        with pytest.raises(MeshError):
            load_mesh(tmp_path / "m.mesh")

    def test_bad_index_and_degenerate(self):
        with pytest.raises(MeshError, match="missing node"):
            TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 3]], [0, 0, 0], [0])
        with pytest.raises(MeshError, match="degenerate"):
            TriMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]], [0, 0, 0], [0])

    def test_orientation_normalized(self):
        mesh = TriMesh([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]], [0, 0, 0], [0])
        assert mesh.signed_areas()[0] > 0


class TestPoisson:
    def test_disk_second_order(self):
        rms, peak = [], []
        for rings in (8, 16, 32):
            mesh = disk_mesh(rings)
            err = solve_field(mesh) - disk_exact(mesh.nodes)
            rms.append(np.sqrt(np.mean(err ** 2)))
            peak.append(np.abs(err).max())
        rate = np.log2(np.array(rms[:-1]) / rms[1:])
        assert np.all(rate > 1.9)
        # the maximum error approaches the same order from below on ring meshes
        assert np.all(np.log2(np.array(peak[:-1]) / peak[1:]) > 1.5)
        assert peak[-1] < 1e-4

    def test_disk_center_value(self):
        mesh = disk_mesh(32)
        assert solve_field(mesh)[0] == pytest.approx(-0.25, abs=2e-4)

    def test_interface_exactly_zero(self, shipped):
        mesh, field = shipped
        assert np.all(field.h_nodal[mesh.node_tags == GAMMA_AD] == 0.0)

    def test_discrete_maximum_principle(self, shipped):
        mesh, field = shipped
        assert np.all(field.h_nodal[region_nodes(mesh, OMEGA_AD)] < 0)
        assert np.all(field.h_nodal[region_nodes(mesh, OMEGA_EXT)] > 0)

    def test_disconnected_region_diagnosed(self):
        a = disk_mesh(3)
        island = np.array([[10.0, 10.0], [11.0, 10.0], [10.0, 11.0]])
        mesh = TriMesh(np.vstack([a.nodes, island]),
                       np.vstack([a.triangles, len(a.nodes) + np.array([[0, 1, 2]])]),
                       np.concatenate([a.node_tags, [0, 0, 0]]),
                       np.concatenate([a.regions, [OMEGA_EXT]]))
        with pytest.raises(FieldError, match="not connected"):
            solve_field(mesh)

    def test_no_interface_diagnosed(self):
        mesh = TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [0, 0, 0], [0])
        with pytest.raises(FieldError):
            solve_field(mesh)


class TestSmoothGradient:
    @pytest.mark.parametrize("eta", [0.0, 0.05, 10.0])
    def test_linear_reproduced(self, eta):
        mesh = disk_mesh(6)
        a = np.array([0.7, -1.3])
        G = smooth_gradient(mesh, mesh.nodes @ a + 0.4, eta)
        np.testing.assert_allclose(G, np.broadcast_to(a, G.shape), atol=1e-12)

    def test_disk_gradient_first_order(self):
        errs = []
        for rings in (8, 16):
            mesh = disk_mesh(rings)
            G = smooth_gradient(mesh, solve_field(mesh), 0.0)
            inner = np.linalg.norm(mesh.nodes, axis=1) < 0.8
            errs.append(np.abs(G[inner] - mesh.nodes[inner] / 2.0).max())
        assert errs[1] < errs[0]
        assert errs[1] < 0.05

    def test_smoothing_reduces_variance(self):
        mesh = disk_mesh(10)
        h = solve_field(mesh)
        var = [smooth_gradient(mesh, h, eta).var(axis=0).sum() for eta in (0.0, 0.1, 10.0)]
        assert var[0] > var[1] > var[2]


@pytest.fixture(scope="module")
def field():
    return DomainField.from_mesh(disk_mesh(16))


class TestEvaluation:
    def test_at_node(self, field):
        for i in (0, 17, 200, len(field.mesh.nodes) - 1):
            h, G, out = field.evaluate(field.mesh.nodes[i])
            assert h[0] == pytest.approx(field.h_nodal[i], abs=1e-14)
            np.testing.assert_allclose(G[0], field.G_nodal[i], atol=1e-14)
            assert not out[0]

    def test_at_centroid(self, field):
        tri = field.mesh.triangles[123]
        h, G, _ = field.evaluate(field.mesh.nodes[tri].mean(axis=0))
        assert h[0] == pytest.approx(field.h_nodal[tri].mean(), abs=1e-14)
        np.testing.assert_allclose(G[0], field.G_nodal[tri].mean(axis=0), atol=1e-14)

    def test_half_radius(self):
        errs = []
        for rings in (8, 16, 32):
            f = DomainField.from_mesh(disk_mesh(rings))
            th = np.linspace(0, 2 * np.pi, 7)[:-1] + 0.1
            pts = 0.5 * np.column_stack([np.cos(th), np.sin(th)])
            errs.append(np.abs(f.evaluate(pts)[0] + 0.1875).max())
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < 5e-4

    def test_continuity_across_edges(self, field):
        mesh = field.mesh
        edges, count = mesh.edges()
        inner = edges[count == 2][:50]
        for a, b in inner:
            x = 0.3 * mesh.nodes[a] + 0.7 * mesh.nodes[b]
            owners = [t for t, tri in enumerate(mesh.triangles) if a in tri and b in tri]
            vals = []
            for t in owners:
                lam = field.barycentric(t, x)
                vals.append(lam @ field.h_nodal[mesh.triangles[t]])
            assert abs(vals[0] - vals[1]) <= 1e-12

    def test_outside_hull_clamped(self, field):
        h, _, out = field.evaluate(np.array([[1.2, 0.0], [0.1, 0.1]]))
        assert out[0] and not out[1]
        assert h[0] == pytest.approx(0.0, abs=1e-12)

    def test_cache_round_trip(self, field, tmp_path):
        field.save(tmp_path / "f.npz")
        back = DomainField.load(tmp_path / "f.npz", field.mesh)
        assert np.array_equal(back.h_nodal, field.h_nodal)
        with pytest.raises(FieldError, match="different mesh"):
            DomainField.load(tmp_path / "f.npz", disk_mesh(4))

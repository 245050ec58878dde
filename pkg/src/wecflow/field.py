"""Admissible-domain function from two Poisson problems on one triangulation.

``h`` solves ``-lap h = -1`` inside the admissible region and ``-lap h = +1``
in the surrounding region, vanishes on their interface and has zero normal
derivative on the outer boundary.  It is therefore negative inside, positive
outside, and ``h(x) <= 0`` expresses "device inside the admissible area".

Mesh text format (``# wecflow-mesh 1`` header)::

    nodes <N>
    x y tag          # tag: 0 interior, 1 interface, 2 outer boundary
    triangles <T>
    a b c region     # region: 0 admissible, 1 exterior
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from matplotlib.path import Path as PolyPath
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.spatial import Delaunay, cKDTree

MESH_HEADER = "# wecflow-mesh 1"
INTERIOR, GAMMA_AD, GAMMA_EXT = 0, 1, 2
OMEGA_AD, OMEGA_EXT = 0, 1


class MeshError(ValueError):
    """Invalid mesh file or mesh data."""


class FieldError(RuntimeError):
    """The Poisson system could not be solved."""


@dataclass
class TriMesh:
    """Triangulation with interface/outer-boundary node tags and region tags."""

    nodes: np.ndarray
    triangles: np.ndarray
    node_tags: np.ndarray
    regions: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.node_tags = np.asarray(self.node_tags, dtype=np.int64)
        self.regions = np.asarray(self.regions, dtype=np.int64)
        if self.node_tags.shape != (len(self.nodes),):
            raise MeshError("one tag per node expected")
        if self.regions.shape != (len(self.triangles),):
            raise MeshError("one region per triangle expected")
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.nodes)):
            raise MeshError("triangle references a missing node")
        area = self.signed_areas()
        flip = area < 0
        self.triangles[flip] = self.triangles[flip][:, [0, 2, 1]]
        if np.any(np.abs(area) <= 1e-14 * max(1.0, np.abs(area).max(initial=1.0))):
            raise MeshError("degenerate triangle")

    def signed_areas(self):
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self):
        return self.signed_areas()

    @property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def edges(self):
        """Unique undirected edges and, for each, the number of adjacent triangles."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def edge_lengths(self):
        e, _ = self.edges()
        return np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1)

    def hull_edges(self):
        e, cnt = self.edges()
        return e[cnt == 1]

    def interface_edges(self):
        """Edges shared by an admissible and an exterior triangle (or bounding a
        mesh with only the admissible region)."""
        tri_e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        reg = np.repeat(self.regions, 3)
        e, inv = np.unique(tri_e, axis=0, return_inverse=True)
        inv = inv.ravel()
        has_ad = np.zeros(len(e), bool)
        has_ext = np.zeros(len(e), bool)
        has_ad[inv[reg == OMEGA_AD]] = True
        has_ext[inv[reg == OMEGA_EXT]] = True
        both = e[has_ad & has_ext]
        if not np.any(self.regions == OMEGA_EXT):
            both = self.hull_edges()
        return both

    def hash(self):
        h = hashlib.sha256()
        for arr in (self.nodes, self.triangles, self.node_tags, self.regions):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def delaunay_violations(self, slack=1e-12):
        """Number of triangles whose circumcircle strictly contains another node."""
        p = self.nodes[self.triangles]
        a, b, c = p[:, 0], p[:, 1], p[:, 2]
        d = 2.0 * (a[:, 0] * (b[:, 1] - c[:, 1]) + b[:, 0] * (c[:, 1] - a[:, 1])
                   + c[:, 0] * (a[:, 1] - b[:, 1]))
        sa, sb, sc = (np.sum(x ** 2, axis=1) for x in (a, b, c))
        ux = (sa * (b[:, 1] - c[:, 1]) + sb * (c[:, 1] - a[:, 1]) + sc * (a[:, 1] - b[:, 1])) / d
        uy = (sa * (c[:, 0] - b[:, 0]) + sb * (a[:, 0] - c[:, 0]) + sc * (b[:, 0] - a[:, 0])) / d
        center = np.stack([ux, uy], -1)
        r2 = np.sum((a - center) ** 2, axis=1)
        tree = cKDTree(self.nodes)
        bad = 0
        for t, (cen, rr) in enumerate(zip(center, r2)):
            for k in tree.query_ball_point(cen, math.sqrt(rr) * (1.0 + 1e-9)):
                if k in self.triangles[t]:
                    continue
                if _incircle(p[t], self.nodes[k], slack):
                    bad += 1
                    break
        return bad

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(MESH_HEADER + "\n")
            fh.write(f"nodes {len(self.nodes)}\n")
            for (x, y), t in zip(self.nodes, self.node_tags):
                fh.write(f"{x:.17g} {y:.17g} {t}\n")
            fh.write(f"triangles {len(self.triangles)}\n")
            for tri, r in zip(self.triangles, self.regions):
                fh.write(f"{tri[0]} {tri[1]} {tri[2]} {r}\n")


def _incircle(tri_pts, d, slack):
    """True if ``d`` lies strictly inside the circumcircle of the CCW triangle,
    beyond a relative ``slack`` of the determinant's magnitude."""
    rel = tri_pts - d
    lift = np.sum(rel ** 2, axis=1)
    a, b, c = rel
    minors = np.array([b[0] * c[1] - c[0] * b[1], c[0] * a[1] - a[0] * c[1],
                       a[0] * b[1] - b[0] * a[1]])
    det = lift @ minors
    return det > slack * (lift @ np.abs(minors))


def load_mesh(path):
    """Read a mesh written by :meth:`TriMesh.save`."""
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].strip() if not ln.startswith(MESH_HEADER) else ln.strip()
                 for ln in fh]
    if not lines or lines[0] != MESH_HEADER:
        raise MeshError(f"{path}: missing '{MESH_HEADER}' header")
    body = [ln for ln in lines[1:] if ln]
    try:
        key, n = body[0].split()
        if key != "nodes":
            raise MeshError(f"{path}: expected 'nodes' section")
        n = int(n)
        node_rows = np.array([ln.split() for ln in body[1:1 + n]], dtype=float)
        key, t = body[1 + n].split()
        if key != "triangles":
            raise MeshError(f"{path}: expected 'triangles' section")
        t = int(t)
        tri_rows = np.array([ln.split() for ln in body[2 + n:2 + n + t]], dtype=np.int64)
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from exc
    if node_rows.shape != (n, 3) or tri_rows.shape != (t, 4):
        raise MeshError(f"{path}: section sizes do not match their headers")
    return TriMesh(node_rows[:, :2], tri_rows[:, :3], node_rows[:, 2].astype(np.int64),
                   tri_rows[:, 3])


# ------------------------------------------------------------ mesh builders ---

def _edge_points(polygon, h):
    pts = []
    for a, b in zip(polygon, np.roll(polygon, -1, axis=0)):
        n = max(1, int(round(np.linalg.norm(b - a) / h)))
        t = np.arange(n)[:, None] / n
        pts.append(a + t * (b - a))
    return np.vstack(pts)


def _segment_distance(points, polygon):
    d = np.full(len(points), np.inf)
    for a, b in zip(polygon, np.roll(polygon, -1, axis=0)):
        ab = b - a
        t = np.clip((points - a) @ ab / (ab @ ab), 0.0, 1.0)
        d = np.minimum(d, np.linalg.norm(points - (a + t[:, None] * ab), axis=1))
    return d


def _hex_lattice(lo, hi, h):
    dy = h * math.sqrt(3.0) / 2.0
    ys = np.arange(lo[1], hi[1] + dy, dy)
    rows = []
    for i, y in enumerate(ys):
        xs = np.arange(lo[0] + (0.5 * h if i % 2 else 0.0), hi[0] + h, h)
        rows.append(np.column_stack([xs, np.full(xs.size, y)]))
    return np.vstack(rows)


def _recover_edges(points, chains, max_rounds=8):
    """Delaunay-triangulate ``points`` after splitting every constraint edge
    that is missing from the triangulation.  ``chains`` lists closed index
    loops into ``points``."""
    chains = [list(c) for c in chains]
    for _ in range(max_rounds):
        tri = Delaunay(points)
        e = np.sort(tri.simplices[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        present = set(map(tuple, e))
        missing = False
        new_chains = []
        for chain in chains:
            out = []
            for a, b in zip(chain, chain[1:] + chain[:1]):
                out.append(a)
                if tuple(sorted((a, b))) not in present:
                    missing = True
                    points = np.vstack([points, 0.5 * (points[a] + points[b])])
                    out.append(len(points) - 1)
            new_chains.append(out)
        chains = new_chains
        if not missing:
            return points, tri.simplices, chains
    raise MeshError("boundary edges could not be recovered")


def polygon_mesh(polygon, box, h):
    """Triangulate ``box`` (outer rectangle ``(xmin, ymin, xmax, ymax)``) with
    the admissible ``polygon`` as an interior interface.

    Boundary nodes are spaced about ``h`` apart along every edge, and the
    interior is filled with a hexagonal lattice of spacing ``h``.
    """
    polygon = np.asarray(polygon, dtype=float)
    x0, y0, x1, y1 = box
    outer = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    inner_pts = _edge_points(polygon, h)
    outer_pts = _edge_points(outer, h)
    lattice = _hex_lattice((x0, y0), (x1, y1), h)
    keep = ((lattice[:, 0] > x0) & (lattice[:, 0] < x1) & (lattice[:, 1] > y0)
            & (lattice[:, 1] < y1))
    lattice = lattice[keep]
    far = (_segment_distance(lattice, polygon) > 0.6 * h) & \
        (_segment_distance(lattice, outer) > 0.6 * h)
    lattice = lattice[far]
    points = np.vstack([inner_pts, outer_pts, lattice])
    ni, no = len(inner_pts), len(outer_pts)
    chains = [list(range(ni)), list(range(ni, ni + no))]
    points, simplices, chains = _recover_edges(points, chains)
    tags = np.zeros(len(points), dtype=np.int64)
    tags[chains[0]] = GAMMA_AD
    tags[chains[1]] = GAMMA_EXT
    cent = points[simplices].mean(axis=1)
    inside = PolyPath(polygon).contains_points(cent)
    regions = np.where(inside, OMEGA_AD, OMEGA_EXT)
    return TriMesh(points, simplices, tags, regions)


def square_polygon(side=50.0):
    return np.array([[0, 0], [side, 0], [side, side], [0, side]], dtype=float)


def cut_square_polygon(side=50.0, cut_low=10.0, cut_high=40.0):
    """Square with an equilateral triangular notch cut from its right edge."""
    half = 0.5 * (cut_high - cut_low)
    tip = side - math.sqrt(3.0) * half
    return np.array([[0, 0], [side, 0], [side, cut_low], [tip, 0.5 * (cut_low + cut_high)],
                     [side, cut_high], [side, side], [0, side]], dtype=float)


def default_box(polygon, margin_ratio=0.5):
    lo, hi = polygon.min(axis=0), polygon.max(axis=0)
    m = margin_ratio * float(np.max(hi - lo))
    return (lo[0] - m, lo[1] - m, hi[0] + m, hi[1] + m)


def square_mesh(h=5.0, side=50.0):
    poly = square_polygon(side)
    return polygon_mesh(poly, default_box(poly), h)


def cut_square_mesh(h=5.0, side=50.0):
    poly = cut_square_polygon(side)
    return polygon_mesh(poly, default_box(poly), h)


def disk_mesh(n_rings, radius=1.0, center=(0.0, 0.0)):
    """Unit-disk style mesh of concentric rings (ring ``i`` carries ``6 i`` nodes);
    the whole disk is admissible and its rim is the interface."""
    pts = [np.zeros((1, 2))]
    for i in range(1, n_rings + 1):
        th = 2.0 * math.pi * np.arange(6 * i) / (6 * i)
        pts.append((i / n_rings) * np.column_stack([np.cos(th), np.sin(th)]))
    points = radius * np.vstack(pts) + np.asarray(center, dtype=float)
    tri = Delaunay(points)
    tags = np.zeros(len(points), dtype=np.int64)
    tags[-6 * n_rings:] = GAMMA_AD
    return TriMesh(points, tri.simplices, tags, np.zeros(len(tri.simplices), dtype=np.int64))


# ---------------------------------------------------------------- assembly ---

def _gradients(mesh):
    """Per-triangle P1 basis gradients, shape ``(T, 3, 2)``, and areas."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.areas
    rot = np.stack([p[:, 1] - p[:, 2], p[:, 2] - p[:, 0], p[:, 0] - p[:, 1]], axis=1)
    grads = np.stack([rot[..., 1], -rot[..., 0]], -1) / (2.0 * area[:, None, None])
    return grads, area


def stiffness_matrix(mesh):
    grads, area = _gradients(mesh)
    local = np.einsum("tik,tjk->tij", grads, grads) * area[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = len(mesh.nodes)
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def lumped_mass(mesh):
    area = mesh.areas
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(area / 3.0, 3),
                       minlength=len(mesh.nodes))


def solve_field(mesh, sigma_int=-1.0, sigma_out=1.0):
    """P1 nodal values of the domain function (Dirichlet zero on the interface)."""
    K = stiffness_matrix(mesh)
    sigma = np.where(mesh.regions == OMEGA_AD, sigma_int, sigma_out)
    F = np.bincount(mesh.triangles.ravel(), weights=np.repeat(sigma * mesh.areas / 3.0, 3),
                    minlength=len(mesh.nodes))
    fixed = mesh.node_tags == GAMMA_AD
    free = ~fixed
    if not np.any(fixed):
        raise FieldError("mesh has no interface nodes; Poisson problem is singular")
    Kff = K[free][:, free]
    ncomp, labels = connected_components(Kff, directed=False)
    touching = np.zeros(ncomp, bool)
    coupled = np.asarray(abs(K[free][:, fixed]).sum(axis=1)).ravel() > 0
    touching[np.unique(labels[coupled])] = True
    if not touching.all():
        raise FieldError(f"{int((~touching).sum())} mesh component(s) are not connected to the "
                         "interface; Poisson problem is singular")
    h = np.zeros(len(mesh.nodes))
    h[free] = spsolve(Kff.tocsc(), F[free])
    return h


def smooth_gradient(mesh, h_nodal, eta=None):
    """Solve ``(M_lumped + eta K) G = b`` per component, where ``b`` is the
    lumped projection of the elementwise gradient of ``h``."""
    if eta is None:
        eta = default_eta(mesh)
    grads, area = _gradients(mesh)
    g_tri = np.einsum("tik,ti->tk", grads, h_nodal[mesh.triangles])
    b = np.column_stack([
        np.bincount(mesh.triangles.ravel(), weights=np.repeat(g_tri[:, k] * area / 3.0, 3),
                    minlength=len(mesh.nodes)) for k in range(2)])
    Mass = lumped_mass(mesh)
    if eta == 0:
        return b / Mass[:, None]
    A = (sparse.diags(Mass) + eta * stiffness_matrix(mesh)).tocsc()
    return np.column_stack([spsolve(A, b[:, k]) for k in range(2)])


def default_eta(mesh):
    return (2.0 * float(np.median(mesh.edge_lengths()))) ** 2


# ------------------------------------------------------------- evaluation ---

class DomainField:
    """Nodal domain function and smoothed gradient with point evaluation."""

    def __init__(self, mesh, h_nodal, G_nodal, eta):
        self.mesh = mesh
        self.h_nodal = np.asarray(h_nodal, dtype=float)
        self.G_nodal = np.asarray(G_nodal, dtype=float)
        self.eta = float(eta)
        self._tree = cKDTree(mesh.centroids)
        p = mesh.nodes[mesh.triangles]
        self._origin = p[:, 0]
        T = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        self._Tinv = np.linalg.inv(T)
        self._cache = {}

    @classmethod
    def from_mesh(cls, mesh, eta=None):
        eta = default_eta(mesh) if eta is None else eta
        h = solve_field(mesh)
        return cls(mesh, h, smooth_gradient(mesh, h, eta), eta)

    def barycentric(self, tri, point):
        lam12 = self._Tinv[tri] @ (point - self._origin[tri])
        return np.concatenate([[1.0 - lam12.sum()], lam12])

    def locate(self, point, hint=None, tol=1e-12):
        """Containing triangle and barycentric weights; ``(tri, lam, outside)``."""
        point = np.asarray(point, dtype=float)
        candidates = [] if hint is None else [hint]
        _, near = self._tree.query(point, k=min(12, len(self.mesh.triangles)))
        candidates.extend(np.atleast_1d(near))
        for t in candidates:
            lam = self.barycentric(t, point)
            if lam.min() >= -tol:
                return int(t), lam, False
        lam_all = np.einsum("tij,tj->ti", self._Tinv, point - self._origin)
        lam_all = np.column_stack([1.0 - lam_all.sum(axis=1), lam_all])
        inside = np.flatnonzero(lam_all.min(axis=1) >= -tol)
        if inside.size:
            t = int(inside[0])
            return t, lam_all[t], False
        # outside the mesh: closest point of the nearest triangle
        best, best_d, best_lam = 0, np.inf, None
        for t in np.atleast_1d(self._tree.query(point, k=min(32, len(self.mesh.triangles)))[1]):
            q, lam = _closest_in_triangle(self.mesh.nodes[self.mesh.triangles[t]], point)
            d = np.linalg.norm(q - point)
            if d < best_d:
                best, best_d, best_lam = int(t), d, lam
        return best, best_lam, True

    def evaluate(self, points):
        """Interpolated ``h`` and ``G`` at ``points``; also returns outside flags."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        h = np.empty(len(points))
        G = np.empty((len(points), 2))
        outside = np.zeros(len(points), bool)
        for i, x in enumerate(points):
            t, lam, outside[i] = self.locate(x, self._cache.get(i))
            self._cache[i] = t
            nodes = self.mesh.triangles[t]
            h[i] = lam @ self.h_nodal[nodes]
            G[i] = lam @ self.G_nodal[nodes]
        return h, G, outside

    def save(self, path):
        np.savez(path, h=self.h_nodal, G=self.G_nodal, eta=self.eta,
                 mesh_hash=np.array(self.mesh.hash()))

    @classmethod
    def load(cls, path, mesh):
        with np.load(path, allow_pickle=False) as data:
            if str(data["mesh_hash"]) != mesh.hash():
                raise FieldError(f"{path}: field cache belongs to a different mesh")
            return cls(mesh, data["h"], data["G"], float(data["eta"]))


def _closest_in_triangle(tri_pts, p):
    """Closest point to ``p`` in a triangle and its barycentric weights."""
    a, b, c = tri_pts
    cands = []
    for (u, v, iu, iv) in ((a, b, 0, 1), (b, c, 1, 2), (c, a, 2, 0)):
        uv = v - u
        t = float(np.clip((p - u) @ uv / (uv @ uv), 0.0, 1.0))
        lam = np.zeros(3)
        lam[iu], lam[iv] = 1.0 - t, t
        cands.append((np.linalg.norm(u + t * uv - p), u + t * uv, lam))
    _, q, lam = min(cands, key=lambda z: z[0])
    return q, lam


@dataclass(frozen=True)
class DiskDomain:
    """Analytic admissible disk: ``h = (|x - c|^2 - rho^2) / 4`` with exact gradient."""

    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def evaluate(self, points):
        d = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(self.center)
        return (np.sum(d ** 2, axis=1) - self.radius ** 2) / 4.0, d / 2.0, \
            np.zeros(len(d), bool)

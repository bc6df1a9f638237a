"""Bilayer triangulations with tagged boundaries and a matched interface.

The domain is split into a lower layer ``D`` and an upper layer ``E``.  Each
layer carries its own triangulation; the two meshes share vertex positions on
the horizontal interface.  Boundary edges are tagged ``CLAMPED`` (Dirichlet),
``GAMMA`` (exposed surface of E, Robin) or ``SIGMA`` (interface, transmission).

The structured generator splits each grid cell along one diagonal, alternating
the diagonal direction in a criss-cross pattern.  Unstructured meshes can be
imported from a plain-text format (see :func:`read_mesh`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

CLAMPED = 0
GAMMA = 1
SIGMA = 2

TAG_NAMES = {CLAMPED: "clamped", GAMMA: "gamma", SIGMA: "sigma"}
_TAG_CODES = {name: code for code, name in TAG_NAMES.items()}

PAIRING_TOL = 1e-12  # relative to the domain diameter


@dataclass(frozen=True)
class Mesh2D:
    """Immutable triangulation of one subdomain.

    Attributes
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array, counter-clockwise vertex triples
    subdomain : 'D' or 'E'
    boundary_edges : (B, 2) int array, oriented as in the adjacent triangle
    boundary_tags : (B,) int array with values in {CLAMPED, GAMMA, SIGMA}
    boundary_tris : (B,) int array, triangle adjacent to each boundary edge
    """

    vertices: np.ndarray
    triangles: np.ndarray
    subdomain: str
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    boundary_tris: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_edges", "boundary_tags",
                     "boundary_tris"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        areas = triangle_areas(self)
        if areas.size and areas.min() <= 0.0:
            bad = int(np.argmin(areas))
            raise GeometryError(
                f"triangle {bad} has non-positive signed area {areas.min():.3e}")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def edges_with_tag(self, tag: int) -> np.ndarray:
        return np.flatnonzero(self.boundary_tags == tag)

    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))


@dataclass(frozen=True)
class InterfaceMap:
    """Matched interface edge pairs with unit normals pointing from D into E.

    Edge ``k`` of the map joins the same two physical points in both meshes;
    ``edges_d[k]`` / ``edges_e[k]`` list the endpoint vertex ids so that equal
    positions line up, and ``tris_d`` / ``tris_e`` give the adjacent triangle
    on each side.
    """

    edges_d: np.ndarray
    edges_e: np.ndarray
    tris_d: np.ndarray
    tris_e: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        for name in ("edges_d", "edges_e", "tris_d", "tris_e", "normals", "lengths"):
            getattr(self, name).setflags(write=False)
        if np.any(self.lengths <= 0.0):
            raise GeometryError("degenerate (zero-length) interface edge")

    @property
    def n_edges(self) -> int:
        return self.edges_d.shape[0]


def triangle_areas(mesh: Mesh2D) -> np.ndarray:
    """Signed areas of all triangles (positive for counter-clockwise)."""
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def interface_normals(imap: InterfaceMap) -> np.ndarray:
    """Per-pair unit normals oriented from the D side into the E side."""
    if imap.n_edges == 0:
        raise GeometryError("empty interface map")
    return imap.normals


def _structured_mesh(rect, nx: int, ny: int, subdomain: str) -> Mesh2D:
    x0, x1, y0, y1 = rect
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))
    triangles = np.asarray(tris, dtype=np.int64)
    edges, tris_adj = _boundary_edges(triangles)
    tags = np.full(edges.shape[0], CLAMPED, dtype=np.int64)
    return Mesh2D(vertices, triangles, subdomain, edges, tags, tris_adj)


def _boundary_edges(triangles: np.ndarray):
    """Oriented boundary edges and their adjacent triangle.

    Interior edges appear twice with opposite orientations and drop out;
    an edge seen more than twice means a non-manifold triangulation.
    """
    seen = {}
    for t, tri in enumerate(triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            seen.setdefault(key, []).append((int(a), int(b), t))
    edges, adj = [], []
    for key, occ in seen.items():
        if len(occ) > 2:
            raise GeometryError(f"edge {key} shared by {len(occ)} triangles")
        if len(occ) == 1:
            a, b, t = occ[0]
            edges.append((a, b))
            adj.append(t)
    order = np.lexsort(np.asarray(edges, dtype=np.int64).T[::-1]) if edges else []
    edges = np.asarray(edges, dtype=np.int64)[order].reshape(-1, 2)
    adj = np.asarray(adj, dtype=np.int64)[order].reshape(-1)
    return edges, adj


def rectangle_mesh(rect, nx: int, ny: int, subdomain: str = "D") -> Mesh2D:
    """Structured criss-cross triangulation of one rectangle, all edges clamped."""
    if nx < 1 or ny < 1:
        raise ValueError("cell counts must be >= 1")
    return _structured_mesh(rect, nx, ny, subdomain)


def build_bilayer(rect_d, rect_e, nx: int, ny_d: int, ny_e: int):
    """Build matched structured triangulations of two stacked rectangles.

    Parameters
    ----------
    rect_d, rect_e : (x0, x1, y0, y1)
        The E rectangle must share a full horizontal edge with the D
        rectangle (directly above or below it).
    nx, ny_d, ny_e : int
        Cell counts; each cell is split into two triangles.

    Returns
    -------
    (mesh_d, mesh_e, interface_map)
    """
    if nx < 1 or ny_d < 1 or ny_e < 1:
        raise ValueError("cell counts must be >= 1")
    xd0, xd1, yd0, yd1 = rect_d
    xe0, xe1, ye0, ye1 = rect_e
    if xd1 <= xd0 or yd1 <= yd0 or xe1 <= xe0 or ye1 <= ye0:
        raise GeometryError("rectangle extents must be increasing")
    diam = max(xd1 - xd0, yd1 - yd0, xe1 - xe0, ye1 - ye0)
    tol = 1e-10 * diam
    if abs(xd0 - xe0) > tol or abs(xd1 - xe1) > tol:
        raise GeometryError("layers must share the full horizontal extent")
    if abs(ye0 - yd1) <= tol:
        e_above = True       # E sits on top of D
    elif abs(yd0 - ye1) <= tol:
        e_above = False      # reflected layout, E below D
    else:
        raise GeometryError("layers do not abut along a horizontal edge")

    mesh_d = _structured_mesh(rect_d, nx, ny_d, "D")
    mesh_e = _structured_mesh(rect_e, nx, ny_e, "E")

    y_sigma_d = yd1 if e_above else yd0
    y_gamma = ye1 if e_above else ye0
    mesh_d = _retag_horizontal(mesh_d, sigma_y=y_sigma_d, gamma_y=None, tol=tol)
    mesh_e = _retag_horizontal(mesh_e, sigma_y=(ye0 if e_above else ye1),
                               gamma_y=y_gamma, tol=tol)
    imap = pair_interface(mesh_d, mesh_e)
    return mesh_d, mesh_e, imap


def _retag_horizontal(mesh: Mesh2D, sigma_y, gamma_y, tol):
    mids = 0.5 * (mesh.vertices[mesh.boundary_edges[:, 0]]
                  + mesh.vertices[mesh.boundary_edges[:, 1]])
    tags = np.full(mesh.boundary_edges.shape[0], CLAMPED, dtype=np.int64)
    if sigma_y is not None:
        tags[np.abs(mids[:, 1] - sigma_y) <= tol] = SIGMA
    if gamma_y is not None:
        tags[np.abs(mids[:, 1] - gamma_y) <= tol] = GAMMA
    return Mesh2D(mesh.vertices.copy(), mesh.triangles.copy(), mesh.subdomain,
                  mesh.boundary_edges.copy(), tags, mesh.boundary_tris.copy())


def pair_interface(mesh_d: Mesh2D, mesh_e: Mesh2D) -> InterfaceMap:
    """Match SIGMA edges of the two meshes into an :class:`InterfaceMap`.

    Non-matching meshes (endpoints further apart than ``PAIRING_TOL`` times
    the domain diameter) are rejected.
    """
    diam = max(mesh_d.diameter(), mesh_e.diameter())
    tol = PAIRING_TOL * diam

    def sigma_edges(mesh):
        idx = mesh.edges_with_tag(SIGMA)
        edges = mesh.boundary_edges[idx]
        tris = mesh.boundary_tris[idx]
        mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
        order = np.lexsort((mids[:, 1], mids[:, 0]))
        return edges[order], tris[order]

    ed, td = sigma_edges(mesh_d)
    ee, te = sigma_edges(mesh_e)
    if ed.shape[0] == 0 or ed.shape[0] != ee.shape[0]:
        raise GeometryError(
            f"interface edge count mismatch: D has {ed.shape[0]}, E has {ee.shape[0]}")

    normals = np.empty((ed.shape[0], 2))
    lengths = np.empty(ed.shape[0])
    edges_e_aligned = np.empty_like(ee)
    for k in range(ed.shape[0]):
        pd = mesh_d.vertices[ed[k]]
        pe = mesh_e.vertices[ee[k]]
        if np.allclose(pd, pe, rtol=0.0, atol=tol):
            edges_e_aligned[k] = ee[k]
        elif np.allclose(pd, pe[::-1], rtol=0.0, atol=tol):
            edges_e_aligned[k] = ee[k][::-1]
        else:
            raise GeometryError(
                f"interface pair {k} endpoints do not coincide (tol {tol:.1e})")
        tang = pd[1] - pd[0]
        length = float(np.hypot(*tang))
        if length <= tol:
            raise GeometryError(f"degenerate interface edge {k}")
        # outward normal of the D triangle = direction into E
        normals[k] = np.array([tang[1], -tang[0]]) / length
        lengths[k] = length
    return InterfaceMap(ed.copy(), edges_e_aligned, td.copy(), te.copy(),
                        normals, lengths)


def read_mesh(path, subdomain: str) -> Mesh2D:
    """Read a mesh from the plain-text interchange format.

    The file holds three sections introduced by ``VERTICES``, ``TRIANGLES``
    and ``BOUNDARY`` header lines.  Vertices are ``x y`` pairs; triangles are
    0-based ``i j k tag`` lines whose tag is ignored except for consistency
    with ``subdomain``; boundary lines are ``i j tag`` with tag one of
    ``clamped``, ``gamma``, ``sigma``.
    """
    vertices, triangles, bedges, btags = [], [], [], []
    section = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            upper = line.upper()
            if upper in ("VERTICES", "TRIANGLES", "BOUNDARY"):
                section = upper
                continue
            parts = line.split()
            try:
                if section == "VERTICES":
                    vertices.append((float(parts[0]), float(parts[1])))
                elif section == "TRIANGLES":
                    triangles.append((int(parts[0]), int(parts[1]), int(parts[2])))
                elif section == "BOUNDARY":
                    bedges.append((int(parts[0]), int(parts[1])))
                    btags.append(_TAG_CODES[parts[2].lower()])
                else:
                    raise GeometryError(f"{path}:{lineno}: data before a section header")
            except (ValueError, IndexError, KeyError) as exc:
                raise GeometryError(f"{path}:{lineno}: cannot parse {line!r}") from exc
    verts = np.asarray(vertices, dtype=float)
    tris = np.asarray(triangles, dtype=np.int64)
    edges, adj = _boundary_edges(tris)
    # carry the file's tags onto the extracted edges
    tag_of = {(min(a, b), max(a, b)): t for (a, b), t in zip(bedges, btags)}
    tags = np.empty(edges.shape[0], dtype=np.int64)
    for k, (a, b) in enumerate(edges):
        key = (min(a, b), max(a, b))
        if key not in tag_of:
            raise GeometryError(f"boundary edge {key} missing from BOUNDARY section")
        tags[k] = tag_of[key]
    return Mesh2D(verts, tris, subdomain, edges, tags, adj)


def write_mesh(path, mesh: Mesh2D) -> None:
    """Write a mesh in the plain-text interchange format read by :func:`read_mesh`."""
    with open(path, "w") as fh:
        fh.write("VERTICES\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write("TRIANGLES\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k} {mesh.subdomain}\n")
        fh.write("BOUNDARY\n")
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{i} {j} {TAG_NAMES[int(tag)]}\n")

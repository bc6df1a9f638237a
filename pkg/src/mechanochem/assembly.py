"""Galerkin assembly for the partitioned bilayer system.

One :class:`MeshGeometry` per subdomain caches triangle geometry, quadrature
data and scatter indices; :class:`EdgeSet` does the same for tagged boundary
edges (Robin surface terms, interface transmission, flux data).  The species
system is blocked per species, so the full diffusion matrix is built from
scalar P1 blocks scaled by the cross-diffusion entries, and the interface
Robin term adds ``K`` times the interface edge mass to every diagonal block.

Element loops run through the kernel backend selected in
:mod:`mechanochem.kernels`; everything here is glue and sparse scatter.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigurationError
from .kinetics import CrossDiffusion, Reaction, crossdiff_eval
from .linalg import SaddleSystem
from .mesh import CLAMPED, GAMMA, SIGMA, InterfaceMap, Mesh2D
from .spaces import DofMap, quadrature

BUBBLE_INTEGRAL = 0.45  # int_K of the unit-peak bubble = 0.45 * area

# 3-point Gauss on [0, 1], exact through degree 5
_EDGE_QP = np.array([0.5 - np.sqrt(3.0 / 5.0) / 2.0, 0.5, 0.5 + np.sqrt(3.0 / 5.0) / 2.0])
_EDGE_QW = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


class MeshGeometry:
    """Per-mesh caches: areas, P1 gradients, quadrature points, scatter indices."""

    def __init__(self, mesh: Mesh2D):
        self.mesh = mesh
        self.area, self.grads = kernels.tri_geometry(mesh.vertices, mesh.triangles)
        self._rules = {}
        self._qp_coords = {}
        tris = mesh.triangles
        self.rows3 = np.repeat(tris, 3, axis=1).ravel()
        self.cols3 = np.tile(tris, (1, 3)).ravel()

    @property
    def n_vertices(self):
        return self.mesh.n_vertices

    def rule(self, degree):
        if degree not in self._rules:
            self._rules[degree] = quadrature(degree)
        return self._rules[degree]

    def qp_coords(self, degree):
        """Physical coordinates of the quadrature points, shape (T, Q, 2)."""
        if degree not in self._qp_coords:
            lam = self.rule(degree).points
            verts = self.mesh.vertices[self.mesh.triangles]  # (T, 3, 2)
            self._qp_coords[degree] = np.einsum("qa,tad->tqd", lam, verts)
        return self._qp_coords[degree]

    def interp_qp(self, nodal, degree):
        """Interpolate a vertex field to quadrature points, shape (T, Q)."""
        lam = self.rule(degree).points
        vals = nodal[self.mesh.triangles]  # (T, 3)
        return vals @ lam.T

    def scalar_csr(self, local):
        """Scatter local (T, 3, 3) blocks into a vertex-based CSR matrix."""
        n = self.n_vertices
        return sp.coo_matrix((local.ravel(), (self.rows3, self.cols3)),
                             shape=(n, n)).tocsr()

    def scalar_load(self, local):
        """Scatter local (T, 3) contributions into a vertex vector."""
        vec = np.zeros(self.n_vertices)
        np.add.at(vec, self.mesh.triangles.ravel(), local.ravel())
        return vec

    def p1_gradient(self, nodal):
        """Constant per-triangle gradient of a vertex field, shape (T, 2)."""
        vals = nodal[self.mesh.triangles]
        return np.einsum("ta,tad->td", vals, self.grads)


class EdgeSet:
    """Cache for a set of boundary edges of one mesh.

    Normals are the outward normals of the owning mesh unless overridden.
    Barycentric coordinates of the edge quadrature points in the adjacent
    triangle allow evaluating bubble contributions on the edge.
    """

    def __init__(self, mesh: Mesh2D, geom: MeshGeometry, edges, tris, normals=None):
        self.mesh = mesh
        self.geom = geom
        self.nodes = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.tris = np.asarray(tris, dtype=np.int64).reshape(-1)
        p0 = mesh.vertices[self.nodes[:, 0]]
        p1 = mesh.vertices[self.nodes[:, 1]]
        tang = p1 - p0
        self.lengths = np.hypot(tang[:, 0], tang[:, 1])
        if normals is None:
            normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / self.lengths[:, None]
        self.normals = normals
        s = _EDGE_QP
        self.qw = _EDGE_QW
        self.shape1d = np.column_stack([1.0 - s, s])           # (Q, 2)
        self.qp_x = p0[:, None, :] + s[None, :, None] * tang[:, None, :]  # (E, Q, 2)
        # barycentric coordinates in the adjacent triangle:
        # lam_a(x) = 1/3 + grad lam_a . (x - centroid)
        tri_pts = mesh.vertices[mesh.triangles[self.tris]]     # (E, 3, 2)
        centroid = tri_pts.mean(axis=1)
        g = geom.grads[self.tris]                              # (E, 3, 2)
        rel = self.qp_x - centroid[:, None, :]
        self.bary = 1.0 / 3.0 + np.einsum("ead,eqd->eqa", g, rel)

    @property
    def n_edges(self):
        return self.nodes.shape[0]

    def values_qp(self, nodal):
        """P1 edge restriction of a vertex field at quadrature points, (E, Q)."""
        return nodal[self.nodes] @ self.shape1d.T

    def scalar_mass(self):
        """Edge mass matrix sum_e int_e phi_a phi_b on vertex dofs, CSR (V, V)."""
        local = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        vals = self.lengths[:, None, None] * local[None]
        rows = np.repeat(self.nodes, 2, axis=1).ravel()
        cols = np.tile(self.nodes, (1, 2)).ravel()
        n = self.mesh.n_vertices
        return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    def scalar_load(self, data_qp):
        """Line-integral load int_e data phi_a scattered to a vertex vector."""
        contrib = np.einsum("e,q,eq,qa->ea", self.lengths, self.qw, data_qp,
                            self.shape1d)
        vec = np.zeros(self.mesh.n_vertices)
        np.add.at(vec, self.nodes.ravel(), contrib.ravel())
        return vec


def tagged_edge_set(mesh: Mesh2D, geom: MeshGeometry, tag: int) -> EdgeSet:
    idx = mesh.edges_with_tag(tag)
    return EdgeSet(mesh, geom, mesh.boundary_edges[idx], mesh.boundary_tris[idx])


# ---------------------------------------------------------------------------
# species (ADR) side
# ---------------------------------------------------------------------------

class AdrBlocks:
    """Per-subdomain species operators.

    Holds the constant mass matrix, the diffusion matrix evaluated at the
    state it was last assembled from (plus the interface Robin contribution),
    the advection matrix for the current velocity, and evaluators for the
    reaction load and its Jacobian.
    """

    def __init__(self, mesh: Mesh2D, crossdiff: CrossDiffusion, k_robin: float,
                 reaction: Reaction, side: str, geom: MeshGeometry | None = None,
                 quad_degree: int = 2):
        self.mesh = mesh
        self.geom = geom if geom is not None else MeshGeometry(mesh)
        self.crossdiff = crossdiff
        self.k_robin = float(k_robin)
        self.reaction = reaction
        self.side = side
        self.m = crossdiff.n_species
        if reaction.n_species != self.m:
            raise ConfigurationError(
                f"reaction has {reaction.n_species} species, cross-diffusion {self.m}")
        self.quad_degree = quad_degree
        self.dofmap = DofMap(mesh.n_vertices, mesh.n_triangles, self.m)

        g = self.geom
        self.mass_scalar = g.scalar_csr(kernels.p1_mass(g.area))
        self.mass = sp.kron(sp.identity(self.m, format="csr"), self.mass_scalar,
                            format="csr")
        self.sigma_edges = tagged_edge_set(mesh, g, SIGMA)
        self.b_sigma = self.sigma_edges.scalar_mass()
        self.advection = self.attach_velocity(None)
        self.diffusion = None  # set by refresh_diffusion

    def species_qp(self, w):
        """Species values at volume quadrature points, shape (T, Q, m)."""
        V = self.mesh.n_vertices
        rule = self.geom.rule(self.quad_degree)
        out = np.empty((self.mesh.n_triangles, rule.points.shape[0], self.m))
        for i in range(self.m):
            out[:, :, i] = self.geom.interp_qp(w[i * V:(i + 1) * V], self.quad_degree)
        return out

    def refresh_diffusion(self, w):
        """Reassemble the diffusion matrix at state ``w`` (includes Robin K term)."""
        g = self.geom
        rule = g.rule(self.quad_degree)
        blocks = [[None] * self.m for _ in range(self.m)]
        if self.crossdiff.is_constant:
            M = crossdiff_eval(np.zeros(self.m), self.crossdiff)
            for i in range(self.m):
                for j in range(self.m):
                    if M[i, j] != 0.0:
                        coeff = np.full(self.mesh.n_triangles, M[i, j])
                        blocks[i][j] = g.scalar_csr(
                            kernels.p1_stiffness(g.area, g.grads, coeff))
        else:
            w_qp = self.species_qp(w)
            M_qp = crossdiff_eval(w_qp, self.crossdiff)  # (T, Q, m, m)
            # constant P1 gradients: only the quadrature average of each
            # coefficient enters the stiffness integral
            w2 = 2.0 * rule.weights
            M_bar = np.einsum("q,tqij->tij", w2, M_qp)
            for i in range(self.m):
                for j in range(self.m):
                    if np.any(M_bar[:, i, j]):
                        blocks[i][j] = g.scalar_csr(
                            kernels.p1_stiffness(g.area, g.grads, M_bar[:, i, j]))
        diff = sp.bmat(blocks, format="csr")
        if self.k_robin != 0.0:
            diff = diff + self.k_robin * sp.kron(
                sp.identity(self.m, format="csr"), self.b_sigma, format="csr")
        self.diffusion = diff
        return diff

    def attach_velocity(self, velocity):
        """Assemble the advection matrix for a nodal velocity field (or zero)."""
        if velocity is None or not np.any(velocity):
            n = self.m * self.mesh.n_vertices
            self.advection = sp.csr_matrix((n, n))
            return self.advection
        g = self.geom
        rule = g.rule(self.quad_degree)
        vel_qp = np.empty((self.mesh.n_triangles, rule.points.shape[0], 2))
        vel_qp[:, :, 0] = g.interp_qp(velocity[:, 0], self.quad_degree)
        vel_qp[:, :, 1] = g.interp_qp(velocity[:, 1], self.quad_degree)
        local = kernels.p1_advection(g.area, g.grads, vel_qp, rule.points, rule.weights)
        c_scalar = g.scalar_csr(local)
        self.advection = sp.kron(sp.identity(self.m, format="csr"), c_scalar,
                                 format="csr")
        return self.advection

    def reaction_load(self, w):
        """Galerkin vector of the reaction kinetics at nodal state ``w``."""
        g = self.geom
        rule = g.rule(self.quad_degree)
        rates = self.reaction.rate(self.species_qp(w), self.side)  # (T, Q, m)
        V = self.mesh.n_vertices
        out = np.empty(self.m * V)
        for i in range(self.m):
            local = kernels.p1_load(g.area, rates[:, :, i], rule.points, rule.weights)
            out[i * V:(i + 1) * V] = g.scalar_load(local)
        return out

    def reaction_jacobian(self, w):
        """Galerkin Jacobian of the reaction kinetics at nodal state ``w``."""
        g = self.geom
        rule = g.rule(self.quad_degree)
        jac = self.reaction.rate_jacobian(self.species_qp(w), self.side)  # (T,Q,m,m)
        blocks = [[None] * self.m for _ in range(self.m)]
        for i in range(self.m):
            for j in range(self.m):
                if np.any(jac[:, :, i, j]):
                    local = kernels.p1_mass_coeff(g.area, jac[:, :, i, j],
                                                  rule.points, rule.weights)
                    blocks[i][j] = g.scalar_csr(local)
        n = self.m * self.mesh.n_vertices
        if all(b is None for row in blocks for b in row):
            return sp.csr_matrix((n, n))
        return sp.bmat(blocks, format="csr")


def assemble_adr(mesh: Mesh2D, crossdiff: CrossDiffusion, k_robin: float,
                 velocity, w, reaction: Reaction, side: str = "D",
                 quad_degree: int = 2) -> AdrBlocks:
    """Assemble all species-side operators at state ``w`` and given velocity."""
    blocks = AdrBlocks(mesh, crossdiff, k_robin, reaction, side,
                       quad_degree=quad_degree)
    blocks.refresh_diffusion(w)
    blocks.attach_velocity(velocity)
    return blocks


# ---------------------------------------------------------------------------
# elasticity side
# ---------------------------------------------------------------------------

class ElasticityBlocks:
    """Mixed displacement/pressure operators for one subdomain.

    ``A`` carries the strain energy plus Robin surface terms, ``B`` the
    pressure/divergence coupling and ``C`` the pressure mass scaled by the
    inverse first Lame parameter.  Dirichlet dofs on clamped edges are
    eliminated symmetrically; a reusable saddle factorization lives on the
    free dofs.
    """

    def __init__(self, mesh: Mesh2D, mu: float, lam: float,
                 alpha_gamma: float = 0.0, j_sigma: float = 0.0,
                 dirichlet=None, geom: MeshGeometry | None = None,
                 quad_degree: int = 6):
        self.mesh = mesh
        self.geom = geom if geom is not None else MeshGeometry(mesh)
        self.mu = float(mu)
        self.lam = float(lam)
        self.dofmap = DofMap(mesh.n_vertices, mesh.n_triangles, 0)
        g = self.geom
        rule = g.rule(quad_degree)

        a_loc, b_loc = kernels.mini_elasticity(g.area, g.grads, self.mu,
                                               rule.points, rule.weights)
        n_u = self.dofmap.n_displacement
        n_p = self.dofmap.n_pressure
        udofs = self._local_u_dofs()                      # (T, 8)
        rows = np.repeat(udofs, 8, axis=1).ravel()
        cols = np.tile(udofs, (1, 8)).ravel()
        A = sp.coo_matrix((a_loc.ravel(), (rows, cols)), shape=(n_u, n_u)).tocsr()
        prow = np.repeat(mesh.triangles, 8, axis=1).ravel()
        pcol = np.tile(udofs, (1, 3)).ravel()
        B = sp.coo_matrix((b_loc.ravel(), (prow, pcol)), shape=(n_p, n_u)).tocsr()
        C = (1.0 / self.lam) * g.scalar_csr(kernels.p1_mass(g.area))

        self.gamma_edges = tagged_edge_set(mesh, g, GAMMA)
        self.sigma_edges = tagged_edge_set(mesh, g, SIGMA)
        if alpha_gamma != 0.0:
            if self.gamma_edges.n_edges == 0:
                raise ConfigurationError("Robin coefficient given but mesh has no gamma edges")
            A = A + alpha_gamma * self._vector_edge_mass(self.gamma_edges, n_u)
        if j_sigma != 0.0:
            if self.sigma_edges.n_edges == 0:
                raise ConfigurationError("interface weight given but mesh has no sigma edges")
            A = A + j_sigma * self._vector_edge_mass(self.sigma_edges, n_u)
        self.A, self.B, self.C = A, B, C
        self.alpha_gamma = float(alpha_gamma)
        self.j_sigma = float(j_sigma)

        clamped = tagged_edge_set(mesh, g, CLAMPED)
        bc_vertices = np.unique(clamped.nodes.ravel())
        self.bc_dofs = np.sort(np.concatenate([2 * bc_vertices, 2 * bc_vertices + 1]))
        if dirichlet is None:
            self.bc_vals = np.zeros(self.bc_dofs.shape[0])
        else:
            vals = np.asarray(dirichlet(mesh.vertices[bc_vertices]), dtype=float)
            bc = np.empty(self.bc_dofs.shape[0])
            bc[0::2] = vals[:, 0]
            bc[1::2] = vals[:, 1]
            # bc_dofs sorted as (2v, 2v+1) pairs in vertex order already
            self.bc_vals = bc
        mask = np.ones(n_u, dtype=bool)
        mask[self.bc_dofs] = False
        self.free = np.flatnonzero(mask)

        A_ff = self.A[self.free][:, self.free]
        B_f = self.B[:, self.free]
        self.saddle = SaddleSystem(A_ff, B_f, self.C)
        self._corr_u = self.A[self.free][:, self.bc_dofs] @ self.bc_vals
        self._corr_p = self.B[:, self.bc_dofs] @ self.bc_vals

    def _local_u_dofs(self):
        tris = self.mesh.triangles
        nt = tris.shape[0]
        V = self.mesh.n_vertices
        dofs = np.empty((nt, 8), dtype=np.int64)
        dofs[:, 0:6:2] = 2 * tris
        dofs[:, 1:6:2] = 2 * tris + 1
        dofs[:, 6] = 2 * V + 2 * np.arange(nt)
        dofs[:, 7] = 2 * V + 2 * np.arange(nt) + 1
        return dofs

    @staticmethod
    def _vector_edge_mass(edges: EdgeSet, n_u):
        scal = edges.scalar_mass().tocoo()
        rows = np.concatenate([2 * scal.row, 2 * scal.row + 1])
        cols = np.concatenate([2 * scal.col, 2 * scal.col + 1])
        vals = np.concatenate([scal.data, scal.data])
        return sp.coo_matrix((vals, (rows, cols)), shape=(n_u, n_u)).tocsr()

    def solve(self, load):
        """Solve the saddle system for a full-size displacement load."""
        F_f = load[self.free] - self._corr_u
        u_f, p = self.saddle.solve(F_f, -self._corr_p)
        u = np.empty(self.dofmap.n_displacement)
        u[self.free] = u_f
        u[self.bc_dofs] = self.bc_vals
        return u, p

    def surface_load(self, edges: EdgeSet, data_qp):
        """Load of vector-valued edge data against displacement test functions.

        ``data_qp`` has shape (E, Q, 2); bubbles vanish on edges, so only
        vertex dofs receive contributions.
        """
        out = np.zeros(self.dofmap.n_displacement)
        for c in range(2):
            out[c:2 * self.mesh.n_vertices:2] += edges.scalar_load(data_qp[:, :, c])
        return out

    def displacement_gradient_qp(self, u, edges: EdgeSet):
        """Gradient tensor of the enriched displacement at edge quadrature
        points, shape (E, Q, 2, 2) with entries (du_c / dx_d)."""
        V = self.mesh.n_vertices
        tris = self.mesh.triangles[edges.tris]               # (E, 3)
        g = self.geom.grads[edges.tris]                      # (E, 3, 2)
        grad = np.zeros((edges.n_edges, edges.bary.shape[1], 2, 2))
        for c in range(2):
            nodal = u[c:2 * V:2]
            grad_vert = np.einsum("ea,ead->ed", nodal[tris], g)
            grad[:, :, c, :] = grad_vert[:, None, :]
        # bubble gradients at the edge quadrature points (barycentric varies per edge)
        lam = edges.bary                                     # (E, Q, 3)
        bg = 27.0 * (lam[..., 1, None] * lam[..., 2, None] * g[:, None, 0, :]
                     + lam[..., 0, None] * lam[..., 2, None] * g[:, None, 1, :]
                     + lam[..., 0, None] * lam[..., 1, None] * g[:, None, 2, :])
        for c in range(2):
            coeff = u[2 * V + 2 * edges.tris + c]            # (E,)
            grad[:, :, c, :] += coeff[:, None, None] * bg
        return grad

    def stress_qp(self, u, p, edges: EdgeSet):
        """Cauchy stress 2 mu eps(u) - p I at edge quadrature points, (E, Q, 2, 2)."""
        grad = self.displacement_gradient_qp(u, edges)
        eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
        p_qp = edges.values_qp(p)
        stress = 2.0 * self.mu * eps
        stress[:, :, 0, 0] -= p_qp
        stress[:, :, 1, 1] -= p_qp
        return stress

    def displacement_qp(self, u, edges: EdgeSet):
        """Displacement values at edge quadrature points (bubble vanishes), (E, Q, 2)."""
        V = self.mesh.n_vertices
        out = np.empty((edges.n_edges, edges.bary.shape[1], 2))
        for c in range(2):
            out[:, :, c] = edges.values_qp(u[c:2 * V:2])
        return out


def assemble_elasticity(mesh: Mesh2D, mu: float, lam: float, robin=None,
                        dirichlet=None, quad_degree: int = 6) -> ElasticityBlocks:
    """Assemble the mixed elasticity blocks.

    ``robin`` is a mapping with optional keys ``alpha`` (exposed surface) and
    ``j`` (interface weight).
    """
    robin = robin or {}
    return ElasticityBlocks(mesh, mu, lam, alpha_gamma=robin.get("alpha", 0.0),
                            j_sigma=robin.get("j", 0.0), dirichlet=dirichlet,
                            quad_degree=quad_degree)


# ---------------------------------------------------------------------------
# coupling loads
# ---------------------------------------------------------------------------

def coupling_force_load(blocks: ElasticityBlocks, w, m: int, c_f: float):
    """Elasticity load of c_f * sum_i grad w_i against MINI test functions."""
    g = blocks.geom
    mesh = blocks.mesh
    V = mesh.n_vertices
    grad_sum = np.zeros((mesh.n_triangles, 2))
    for i in range(m):
        grad_sum += g.p1_gradient(w[i * V:(i + 1) * V])
    grad_sum *= c_f
    out = np.zeros(blocks.dofmap.n_displacement)
    per_tri = (g.area[:, None] / 3.0) * grad_sum  # (T, 2): equal share per vertex
    for c in range(2):
        vec = np.zeros(V)
        np.add.at(vec, mesh.triangles.ravel(), np.repeat(per_tri[:, c], 3))
        out[c:2 * V:2] = vec
    bub = BUBBLE_INTEGRAL * g.area[:, None] * grad_sum  # (T, 2)
    out[2 * V + 0::2] = bub[:, 0]
    out[2 * V + 1::2] = bub[:, 1]
    return out


def dilation_source_load(adr: AdrBlocks, elast: ElasticityBlocks, u, c_g: float):
    """Species load of c_g * div(u) applied identically to every species."""
    g = adr.geom
    mesh = adr.mesh
    V = mesh.n_vertices
    rule = g.rule(adr.quad_degree)
    nq = rule.points.shape[0]
    div_qp = np.zeros((mesh.n_triangles, nq))
    for c in range(2):
        nodal = u[c:2 * V:2]
        grad_vert = np.einsum("ta,tad->td", nodal[mesh.triangles], g.grads)
        div_qp += grad_vert[:, c][:, None]
    bg = kernels.bubble_grads_qp(g.grads, rule.points)  # (T, Q, 2)
    for c in range(2):
        coeff = u[2 * V + c::2]
        div_qp += coeff[:, None] * bg[:, :, c]
    local = kernels.p1_load(g.area, c_g * div_qp, rule.points, rule.weights)
    vec = g.scalar_load(local)
    return np.tile(vec, adr.m)


def assemble_coupling_loads(adr: AdrBlocks, elast: ElasticityBlocks, w, u,
                            c_f: float, c_g: float):
    """Both two-way coupling loads: (elasticity force load, species source load)."""
    if w.shape[0] != adr.m * adr.mesh.n_vertices:
        raise ValueError("species vector does not match the dof map")
    if u.shape[0] != elast.dofmap.n_displacement:
        raise ValueError("displacement vector does not match the dof map")
    return (coupling_force_load(elast, w, adr.m, c_f),
            dilation_source_load(adr, elast, u, c_g))


# ---------------------------------------------------------------------------
# interface transmission
# ---------------------------------------------------------------------------

class InterfaceCache:
    """Edge caches for both sides of the matched interface.

    ``side_out[s]`` holds an :class:`EdgeSet` on mesh ``s`` whose normals are
    the outward normals of that side (D: the D-to-E normal, E: its negation).
    """

    def __init__(self, mesh_d: Mesh2D, mesh_e: Mesh2D, imap: InterfaceMap,
                 geom_d: MeshGeometry, geom_e: MeshGeometry):
        self.imap = imap
        self.sets = {
            "D": EdgeSet(mesh_d, geom_d, imap.edges_d, imap.tris_d, imap.normals),
            "E": EdgeSet(mesh_e, geom_e, imap.edges_e, imap.tris_e, -imap.normals),
        }

    def opposite(self, side: str) -> str:
        return "E" if side == "D" else "D"


def adr_interface_trace(adr: AdrBlocks, edges: EdgeSet, w):
    """Species values and normal fluxes of one side on the interface.

    Returns ``(values, flux)`` with shapes (E, Q, m); the flux is
    ``(M(w) grad w) . n`` with this side's outward normal ``n``.
    """
    V = adr.mesh.n_vertices
    m = adr.m
    nq = edges.bary.shape[1]
    vals = np.empty((edges.n_edges, nq, m))
    grads = np.empty((edges.n_edges, m, 2))
    tris = adr.mesh.triangles[edges.tris]
    g = adr.geom.grads[edges.tris]
    for i in range(m):
        nodal = w[i * V:(i + 1) * V]
        vals[:, :, i] = edges.values_qp(nodal)
        grads[:, i, :] = np.einsum("ea,ead->ed", nodal[tris], g)
    M = crossdiff_eval(vals, adr.crossdiff, check_pd=False)   # (E, Q, m, m)
    flux_vec = np.einsum("eqij,ejd->eqid", M, grads)          # (E, Q, m, 2)
    flux = np.einsum("eqid,ed->eqi", flux_vec, edges.normals)
    return vals, flux


def adr_transmission_load(adr_self: AdrBlocks, adr_opp: AdrBlocks,
                          iface: InterfaceCache, side: str, w_opp,
                          jump_qp=None):
    """Robin transmission load for the species system of ``side``.

    The load tests ``-(M^dag grad w^dag) . n_dag + K^side w^dag`` on the
    interface, i.e. the opposite flux rewritten along this side's outward
    normal plus this side's Robin weight times the opposite trace.  At the
    converged fixed point this enforces flux continuity together with the
    Robin identity.  ``jump_qp`` (E, Q, m) adds known flux-jump data
    (manufactured-solution runs with heterogeneous diffusion).
    """
    edges_self = iface.sets[side]
    edges_opp = iface.sets[iface.opposite(side)]
    vals, flux_opp = adr_interface_trace(adr_opp, edges_opp, w_opp)
    data = -flux_opp + adr_self.k_robin * vals
    if jump_qp is not None:
        data = data + jump_qp
    V = adr_self.mesh.n_vertices
    out = np.empty(adr_self.m * V)
    for i in range(adr_self.m):
        out[i * V:(i + 1) * V] = edges_self.scalar_load(data[:, :, i])
    return out


def elasticity_interface_trace(elast: ElasticityBlocks, edges: EdgeSet, u, p):
    """Displacement values and tractions (sigma . n) of one side, (E, Q, 2)."""
    disp = elast.displacement_qp(u, edges)
    stress = elast.stress_qp(u, p, edges)
    traction = np.einsum("eqcd,ed->eqc", stress, edges.normals)
    return disp, traction


def elasticity_transmission_load(el_self: ElasticityBlocks, el_opp: ElasticityBlocks,
                                 iface: InterfaceCache, side: str, u_opp, p_opp,
                                 jump_qp=None):
    """Transmission load for the elasticity system of ``side`` (see ADR variant)."""
    edges_self = iface.sets[side]
    edges_opp = iface.sets[iface.opposite(side)]
    disp, traction_opp = elasticity_interface_trace(el_opp, edges_opp, u_opp, p_opp)
    data = -traction_opp + el_self.j_sigma * disp
    if jump_qp is not None:
        data = data + jump_qp
    return el_self.surface_load(edges_self, data)


def transmission_rhs(side: str, opposite_state, adr_pair, elast_pair,
                     iface: InterfaceCache, jumps=None):
    """Both transmission loads for ``side`` given the opposite side's state.

    ``opposite_state`` is ``(w, u, p)``; ``adr_pair`` / ``elast_pair`` are
    ``{'D': ..., 'E': ...}`` operator mappings; ``jumps`` optionally holds
    ``{'adr': (E, Q, m), 'elast': (E, Q, 2)}`` known jump data.
    """
    w_opp, u_opp, p_opp = opposite_state
    opp = "E" if side == "D" else "D"
    jumps = jumps or {}
    adr_load = adr_transmission_load(adr_pair[side], adr_pair[opp], iface, side,
                                     w_opp, jumps.get("adr"))
    el_load = elasticity_transmission_load(elast_pair[side], elast_pair[opp],
                                           iface, side, u_opp, p_opp,
                                           jumps.get("elast"))
    return adr_load, el_load

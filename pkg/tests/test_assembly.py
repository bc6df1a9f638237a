import numpy as np
import pytest
import scipy.sparse as sp

from mechanochem import assembly as asm
from mechanochem import kinetics as kin
from mechanochem import mesh as msh
from mechanochem.errors import ConfigurationError


def bilayer(nx=4, ny_d=4, ny_e=2):
    return msh.build_bilayer((0, 1, 0, 1), (0, 1, 1, 1.4), nx, ny_d, ny_e)


def make_adr(mesh, k_robin=0.0, crossdiff=None, reaction=None, velocity=None,
             w=None):
    cd = crossdiff or kin.CrossDiffusion(np.diag([1.0, 30.0]))
    rx = reaction or kin.NoReaction(cd.n_species)
    if w is None:
        w = np.ones(cd.n_species * mesh.n_vertices)
    return asm.assemble_adr(mesh, cd, k_robin, velocity, w, rx, mesh.subdomain)


class TestAdrAssembly:
    def test_mass_is_spd_and_state_independent(self):
        md, _, _ = bilayer()
        adr = make_adr(md)
        M = adr.mass.toarray()
        assert np.allclose(M, M.T, atol=1e-14)
        assert np.linalg.eigvalsh(M).min() > 0.0
        # total measure: 1^T M 1 = m * area
        assert abs(np.ones(M.shape[0]) @ adr.mass @ np.ones(M.shape[0]) - 2.0) < 1e-12

    def test_zero_velocity_gives_zero_advection(self):
        md, _, _ = bilayer()
        adr = make_adr(md)
        assert adr.advection.nnz == 0

    def test_diffusion_row_sums_vanish_for_zero_flux(self):
        md, _, _ = bilayer()
        cd = kin.CrossDiffusion(np.array([[1.0, 0.3], [2.0, 30.0]]))
        adr = make_adr(md, k_robin=0.0, crossdiff=cd)
        ones = np.ones(adr.diffusion.shape[0])
        assert np.max(np.abs(adr.diffusion @ ones)) < 1e-12

    def test_diffusion_symmetry_follows_tensor(self):
        md, _, _ = bilayer()
        sym = make_adr(md, crossdiff=kin.CrossDiffusion(np.array([[1.0, 0.5],
                                                                  [0.5, 30.0]])))
        D = sym.diffusion.toarray()
        assert np.allclose(D, D.T, atol=1e-12)
        asym = make_adr(md, crossdiff=kin.CrossDiffusion(np.array([[1.0, 0.5],
                                                                   [0.1, 30.0]])))
        assert not np.allclose(asym.diffusion.toarray(), asym.diffusion.toarray().T)

    def test_interface_robin_contribution(self):
        md, _, _ = bilayer()
        base = make_adr(md, k_robin=0.0)
        robin = make_adr(md, k_robin=2.5)
        diff = (robin.diffusion - base.diffusion)
        expected = 2.5 * sp.kron(sp.identity(2), base.b_sigma)
        assert abs(diff - expected).max() < 1e-13
        # row sums of the Robin part reproduce K * interface length
        ones = np.ones(diff.shape[0])
        assert abs(ones @ diff @ ones - 2.5 * 2 * 1.0) < 1e-12

    def test_nonlinear_diffusion_depends_on_state(self):
        md, _, _ = bilayer()
        cd = kin.CrossDiffusion(np.diag([1.0, 30.0]), kind="nonlinear",
                                eta=np.array([[0.5, 0.0], [0.0, 0.0]]))
        V = md.n_vertices
        adr = make_adr(md, crossdiff=cd, w=np.ones(2 * V))
        d1 = adr.diffusion.copy()
        adr.refresh_diffusion(2.0 * np.ones(2 * V))
        # first species block scales as (1 + 0.5 w1)
        blk1 = adr.diffusion[:V, :V]
        blk0 = d1[:V, :V]
        assert np.allclose(blk1.toarray(), (2.0 / 1.5) * blk0.toarray(), atol=1e-12)

    def test_reaction_jacobian_matches_finite_differences(self):
        md, _, _ = bilayer(3, 3, 2)
        params = {"D": kin.GMParams(rho0=0.2, rho1=1.0, rho2=1.3, rho3=0.4,
                                    rho4=0.9, rho5=1.1)}
        params["E"] = params["D"]
        adr = make_adr(md, reaction=kin.GiererMeinhardt(params),
                       w=None)
        rng = np.random.default_rng(4)
        w = rng.uniform(0.5, 2.0, 2 * md.n_vertices)
        J = adr.reaction_jacobian(w)
        v = rng.normal(size=w.shape[0])
        h = 1e-6
        fd = (adr.reaction_load(w + h * v) - adr.reaction_load(w - h * v)) / (2 * h)
        Jv = J @ v
        assert np.max(np.abs(Jv - fd)) < 1e-6 * max(1.0, np.max(np.abs(Jv)))

    def test_uniform_state_reaction_load_is_mass_weighted(self):
        md, _, _ = bilayer(3, 3, 2)
        gm = kin.GiererMeinhardt({"D": kin.GMParams(), "E": kin.GMParams()})
        adr = make_adr(md, reaction=gm)
        ss = kin.gm_steady_state(kin.GMParams())
        V = md.n_vertices
        w = np.concatenate([np.full(V, ss[0]), np.full(V, ss[1])])
        assert np.max(np.abs(adr.reaction_load(w))) < 1e-12


class TestElasticityAssembly:
    def test_zero_load_zero_solution(self):
        mesh = msh.rectangle_mesh((0, 1, 0, 1), 1, 1)
        blocks = asm.assemble_elasticity(mesh, mu=1.0, lam=10.0)
        u, p = blocks.solve(np.zeros(blocks.dofmap.n_displacement))
        assert np.allclose(u, 0.0) and np.allclose(p, 0.0)

    def test_rigid_translation_has_zero_energy(self):
        mesh = msh.rectangle_mesh((0, 2, 0, 1), 3, 2)
        blocks = asm.assemble_elasticity(mesh, mu=3.0, lam=10.0)
        V = mesh.n_vertices
        u = np.zeros(blocks.dofmap.n_displacement)
        u[0:2 * V:2] = 1.0
        u[1:2 * V:2] = -0.7
        assert abs(u @ blocks.A @ u) < 1e-12 * max(1.0, np.abs(blocks.A.data).max())

    def test_patch_test_linear_field(self):
        mesh = msh.rectangle_mesh((0, 1, 0, 1), 2, 2)
        lam = 7.0
        blocks = asm.assemble_elasticity(mesh, mu=2.0, lam=lam,
                                         dirichlet=lambda x: x)
        u, p = blocks.solve(np.zeros(blocks.dofmap.n_displacement))
        V = mesh.n_vertices
        assert np.allclose(u[0:2 * V:2], mesh.vertices[:, 0], atol=1e-10)
        assert np.allclose(u[1:2 * V:2], mesh.vertices[:, 1], atol=1e-10)
        assert np.max(np.abs(u[2 * V:])) < 1e-10       # no bubble activation
        assert np.allclose(p, -2.0 * lam, atol=1e-8)   # p = -lam div u

    def test_b_annihilates_translations_without_bc(self):
        mesh = msh.rectangle_mesh((0, 1, 0, 1), 3, 3)
        blocks = asm.assemble_elasticity(mesh, mu=1.0, lam=5.0)
        V = mesh.n_vertices
        u = np.zeros(blocks.dofmap.n_displacement)
        u[0:2 * V:2] = 2.0
        assert np.max(np.abs(blocks.B @ u)) < 1e-13

    def test_missing_gamma_tag_rejected(self):
        mesh = msh.rectangle_mesh((0, 1, 0, 1), 2, 2)  # all edges clamped
        with pytest.raises(ConfigurationError):
            asm.assemble_elasticity(mesh, mu=1.0, lam=1.0, robin={"alpha": 2.5})

    def test_robin_terms_only_touch_surface_vertices(self):
        _, me, _ = bilayer()
        plain = asm.assemble_elasticity(me, mu=1.0, lam=1.0)
        robin = asm.assemble_elasticity(me, mu=1.0, lam=1.0,
                                        robin={"alpha": 2.0, "j": 3.0})
        diff = (robin.A - plain.A).tocoo()
        touched = set(diff.row) | set(diff.col)
        V = me.n_vertices
        surf = set(me.boundary_edges[me.edges_with_tag(msh.GAMMA)].ravel()) | \
            set(me.boundary_edges[me.edges_with_tag(msh.SIGMA)].ravel())
        expected = {2 * v for v in surf} | {2 * v + 1 for v in surf}
        assert touched <= expected

    def test_inf_sup_stable_under_refinement(self):
        from scipy.linalg import eigh

        betas = []
        for nx in (4, 8):
            mesh = msh.rectangle_mesh((0, 1, 0, 1), nx, nx)
            blocks = asm.assemble_elasticity(mesh, mu=0.5, lam=1.0)
            A = blocks.A[blocks.free][:, blocks.free].toarray()
            B = blocks.B[:, blocks.free].toarray()
            Mp = (blocks.lam * blocks.C).toarray()  # pressure mass
            S = B @ np.linalg.solve(A, B.T)
            eig = eigh(S, Mp, eigvals_only=True)
            # fully clamped boundary: the constant pressure is orthogonal to
            # every discrete divergence, so the inf-sup constant is the first
            # eigenvalue beyond that hydrostatic mode
            assert abs(eig[0]) < 1e-10
            betas.append(np.sqrt(max(eig[1], 0.0)))
        assert betas[0] > 0.05
        assert betas[1] >= 0.75 * betas[0]


class TestCouplingLoads:
    def test_constant_species_no_force(self):
        md, _, _ = bilayer()
        adr = make_adr(md)
        el = asm.assemble_elasticity(md, mu=1.0, lam=1.0)
        w = np.ones(2 * md.n_vertices)
        F, _ = asm.assemble_coupling_loads(adr, el, w, np.zeros(el.dofmap.n_displacement),
                                           c_f=5.0, c_g=1.0)
        assert np.max(np.abs(F)) < 1e-14

    def test_divergence_free_displacement_no_source(self):
        md, _, _ = bilayer()
        adr = make_adr(md)
        el = asm.assemble_elasticity(md, mu=1.0, lam=1.0)
        V = md.n_vertices
        u = np.zeros(el.dofmap.n_displacement)
        u[0:2 * V:2] = md.vertices[:, 1]  # u = (y, 0), div u = 0
        _, g = asm.assemble_coupling_loads(adr, el, np.ones(2 * V), u,
                                           c_f=0.0, c_g=3.0)
        assert np.max(np.abs(g)) < 1e-13

    def test_linear_species_constant_force_oracle(self):
        md, _, _ = bilayer(3, 3, 2)
        adr = make_adr(md)
        el = asm.assemble_elasticity(md, mu=1.0, lam=1.0)
        V = md.n_vertices
        w = np.concatenate([md.vertices[:, 0], np.ones(V)])  # w1 = x, w2 = 1
        F, _ = asm.assemble_coupling_loads(adr, el, w, np.zeros(el.dofmap.n_displacement),
                                           c_f=1.0, c_g=0.0)
        # oracle: load of the constant force (1, 0) against MINI test functions
        area = adr.geom.area
        oracle = np.zeros_like(F)
        for t, tri in enumerate(md.triangles):
            for a in tri:
                oracle[2 * a] += area[t] / 3.0
            oracle[2 * V + 2 * t] += asm.BUBBLE_INTEGRAL * area[t]
        assert np.allclose(F, oracle, atol=1e-13)

    def test_size_mismatch_rejected(self):
        md, _, _ = bilayer()
        adr = make_adr(md)
        el = asm.assemble_elasticity(md, mu=1.0, lam=1.0)
        with pytest.raises(ValueError):
            asm.assemble_coupling_loads(adr, el, np.ones(3), np.zeros(4), 1.0, 1.0)


class TestTransmission:
    def setup_method(self):
        self.md, self.me, self.imap = bilayer(4, 4, 2)
        self.adr_d = make_adr(self.md, k_robin=1.0)
        self.adr_e = make_adr(self.me, k_robin=1.0)
        self.iface = asm.InterfaceCache(self.md, self.me, self.imap,
                                        self.adr_d.geom, self.adr_e.geom)
        self.adr = {"D": self.adr_d, "E": self.adr_e}

    def test_zero_state_zero_load(self):
        load = asm.adr_transmission_load(self.adr_d, self.adr_e, self.iface, "D",
                                         np.zeros(2 * self.me.n_vertices))
        assert np.all(load == 0.0)

    def test_constant_state_zero_robin_weight(self):
        adr_d0 = make_adr(self.md, k_robin=0.0)
        adr_e0 = make_adr(self.me, k_robin=0.0)
        load = asm.adr_transmission_load(adr_d0, adr_e0, self.iface, "D",
                                         np.full(2 * self.me.n_vertices, 3.0))
        assert np.max(np.abs(load)) < 1e-13

    def test_robin_identity_continuous_field_equal_materials(self):
        # both sides share the tensor; evaluate R = M grad w . nu + K w from
        # each side for one globally smooth interpolated field
        def smooth(x, y):
            return np.sin(x + 0.3) * np.cos(0.5 * y)

        mismatches = []
        for nx in (4, 8):
            md, me, imap = msh.build_bilayer((0, 1, 0, 1), (0, 1, 1, 1.4),
                                             nx, nx, max(1, int(0.4 * nx)))
            ad = make_adr(md, k_robin=1.0)
            ae = make_adr(me, k_robin=1.0)
            iface = asm.InterfaceCache(md, me, imap, ad.geom, ae.geom)
            wd = np.concatenate([smooth(*md.vertices.T), smooth(*md.vertices.T)])
            we = np.concatenate([smooth(*me.vertices.T), smooth(*me.vertices.T)])
            vals_d, flux_d = asm.adr_interface_trace(ad, iface.sets["D"], wd)
            vals_e, flux_e = asm.adr_interface_trace(ae, iface.sets["E"], we)
            # R_D = flux_D + K w_D (n_D = nu); R_E = -flux_E + K w_E
            r_d = flux_d + 1.0 * vals_d
            r_e = -flux_e + 1.0 * vals_e
            mismatches.append(np.max(np.abs(r_d - r_e)))
        assert mismatches[1] < mismatches[0] / 1.7  # first-order flux consistency

    def test_elasticity_transmission_zero_state(self):
        el_d = asm.assemble_elasticity(self.md, mu=1.0, lam=1.0, robin={"j": 1.0})
        el_e = asm.assemble_elasticity(self.me, mu=2.0, lam=3.0, robin={"j": 1.0})
        load = asm.elasticity_transmission_load(
            el_d, el_e, self.iface, "D",
            np.zeros(el_e.dofmap.n_displacement), np.zeros(el_e.dofmap.n_pressure))
        assert np.all(load == 0.0)

    def test_transmission_rhs_wrapper(self):
        el_d = asm.assemble_elasticity(self.md, mu=1.0, lam=1.0, robin={"j": 1.0})
        el_e = asm.assemble_elasticity(self.me, mu=2.0, lam=3.0, robin={"j": 1.0})
        w_e = np.random.default_rng(0).normal(size=2 * self.me.n_vertices)
        u_e = np.zeros(el_e.dofmap.n_displacement)
        p_e = np.zeros(el_e.dofmap.n_pressure)
        adr_load, el_load = asm.transmission_rhs(
            "D", (w_e, u_e, p_e), self.adr, {"D": el_d, "E": el_e}, self.iface)
        assert adr_load.shape == (2 * self.md.n_vertices,)
        assert el_load.shape == (el_d.dofmap.n_displacement,)
        assert np.any(adr_load != 0.0)

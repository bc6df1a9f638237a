import math

import numpy as np
import pytest

from mechanochem import verification as ver


@pytest.fixture(scope="module")
def case():
    return ver.ManufacturedCase()


def random_points(n=100, seed=3):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(0.05, 0.95, n), rng.uniform(0.05, 1.35, n)])


class TestClosedFormDerivatives:
    """The anti-hallucination oracle: every hand derivative against central FD."""

    H = 1e-5

    def fd_grad(self, f, pts):
        cols = []
        for d in range(2):
            e = np.zeros(2)
            e[d] = self.H
            cols.append((f(pts + e) - f(pts - e)) / (2 * self.H))
        return np.stack(cols, axis=-1)

    def fd_lap(self, f, pts):
        out = 0.0
        for d in range(2):
            e = np.zeros(2)
            e[d] = self.H
            out = out + (f(pts + e) - 2 * f(pts) + f(pts - e)) / self.H**2
        return out

    def test_species_gradient(self, case):
        pts = random_points()
        fd = np.stack([self.fd_grad(lambda p: case.w(p)[..., i], pts)
                       for i in range(2)], axis=-2)
        assert np.max(np.abs(case.grad_w(pts) - fd)) < 1e-6

    def test_species_laplacian(self, case):
        pts = random_points()
        fd = np.stack([self.fd_lap(lambda p: case.w(p)[..., i], pts)
                       for i in range(2)], axis=-1)
        assert np.max(np.abs(case.laplacian_w(pts) - fd)) < 1e-4

    def test_species_laplacian_spot_value(self, case):
        # 13 pi^2 cos(2 pi x) sin(3 pi y) at the quoted point; a larger FD
        # step keeps the second-difference roundoff (4 eps |f| / h^2) below
        # the truncation error
        pt = np.array([[0.25, 0.5]])
        h_save, self.__class__.H = self.H, 1e-4
        try:
            fd = self.fd_lap(lambda p: case.w(p)[..., 0], pt)
        finally:
            self.__class__.H = h_save
        assert abs(case.laplacian_w(pt)[0, 0] - fd[0]) < 1e-7 * 13 * np.pi**2

    def test_displacement_derivatives(self, case):
        pts = random_points()
        fd_g = np.stack([self.fd_grad(lambda p: case.u(p)[..., i], pts)
                         for i in range(2)], axis=-2)
        assert np.max(np.abs(case.grad_u(pts) - fd_g)) < 1e-6
        fd_l = np.stack([self.fd_lap(lambda p: case.u(p)[..., i], pts)
                         for i in range(2)], axis=-1)
        assert np.max(np.abs(case.laplacian_u(pts) - fd_l)) < 1e-4
        fd_gd = self.fd_grad(case.div_u, pts)
        assert np.max(np.abs(case.grad_div_u(pts) - fd_gd)) < 1e-4

    @pytest.mark.parametrize("side", ["D", "E"])
    def test_elasticity_forcing_is_momentum_residual(self, case, side):
        pts = random_points(60)
        mat = case.mats[side]

        def sig_comp(p, c, d):
            return case.stress(side, p)[..., c, d]

        div_sig = np.stack(
            [self.fd_grad(lambda p: sig_comp(p, c, 0), pts)[..., 0]
             + self.fd_grad(lambda p: sig_comp(p, c, 1), pts)[..., 1]
             for c in range(2)], axis=-1)
        expected = -div_sig - mat.c_f * case.grad_w(pts).sum(axis=-2)
        got = case.forcing_elasticity(side, pts)
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(got - expected)) < 1e-5 * scale

    def test_adr_forcing_decoupled_limit(self, case):
        # c_f = 0 reduces the elasticity residual to -div(2 mu eps(u) - p I)
        import dataclasses
        mats = {s: dataclasses.replace(m, c_f=0.0) for s, m in case.mats.items()}
        c0 = ver.ManufacturedCase(mats)
        pts = random_points(20)
        mat = c0.mats["D"]
        expect = (-mat.mu * c0.laplacian_u(pts)
                  - (mat.mu + mat.lam) * c0.grad_div_u(pts))
        assert np.allclose(c0.forcing_elasticity("D", pts), expect)

    def test_time_derivative_term_at_t0(self, case):
        # separable decay: the transient forcing at t=0 differs from the
        # steady one by the time-derivative term -decay * w_tilde
        pts = random_points(20)
        steady = case.forcing_adr("D", pts, t=None)
        transient = case.forcing_adr("D", pts, t=0.0)
        assert np.allclose(transient - steady, -case.decay * case.w(pts),
                           atol=1e-12)

    def test_interface_jumps_vanish_for_equal_materials(self):
        import dataclasses
        mats = ver.example1_materials()
        same = {s: dataclasses.replace(mats["D"]) for s in "DE"}
        c0 = ver.ManufacturedCase(same)
        pts = np.column_stack([np.linspace(0.1, 0.9, 7), np.full(7, 1.0)])
        n = np.tile([[0.0, 1.0]], (7, 1))
        assert np.allclose(c0.adr_jump("D", pts, n), 0.0)
        assert np.allclose(c0.elasticity_jump("D", pts, n), 0.0)

    def test_manufactured_forcing_wrapper(self, case):
        pts = random_points(5)
        f_el, f_w = case.manufactured_forcing("E", pts, t=0.3)
        assert f_el.shape == (5, 2) and f_w.shape == (5, 2)


class TestTransmissionConsistency:
    def test_discrete_data_plus_jumps_approach_exact_robin_data(self, case):
        # with the known material jumps added, the transmission data built
        # from the opposite side's interpolant converges to the exact Robin
        # data of each side (first order: one-sided gradient traces)
        from mechanochem import assembly as asm

        errs = {"D": [], "E": []}
        for nx in (8, 16):
            lvl = ver.SteadyCaseAssembly(case, nx)
            w, u, p = lvl.interpolants()
            for side in ("D", "E"):
                opp = "E" if side == "D" else "D"
                iset_self = lvl.iface.sets[side]
                iset_opp = lvl.iface.sets[opp]
                disp, traction = asm.elasticity_interface_trace(
                    lvl.elast[opp], iset_opp, u[opp], p[opp])
                data = (-traction + case.mats[side].j_sigma * disp
                        + lvl.elast_jump[side])
                x = iset_self.qp_x
                n = np.broadcast_to(iset_self.normals[:, None, :],
                                    x.shape[:2] + (2,))
                exact = np.einsum("eqcd,eqd->eqc", case.stress(side, x), n) \
                    + case.mats[side].j_sigma * case.u(x)
                errs[side].append(np.max(np.abs(data - exact)))
        for side in ("D", "E"):
            assert errs[side][1] < errs[side][0] / 1.6


class TestErrorNorms:
    def test_zero_field_gives_exact_norm(self, case):
        # || w_tilde ||_{L2}^2 over each layer from the closed-form integrals:
        # int (1 -/+ cs)^2 = area + c * int cos^2 sin^2 with the cross term
        # vanishing since int_0^1 cos(2 pi x) dx = 0
        lvl = ver.SteadyCaseAssembly(case, 16)

        def exact_sq(y0, y1, coeff):
            area = y1 - y0
            s2 = 0.5 * (y1 - y0) - (math.sin(6 * math.pi * y1)
                                    - math.sin(6 * math.pi * y0)) / (12 * math.pi)
            return area + coeff * 0.5 * s2

        for side, (y0, y1) in (("D", (0.0, 1.0)), ("E", (1.0, 1.4))):
            w0 = np.zeros(2 * lvl.meshes[side].n_vertices)
            e0, e1 = ver.species_error_norms(lvl.adr[side], w0, case.w, case.grad_w)
            expect = math.sqrt(exact_sq(y0, y1, 1.0) + exact_sq(y0, y1, 0.25))
            assert abs(e0 - expect) < 1e-6 * expect
            assert e1 >= e0

    def test_interpolant_error_is_interpolation_order(self, case):
        e_prev = None
        for nx in (8, 16):
            lvl = ver.SteadyCaseAssembly(case, nx)
            w, u, p = lvl.interpolants()
            e0, _ = ver.species_error_norms(lvl.adr["D"], w[lvl.slices["D"]],
                                            case.w, case.grad_w)
            if e_prev is not None:
                assert e_prev / e0 > 3.0  # ~second order interpolation error
            e_prev = e0

    def test_norm_dominance(self, case):
        lvl = ver.SteadyCaseAssembly(case, 6)
        rng = np.random.default_rng(0)
        w = rng.normal(size=2 * lvl.meshes["D"].n_vertices)
        e0, e1 = ver.species_error_norms(lvl.adr["D"], w, case.w, case.grad_w)
        assert e1 >= e0


class TestForcingConsistency:
    def test_interpolant_residual_decays_under_refinement(self, case):
        # the manufactured loads make the exact fields satisfy the discrete
        # equations up to discretisation error: the assembled residual at the
        # interpolant must shrink with the mesh
        norms = []
        for nx in (6, 12, 24):
            lvl = ver.SteadyCaseAssembly(case, nx)
            w, u, p = lvl.interpolants()
            r = max(np.max(np.abs(lvl.adr_residual(side, w, u)))
                    for side in ("D", "E"))
            norms.append(r)
        assert norms[1] < norms[0]
        assert norms[2] < norms[1]


class TestStudies:
    def test_rate_stabilisation(self):
        res = ver.spatial_convergence_study(levels=4, coarsest_nx=6)
        for key in ("r1_wD", "r0_uD"):
            assert abs(res.rows[-1][key] - res.rows[-2][key]) < 0.15

    def test_spatial_study_smoke(self):
        res = ver.spatial_convergence_study(levels=3, coarsest_nx=4)
        last = res.rows[-1]
        assert 0.7 < last["r1_wD"] < 1.3
        assert 1.5 < last["r0_uD"] < 2.5
        assert last["iter"] <= 6
        assert all(row["iter"] <= 6 for row in res.rows)

    def test_spatial_study_rejects_two_levels(self):
        with pytest.raises(ValueError):
            ver.spatial_convergence_study(levels=2)

    def test_temporal_study_smoke(self):
        res = ver.temporal_convergence_study(levels=3, nx=8, dt0=0.04,
                                             t_final=0.16)
        last = res.rows[-1]
        assert 1.8 < last["r_wD"] < 2.2
        assert 1.8 < last["r_wE"] < 2.2

    def test_csv_roundtrip(self, tmp_path):
        res = ver.spatial_convergence_study(levels=3, coarsest_nx=4)
        path = tmp_path / "rates.csv"
        res.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("dof,h,e1_wD")
        assert len(lines) == 4

    def test_convergence_study_dispatch(self):
        with pytest.raises(ValueError):
            ver.convergence_study("weird", 3)


def test_lame_conversion():
    mu, lam = ver.lame_constants(1000.0, 0.475)
    assert abs(mu - 1000.0 / 2.95) < 1e-10
    assert abs(lam - 1000.0 * 0.475 / (1.475 * 0.05)) < 1e-9

"""Partitioned time advance of the coupled bilayer problem.

Per accepted step the species system is advanced by the TR-BDF2 stepper
(whose Newton loop sweeps D then E, exchanging Robin transmission data after
each side), then the elasticity saddle problems are solved per side with the
species force load and the opposite side's traction transmission, and the
advection velocity is updated by the backward difference of the displacement.
The velocity and the dilation source are frozen over the following step, so
each step sees the advection operator and dilation of the previous solve.

Optional extra Schwarz sweeps re-run the four block solves of the same step,
warm-started, until the interface residuals (species jump and Robin-identity
mismatch) drop below a tolerance; the default is the single pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import assembly as asm
from .errors import ConfigurationError
from .integrator import ControllerParams, StepState, TrBdf2Stepper

SIDES = ("D", "E")


def _opposite(side: str) -> str:
    return "E" if side == "D" else "D"


class BilayerSystem:
    """Species-side ODE system over both subdomains with live transmission.

    Satisfies the partitioned-system protocol of the stepper.  The right side
    of side ``s`` reads the opposite species block straight from the current
    global iterate, so the Gauss-Seidel/Schwarz exchange happens implicitly
    as the Newton loop updates one side after the other.

    Optional hooks (callables, default ``None``) inject manufactured data:

    * ``adr_extra_load(side, t)`` volume/flux forcing vector,
    * ``adr_jump_qp(side, t)`` known interface flux-jump data (E, Q, m),
    * ``elast_extra_load(side, t)`` elasticity forcing incl. surface data,
    * ``elast_jump_qp(side)`` traction jump data (E, Q, 2).
    """

    def __init__(self, meshes, imap, adr, elasticity=None, coupling=None,
                 side_order=SIDES):
        self.sides = tuple(side_order)
        self.meshes = meshes
        self.imap = imap
        self.adr = adr
        self.elast = elasticity or {"D": None, "E": None}
        coupling = coupling or {}
        self.c_f = {s: coupling.get("c_f", {}).get(s, 0.0) for s in SIDES}
        self.c_g = {s: coupling.get("c_g", {}).get(s, 0.0) for s in SIDES}
        self.iface = asm.InterfaceCache(meshes["D"], meshes["E"], imap,
                                        adr["D"].geom, adr["E"].geom)
        self.m = adr["D"].m
        if adr["E"].m != self.m:
            raise ConfigurationError("species counts differ between subdomains")
        self.slices = {}
        offset = 0
        for s in SIDES:
            n = adr[s].m * self.meshes[s].n_vertices
            self.slices[s] = slice(offset, offset + n)
            offset += n
        self.n_total = offset
        self.g_load = {s: np.zeros(self.slices[s].stop - self.slices[s].start)
                       for s in SIDES}
        self.adr_extra_load = None
        self.adr_jump_qp = None
        self.elast_extra_load = None
        self.elast_jump_qp = None
        self.transmission = True  # False: interface data comes via adr_extra_load
        self.n_rhs_evals = 0

    # -- stepper protocol ---------------------------------------------------

    def n_dofs(self, side):
        return self.slices[side].stop - self.slices[side].start

    def mass(self, side):
        return self.adr[side].mass

    def rhs(self, side, w, t):
        self.n_rhs_evals += 1
        blk = self.adr[side]
        wb = w[self.slices[side]]
        out = -(blk.diffusion @ wb) - blk.advection @ wb + blk.reaction_load(wb)
        out += self.g_load[side]
        if self.transmission:
            jump = self.adr_jump_qp(side, t) if self.adr_jump_qp else None
            out += asm.adr_transmission_load(blk, self.adr[_opposite(side)],
                                             self.iface, side,
                                             w[self.slices[_opposite(side)]], jump)
        if self.adr_extra_load is not None:
            out += self.adr_extra_load(side, t)
        return out

    def jacobian(self, side, w, t):
        blk = self.adr[side]
        return (-blk.diffusion - blk.advection
                + blk.reaction_jacobian(w[self.slices[side]]))

    def refresh_operators(self, side, w, t):
        blk = self.adr[side]
        if not blk.crossdiff.is_constant:
            blk.refresh_diffusion(w[self.slices[side]])

    def on_side_updated(self, side, w, t):
        pass  # transmission reads the live iterate

    # -- diagnostics --------------------------------------------------------

    def interface_residuals(self, w):
        """Max-norm species jump and Robin-identity mismatch on the interface."""
        vals_d, flux_d = asm.adr_interface_trace(self.adr["D"], self.iface.sets["D"],
                                                 w[self.slices["D"]])
        vals_e, flux_e = asm.adr_interface_trace(self.adr["E"], self.iface.sets["E"],
                                                 w[self.slices["E"]])
        jump = float(np.max(np.abs(vals_d - vals_e))) if vals_d.size else 0.0
        r_d = flux_d + self.adr["D"].k_robin * vals_d
        r_e = -flux_e + self.adr["E"].k_robin * vals_e
        robin = float(np.max(np.abs(r_d - r_e))) if vals_d.size else 0.0
        return jump, robin

    def total_mass(self, w):
        """1^T M w summed over both subdomains (per-species totals summed)."""
        return sum(float(np.sum(self.adr[s].mass @ w[self.slices[s]])) for s in SIDES)


@dataclass
class BilayerState:
    """Step state of the species system plus the per-side mechanical fields."""

    step: StepState
    u: dict
    p: dict
    v: dict
    n_accepted: int = 0
    interface_log: list = field(default_factory=list)


@dataclass
class SweepReport:
    residuals: list
    converged: bool
    sweeps: int


class BilayerCoupler:
    """Runs the master loop: species step, elasticity solves, velocity feed."""

    def __init__(self, system: BilayerSystem, params: ControllerParams | None = None,
                 mjcontrol: bool = True, adaptive: bool = True, sweeps: int = 1,
                 sweep_tol: float = 0.0, order=SIDES, advection: bool = True):
        self.system = system
        self.stepper = TrBdf2Stepper(system, params, mjcontrol=mjcontrol,
                                     adaptive=adaptive)
        self.sweeps = int(sweeps)
        if self.sweeps < 1:
            raise ValueError("need at least one sweep")
        self.sweep_tol = sweep_tol
        self.order = tuple(order)
        self.advection = advection

    def initial_state(self, w0, t0: float = 0.0, dt0: float = 1e-3) -> BilayerState:
        u = {}
        p = {}
        v = {}
        for s in SIDES:
            el = self.system.elast[s]
            nu = el.dofmap.n_displacement if el is not None else 0
            npr = el.dofmap.n_pressure if el is not None else 0
            u[s] = np.zeros(nu)
            p[s] = np.zeros(npr)
            v[s] = np.zeros((self.system.meshes[s].n_vertices, 2))
        step = self.stepper.initial_state(w0, t0, dt0)
        return BilayerState(step=step, u=u, p=p, v=v)

    # -- elasticity block ----------------------------------------------------

    def _elasticity_load(self, side, state: BilayerState, t):
        sysm = self.system
        el = sysm.elast[side]
        F = asm.coupling_force_load(el, state.step.w[sysm.slices[side]], sysm.m,
                                    sysm.c_f[side])
        opp = _opposite(side)
        jump = sysm.elast_jump_qp(side) if sysm.elast_jump_qp else None
        F += asm.elasticity_transmission_load(el, sysm.elast[opp], sysm.iface, side,
                                              state.u[opp], state.p[opp], jump)
        if sysm.elast_extra_load is not None:
            F += sysm.elast_extra_load(side, t)
        return F

    def solve_elasticity(self, state: BilayerState, dt: float, t: float):
        """Per-side saddle solves and the backward-Euler velocity update."""
        sysm = self.system
        for side in self.order:
            el = sysm.elast[side]
            if el is None:
                continue
            F = self._elasticity_load(side, state, t)
            v = -state.u[side] / dt
            u_new, p_new = el.solve(F)
            v = v + u_new / dt
            state.u[side] = u_new
            state.p[side] = p_new
            V = sysm.meshes[side].n_vertices
            state.v[side] = np.column_stack([v[0:2 * V:2], v[1:2 * V:2]])

    def _refresh_step_inputs(self, state: BilayerState):
        """Freeze advection velocity and dilation source for the next step."""
        sysm = self.system
        for side in SIDES:
            el = sysm.elast[side]
            blk = sysm.adr[side]
            if el is None:
                continue
            if self.advection:
                blk.attach_velocity(state.v[side])
            sysm.g_load[side] = asm.dilation_source_load(blk, el, state.u[side],
                                                         sysm.c_g[side])

    # -- master loop ----------------------------------------------------------

    def advance(self, state: BilayerState, t_end: float | None = None):
        """One accepted step of the full partitioned algorithm."""
        st = state.step
        self.stepper.clamp_dt(st, t_end)
        pre_t, pre_w, pre_wz = st.t, st.w.copy(), st.wz.copy()
        info = self.stepper.step(st)
        dt_used = st.t - pre_t
        self.solve_elasticity(state, dt_used, st.t)
        report = None
        if self.sweeps > 1:
            report = self._extra_sweeps(state, pre_t, pre_w, pre_wz, dt_used, info)
        state.interface_log.append((st.t,) + self.system.interface_residuals(st.w))
        self._refresh_step_inputs(state)
        self.stepper.accept_and_rescale(st, info["err"])
        state.n_accepted += 1
        return info, report

    def _below_tol(self, residuals) -> bool:
        return np.isfinite(self.sweep_tol) and max(residuals) <= self.sweep_tol

    def _extra_sweeps(self, state: BilayerState, pre_t, pre_w, pre_wz, dt, info):
        """Repeat the four-block solve of the current step, warm-started.

        A non-finite tolerance disables the early exit (all sweeps run).
        """
        st = state.step
        tab = self.stepper.tab
        wz_ng = info["wz_ng"]
        wz_new = st.wz
        residuals = [self.system.interface_residuals(st.w)]
        sweeps_done = 1
        shim = StepState(t=pre_t, dt=dt, w=pre_w, wz=pre_wz, sc=st.sc,
                         theta=st.theta, mjcontrol=st.mjcontrol,
                         need_new_rate=False)
        for _ in range(1, self.sweeps):
            if self._below_tol(residuals[-1]):
                break
            t_ng = pre_t + 2.0 * tab.gamma * dt
            w_ng = pre_w + tab.gamma * (pre_wz + wz_ng)
            w_ng, wz_ng, _, rej1 = self.stepper._stage_newton(
                shim, t_ng, w_ng, wz_ng, first_implicit=True)
            w_new = (pre_w + tab.b[0] * pre_wz + tab.b[1] * wz_ng
                     + tab.gamma * wz_new)
            w_new, wz_new, _, rej2 = self.stepper._stage_newton(
                shim, pre_t + dt, w_new, wz_new, first_implicit=False)
            st.w = w_new
            st.wz = wz_new
            self.solve_elasticity(state, dt, pre_t + dt)
            sweeps_done += 1
            residuals.append(self.system.interface_residuals(st.w))
            if rej1 or rej2:
                break
        converged = (not np.isfinite(self.sweep_tol)) or self._below_tol(residuals[-1])
        return SweepReport(residuals=residuals, converged=converged,
                           sweeps=sweeps_done)

    def run(self, state: BilayerState, t_end: float, callback=None,
            max_steps: int = 1_000_000):
        """Advance until ``t_end``; the callback sees the state after each step."""
        while state.step.t < t_end - 1e-12 * max(1.0, abs(t_end)):
            info, _ = self.advance(state, t_end)
            if callback is not None:
                callback(state, info)
            if state.n_accepted >= max_steps:
                break
        return state


def schwarz_sweeps(coupler: BilayerCoupler, state: BilayerState, n_sweeps: int,
                   tol: float = 0.0, t_end: float | None = None):
    """Advance one step with up to ``n_sweeps`` four-block passes.

    Returns the :class:`SweepReport`; non-convergence within the budget is a
    warning condition (``converged`` False), not an error.
    """
    if n_sweeps < 1:
        raise ValueError("n_sweeps must be >= 1")
    old_sweeps, old_tol = coupler.sweeps, coupler.sweep_tol
    coupler.sweeps, coupler.sweep_tol = n_sweeps, tol
    try:
        info, report = coupler.advance(state, t_end)
    finally:
        coupler.sweeps, coupler.sweep_tol = old_sweeps, old_tol
    if report is None:
        res = [coupler.system.interface_residuals(state.step.w)]
        below = np.isfinite(tol) and max(res[-1]) <= tol
        report = SweepReport(residuals=res, converged=below or not np.isfinite(tol),
                             sweeps=1)
    return info, report

"""Adaptive TR-BDF2 time stepping with embedded RK23 error control.

The scheme is a stiffly accurate, L-stable DIRK pair: an explicit first stage
(first-same-as-last), a trapezoidal stage to ``t + 2 gamma dt`` and a
BDF2-like stage to ``t + dt``, both solved by modified Newton iterations that
share one factorized iteration matrix ``M/dt - gamma J``.  Working variables
are the scaled stage derivatives ``wz = dt * M^-1 L(w)``, which are rescaled
whenever the step size changes so that the explicit first stage costs no
right-side evaluation.

Systems are partitioned into "sides" (the two subdomains of the bilayer
problem, or a single block for plain ODEs).  Within every Newton sweep the
sides are relaxed sequentially and a hook fires after each side so the owner
can refresh interface transmission data (the Schwarz pass lives inside the
Newton loop).

Step control: a stage is rejected when its Newton iteration diverges, stalls
or exhausts its budget; the step is rejected when the embedded error estimate
exceeds the relative tolerance.  Stage rejections first retry with fresh
matrices and only then shrink the step; error rejections shrink the step with
the deadbeat controller exponent and flag the iteration matrix for rebuild.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import StateError, StepSizeUnderflow
from .linalg import LuFactor

_SQRT2 = math.sqrt(2.0)
MAX_ATTEMPTS_PER_STEP = 60


@dataclass(frozen=True)
class Tableau:
    """Butcher data of the TR-BDF2 pair plus the stage-3 predictor weights."""

    gamma: float
    a: np.ndarray
    b: np.ndarray
    bhat: np.ndarray
    c: np.ndarray
    p31: float
    p32: float
    p33: float

    def __post_init__(self):
        for name in ("a", "b", "bhat", "c"):
            getattr(self, name).setflags(write=False)

    @property
    def err_weights(self) -> np.ndarray:
        return self.bhat - self.b

    def stability(self, z: complex) -> complex:
        """R(z) = 1 + z b^T (I - z A)^-1 1."""
        k = np.linalg.solve(np.eye(3) - z * self.a, np.ones(3))
        return 1.0 + z * (self.b @ k)


def tableau() -> Tableau:
    """TR-BDF2 coefficients in closed form.

    gamma = (2 - sqrt 2)/2, b2 = (1 - 2 gamma)/(4 gamma) = sqrt2/4,
    bhat2 = 1/(12 gamma (1 - 2 gamma)), bhat3 = (2 - 6 gamma)/(6 (1 - 2 gamma));
    nodes (0, 2 gamma, 1) with the last stage row equal to b (stiff accuracy).
    The predictor extrapolates the derivative of the cubic Hermite interpolant
    of the first two stages to t + dt.
    """
    gamma = (2.0 - _SQRT2) / 2.0
    b2 = (1.0 - 2.0 * gamma) / (4.0 * gamma)
    b = np.array([1.0 - b2 - gamma, b2, gamma])
    bh2 = 1.0 / (12.0 * gamma * (1.0 - 2.0 * gamma))
    bh3 = (2.0 - 6.0 * gamma) / (6.0 * (1.0 - 2.0 * gamma))
    bhat = np.array([1.0 - bh2 - bh3, bh2, bh3])
    a = np.array([
        [0.0, 0.0, 0.0],
        [gamma, gamma, 0.0],
        [b[0], b[1], b[2]],
    ])
    c = np.array([0.0, 2.0 * gamma, 1.0])
    # Hermite derivative extrapolation at theta = 1/(2 gamma):
    # p31 = 3 th^2 - 4 th + 1, p32 = 3 th^2 - 2 th, p33 = 6 (th - th^2)/(2 gamma)
    th = 1.0 / (2.0 * gamma)
    p31 = 3.0 * th * th - 4.0 * th + 1.0
    p32 = 3.0 * th * th - 2.0 * th
    p33 = 6.0 * (th - th * th) / (2.0 * gamma)
    return Tableau(gamma, a, b, bhat, c, p31, p32, p33)


@dataclass
class ControllerParams:
    """Step and Newton controller constants (all overridable per scenario)."""

    dt_max: float = 2000.0
    r_tol: float = 1e-6
    a_tol: float = 1e-3
    tol_newton: float = 1e-6
    kappa_newton: float = 0.5
    max_newton: int = 10
    fac_s1s2: float = 0.3
    fac_min: float = 0.1
    fac: float = 0.25 ** (1.0 / 3.0)
    ratio_min: float = 0.2
    ratio_max: float = 5.0
    k_i: float = 1.0 / 3.0
    eps_t: float = 1e-10

    @property
    def eta(self) -> float:
        """Scale floor A_TOL / R_TOL used in the rescaled maximum norm."""
        return self.a_tol / self.r_tol

    def validate(self):
        positives = ("dt_max", "r_tol", "a_tol", "tol_newton", "kappa_newton",
                     "fac_s1s2", "fac_min", "fac", "ratio_min", "ratio_max",
                     "k_i", "eps_t")
        for name in positives:
            if getattr(self, name) <= 0.0:
                raise ValueError(f"controller parameter {name} must be positive")
        if not (self.ratio_min < 1.0 < self.ratio_max):
            raise ValueError("need ratio_min < 1 < ratio_max")
        if self.max_newton < 1:
            raise ValueError("max_newton must be >= 1")
        return self


def scaled_max_norm(v, sc) -> float:
    """Rescaled maximum norm max_i |v_i| / sc_i."""
    v = np.asarray(v, dtype=float)
    sc = np.asarray(sc, dtype=float)
    if v.shape != sc.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {sc.shape}")
    if v.size == 0:
        return 0.0
    return float(np.max(np.abs(v) / sc))


class NewtonAction(enum.Enum):
    CONVERGED = "converged"
    CONTINUE = "continue"
    REJECT = "reject"


def newton_converged(res_new, res_prev, theta, k, params: ControllerParams,
                     res_min=0.0, need_new_rate=False, first_implicit_stage=True,
                     mjcontrol=True):
    """One evaluation of the Newton stopping criterion.

    ``res_new`` / ``res_prev`` are the scaled max norms of the last two Newton
    increments.  Returns ``(action, theta, need_new_rate)``; ``theta`` is the
    running convergence-rate estimate, reset when a fresh iteration matrix was
    installed (``need_new_rate``) on the first implicit stage.
    """
    kt = params.kappa_newton * params.tol_newton
    if res_new <= res_min:
        return NewtonAction.CONVERGED, theta, need_new_rate
    if k == 0:
        if need_new_rate and first_implicit_stage:
            if mjcontrol:
                need_new_rate = False
            return NewtonAction.CONTINUE, 0.0, need_new_rate
        est = theta / (1.0 - theta) * res_new
        if est <= 0.1 * kt:
            return NewtonAction.CONVERGED, theta, need_new_rate
        return NewtonAction.CONTINUE, theta, need_new_rate
    if res_new > 0.9 * res_prev:
        return NewtonAction.REJECT, theta, need_new_rate
    theta = max(0.9 * theta, res_new / res_prev)
    est = theta / (1.0 - theta) * res_new
    if est <= kt:
        return NewtonAction.CONVERGED, theta, need_new_rate
    if k == params.max_newton:
        return NewtonAction.REJECT, theta, need_new_rate
    if kt < est * theta ** (params.max_newton - k):
        return NewtonAction.REJECT, theta, need_new_rate
    return NewtonAction.CONTINUE, theta, need_new_rate


@dataclass
class StepState:
    """Mutable stepper state: time, step size, solution, stage derivative, flags."""

    t: float
    dt: float
    w: np.ndarray
    wz: np.ndarray
    sc: np.ndarray
    theta: float = 0.0
    mjcontrol: bool = True
    need_new_m: bool = True
    need_new_j: bool = True
    need_new_mj: bool = True
    m_current: bool = False
    j_current: bool = False
    need_new_rate: bool = True

    def rescale_dt(self, dt_new: float):
        """Change the step size, rescaling the stored stage derivative."""
        if dt_new != self.dt:
            self.wz *= dt_new / self.dt
            self.dt = dt_new
            self.need_new_mj = True


@dataclass
class StepRecord:
    """One attempted step for the CSV log."""

    t: float
    dt: float
    err: float
    accepted: bool
    newton_s1: int
    newton_s2: int
    cause: str  # none | S1 | S2 | err

    CSV_HEADER = "t,dt,err,accepted,newton_s1,newton_s2,cause"

    def csv_row(self) -> str:
        err = "nan" if not np.isfinite(self.err) else repr(self.err)
        return (f"{self.t!r},{self.dt!r},{err},{int(self.accepted)},"
                f"{self.newton_s1},{self.newton_s2},{self.cause}")


class SimpleOdeSystem:
    """Single-block system ``M w' = f(w, t)`` for tests and plain ODE use."""

    sides = ("0",)

    def __init__(self, f, jac, n, mass=None):
        self._f = f
        self._jac = jac
        self.n = n
        self._mass = sp.identity(n, format="csr") if mass is None else sp.csr_matrix(mass)
        self.n_rhs_evals = 0
        self.n_jac_evals = 0
        self.n_mass_evals = 0

    def n_dofs(self, side):
        return self.n

    def mass(self, side):
        self.n_mass_evals += 1
        return self._mass

    def rhs(self, side, w, t):
        self.n_rhs_evals += 1
        return np.atleast_1d(np.asarray(self._f(w, t), dtype=float))

    def jacobian(self, side, w, t):
        self.n_jac_evals += 1
        return sp.csr_matrix(np.atleast_2d(np.asarray(self._jac(w, t), dtype=float)))

    def refresh_operators(self, side, w, t):
        pass

    def on_side_updated(self, side, w, t):
        pass


class TrBdf2Stepper:
    """Drives one partitioned system through adaptive TR-BDF2 steps."""

    def __init__(self, system, params: ControllerParams | None = None,
                 mjcontrol: bool = True, adaptive: bool = True):
        self.system = system
        self.params = (params or ControllerParams()).validate()
        self.mjcontrol = mjcontrol
        self.adaptive = adaptive
        self.tab = tableau()
        self.records: list[StepRecord] = []
        # block layout is the system's if it declares one (it may iterate the
        # sides in a different order than it lays them out)
        self.slices = dict(getattr(system, "slices", {}))
        if not self.slices:
            offset = 0
            for side in system.sides:
                n = system.n_dofs(side)
                self.slices[side] = slice(offset, offset + n)
                offset += n
        self.n_total = max(s.stop for s in self.slices.values())
        self._mass = {}
        self._jac = {}
        self._factor = {}

    # -- setup ------------------------------------------------------------

    def initial_state(self, w0, t0: float, dt0: float) -> StepState:
        """Build the starting state; costs one right-side evaluation per side."""
        w0 = np.asarray(w0, dtype=float).copy()
        if w0.shape[0] != self.n_total:
            raise ValueError("initial vector does not match the system layout")
        wz = np.empty_like(w0)
        for side in self.system.sides:
            sl = self.slices[side]
            self._mass[side] = sp.csr_matrix(self.system.mass(side))
            rhs = self.system.rhs(side, w0, t0)
            wz[sl] = dt0 * LuFactor(self._mass[side]).solve(rhs)
        sc = np.maximum(np.abs(w0), self.params.eta)
        state = StepState(t=t0, dt=dt0, w=w0, wz=wz, sc=sc, mjcontrol=self.mjcontrol,
                          m_current=True, need_new_m=False)
        return state

    # -- matrix control (assembly reuse) ----------------------------------

    def mj_control(self, state: StepState, t: float):
        """Refresh mass / Jacobian / iteration matrix according to the flags."""
        if not state.mjcontrol:
            return
        if state.need_new_m:
            for side in self.system.sides:
                self._mass[side] = sp.csr_matrix(self.system.mass(side))
            state.m_current = True
            state.need_new_m = False
            state.need_new_mj = True
        if state.need_new_j:
            for side in self.system.sides:
                self.system.refresh_operators(side, state.w, t)
                self._jac[side] = sp.csr_matrix(self.system.jacobian(side, state.w, t))
            state.j_current = True
            state.need_new_j = False
            state.need_new_mj = True
        if state.need_new_mj:
            self._build_iteration_matrix(state.dt)
            state.need_new_mj = False
            state.need_new_rate = True

    def _build_iteration_matrix(self, dt: float):
        g = self.tab.gamma
        for side in self.system.sides:
            self._factor[side] = LuFactor(self._mass[side] / dt - g * self._jac[side])

    def _fresh_factor(self, side, w, t, dt):
        self.system.refresh_operators(side, w, t)
        J = sp.csr_matrix(self.system.jacobian(side, w, t))
        return LuFactor(self._mass[side] / dt - self.tab.gamma * J)

    # -- stages ------------------------------------------------------------

    def _stage_newton(self, state: StepState, t_stage: float, w0, wz0,
                      first_implicit: bool):
        """Newton loop of one implicit stage with the inner D/E Schwarz pass.

        Returns ``(w, wz, iterations, rejected)``.
        """
        p = self.params
        w = w0.copy()
        wz = wz0.copy()
        res_min = 100.0 * np.finfo(float).eps * scaled_max_norm(w0, state.sc)
        delta = np.zeros_like(w)
        res_prev = math.inf
        iters = 0
        for k in range(p.max_newton + 1):
            try:
                for side in self.system.sides:
                    sl = self.slices[side]
                    if state.mjcontrol:
                        factor = self._factor[side]
                    else:
                        factor = self._fresh_factor(side, w, t_stage, state.dt)
                    g = (self.system.rhs(side, w, t_stage)
                         - self._mass[side] @ wz[sl] / state.dt)
                    d = factor.solve(g)
                    wz[sl] += d
                    w[sl] += self.tab.gamma * d
                    self.system.on_side_updated(side, w, t_stage)
                    delta[sl] = d
            except StateError:
                return w, wz, iters + 1, True
            iters = k + 1
            np.maximum(state.sc, np.abs(w), out=state.sc)
            res = scaled_max_norm(delta, state.sc)
            action, state.theta, state.need_new_rate = newton_converged(
                res, res_prev, state.theta, k, p, res_min=res_min,
                need_new_rate=state.need_new_rate,
                first_implicit_stage=first_implicit, mjcontrol=state.mjcontrol)
            if action is NewtonAction.CONVERGED:
                return w, wz, iters, False
            if action is NewtonAction.REJECT:
                return w, wz, iters, True
            res_prev = res
        return w, wz, iters, True

    def error_estimate(self, state: StepState, wz_n, wz_ng, wz_new, w_new, t_new):
        """Embedded RK23 estimate: filtered difference of the weight rows.

        e1 sums (bhat_j - b_j) wz_j; e2 solves the iteration matrix against
        e1; the reported error is max(|||e2|||, |||e1|||/16).
        """
        d = self.tab.err_weights
        e1 = d[0] * wz_n + d[1] * wz_ng + d[2] * wz_new
        if not state.mjcontrol:
            for side in self.system.sides:
                self._factor[side] = self._fresh_factor(side, w_new, t_new, state.dt)
        e2 = np.empty_like(e1)
        for side in self.system.sides:
            sl = self.slices[side]
            e2[sl] = self._factor[side].solve(e1[sl])
        return max(scaled_max_norm(e2, state.sc), scaled_max_norm(e1, state.sc) / 16.0)

    # -- one attempt --------------------------------------------------------

    def attempt_step(self, state: StepState):
        """Run one TR-BDF2 attempt at the current (t, dt).

        Returns ``(accepted, payload)`` where payload carries the new vectors
        on success; on rejection the state's dt / wz / flags were already
        adjusted for the retry and payload names the cause.
        """
        p = self.params
        g = self.tab.gamma
        dt_min = p.eps_t * abs(state.t)
        state.sc = np.maximum(np.abs(state.w), p.eta)
        self.mj_control(state, state.t)

        t_ng = state.t + 2.0 * g * state.dt
        w0_ng = state.w + 2.0 * g * state.wz
        w_ng, wz_ng, its1, reject_s1 = self._stage_newton(
            state, t_ng, w0_ng, state.wz, first_implicit=True)

        its2 = 0
        reject_s2 = False
        if not reject_s1:
            np.maximum(state.sc, np.abs(w_ng), out=state.sc)
            wz0_new = (self.tab.p31 * state.wz + self.tab.p32 * wz_ng
                       + self.tab.p33 * w_ng - self.tab.p33 * state.w)
            w0_new = (state.w + self.tab.b[0] * state.wz + self.tab.b[1] * wz_ng
                      + g * wz0_new)
            t_new = state.t + state.dt
            w_new, wz_new, its2, reject_s2 = self._stage_newton(
                state, t_new, w0_new, wz0_new, first_implicit=False)

        if reject_s1 or reject_s2:
            cause = "S1" if reject_s1 else "S2"
            shrunk = False
            if state.mjcontrol and not (state.j_current and state.m_current):
                # retry with fresh matrices before touching the step size
                state.need_new_j = not state.j_current
                state.need_new_m = not state.m_current
            else:
                if not self.adaptive:
                    raise StepSizeUnderflow(state.t, state.dt, cause)
                state.rescale_dt(max(p.fac_s1s2 * state.dt, dt_min))
                state.need_new_mj = True
                shrunk = True
            return False, {"cause": cause, "its": (its1, its2), "err": math.nan,
                           "shrunk": shrunk}

        np.maximum(state.sc, np.abs(w_new), out=state.sc)
        err = self.error_estimate(state, state.wz, wz_ng, wz_new, w_new,
                                  state.t + state.dt)
        if self.adaptive and err > p.r_tol:
            shrink = max(p.fac_min, p.fac * (p.r_tol / err) ** p.k_i)
            state.rescale_dt(max(state.dt * shrink, dt_min))
            state.need_new_mj = True
            return False, {"cause": "err", "its": (its1, its2), "err": err,
                           "shrunk": True}
        return True, {"cause": "none", "its": (its1, its2), "err": err,
                      "w": w_new, "wz": wz_new, "w_ng": w_ng, "wz_ng": wz_ng}

    # -- accepted-step bookkeeping ------------------------------------------

    def step(self, state: StepState):
        """Attempt until accepted (mutates ``state`` to t + dt) or abort."""
        attempts = 0
        while True:
            attempts += 1
            dt_min = self.params.eps_t * abs(state.t)
            dt_used = state.dt
            accepted, info = self.attempt_step(state)
            self.records.append(StepRecord(
                t=state.t, dt=dt_used, err=info["err"], accepted=accepted,
                newton_s1=info["its"][0], newton_s2=info["its"][1],
                cause=info["cause"]))
            if accepted:
                state.t = state.t + dt_used
                state.w = info["w"]
                state.wz = info["wz"]
                state.j_current = False  # Jacobian now refers to the old state
                return info
            if info["shrunk"] and state.dt <= dt_min:
                raise StepSizeUnderflow(state.t, state.dt, info["cause"])
            if attempts >= MAX_ATTEMPTS_PER_STEP:
                raise StepSizeUnderflow(state.t, state.dt,
                                        f"{info['cause']} (attempt budget)")

    def accept_and_rescale(self, state: StepState, err: float):
        """Deadbeat growth after an accepted step: ratio = (R_TOL/err)^k_I, clamped."""
        if not self.adaptive:
            return
        p = self.params
        if err > 0.0:
            q = (err / p.r_tol) ** p.k_i
            ratio = 1.0 / q
        else:
            ratio = p.ratio_max
        ratio = min(p.ratio_max, max(p.ratio_min, ratio))
        if abs(ratio - 1.0) > p.ratio_min:
            state.rescale_dt(ratio * state.dt)
            state.need_new_mj = True

    def clamp_dt(self, state: StepState, t_end: float | None = None):
        """Top-of-loop clamp of dt into [dt_min, dt_max] (and to the horizon)."""
        p = self.params
        dt_min = p.eps_t * abs(state.t)
        dt = min(p.dt_max, max(dt_min, state.dt))
        if t_end is not None:
            dt = min(dt, t_end - state.t)
        state.rescale_dt(dt)


def run_ode(system, w0, t0: float, t_end: float, dt0: float,
            params: ControllerParams | None = None, mjcontrol: bool = True,
            adaptive: bool = True, record_trajectory: bool = False):
    """Integrate a plain (single-block or partitioned) system to ``t_end``.

    Returns ``(state, stepper, trajectory)``; the trajectory is a list of
    ``(t, w)`` snapshots including the initial point when requested.
    """
    stepper = TrBdf2Stepper(system, params, mjcontrol=mjcontrol, adaptive=adaptive)
    state = stepper.initial_state(w0, t0, dt0)
    traj = [(state.t, state.w.copy())] if record_trajectory else []
    while state.t < t_end - 1e-12 * max(1.0, abs(t_end)):
        stepper.clamp_dt(state, t_end)
        info = stepper.step(state)
        stepper.accept_and_rescale(state, info["err"])
        if record_trajectory:
            traj.append((state.t, state.w.copy()))
    return state, stepper, traj

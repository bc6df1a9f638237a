"""Reaction models, coupling sources and cross-diffusion tensors.

Two reaction families are provided: the two-species activator-inhibitor model
with quadratic autocatalysis, and a four-species skin model (cells, matrix and
two morphogens) whose production terms differ between the lower (D) and upper
(E) layer.  All evaluators are vectorised over leading axes: ``w`` has shape
``(..., m)`` and Jacobians come back as ``(..., m, m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, StateError

INHIBITOR_FLOOR = 1e-12


@dataclass(frozen=True)
class GMParams:
    """Rate constants rho0..rho5 of the activator-inhibitor model."""

    rho0: float = 0.0
    rho1: float = 1.0
    rho2: float = 1.0
    rho3: float = 0.35
    rho4: float = 1.0
    rho5: float = 1.0


@dataclass(frozen=True)
class Skin4Params:
    """Rate constants r0..r7 of the four-species skin model (r0 = max cell density)."""

    r0: float = 1.0
    r1: float = 0.25
    r2: float = 20.0
    r3: float = 5.0
    r4: float = 5.0
    r5: float = 5.0
    r6: float = 20.0
    r7: float = 5.0


def _check_inhibitor(w2):
    if np.any(w2 <= INHIBITOR_FLOOR):
        raise StateError(
            f"inhibitor concentration fell to {np.min(w2):.3e} <= {INHIBITOR_FLOOR}")


def gm_reaction(w, p: GMParams):
    """Activator-inhibitor kinetics (rho2(rho0 + rho1 w1^2/w2) - rho3 w1, rho4 w1^2 - rho5 w2)."""
    w = np.asarray(w, dtype=float)
    w1, w2 = w[..., 0], w[..., 1]
    if p.rho1 != 0.0:
        _check_inhibitor(w2)
        ratio = w1 * w1 / w2
    else:
        ratio = np.zeros_like(w1)
    out = np.empty_like(w)
    out[..., 0] = p.rho2 * (p.rho0 + p.rho1 * ratio) - p.rho3 * w1
    out[..., 1] = p.rho4 * w1 * w1 - p.rho5 * w2
    return out


def gm_jacobian(w, p: GMParams):
    """Analytic Jacobian of :func:`gm_reaction` with respect to (w1, w2)."""
    w = np.asarray(w, dtype=float)
    w1, w2 = w[..., 0], w[..., 1]
    jac = np.zeros(w.shape + (2,))
    if p.rho1 != 0.0:
        _check_inhibitor(w2)
        jac[..., 0, 0] = 2.0 * p.rho1 * p.rho2 * w1 / w2 - p.rho3
        jac[..., 0, 1] = -p.rho1 * p.rho2 * w1 * w1 / (w2 * w2)
    else:
        jac[..., 0, 0] = -p.rho3
    jac[..., 1, 0] = 2.0 * p.rho4 * w1
    jac[..., 1, 1] = -p.rho5
    return jac


def gm_steady_state(p: GMParams):
    """Closed-form homogeneous steady state of the activator-inhibitor model."""
    if p.rho3 <= 0.0 or p.rho4 <= 0.0 or p.rho5 <= 0.0:
        raise ValueError("steady state needs rho3, rho4, rho5 > 0")
    w1 = (p.rho2 / p.rho3) * (p.rho0 + p.rho1 * p.rho5 / p.rho4)
    return np.array([w1, (p.rho4 / p.rho5) * w1 * w1])


def skin4_reaction(w, side: str, p: Skin4Params):
    """Four-species kinetics; production terms depend on the layer.

    D side: logistic cell growth, inert matrix, morphogen production/decay.
    E side: no cell production, morphogen consumption/production.
    """
    w = np.asarray(w, dtype=float)
    w1, w3, w4 = w[..., 0], w[..., 2], w[..., 3]
    out = np.zeros_like(w)
    if side == "D":
        out[..., 0] = p.r1 * w1 * (p.r0 - w1)
        out[..., 2] = p.r2 * w1 - p.r3 * w3
        out[..., 3] = -p.r4 * w1 * w4
    elif side == "E":
        out[..., 2] = -p.r5 * w1 * w3
        out[..., 3] = p.r6 * w1 - p.r7 * w4
    else:
        raise ValueError(f"side must be 'D' or 'E', got {side!r}")
    return out


def skin4_jacobian(w, side: str, p: Skin4Params):
    """Analytic Jacobian of :func:`skin4_reaction`."""
    w = np.asarray(w, dtype=float)
    w1, w3, w4 = w[..., 0], w[..., 2], w[..., 3]
    jac = np.zeros(w.shape + (4,))
    if side == "D":
        jac[..., 0, 0] = p.r1 * (p.r0 - 2.0 * w1)
        jac[..., 2, 0] = p.r2
        jac[..., 2, 2] = -p.r3
        jac[..., 3, 0] = -p.r4 * w4
        jac[..., 3, 3] = -p.r4 * w1
    elif side == "E":
        jac[..., 2, 0] = -p.r5 * w3
        jac[..., 2, 2] = -p.r5 * w1
        jac[..., 3, 0] = p.r6
        jac[..., 3, 3] = -p.r7
    else:
        raise ValueError(f"side must be 'D' or 'E', got {side!r}")
    return jac


def skin4_steady_state(p: Skin4Params, side: str):
    """Homogeneous steady state used to seed the four-species scenarios.

    On D: w1 = r0, w3 = r2 r0 / r3, w4 = 0; the matrix density is inert and
    set to 1.  On E the cell density has no production, so the seeding reuses
    the D cell density with w3 = 0 and w4 = r6 w1 / r7.
    """
    w1 = p.r0
    if side == "D":
        return np.array([w1, 1.0, p.r2 * w1 / p.r3, 0.0])
    return np.array([w1, 1.0, 0.0, p.r6 * w1 / p.r7])


@dataclass(frozen=True)
class CrossDiffusion:
    """Species diffusion tensor, either a constant matrix or state-dependent diagonal.

    ``kind == 'linear'``: the constant (possibly non-symmetric) matrix ``M``.
    ``kind == 'nonlinear'``: ``diag(M_ii * (1 + sum_k eta[i, k] w_k))`` with
    slopes ``eta[i, k]`` for diagonal entry i and species k.
    """

    matrix: np.ndarray
    kind: str = "linear"
    eta: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if self.kind not in ("linear", "nonlinear"):
            raise ValueError(f"unknown cross-diffusion kind {self.kind!r}")
        if self.kind == "nonlinear":
            eta = np.zeros_like(m) if self.eta is None else np.asarray(self.eta, dtype=float)
            object.__setattr__(self, "eta", eta)

    @property
    def n_species(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_constant(self) -> bool:
        return self.kind == "linear" or not np.any(self.eta)


def crossdiff_eval(w, cd: CrossDiffusion, check_pd: bool = True):
    """Evaluate the diffusion tensor at states ``w`` of shape (..., m).

    Returns (..., m, m).  Positive definiteness (of the symmetric part) is
    checked at every state; violations raise :class:`ModelError`.
    """
    w = np.asarray(w, dtype=float)
    m = cd.n_species
    if cd.kind == "linear":
        out = np.broadcast_to(cd.matrix, w.shape[:-1] + (m, m)).copy()
    else:
        out = np.zeros(w.shape[:-1] + (m, m))
        for i in range(m):
            scale = 1.0 + np.einsum("...k,k->...", w, cd.eta[i])
            out[..., i, i] = cd.matrix[i, i] * scale
    if check_pd:
        sym = 0.5 * (out + np.swapaxes(out, -1, -2))
        eig = np.linalg.eigvalsh(sym)
        if np.any(eig[..., 0] <= 0.0):
            raise ModelError(
                f"cross-diffusion tensor not positive definite "
                f"(min eigenvalue {float(eig[..., 0].min()):.3e})")
    return out


def coupling_sources(grad_w, div_u, c_f: float, c_g: float, m: int):
    """Pointwise two-way coupling terms.

    ``grad_w`` holds the species gradients with shape (..., m, 2); the force
    on the momentum balance is ``c_f * sum_i grad w_i`` and every species
    receives the dilation source ``c_g * div u``.
    """
    grad_w = np.asarray(grad_w, dtype=float)
    force = c_f * grad_w.sum(axis=-2)
    source = np.multiply.outer(np.asarray(div_u, dtype=float) * c_g, np.ones(m))
    return force, source


def uniform_perturbation(n: int, variance: float, rng: np.random.Generator):
    """I.i.d. uniform field on [-a, a] with the requested variance (a = sqrt(3 var))."""
    a = np.sqrt(3.0 * variance)
    return rng.uniform(-a, a, size=n)


class Reaction:
    """Common interface the assembly uses: per-side reaction and Jacobian."""

    n_species: int

    def rate(self, w, side: str):
        raise NotImplementedError

    def rate_jacobian(self, w, side: str):
        raise NotImplementedError


@dataclass
class NoReaction(Reaction):
    n_species: int = 2

    def rate(self, w, side):
        return np.zeros_like(np.asarray(w, dtype=float))

    def rate_jacobian(self, w, side):
        w = np.asarray(w, dtype=float)
        return np.zeros(w.shape + (self.n_species,))


@dataclass
class GiererMeinhardt(Reaction):
    """Per-side activator-inhibitor parameters."""

    params: dict = field(default_factory=lambda: {"D": GMParams(), "E": GMParams()})
    n_species: int = 2

    def rate(self, w, side):
        return gm_reaction(w, self.params[side])

    def rate_jacobian(self, w, side):
        return gm_jacobian(w, self.params[side])


@dataclass
class SkinFourSpecies(Reaction):
    params: Skin4Params = field(default_factory=Skin4Params)
    n_species: int = 4

    def rate(self, w, side):
        return skin4_reaction(w, side, self.params)

    def rate_jacobian(self, w, side):
        return skin4_jacobian(w, side, self.params)

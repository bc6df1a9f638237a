"""Pure numpy element kernels (fallback backend).

Every function mirrors a routine in the compiled ``_core`` extension and is
vectorised over the triangle axis.  Local degrees of freedom for the enriched
displacement element are ordered ``[v0x, v0y, v1x, v1y, v2x, v2y, bx, by]``.
All quadrature weights refer to the reference triangle of area 1/2, so the
physical integral of ``f`` is ``2 * area * sum_q w_q f(q)``.
"""

import numpy as np

BUBBLE_SCALE = 27.0

_DOF_COMP = np.array([0, 1, 0, 1, 0, 1, 0, 1])


def tri_geometry(vertices, triangles):
    """Signed areas and constant P1 gradients for every triangle."""
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    grads = np.empty((triangles.shape[0], 3, 2))
    grads[:, 0, 0] = p[:, 1, 1] - p[:, 2, 1]
    grads[:, 0, 1] = p[:, 2, 0] - p[:, 1, 0]
    grads[:, 1, 0] = p[:, 2, 1] - p[:, 0, 1]
    grads[:, 1, 1] = p[:, 0, 0] - p[:, 2, 0]
    grads[:, 2, 0] = p[:, 0, 1] - p[:, 1, 1]
    grads[:, 2, 1] = p[:, 1, 0] - p[:, 0, 0]
    grads /= det[:, None, None]
    return 0.5 * det, grads


def p1_mass(area):
    """Local P1 mass matrices, exact: (area/12) * (1 + delta_ij)."""
    base = np.full((3, 3), 1.0)
    np.fill_diagonal(base, 2.0)
    return area[:, None, None] * (base / 12.0)


def p1_stiffness(area, grads, coeff):
    """Local stiffness with a per-triangle scalar coefficient."""
    gg = np.einsum("tid,tjd->tij", grads, grads)
    return (coeff * area)[:, None, None] * gg


def p1_mass_coeff(area, coeff_qp, qpoints, qweights):
    """Local weighted mass: int c lam_i lam_j with c given at quadrature points."""
    acc = np.einsum("q,tq,qi,qj->tij", 2.0 * qweights, coeff_qp, qpoints, qpoints)
    return area[:, None, None] * acc


def p1_advection(area, grads, vel_qp, qpoints, qweights):
    """Local advection: int lam_i (v . grad lam_j) with v given at quadrature points."""
    vdotg = np.einsum("tqd,tjd->tqj", vel_qp, grads)
    acc = np.einsum("q,qi,tqj->tij", 2.0 * qweights, qpoints, vdotg)
    return area[:, None, None] * acc


def p1_load(area, f_qp, qpoints, qweights):
    """Local load: int f lam_i with f given at quadrature points."""
    acc = np.einsum("q,tq,qi->ti", 2.0 * qweights, f_qp, qpoints)
    return area[:, None] * acc


def bubble_grads_qp(grads, qpoints):
    """Bubble gradients at quadrature points, shape (T, Q, 2)."""
    l1 = qpoints[:, 0][None, :, None]
    l2 = qpoints[:, 1][None, :, None]
    l3 = qpoints[:, 2][None, :, None]
    g1 = grads[:, None, 0, :]
    g2 = grads[:, None, 1, :]
    g3 = grads[:, None, 2, :]
    return BUBBLE_SCALE * (l2 * l3 * g1 + l1 * l3 * g2 + l1 * l2 * g3)


def mini_elasticity(area, grads, mu, qpoints, qweights):
    """Local MINI blocks for one subdomain with constant shear modulus.

    Returns ``(A_loc, B_loc)`` with

    * ``A_loc[d1, d2] = mu * int(delta_{c1 c2} G1.G2 + G1[c2] G2[c1])``
      (equal to ``2 mu int eps(phi_1):eps(phi_2)``) of shape (T, 8, 8),
    * ``B_loc[a, d] = -int(lam_a * div phi_d)`` of shape (T, 3, 8).
    """
    nt = area.shape[0]
    nq = qweights.shape[0]
    w2 = 2.0 * qweights

    G = np.zeros((nt, nq, 8, 2))
    for a in range(3):
        G[:, :, 2 * a, :] = grads[:, None, a, :]
        G[:, :, 2 * a + 1, :] = grads[:, None, a, :]
    bg = bubble_grads_qp(grads, qpoints)
    G[:, :, 6, :] = bg
    G[:, :, 7, :] = bg

    same_comp = (_DOF_COMP[:, None] == _DOF_COMP[None, :]).astype(float)
    dot = np.einsum("q,tqid,tqjd->tij", w2, G, G)
    # X[t, q, i, j] = component comp[j] of G_i; the cross term pairs X with
    # its (i, j)-transpose
    X = G[:, :, :, _DOF_COMP]
    cross = np.einsum("q,tqij,tqji->tij", w2, X, X)
    a_loc = (mu * area)[:, None, None] * (same_comp[None] * dot + cross)

    div = G[:, :, np.arange(8), _DOF_COMP]  # (T, Q, 8)
    b_loc = -area[:, None, None] * np.einsum("q,qa,tqd->tad", w2, qpoints, div)
    return a_loc, b_loc

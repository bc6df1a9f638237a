# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled element kernels (hot assembly loops).

Mirrors ``_fallback`` exactly; see that module for the reference semantics.
"""

import numpy as np

cimport cython

DEF BUBBLE_SCALE = 27.0


def tri_geometry(const double[:, ::1] vertices, const long[:, ::1] triangles):
    cdef Py_ssize_t nt = triangles.shape[0]
    cdef double[::1] area = np.empty(nt)
    cdef double[:, :, ::1] grads = np.empty((nt, 3, 2))
    cdef Py_ssize_t t
    cdef long i0, i1, i2
    cdef double x0, y0, x1, y1, x2, y2, det
    for t in range(nt):
        i0 = triangles[t, 0]; i1 = triangles[t, 1]; i2 = triangles[t, 2]
        x0 = vertices[i0, 0]; y0 = vertices[i0, 1]
        x1 = vertices[i1, 0]; y1 = vertices[i1, 1]
        x2 = vertices[i2, 0]; y2 = vertices[i2, 1]
        det = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        area[t] = 0.5 * det
        grads[t, 0, 0] = (y1 - y2) / det
        grads[t, 0, 1] = (x2 - x1) / det
        grads[t, 1, 0] = (y2 - y0) / det
        grads[t, 1, 1] = (x0 - x2) / det
        grads[t, 2, 0] = (y0 - y1) / det
        grads[t, 2, 1] = (x1 - x0) / det
    return np.asarray(area), np.asarray(grads)


def p1_mass(const double[::1] area):
    cdef Py_ssize_t nt = area.shape[0]
    cdef double[:, :, ::1] out = np.empty((nt, 3, 3))
    cdef Py_ssize_t t, i, j
    cdef double a
    for t in range(nt):
        a = area[t] / 12.0
        for i in range(3):
            for j in range(3):
                out[t, i, j] = a * (2.0 if i == j else 1.0)
    return np.asarray(out)


def p1_stiffness(const double[::1] area, const double[:, :, ::1] grads, const double[::1] coeff):
    cdef Py_ssize_t nt = area.shape[0]
    cdef double[:, :, ::1] out = np.empty((nt, 3, 3))
    cdef Py_ssize_t t, i, j
    cdef double ca
    for t in range(nt):
        ca = coeff[t] * area[t]
        for i in range(3):
            for j in range(3):
                out[t, i, j] = ca * (grads[t, i, 0] * grads[t, j, 0]
                                     + grads[t, i, 1] * grads[t, j, 1])
    return np.asarray(out)


def p1_mass_coeff(const double[::1] area, const double[:, ::1] coeff_qp,
                  const double[:, ::1] qpoints, const double[::1] qweights):
    cdef Py_ssize_t nt = area.shape[0]
    cdef Py_ssize_t nq = qweights.shape[0]
    cdef double[:, :, ::1] out = np.zeros((nt, 3, 3))
    cdef Py_ssize_t t, q, i, j
    cdef double wc
    for t in range(nt):
        for q in range(nq):
            wc = 2.0 * qweights[q] * coeff_qp[t, q] * area[t]
            for i in range(3):
                for j in range(3):
                    out[t, i, j] += wc * qpoints[q, i] * qpoints[q, j]
    return np.asarray(out)


def p1_advection(const double[::1] area, const double[:, :, ::1] grads,
                 const double[:, :, ::1] vel_qp, const double[:, ::1] qpoints,
                 const double[::1] qweights):
    cdef Py_ssize_t nt = area.shape[0]
    cdef Py_ssize_t nq = qweights.shape[0]
    cdef double[:, :, ::1] out = np.zeros((nt, 3, 3))
    cdef Py_ssize_t t, q, i, j
    cdef double w2, vg
    for t in range(nt):
        for q in range(nq):
            w2 = 2.0 * qweights[q] * area[t]
            for j in range(3):
                vg = (vel_qp[t, q, 0] * grads[t, j, 0]
                      + vel_qp[t, q, 1] * grads[t, j, 1])
                for i in range(3):
                    out[t, i, j] += w2 * qpoints[q, i] * vg
    return np.asarray(out)


def p1_load(const double[::1] area, const double[:, ::1] f_qp, const double[:, ::1] qpoints,
            const double[::1] qweights):
    cdef Py_ssize_t nt = area.shape[0]
    cdef Py_ssize_t nq = qweights.shape[0]
    cdef double[:, ::1] out = np.zeros((nt, 3))
    cdef Py_ssize_t t, q, i
    cdef double wf
    for t in range(nt):
        for q in range(nq):
            wf = 2.0 * qweights[q] * f_qp[t, q] * area[t]
            for i in range(3):
                out[t, i] += wf * qpoints[q, i]
    return np.asarray(out)


def mini_elasticity(const double[::1] area, const double[:, :, ::1] grads, double mu,
                    const double[:, ::1] qpoints, const double[::1] qweights):
    cdef Py_ssize_t nt = area.shape[0]
    cdef Py_ssize_t nq = qweights.shape[0]
    cdef double[:, :, ::1] a_loc = np.zeros((nt, 8, 8))
    cdef double[:, :, ::1] b_loc = np.zeros((nt, 3, 8))
    cdef double[:, ::1] G = np.empty((8, 2))
    cdef int[8] comp
    cdef Py_ssize_t t, q, i, j, a
    cdef double l1, l2, l3, bgx, bgy, w2, dot, cross
    for i in range(8):
        comp[i] = i % 2
    for t in range(nt):
        for a in range(3):
            G[2 * a, 0] = grads[t, a, 0]
            G[2 * a, 1] = grads[t, a, 1]
            G[2 * a + 1, 0] = grads[t, a, 0]
            G[2 * a + 1, 1] = grads[t, a, 1]
        for q in range(nq):
            l1 = qpoints[q, 0]; l2 = qpoints[q, 1]; l3 = qpoints[q, 2]
            bgx = BUBBLE_SCALE * (l2 * l3 * grads[t, 0, 0]
                                  + l1 * l3 * grads[t, 1, 0]
                                  + l1 * l2 * grads[t, 2, 0])
            bgy = BUBBLE_SCALE * (l2 * l3 * grads[t, 0, 1]
                                  + l1 * l3 * grads[t, 1, 1]
                                  + l1 * l2 * grads[t, 2, 1])
            G[6, 0] = bgx; G[6, 1] = bgy
            G[7, 0] = bgx; G[7, 1] = bgy
            w2 = 2.0 * qweights[q] * area[t]
            for i in range(8):
                for j in range(8):
                    cross = G[i, comp[j]] * G[j, comp[i]]
                    if comp[i] == comp[j]:
                        dot = G[i, 0] * G[j, 0] + G[i, 1] * G[j, 1]
                    else:
                        dot = 0.0
                    a_loc[t, i, j] += mu * w2 * (dot + cross)
            for a in range(3):
                for j in range(8):
                    b_loc[t, a, j] -= w2 * qpoints[q, a] * G[j, comp[j]]
    return np.asarray(a_loc), np.asarray(b_loc)

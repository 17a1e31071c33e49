# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled assembly kernels; same contract as ``numpy_backend``."""

from libc.math cimport pow

import numpy as np

cimport numpy as cnp

cnp.import_array()


def element_gradients(const double[:, :, ::1] grad_ops, const long[:, ::1] triangles,
                      const double[::1] values):
    cdef Py_ssize_t m = grad_ops.shape[0]
    cdef Py_ssize_t e, k
    cdef double u0, u1, u2
    out_arr = np.empty((m, 2))
    cdef double[:, ::1] out = out_arr
    for e in range(m):
        u0 = values[triangles[e, 0]]
        u1 = values[triangles[e, 1]]
        u2 = values[triangles[e, 2]]
        out[e, 0] = grad_ops[e, 0, 0] * u0 + grad_ops[e, 0, 1] * u1 + grad_ops[e, 0, 2] * u2
        out[e, 1] = grad_ops[e, 1, 0] * u0 + grad_ops[e, 1, 1] * u1 + grad_ops[e, 1, 2] * u2
    return out_arr


def double_phase_system(const double[:, :, ::1] grad_ops,
                        const double[:, :, ::1] shape_products,
                        const long[:, ::1] triangles,
                        const double[::1] area,
                        const double[::1] a_elem,
                        const double[::1] values,
                        double p, double q, double delta,
                        double hess_floor, bint want_hess, Py_ssize_t n_nodes):
    cdef Py_ssize_t m = grad_ops.shape[0]
    cdef Py_ssize_t e, k, l
    cdef double gx, gy, t, th, tp, tq, wp, wq, wph, wqh, c1, c2, ar, ae
    cdef double u0, u1, u2, energy = 0.0
    cdef double gb0, gb1, gb2
    cdef double floor2 = hess_floor * hess_floor
    cdef double d2 = delta * delta
    cdef double gbk[3]

    grad_arr = np.zeros(n_nodes)
    cdef double[::1] grad = grad_arr
    hess_arr = None
    cdef double[:, :, ::1] hess = None
    if want_hess:
        hess_arr = np.empty((m, 3, 3))
        hess = hess_arr

    for e in range(m):
        u0 = values[triangles[e, 0]]
        u1 = values[triangles[e, 1]]
        u2 = values[triangles[e, 2]]
        gx = grad_ops[e, 0, 0] * u0 + grad_ops[e, 0, 1] * u1 + grad_ops[e, 0, 2] * u2
        gy = grad_ops[e, 1, 0] * u0 + grad_ops[e, 1, 1] * u1 + grad_ops[e, 1, 2] * u2
        t = gx * gx + gy * gy + d2
        ar = area[e]
        ae = a_elem[e]

        tp = pow(t, 0.5 * p)
        tq = pow(t, 0.5 * q)
        energy += ar * (tp + (p / q) * ae * tq)

        if t > 0.0:
            wp = p * pow(t, 0.5 * p - 1.0)
            wq = p * ae * pow(t, 0.5 * q - 1.0)
        else:
            wp = 0.0
            wq = 0.0

        gbk[0] = gx * grad_ops[e, 0, 0] + gy * grad_ops[e, 1, 0]
        gbk[1] = gx * grad_ops[e, 0, 1] + gy * grad_ops[e, 1, 1]
        gbk[2] = gx * grad_ops[e, 0, 2] + gy * grad_ops[e, 1, 2]

        c1 = ar * (wp + wq)
        grad[triangles[e, 0]] += c1 * gbk[0]
        grad[triangles[e, 1]] += c1 * gbk[1]
        grad[triangles[e, 2]] += c1 * gbk[2]

        if want_hess:
            th = t if t > floor2 else floor2
            wph = p * pow(th, 0.5 * p - 1.0)
            wqh = p * ae * pow(th, 0.5 * q - 1.0)
            c1 = ar * (wph + wqh)
            c2 = ar * (wph * (p - 2.0) + wqh * (q - 2.0)) / th
            for k in range(3):
                for l in range(3):
                    hess[e, k, l] = (c1 * shape_products[e, k, l]
                                     + c2 * gbk[k] * gbk[l])

    return energy, grad_arr, hess_arr


def varcoef_system(const double[:, :, ::1] grad_ops, const long[:, ::1] triangles,
                   const double[::1] area, const double[:, :, ::1] a_mat,
                   f_elem_obj, Py_ssize_t n_nodes):
    cdef Py_ssize_t m = grad_ops.shape[0]
    cdef Py_ssize_t e, k, l
    cdef double ar, abx, aby, fx, fy
    cdef const double[:, ::1] f_elem = None
    cdef bint has_load = f_elem_obj is not None
    if has_load:
        f_elem = np.ascontiguousarray(f_elem_obj)

    stiff_arr = np.empty((m, 3, 3))
    load_arr = np.zeros(n_nodes)
    cdef double[:, :, ::1] stiff = stiff_arr
    cdef double[::1] load = load_arr

    for e in range(m):
        ar = area[e]
        for l in range(3):
            abx = a_mat[e, 0, 0] * grad_ops[e, 0, l] + a_mat[e, 0, 1] * grad_ops[e, 1, l]
            aby = a_mat[e, 1, 0] * grad_ops[e, 0, l] + a_mat[e, 1, 1] * grad_ops[e, 1, l]
            for k in range(3):
                stiff[e, k, l] = ar * (grad_ops[e, 0, k] * abx
                                       + grad_ops[e, 1, k] * aby)
        if has_load:
            fx = f_elem[e, 0]
            fy = f_elem[e, 1]
            for k in range(3):
                load[triangles[e, k]] += ar * (fx * grad_ops[e, 0, k]
                                               + fy * grad_ops[e, 1, k])

    return stiff_arr, load_arr

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation hot loop: ZOH state recursion plus the voltage and
rate-constant-sensitivity algebra, one pass per profile."""

from libc.math cimport sqrt

import numpy as np

NAME = "compiled"

DEF NS = 9


cdef inline double _ocp_eval(const double[::1] xs, const double[:, ::1] c,
                             double q) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = xs.shape[0] - 1, mid
    # rightmost interval start <= q, clipped to valid segments
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if xs[mid] <= q:
            lo = mid
        else:
            hi = mid
    cdef double dx = q - xs[lo]
    return ((c[0, lo] * dx + c[1, lo]) * dx + c[2, lo]) * dx + c[3, lo]


def simulate(const double[:, ::1] ad, const double[::1] bd,
             const double[::1] x0, const double[::1] currents,
             const double[::1] pack,
             const double[::1] xp_x, const double[:, ::1] xp_c,
             const double[::1] xn_x, const double[:, ::1] xn_c,
             double[:, ::1] states, double[::1] v,
             double[::1] sens_p, double[::1] sens_n):
    """Fill the output arrays; returns (n_done, flag).

    flag 0: completed; 1/2: positive/negative surface concentration
    saturated at step ``n_done`` (outputs valid before that step only).
    """
    cdef Py_ssize_t n = currents.shape[0]
    cdef Py_ssize_t k, i, j
    cdef double x[NS]
    cdef double xn[NS]
    cdef double acc, cur
    cdef double c_p, c_n, i0p, i0n, eta_p, eta_n, u_p, u_n
    cdef double i0k_p = pack[0], i0k_n = pack[1]
    cdef double cmax_p = pack[2], cmax_n = pack[3]
    cdef double eta_pref_p = pack[4], eta_pref_n = pack[5]
    cdef double r_inst = pack[6], k_p = pack[7], k_n = pack[8]
    cdef Py_ssize_t n_done = n
    cdef int flag = 0

    for i in range(NS):
        x[i] = x0[i]

    with nogil:
        for k in range(n):
            cur = currents[k]
            for i in range(NS):
                acc = bd[i] * cur
                for j in range(NS):
                    acc += ad[i, j] * x[j]
                xn[i] = acc
            for i in range(NS):
                x[i] = xn[i]
                states[k, i] = xn[i]

            c_p = x[0] + x[3]
            c_n = x[4] + x[7]
            if c_p <= 0.0 or c_p >= cmax_p:
                n_done = k
                flag = 1
                break
            if c_n <= 0.0 or c_n >= cmax_n:
                n_done = k
                flag = 2
                break

            i0p = i0k_p * sqrt(c_p * (cmax_p - c_p))
            i0n = i0k_n * sqrt(c_n * (cmax_n - c_n))
            eta_p = eta_pref_p * cur / i0p
            eta_n = eta_pref_n * cur / i0n
            u_p = _ocp_eval(xp_x, xp_c, c_p / cmax_p)
            u_n = _ocp_eval(xn_x, xn_c, c_n / cmax_n)
            v[k] = u_p - u_n - eta_p + eta_n + x[8] - r_inst * cur
            sens_p[k] = eta_p / k_p
            sens_n[k] = -eta_n / k_n

    return n_done, flag

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the soft-tree routing and Jacobi sweep loops.

Signatures and node layout match :mod:`gaforest._kernels_py`.
"""
import numpy as np

from libc.math cimport exp, fabs, hypot, sqrt

NAME = "cython"


cdef inline double _sigmoid(double x) nogil:
    cdef double z
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


def tree_forward(const double[:, :, ::1] act, const double[:, ::1] biases, const double[:, :, ::1] leaves,
                 double alpha):
    cdef Py_ssize_t batch = act.shape[0], n_trees = act.shape[1], n_nodes = act.shape[2]
    cdef Py_ssize_t n_out = leaves.shape[2]
    cdef Py_ssize_t b, t, n, l, c
    cdef double z, m, acc
    out_arr = np.zeros((batch, n_trees, n_out))
    dec_arr = np.empty((batch, n_trees, n_nodes))
    mass_arr = np.empty((batch, n_trees, 2 * n_nodes + 1))
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, :, ::1] dec = dec_arr
    cdef double[:, :, ::1] mass = mass_arr
    with nogil:
        for b in range(batch):
            for t in range(n_trees):
                mass[b, t, 0] = 1.0
                for n in range(n_nodes):
                    z = alpha * (act[b, t, n] - biases[t, n])
                    dec[b, t, n] = _sigmoid(z)
                    m = mass[b, t, n]
                    mass[b, t, 2 * n + 1] = m * dec[b, t, n]
                    mass[b, t, 2 * n + 2] = m * _sigmoid(-z)
                for l in range(n_nodes + 1):
                    m = mass[b, t, n_nodes + l]
                    for c in range(n_out):
                        out[b, t, c] += m * leaves[t, l, c]
    return out_arr, dec_arr, mass_arr


def tree_backward(const double[:, :, ::1] g_out, const double[:, :, ::1] dec, const double[:, :, ::1] mass,
                  const double[:, :, ::1] leaves, double alpha):
    cdef Py_ssize_t batch = dec.shape[0], n_trees = dec.shape[1], n_nodes = dec.shape[2]
    cdef Py_ssize_t n_out = leaves.shape[2]
    cdef Py_ssize_t b, t, n, l, c
    cdef double d, gl, gr, m, acc
    g_act_arr = np.empty((batch, n_trees, n_nodes))
    g_leaves_arr = np.zeros((n_trees, n_nodes + 1, n_out))
    g_mass_arr = np.empty(2 * n_nodes + 1)
    cdef double[:, :, ::1] g_act = g_act_arr
    cdef double[:, :, ::1] g_leaves = g_leaves_arr
    cdef double[::1] g_mass = g_mass_arr
    with nogil:
        for b in range(batch):
            for t in range(n_trees):
                for l in range(n_nodes + 1):
                    m = mass[b, t, n_nodes + l]
                    acc = 0.0
                    for c in range(n_out):
                        g_leaves[t, l, c] += m * g_out[b, t, c]
                        acc = acc + g_out[b, t, c] * leaves[t, l, c]
                    g_mass[n_nodes + l] = acc
                for n in range(n_nodes - 1, -1, -1):
                    d = dec[b, t, n]
                    gl = g_mass[2 * n + 1]
                    gr = g_mass[2 * n + 2]
                    g_mass[n] = d * gl + (1.0 - d) * gr
                    g_act[b, t, n] = mass[b, t, n] * (gl - gr) * alpha * d * (1.0 - d)
    return g_act_arr, g_leaves_arr


def jacobi_sweeps(double[:, ::1] rows, double tol, int max_sweeps):
    cdef Py_ssize_t k = rows.shape[0], m = rows.shape[1]
    cdef Py_ssize_t p, q, i
    cdef double alpha, beta, gamma, zeta, t, c, s, x, y
    cdef int sweep, done = max_sweeps
    cdef bint rotated
    if k < 2:
        return 0
    with nogil:
        for sweep in range(1, max_sweeps + 1):
            rotated = False
            for p in range(k - 1):
                for q in range(p + 1, k):
                    alpha = 0.0
                    beta = 0.0
                    gamma = 0.0
                    for i in range(m):
                        x = rows[p, i]
                        y = rows[q, i]
                        alpha = alpha + x * x
                        beta = beta + y * y
                        gamma = gamma + x * y
                    if fabs(gamma) <= tol * sqrt(alpha * beta):
                        continue
                    rotated = True
                    zeta = (beta - alpha) / (2.0 * gamma)
                    if zeta > 0:
                        t = 1.0 / (zeta + hypot(1.0, zeta))
                    elif zeta < 0:
                        t = -1.0 / (-zeta + hypot(1.0, zeta))
                    else:
                        t = 1.0
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = c * t
                    for i in range(m):
                        x = rows[p, i]
                        y = rows[q, i]
                        rows[p, i] = c * x - s * y
                        rows[q, i] = s * x + c * y
            if not rotated:
                done = sweep
                break
    return done

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: postfix expression VM and banded Jacobian assembly.

Mirrors ``_kernels_py`` exactly; the package selects one at import.
"""
from libc.math cimport sqrt, log, sin, cos, atan, isfinite
from libc.stdlib cimport malloc, free

import numpy as np


cdef inline double ipow(double b, long n) nogil:
    cdef double r = 1.0
    cdef bint inv = n < 0
    if inv:
        n = -n
    while n:
        if n & 1:
            r *= b
        b *= b
        n >>= 1
    return 1.0 / r if inv else r


cdef inline Py_ssize_t first_where(const double* a, Py_ssize_t n, int kind) nogil:
    """First index that is zero (kind 0), negative (1) or non-positive (2); -1 if none."""
    cdef Py_ssize_t k
    for k in range(n):
        if (kind == 0 and a[k] == 0.0) or (kind == 1 and a[k] < 0.0) or (kind == 2 and a[k] <= 0.0):
            return k
    return -1


def eval_program(const long long[:, ::1] code, const double[::1] consts,
                 const double[:, ::1] X, double[::1] out, int depth):
    """Evaluate a postfix program at each row of X.

    Instruction-major like the fallback: each instruction runs over all
    points before the next, so the reported singularity is the same.
    Returns ``(instr, point)`` of the first singular instruction, or (-1, -1).
    """
    cdef Py_ssize_t npts = X.shape[0]
    cdef Py_ssize_t ninstr = code.shape[0]
    cdef Py_ssize_t k, i
    cdef int sp = -1
    cdef long long op, arg
    cdef double c
    cdef double* top
    cdef double* below
    cdef double* stack
    cdef Py_ssize_t bad_instr = -1, bad_point = -1
    if npts == 0:
        return -1, -1
    stack = <double*> malloc((depth + 1) * npts * sizeof(double))
    if stack == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(ninstr):
                op = code[i, 0]
                arg = code[i, 1]
                if op == 0:
                    sp += 1
                    top = stack + sp * npts
                    c = consts[arg]
                    for k in range(npts):
                        top[k] = c
                    continue
                if op == 1:
                    sp += 1
                    top = stack + sp * npts
                    for k in range(npts):
                        top[k] = X[k, arg]
                    continue
                top = stack + sp * npts
                if op <= 5:
                    sp -= 1
                    below = stack + sp * npts
                    if op == 2:
                        for k in range(npts):
                            below[k] = below[k] + top[k]
                    elif op == 3:
                        for k in range(npts):
                            below[k] = below[k] - top[k]
                    elif op == 4:
                        for k in range(npts):
                            below[k] = below[k] * top[k]
                    else:
                        bad_point = first_where(top, npts, 0)
                        if bad_point < 0:
                            for k in range(npts):
                                below[k] = below[k] / top[k]
                elif op == 6:
                    if arg < 0:
                        bad_point = first_where(top, npts, 0)
                    if bad_point >= 0:
                        pass
                    elif arg == 2:
                        for k in range(npts):
                            top[k] = top[k] * top[k]
                    else:
                        for k in range(npts):
                            top[k] = ipow(top[k], arg)
                elif op == 7:
                    for k in range(npts):
                        top[k] = -top[k]
                elif op == 8:
                    bad_point = first_where(top, npts, 1)
                    if bad_point < 0:
                        for k in range(npts):
                            top[k] = sqrt(top[k])
                elif op == 9:
                    bad_point = first_where(top, npts, 2)
                    if bad_point < 0:
                        for k in range(npts):
                            top[k] = log(top[k])
                elif op == 10:
                    for k in range(npts):
                        top[k] = sin(top[k])
                elif op == 11:
                    for k in range(npts):
                        top[k] = cos(top[k])
                else:
                    for k in range(npts):
                        top[k] = atan(top[k])
                if bad_point >= 0:
                    bad_instr = i
                    break
            if bad_instr < 0:
                for k in range(npts):
                    if not isfinite(stack[k]):
                        bad_instr = ninstr - 1
                        bad_point = k
                        break
                    out[k] = stack[k]
    finally:
        free(stack)
    return bad_instr, bad_point


def assemble_banded(const double[:, ::1] a0, const double[:, ::1] a1, const double[:, ::1] a2,
                    const double[:, ::1] c11, const double[:, ::1] c12,
                    const double[:, ::1] c21, const double[:, ::1] c22,
                    double h1, double h2):
    """Banded Jacobian of the 9-point discrete Euler-Lagrange operator.

    Interior unknowns are numbered ``k = i * n2 + j``; the result is laid out
    for ``scipy.linalg.solve_banded((n2 + 1, n2 + 1), ab, rhs)``.
    """
    cdef Py_ssize_t n1 = a0.shape[0], n2 = a0.shape[1]
    cdef Py_ssize_t bw = n2 + 1
    cdef Py_ssize_t n = n1 * n2
    ab_arr = np.zeros((2 * bw + 1, n))
    cdef double[:, ::1] ab = ab_arr
    cdef Py_ssize_t i, j, k, kk
    cdef int di, dj
    cdef double ih1 = 1.0 / (h1 * h1), ih2 = 1.0 / (h2 * h2)
    cdef double cross, val
    with nogil:
        for i in range(n1):
            for j in range(n2):
                k = i * n2 + j
                ab[bw, k] = a0[i, j] - 2.0 * c11[i, j] * ih1 - 2.0 * c22[i, j] * ih2
                cross = (c12[i, j] + c21[i, j]) / (4.0 * h1 * h2)
                for di in range(-1, 2):
                    if i + di < 0 or i + di >= n1:
                        continue
                    for dj in range(-1, 2):
                        if di == 0 and dj == 0:
                            continue
                        if j + dj < 0 or j + dj >= n2:
                            continue
                        if dj == 0:
                            val = di * a1[i, j] / (2.0 * h1) + c11[i, j] * ih1
                        elif di == 0:
                            val = dj * a2[i, j] / (2.0 * h2) + c22[i, j] * ih2
                        else:
                            val = di * dj * cross
                        kk = k + di * n2 + dj
                        ab[bw + k - kk, kk] = val
    return ab_arr

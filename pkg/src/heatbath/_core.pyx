# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid kernel for the microscopic bath simulator."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    MAX_K = 64


cdef void _sweep3(double *B, const double *Fp, Py_ssize_t m, Py_ssize_t d,
                  const double *cn, const double *cp, double *acc) noexcept nogil:
    # fused deposit and projection for three basis functions
    cdef Py_ssize_t i, dk = 3 * d
    cdef const double *row
    cdef double val, s0 = 0.0, s1 = 0.0, s2 = 0.0
    cdef double n0 = cn[0], n1 = cn[1], n2 = cn[2]
    cdef double p0 = cp[0], p1 = cp[1], p2 = cp[2]
    for i in range(m * d):
        row = Fp + 3 * i
        val = B[i] + row[0] * n0 + row[1] * n1 + row[2] * n2
        if i >= d:
            val += row[-dk] * p0 + row[1 - dk] * p1 + row[2 - dk] * p2
        B[i] = val
        s0 += row[0] * val
        s1 += row[1] * val
        s2 += row[2] * val
    acc[0] = s0
    acc[1] = s1
    acc[2] = s2


cdef void _project3(const double *B, const double *Fp, Py_ssize_t m, Py_ssize_t d,
                    double *acc) noexcept nogil:
    cdef Py_ssize_t i
    cdef const double *row
    cdef double val, s0 = 0.0, s1 = 0.0, s2 = 0.0
    for i in range(m * d):
        row = Fp + 3 * i
        val = B[i]
        s0 += row[0] * val
        s1 += row[1] * val
        s2 += row[2] * val
    acc[0] = s0
    acc[1] = s1
    acc[2] = s2


cdef void _sweep(double *B, const double *Fp, Py_ssize_t m, Py_ssize_t d, Py_ssize_t k,
                 const double *cn, const double *cp, double *acc) noexcept nogil:
    cdef Py_ssize_t i, a, j, dk = d * k
    cdef const double *row
    cdef double val
    for j in range(k):
        acc[j] = 0.0
    for i in range(m):
        for a in range(d):
            row = Fp + i * dk + a * k
            val = B[i * d + a]
            for j in range(k):
                val += row[j] * cn[j]
            if i > 0:
                for j in range(k):
                    val += row[j - dk] * cp[j]
            B[i * d + a] = val
            for j in range(k):
                acc[j] += row[j] * val


def deposit_project(double[:, ::1] buf, Py_ssize_t start, const double[:, :, ::1] F,
                    const double[::1] c_now, const double[::1] c_prev, double h):
    """Deposit source terms and project the window onto the basis, in one pass.

    Cell ``start + i`` receives ``F[i] @ c_now + F[i - 1] @ c_prev``; the
    ``c_prev`` term is the half of the last step's source deposited before the
    one-cell shift, so it also reaches cell ``start + m`` just right of the
    window. Returns ``h * sum_i F[i]^T buf[start + i]`` over the ``m`` window
    cells after the update.
    """
    cdef Py_ssize_t m = F.shape[0], d = F.shape[1], k = F.shape[2]
    cdef Py_ssize_t a, j
    cdef double acc[MAX_K]
    if k > MAX_K:
        raise ValueError(f"at most {MAX_K} basis functions supported")
    if buf.shape[1] != d or c_now.shape[0] != k or c_prev.shape[0] != k:
        raise ValueError("shape mismatch")
    if start < 0 or start + m >= buf.shape[0]:
        raise IndexError("window outside the grid")
    out = np.zeros(k)
    if m == 0:
        return out
    cdef double *B = &buf[start, 0]
    cdef const double *Fp = &F[0, 0, 0]
    cdef const double *cn = &c_now[0]
    cdef const double *cp = &c_prev[0]
    cdef const double *row
    cdef bint zero = True
    for j in range(k):
        if cn[j] != 0.0 or cp[j] != 0.0:
            zero = False
    with nogil:
        if k == 3 and zero:
            _project3(B, Fp, m, d, acc)
        elif k == 3:
            _sweep3(B, Fp, m, d, cn, cp, acc)
        else:
            _sweep(B, Fp, m, d, k, cn, cp, acc)
        for a in range(d):
            row = Fp + (m - 1) * d * k + a * k
            for j in range(k):
                B[m * d + a] += row[j] * cp[j]
    for j in range(k):
        out[j] = h * acc[j]
    return out

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.  Same contracts as ``svtlab._fallback``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log, log1p

cnp.import_array()

cdef double LOG_HALF = log(0.5)


def svt_scan(margins, qnoise, rho, Py_ssize_t cutoff, bint redraw):
    cdef const double[::1] m = np.ascontiguousarray(margins, dtype=np.float64)
    cdef const double[::1] nu = np.ascontiguousarray(qnoise, dtype=np.float64)
    cdef const double[::1] r = np.ascontiguousarray(rho, dtype=np.float64)
    cdef Py_ssize_t n = m.shape[0]
    cdef Py_ssize_t k = r.shape[0]
    codes_arr = np.zeros(n, dtype=np.int8)
    if n == 0:
        return codes_arr, 0
    cdef signed char[::1] codes = codes_arr
    cdef Py_ssize_t i, j = 0, count = 0, answered = n
    cdef double thr = r[0]
    for i in range(n):
        if m[i] + nu[i] >= thr:
            codes[i] = 1
            count += 1
            if redraw and j + 1 < k:
                j += 1
                thr = r[j]
            if cutoff > 0 and count >= cutoff:
                answered = i + 1
                break
    return codes_arr[:answered], answered


def mc_match_count(noisy, rho, rho_index, codes, numeric_ok):
    cdef const double[:, ::1] x = np.ascontiguousarray(noisy, dtype=np.float64)
    cdef const double[:, ::1] r = np.ascontiguousarray(rho, dtype=np.float64)
    cdef const long long[::1] ri = np.ascontiguousarray(rho_index, dtype=np.int64)
    cdef const signed char[::1] cd = np.ascontiguousarray(codes, dtype=np.int8)
    cdef const unsigned char[:, ::1] ok = np.ascontiguousarray(numeric_ok, dtype=np.uint8)
    cdef Py_ssize_t n = x.shape[0], L = x.shape[1]
    cdef Py_ssize_t row, j
    cdef long long total = 0
    cdef bint match, above
    for row in range(n):
        match = True
        for j in range(L):
            above = x[row, j] >= r[row, ri[j]]
            if cd[j] == 0:
                if above:
                    match = False
                    break
            else:
                if not above or (cd[j] == 2 and ok[row, j] == 0):
                    match = False
                    break
        if match:
            total += 1
    return total


cdef inline double _logcdf(double x, double b) nogil:
    if x <= 0:
        return LOG_HALF + x / b
    return log1p(-0.5 * exp(-x / b))


def log_integrand(z, below, above, double rho_scale, double nu_scale):
    cdef const double[::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] db = np.ascontiguousarray(below, dtype=np.float64)
    cdef const double[::1] da = np.ascontiguousarray(above, dtype=np.float64)
    cdef Py_ssize_t m = zz.shape[0], nb = db.shape[0], na = da.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc, zi
    cdef double norm = log(2.0 * rho_scale)
    with nogil:
        for i in range(m):
            zi = zz[i]
            acc = -fabs(zi) / rho_scale - norm
            for j in range(nb):
                acc += _logcdf(zi - db[j], nu_scale)
            for j in range(na):
                acc += _logcdf(da[j] - zi, nu_scale)
            out[i] = acc
    return out_arr

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled exact squared Euclidean distance transform (separable lower envelope)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    BLOCK = 32


cdef void _envelope(const double* f, Py_ssize_t n, double w2, double* out,
                    Py_ssize_t* v, double* z) noexcept nogil:
    # Lower envelope of parabolas f[q] + w2 * (x - q)^2; sites with f = inf are skipped.
    cdef Py_ssize_t q, k = -1, vk, d
    cdef double s, fq
    for q in range(n):
        fq = f[q]
        if fq == INFINITY:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -INFINITY
            z[1] = INFINITY
            continue
        while True:
            vk = v[k]
            s = ((fq + w2 * <double>(q * q)) - (f[vk] + w2 * <double>(vk * vk))) / ((2.0 * w2) * <double>(q - vk))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    if k < 0:
        for q in range(n):
            out[q] = INFINITY
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        vk = v[k]
        d = q - vk
        out[q] = w2 * <double>(d * d) + f[vk]


cdef void _first_pass(const unsigned char* m, double* out, Py_ssize_t n_lines,
                      Py_ssize_t n, double w2) noexcept nogil:
    # Contiguous lines of a 0/1 mask: sites are 0, the rest inf, so the envelope
    # reduces to the distance to the nearest site on either side.
    cdef Py_ssize_t i, q, last, d
    cdef const unsigned char* line
    cdef double* dst
    for i in range(n_lines):
        line = m + i * n
        dst = out + i * n
        last = -1
        for q in range(n):
            if line[q]:
                last = q
            if last < 0:
                dst[q] = INFINITY
            else:
                d = q - last
                dst[q] = w2 * <double>(d * d)
        last = -1
        for q in range(n - 1, -1, -1):
            if line[q]:
                last = q
            if last >= 0:
                d = last - q
                if w2 * <double>(d * d) < dst[q]:
                    dst[q] = w2 * <double>(d * d)


cdef void _pass(double* data, Py_ssize_t n, Py_ssize_t s_line,
                Py_ssize_t m_outer, Py_ssize_t s_outer,
                Py_ssize_t m_inner, Py_ssize_t s_inner, double w2) noexcept nogil:
    cdef double* buf = <double*> malloc(BLOCK * n * sizeof(double))
    cdef double* res = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* v = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef double* z = <double*> malloc((n + 1) * sizeof(double))
    cdef Py_ssize_t o, b, t, q, nb, base
    cdef double* line
    cdef bint any_finite
    for o in range(m_outer):
        b = 0
        while b < m_inner:
            nb = m_inner - b
            if nb > BLOCK:
                nb = BLOCK
            base = o * s_outer + b * s_inner
            # gather: for strided lines this reads nb neighbouring values per step
            for q in range(n):
                for t in range(nb):
                    buf[t * n + q] = data[base + t * s_inner + q * s_line]
            for t in range(nb):
                line = buf + t * n
                any_finite = False
                for q in range(n):
                    if line[q] != INFINITY:
                        any_finite = True
                        break
                if not any_finite:
                    continue
                _envelope(line, n, w2, res, v, z)
                for q in range(n):
                    line[q] = res[q]
            for q in range(n):
                for t in range(nb):
                    data[base + t * s_inner + q * s_line] = buf[t * n + q]
            b += nb
    free(buf)
    free(res)
    free(v)
    free(z)


def edt_sq(mask, spacing):
    """Squared distance (mm^2) from every voxel to the nearest ``True`` voxel.

    Voxels of an all-``False`` mask get ``inf``.
    """
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 3:
        raise ValueError("mask must be 3D")
    cdef cnp.ndarray[cnp.uint8_t, ndim=3, mode="c"] sites = np.ascontiguousarray(m).view(np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] out = np.empty(m.shape, dtype=np.float64)
    cdef double* data = <double*> out.data
    cdef const unsigned char* mp = <const unsigned char*> sites.data
    cdef Py_ssize_t n0 = out.shape[0], n1 = out.shape[1], n2 = out.shape[2]
    cdef double w0 = float(spacing[0]) ** 2
    cdef double w1 = float(spacing[1]) ** 2
    cdef double w2 = float(spacing[2]) ** 2
    if out.size == 0:
        return out
    with nogil:
        # lines along z (contiguous), then y, then x
        _first_pass(mp, data, n0 * n1, n2, w2)
        _pass(data, n1, n2, n0, n1 * n2, n2, 1, w1)
        _pass(data, n0, n1 * n2, n1, n2, n2, 1, w0)
    return out

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see _pykernels for the reference versions."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline void _sift_down(double[::1] h, Py_ssize_t n, double x) noexcept nogil:
    # replace the heap top with x and restore the min-heap property
    cdef Py_ssize_t i = 0, child
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and h[child + 1] < h[child]:
            child += 1
        if h[child] >= x:
            break
        h[i] = h[child]
        i = child
    h[i] = x


def mmc_waits(const double[::1] interarrival, const double[::1] work, double mu, int c,
              long capacity=-1):
    cdef Py_ssize_t n = interarrival.shape[0], i, head = 0, nacc = 0
    cdef double[::1] free = np.zeros(c)
    cdef double[::1] starts = np.empty(n)
    waits_arr = np.empty(n)
    cdef double[::1] waits = waits_arr
    cdef double t = 0.0, s
    cdef long dropped = 0
    with nogil:
        for i in range(n):
            t += interarrival[i]
            while head < nacc and starts[head] <= t:
                head += 1
            if free[0] > t and capacity >= 0 and nacc - head >= capacity:
                waits[i] = -1.0
                dropped += 1
                continue
            s = free[0] if free[0] > t else t
            _sift_down(free, c, s + work[i] / mu)
            starts[nacc] = s
            nacc += 1
            waits[i] = s - t
    return waits_arr, dropped


def hypercube_loss(const double[::1] interarrival, const long[::1] atom, const double[::1] work,
                   const long[:, ::1] pref, const double[::1] mu):
    cdef Py_ssize_t n = pref.shape[1], m = interarrival.shape[0], i, j, k
    cdef long v, mask = 0, lost = 0
    cdef double[::1] free = np.zeros(n)
    occ_arr = np.zeros(1 << n)
    cdef double[::1] occ = occ_arr
    cdef double t = 0.0, last = 0.0, best
    cdef bint placed
    with nogil:
        for i in range(m):
            t += interarrival[i]
            while mask:
                v = -1
                best = t
                for k in range(n):
                    if (mask >> k) & 1 and free[k] <= best:
                        if v < 0 or free[k] < best:
                            v = k
                            best = free[k]
                if v < 0:
                    break
                occ[mask] += best - last
                last = best
                mask &= ~(1 << v)
            occ[mask] += t - last
            last = t
            placed = False
            for j in range(n):
                v = pref[atom[i], j]
                if not (mask >> v) & 1:
                    mask |= 1 << v
                    free[v] = t + work[i] / mu[v]
                    placed = True
                    break
            if not placed:
                lost += 1
    return occ_arr, lost, t

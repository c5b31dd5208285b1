# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: box-enclosure queries and Tarjan's SCC.

Mirrors kernels_pure; keep the two in lockstep.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()

BACKEND = "compiled"


def enclose_batch(points, radii, lo, width, resolution, strides, strict):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rad = np.ascontiguousarray(radii, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lo_ = np.ascontiguousarray(lo, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w_ = np.ascontiguousarray(width, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] res_ = np.ascontiguousarray(resolution, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] str_ = np.ascontiguousarray(strides, dtype=np.int64)
    cdef bint strict_ = bool(strict)
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t d = pts.shape[1]

    cdef cnp.ndarray[cnp.uint8_t, ndim=1] outside = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] starts = np.zeros(n + 1, dtype=np.int64)

    cdef list found_all = []
    cdef cnp.int64_t[16] imin, imax, idx
    cdef double[16] hi_
    cdef Py_ssize_t i, k
    cdef double q, r, blo, gap, dist2, dist
    cdef bint out, ok, carry
    cdef long total = 0
    cdef cnp.int64_t flat
    cdef list found

    if d > 16:
        raise ValueError("enclose_batch supports at most 16 dimensions")

    for k in range(d):
        hi_[k] = lo_[k] + w_[k] * res_[k]

    for i in range(n):
        r = rad[i]
        out = False
        for k in range(d):
            q = pts[i, k]
            if q < lo_[k] or q > hi_[k]:
                out = True
                break
        if out:
            outside[i] = 1

        for k in range(d):
            q = pts[i, k]
            imin[k] = <cnp.int64_t>floor((q - r - lo_[k]) / w_[k])
            imax[k] = <cnp.int64_t>floor((q + r - lo_[k]) / w_[k])
            if imin[k] < 0:
                imin[k] = 0
            if imin[k] > res_[k] - 1:
                imin[k] = res_[k] - 1
            if imax[k] < 0:
                imax[k] = 0
            if imax[k] > res_[k] - 1:
                imax[k] = res_[k] - 1
            idx[k] = imin[k]

        found = []
        while True:
            dist2 = 0.0
            for k in range(d):
                blo = lo_[k] + idx[k] * w_[k]
                q = pts[i, k]
                gap = blo - q
                if q - (blo + w_[k]) > gap:
                    gap = q - (blo + w_[k])
                if gap > 0.0:
                    dist2 += gap * gap
            dist = sqrt(dist2)
            if strict_:
                ok = dist < r
            else:
                ok = dist <= r
            if ok:
                flat = 0
                for k in range(d):
                    flat += idx[k] * str_[k]
                found.append(flat)
            carry = True
            k = d - 1
            while k >= 0:
                idx[k] += 1
                if idx[k] <= imax[k]:
                    carry = False
                    break
                idx[k] = imin[k]
                k -= 1
            if carry:
                break
        found.sort()
        found_all.append(found)
        total += len(found)
        starts[i + 1] = total

    cdef cnp.ndarray[cnp.int64_t, ndim=1] targets = np.empty(total, dtype=np.int64)
    cdef Py_ssize_t pos = 0
    for found in found_all:
        for flat in found:
            targets[pos] = flat
            pos += 1
    return targets, starts, outside


def tarjan_scc(indptr, indices, n):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ind = np.ascontiguousarray(indices, dtype=np.int64)
    cdef Py_ssize_t nn = n
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.full(nn, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] low = np.zeros(nn, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] onstack = np.zeros(nn, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels = np.full(nn, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] comp_stack = np.empty(nn, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] work_v = np.empty(nn, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] work_p = np.empty(nn, dtype=np.int64)
    cdef Py_ssize_t sp = 0, wp = 0
    cdef cnp.int64_t counter = 0, n_comp = 0
    cdef cnp.int64_t root, v, w, ptr
    cdef Py_ssize_t parent

    for root in range(nn):
        if order[root] != -1:
            continue
        order[root] = counter
        low[root] = counter
        counter += 1
        comp_stack[sp] = root
        sp += 1
        onstack[root] = 1
        work_v[wp] = root
        work_p[wp] = ip[root]
        wp += 1
        while wp > 0:
            v = work_v[wp - 1]
            ptr = work_p[wp - 1]
            if ptr < ip[v + 1]:
                work_p[wp - 1] = ptr + 1
                w = ind[ptr]
                if order[w] == -1:
                    order[w] = counter
                    low[w] = counter
                    counter += 1
                    comp_stack[sp] = w
                    sp += 1
                    onstack[w] = 1
                    work_v[wp] = w
                    work_p[wp] = ip[w]
                    wp += 1
                elif onstack[w]:
                    if order[w] < low[v]:
                        low[v] = order[w]
            else:
                wp -= 1
                if wp > 0:
                    parent = work_v[wp - 1]
                    if low[v] < low[parent]:
                        low[parent] = low[v]
                if low[v] == order[v]:
                    while True:
                        w = comp_stack[sp - 1]
                        sp -= 1
                        onstack[w] = 0
                        labels[w] = n_comp
                        if w == v:
                            break
                    n_comp += 1
    return labels, int(n_comp)

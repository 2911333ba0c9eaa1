# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled connected-component labeling (two-pass union-find).

Produces exactly the same labeling as the numpy fallback in
``pixelops.py``: components numbered 1..count by first appearance in
row-major scan order, background 0.  Connectivity is 8 or 4.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef int _find(int* parent, int x) noexcept nogil:
    cdef int root = x
    cdef int nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


cdef inline int _union(int* parent, int a, int b) noexcept nogil:
    a = _find(parent, a)
    b = _find(parent, b)
    if a == b:
        return a
    if a < b:
        parent[b] = a
        return a
    parent[a] = b
    return b


def label_components(cnp.uint8_t[:, ::1] fg, int connectivity=8):
    cdef Py_ssize_t h = fg.shape[0]
    cdef Py_ssize_t w = fg.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] prov = np.zeros((h, w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] pv = prov
    cdef cnp.ndarray[cnp.int32_t, ndim=1] parent_arr = np.zeros(h * w // 2 + 2, dtype=np.int32)
    cdef int* parent = <int*> cnp.PyArray_DATA(parent_arr)
    cdef Py_ssize_t r, c
    cdef int next_label = 0, lab, n
    cdef bint diag = connectivity == 8

    with nogil:
        for r in range(h):
            for c in range(w):
                if fg[r, c] == 0:
                    continue
                lab = 0
                if c > 0 and pv[r, c - 1] != 0:
                    lab = pv[r, c - 1]
                if r > 0:
                    n = pv[r - 1, c]
                    if n != 0:
                        lab = n if lab == 0 else _union(parent, lab, n)
                    if diag and c > 0:
                        n = pv[r - 1, c - 1]
                        if n != 0:
                            lab = n if lab == 0 else _union(parent, lab, n)
                    if diag and c + 1 < w:
                        n = pv[r - 1, c + 1]
                        if n != 0:
                            lab = n if lab == 0 else _union(parent, lab, n)
                if lab == 0:
                    next_label += 1
                    parent[next_label] = next_label
                    lab = next_label
                pv[r, c] = lab

    if next_label == 0:
        return prov, 0

    # remap roots to consecutive ids ordered by first appearance; unions
    # always keep the smaller provisional label, so ascending roots are
    # already in first-appearance order
    cdef cnp.ndarray[cnp.int32_t, ndim=1] remap_arr = np.zeros(next_label + 1, dtype=np.int32)
    cdef cnp.int32_t[::1] remap = remap_arr
    cdef int count = 0
    cdef int i
    for i in range(1, next_label + 1):
        if parent[i] == i:
            count += 1
            remap[i] = count
    with nogil:
        for r in range(h):
            for c in range(w):
                if pv[r, c] != 0:
                    pv[r, c] = remap[_find(parent, pv[r, c])]
    return prov, count

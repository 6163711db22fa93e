"""Compiled hot kernels: connected-component labeling via two-pass
union-find, plus the per-pixel loss reductions.

Mirrors the contract of _pykernels: identical component labels, float
reductions equal up to summation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, pow

cnp.import_array()

NAME = "c"


cdef int _find(cnp.int32_t* parent, int i) nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


cdef void _union(cnp.int32_t* parent, int a, int b) nogil:
    cdef int ra = _find(parent, a)
    cdef int rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


def label_components(const cnp.uint8_t[:, ::1] mask, int connectivity):
    """Label maximal connected regions of 1-pixels.

    Returns (labels, count): int32 grid with 0 for background and 1..count
    for regions numbered by the raster order of each region's first pixel.
    """
    if connectivity != 4 and connectivity != 8:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] labels = labels_arr
    # worst case (4-connectivity checkerboard) needs (h*w+1)//2 provisional ids
    parent_arr = np.zeros(h * w // 2 + 2, dtype=np.int32)
    cdef cnp.int32_t[::1] parent = parent_arr
    cdef cnp.int32_t* par = &parent[0]
    cdef bint diag = connectivity == 8
    cdef Py_ssize_t x, y
    cdef int provisional = 0
    cdef int best, lab, count
    cdef int neigh[4]
    cdef int n_neigh, k

    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0:
                continue
            n_neigh = 0
            if x > 0 and mask[y, x - 1] != 0:
                neigh[n_neigh] = labels[y, x - 1]
                n_neigh += 1
            if y > 0:
                if mask[y - 1, x] != 0:
                    neigh[n_neigh] = labels[y - 1, x]
                    n_neigh += 1
                if diag:
                    if x > 0 and mask[y - 1, x - 1] != 0:
                        neigh[n_neigh] = labels[y - 1, x - 1]
                        n_neigh += 1
                    if x < w - 1 and mask[y - 1, x + 1] != 0:
                        neigh[n_neigh] = labels[y - 1, x + 1]
                        n_neigh += 1
            if n_neigh == 0:
                provisional += 1
                par[provisional] = provisional
                labels[y, x] = provisional
            else:
                best = neigh[0]
                for k in range(1, n_neigh):
                    if neigh[k] < best:
                        best = neigh[k]
                labels[y, x] = best
                for k in range(n_neigh):
                    if neigh[k] != best:
                        _union(par, neigh[k], best)

    remap_arr = np.zeros(provisional + 1, dtype=np.int32)
    cdef cnp.int32_t[::1] remap = remap_arr
    count = 0
    for y in range(h):
        for x in range(w):
            lab = labels[y, x]
            if lab == 0:
                continue
            lab = _find(par, lab)
            if remap[lab] == 0:
                count += 1
                remap[lab] = count
            labels[y, x] = remap[lab]
    return labels_arr, count


def overlap_sums(const double[:, ::1] pred, const cnp.uint8_t[:, ::1] gt):
    """Single pass over the grids: (sum of p, sum of g, sum of p*g)."""
    cdef Py_ssize_t h = pred.shape[0]
    cdef Py_ssize_t w = pred.shape[1]
    cdef double sum_p = 0.0, sum_g = 0.0, sum_pg = 0.0
    cdef double p
    cdef Py_ssize_t x, y
    for y in range(h):
        for x in range(w):
            p = pred[y, x]
            sum_p += p
            if gt[y, x] != 0:
                sum_g += 1.0
                sum_pg += p
    return sum_p, sum_g, sum_pg


def focal_value_grad(
    const double[:, ::1] pred,
    const cnp.uint8_t[:, ::1] gt,
    double alpha,
    double gamma,
    double delta,
    bint want_grad,
):
    """Pixel-averaged binary focal loss and (optionally) d(loss)/d(pred);
    same definition as the fallback backend, including the zero-gradient
    clamp region."""
    cdef Py_ssize_t h = pred.shape[0]
    cdef Py_ssize_t w = pred.shape[1]
    cdef double n = <double> (h * w)
    cdef double hi = 1.0 - delta
    cdef double total = 0.0
    cdef double p, q, one_m_q, term, dterm
    cdef Py_ssize_t x, y
    cdef cnp.float64_t[:, ::1] grad
    grad_arr = None
    if want_grad:
        grad_arr = np.zeros((h, w), dtype=np.float64)
        grad = grad_arr

    for y in range(h):
        for x in range(w):
            p = pred[y, x]
            q = p
            if q < delta:
                q = delta
            elif q > hi:
                q = hi
            one_m_q = 1.0 - q
            if gt[y, x] != 0:
                term = alpha * pow(one_m_q, gamma) * log(q)
                if gamma == 0.0:
                    dterm = alpha * (pow(one_m_q, gamma) / q)
                else:
                    dterm = alpha * (
                        -gamma * pow(one_m_q, gamma - 1.0) * log(q)
                        + pow(one_m_q, gamma) / q
                    )
            else:
                term = (1.0 - alpha) * pow(q, gamma) * log(one_m_q)
                if gamma == 0.0:
                    dterm = (1.0 - alpha) * (-pow(q, gamma) / one_m_q)
                else:
                    dterm = (1.0 - alpha) * (
                        gamma * pow(q, gamma - 1.0) * log(one_m_q)
                        - pow(q, gamma) / one_m_q
                    )
            total += term
            if want_grad:
                if p > delta and p < hi:
                    grad[y, x] = -dterm / n
                else:
                    grad[y, x] = 0.0
    return -total / n, grad_arr

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Must stay numerically in step with ``_fallback.py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef inline double _sign(double x) nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def walk_step(const int[::1] indptr, const int[::1] indices, const double[::1] prob):
    """Spread each node's mass uniformly over its CSR out-neighbors."""
    cdef Py_ssize_t n = prob.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t u, p, start, stop
    cdef double share
    with nogil:
        for u in range(n):
            start = indptr[u]
            stop = indptr[u + 1]
            if stop == start or prob[u] == 0.0:
                continue
            share = prob[u] / (stop - start)
            for p in range(start, stop):
                out[indices[p]] += share
    return out_arr


def transe_margin_epoch(double[:, ::1] E, double[:, ::1] R,
                        const long long[:, ::1] pos, const long long[:, ::1] neg,
                        double lr, double lam, double margin, bint l1, bint normalize):
    """One pass of pairwise margin SGD for TransE, updating ``E`` and ``R`` in place.

    Returns the summed hinge loss (evaluated before each step).
    """
    cdef Py_ssize_t n = pos.shape[0], h = E.shape[1]
    cdef Py_ssize_t t, a, q, m
    cdef long long rows[4]
    cdef long long rrows[2]
    cdef Py_ssize_t nrows, nrrows
    cdef double fp, fn, v, loss, total = 0.0, shrink, norm
    gE_arr = np.zeros((4, h), dtype=np.float64)
    gR_arr = np.zeros((2, h), dtype=np.float64)
    dp_arr = np.zeros(h, dtype=np.float64)
    dn_arr = np.zeros(h, dtype=np.float64)
    cdef double[:, ::1] gE = gE_arr
    cdef double[:, ::1] gR = gR_arr
    cdef double[::1] dp = dp_arr
    cdef double[::1] dn = dn_arr
    cdef long long ps, pk, po, ns, nk, no
    cdef long long trip[4]
    cdef int slot[4]
    cdef int rslot[2]
    shrink = 1.0 + lr * lam
    with nogil:
        for t in range(n):
            ps = pos[t, 0]; pk = pos[t, 1]; po = pos[t, 2]
            ns = neg[t, 0]; nk = neg[t, 1]; no = neg[t, 2]
            fp = 0.0
            fn = 0.0
            for a in range(h):
                dp[a] = E[ps, a] + R[pk, a] - E[po, a]
                dn[a] = E[ns, a] + R[nk, a] - E[no, a]
                if l1:
                    fp -= fabs(dp[a])
                    fn -= fabs(dn[a])
                else:
                    fp -= dp[a] * dp[a]
                    fn -= dn[a] * dn[a]
            loss = margin + fn - fp
            if loss < 0.0:
                loss = 0.0
            total += loss

            # unique touched rows, in the order neg-subject, neg-object, pos-subject, pos-object
            trip[0] = ns; trip[1] = no; trip[2] = ps; trip[3] = po
            nrows = 0
            for q in range(4):
                slot[q] = -1
                for m in range(nrows):
                    if rows[m] == trip[q]:
                        slot[q] = m
                        break
                if slot[q] < 0:
                    rows[nrows] = trip[q]
                    slot[q] = nrows
                    nrows += 1
            nrrows = 1
            rrows[0] = nk
            rslot[0] = 0
            rslot[1] = 0
            if pk != nk:
                rrows[1] = pk
                rslot[1] = 1
                nrrows = 2
            for m in range(nrows):
                for a in range(h):
                    gE[m, a] = 0.0
            for m in range(nrrows):
                for a in range(h):
                    gR[m, a] = 0.0

            if loss > 0.0:
                # d loss = d f(neg) - d f(pos); d f/d e_s = -u, d f/d e_o = u, d f/d r = -u
                for a in range(h):
                    if l1:
                        v = _sign(dn[a])
                    else:
                        v = 2.0 * dn[a]
                    gE[slot[0], a] += -v
                    gE[slot[1], a] += v
                    gR[rslot[0], a] += -v
                for a in range(h):
                    if l1:
                        v = _sign(dp[a])
                    else:
                        v = 2.0 * dp[a]
                    gE[slot[2], a] -= -v
                    gE[slot[3], a] -= v
                    gR[rslot[1], a] -= -v

            for m in range(nrows):
                for a in range(h):
                    E[rows[m], a] = (E[rows[m], a] - lr * gE[m, a]) / shrink
                if normalize:
                    norm = 0.0
                    for a in range(h):
                        norm += E[rows[m], a] * E[rows[m], a]
                    norm = sqrt(norm)
                    if norm > 0.0 and fabs(norm - 1.0) > 1e-12:
                        for a in range(h):
                            E[rows[m], a] /= norm
            for m in range(nrrows):
                for a in range(h):
                    R[rrows[m], a] = (R[rrows[m], a] - lr * gR[m, a]) / shrink
    return total

# cython: language_level=3
"""Compiled training kernels; semantics match ``_pykernels`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs

cnp.import_array()

cdef double EPS = 1e-12


cdef inline double _clamp(double p) nogil:
    if p < EPS:
        return EPS
    if p > 1.0 - EPS:
        return 1.0 - EPS
    return p


cdef inline double _sigmoid(double z) nogil:
    cdef double e = exp(-fabs(z))
    if z >= 0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


cdef double _softmax_accum(const double[:, ::1] X, const cnp.int64_t[::1] y,
                           const cnp.int64_t[::1] idx, Py_ssize_t lo, Py_ssize_t hi,
                           const double[:, ::1] W, const double[::1] b,
                           const double[::1] cw, double[:, ::1] gW, double[::1] gb,
                           double[::1] z) nogil:
    cdef Py_ssize_t C = W.shape[0], d = W.shape[1]
    cdef Py_ssize_t t, i, c, k
    cdef double loss = 0.0, m, s, g, wy
    cdef cnp.int64_t yi
    for t in range(lo, hi):
        i = idx[t]
        yi = y[i]
        wy = cw[yi]
        for c in range(C):
            s = b[c]
            for k in range(d):
                s += W[c, k] * X[i, k]
            z[c] = s
        m = z[0]
        for c in range(1, C):
            if z[c] > m:
                m = z[c]
        s = 0.0
        for c in range(C):
            z[c] = exp(z[c] - m)
            s += z[c]
        for c in range(C):
            z[c] = z[c] / s
        loss += wy * -log(_clamp(z[yi]))
        for c in range(C):
            g = z[c]
            if c == yi:
                g -= 1.0
            g *= wy
            gb[c] += g
            for k in range(d):
                gW[c, k] += g * X[i, k]
    return loss


cdef double _splc_accum(const double[:, ::1] X, const cnp.int64_t[::1] y,
                        const cnp.int64_t[::1] idx, Py_ssize_t lo, Py_ssize_t hi,
                        const double[::1] v, double b, double tau,
                        cnp.uint8_t[::1] flipped, bint sticky,
                        double[::1] gv, double* gb, Py_ssize_t* ncorr) nogil:
    cdef Py_ssize_t d = v.shape[0]
    cdef Py_ssize_t t, i, k
    cdef double loss = 0.0, s, p, pc, dz
    cdef bint corrected
    for t in range(lo, hi):
        i = idx[t]
        s = b
        for k in range(d):
            s += v[k] * X[i, k]
        p = _sigmoid(s)
        pc = _clamp(p)
        if y[i] == 1:
            corrected = p <= tau or flipped[i] != 0
            if corrected:
                ncorr[0] += 1
                if sticky and tau >= 0:
                    flipped[i] = 1
                loss += -log(1.0 - pc)
                dz = p
            else:
                loss += -log(pc)
                dz = p - 1.0
        else:
            loss += -log(1.0 - pc)
            dz = p
        gb[0] += dz
        for k in range(d):
            gv[k] += dz * X[i, k]
    return loss


def softmax_cce_batch(X, y, W, b, cw):
    """Weighted CCE summed over rows, and the gradient of that sum w.r.t. W, b."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = np.arange(Xv.shape[0], dtype=np.int64)
    Wc = np.ascontiguousarray(W, dtype=np.float64)
    gW = np.zeros_like(Wc)
    gb = np.zeros(Wc.shape[0])
    z = np.empty(Wc.shape[0])
    loss = _softmax_accum(Xv, yv, idx, 0, Xv.shape[0], Wc,
                          np.ascontiguousarray(b, dtype=np.float64),
                          np.ascontiguousarray(cw, dtype=np.float64), gW, gb, z)
    return loss, gW, gb


def splc_batch(X, y, v, double b, double tau, flipped):
    """SPLC loss summed over rows, gradient of the sum, and count of corrected positives."""
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef cnp.int64_t[::1] idx = np.arange(Xv.shape[0], dtype=np.int64)
    cdef cnp.uint8_t[::1] fl = np.array(flipped, dtype=np.uint8)
    gv = np.zeros(Xv.shape[1])
    cdef double gb = 0.0
    cdef Py_ssize_t ncorr = 0
    loss = _splc_accum(Xv, yv, idx, 0, Xv.shape[0],
                       np.ascontiguousarray(v, dtype=np.float64), b, tau,
                       fl, False, gv, &gb, &ncorr)
    return loss, gv, gb, ncorr


def softmax_epoch(const double[:, ::1] X, const cnp.int64_t[::1] y,
                  double[:, ::1] W, double[::1] b, const double[::1] cw,
                  const cnp.int64_t[::1] order, Py_ssize_t batch_size,
                  double lr, double l2):
    """One pass of minibatch gradient descent on the mean weighted CCE, in place."""
    cdef Py_ssize_t C = W.shape[0], d = W.shape[1], n = order.shape[0]
    cdef double[:, ::1] gW = np.zeros((C, d))
    cdef double[::1] gb = np.zeros(C)
    cdef double[::1] z = np.empty(C)
    cdef Py_ssize_t lo, hi, c, k
    cdef double total = 0.0, m
    with nogil:
        lo = 0
        while lo < n:
            hi = lo + batch_size
            if hi > n:
                hi = n
            for c in range(C):
                gb[c] = 0.0
                for k in range(d):
                    gW[c, k] = 0.0
            total += _softmax_accum(X, y, order, lo, hi, W, b, cw, gW, gb, z)
            m = <double>(hi - lo)
            for c in range(C):
                for k in range(d):
                    W[c, k] -= lr * (gW[c, k] / m + l2 * W[c, k])
                b[c] -= lr * (gb[c] / m)
            lo = hi
    return total


def splc_epoch(const double[:, ::1] X, const cnp.int64_t[::1] y,
               double[::1] v, double[::1] b, const cnp.int64_t[::1] order,
               Py_ssize_t batch_size, double lr, double l2, double tau,
               cnp.uint8_t[::1] flipped, bint sticky):
    """One pass of minibatch descent on the mean SPLC loss; ``b`` is a length-1 array."""
    cdef Py_ssize_t d = v.shape[0], n = order.shape[0]
    cdef double[::1] gv = np.zeros(d)
    cdef double gb, total = 0.0, m
    cdef Py_ssize_t lo, hi, k, ncorr = 0
    with nogil:
        lo = 0
        while lo < n:
            hi = lo + batch_size
            if hi > n:
                hi = n
            gb = 0.0
            for k in range(d):
                gv[k] = 0.0
            total += _splc_accum(X, y, order, lo, hi, v, b[0], tau, flipped,
                                 sticky, gv, &gb, &ncorr)
            m = <double>(hi - lo)
            for k in range(d):
                v[k] -= lr * (gv[k] / m + l2 * v[k])
            b[0] -= lr * (gb / m)
            lo = hi
    return total

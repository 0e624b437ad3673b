# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) kernel for piecewise Lotka-Volterra systems.

Same algorithm, constants and control flow as ``_pykernel.py``; the two are
compared against each other in the test-suite and in ``benchmarks/``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, floor, cos, sin, pow, isfinite, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    OK = 0
    BLOWUP = 1
    MAX_STEPS = 2
    STEP_UNDERFLOW = 3

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784
cdef double B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40
cdef double SAFETY = 0.9, FAC_MIN = 0.2, FAC_MAX = 5.0


cdef struct Table:
    int P
    int d
    int nh
    double T
    double omega
    const double *bp
    const double *R     # (P, d, nh)
    const double *A     # (P, d, d, nh)


cdef struct Work:
    double *x
    double *basis
    double *rvec
    double *k1
    double *k2
    double *k3
    double *k4
    double *k5
    double *k6
    double *k7
    double *ytmp
    double *yn
    double *e


cdef inline void rates(const Table *tb, Work *w, int k, double tau,
                       const double *y, const char *mask, double *out) noexcept nogil:
    cdef int d = tb.d, nh = tb.nh, i, j, q
    cdef double s, aij
    cdef const double *Rk = tb.R + k * d * nh
    cdef const double *Ak = tb.A + k * d * d * nh
    for i in range(d):
        w.x[i] = exp(y[i]) if mask[i] else 0.0
    if nh == 1:
        for i in range(d):
            s = Rk[i]
            for j in range(d):
                s -= Ak[i * d + j] * w.x[j]
            out[i] = s
        return
    w.basis[0] = 1.0
    for q in range(1, nh // 2 + 1):
        w.basis[2 * q - 1] = cos(q * tb.omega * tau)
        w.basis[2 * q] = sin(q * tb.omega * tau)
    for i in range(d):
        s = 0.0
        for q in range(nh):
            s += Rk[i * nh + q] * w.basis[q]
        w.rvec[i] = s
    for i in range(d):
        s = w.rvec[i]
        for j in range(d):
            aij = 0.0
            for q in range(nh):
                aij += Ak[(i * d + j) * nh + q] * w.basis[q]
            s -= aij * w.x[j]
        out[i] = s


cdef inline int searchsorted(const double *bp, int n, double v, bint right) noexcept nogil:
    # index of first bp element > v (right) or >= v (left)
    cdef int lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if (bp[mid] <= v) if right else (bp[mid] < v):
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef int integrate_one(const Table *tb, Work *w, double t0, double t1, double *y,
                       const char *mask, double tol, double cap, long max_steps,
                       double *est_out, long *steps_out, double *tstop) noexcept nogil:
    cdef int d = tb.d, P = tb.P, i, k
    cdef double T = tb.T
    cdef double n, tau, target, seg_end, end, span, h = 0.0, remaining, hs
    cdef double err, fac, scale, v, xs, est = 0.0
    cdef bint backward, last, final
    cdef long steps = 0
    cdef double sgn
    cdef double *tmp
    est_out[0] = 0.0
    steps_out[0] = 0
    tstop[0] = t0
    if t1 == t0:
        return OK
    backward = t1 < t0
    sgn = -1.0 if backward else 1.0
    n = floor(t0 / T)
    tau = t0 - n * T
    if tau >= T:
        n += 1
        tau -= T
    if tau < 0.0:
        n -= 1
        tau += T
    if backward:
        if tau == 0.0:
            n -= 1
            tau = T
        k = searchsorted(tb.bp, P + 1, tau, False) - 1
    else:
        k = searchsorted(tb.bp, P + 1, tau, True) - 1
    if k < 0:
        k = 0
    if k > P - 1:
        k = P - 1

    while True:
        target = t1 - n * T
        if backward:
            seg_end = tb.bp[k]
            last = target >= seg_end
        else:
            seg_end = tb.bp[k + 1]
            last = target <= seg_end
        end = target if last else seg_end
        span = end - tau
        if span != 0.0:
            rates(tb, w, k, tau, y, mask, w.k1)
            if h == 0.0:
                scale = 1e-3
                for i in range(d):
                    if fabs(w.k1[i]) > scale:
                        scale = fabs(w.k1[i])
                h = 0.5 * pow(tol, 0.2) / scale
            while True:
                remaining = end - tau
                final = fabs(remaining) <= h * (1.0 + 1e-12)
                hs = remaining if final else sgn * h
                for i in range(d):
                    w.ytmp[i] = y[i] + hs * (A21 * w.k1[i])
                rates(tb, w, k, tau + C2 * hs, w.ytmp, mask, w.k2)
                for i in range(d):
                    w.ytmp[i] = y[i] + hs * (A31 * w.k1[i] + A32 * w.k2[i])
                rates(tb, w, k, tau + C3 * hs, w.ytmp, mask, w.k3)
                for i in range(d):
                    w.ytmp[i] = y[i] + hs * (A41 * w.k1[i] + A42 * w.k2[i] + A43 * w.k3[i])
                rates(tb, w, k, tau + C4 * hs, w.ytmp, mask, w.k4)
                for i in range(d):
                    w.ytmp[i] = y[i] + hs * (A51 * w.k1[i] + A52 * w.k2[i] + A53 * w.k3[i]
                                             + A54 * w.k4[i])
                rates(tb, w, k, tau + C5 * hs, w.ytmp, mask, w.k5)
                for i in range(d):
                    w.ytmp[i] = y[i] + hs * (A61 * w.k1[i] + A62 * w.k2[i] + A63 * w.k3[i]
                                             + A64 * w.k4[i] + A65 * w.k5[i])
                rates(tb, w, k, tau + hs, w.ytmp, mask, w.k6)
                for i in range(d):
                    w.yn[i] = y[i] + hs * (B1 * w.k1[i] + B3 * w.k3[i] + B4 * w.k4[i]
                                           + B5 * w.k5[i] + B6 * w.k6[i])
                rates(tb, w, k, tau + hs, w.yn, mask, w.k7)
                err = 0.0
                for i in range(d):
                    w.e[i] = hs * (E1 * w.k1[i] + E3 * w.k3[i] + E4 * w.k4[i] + E5 * w.k5[i]
                                   + E6 * w.k6[i] + E7 * w.k7[i])
                    v = fabs(w.e[i])
                    if v > err or not isfinite(v):
                        err = v
                err = err / tol
                steps += 1
                if not isfinite(err):
                    est_out[0] = est
                    steps_out[0] = steps
                    tstop[0] = n * T + tau
                    return BLOWUP
                if err <= 1.0:
                    if err == 0.0:
                        fac = FAC_MAX
                    else:
                        fac = SAFETY * pow(err, -0.2)
                        if fac < FAC_MIN:
                            fac = FAC_MIN
                        if fac > FAC_MAX:
                            fac = FAC_MAX
                    v = 0.0
                    for i in range(d):
                        xs = exp(w.yn[i]) if mask[i] else 1.0
                        if fabs(w.e[i]) * xs > v:
                            v = fabs(w.e[i]) * xs
                    est += v
                    for i in range(d):
                        y[i] = w.yn[i]
                    tau = end if final else tau + hs
                    tmp = w.k1
                    w.k1 = w.k7
                    w.k7 = tmp
                    for i in range(d):
                        if mask[i] and y[i] > cap:
                            est_out[0] = est
                            steps_out[0] = steps
                            tstop[0] = n * T + tau
                            return BLOWUP
                    if not final:
                        h = fabs(hs) * fac
                    elif fabs(hs) >= h:
                        h = fabs(hs) * fac
                    if final:
                        break
                else:
                    fac = SAFETY * pow(err, -0.2)
                    if fac < FAC_MIN:
                        fac = FAC_MIN
                    h = fabs(hs) * fac
                    v = fabs(n * T + tau)
                    if v < 1.0:
                        v = 1.0
                    if h < 1e-14 * v:
                        est_out[0] = est
                        steps_out[0] = steps
                        tstop[0] = n * T + tau
                        return STEP_UNDERFLOW
                if steps >= max_steps:
                    est_out[0] = est
                    steps_out[0] = steps
                    tstop[0] = n * T + tau
                    return MAX_STEPS
        if last:
            est_out[0] = est
            steps_out[0] = steps
            tstop[0] = t1
            return OK
        if backward:
            k -= 1
            if k < 0:
                k = P - 1
                n -= 1
                tau = T
            else:
                tau = tb.bp[k + 1]
        else:
            k += 1
            if k == P:
                k = 0
                n += 1
                tau = 0.0
            else:
                tau = tb.bp[k]


def integrate_lv_batch(double[::1] bp, double[:, :, ::1] R, double[:, :, :, ::1] A,
                       double T, double t0, double t1, Y0, masks, double tol,
                       double cap=700.0, long max_steps=1000000):
    """Integrate every row of ``Y0`` independently (GIL released)."""
    cdef double[:, ::1] Y = np.array(Y0, dtype=np.float64, order="C", copy=True)
    cdef char[:, ::1] M = np.ascontiguousarray(masks, dtype=np.int8)
    cdef Py_ssize_t nrows = Y.shape[0], row
    cdef int d = Y.shape[1]
    est_arr = np.zeros(nrows)
    steps_arr = np.zeros(nrows, dtype=np.int64)
    status_arr = np.zeros(nrows, dtype=np.int64)
    tstop_arr = np.zeros(nrows)
    cdef double[::1] est = est_arr
    cdef long long[::1] steps = steps_arr
    cdef long long[::1] status = status_arr
    cdef double[::1] tstop = tstop_arr
    cdef Table tb
    cdef Work w
    cdef double *buf
    cdef long nsteps
    if R.shape[1] != d or A.shape[1] != d or A.shape[2] != d or R.shape[0] != A.shape[0]:
        raise ValueError("coefficient tables do not match state dimension")
    if R.shape[2] != A.shape[3] or bp.shape[0] != R.shape[0] + 1:
        raise ValueError("inconsistent coefficient tables")
    tb.P = R.shape[0]
    tb.d = d
    tb.nh = R.shape[2]
    tb.T = T
    tb.omega = 2.0 * M_PI / T
    tb.bp = &bp[0]
    tb.R = &R[0, 0, 0]
    tb.A = &A[0, 0, 0, 0]
    if nrows == 0:
        return np.asarray(Y), est_arr, steps_arr, status_arr, tstop_arr
    buf = <double *> malloc(sizeof(double) * (13 * d + tb.nh))
    if buf == NULL:
        raise MemoryError()
    w.x = buf
    w.rvec = buf + d
    w.k1 = buf + 2 * d
    w.k2 = buf + 3 * d
    w.k3 = buf + 4 * d
    w.k4 = buf + 5 * d
    w.k5 = buf + 6 * d
    w.k6 = buf + 7 * d
    w.k7 = buf + 8 * d
    w.ytmp = buf + 9 * d
    w.yn = buf + 10 * d
    w.e = buf + 11 * d
    w.basis = buf + 13 * d
    try:
        with nogil:
            for row in range(nrows):
                status[row] = integrate_one(&tb, &w, t0, t1, &Y[row, 0], &M[row, 0], tol,
                                            cap, max_steps, &est[row], &nsteps, &tstop[row])
                steps[row] = nsteps
    finally:
        free(buf)
    return np.asarray(Y), est_arr, steps_arr, status_arr, tstop_arr

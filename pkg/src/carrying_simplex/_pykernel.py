"""Pure-Python Dormand-Prince 5(4) integrator in log coordinates.

The state is ``y`` with ``x_i = exp(y_i)`` on the support face and
``x_i = 0`` elsewhere; off-support entries of ``y`` accumulate
``int g_i dt`` instead (this is what the fitness functions need).  Time is
carried as ``n T + tau`` with ``tau`` local to one smooth piece, and every
step ends exactly on a breakpoint it would otherwise cross.

This module mirrors ``_ckernel.pyx`` line for line; keep them in sync.
"""
import math

import numpy as np

OK, BLOWUP, MAX_STEPS, STEP_UNDERFLOW = 0, 1, 2, 3

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)

SAFETY, FAC_MIN, FAC_MAX = 0.9, 0.2, 5.0


def _locate(bp, T, t, backward):
    """Split ``t`` into ``(n, tau, k)``; backward puts ``tau`` in ``(bp[k], bp[k+1]]``."""
    P = len(bp) - 1
    n = math.floor(t / T)
    tau = t - n * T
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
        k = int(np.searchsorted(bp, tau, side="left")) - 1
    else:
        k = int(np.searchsorted(bp, tau, side="right")) - 1
    return n, tau, min(max(k, 0), P - 1)


def integrate(rates, bp, T, t0, t1, y0, mask, tol, cap=700.0, max_steps=1_000_000):
    """Integrate ``y' = g(t, x(y))`` from ``t0`` to ``t1``.

    Parameters
    ----------
    rates : callable
        ``rates(k, tau, x) -> g`` evaluating piece ``k`` at local time ``tau``.
    bp : ndarray
        Breakpoints ``0 = tau_0 < ... < tau_P = T``.
    mask : ndarray of bool
        Support of the initial point.

    Returns
    -------
    y, est_error, steps, status, t_stop
    """
    y = np.array(y0, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if t1 == t0:
        return y, 0.0, 0, OK, t0
    backward = t1 < t0
    sgn = -1.0 if backward else 1.0
    P = len(bp) - 1
    n, tau, k = _locate(bp, T, t0, backward)

    def f(k, tau, y):
        x = np.where(mask, np.exp(np.where(mask, y, 0.0)), 0.0)
        return rates(k, tau, x)

    steps = 0
    est = 0.0
    h = 0.0
    while True:
        target = t1 - n * T
        if backward:
            seg_end = bp[k]
            last = target >= seg_end
            end = target if last else seg_end
        else:
            seg_end = bp[k + 1]
            last = target <= seg_end
            end = target if last else seg_end
        span = end - tau
        if span != 0.0:
            k1 = f(k, tau, y)
            if h == 0.0:
                scale = max(float(np.max(np.abs(k1))), 1e-3)
                h = 0.5 * tol ** 0.2 / scale
            while True:
                remaining = end - tau
                final = abs(remaining) <= h * (1.0 + 1e-12)
                hs = remaining if final else sgn * h
                k2 = f(k, tau + C2 * hs, y + hs * (A21 * k1))
                k3 = f(k, tau + C3 * hs, y + hs * (A31 * k1 + A32 * k2))
                k4 = f(k, tau + C4 * hs, y + hs * (A41 * k1 + A42 * k2 + A43 * k3))
                k5 = f(k, tau + C5 * hs, y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
                k6 = f(k, tau + hs, y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4
                                              + A65 * k5))
                yn = y + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
                k7 = f(k, tau + hs, yn)
                e = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
                err = float(np.max(np.abs(e))) / tol
                steps += 1
                if not math.isfinite(err):
                    return y, est, steps, BLOWUP, n * T + tau
                if err <= 1.0:
                    fac = FAC_MAX if err == 0.0 else min(FAC_MAX, max(FAC_MIN, SAFETY * err ** -0.2))
                    xs = np.where(mask, np.exp(np.where(mask, yn, 0.0)), 0.0)
                    est += float(np.max(np.abs(e) * np.where(mask, xs, 1.0)))
                    y = yn
                    tau = end if final else tau + hs
                    k1 = k7
                    if np.any(y[mask] > cap):
                        return y, est, steps, BLOWUP, n * T + tau
                    if not final:
                        h = abs(hs) * fac
                    elif abs(hs) >= h:
                        h = abs(hs) * fac
                    if final:
                        break
                else:
                    h = abs(hs) * max(FAC_MIN, SAFETY * err ** -0.2)
                    if h < 1e-14 * max(1.0, abs(n * T + tau)):
                        return y, est, steps, STEP_UNDERFLOW, n * T + tau
                if steps >= max_steps:
                    return y, est, steps, MAX_STEPS, n * T + tau
        if last:
            return y, est, steps, OK, t1
        if backward:
            k -= 1
            if k < 0:
                k = P - 1
                n -= 1
                tau = T
            else:
                tau = bp[k + 1]
        else:
            k += 1
            if k == P:
                k = 0
                n += 1
                tau = 0.0
            else:
                tau = bp[k]


def lv_rates(R, A, omega):
    """Rate callable for packed LV tables ``R[k] (d, nh)``, ``A[k] (d, d, nh)``."""
    nh = R.shape[-1]
    basis = np.empty(nh)

    if nh == 1:
        r0 = R[:, :, 0]
        a0 = A[:, :, :, 0]

        def rates(k, tau, x):
            return r0[k] - a0[k] @ x
        return rates

    def rates(k, tau, x):
        basis[0] = 1.0
        for j in range(1, nh // 2 + 1):
            basis[2 * j - 1] = math.cos(j * omega * tau)
            basis[2 * j] = math.sin(j * omega * tau)
        return R[k] @ basis - (A[k] @ basis) @ x
    return rates


def integrate_lv_batch(bp, R, A, T, t0, t1, Y0, masks, tol, cap=700.0,
                       max_steps=1_000_000):
    """Integrate every row of ``Y0`` independently; returns arrays per row."""
    rates = lv_rates(R, A, 2.0 * math.pi / T)
    Y0 = np.asarray(Y0, dtype=float)
    out = np.empty_like(Y0)
    est = np.zeros(len(Y0))
    steps = np.zeros(len(Y0), dtype=np.int64)
    status = np.zeros(len(Y0), dtype=np.int64)
    tstop = np.zeros(len(Y0))
    for row in range(len(Y0)):
        out[row], est[row], steps[row], status[row], tstop[row] = integrate(
            rates, bp, T, t0, t1, Y0[row], masks[row], tol, cap, max_steps)
    return out, est, steps, status, tstop

"""Period map, its Kolmogorov factorization, and axis dynamics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HypothesisFailure, InputError, NumericalError
from .flow import DEFAULT_TOL, flow, flow_many
from .model import SystemSpec, normalize

DEFAULT_KAPPA = 0.1


@dataclass(frozen=True)
class AxisProfile:
    """Positive fixed point of the axis map ``H_i`` and its periodic orbit."""

    i: int
    xhat: float
    psi: np.ndarray  # rows (t, x)
    iterations: int
    residual: float
    iterates: tuple = ()

    def to_dict(self) -> dict:
        return {"i": self.i, "xhat": self.xhat, "residual": self.residual,
                "iterations": self.iterations, "psi_samples": self.psi.tolist()}


def poincare_map(spec: SystemSpec, x, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``P(x) = Phi(T; 0, x)``."""
    return flow(spec, 0.0, spec.T, x, tol).x


def poincare_map_many(spec: SystemSpec, X, tol: float = DEFAULT_TOL, threads=1) -> np.ndarray:
    return flow_many(spec, 0.0, spec.T, X, tol, threads=threads)


def poincare_iter(spec: SystemSpec, x, n: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``P^n(x)`` by ``n`` successive single-period integrations."""
    if n < 0:
        raise InputError("n must be >= 0")
    x = np.asarray(x, dtype=float)
    for _ in range(n):
        x = poincare_map(spec, x, tol)
    return x


def fitness(spec: SystemSpec, x, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``f_i(x) = exp(int_0^T g_i(t, Phi(t; 0, x)) dt)``, so that ``P_i(x) = x_i f_i(x)``.

    The integral is accumulated alongside the trajectory, so it is defined on
    the boundary of the cone as well.
    """
    return np.exp(flow(spec, 0.0, spec.T, x, tol).log_growth)


def axis_map(spec: SystemSpec, i: int, x: float, tol: float = DEFAULT_TOL) -> float:
    """``H_i(x) = phi_i(T; 0, x)``, the period map restricted to the ``i``-th axis."""
    if x < 0:
        raise InputError("axis coordinate must be nonnegative")
    if not 0 <= i < spec.d:
        raise InputError("species index out of range")
    if x == 0:
        return 0.0
    p = np.zeros(spec.d)
    p[i] = x
    return float(poincare_map(spec, p, tol)[i])


def axis_fixed_point(spec: SystemSpec, i: int, tol: float = DEFAULT_TOL,
                     M_search: float = 2.0**10, max_iter: int = 10_000,
                     bisect_tol: float = 1e-12, residual_tol: float = 1e-8,
                     psi_samples: int = 33) -> AxisProfile:
    """Locate the unique positive fixed point of ``H_i``.

    Steps: doubling search for ``M`` with ``H_i(M) <= M``; the decreasing
    iteration ``H_i^n(M)`` until the steps are small; expansion of a lower
    bracket with ``H_i(lo) > lo``; bisection on ``H_i(x) - x``.
    """
    H = lambda v: axis_map(spec, i, v, tol)  # noqa: E731
    M = 1.0
    while H(M) > M:
        M *= 2.0
        if M > M_search:
            raise HypothesisFailure("H3tilde", f"no M <= {M_search} with H_{i}(M) <= M")

    iterates = [M]
    x = M
    for _ in range(max_iter):
        xn = H(x)
        iterates.append(xn)
        if xn == x or x - xn <= 1e-3 * max(1.0, x):
            x = xn
            break
        x = xn
    else:
        raise NumericalError(f"monotone iteration on axis {i} stalled above tolerance")
    hi = x
    if H(hi) > hi:  # landed below the fixed point through round-off
        lo, hi = hi, iterates[-2]
    else:
        step = max(iterates[-2] - iterates[-1], 1e-6 * max(1.0, hi))
        lo = hi - 2.0 * step
        while lo > 0 and H(lo) <= lo:
            step *= 2.0
            lo = hi - 2.0 * step
        if lo <= 0:
            lo = hi
            while H(lo) <= lo:
                lo /= 2.0
                if lo < 1e-300:
                    raise HypothesisFailure("H2", f"origin does not repel on axis {i}")
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if H(mid) > mid:
            lo = mid
        else:
            hi = mid
    xhat = 0.5 * (lo + hi)
    residual = abs(H(xhat) - xhat)
    if residual > residual_tol:
        raise NumericalError(f"axis {i}: residual {residual:.3e} above {residual_tol:.1e}")
    p = np.zeros(spec.d)
    p[i] = xhat
    ts = np.linspace(0.0, spec.T, psi_samples)
    psi = np.empty((psi_samples, 2))
    psi[0] = (0.0, xhat)
    cur = p
    for j in range(1, psi_samples):
        cur = flow(spec, ts[j - 1], ts[j], cur, tol).x
        psi[j] = (ts[j], cur[i])
    return AxisProfile(i, float(xhat), psi, len(iterates) - 1, float(residual), tuple(iterates))


def compute_all_axis_profiles(spec: SystemSpec, tol: float = DEFAULT_TOL, **kw) -> list:
    return [axis_fixed_point(spec, i, tol, **kw) for i in range(spec.d)]


def normalize_spec(spec: SystemSpec, tol: float = DEFAULT_TOL, **kw):
    """Return ``(normalized spec, profiles of the original spec)``."""
    profiles = compute_all_axis_profiles(spec, tol, **kw)
    return normalize(spec, [p.xhat for p in profiles]), profiles

"""The process ``Phi(t; t0, x0)`` and the extended flow on ``torus x C+``.

Integration runs in log coordinates on the support face of ``x0``, so
positivity and face invariance hold by construction: coordinates outside the
support are exact zeros throughout.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend, _pykernel
from .errors import BlowUp, InputError, NumericalError
from .model import SystemSpec

DEFAULT_TOL = 1e-10
DEFAULT_CAP = 700.0
# per-step error target relative to the requested global tolerance; backward
# integration amplifies forward errors, so the local target is set tighter
LOCAL_TOL_FACTOR = 0.1
# a step-size underflow with some x_i above e^20 is a finite-time blow-up
BLOWUP_LOG = 20.0


@dataclass(frozen=True)
class FlowResult:
    """Value of ``Phi(t1; t0, x0)`` with bookkeeping.

    ``log_growth[i]`` is ``int_{t0}^{t1} g_i(t, Phi(t; t0, x0)) dt``, valid
    for every species including those outside the support.
    """

    x: np.ndarray
    t0: float
    t1: float
    est_error: float
    support: tuple
    steps: int
    log_growth: np.ndarray


@dataclass(frozen=True)
class TorusPoint:
    """A point of the circle ``R / T Z`` stored by its representative in ``[0, T)``."""

    s: float
    T: float

    @classmethod
    def of(cls, s: float, T: float) -> "TorusPoint":
        r = math.fmod(s, T)
        if r < 0.0:
            r += T
        if r >= T:
            r = 0.0
        return cls(r, T)

    def __float__(self):
        return self.s


def torus_distance(s1: float, s2: float, T: float) -> float:
    """``min(|s1 - s2|, T - |s1 - s2|)`` on representatives in ``[0, T)``."""
    delta = abs(TorusPoint.of(s1, T).s - TorusPoint.of(s2, T).s)
    return min(delta, T - delta)


def _prepare(spec, X0):
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != spec.d:
        raise InputError(f"points must have {spec.d} coordinates")
    if not np.all(np.isfinite(X0)) or np.any(X0 < 0):
        raise InputError("points must be finite and nonnegative")
    masks = X0 > 0
    with np.errstate(divide="ignore"):
        Y0 = np.where(masks, np.log(np.where(masks, X0, 1.0)), 0.0)
    return X0, Y0, masks


def _run(spec, t0, t1, Y0, masks, tol, cap, threads, backend):
    if spec.is_lv:
        bp, R, A = spec.tables
        integ = _backend.get_batch_integrator(backend)
        if threads is None:
            threads = os.cpu_count() or 1
        if threads <= 1 or len(Y0) < 2 * threads:
            return integ(bp, R, A, spec.T, t0, t1, Y0, masks, tol, cap)
        chunks = np.array_split(np.arange(len(Y0)), threads)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(
                lambda idx: integ(bp, R, A, spec.T, t0, t1, Y0[idx], masks[idx], tol, cap),
                chunks))
        return tuple(np.concatenate([p[q] for p in parts]) for q in range(5))
    if backend == "cython":
        raise InputError("the compiled kernel only handles Lotka-Volterra pieces")
    bp = np.asarray(spec.breakpoints, dtype=float)
    out = [_pykernel.integrate(spec.local_rates, bp, spec.T, t0, t1, y, m, tol, cap)
           for y, m in zip(Y0, masks)]
    return (np.array([o[0] for o in out]), np.array([o[1] for o in out]),
            np.array([o[2] for o in out]), np.array([o[3] for o in out]),
            np.array([o[4] for o in out]))


def _raise_status(status, tstop, Y, masks):
    bad = np.flatnonzero(status != _pykernel.OK)
    if bad.size == 0:
        return
    j = bad[0]
    escaping = np.any(masks[j] & (Y[j] > BLOWUP_LOG))
    if status[j] == _pykernel.BLOWUP or (status[j] == _pykernel.STEP_UNDERFLOW and escaping):
        raise BlowUp(tstop[j])
    reason = {_pykernel.MAX_STEPS: "step budget exhausted",
              _pykernel.STEP_UNDERFLOW: "step size underflow"}[int(status[j])]
    raise NumericalError(f"integration failed at t = {tstop[j]!r}: {reason}")


def flow_many(spec: SystemSpec, t0: float, t1: float, X0, tol: float = DEFAULT_TOL,
              cap: float = DEFAULT_CAP, threads: int | None = 1, backend: str | None = None,
              return_info: bool = False):
    """Flow every row of ``X0`` from ``t0`` to ``t1``.

    Returns the image points, or ``(points, log_growth, est_error, steps)``
    when ``return_info`` is set.  Raises :class:`BlowUp` if any row escapes.
    """
    if not (tol > 0 and math.isfinite(t0) and math.isfinite(t1)):
        raise InputError("tol must be positive and times finite")
    X0, Y0, masks = _prepare(spec, X0)
    Y, est, steps, status, tstop = _run(spec, float(t0), float(t1), Y0, masks,
                                        tol * LOCAL_TOL_FACTOR, cap, threads, backend)
    _raise_status(status, tstop, Y, masks)
    X = np.where(masks, np.exp(np.where(masks, Y, 0.0)), 0.0)
    if return_info:
        return X, Y - Y0, est, steps
    return X


def flow(spec: SystemSpec, t0: float, t1: float, x0, tol: float = DEFAULT_TOL,
         cap: float = DEFAULT_CAP, backend: str | None = None) -> FlowResult:
    """``Phi(t1; t0, x0)``; backward in time when ``t1 < t0`` (may raise BlowUp).

    Examples
    --------
    >>> from carrying_simplex.model import decoupled_logistic
    >>> r = flow(decoupled_logistic(2), 0.0, 1.0, [0.5, 0.5])
    >>> bool(abs(r.x[0] - 0.7310585786300049) < 1e-9)
    True
    """
    x0 = np.asarray(x0, dtype=float)
    X, growth, est, steps = flow_many(spec, t0, t1, x0[None, :], tol, cap, threads=1,
                                      backend=backend, return_info=True)
    support = tuple(int(i) for i in np.flatnonzero(x0 > 0))
    return FlowResult(X[0], float(t0), float(t1), float(est[0]), support, int(steps[0]),
                      growth[0])


def flow_trajectory(spec: SystemSpec, t0: float, sample_times, x0, tol: float = DEFAULT_TOL,
                    backend: str | None = None) -> list:
    """Chain :func:`flow` through increasing ``sample_times`` (all ``>= t0``)."""
    times = [float(t) for t in sample_times]
    if any(t < t0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise InputError("sample times must be increasing and >= t0")
    out = []
    t_prev, x = float(t0), np.asarray(x0, dtype=float)
    est, steps = 0.0, 0
    growth = np.zeros(len(x))
    for t in times:
        r = flow(spec, t_prev, t, x, tol, backend=backend)
        est += r.est_error
        steps += r.steps
        growth = growth + r.log_growth
        x, t_prev = r.x, t
        out.append(FlowResult(x, float(t0), t, est, r.support, steps, growth))
    return out


def extended_flow(spec: SystemSpec, t: float, s: TorusPoint, x, tol: float = DEFAULT_TOL):
    """The semiflow ``(t, (s, x)) -> (s + t, Phi(s + t; s, x))`` for ``t >= 0``."""
    if t < 0:
        raise InputError("the extended flow is a semiflow: t must be >= 0")
    s0 = TorusPoint.of(float(s), spec.T)
    r = flow(spec, s0.s, s0.s + t, x, tol)
    return TorusPoint.of(s0.s + t, spec.T), r.x


def write_trajectory_csv(path_or_file, results, d: int, header_comment: str | None = None):
    """CSV with header ``t,x1,...,xd`` and 17 significant digits."""
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x{i + 1}" for i in range(d)])
        for r in results:
            w.writerow([f"{r.t1:.17g}"] + [f"{v:.17g}" for v in r.x])
    finally:
        if own:
            fh.close()

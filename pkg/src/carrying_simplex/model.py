"""Periodic Kolmogorov systems with piecewise-in-time growth rates.

A system is ``x_i' = x_i g_i(t, x)`` with ``g`` periodic of period ``T`` and
defined piece by piece on ``[tau_k, tau_{k+1})``.  Built-in pieces are of
Lotka-Volterra type, ``g(t, x) = r(t) - a(t) x``, with coefficients given as
trigonometric polynomials in ``t``; arbitrary Python callables are accepted
too but are only integrated by the pure-Python kernel.

Hypothesis checks in this module are sampled numerical evidence, never proofs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import InputError, NumericalError

FAMILIES = ("lv_smooth", "lv_seasonal", "custom_piecewise", "callable")


def _harmonics(value, d_shape):
    """Coerce a constant or a list of harmonic coefficients to a float array.

    The last axis holds ``[c0, c1, s1, c2, s2, ...]`` for
    ``c0 + sum_k c_k cos(k w t) + s_k sin(k w t)``.
    """
    arr = np.asarray(value, dtype=float)
    if arr.shape == d_shape:
        arr = arr[..., None]
    if arr.shape[:-1] != d_shape or arr.shape[-1] % 2 != 1:
        raise InputError(
            f"coefficient of shape {arr.shape} does not match {d_shape} "
            "(+ odd number of harmonics)"
        )
    if not np.all(np.isfinite(arr)):
        raise InputError("coefficients must be finite")
    return arr


@dataclass(frozen=True)
class LVPiece:
    """``g(t, x) = r(t) - a(t) @ x`` with trigonometric-polynomial coefficients."""

    r: np.ndarray  # (d, nh)
    a: np.ndarray  # (d, d, nh)

    @property
    def n_harmonics(self) -> int:
        return max(self.r.shape[-1], self.a.shape[-1]) // 2

    @property
    def time_constant(self) -> bool:
        return not (np.any(self.r[:, 1:]) or np.any(self.a[:, :, 1:]))

    def padded(self, nh: int):
        d = self.r.shape[0]
        r = np.zeros((d, nh))
        a = np.zeros((d, d, nh))
        r[:, : self.r.shape[-1]] = self.r
        a[:, :, : self.a.shape[-1]] = self.a
        return r, a

    def __call__(self, tau: float, x: np.ndarray, omega: float) -> np.ndarray:
        nh = max(self.r.shape[-1], self.a.shape[-1])
        basis = _basis(tau, omega, nh)
        r = self.r @ basis[: self.r.shape[-1]]
        a = self.a @ basis[: self.a.shape[-1]]
        return r - a @ x


@dataclass(frozen=True)
class FunctionPiece:
    """Arbitrary smooth piece ``fn(tau, x) -> g`` (trusted, not checked for H1)."""

    fn: Callable[[float, np.ndarray], np.ndarray]
    scale: np.ndarray | None = None

    time_constant = False

    def __call__(self, tau: float, x: np.ndarray, omega: float) -> np.ndarray:
        if self.scale is not None:
            x = self.scale * x
        return np.asarray(self.fn(tau, x), dtype=float)


def _basis(tau, omega, nh):
    out = np.empty(nh)
    out[0] = 1.0
    for k in range(1, nh // 2 + 1):
        out[2 * k - 1] = math.cos(k * omega * tau)
        out[2 * k] = math.sin(k * omega * tau)
    return out


@dataclass(frozen=True)
class SystemSpec:
    """A ``d``-species ``T``-periodic Kolmogorov system.

    Instances are immutable; use the factory functions (:func:`lv_smooth`,
    :func:`lv_seasonal`, ...) or :func:`spec_from_dict` to build them.
    """

    d: int
    T: float
    breakpoints: tuple
    pieces: tuple
    family: str
    params: dict = field(default_factory=dict, compare=False)
    normalized: bool = False
    scale: tuple | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InputError("d must be a positive integer")
        if not (math.isfinite(self.T) and self.T > 0):
            raise InputError("period T must be positive and finite")
        bp = self.breakpoints
        if len(bp) < 2 or bp[0] != 0.0 or bp[-1] != self.T:
            raise InputError("breakpoints must start at 0 and end at T")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise InputError("breakpoints must be strictly increasing")
        if len(self.pieces) != len(bp) - 1:
            raise InputError("need exactly one piece per breakpoint interval")
        if self.family not in FAMILIES:
            raise InputError(f"unknown family {self.family!r}")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.T

    @property
    def is_lv(self) -> bool:
        return all(isinstance(p, LVPiece) for p in self.pieces)

    @property
    def autonomous(self) -> bool:
        """True when ``g`` does not depend on ``t`` at all."""
        if not self.is_lv:
            return False
        p0 = self.pieces[0]
        if not p0.time_constant:
            return False
        return all(
            p.time_constant and np.array_equal(p.r[:, :1], p0.r[:, :1])
            and np.array_equal(p.a[:, :, :1], p0.a[:, :, :1])
            for p in self.pieces
        )

    @cached_property
    def tables(self):
        """Packed coefficient arrays ``(bp, R, A)`` consumed by the kernels."""
        if not self.is_lv:
            raise InputError("only Lotka-Volterra pieces have coefficient tables")
        nh = 2 * max(p.n_harmonics for p in self.pieces) + 1
        R = np.zeros((len(self.pieces), self.d, nh))
        A = np.zeros((len(self.pieces), self.d, self.d, nh))
        for k, p in enumerate(self.pieces):
            R[k], A[k] = p.padded(nh)
        return np.asarray(self.breakpoints, dtype=float), R, A

    def reduce_time(self, t: float):
        """Return ``(n, tau, k)`` with ``t = n T + tau``, ``0 <= tau < T`` in piece ``k``."""
        n = math.floor(t / self.T)
        tau = t - n * self.T
        if tau >= self.T:
            n += 1
            tau -= self.T
        if tau < 0.0:
            n -= 1
            tau += self.T
        k = int(np.searchsorted(self.breakpoints, tau, side="right")) - 1
        return n, tau, min(max(k, 0), len(self.pieces) - 1)

    def local_rates(self, k: int, tau: float, x: np.ndarray) -> np.ndarray:
        """Per-capita rates of piece ``k`` at local time ``tau`` (no reduction)."""
        return self.pieces[k](tau, x, self.omega)


# -- construction ---------------------------------------------------------


def _lv_piece(d, r, a):
    return LVPiece(_harmonics(r, (d,)), _harmonics(a, (d, d)))


def lv_smooth(r, a, T: float = 1.0) -> SystemSpec:
    """Lotka-Volterra system with smooth periodic coefficients.

    ``r`` has shape ``(d,)`` or ``(d, 2K+1)``; ``a`` has shape ``(d, d)`` or
    ``(d, d, 2K+1)``.  Harmonic ``k`` has angular frequency ``2 pi k / T``.
    """
    r_arr = np.asarray(r, dtype=float)
    d = r_arr.shape[0]
    piece = _lv_piece(d, r, a)
    return SystemSpec(
        d=d, T=float(T), breakpoints=(0.0, float(T)), pieces=(piece,),
        family="lv_smooth", params={"r": _tolist(r), "a": _tolist(a)},
    )


def decoupled_logistic(d: int = 2, T: float = 1.0, carrying: float = 1.0) -> SystemSpec:
    """``g_i = 1 - x_i / carrying`` for every species."""
    return lv_smooth(np.ones(d), np.eye(d) / carrying, T)


def lv_seasonal(lam, phi: float, r, a, T: float = 1.0) -> SystemSpec:
    """Seasonal succession: decay ``g_i = -lam_i`` on ``[0, (1-phi)T)``, LV growth after.

    Parameters
    ----------
    lam : array_like, shape (d,)
        Decay rates during the dormant season.
    phi : float
        Fraction of the period taken by the growth season, ``0 < phi < 1``.
    r, a : array_like
        Constant LV coefficients of the growth season.
    """
    lam = np.asarray(lam, dtype=float)
    d = lam.shape[0]
    if not 0.0 < phi < 1.0:
        raise InputError("phi must lie in (0, 1)")
    T = float(T)
    dormant = _lv_piece(d, -lam, np.zeros((d, d)))
    growth = _lv_piece(d, r, a)
    if growth.r.shape[-1] != 1 or growth.a.shape[-1] != 1:
        raise InputError("lv_seasonal growth coefficients must be constants")
    return SystemSpec(
        d=d, T=T, breakpoints=(0.0, (1.0 - phi) * T, T), pieces=(dormant, growth),
        family="lv_seasonal",
        params={"lambda": _tolist(lam), "phi": float(phi), "r": _tolist(r), "a": _tolist(a)},
    )


def custom_piecewise(breakpoints: Sequence[float], pieces: Sequence[dict]) -> SystemSpec:
    """Piecewise LV system; each piece is a mapping with keys ``r`` and ``a``."""
    bp = tuple(float(b) for b in breakpoints)
    if not pieces:
        raise InputError("custom_piecewise needs at least one piece")
    d = np.asarray(pieces[0]["r"], dtype=float).shape[0]
    lv = tuple(_lv_piece(d, p["r"], p["a"]) for p in pieces)
    return SystemSpec(
        d=d, T=bp[-1], breakpoints=bp, pieces=lv, family="custom_piecewise",
        params={"breakpoints": list(bp),
                "pieces": [{"r": _tolist(p["r"]), "a": _tolist(p["a"])} for p in pieces]},
    )


def from_callables(d: int, T: float, breakpoints: Sequence[float], fns) -> SystemSpec:
    """System whose pieces are arbitrary callables ``fn(tau, x) -> g``.

    The regularity required for well-posedness (continuity in ``x``, local
    Lipschitz bounds) is taken on trust.  Only the pure-Python kernel can
    integrate such a system.
    """
    return SystemSpec(
        d=int(d), T=float(T), breakpoints=tuple(float(b) for b in breakpoints),
        pieces=tuple(FunctionPiece(f) for f in fns), family="callable",
    )


def _tolist(v):
    return np.asarray(v, dtype=float).tolist()


def spec_from_dict(doc: dict) -> SystemSpec:
    """Build a spec from its JSON document (see README for the schema)."""
    try:
        family = doc["family"]
        p = doc.get("params", {})
        T = float(doc.get("T", 1.0))
        if family == "lv_smooth":
            spec = lv_smooth(p["r"], p["a"], T)
        elif family == "lv_seasonal":
            spec = lv_seasonal(p["lambda"], p["phi"], p["r"], p["a"], T)
        elif family == "custom_piecewise":
            bp = p.get("breakpoints")
            if bp is None:
                raise InputError("custom_piecewise requires params.breakpoints")
            if abs(float(bp[-1]) - T) > 0:
                raise InputError("last breakpoint must equal T")
            spec = custom_piecewise(bp, p["pieces"])
        else:
            raise InputError(f"unknown family {family!r}")
    except (KeyError, TypeError, IndexError) as exc:
        raise InputError(f"malformed spec document: {exc!r}") from exc
    if "d" in doc and int(doc["d"]) != spec.d:
        raise InputError(f"d={doc['d']} disagrees with coefficient shapes (d={spec.d})")
    if doc.get("normalize_scale") is not None:
        spec = normalize(spec, doc["normalize_scale"])
    return spec


def spec_to_dict(spec: SystemSpec) -> dict:
    if spec.family == "callable":
        raise InputError("callable specs cannot be serialized")
    doc = {"d": spec.d, "T": spec.T, "family": spec.family, "params": spec.params}
    if spec.normalized:
        doc["normalize_scale"] = list(spec.scale)
    return doc


# -- evaluation -----------------------------------------------------------


def _check_x(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise InputError(f"expected a point of shape ({spec.d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("x must be finite")
    if np.any(x < 0):
        raise InputError("x must lie in the nonnegative cone")
    return x


def eval_g(spec: SystemSpec, t: float, x) -> np.ndarray:
    """Per-capita growth rates ``g(t mod T, x)``."""
    if not math.isfinite(t):
        raise InputError("t must be finite")
    x = _check_x(spec, x)
    _, tau, k = spec.reduce_time(float(t))
    return spec.local_rates(k, tau, x)


def eval_G(spec: SystemSpec, t: float, x) -> np.ndarray:
    """Right-hand side ``x_i g_i(t, x)`` of the Kolmogorov system."""
    x = _check_x(spec, x)
    return x * eval_g(spec, t, x)


# -- hypotheses -----------------------------------------------------------


@dataclass
class HypothesisReport:
    hypothesis: str
    passed: bool
    values: list
    witness: dict | None = None
    budget: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"hypothesis": self.hypothesis, "passed": self.passed,
                "values": self.values, "witness": self.witness, "budget": self.budget}


def _piece_integral(spec, k, i):
    a, b = spec.breakpoints[k], spec.breakpoints[k + 1]
    piece = spec.pieces[k]
    zero = np.zeros(spec.d)
    if piece.time_constant:
        return piece(a, zero, spec.omega)[i] * (b - a)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(
                lambda t: spec.local_rates(k, t, zero)[i], a, b,
                epsabs=1e-13, epsrel=1e-12, limit=200,
            )
        except integrate.IntegrationWarning as exc:
            raise NumericalError(f"quadrature failed for species {i}: {exc}") from exc
    return val


def check_H2(spec: SystemSpec, quad_tol: float = 0.0) -> HypothesisReport:
    """Average growth rate at the origin, ``int_0^T g_i(t, 0) dt > quad_tol``."""
    values = []
    for i in range(spec.d):
        values.append(float(sum(_piece_integral(spec, k, i) for k in range(len(spec.pieces)))))
    worst = int(np.argmin(values))
    passed = all(v > quad_tol for v in values)
    return HypothesisReport(
        "H2", passed, values,
        witness=None if passed else {"species": worst, "integral": values[worst]},
        budget={"quad_tol": quad_tol, "pieces": len(spec.pieces)},
    )


def _piece_samples(spec, samples):
    nodes, _ = np.polynomial.legendre.leggauss(samples)
    for k in range(len(spec.pieces)):
        a, b = spec.breakpoints[k], spec.breakpoints[k + 1]
        for s in nodes:
            yield k, a + (b - a) * (s + 1.0) / 2.0


def check_H3tilde(spec: SystemSpec, M: float, samples: int = 16) -> HypothesisReport:
    """``g_i(t, M e_i) <= 0`` on Gauss-Legendre samples of every piece."""
    if not M > 0:
        raise InputError("M must be positive")
    worst = np.full(spec.d, -np.inf)
    worst_t = np.zeros(spec.d)
    n = 0
    for k, tau in _piece_samples(spec, samples):
        for i in range(spec.d):
            x = np.zeros(spec.d)
            x[i] = M
            g = spec.local_rates(k, tau, x)[i]
            n += 1
            if g > worst[i]:
                worst[i], worst_t[i] = g, tau
    passed = bool(np.all(worst <= 0.0))
    i = int(np.argmax(worst))
    return HypothesisReport(
        "H3tilde", passed, worst.tolist(),
        witness=None if passed else {"species": i, "t": float(worst_t[i]), "g": float(worst[i])},
        budget={"M": M, "samples": n},
    )


def search_H3tilde(spec: SystemSpec, M_max: float = 2.0**10, samples: int = 16) -> HypothesisReport:
    """Try ``M = 1, 2, 4, ...`` up to ``M_max`` (per species) and report the first that works."""
    found = []
    report = None
    for i in range(spec.d):
        M = 1.0
        while M <= M_max:
            report = check_H3tilde(spec, M, samples)
            if report.values[i] <= 0.0:
                break
            M *= 2.0
        found.append(M if M <= M_max else None)
    passed = all(m is not None for m in found)
    Ms = [m for m in found if m is not None]
    final = check_H3tilde(spec, max(Ms), samples) if passed else report
    return HypothesisReport(
        "H3tilde", passed and final.passed, final.values,
        witness=final.witness if passed else {"species": found.index(None), "M_max": M_max},
        budget={"M": max(Ms) if passed else M_max, "per_species_M": found, "samples": samples},
    )


def check_H4(spec: SystemSpec, pairs: int = 2000, mode: str = "weak", seed: int = 0,
             box: float = 2.0, margin: float = 1e-12) -> HypothesisReport:
    """Sampled monotonicity of ``g_i`` in ``x_j``.

    ``weak`` asserts ``g_i(t, x + h e_j) <= g_i(t, x)`` (up to ``margin``
    relative).  ``strict`` additionally requires, for every ``(i, j)``, at least
    one sampled time where the decrease was strict; this is evidence for a
    positive-measure set of such times, nothing more.
    """
    if pairs < 1:
        raise InputError("pairs must be >= 1")
    if mode not in ("weak", "strict"):
        raise InputError("mode must be 'weak' or 'strict'")
    rng = np.random.default_rng(seed)
    d = spec.d
    strict_hits = np.zeros((d, d), dtype=int)
    worst = -np.inf
    witness = None
    for _ in range(pairs):
        t = rng.uniform(0.0, spec.T)
        x = rng.uniform(0.0, box, size=d)
        h = rng.uniform(1e-3, 0.5) * box
        g0 = eval_g(spec, t, x)
        for j in range(d):
            xj = x.copy()
            xj[j] += h
            diff = eval_g(spec, t, xj) - g0
            tol = margin * (1.0 + np.abs(g0))
            excess = diff - tol
            i = int(np.argmax(excess))
            if excess[i] > worst:
                worst = float(excess[i])
                if excess[i] > 0:
                    witness = {"t": t, "x": x.tolist(), "j": j, "h": h, "i": i,
                               "increase": float(diff[i])}
            strict_hits[:, j] += diff < -tol
    weak_ok = witness is None
    tag = "H4"
    passed = weak_ok
    values = strict_hits.tolist()
    if mode == "strict":
        tag = "H4strict"
        missing = np.argwhere(strict_hits == 0)
        passed = weak_ok and missing.size == 0
        if weak_ok and missing.size:
            witness = {"no_strict_decrease": missing.tolist()}
    else:
        # H4 itself asks for a strict decrease of g_i in x_i
        diag_missing = [i for i in range(d) if strict_hits[i, i] == 0]
        if weak_ok and diag_missing:
            passed = False
            witness = {"no_strict_self_decrease": diag_missing}
    return HypothesisReport(tag, bool(passed), values, witness,
                            budget={"pairs": pairs, "seed": seed, "box": box, "margin": margin})


def normalize(spec: SystemSpec, axis_fixed_points) -> SystemSpec:
    """Rescale state so that every axis fixed point becomes 1.

    The returned system satisfies ``g_new(t, z) = g_old(t, diag(xhat) z)``.
    """
    xhat = np.asarray(axis_fixed_points, dtype=float)
    if xhat.shape != (spec.d,) or not np.all(np.isfinite(xhat)) or np.any(xhat <= 0):
        raise InputError("axis fixed points must be a positive finite vector of length d")
    old = np.asarray(spec.scale) if spec.scale is not None else np.ones(spec.d)
    pieces = []
    for p in spec.pieces:
        if isinstance(p, LVPiece):
            pieces.append(LVPiece(p.r.copy(), p.a * xhat[None, :, None]))
        else:
            base = p.scale if p.scale is not None else np.ones(spec.d)
            pieces.append(FunctionPiece(p.fn, base * xhat))
    return SystemSpec(
        d=spec.d, T=spec.T, breakpoints=spec.breakpoints, pieces=tuple(pieces),
        family=spec.family, params=spec.params, normalized=True,
        scale=tuple((old * xhat).tolist()),
    )

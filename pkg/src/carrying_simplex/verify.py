"""Executable checks of the structural properties of carrying simplices.

Every check returns a :class:`VerificationReport`; a failed report always
carries a witness that can be re-run on its own.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUp, MeshFoldingError
from .flow import DEFAULT_TOL, flow_many
from .model import SystemSpec
from .simplex import (RadialMesh, SectionFamily, SimplexLocator, directions_of,
                      gamma_membership, radial_distance)

ORDER_TOL = 1e-9


@dataclass
class VerificationReport:
    check: str
    passed: bool
    worst_margin: float
    witness: dict | None = None
    budget: dict = field(default_factory=dict)
    inconclusive: bool = False
    details: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        if self.inconclusive:
            return "inconclusive"
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {"check": self.check, "status": self.status, "passed": self.passed,
                "worst_margin": _finite(self.worst_margin), "witness": self.witness,
                "budget": self.budget, "details": self.details}


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _points(mesh_or_points):
    if isinstance(mesh_or_points, RadialMesh):
        return mesh_or_points.points
    return np.atleast_2d(np.asarray(mesh_or_points, dtype=float))


def project(X) -> np.ndarray:
    """Orthogonal projection along ``e`` onto ``V = e^perp``: ``u - (u . e) e / d``."""
    X = np.asarray(X, dtype=float)
    return X - X.sum(axis=-1, keepdims=True) / X.shape[-1]


def _v_basis(d):
    """Orthonormal basis of ``V`` as the columns of a ``(d, d-1)`` matrix."""
    Q, _ = np.linalg.qr(project(np.eye(d))[:, : d - 1])
    return Q


# -- unorderedness --------------------------------------------------------


def check_unordered(mesh, mode: str = "weak", tol: float = ORDER_TOL,
                    chunk: int = 512) -> VerificationReport:
    """No two represented points are strongly ordered (weak) or ordered at all (strict).

    ``weak``: fails on a pair with ``x_i + tol < y_i`` for every ``i``.
    ``strict``: also fails on distinct ``x != y`` with ``x <= y + tol`` and
    ``x_j + tol < y_j`` for some ``j``.
    """
    if mode not in ("weak", "strict"):
        raise ValueError("mode must be 'weak' or 'strict'")
    P = _points(mesh)
    n = len(P)
    worst, witness = -np.inf, None
    for i0 in range(0, n, chunk):
        D = P[None, :, :] - P[i0:i0 + chunk, None, :]  # D[a, b] = y_b - x_a
        if mode == "weak":
            margin = D.min(axis=2)
        else:
            ordered = (-D).max(axis=2) <= tol
            margin = np.where(ordered, D.max(axis=2), -np.inf)
        rows = np.arange(min(chunk, n - i0))
        margin[rows, rows + i0] = -np.inf
        a, b = np.unravel_index(int(np.argmax(margin)), margin.shape)
        if margin[a, b] > worst:
            worst = float(margin[a, b])
            witness = {"x": P[i0 + a].tolist(), "y": P[b].tolist(),
                       "indices": [int(i0 + a), int(b)]}
    passed = bool(worst <= tol)
    return VerificationReport(f"unordered_{mode}", passed, worst,
                              None if passed else witness, {"points": n, "tol": tol})


# -- retrotonicity --------------------------------------------------------


def check_retrotone(spec: SystemSpec, n_pairs: int = 1000, box=None, tol: float = ORDER_TOL,
                    seed: int = 0, t: float | None = None, int_tol: float = DEFAULT_TOL,
                    max_draws: int | None = None) -> VerificationReport:
    """Sampled check that ``P(x) < P(y)`` forces ``x < y`` and ``x_i < y_i`` where ``P_i`` differ.

    Pairs are drawn uniformly in ``box = (lo, hi)`` (default ``[0, 1.1 e]``);
    only pairs with ``P(x) <= P(y)`` and some strict gap above ``tol`` are used.
    """
    d = spec.d
    lo, hi = (np.zeros(d), np.full(d, 1.1)) if box is None else map(np.asarray, box)
    t = spec.T if t is None else float(t)
    rng = np.random.default_rng(seed)
    max_draws = max_draws or 200 * n_pairs
    used = drawn = 0
    worst, witness = -np.inf, None
    while used < n_pairs and drawn < max_draws:
        batch = max(64, 2 * (n_pairs - used))
        X = rng.uniform(lo, hi, size=(batch, d))
        Y = rng.uniform(lo, hi, size=(batch, d))
        drawn += batch
        PX = flow_many(spec, 0.0, t, X, int_tol)
        PY = flow_many(spec, 0.0, t, Y, int_tol)
        # orient every pair so that the candidate order is P(X) <= P(Y)
        swap = np.all(PY <= PX, axis=1) & ~np.all(PX <= PY, axis=1)
        X[swap], Y[swap] = Y[swap].copy(), X[swap].copy()
        PX[swap], PY[swap] = PY[swap].copy(), PX[swap].copy()
        gap = PY - PX
        usable = np.flatnonzero(np.all(gap >= 0, axis=1) & (gap.max(axis=1) > tol))
        usable = usable[: n_pairs - used]
        used += usable.size
        diff = X[usable] - Y[usable]
        # x <= y overall, and x_i < y_i wherever P_i(x) < P_i(y) by more than tol
        relevant = np.where(gap[usable] > tol, diff, -np.inf)
        margin = np.maximum(diff.max(axis=1), relevant.max(axis=1))
        if margin.size:
            j = int(np.argmax(margin))
            if margin[j] > worst:
                worst = float(margin[j])
                k = usable[j]
                witness = {"x": X[k].tolist(), "y": Y[k].tolist(),
                           "Px": PX[k].tolist(), "Py": PY[k].tolist(), "t": t}
    budget = {"pairs_used": int(used), "pairs_drawn": int(drawn), "seed": seed, "tol": tol,
              "box": [np.asarray(lo).tolist(), np.asarray(hi).tolist()]}
    if used < 10:
        return VerificationReport("retrotone", False, worst, None, budget, inconclusive=True)
    passed = bool(worst <= tol)
    return VerificationReport("retrotone", passed, worst, None if passed else witness, budget)


# -- attraction -----------------------------------------------------------


def _random_starts(rng, n, d, lo, hi, min_l1=0.01):
    out = []
    while len(out) < n:
        x = rng.uniform(lo, hi, size=d)
        if x.sum() >= min_l1:
            out.append(x)
    return np.array(out)


def check_attraction(spec: SystemSpec, family: SectionFamily, n_starts: int = 100,
                     horizon_periods: int = 20, tol: float = 1e-3, seed: int = 0,
                     box=(0.0, 2.0), tail_tol: float = 1e-6, starts=None,
                     int_tol: float = DEFAULT_TOL) -> VerificationReport:
    """Orbits approach the moving sections ``Sigma_{t mod T}``.

    Distances are sampled at ``t = k T / n_sections``.  Passing requires every
    distance in the second half of the horizon to be below ``tol`` and the
    tail to be non-increasing up to ``tail_tol``.
    """
    rng = np.random.default_rng(seed)
    n_sec = len(family)
    X = (np.atleast_2d(np.asarray(starts, dtype=float)) if starts is not None
         else _random_starts(rng, n_starts, spec.d, box[0], box[1]))
    dt = spec.T / n_sec
    n_samples = horizon_periods * n_sec
    dist = np.empty((n_samples + 1, len(X)))
    dist[0] = radial_distance(family.meshes[0], X)
    cur = X
    for k in range(1, n_samples + 1):
        cur = flow_many(spec, (k - 1) * dt, k * dt, cur, int_tol)
        dist[k] = radial_distance(family.meshes[k % n_sec], cur)
    tail = dist[n_samples // 2:]
    worst_tail = float(tail.max())
    increases = np.diff(tail, axis=0)
    worst_increase = float(increases.max()) if len(increases) else 0.0
    passed = bool(worst_tail < tol and worst_increase <= tail_tol)
    j = int(np.argmax(tail.max(axis=0)))
    if worst_increase > tail_tol:
        j = int(np.unravel_index(np.argmax(increases), increases.shape)[1])
    witness = None if passed else {"start": X[j].tolist(), "tail_distances": tail[:, j].tolist()}
    return VerificationReport(
        "attraction", passed, worst_tail, witness,
        {"starts": len(X), "horizon_periods": horizon_periods, "tol": tol,
         "tail_tol": tail_tol, "seed": seed},
        details={"worst_final_distance": float(dist[-1].max()),
                 "worst_tail_increase": worst_increase})


def check_origin_repeller(spec: SystemSpec, family: SectionFamily, n_starts: int = 20,
                          tol: float = 1e-3, seed: int = 0, periods: int = 5,
                          starts=None, int_tol: float = DEFAULT_TOL,
                          band: float = 1e-6) -> VerificationReport:
    """Backward orbits inside ``Gamma`` shrink to 0; those on ``Sigma`` stay on it.

    Starts are classified with :func:`gamma_membership` against ``Sigma_0``:
    inside points must have backward norms decreasing period by period,
    boundary points must stay within ``tol`` of ``Sigma_0`` at period
    multiples, and outside points must escape backward (BlowUp or growth).
    """
    sigma0 = family.meshes[0]
    rng = np.random.default_rng(seed)
    if starts is None:
        idx = rng.integers(0, sigma0.grid.n_nodes, size=n_starts)
        alpha = rng.uniform(0.2, 0.9, size=n_starts)
        starts = alpha[:, None] * sigma0.points[idx]
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    worst, witness = -np.inf, None
    counts = {"inside": 0, "boundary": 0, "outside": 0}
    for x in starts:
        label, _ = gamma_membership(sigma0, x, band)
        counts[label] += 1
        norms = [float(x.sum())]
        cur = x
        escaped = False
        for n in range(1, periods + 1):
            try:
                cur = flow_many(spec, -(n - 1) * spec.T, -n * spec.T, cur[None, :], int_tol)[0]
            except BlowUp:
                escaped = True
                break
            norms.append(float(cur.sum()))
        if label == "inside":
            fwd = flow_many(spec, 0.0, periods * spec.T, x[None, :], int_tol)[0]
            margin = max(max(b - a for a, b in zip(norms, norms[1:])) if not escaped else np.inf,
                         float(x.sum() - fwd.sum()))
        elif label == "boundary":
            margin = np.inf if escaped else float(radial_distance(sigma0, cur[None, :])[0]) - tol
        else:
            margin = -np.inf if escaped else float(norms[0] - norms[-1])
        if margin > worst:
            worst = margin
            witness = {"start": x.tolist(), "class": label, "backward_norms": norms,
                       "escaped": escaped}
    passed = bool(worst <= 0.0)
    return VerificationReport("origin_repeller", passed, worst, None if passed else witness,
                              {"starts": len(starts), "periods": periods, "tol": tol,
                               "seed": seed}, details=counts)


def check_asymptotic_phase(spec: SystemSpec, x, sigma0: RadialMesh, horizon_periods: int = 20,
                           tol: float = 1e-4, int_tol: float = DEFAULT_TOL,
                           tail_tol: float = 1e-9) -> VerificationReport:
    """Best-effort witness of asymptotic phase: some mesh point shadows ``x``.

    The partner ``y`` minimizes ``||P^n(x) - P^n(y)||`` over the mesh points at
    ``n = horizon_periods``; the distance history over the second half of the
    horizon must be non-increasing (up to ``tail_tol``) and end below ``tol``.
    """
    x = np.asarray(x, dtype=float)
    pts = sigma0.points
    n = horizon_periods
    traj_x = [x]
    traj_y = [pts]
    cx, cy = x[None, :], pts
    for k in range(1, n + 1):
        cx = flow_many(spec, (k - 1) * spec.T, k * spec.T, cx, int_tol)
        cy = flow_many(spec, (k - 1) * spec.T, k * spec.T, cy, int_tol)
        traj_x.append(cx[0])
        traj_y.append(cy)
    final = np.linalg.norm(traj_y[-1] - traj_x[-1], axis=1)
    j = int(np.argmin(final))
    hist = np.array([np.linalg.norm(traj_y[k][j] - traj_x[k]) for k in range(n + 1)])
    tail = hist[n // 2:]
    rise = float(np.diff(tail).max()) if len(tail) > 1 else 0.0
    budget = {"horizon_periods": n, "tol": tol, "mesh_points": len(pts)}
    details = {"partner_index": j, "partner": pts[j].tolist(), "distances": hist.tolist()}
    if final[j] >= tol:
        return VerificationReport("asymptotic_phase", False, float(final[j]),
                                  {"x": x.tolist()}, budget, inconclusive=True, details=details)
    passed = rise <= tail_tol
    return VerificationReport("asymptotic_phase", bool(passed), float(final[j]),
                              None if passed else {"x": x.tolist(), "partner": pts[j].tolist()},
                              budget, details=details)


# -- projection along the diagonal ----------------------------------------


def check_lipschitz_projection(mesh, tol: float = ORDER_TOL, chunk: int = 512) -> VerificationReport:
    """``||x - y|| <= sqrt(1 + d) ||Pi x - Pi y||`` over all pairs of represented points."""
    P = _points(mesh)
    n, d = P.shape
    bound = math.sqrt(1.0 + d)
    worst_ratio, witness = 0.0, None
    worst_margin = -np.inf
    for i0 in range(0, n, chunk):
        D = P[i0:i0 + chunk, None, :] - P[None, :, :]
        full = np.linalg.norm(D, axis=2)
        proj = np.linalg.norm(project(D), axis=2)
        rows = np.arange(min(chunk, n - i0))
        full[rows, rows + i0] = 0.0
        proj[rows, rows + i0] = 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(full > 0, full / proj, 0.0)
        margin = full - bound * proj
        margin[rows, rows + i0] = -np.inf
        a, b = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if ratio[a, b] > worst_ratio:
            worst_ratio = float(ratio[a, b])
            witness = {"x": P[i0 + a].tolist(), "y": P[b].tolist(), "ratio": worst_ratio}
        worst_margin = max(worst_margin, float(margin.max()))
    passed = bool(worst_ratio <= bound + tol)
    return VerificationReport("lipschitz_projection", passed, worst_margin,
                              None if passed else witness,
                              {"points": n, "bound": bound, "tol": tol},
                              details={"max_ratio": worst_ratio, "bound": bound})


class ProjectedSection:
    """Inverse of the projection ``Pi`` restricted to one section mesh."""

    def __init__(self, mesh: RadialMesh, fold_tol: float = 1e-12):
        self.mesh = mesh
        d = mesh.grid.d
        self.basis = _v_basis(d)
        self.X = mesh.points
        self.V = self.X @ self.basis
        self.locator = SimplexLocator(self.V, mesh.grid.simplices)
        if d > 1:
            rel = np.sign(self.locator.det) * mesh.grid.orientation
            if np.any(np.abs(self.locator.det) < fold_tol) or np.any(rel != rel[0]):
                raise MeshFoldingError("projected section mesh is folded")

    def coords(self, X):
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.basis

    def lift(self, v):
        """Point of the section whose projection has coordinates ``v``."""
        simp, w, minw = self.locator.locate(np.atleast_2d(v))
        return np.einsum("nk,nkj->nj", w, self.X[self.mesh.grid.simplices[simp]]), minw


def check_conjugacy(spec: SystemSpec, family: SectionFamily, n_samples: int = 200,
                    t_step: float | None = None, tol: float = 1e-5, seed: int = 0,
                    int_tol: float = DEFAULT_TOL) -> VerificationReport:
    """The square ``Sigma_s -> Sigma_{s+t}`` / ``Pi(Sigma_s) -> Pi(Sigma_{s+t})`` commutes.

    Sample points ``x`` lie on the piecewise-flat section surfaces.  Measures
    (a) the reconstruction error ``||lift(Pi x) - x||`` and (b) the commutation
    error ``||lift_{s+t}(Pi Phi(s+t; s, x')) - Phi(s+t; s, x')||`` with
    ``x' = lift_s(Pi x)``.  ``t_step`` must be a multiple of the section spacing.
    """
    n_sec = len(family)
    dt = spec.T / n_sec
    t_step = spec.T if t_step is None else float(t_step)
    shift = t_step / dt
    if abs(shift - round(shift)) > 1e-9:
        raise ValueError("t_step must be a multiple of T / n_sections")
    shift = int(round(shift))
    try:
        proj = [ProjectedSection(m) for m in family.meshes]
    except MeshFoldingError as exc:
        return VerificationReport("conjugacy", False, np.inf, {"error": str(exc)},
                                  {"samples": 0})
    rng = np.random.default_rng(seed)
    grid = family.meshes[0].grid
    worst_rec = worst_com = 0.0
    witness = None
    per_section = []
    for k in range(n_sec):
        m = max(1, n_samples // n_sec)
        simp = rng.integers(0, len(grid.simplices), size=m)
        w = rng.dirichlet(np.ones(grid.d), size=m)
        w[0] = np.eye(grid.d)[0]  # include a node
        X = np.einsum("nk,nkj->nj", w, proj[k].X[grid.simplices[simp]])
        Xr, _ = proj[k].lift(proj[k].coords(X))
        rec = np.linalg.norm(Xr - X, axis=1)
        s = family.s_grid[k]
        Y = flow_many(spec, s, s + t_step, Xr, int_tol)
        target = proj[(k + shift) % n_sec]
        Z, _ = target.lift(target.coords(Y))
        com = np.linalg.norm(Z - Y, axis=1)
        per_section.append({"s": s, "reconstruction": float(rec.max()),
                            "commutation": float(com.max())})
        if max(rec.max(), com.max()) > max(worst_rec, worst_com):
            j = int(np.argmax(np.maximum(rec, com)))
            witness = {"s": s, "x": X[j].tolist(), "flowed": Y[j].tolist(),
                       "lifted": Z[j].tolist(), "t": t_step}
        worst_rec = max(worst_rec, float(rec.max()))
        worst_com = max(worst_com, float(com.max()))
    worst = max(worst_rec, worst_com)
    passed = bool(worst <= tol)
    return VerificationReport("conjugacy", passed, worst, None if passed else witness,
                              {"samples": n_samples, "t_step": t_step, "tol": tol, "seed": seed},
                              details={"reconstruction": worst_rec, "commutation": worst_com,
                                       "sections": per_section})


def radial_roundtrip_error(mesh: RadialMesh) -> float:
    """Max deviation of ``x / ||x||_1`` from the node direction over the mesh."""
    return float(np.max(np.abs(directions_of(mesh.points) - mesh.grid.nodes)))

"""Radial meshes over the probability simplex and the construction of the carrying simplex.

A :class:`RadialMesh` stores a value ``R(u) > 0`` at every node ``u`` of a
barycentric grid on ``Delta`` and stands for the hypersurface
``{R(u) u}``.  Between nodes the surface is the flat simplex spanned by the
node points, so along a ray ``R`` is the harmonic interpolant
``1 / sum_k lambda_k / R_k`` of the node values (exact on flat pieces).
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import os
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError, MeshFoldingError, NonConverged
from .flow import DEFAULT_TOL, TorusPoint, flow_many
from .model import SystemSpec

MAX_NODES = 2_000_000
LOCATE_EPS = 1e-9


# -- point location in simplicial complexes ------------------------------


class SimplexLocator:
    """Barycentric point location in a simplicial complex of ``R^q``.

    Parameters
    ----------
    vertices : ndarray, shape (N, q)
    simplices : ndarray of int, shape (ns, q + 1)
    """

    def __init__(self, vertices, simplices):
        self.vertices = np.asarray(vertices, dtype=float)
        self.simplices = np.asarray(simplices, dtype=np.intp)
        self.q = self.vertices.shape[1]
        q = self.q
        if q == 0:
            return
        V = self.vertices[self.simplices]  # (ns, q+1, q)
        self.origin = V[:, 0, :]
        E = np.transpose(V[:, 1:, :] - V[:, :1, :], (0, 2, 1))  # columns are edges
        self.det = np.linalg.det(E)
        ok = np.abs(self.det) > 1e-300
        self.inv = np.zeros_like(E)
        self.inv[ok] = np.linalg.inv(E[ok])
        self.degenerate = ~ok
        self.tree = cKDTree(V.mean(axis=1))
        self.radius = np.max(np.linalg.norm(V - V.mean(axis=1)[:, None, :], axis=2), axis=1)

    def _bary(self, Q, idx):
        # Q (n, q), idx (n, c) -> lambdas (n, c, q+1)
        rel = Q[:, None, :] - self.origin[idx]
        lam = np.einsum("ncij,ncj->nci", self.inv[idx], rel)
        lam0 = 1.0 - lam.sum(axis=2, keepdims=True)
        out = np.concatenate([lam0, lam], axis=2)
        out[self.degenerate[idx]] = -np.inf
        return out

    def locate(self, Q, candidates: int = 12):
        """Return ``(simplex index, barycentric weights, min weight)`` per query row.

        ``min weight`` below ``-LOCATE_EPS`` means the point lies outside the
        complex (by that margin in barycentric units).
        """
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        n = len(Q)
        if self.q == 0:
            return np.zeros(n, dtype=np.intp), np.ones((n, 1)), np.zeros(n)
        ns = len(self.simplices)
        c = min(candidates, ns)
        _, idx = self.tree.query(Q, k=c)
        idx = np.asarray(idx).reshape(n, c)
        lam = self._bary(Q, idx)
        score = lam.min(axis=2)
        best = np.argmax(score, axis=1)
        rows = np.arange(n)
        simp = idx[rows, best]
        weights = lam[rows, best]
        minw = score[rows, best]
        miss = np.flatnonzero(minw < -LOCATE_EPS)
        if miss.size and c < ns:
            everything = np.arange(ns)[None, :]
            for j in miss:
                lamj = self._bary(Q[j:j + 1], everything)[0]
                sc = lamj.min(axis=1)
                b = int(np.argmax(sc))
                simp[j], weights[j], minw[j] = b, lamj[b], sc[b]
        return simp, weights, minw


# -- direction grids -----------------------------------------------------


def _compositions(m, d):
    if d == 1:
        yield (m,)
        return
    for k in range(m, -1, -1):
        for rest in _compositions(m - k, d - 1):
            yield (k,) + rest


def _kuhn_simplices(m, q, index):
    """Kuhn triangulation of ``{0 <= a_1 <= ... <= a_q <= m}`` mapped to node indices."""
    if q == 0:
        return np.zeros((1, 1), dtype=np.intp)
    bases = [c for c in itertools.combinations_with_replacement(range(m), q)]
    bases = np.array(bases, dtype=np.int64).reshape(-1, q)
    out = []
    eye = np.eye(q, dtype=np.int64)
    for perm in itertools.permutations(range(q)):
        verts = [bases]
        cur = bases.copy()
        for p in perm:
            cur = cur + eye[p]
            verts.append(cur)
        V = np.stack(verts, axis=1)  # (nb, q+1, q)
        ok = np.all(np.diff(V, axis=2) >= 0, axis=(1, 2)) & np.all(V[:, :, -1] <= m, axis=1)
        V = V[ok]
        K = np.concatenate([V[:, :, :1], np.diff(V, axis=2), m - V[:, :, -1:]], axis=2)
        out.append(np.array([[index[tuple(row)] for row in simp] for simp in K],
                            dtype=np.intp).reshape(-1, q + 1))
    return np.concatenate(out, axis=0)


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """All ``u = k / m`` in ``Delta`` together with their standard triangulation."""

    d: int
    m: int
    counts: np.ndarray     # (N, d) integers summing to m
    nodes: np.ndarray      # (N, d) floats
    simplices: np.ndarray  # (ns, d) node indices

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def coords(self) -> np.ndarray:
        return self.nodes[:, : self.d - 1]

    @cached_property
    def orientation(self) -> np.ndarray:
        return _orientation(self.coords, self.simplices)

    @cached_property
    def locator(self) -> SimplexLocator:
        return SimplexLocator(self.coords, self.simplices)

    @cached_property
    def vertex_index(self) -> list:
        return [int(np.flatnonzero(self.counts[:, i] == self.m)[0]) for i in range(self.d)]


def _orientation(coords, simplices):
    if coords.shape[1] == 0:
        return np.ones(len(simplices))
    V = coords[simplices]
    E = np.transpose(V[:, 1:, :] - V[:, :1, :], (0, 2, 1))
    return np.sign(np.linalg.det(E))


def direction_grid(d: int, m: int) -> DirectionGrid:
    """Barycentric grid of resolution ``m`` on the ``(d-1)``-simplex."""
    if d < 1 or m < 1:
        raise InputError("need d >= 1 and m >= 1")
    n = math.comb(m + d - 1, d - 1)
    if n > MAX_NODES:
        raise InputError(f"grid would have {n} nodes (limit {MAX_NODES})")
    counts = np.array(list(_compositions(m, d)), dtype=np.int64).reshape(n, d)
    index = {tuple(c): j for j, c in enumerate(counts.tolist())}
    simplices = _kuhn_simplices(m, d - 1, index)
    return DirectionGrid(d, m, counts, counts / m, simplices)


# -- radial meshes -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RadialMesh:
    """Surface ``{R(u) u : u in grid}`` labelled by a time ``s`` in ``[0, T)``."""

    grid: DirectionGrid
    R: np.ndarray
    s: float = 0.0
    kind: str = "lower"
    error_bar: float = 0.0

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.shape != (self.grid.n_nodes,):
            raise InputError("one radial value per grid node required")
        if not (np.all(np.isfinite(R)) and np.all(R > 0)):
            raise InputError("radial values must be positive and finite")

    @property
    def points(self) -> np.ndarray:
        return self.R[:, None] * self.grid.nodes

    def radius_at(self, U) -> np.ndarray:
        """Radial value of the piecewise-flat surface in directions ``U`` (rows in Delta)."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        simp, w, _ = self.grid.locator.locate(U[:, : self.grid.d - 1])
        return _harmonic(w, self.R[self.grid.simplices[simp]])

    def with_label(self, s, kind=None):
        return replace(self, s=float(s), kind=kind or self.kind)


def _harmonic(weights, values):
    return 1.0 / np.sum(weights / values, axis=1)


def directions_of(points) -> np.ndarray:
    """Radial projection ``x -> x / ||x||_1`` onto ``Delta``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    return P / P.sum(axis=1, keepdims=True)


def lower_mesh_init(grid: DirectionGrid, eps: float) -> RadialMesh:
    """The homothetic simplex ``eps Delta``."""
    if not eps > 0:
        raise InputError("eps must be positive")
    return RadialMesh(grid, np.full(grid.n_nodes, float(eps)), 0.0, "lower")


def upper_mesh_init(grid: DirectionGrid, kappa: float) -> RadialMesh:
    """Radial representation of ``{x <= (1+kappa) e, max x_i = 1 + kappa}``."""
    if not kappa >= 0:
        raise InputError("kappa must be nonnegative")
    return RadialMesh(grid, (1.0 + kappa) / grid.nodes.max(axis=1), 0.0, "upper")


def resample(grid: DirectionGrid, images) -> np.ndarray:
    """Radial values on ``grid`` of the piecewise-flat surface through ``images``.

    ``images[j]`` is the image of node ``j``; connectivity is inherited from
    the grid.  Raises :class:`MeshFoldingError` when the images do not form a
    radial graph (a simplex flips orientation or a node direction is not
    covered).
    """
    Y = np.asarray(images, dtype=float)
    norms = Y.sum(axis=1)
    if np.any(~np.isfinite(norms)) or np.any(norms <= 0):
        raise MeshFoldingError("image contains the origin or non-finite points")
    dirs = Y / norms[:, None]
    if grid.d == 1:
        return norms
    coords = dirs[:, : grid.d - 1]
    orient = _orientation(coords, grid.simplices)
    flipped = np.flatnonzero(orient * grid.orientation < 0)
    if flipped.size:
        raise MeshFoldingError(
            f"{flipped.size} image simplices flipped orientation (first: {int(flipped[0])})")
    exact = np.all(dirs == grid.nodes, axis=1)
    out = np.empty(grid.n_nodes)
    out[exact] = norms[exact]
    todo = np.flatnonzero(~exact)
    if todo.size:
        loc = SimplexLocator(coords, grid.simplices)
        simp, w, minw = loc.locate(grid.coords[todo])
        bad = np.flatnonzero(minw < -LOCATE_EPS)
        if bad.size:
            j = int(todo[bad[0]])
            raise MeshFoldingError(
                f"grid direction {grid.nodes[j].tolist()} not covered by the image mesh "
                f"(margin {minw[bad[0]]:.2e})")
        w = np.clip(w, 0.0, None)
        w /= w.sum(axis=1, keepdims=True)
        out[todo] = _harmonic(w, norms[grid.simplices[simp]])
    return out


def push_forward_resample(spec: SystemSpec, mesh: RadialMesh, t0: float, t1: float,
                          tol: float = DEFAULT_TOL, threads=1, kind=None) -> RadialMesh:
    """Flow every node point from ``t0`` to ``t1`` and resample on the same grid."""
    if t1 < t0:
        raise InputError("push_forward_resample needs t1 >= t0")
    if spec.d != mesh.grid.d:
        raise InputError("mesh dimension does not match the system")
    images = flow_many(spec, t0, t1, mesh.points, tol, threads=threads)
    R = resample(mesh.grid, images)
    return RadialMesh(mesh.grid, R, TorusPoint.of(t1, spec.T).s, kind or mesh.kind)


# -- construction of Sigma_0 ---------------------------------------------


@dataclass
class HistoryRow:
    iter: int
    gap: float
    delta_lower: float
    delta_upper: float
    bracket_violation: float
    hausdorff: float

    def to_dict(self):
        return dict(self.__dict__)


class GapHistory(list):
    """Rows of :class:`HistoryRow`; also keeps the final brackets and the eps used."""

    def __init__(self, kappa=0.0):
        super().__init__()
        self.kappa = kappa
        self.eps = 0.0
        self.eps_log = []
        self.lower = None
        self.upper = None
        self.converged = False


def _choose_eps(spec, grid, eps, tol, threads, eps_floor=1e-6):
    log = []
    while eps >= eps_floor:
        lower = lower_mesh_init(grid, eps)
        nxt = push_forward_resample(spec, lower, 0.0, spec.T, tol, threads)
        ok = bool(np.all(nxt.R > lower.R))
        log.append({"eps": eps, "all_increased": ok})
        if ok:
            return eps, lower, nxt, log
        eps /= 2.0
    raise NonConverged(float("nan"), f"no eps >= {eps_floor} with P(eps Delta) above eps Delta",
                       partial=log)


def construct_sigma(spec: SystemSpec, grid: DirectionGrid, eps: float = 0.1,
                    kappa: float = 0.1, tol: float = 1e-6, max_iters: int = 500,
                    int_tol: float = DEFAULT_TOL, threads=1):
    """Carrying simplex at ``s = 0`` as the common limit of ``P^n(eps Delta)`` and ``P^n(H)``.

    Returns ``(sigma0, history)``.  ``sigma0`` is the midpoint of the two
    brackets, with ``error_bar`` set to their final sup-distance.

    Raises
    ------
    NonConverged
        When ``max_iters`` periods do not bring the brackets within ``tol``;
        ``exc.partial`` holds ``(midpoint mesh, history)``.
    """
    if not spec.normalized:
        raise InputError("construct_sigma needs a normalized system (see normalize_spec)")
    history = GapHistory(kappa=kappa)
    eps, _, lower, log = _choose_eps(spec, grid, eps, int_tol, threads)
    history.eps, history.eps_log = eps, log
    upper0 = upper_mesh_init(grid, kappa)
    upper = push_forward_resample(spec, upper0, 0.0, spec.T, int_tol, threads)
    d_lower = float(np.max(np.abs(lower.R - eps)))
    d_upper = float(np.max(np.abs(upper.R - upper0.R)))
    for it in range(1, max_iters + 1):
        if it > 1:
            new_lower = push_forward_resample(spec, lower, 0.0, spec.T, int_tol, threads)
            new_upper = push_forward_resample(spec, upper, 0.0, spec.T, int_tol, threads)
            d_lower = float(np.max(np.abs(new_lower.R - lower.R)))
            d_upper = float(np.max(np.abs(new_upper.R - upper.R)))
            lower, upper = new_lower, new_upper
        diff = upper.R - lower.R
        gap = float(np.max(np.abs(diff)))
        history.append(HistoryRow(it, gap, d_lower, d_upper, float(max(0.0, -diff.min())),
                                  hausdorff(lower.points, upper.points)))
        if max(gap, d_lower, d_upper) < tol:
            history.converged = True
            break
    history.lower, history.upper = lower, upper
    mid = RadialMesh(grid, 0.5 * (lower.R + upper.R), 0.0, "converged", gap)
    if not history.converged:
        raise NonConverged(gap, partial=(mid, history))
    return mid, history


def section(spec: SystemSpec, sigma0: RadialMesh, s: float, tol: float = DEFAULT_TOL,
            threads=1) -> RadialMesh:
    """``Sigma_s``: push ``Sigma_0`` from time 0 to the representative of ``s``."""
    sd = TorusPoint.of(float(s), spec.T).s
    if sd == 0.0:
        return sigma0.with_label(0.0, "converged")
    return push_forward_resample(spec, sigma0, 0.0, sd, tol, threads, kind="converged")


@dataclass(frozen=True, eq=False)
class SectionFamily:
    """Sections ``Sigma_s`` on ``s = k T / n`` sharing one direction grid."""

    T: float
    s_grid: tuple
    meshes: tuple
    continuity_modulus: float
    wrap_error: float        # Hausdorff distance between P_{last->T}(Sigma_last) and Sigma_0
    wrap_radial_error: float

    def __len__(self):
        return len(self.meshes)

    def at(self, s: float) -> RadialMesh:
        """Section whose label is nearest to ``s`` on the torus."""
        sd = TorusPoint.of(s, self.T).s
        n = len(self.meshes)
        k = int(round(sd / self.T * n)) % n
        return self.meshes[k]


def section_family(spec: SystemSpec, sigma0: RadialMesh, n_sections: int,
                   tol: float = DEFAULT_TOL, threads=1) -> SectionFamily:
    if n_sections < 1:
        raise InputError("n_sections must be >= 1")
    T = spec.T
    s_grid = tuple(k * T / n_sections for k in range(n_sections))
    meshes = [sigma0.with_label(0.0, "converged")]
    for s in s_grid[1:]:
        meshes.append(section(spec, sigma0, s, tol, threads))
    mods = [float(np.max(np.abs(meshes[k].R - meshes[(k + 1) % n_sections].R)))
            for k in range(n_sections)] if n_sections > 1 else [0.0]
    last = meshes[-1]
    wrapped = push_forward_resample(spec, last, s_grid[-1], T, tol, threads)
    wrap_h = hausdorff(wrapped.points, sigma0.points)
    wrap_r = float(np.max(np.abs(wrapped.R - sigma0.R)))
    return SectionFamily(T, s_grid, tuple(meshes), max(mods), wrap_h, wrap_r)


# -- metric utilities -----------------------------------------------------


def hausdorff(A, B, chunk: int = 4096) -> float:
    """Exact Hausdorff distance between two finite point sets (Euclidean norm)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0 or len(A) == 0 or len(B) == 0:
        raise InputError("Hausdorff distance needs two nonempty sets")
    if A.shape[1] != B.shape[1]:
        raise InputError("point sets live in different dimensions")
    return math.sqrt(max(_directed_sq(A, B, chunk), _directed_sq(B, A, chunk)))


def _directed_sq(A, B, chunk):
    worst = 0.0
    step = max(1, chunk * 64 // max(1, len(B)))
    for i in range(0, len(A), step):
        D = A[i:i + step, None, :] - B[None, :, :]
        sq = np.zeros(D.shape[:2])
        for c in range(A.shape[1]):  # fixed summation order over coordinates
            sq = sq + D[:, :, c] * D[:, :, c]
        worst = max(worst, float(sq.min(axis=1).max()))
    return worst


def radial_distance(mesh: RadialMesh, X) -> np.ndarray:
    """``||x - R(u) u||`` with ``u = x / ||x||_1``; an upper bound on the distance to the surface."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = directions_of(X)
    return np.linalg.norm(X - mesh.radius_at(U)[:, None] * U, axis=1)


def gamma_membership(mesh: RadialMesh, x, band: float = 1e-9):
    """Classify ``x`` against ``{alpha y : alpha in [0, 1], y in Sigma_s}``.

    Returns ``(label, margin)`` where ``margin = ||x||_1 - R(x/||x||_1)`` and
    label is ``"inside"``, ``"boundary"`` (within ``band``) or ``"outside"``.
    """
    x = np.asarray(x, dtype=float)
    norm = float(x.sum())
    if norm == 0.0:
        return "inside", -float(mesh.R.min())
    margin = norm - float(mesh.radius_at(x / norm)[0])
    if abs(margin) <= band:
        return "boundary", margin
    return ("inside" if margin < 0 else "outside"), margin


# -- file formats ---------------------------------------------------------


def write_mesh_csv(path, mesh: RadialMesh, comment: str | None = None):
    """Header ``s,u1..ud,R,x1..xd``, 17 significant digits."""
    d = mesh.grid.d
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s"] + [f"u{i + 1}" for i in range(d)] + ["R"] + [f"x{i + 1}" for i in range(d)])
        P = mesh.points
        for j in range(mesh.grid.n_nodes):
            w.writerow([f"{mesh.s:.17g}"] + [f"{v:.17g}" for v in mesh.grid.nodes[j]]
                       + [f"{mesh.R[j]:.17g}"] + [f"{v:.17g}" for v in P[j]])


def read_mesh_csv(path, kind: str = "converged") -> RadialMesh:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, data = rows[0], np.array(rows[1:], dtype=float)
    d = sum(1 for h in header if h.startswith("u"))
    U = data[:, 1:1 + d]
    pos = U[U > 0]
    m = int(round(1.0 / pos.min())) if d > 1 else 1
    grid = direction_grid(d, m)
    if grid.n_nodes != len(U) or not np.allclose(grid.nodes, U, atol=1e-15):
        raise InputError(f"{path}: nodes do not form a resolution-{m} grid in canonical order")
    return RadialMesh(grid, data[:, 1 + d], float(data[0, 0]), kind)


def write_family(directory, family: SectionFamily, meta: dict):
    os.makedirs(directory, exist_ok=True)
    comment = meta.get("comment")
    files = []
    for k, mesh in enumerate(family.meshes):
        name = f"section_{k:03d}.csv"
        write_mesh_csv(os.path.join(directory, name), mesh, comment)
        files.append(name)
    index = {"T": family.T, "n_sections": len(family), "tol": meta.get("tol"),
             "gap": meta.get("gap"), "s": list(family.s_grid), "files": files,
             "continuity_modulus": family.continuity_modulus,
             "wrap_error": family.wrap_error, "wrap_radial_error": family.wrap_radial_error}
    index.update({k: v for k, v in meta.items() if k not in index and k != "comment"})
    with open(os.path.join(directory, "index.json"), "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return index


def read_family(directory) -> SectionFamily:
    with open(os.path.join(directory, "index.json")) as fh:
        index = json.load(fh)
    meshes = tuple(read_mesh_csv(os.path.join(directory, f)) for f in index["files"])
    return SectionFamily(index["T"], tuple(index["s"]), meshes, index["continuity_modulus"],
                         index["wrap_error"], index["wrap_radial_error"])

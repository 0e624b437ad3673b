import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carrying_simplex.errors import InputError, MeshFoldingError, NonConverged
from carrying_simplex.model import decoupled_logistic, lv_smooth
from carrying_simplex.poincare import axis_map, normalize_spec
from carrying_simplex.simplex import (RadialMesh, SimplexLocator, construct_sigma,
                                      direction_grid, directions_of, gamma_membership,
                                      hausdorff, lower_mesh_init, push_forward_resample,
                                      radial_distance, read_family, read_mesh_csv, resample,
                                      section, section_family, upper_mesh_init, write_family,
                                      write_mesh_csv)

from conftest import LV_A


def brute_hausdorff(A, B):
    def d(a, b):
        s = 0.0
        for c in range(len(a)):
            s = s + (a[c] - b[c]) * (a[c] - b[c])
        return math.sqrt(s)
    ab = max(min(d(a, b) for b in B) for a in A)
    ba = max(min(d(a, b) for a in A) for b in B)
    return max(ab, ba)


# -- grids ----------------------------------------------------------------


@pytest.mark.parametrize("d,m", [(2, 1), (2, 7), (3, 4), (4, 3), (4, 5)])
def test_grid_counts(d, m):
    g = direction_grid(d, m)
    assert g.n_nodes == math.comb(m + d - 1, d - 1)
    assert len(g.simplices) == m ** (d - 1)
    np.testing.assert_array_equal(g.counts.sum(axis=1), m)
    np.testing.assert_allclose(g.nodes.sum(axis=1), 1.0, rtol=0, atol=1e-15)


def test_grid_order_and_vertices():
    g = direction_grid(2, 2)
    assert g.nodes.tolist() == [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]
    g3 = direction_grid(3, 4)
    assert g3.vertex_index == [0, 10, 14]
    assert g3.counts[0].tolist() == [4, 0, 0]


@pytest.mark.parametrize("d,m", [(3, 4), (3, 9), (4, 3)])
def test_kuhn_triangulation_covers_simplex(d, m):
    g = direction_grid(d, m)
    vols = np.abs(np.linalg.det(g.coords[g.simplices[:, 1:]] - g.coords[g.simplices[:, :1]]))
    vols /= math.factorial(d - 1)
    assert vols.sum() == pytest.approx(1.0 / math.factorial(d - 1), rel=1e-12)
    assert np.all(vols > 0)
    assert np.all(g.orientation != 0)


def test_grid_limits():
    with pytest.raises(InputError):
        direction_grid(0, 3)
    with pytest.raises(InputError):
        direction_grid(12, 400)


def test_locator_reports_outside_points():
    g = direction_grid(3, 3)
    loc = SimplexLocator(g.coords, g.simplices)
    _, w, minw = loc.locate([[0.2, 0.3], [0.9, 0.9]])
    assert minw[0] >= 0 and minw[1] < -0.1
    np.testing.assert_allclose(w.sum(axis=1), 1.0)


# -- meshes ---------------------------------------------------------------


def test_mesh_validation():
    g = direction_grid(2, 4)
    with pytest.raises(InputError):
        RadialMesh(g, np.ones(3))
    with pytest.raises(InputError):
        RadialMesh(g, -np.ones(5))
    with pytest.raises(InputError):
        lower_mesh_init(g, 0.0)


def test_harmonic_interpolation_is_exact_on_flat_facets():
    # the hyperplane x_1 / 2 + x_2 + x_3 / 3 = 1 is recovered exactly between nodes
    g = direction_grid(3, 5)
    c = np.array([0.5, 1.0, 1.0 / 3.0])
    mesh = RadialMesh(g, 1.0 / (g.nodes @ c))
    U = np.random.default_rng(0).dirichlet(np.ones(3), size=50)
    np.testing.assert_allclose(mesh.radius_at(U), 1.0 / (U @ c), rtol=1e-13)
    np.testing.assert_allclose(radial_distance(mesh, mesh.radius_at(U)[:, None] * U), 0.0,
                               atol=1e-13)


def test_upper_mesh_is_box_boundary():
    g = direction_grid(2, 8)
    up = upper_mesh_init(g, 0.1)
    np.testing.assert_allclose(up.points.max(axis=1), 1.1)


def test_resample_identity_and_folding():
    g = direction_grid(2, 8)
    mesh = RadialMesh(g, 1.0 + 0.1 * g.nodes[:, 0])
    np.testing.assert_array_equal(resample(g, mesh.points), mesh.R)
    folded = mesh.points[::-1].copy()
    with pytest.raises(MeshFoldingError):
        resample(g, folded)
    shrunk = mesh.points.copy()
    shrunk[0] = [0.5, 0.5]  # the vertex e1 is no longer covered
    with pytest.raises(MeshFoldingError):
        resample(g, shrunk)


def test_push_forward_keeps_axis_values(normalized):
    ns = normalized["seasonal"]
    g = direction_grid(2, 16)
    mesh = RadialMesh(g, np.full(g.n_nodes, 0.4))
    nxt = push_forward_resample(ns, mesh, 0.0, ns.T)
    assert nxt.R[0] == axis_map(ns, 0, 0.4)
    assert nxt.R[-1] == axis_map(ns, 1, 0.4)
    with pytest.raises(InputError):
        push_forward_resample(ns, mesh, 1.0, 0.0)


# -- construction ---------------------------------------------------------


def test_construct_requires_normalized():
    with pytest.raises(InputError):
        construct_sigma(decoupled_logistic(2), direction_grid(2, 8))


def test_logistic_simplex_is_box_boundary(small_meshes):
    sig, hist, _ = small_meshes["logistic"]
    g = sig.grid
    assert np.max(np.abs(sig.R - 1.0 / g.nodes.max(axis=1))) < 1e-6
    assert hist.converged and hist[-1].gap < 1e-9
    assert sig.error_bar == hist[-1].gap
    assert all(r.bracket_violation <= 1e-9 for r in hist)


def test_lv_simplex_diagonal(small_meshes):
    sig, _, fam = small_meshes["lv"]
    assert abs(sig.radius_at([[0.5, 0.5]])[0] - 4.0 / 3.0) < 1e-3
    assert abs(sig.R[0] - 1) < 1e-6 and abs(sig.R[-1] - 1) < 1e-6
    # autonomous: every section is the same surface up to interpolation error
    assert fam.continuity_modulus < 1e-3


def test_gap_history_is_decreasing(small_meshes):
    for name in ("logistic", "lv", "seasonal"):
        gaps = [r.gap for r in small_meshes[name][1]]
        assert all(b <= a for a, b in zip(gaps, gaps[1:]))


def test_nonconverged_keeps_partial(normalized):
    with pytest.raises(NonConverged) as exc:
        construct_sigma(normalized["lv"], direction_grid(2, 16), max_iters=2)
    mid, hist = exc.value.partial
    assert len(hist) == 2 and not hist.converged and mid.error_bar == exc.value.gap


def test_epsilon_is_halved_when_too_large():
    # the axis fixed points of this system sit at 1 after normalization, but the
    # interior coexistence point is close to the origin, so eps = 0.1 overshoots
    spec = lv_smooth([1.0, 1.0], [[1.0, 8.0], [8.0, 1.0]])
    ns, _ = normalize_spec(spec)
    sig, hist = construct_sigma(ns, direction_grid(2, 16), eps=0.5, tol=1e-6)
    assert hist.eps < 0.5 and hist.eps_log[0]["all_increased"] is False


def test_sections_autonomous_eight(normalized):
    ns = normalized["lv"]
    sig, _ = construct_sigma(ns, direction_grid(2, 32), tol=1e-8)
    fam = section_family(ns, sig, 8)
    assert len(fam) == 8 and fam.s_grid[3] == 3 / 8
    for mesh in fam.meshes:
        assert np.max(np.abs(mesh.R - sig.R)) < 1e-3
    assert fam.at(0.99) is fam.meshes[0]
    assert fam.at(0.4).s == 3 / 8
    assert section(ns, sig, 2.0).s == 0.0


def test_section_family_wraps(small_meshes):
    _, _, fam = small_meshes["seasonal"]
    assert fam.wrap_error < 5e-3
    assert len(set(m.s for m in fam.meshes)) == 16


def test_d3_logistic_construction():
    # the surface is creased where two faces of the box meet; facets cutting
    # across a crease give O(h) errors that shrink under refinement
    ns, _ = normalize_spec(decoupled_logistic(3))
    errs = []
    for m in (8, 16):
        sig, _ = construct_sigma(ns, direction_grid(3, m), tol=1e-8)
        exact = 1.0 / sig.grid.nodes.max(axis=1)
        errs.append(np.max(np.abs(sig.R - exact)))
        np.testing.assert_allclose(sig.R[sig.grid.vertex_index], 1.0, atol=1e-6)
    assert errs[1] < errs[0] < 0.15


# -- metrics --------------------------------------------------------------


def test_hausdorff_matches_brute_force(rng):
    for _ in range(10):
        A = rng.normal(size=(rng.integers(1, 40), 3))
        B = rng.normal(size=(rng.integers(1, 40), 3))
        assert hausdorff(A, B) == brute_hausdorff(A, B)
    assert hausdorff(A, A) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_hausdorff_metric_properties(seed):
    r = np.random.default_rng(seed)
    A, B, C = (r.uniform(size=(r.integers(1, 20), 2)) for _ in range(3))
    assert hausdorff(A, B) == hausdorff(B, A)
    assert hausdorff(A, C) <= hausdorff(A, B) + hausdorff(B, C) + 1e-15


def test_gamma_membership(small_meshes):
    sig = small_meshes["lv"][0]
    p = sig.points[10]
    assert gamma_membership(sig, p)[0] == "boundary"
    assert gamma_membership(sig, 0.5 * p)[0] == "inside"
    assert gamma_membership(sig, 1.5 * p)[0] == "outside"
    assert gamma_membership(sig, [0.0, 0.0])[0] == "inside"
    np.testing.assert_allclose(radial_distance(sig, sig.points), 0.0, atol=1e-15)
    np.testing.assert_allclose(directions_of(sig.points), sig.grid.nodes, atol=1e-15)


# -- files ----------------------------------------------------------------


def test_mesh_csv_round_trip(tmp_path, small_meshes):
    sig = small_meshes["seasonal"][0]
    path = tmp_path / "m.csv"
    write_mesh_csv(path, sig, "note")
    lines = path.read_text().splitlines()
    assert lines[0] == "# note" and lines[1] == "s,u1,u2,R,x1,x2"
    back = read_mesh_csv(path)
    np.testing.assert_array_equal(back.R, sig.R)
    np.testing.assert_array_equal(back.grid.nodes, sig.grid.nodes)


def test_family_round_trip(tmp_path, small_meshes):
    fam = small_meshes["seasonal"][2]
    index = write_family(tmp_path / "fam", fam, {"tol": 1e-9, "gap": 1e-10, "seed": 3})
    assert index["files"][0] == "section_000.csv" and index["seed"] == 3
    assert json.loads((tmp_path / "fam" / "index.json").read_text())["n_sections"] == 16
    back = read_family(tmp_path / "fam")
    assert back.s_grid == fam.s_grid and back.wrap_error == fam.wrap_error
    for a, b in zip(back.meshes, fam.meshes):
        np.testing.assert_array_equal(a.R, b.R)
        assert a.s == b.s

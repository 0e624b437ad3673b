import json
import math

import numpy as np
import pytest

from carrying_simplex.errors import MeshFoldingError
from carrying_simplex.model import decoupled_logistic, lv_smooth
from carrying_simplex.simplex import RadialMesh, construct_sigma, direction_grid, section_family
from carrying_simplex.verify import (ProjectedSection, check_asymptotic_phase,
                                     check_attraction, check_conjugacy,
                                     check_lipschitz_projection, check_origin_repeller,
                                     check_retrotone, check_unordered, project)


def test_unordered_examples():
    for mode in ("weak", "strict"):
        assert check_unordered([[1, 0.5], [0.5, 1]], mode).passed
    rep = check_unordered([[1, 1], [0.5, 0.5]], "weak")
    assert not rep.passed and rep.worst_margin == 0.5
    assert sorted(map(tuple, (rep.witness["x"], rep.witness["y"]))) == [(0.5, 0.5), (1, 1)]
    assert check_unordered([[1, 1], [1, 0.5]], "weak").passed
    rep = check_unordered([[1, 1], [1, 0.5]], "strict")
    assert not rep.passed and rep.witness["y"] == [1, 1]
    with pytest.raises(ValueError):
        check_unordered([[1, 1]], "neither")


def test_unordered_tolerance_band():
    pts = [[1.0, 0.5], [1.0 + 5e-10, 0.5 + 5e-10]]
    assert check_unordered(pts, "weak").passed
    assert check_unordered(pts, "strict").passed
    assert not check_unordered(pts, "weak", tol=1e-12).passed


def test_unordered_on_meshes(small_meshes):
    for name in ("logistic", "lv", "seasonal"):
        assert check_unordered(small_meshes[name][0], "weak").passed
    for name in ("lv", "seasonal"):
        assert check_unordered(small_meshes[name][0], "strict").passed
    # the flat edges of the box boundary contain ordered pairs
    assert not check_unordered(small_meshes["logistic"][0], "strict").passed


def test_projection_formula():
    np.testing.assert_array_equal(project([1.0, 0.0]), [0.5, -0.5])
    np.testing.assert_allclose(project([[1, 2, 3]]).sum(), 0.0, atol=1e-15)


def test_lipschitz_on_logistic(small_meshes):
    rep = check_lipschitz_projection(small_meshes["logistic"][0])
    assert rep.passed
    assert rep.details["bound"] == math.sqrt(3)
    assert rep.details["max_ratio"] == pytest.approx(math.sqrt(2), rel=1e-12)


def test_lipschitz_detects_vertical_pairs():
    rep = check_lipschitz_projection([[1.0, 1.0], [2.0, 2.0]])
    assert not rep.passed and math.isinf(rep.details["max_ratio"])


def test_retrotone_logistic():
    rep = check_retrotone(decoupled_logistic(2), 1000)
    assert rep.passed and rep.budget["pairs_used"] == 1000
    json.dumps(rep.to_dict())


def test_retrotone_flags_cooperative_system():
    coop = lv_smooth([1.0, 1.0], [[1.0, -0.8], [-0.8, 1.0]])
    rep = check_retrotone(coop, 1000, box=([0, 0], [1.1, 1.1]))
    assert not rep.passed and rep.status == "fail"
    w = rep.witness
    # the witness is reproducible: P(x) <= P(y), yet x is not below y
    assert np.all(np.array(w["Px"]) <= np.array(w["Py"]))
    assert np.max(np.array(w["x"]) - np.array(w["y"])) > 1e-9


def test_retrotone_inconclusive_without_usable_pairs():
    spec = decoupled_logistic(2)
    rep = check_retrotone(spec, 100, box=([0.5, 0.5], [0.5, 0.5]), max_draws=200)
    assert rep.inconclusive and rep.status == "inconclusive"


def test_attraction_logistic(small_meshes, normalized):
    fam = small_meshes["logistic"][2]
    ns = normalized["logistic"]
    rep = check_attraction(ns, fam, starts=[[0.1, 0.1]], horizon_periods=20)
    assert rep.passed and rep.details["worst_final_distance"] < 1e-4
    rep = check_attraction(ns, fam, starts=[[1.5, 1.5]], horizon_periods=20)
    assert rep.passed and rep.details["worst_final_distance"] < 1e-4
    rep = check_attraction(ns, fam, n_starts=30, horizon_periods=20)
    assert rep.passed


def test_attraction_start_on_sigma(small_meshes, normalized):
    sig, _, fam = small_meshes["seasonal"]
    rep = check_attraction(normalized["seasonal"], fam, starts=sig.points[::8],
                           horizon_periods=4, tail_tol=1e-3)
    assert rep.details["worst_final_distance"] < 1e-3


def test_attraction_failure_has_witness(small_meshes, normalized):
    fam = small_meshes["lv"][2]
    rep = check_attraction(normalized["lv"], fam, starts=[[0.02, 1.9]], horizon_periods=2,
                           tol=1e-8)
    assert not rep.passed and rep.witness["start"] == [0.02, 1.9]


def test_origin_repeller(small_meshes, normalized):
    sig, _, fam = small_meshes["lv"]
    ns = normalized["lv"]
    rep = check_origin_repeller(ns, fam, n_starts=10)
    assert rep.passed and rep.details["inside"] == 10
    rep = check_origin_repeller(ns, fam, starts=[0.5 * sig.points[20]])
    assert rep.passed
    rep = check_origin_repeller(ns, fam, starts=[1.5 * sig.points[20]])
    assert rep.passed and rep.details["outside"] == 1


def test_origin_repeller_boundary_orbit(normalized):
    # backward time expands the normal direction by about e per period, so the
    # node error of the mesh must be well below tol * e^-5
    ns = normalized["lv"]
    sig, _ = construct_sigma(ns, direction_grid(2, 1024), tol=1e-9)
    fam = section_family(ns, sig, 4)
    rep = check_origin_repeller(ns, fam, starts=sig.points[::128], band=1e-6)
    assert rep.passed and rep.details["boundary"] == 9


def test_asymptotic_phase(small_meshes, normalized):
    sig = small_meshes["logistic"][0]
    ns = normalized["logistic"]
    rep = check_asymptotic_phase(ns, sig.points[7], sig)
    assert rep.passed and rep.worst_margin == 0.0 and rep.details["partner_index"] == 7
    rep = check_asymptotic_phase(ns, [0.3, 0.7], sig)
    assert rep.passed and rep.worst_margin < 1e-4
    lv_sig = small_meshes["lv"][0]
    y = lv_sig.points[30]
    direct = check_asymptotic_phase(normalized["lv"], 0.5 * y, lv_sig)
    assert direct.passed
    partner = np.array(direct.details["partner"])
    assert np.linalg.norm(partner - y) < 0.1


def test_asymptotic_phase_inconclusive(small_meshes, normalized):
    sig = small_meshes["lv"][0]
    rep = check_asymptotic_phase(normalized["lv"], [0.3, 0.9], sig, tol=1e-14)
    assert rep.inconclusive


def test_conjugacy_logistic(small_meshes, normalized):
    rep = check_conjugacy(normalized["logistic"], small_meshes["logistic"][2], tol=1e-8)
    assert rep.passed
    assert rep.details["reconstruction"] < 1e-12


def test_conjugacy_seasonal_error_bounded(small_meshes, normalized):
    rep = check_conjugacy(normalized["seasonal"], small_meshes["seasonal"][2], tol=1e-3,
                          t_step=0.125)
    assert rep.passed and len(rep.details["sections"]) == 16
    with pytest.raises(ValueError):
        check_conjugacy(normalized["seasonal"], small_meshes["seasonal"][2], t_step=0.1)


def test_projected_section_folding():
    g = direction_grid(2, 4)
    R = np.array([1.0, 1.0, 1.0, 1.0, 1.0])
    R[1] = 50.0  # this node projects past its neighbour
    with pytest.raises(MeshFoldingError):
        ProjectedSection(RadialMesh(g, R))

import math

import numpy as np
import pytest

from stircp.coupling import (
    NOT_GOOD,
    FailureCause,
    NotGood,
    box_id_array,
    continue_brw_free,
    couple_icp_brw,
    couple_icp_brw_batch,
    couple_interchange,
    couple_interchange_batch,
    cover_boxes,
    good_pairing,
)
from stircp.icp import ICPParams
from stircp.lattice import DomainError, Geometry
from stircp.stats import chi2_two_sample


def _g(n=64):
    return Geometry(1, n)


# ---------------------------------------------------------------------------
# pairing and cover boxes
# ---------------------------------------------------------------------------


def test_cover_boxes_overshoot():
    g = _g(256)
    boxes = cover_boxes(g, 4, 64)  # covers [-56, 56] with width-9 boxes
    assert len(boxes) == 13
    los = [b[0][0] for b in boxes]
    assert min(los) == -56
    assert max(b[1][0] for b in boxes) >= 56


def test_cover_boxes_too_large_for_torus():
    g = _g(16)
    with pytest.raises(DomainError):
        cover_boxes(g, 4, 64)


def test_good_pairing_empty_lower():
    g = _g(64)
    xi = np.zeros(64, dtype=np.int8)
    xi2 = np.zeros(64, dtype=np.int8)
    pairing = good_pairing(xi, xi2, 2, 12, g)
    assert not isinstance(pairing, NotGood)
    assert pairing.pairs == {}


def test_good_pairing_identity_all_matched():
    g = _g(64)
    rng = np.random.default_rng(0)
    xi = (rng.random(64) < 0.5).astype(np.int8)
    pairing = good_pairing(xi, xi, 2, 12, g)
    assert not isinstance(pairing, NotGood)
    box_id, _ = box_id_array(g, 2, 12)
    for z, mz in pairing.pairs.items():
        assert z == mz
        assert pairing.matched[z]


def test_good_pairing_pigeonhole():
    g = _g(64)
    xi = np.zeros(64, dtype=np.int8)
    xi2 = np.zeros(64, dtype=np.int8)
    box_id, nboxes = box_id_array(g, 2, 12)
    sites = np.flatnonzero(box_id == 0)
    xi[sites[:3]] = 1
    xi2[sites[:2]] = 1
    assert isinstance(good_pairing(xi, xi2, 2, 12, g), NotGood)


def test_good_pairing_within_box():
    g = _g(64)
    rng = np.random.default_rng(4)
    xi = (rng.random(64) < 0.3).astype(np.int8)
    xi2 = (rng.random(64) < 0.8).astype(np.int8)
    pairing = good_pairing(xi, xi2, 2, 12, g)
    if not isinstance(pairing, NotGood):
        box_id, _ = box_id_array(g, 2, 12)
        for z, mz in pairing.pairs.items():
            assert box_id[z] == box_id[mz] >= 0


# ---------------------------------------------------------------------------
# two-family stirring coupling
# ---------------------------------------------------------------------------


def test_couple_equal_configs_always_succeeds():
    g = _g(128)
    rng = np.random.default_rng(1)
    xi = (rng.random(128) < 0.5).astype(np.uint8)
    out = couple_interchange(xi, xi.copy(), 2, 24, 8.0, 16.0, seed=5, g=g)
    assert out.success
    assert out.dominated_window_verified


def test_couple_impossible_pairing_fails_at_epoch_zero():
    g = _g(128)
    xi = np.ones(128, dtype=np.uint8)
    xi2 = np.zeros(128, dtype=np.uint8)
    out = couple_interchange(xi, xi2, 2, 24, 8.0, 16.0, seed=6, g=g)
    assert not out.success
    assert out.cause is FailureCause.PAIRING_EPOCH


def test_couple_success_implies_domination_batch():
    g = _g(128)
    scal, _ = couple_interchange_batch(
        0.2, 0.8, 2, 24, 16.0, 32.0, 200, 11, g, stop_on_failure=True
    )
    successes = scal[:, 0] == 1
    assert successes.sum() > 0
    assert (scal[successes, 2] == 0).all()  # no domination violations


def test_couple_failure_causes_recorded():
    g = _g(128)
    scal, _ = couple_interchange_batch(0.45, 0.55, 2, 24, 16.0, 32.0, 200, 12, g)
    failures = scal[:, 0] == 0
    assert (scal[failures, 1] > 0).all()


def test_coupled_lower_marginal_is_plain_stirring():
    # site marginal and a two-point cell of the coupled lower process vs a
    # plain single-family run, chi-square at level 0.01
    from stircp._kernels import plain_stirring_final

    g = _g(64)
    T = 8.0
    scal, finals = couple_interchange_batch(
        0.4, 0.6, 2, 12, 4.0, T, 2500, 13, g, collect_final=True, stop_on_failure=False
    )
    edges = g.edges()
    import numpy as np

    edge_a = np.array([e[0] for e in edges], dtype=np.int64)
    edge_b = np.array([e[1] for e in edges], dtype=np.int64)
    ref = plain_stirring_final(14, 2500, edge_a, edge_b, 0.4, T)
    c0, c1 = 32, 35
    joint_coupled = np.zeros(4, dtype=int)
    joint_ref = np.zeros(4, dtype=int)
    for r in range(2500):
        joint_coupled[2 * finals[r, c0] + finals[r, c1]] += 1
        joint_ref[2 * ref[r, c0] + ref[r, c1]] += 1
    _, _, pval = chi2_two_sample(joint_coupled, joint_ref)
    assert pval > 0.01
    # site marginals
    _, _, p2 = chi2_two_sample(
        np.array([finals[:, c0].sum(), 2500 - finals[:, c0].sum()]),
        np.array([ref[:, c0].sum(), 2500 - ref[:, c0].sum()]),
    )
    assert p2 > 0.01


# ---------------------------------------------------------------------------
# infection <-> walker pairing
# ---------------------------------------------------------------------------


def _params(n=128, lam=1.5, v=16.0, p=0.5):
    return ICPParams(_g(n), lam, v, p)


def _initial(g, count=2):
    origin = g.site_index(g.origin())
    return [(origin + 2 * k) % g.nsites for k in range(count)]


def test_pairing_lam_zero_never_branches():
    # a single infection has no infected neighbor, ever: the walker mimics
    # the particle exactly and the selective-jump sums stay at zero
    prm = _params(lam=0.0)
    run = couple_icp_brw(_initial(prm.g, 1), prm, 1.0, seed=3)
    assert run.collision_time is None
    assert run.n_infections == 1
    assert run.bijection_ok and run.identity_ok
    assert (run.records["maxd"] == 0).all()
    assert (run.records["maxe"] == 0).all()
    assert (run.records["leb"] == 0.0).all()
    assert (run.records["maxxw"] == 0).all()


def test_pairing_lam_zero_two_seeds_no_branching():
    prm = _params(lam=0.0)
    run = couple_icp_brw(_initial(prm.g, 2), prm, 1.0, seed=3)
    assert run.collision_time is None
    assert run.n_infections == 2
    assert run.bijection_ok and run.identity_ok


def test_pairing_full_lattice_all_attempts_occupied():
    prm = _params(p=1.0, v=8.0, lam=1.0)
    run = couple_icp_brw(_initial(prm.g), prm, 1.0, seed=4)
    assert run.attempts_before_collision == run.attempts_on_occupied


def test_pairing_bijection_and_identity_batch():
    prm = _params()
    scal, flt = couple_icp_brw_batch(_initial(prm.g, 3), prm, 1.5, 300, 9)
    assert (scal[:, 1] == 1).all()  # bijection held in every replica
    assert (scal[:, 6] == 1).all()  # birth-gap identity held exactly
    assert (scal[:, 5] == 0).all()  # no capacity overruns


def test_pairing_occupancy_fraction_near_p():
    prm = _params(p=0.5, v=32.0)
    scal, _ = couple_icp_brw_batch(_initial(prm.g, 4), prm, 2.0, 400, 21)
    att = int(scal[:, 2].sum())
    occ = int(scal[:, 3].sum())
    assert att > 200
    phat = occ / att
    sigma = math.sqrt(0.25 / att)
    assert abs(phat - 0.5) <= 4 * sigma


def test_pairing_distance_bound_shape():
    # whenever every record keeps maxD+maxE under the threshold, the
    # walker-particle gap stays under rank*(threshold+1)
    prm = _params(v=16.0)
    scal, flt = couple_icp_brw_batch(_initial(prm.g, 3), prm, 1.5, 300, 31)
    premise = scal[:, 9] == 1
    assert premise.sum() > 0
    assert (scal[premise, 10] == 0).all()


def test_continue_brw_free_runs():
    alive = continue_brw_free([(0,), (2,)], beta=1.0, v=2.0, horizon=0.5, seed=3, d=1)
    assert isinstance(alive, list)


def test_failure_frequency_below_component_bound():
    # error shape of the domination statement: the failure frequency is
    # bounded by the deviation terms plus the unmet-pair and discrepancy
    # terms (components taken at their analytic envelopes here, which the
    # desk-scale window makes vacuously large; the direction is recorded)
    g = _g(256)
    reps = 200
    scal, _ = couple_interchange_batch(0.4, 0.6, 4, 64, 320.0, 640.0, reps, 41, g)
    fail_freq = 1.0 - scal[:, 0].sum() / reps
    from stircp.interchange import discr_ip_bound, g_integral_bound

    meet_est = 0.3  # measured floor for radius-4 separations
    comp = (
        g_integral_bound(1, 4, 64, 320.0, 0.4, 0.5)
        + g_integral_bound(1, 4, 64, 320.0, 0.5, 0.6)
        + 65 * (1 - meet_est) ** 20
        + min(1.0, discr_ip_bound(1, 16, 32, 640.0))
    )
    assert fail_freq <= comp + 3 * math.sqrt(0.25 / reps)

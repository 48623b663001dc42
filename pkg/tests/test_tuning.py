import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdvplan.exceptions import GeometryInfeasible
from hdvplan.road import build_road, piecewise_kappa
from hdvplan.tuning import (
    bus_optimal_K,
    bus_optimal_radius,
    k_schedule,
    optimal_K,
    tt_balance_rhs,
    tt_optimal_K,
    tt_optimal_radius,
)
from hdvplan.vehicle import CITY_BUS, TRACTOR_TRAILER, BusParams, TractorTrailerParams

from oracles import bus_balance_oracle, bus_swept_radii, tt_balance_oracle, tt_swept_radii

# high-precision decimal evaluation of the closed form at R_road = 8, W = 2.5, L1 = 4, L1f = 1
BUS8_E_Y = 0.675675675675675675676
BUS8_E_AUX = -0.345401536648130033531
BUS8_K = 0.511194274239232449626


def _bus(L1=4.0, L1f=1.0, W=2.5, kappa_max=0.2):
    return BusParams(L1=L1, L1f=L1f, L1r=2.0, W=W, kappa_max=kappa_max, kappa_rate_max=0.05)


def _random_bus(rng):
    # front overhangs beyond about 0.41 * L1 push the front axle inside the
    # lane center at balance and admit no positive weight
    L1 = rng.uniform(2.5, 7.0)
    return _bus(L1=L1, L1f=rng.uniform(0.0, 0.35 * L1), W=rng.uniform(2.0, 2.6),
                kappa_max=0.25), rng.uniform(10.0, 60.0)


def _random_tt(rng):
    # trailers longer than the tractor, so the rear axle runs inside the lane
    # center at balance and the weight is positive
    tractor = BusParams(L1=rng.uniform(3.0, 4.5), L1f=rng.uniform(0.8, 1.6), L1r=1.0,
                        W=rng.uniform(2.2, 2.6), kappa_max=0.25, kappa_rate_max=0.05)
    p = TractorTrailerParams(tractor, L2=rng.uniform(6.5, 9.5), L2r=rng.uniform(0.5, 2.0),
                             M1=rng.uniform(-0.6, 0.6))
    return p, rng.uniform(12.0, 60.0)


# ---------------------------------------------------------------------------
# Bus


def test_bus_point_vehicle_keeps_road_radius():
    p = SimpleNamespace(L1=0.0, L1f=0.0, W=2.5, kappa_max=0.1)
    assert bus_optimal_radius(20.0, p) == 20.0


def test_bus_radius_reference_case():
    assert bus_optimal_radius(8.0, CITY_BUS) == pytest.approx(271.0 / 37.0, abs=1e-12)
    assert bus_optimal_radius(8.0, CITY_BUS) == pytest.approx(
        bus_balance_oracle(8.0, 2.5, 4.0, 1.0), abs=1e-6)


def test_bus_radius_zero_width():
    p = SimpleNamespace(L1=4.0, L1f=1.0, W=0.0, kappa_max=0.1)
    assert bus_optimal_radius(15.0, p) == pytest.approx(15.0 - 25.0 / 60.0, abs=1e-12)


def test_bus_K_reference_case():
    sol = bus_optimal_K(8.0, CITY_BUS)
    assert sol.e_y == pytest.approx(BUS8_E_Y, abs=1e-12)
    assert sol.e_y_aux == pytest.approx(BUS8_E_AUX, abs=1e-12)
    assert sol.K == pytest.approx(BUS8_K, abs=1e-12)
    assert abs(sol.K * sol.e_y + sol.e_y_aux) <= 1e-12
    assert sol.R2 is None and sol.beta1 is None
    assert abs(sol.R_left) < 8.0 < abs(sol.R_right)


def test_bus_K_mirror():
    left, right = bus_optimal_K(8.0, CITY_BUS), bus_optimal_K(-8.0, CITY_BUS)
    assert right.K == left.K
    assert right.e_y == -left.e_y
    assert right.e_y_aux == -left.e_y_aux
    assert right.R1 == -left.R1
    assert right.R_left == -left.R_left


def test_bus_defining_identity_random_draws():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p, R = _random_bus(rng)
        sol = bus_optimal_K(R, p)
        assert abs(sol.K * sol.e_y + sol.e_y_aux) <= 1e-12
        assert sol.K > 0
        assert abs((R - sol.R_left) - (sol.R_right - R)) <= 1e-9


def test_bus_balance_matches_rectangle_geometry():
    sol = bus_optimal_K(12.0, CITY_BUS)
    rmin, rmax = bus_swept_radii(sol.R1, CITY_BUS.W, CITY_BUS.L1, CITY_BUS.L1f, CITY_BUS.L1r)
    assert rmin == pytest.approx(sol.R_left, abs=1e-12)
    assert rmax == pytest.approx(sol.R_right, abs=1e-12)


@pytest.mark.parametrize("R", [1.0, 2.0, 4.5, 0.0, math.inf, math.nan])
def test_bus_infeasible_radius(R):
    with pytest.raises(GeometryInfeasible):
        bus_optimal_K(R, CITY_BUS)


# ---------------------------------------------------------------------------
# Tractor-trailer


def test_tt_degenerate_collapses_to_road_radius():
    # L2 = |M1|, no tractor length, no width: balance reduces to 2 R_road = 2 R1
    p = SimpleNamespace(L1=0.0, L1f=0.0, W=0.0, L2=0.3, M1=0.3, kappa_max=1.0)
    assert tt_optimal_radius(10.0, p) == pytest.approx(10.0, abs=1e-10)


def test_tt_radius_reference_case():
    p = TRACTOR_TRAILER
    R1 = tt_optimal_radius(12.0, p)
    assert abs(tt_balance_rhs(R1, p) - 24.0) < 1e-10
    ref = tt_balance_oracle(12.0, p.W, p.L1, p.L1f, p.L2, p.M1, p.L1r, p.L2r)
    assert R1 == pytest.approx(ref, abs=1e-6)
    rmin, rmax, _ = tt_swept_radii(R1, p.W, p.L1, p.L1f, p.L2, p.M1, p.L1r, p.L2r)
    assert abs((12.0 - rmin) - (rmax - 12.0)) < 1e-8


def test_tt_rhs_monotone_random_draws():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p, _ = _random_tt(rng)
        lo = math.sqrt(p.L2 ** 2 - p.M1 ** 2) + p.W / 2 + 1e-6
        R1 = rng.uniform(lo, 80.0)
        assert tt_balance_rhs(R1 + 1.0, p) > tt_balance_rhs(R1, p)


def test_tt_K_reference_case():
    p = TRACTOR_TRAILER
    sol = tt_optimal_K(12.0, p)
    R1 = sol.R1
    assert sol.R2 == pytest.approx(math.sqrt(R1 ** 2 + p.M1 ** 2 - p.L2 ** 2), rel=1e-14)
    assert sol.e_y == pytest.approx(12.0 - R1, abs=1e-12)
    assert sol.e_y < 0 < sol.e_y_aux
    assert sol.e_y_aux == pytest.approx(12.0 - sol.R2, abs=1e-12)
    assert sol.beta1 == pytest.approx(math.atan(p.M1 / R1) + math.atan(p.L2 / sol.R2), abs=1e-14)
    # the weight that zeroes K * e_y + e_y_aux at balance
    assert sol.K == pytest.approx((12.0 - sol.R2) / (R1 - 12.0), rel=1e-12)
    assert abs(sol.K * sol.e_y + sol.e_y_aux) <= 1e-12
    assert abs((12.0 - sol.R_left) - (sol.R_right - 12.0)) <= 1e-9


def test_tt_K_mirror():
    a, b = tt_optimal_K(15.0, TRACTOR_TRAILER), tt_optimal_K(-15.0, TRACTOR_TRAILER)
    assert b.K == a.K
    assert (b.e_y, b.e_y_aux, b.beta1, b.R1, b.R2) == (-a.e_y, -a.e_y_aux, -a.beta1, -a.R1, -a.R2)


def test_tt_short_trailer_rejected():
    p = TractorTrailerParams(CITY_BUS, L2=5e-4, L2r=0.0, M1=0.0)
    with pytest.raises(GeometryInfeasible):
        tt_optimal_K(20.0, p)


@pytest.mark.parametrize("R", [3.0, 6.0])
def test_tt_tight_radius_infeasible(R):
    with pytest.raises(GeometryInfeasible):
        tt_optimal_K(R, TRACTOR_TRAILER)


def test_tt_identities_random_draws():
    rng = np.random.default_rng(9)
    for _ in range(100):
        p, R = _random_tt(rng)
        sol = tt_optimal_K(R, p)
        assert abs(sol.K * sol.e_y + sol.e_y_aux) <= 1e-12
        assert abs((R - sol.R_left) - (sol.R_right - R)) <= 1e-9
        assert sol.K > 0


# ---------------------------------------------------------------------------
# Shared properties


@pytest.mark.parametrize("params", [CITY_BUS, TRACTOR_TRAILER])
def test_large_radius_limit(params):
    sol = optimal_K(1e6, params)
    assert abs(sol.e_y) < 1e-4
    assert abs(sol.e_y_aux) < 1e-4
    assert 0.0 < sol.K < 10.0
    assert math.isfinite(sol.K)
    if sol.beta1 is not None:
        assert abs(sol.beta1) < 1e-5


@settings(max_examples=50, deadline=None)
@given(R=st.floats(10.0, 500.0), kind=st.sampled_from(["bus", "tt"]))
def test_mirror_symmetry_property(R, kind):
    params = CITY_BUS if kind == "bus" else TRACTOR_TRAILER
    a, b = optimal_K(R, params), optimal_K(-R, params)
    assert a.K == b.K
    assert a.e_y == -b.e_y and a.e_y_aux == -b.e_y_aux
    assert abs(a.R_left) == abs(b.R_left) and abs(a.R_right) == abs(b.R_right)


def test_solution_to_dict():
    d = tt_optimal_K(12.0, TRACTOR_TRAILER).to_dict()
    assert set(d) == {"kind", "R_road", "R1", "R2", "R_left", "R_right", "e_y", "e_y_aux",
                      "beta1", "K"}
    assert d["kind"] == "tt"


# ---------------------------------------------------------------------------
# Schedule


def test_schedule_straight_road(straight_road):
    sched = k_schedule(straight_road, CITY_BUS)
    assert len(sched) == straight_road.s.size
    assert np.all(sched.values == 1.0)


def test_schedule_ring_constant():
    road = build_road(lambda s: -1.0 / 15.0, 40.0, 0.5)
    sched = k_schedule(road, TRACTOR_TRAILER)
    assert np.all(sched.values == tt_optimal_K(15.0, TRACTOR_TRAILER).K)


@pytest.mark.parametrize("params", [CITY_BUS, TRACTOR_TRAILER])
def test_schedule_monotone_on_clothoids(params):
    # straight, entry clothoid, arc R = 20, exit clothoid, straight
    kappa, length = piecewise_kappa([(10.0, 0.0, 0.0), (15.0, 0.0, 0.05), (20.0, 0.05, 0.05),
                                     (15.0, 0.05, 0.0), (10.0, 0.0, 0.0)])
    road = build_road(kappa, length, 0.5)
    sched = k_schedule(road, params)
    curved = np.abs(road.kappa) >= 1e-4
    entry = curved & (road.s <= 25.0)
    exit_ = curved & (road.s >= 45.0)
    # K is a monotone function of |kappa|, so each clothoid gives a monotone run
    # and the exit retraces the entry
    d_in = np.diff(sched.values[entry])
    d_out = np.diff(sched.values[exit_])
    sign = np.sign(d_in[0])
    assert sign != 0
    assert np.all(sign * d_in >= -1e-15)
    assert np.all(sign * d_out <= 1e-15)
    assert np.all(sched.values > 0)


def test_schedule_reports_infeasible_index():
    kappa, length = piecewise_kappa([(10.0, 0.0, 0.0), (10.0, 0.5, 0.5)])
    road = build_road(kappa, length, 0.5)
    with pytest.raises(GeometryInfeasible) as info:
        k_schedule(road, CITY_BUS)
    assert info.value.index == int(np.flatnonzero(np.abs(road.kappa) >= 1e-4)[0])


def test_bus_oracle_agreement_random_draws():
    rng = np.random.default_rng(21)
    for _ in range(200):
        p, R = _random_bus(rng)
        ref = bus_balance_oracle(R, p.W, p.L1, p.L1f, p.L1r)
        assert bus_optimal_radius(R, p) == pytest.approx(ref, abs=1e-6)


def test_tt_short_trailer_has_no_positive_weight():
    tractor = BusParams(L1=4.4, L1f=1.2, L1r=1.0, W=2.4, kappa_max=0.25, kappa_rate_max=0.05)
    p = TractorTrailerParams(tractor, L2=5.2, L2r=1.0, M1=-0.36)
    with pytest.raises(GeometryInfeasible):
        tt_optimal_K(38.0, p)

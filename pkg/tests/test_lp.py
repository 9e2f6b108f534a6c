import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaincc
from scipy.stats import poisson as sp_poisson

from stochmatch import FractionalMatching, gen_jaillet_lu, gen_random, make_instance
from stochmatch.lp import (
    SURPLUS_BOUND,
    brute_force_most_violated,
    lambda_star_solve,
    poisson_cdf,
    second_level_jensen_check,
    separation_oracle,
    solution_from_dict,
    solve_jaillet_lu_lp,
    solve_lp,
    surplus_bound_check,
    two_slot_value,
)

LN2 = math.log(2.0)


# ---------------------------------------------------------------- poisson_cdf


def test_poisson_cdf_matches_scipy():
    for lam in (0.0, 0.3, 1.0, 2.5, 7.0, 40.0):
        for k in range(-1, 7):
            want = 0.0 if k < 0 else float(sp_poisson.cdf(k, lam))
            assert poisson_cdf(k, lam) == pytest.approx(want, abs=1e-13)


def test_poisson_cdf_matches_gamma_identity():
    # P[Poisson(lam) <= k] equals the regularized upper incomplete gamma
    for lam in (0.1, 1.0, 3.7, 12.0):
        for k in range(0, 5):
            assert poisson_cdf(k, lam) == pytest.approx(
                float(gammaincc(k + 1, lam)), abs=1e-13
            )


def test_poisson_cdf_derivative_recurrence():
    # d/dlam P_k = P_{k-1} - P_k
    h = 1e-6
    for lam in (0.4, 1.3, 5.0):
        for k in range(0, 4):
            fd = (poisson_cdf(k, lam + h) - poisson_cdf(k, lam - h)) / (2 * h)
            assert fd == pytest.approx(
                poisson_cdf(k - 1, lam) - poisson_cdf(k, lam), abs=1e-8
            )


def test_poisson_cdf_vectorized():
    lam = np.array([0.0, 1.0, 2.0])
    out = poisson_cdf(1, lam)
    assert out.shape == (3,)
    assert out[0] == 1.0
    assert out[1] == pytest.approx(2 * math.exp(-1))


# ---------------------------------------------------- oracle vs. brute force


def _random_point(inst, rng):
    x = {}
    for i, j, _ in inst.edges():
        deg = len(inst.online_types[i].neighbors)
        x[(i, j)] = float(inst.online_types[i].rate * rng.uniform(0, 1.3) / deg)
    return x


def test_oracle_agrees_with_brute_force():
    rng = np.random.default_rng(123)
    for trial in range(40):
        inst = gen_random(5, 3, 0.6, (0.2, 2.0), (0.5, 2.0), "edge", False, seed=trial)
        x = _random_point(inst, rng)
        for level in (1, 2, 3):
            cut = separation_oracle(inst, x, level)
            bv, _ = brute_force_most_violated(inst, x, level)
            if cut is None:
                assert bv <= 1e-9
            else:
                assert cut.violation == pytest.approx(bv, abs=1e-9)


def test_oracle_deterministic():
    inst = gen_random(6, 4, 0.5, (0.2, 2.0), (0.5, 2.0), "edge", False, seed=9)
    rng = np.random.default_rng(77)
    x = _random_point(inst, rng)
    a = separation_oracle(inst, x, 2)
    b = separation_oracle(inst, x, 2)
    assert a is not None
    assert (a.types, a.offlines, a.rhs, a.violation) == (
        b.types,
        b.offlines,
        b.rhs,
        b.violation,
    )


def test_oracle_none_on_zero():
    inst = gen_random(4, 3, 0.7, (0.5, 1.0), (1.0, 1.0), "unweighted", False, seed=3)
    assert separation_oracle(inst, {}, 2) is None


def test_oracle_rejects_level_zero():
    inst = gen_jaillet_lu()
    with pytest.raises(ValueError):
        separation_oracle(inst, {}, 0)


# ------------------------------------------------------------------ solve_lp


def test_k11_level_one_objective():
    k11 = make_instance([(1.0, [0], [1.0])], 1, "unweighted")
    s0 = solve_lp(k11, 0)
    assert s0.objective == pytest.approx(1.0, abs=1e-10)
    s1 = solve_lp(k11, 1)
    # a single unit-rate type can fill the vertex only up to 1 - 1/e
    assert s1.objective == pytest.approx(1.0 - math.exp(-1.0), abs=1e-9)
    assert s1.status == "Optimal"
    assert s1.cuts_added == 0  # warm-start singleton cuts already suffice


def test_jaillet_lu_level_one_objective():
    sol = solve_lp(gen_jaillet_lu(), 1)
    # binding cuts pair the exclusive type with the shared one per vertex
    assert sol.objective == pytest.approx(2.0 - math.exp(-1.0), abs=1e-7)
    assert sol.status == "Optimal"
    assert sol.cuts_added >= 1


def test_level_monotone_objectives():
    for seed in range(6):
        inst = gen_random(5, 4, 0.6, (0.3, 1.8), (0.5, 3.0), "edge", False, seed=seed)
        objs = [solve_lp(inst, lvl).objective for lvl in (0, 1, 2)]
        assert objs[1] <= objs[0] + 1e-7
        assert objs[2] <= objs[1] + 1e-7


def test_solutions_respect_cuts_and_surplus():
    for seed in range(5):
        inst = gen_random(5, 3, 0.7, (0.3, 1.8), (0.5, 3.0), "edge", False, seed=seed)
        sol = solve_lp(inst, 2)
        assert separation_oracle(inst, sol.matching, 2, tol=1e-7) is None
        ok, worst = surplus_bound_check(sol.matching)
        assert ok, worst
        assert sol.matching.check_basic(1e-8) is None


def test_iteration_limit_status():
    sol = solve_lp(gen_jaillet_lu(), 1, max_iters=1)
    assert sol.status == "IterationLimit"
    full = solve_lp(gen_jaillet_lu(), 1)
    assert full.objective <= sol.objective + 1e-12


def test_solution_round_trip(tmp_path):
    inst = gen_random(4, 3, 0.7, (0.3, 1.5), (0.5, 2.0), "edge", False, seed=2)
    sol = solve_lp(inst, 1)
    d = sol.to_dict()
    back = solution_from_dict(inst, d)
    assert back.objective == sol.objective
    assert back.matching.x == sol.matching.x
    assert back.status == sol.status


# --------------------------------------------------------------- Jaillet-Lu LP


def test_jaillet_lu_lp_unique_optimum():
    sol = solve_jaillet_lu_lp(gen_jaillet_lu())
    assert sol.objective == pytest.approx(2.0, abs=1e-7)
    x = sol.matching
    assert x.value(0, 0) == pytest.approx(1 - LN2, abs=1e-7)
    assert x.value(1, 0) == pytest.approx(LN2, abs=1e-7)
    assert x.value(1, 1) == pytest.approx(LN2, abs=1e-7)
    assert x.value(2, 1) == pytest.approx(1 - LN2, abs=1e-7)


def test_jaillet_lu_lp_on_k11():
    k11 = make_instance([(1.0, [0], [1.0])], 1, "unweighted")
    sol = solve_jaillet_lu_lp(k11)
    # 2x - 1 <= 1 - ln 2 caps x at (2 - ln 2)/2
    assert sol.objective == pytest.approx((2.0 - LN2) / 2.0, abs=1e-9)


def test_surplus_bound_check_flags_violation():
    inst = make_instance([(0.2, [0], [1.0])], 1, "unweighted")
    bad = FractionalMatching(inst, {(0, 0): 0.2})
    # surplus 0.1 vs bound ~0.153: fine
    ok, worst = surplus_bound_check(bad)
    assert ok and worst == pytest.approx(0.1 - SURPLUS_BOUND)
    inst2 = make_instance([(0.2, [0], [1.0]), (0.2, [0], [1.0])], 1, "unweighted")
    over = FractionalMatching(inst2, {(0, 0): 0.2, (1, 0): 0.2})
    # each type contributes surplus 0.1; 0.2 exceeds (1 - ln 2)/2
    assert not surplus_bound_check(over)[0]


# ------------------------------------------------------- two-slot value and CJ


def test_two_slot_value_cases():
    assert two_slot_value(0.0, 0.0, 2.0, 1.0) == 0.0
    # a = b <= 1 collapses to f = a*z exactly
    for y, z in ((0.0, 0.4), (0.2, 0.9), (0.5, 0.5)):
        assert two_slot_value(y, z, 0.6, 0.6) == pytest.approx(0.6 * z, abs=1e-12)
    # normalized: f(1, 1) = a / a = 1 when a >= 1
    assert two_slot_value(1.0, 1.0, 3.0, 1.0) == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
    st.floats(0.05, 3.0),
    st.floats(0.05, 3.0),
)
def test_two_slot_value_bounded_and_monotone(u, v, a0, b0):
    a, b = max(a0, b0), min(a0, b0)
    y = u * v
    z = v
    f = two_slot_value(y, z, a, b)
    assert 0.0 <= f <= 1.0 + 1e-12
    # increasing in y and in z
    h = 1e-6
    if z + h <= 1.0:
        assert two_slot_value(y, z + h, a, b) >= f - 1e-12
    if y + h <= z:
        assert two_slot_value(y + h, z, a, b) >= f - 1e-12


def test_lambda_star_round_trip():
    for lam_true in (0.3, 0.7, 2.0):
        x1 = 1.0 - math.exp(-lam_true)
        lam1, lam2 = lambda_star_solve(x1, 0.0)
        assert lam1 == pytest.approx(lam_true, abs=1e-10)
        assert lam2 == 0.0
    # reconstruct lambda2 from its defining mass
    lam1_true, lam2_true = 0.9, 1.2
    x1 = 1.0 - math.exp(-lam1_true)
    x2 = (
        1.0
        - poisson_cdf(0, lam2_true)
        - poisson_cdf(1, lam2_true)
        + poisson_cdf(0, min(lam1_true, lam2_true))
    )
    lam1, lam2 = lambda_star_solve(x1, x2)
    assert lam1 == pytest.approx(lam1_true, abs=1e-10)
    assert lam2 == pytest.approx(lam2_true, abs=1e-9)
    # and with the order reversed (lambda2 below lambda1)
    lam2_true = 0.4
    x2 = (
        1.0
        - poisson_cdf(0, lam2_true)
        - poisson_cdf(1, lam2_true)
        + poisson_cdf(0, lam2_true)
    )
    _, lam2 = lambda_star_solve(x1, x2)
    assert lam2 == pytest.approx(lam2_true, abs=1e-9)


def test_lambda_star_rejects_bad_masses():
    with pytest.raises(ValueError):
        lambda_star_solve(0.3, 0.5)
    with pytest.raises(ValueError):
        lambda_star_solve(-0.1, -0.2)


def test_lambda_star_saturated_mass():
    lam1, lam2 = lambda_star_solve(1.0, 1.0)
    assert lam1 == 40.0 and lam2 == 40.0


def test_second_level_jensen_on_solutions():
    for seed in (5, 11):
        inst = gen_random(4, 3, 0.7, (0.3, 1.5), (0.5, 2.0), "unweighted", False, seed=seed)
        sol = solve_lp(inst, 2)
        loads = sorted(
            range(inst.offline_count), key=lambda j: -sol.matching.load(j)
        )
        j1, j2 = loads[0], loads[1]
        for a, b in ((2.0, 1.0), (1.5, 0.4), (0.8, 0.3), (1.0, 1.0)):
            ok, lhs, rhs = second_level_jensen_check(
                sol.matching, j1, j2, a, b, dlambda=1e-3
            )
            assert ok, (seed, a, b, lhs, rhs)


def test_second_level_jensen_rejects_bad_args():
    inst = make_instance([(1.0, [0], [1.0]), (0.3, [1], [1.0])], 2, "unweighted")
    fm = FractionalMatching(inst, {(0, 0): 0.6, (1, 1): 0.2})
    with pytest.raises(ValueError):
        second_level_jensen_check(fm, 0, 1, 1.0, 2.0)  # a < b
    with pytest.raises(ValueError):
        second_level_jensen_check(fm, 1, 0, 2.0, 1.0)  # loads out of order

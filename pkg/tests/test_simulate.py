import json
import math

import numpy as np
import pytest

from stochmatch import FractionalMatching, gen_jaillet_lu, gen_random, make_instance
from stochmatch.algorithms import Algo
from stochmatch.simulate import (
    exact_expected_value,
    monte_carlo,
    reference_trials,
    sample_fixed_arrivals,
    sample_poisson_arrivals,
    suggested_match_probability,
    unmatched_probability_estimate,
)

LN2 = math.log(2.0)


def flat_x(inst, per_edge):
    return FractionalMatching(
        inst,
        {(i, j): per_edge for i, t in enumerate(inst.online_types) for j in t.neighbors},
    )


# ------------------------------------------------------------------ samplers


def test_sample_poisson_deterministic():
    inst = gen_jaillet_lu()
    assert sample_poisson_arrivals(inst, 7) == sample_poisson_arrivals(inst, 7)
    assert sample_poisson_arrivals(inst, 7) != sample_poisson_arrivals(inst, 8)


def test_sample_poisson_strictly_increasing():
    inst = gen_random(4, 3, 0.6, (0.5, 3.0), (1.0, 1.0), "unweighted", False, seed=0)
    for seed in range(200):
        arr = sample_poisson_arrivals(inst, seed)
        times = [t for t, _ in arr]
        assert all(b > a for a, b in zip(times, times[1:]))
        assert all(0.0 <= t <= 1.0 for t in times)
        assert all(0 <= i < 4 for _, i in arr)


def test_sample_poisson_moments():
    inst = make_instance([(1.0, [0], [1.0]), (2.5, [0], [1.0])], 1, "unweighted")
    n = 4000
    totals = np.empty(n)
    zero_first = 0
    for seed in range(n):
        arr = sample_poisson_arrivals(inst, seed)
        totals[seed] = len(arr)
        if not any(i == 0 for _, i in arr):
            zero_first += 1
    # total count is Poisson(3.5); first type empty with probability e^-1
    assert abs(totals.mean() - 3.5) <= 3 * math.sqrt(3.5 / n)
    p = 1 / math.e
    assert abs(zero_first / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_sample_fixed_basics():
    inst = gen_jaillet_lu()
    arr = sample_fixed_arrivals(inst, 4, seed=1)
    assert [t for t, _ in arr] == [0.25, 0.5, 0.75, 1.0]
    assert arr == sample_fixed_arrivals(inst, 4, seed=1)
    with pytest.raises(ValueError):
        sample_fixed_arrivals(inst, 0, seed=1)


def test_sample_fixed_type_frequencies():
    inst = gen_jaillet_lu()
    probs = inst.rates / inst.total_rate
    n = 20_000
    arr = sample_fixed_arrivals(inst, n, seed=3)
    counts = np.bincount([i for _, i in arr], minlength=3)
    for i in range(3):
        se = math.sqrt(probs[i] * (1 - probs[i]) / n)
        assert abs(counts[i] / n - probs[i]) <= 3 * se


# ------------------------------------------- compiled kernel vs pure python


@pytest.mark.parametrize("algo", list(Algo))
@pytest.mark.parametrize("model,Lambda", [("poisson", 0), ("fixed", 3)])
def test_kernel_matches_reference(algo, model, Lambda):
    fd = algo in (Algo.SUGGESTED, Algo.TOP_HALF)
    inst = gen_random(3, 3, 0.8, (0.4, 1.3), (0.5, 3.0), "edge", fd, seed=17)
    x = None if algo is Algo.GREEDY else flat_x(inst, 0.15)
    trials = 250
    ref_alg, ref_opt, ref_matched = reference_trials(
        inst, x, algo, trials, seed=99, model=model, Lambda=Lambda
    )
    rep = monte_carlo(
        inst, x, algo, trials, seed=99, model=model, Lambda=Lambda, keep_values=True
    )
    assert np.array_equal(rep.alg_values, ref_alg)
    # opt goes through two independent solvers (bitmask DP vs assignment),
    # so summation order may differ in the last ulp
    np.testing.assert_allclose(rep.opt_values, ref_opt, rtol=0, atol=1e-12)
    assert rep.alg_mean == float(np.mean(ref_alg))
    for j, (p, _) in rep.per_vertex_match_prob.items():
        assert p == float(np.mean(ref_matched[:, j]))


def test_kernel_opt_matches_assignment_solver():
    # the in-kernel bitmask optimum against the Hungarian route
    inst = gen_random(3, 5, 0.7, (0.5, 1.5), (0.5, 4.0), "edge", False, seed=23)
    _, ref_opt, _ = reference_trials(
        inst, None, Algo.GREEDY, 300, seed=5, model="poisson"
    )
    rep = monte_carlo(inst, None, Algo.GREEDY, 300, seed=5, keep_values=True)
    np.testing.assert_allclose(rep.opt_values, ref_opt, rtol=0, atol=1e-12)


# ---------------------------------------------------- exact expectation path


@pytest.mark.parametrize("algo", list(Algo))
def test_exact_matches_monte_carlo(algo):
    fd = algo in (Algo.SUGGESTED, Algo.TOP_HALF)
    inst = gen_random(3, 3, 0.8, (0.4, 1.3), (0.5, 3.0), "edge", fd, seed=31)
    x = None if algo is Algo.GREEDY else flat_x(inst, 0.15)
    Lambda = 3
    exact = exact_expected_value(inst, x, algo, Lambda)
    rep = monte_carlo(
        inst, x, algo, 150_000, seed=12, model="fixed", Lambda=Lambda,
        compute_opt=False,
    )
    assert abs(rep.alg_mean - exact) <= 4 * rep.alg_stderr


def test_exact_trivial_cases():
    inst = make_instance([(1.0, [0], [1.0])], 1, "unweighted")
    x = FractionalMatching(inst, {(0, 0): 1.0})
    assert exact_expected_value(inst, x, Algo.SUGGESTED, 0) == 0.0
    # single arrival, full slot: every rule matches it
    for algo in Algo:
        xa = None if algo is Algo.GREEDY else x
        assert exact_expected_value(inst, xa, algo, 1) == pytest.approx(1.0, abs=1e-12)


def test_exact_budget_rejection():
    inst = gen_random(3, 30, 0.5, (0.4, 1.0), (1.0, 1.0), "unweighted", False, seed=0)
    with pytest.raises(ValueError, match="budget"):
        exact_expected_value(inst, None, Algo.GREEDY, 2)
    with pytest.raises(ValueError):
        exact_expected_value(inst, None, Algo.GREEDY, -1)


# -------------------------------------------------------------- monte_carlo


def test_monte_carlo_determinism_and_report():
    inst = gen_jaillet_lu()
    rep1 = monte_carlo(inst, None, Algo.GREEDY, 500, seed=4)
    rep2 = monte_carlo(inst, None, Algo.GREEDY, 500, seed=4)
    assert rep1.alg_mean == rep2.alg_mean
    assert rep1.opt_mean == rep2.opt_mean
    assert rep1.per_vertex_match_prob == rep2.per_vertex_match_prob
    assert rep1.ratio == pytest.approx(rep1.alg_mean / rep1.opt_mean)
    assert rep1.trials == 500
    assert rep1.alg_values is None


def test_monte_carlo_thread_env_invariance(monkeypatch):
    inst = gen_jaillet_lu()
    monkeypatch.setenv("STOCHMATCH_THREADS", "1")
    rep1 = monte_carlo(inst, None, Algo.GREEDY, 400, seed=11)
    monkeypatch.setenv("STOCHMATCH_THREADS", "4")
    rep2 = monte_carlo(inst, None, Algo.GREEDY, 400, seed=11)
    assert rep1.alg_mean == rep2.alg_mean
    assert rep1.opt_mean == rep2.opt_mean


def test_monte_carlo_no_opt_fields():
    inst = gen_jaillet_lu()
    rep = monte_carlo(inst, None, Algo.GREEDY, 100, seed=0, compute_opt=False)
    assert rep.opt_mean is None and rep.ratio is None and rep.opt_stderr is None


def test_monte_carlo_argument_errors():
    inst = gen_jaillet_lu()
    with pytest.raises(ValueError):
        monte_carlo(inst, None, Algo.GREEDY, 1, seed=0)
    with pytest.raises(ValueError):
        monte_carlo(inst, None, Algo.GREEDY, 10, seed=0, model="weird")
    with pytest.raises(ValueError):
        monte_carlo(inst, None, Algo.GREEDY, 10, seed=0, model="fixed", Lambda=0)
    with pytest.raises(ValueError):
        monte_carlo(inst, None, Algo.SUGGESTED, 10, seed=0)


def test_mcreport_json_round_trip(tmp_path):
    inst = gen_jaillet_lu()
    rep = monte_carlo(inst, None, Algo.GREEDY, 50, seed=2)
    p = tmp_path / "report.json"
    rep.save(str(p))
    data = json.loads(p.read_text())
    assert data["alg_mean"] == rep.alg_mean
    assert data["trials"] == 50
    assert set(data["per_vertex_match_prob"]) == {"0", "1"}
    est = data["per_vertex_match_prob"]["0"]
    assert est["estimate"] == rep.per_vertex_match_prob[0][0]
    assert est["stderr"] == rep.per_vertex_match_prob[0][1]


def test_k11_single_arrival_always_matches():
    inst = make_instance([(1.0, [0], [1.0])], 1, "unweighted")
    x = FractionalMatching(inst, {(0, 0): 1.0})
    rep = monte_carlo(inst, x, Algo.OCS, 200, seed=0, model="fixed", Lambda=1)
    assert rep.alg_mean == 1.0
    assert rep.ratio == 1.0


# --------------------------------------------------------- known frequencies


def test_suggested_vertex_frequencies_poisson():
    # proposals to j thin the arrival processes into rate load(j), so the
    # match probability in the unweighted model is 1 - exp(-load(j))
    inst = make_instance(
        [(0.9, [0, 1], [1.0, 1.0]), (0.7, [1, 2], [1.0, 1.0])], 3, "unweighted"
    )
    x = FractionalMatching(
        inst, {(0, 0): 0.5, (0, 1): 0.3, (1, 1): 0.3, (1, 2): 0.35}
    )
    assert x.check_basic() is None
    rep = monte_carlo(
        inst, x, Algo.SUGGESTED, 150_000, seed=21, compute_opt=False
    )
    for j in range(3):
        want = suggested_match_probability(x.load(j))
        got, se = rep.per_vertex_match_prob[j]
        assert abs(got - want) <= 3 * se


def test_greedy_three_type_closed_form():
    # unique-rates triangle: E[ALG] has the closed form
    # 2 - 2 e^{-(1+ln 2)} - e^{-(1+ln 2)} (2 ln 2 / (1 - ln 2)) (1 - 2/e)
    inst = gen_jaillet_lu()
    a = math.exp(-(1.0 + LN2))
    want = 2.0 - 2.0 * a - a * (2.0 * LN2 / (1.0 - LN2)) * (1.0 - 2.0 / math.e)
    rep = monte_carlo(inst, None, Algo.GREEDY, 200_000, seed=6, compute_opt=False)
    assert abs(rep.alg_mean - want) <= 3 * rep.alg_stderr


# ---------------------------------------------------- unmatched probability


def test_unmatched_probability_time_zero():
    inst = gen_jaillet_lu()
    x = flat_x(inst, 0.1)
    assert unmatched_probability_estimate(inst, x, [0], 0.0, 10, seed=0) == (1.0, 0.0)
    with pytest.raises(ValueError):
        unmatched_probability_estimate(inst, x, [], 0.5, 10, seed=0)


@pytest.mark.parametrize("T", [[0], [1], [0, 1]])
@pytest.mark.parametrize("t", [0.5, 1.0])
def test_unmatched_probability_exponential_bound(T, t):
    inst = make_instance(
        [(1.0, [0, 1], [1.0, 1.0]), (0.8, [0, 1], [1.0, 1.0])], 2, "unweighted"
    )
    x = FractionalMatching(
        inst, {(0, 0): 0.4, (0, 1): 0.4, (1, 0): 0.3, (1, 1): 0.1}
    )
    p, se = unmatched_probability_estimate(inst, x, T, t, 100_000, seed=13)
    bound = math.exp(-t * sum(x.load(j) for j in T))
    assert p <= bound + 3 * se
    assert 0.0 <= p <= 1.0

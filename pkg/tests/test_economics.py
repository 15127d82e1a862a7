import math
import random
from dataclasses import replace
from fractions import Fraction as F

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from eds import economics as econ
from eds.config import preset
from eds.economics import AttackerProfile, CostParams, PayoffInputs, Theta
from eds.errors import DomainError

P = CostParams()


# --- exact oracle -------------------------------------------------------------

def oracle_total(theta, params):
    n, c, v = F(params.attempts), F(params.hash_cost), F(params.time_value)
    return n * (1 + F(theta.rho)) * (2 ** (theta.d - 1) * c + F(theta.delay) * v / 3600) * F(theta.gamma)


def oracle_parts(theta, params):
    n, c, v = F(params.attempts), F(params.hash_cost), F(params.time_value)
    work = F(2) ** (theta.d - 1) * c
    return dict(
        compute=n * (1 + F(theta.rho)) * work,
        time=n * (1 + F(theta.rho)) * F(theta.delay) * v / 3600,
        c1=n * work,
        c2=n * F(theta.rho) * work,
        c3=n * F(theta.delay) * v / 3600,
        c4=(F(theta.gamma) - 1) * F(params.data_size) * F(params.bandwidth_cost),
    )


def oracle_min_d(benefit, attempts, hash_cost):
    unit = F(attempts) * F(hash_cost)
    d = -2000
    while unit * F(2) ** (d - 1) <= F(benefit):
        d += 1
    while unit * F(2) ** (d - 2) > F(benefit):
        d -= 1
    return d


def rel(a, b):
    return abs(F(a) - b) / abs(b)


# --- attacker cost ------------------------------------------------------------

EXAMPLE = Theta(20, 0.3, 8.0, 1.0)


def test_worked_example_against_oracle():
    b = econ.total_attacker_cost(EXAMPLE, P)
    parts = oracle_parts(EXAMPLE, P)
    assert rel(b.total, oracle_total(EXAMPLE, P)) < 1e-12
    assert rel(b.compute_cost, parts["compute"]) < 1e-12
    assert rel(b.time_cost, parts["time"]) < 1e-12
    for name in ("c1", "c2", "c3"):
        assert rel(getattr(b, {"c1": "c1_puzzle", "c2": "c2_decoy", "c3": "c3_delay"}[name]), parts[name]) < 1e-12
    assert b.c4_tax == 0 and b.bandwidth_cost == pytest.approx(0, abs=1e-12)


def test_worked_example_frozen_values():
    # values computed once from the exact oracle above
    b = econ.total_attacker_cost(EXAMPLE, P)
    assert b.compute_cost == pytest.approx(0.320339968, rel=1e-12)
    assert b.time_cost == pytest.approx(1444.4444444444444, rel=1e-12)
    assert b.total == pytest.approx(1444.7647844124444, rel=1e-12)
    assert b.c1_puzzle == pytest.approx(0.24641536, rel=1e-12)
    assert b.c3_delay == pytest.approx(1111.1111111111111, rel=1e-12)
    assert b.asymmetry == pytest.approx(288_951.35, rel=1e-6)


def test_quoted_figures_flagged_not_matched():
    note = econ.quoted_figure_check(EXAMPLE, P)
    assert note and "inconsistent" in note and "147.00" in note
    b = econ.total_attacker_cost(EXAMPLE, P)
    assert b.total / econ.QUOTED_EXAMPLE["total"] > 9
    # moderate gamma still gets the note; a different difficulty does not
    assert econ.quoted_figure_check(Theta(20, 0.3, 8.0, 1.5), P)
    assert econ.quoted_figure_check(Theta(21, 0.3, 8.0, 1.0), P) is None


def test_puzzles_only_collapses_to_c1():
    b = econ.total_attacker_cost(Theta(18, 0.0, 0.0, 1.0), P)
    assert b.total == b.c1_puzzle
    assert b.superlinearity == pytest.approx(1.0)


def test_single_hash():
    b = econ.total_attacker_cost(Theta(1, 0.0, 0.0, 1.0), replace(P, attempts=1))
    assert b.total == P.hash_cost


def test_defender_cost_examples():
    assert econ.defender_cost(P) == pytest.approx(0.005, rel=1e-4)
    assert econ.defender_cost(replace(P, state_cost=0.0), 0) == 0


def test_moderate_analytic_composition_factor():
    b = econ.total_attacker_cost(Theta(20, 0.3, 8.0, 1.5), P)
    assert b.superlinearity == pytest.approx(1.9498, abs=1e-3)


thetas = st.builds(
    Theta,
    d=st.integers(0, 32),
    rho=st.floats(1e-6, 3),
    delay=st.floats(1e-6, 300),
    gamma=st.floats(1, 4),
)


@settings(max_examples=1000)
@given(thetas)
def test_superlinearity_strict(theta):
    b = econ.total_attacker_cost(theta, P)
    assert b.total > b.c1_puzzle + b.c2_decoy + b.c3_delay


@settings(max_examples=300)
@given(thetas, st.floats(1, 1e7))
def test_components_bounded_by_total(theta, n):
    b = econ.total_attacker_cost(theta, replace(P, attempts=n))
    for v in (b.compute_cost, b.time_cost, b.bandwidth_cost, b.c1_puzzle, b.c2_decoy, b.c3_delay):
        assert math.isfinite(v) and 0 <= v <= b.total * (1 + 1e-12)
    assert b.asymmetry == pytest.approx(b.total / b.defender)


@settings(max_examples=300)
@given(thetas, st.floats(1, 1e6), st.sampled_from(["d", "rho", "delay", "gamma", "attempts"]))
def test_cost_strictly_increasing(theta, n, knob):
    params = replace(P, attempts=n)
    base = econ.total_attacker_cost(theta, params).total
    if knob == "attempts":
        bumped = econ.total_attacker_cost(theta, replace(params, attempts=n * 1.5)).total
    elif knob == "d":
        bumped = econ.total_attacker_cost(replace(theta, d=theta.d + 1), params).total
    else:
        bumped = econ.total_attacker_cost(replace(theta, **{knob: getattr(theta, knob) * 1.5 + 0.01}), params).total
    assert bumped > base


def test_cost_params_validation():
    with pytest.raises(DomainError):
        CostParams(hash_cost=-1)
    with pytest.raises(DomainError):
        CostParams(time_value=math.inf)


# --- optimal difficulty -------------------------------------------------------

def test_optimal_difficulty_example():
    assert econ.optimal_difficulty(500, 1e4, 4.7e-11) == 31
    assert oracle_min_d(500, 1e4, 4.7e-11) == 31


def test_optimal_difficulty_exact_power_boundary():
    assert econ.optimal_difficulty(1e4 * 4.7e-11, 1e4, 4.7e-11) == 2
    assert econ.optimal_difficulty(8.0, 1.0, 1.0) == 5  # 2^(d-1) > 8 needs d = 5


@pytest.mark.parametrize("args", [(0, 1, 1), (1, 0, 1), (1, 1, -1), (math.inf, 1, 1)])
def test_optimal_difficulty_domain(args):
    with pytest.raises(DomainError):
        econ.optimal_difficulty(*args)


def random_tuples(n, seed):
    rng = random.Random(seed)
    for _ in range(n):
        yield (10 ** rng.uniform(-3, 7), 10 ** rng.uniform(0, 8), 10 ** rng.uniform(-13, -8))


def test_closed_form_matches_bruteforce_on_1000_tuples():
    mismatches = [t for t in random_tuples(1000, 1) if econ.optimal_difficulty(*t) != oracle_min_d(*t)]
    assert mismatches == []


@settings(max_examples=300)
@given(st.integers(0, 60), st.integers(1, 10**6), st.integers(1, 10**4))
def test_closed_form_exact_powers(k, attempts, hash_units):
    # benefit lands exactly on N * C * 2^k
    c = hash_units * 2.0 ** -40
    b = attempts * c * 2.0 ** k
    assume(math.isfinite(b) and b > 0)
    assert econ.optimal_difficulty(b, attempts, c) == oracle_min_d(b, attempts, c) == k + 2


@settings(max_examples=300)
@given(st.floats(1e-3, 1e6), st.floats(1, 1e8), st.floats(1e-13, 1e-8), st.integers(-20, 20))
def test_argmax_stability_under_common_scaling(b, n, c, k):
    # power-of-two scale keeps the float products exact
    s = 2.0 ** k
    assert econ.optimal_difficulty(b * s, n, c * s) == econ.optimal_difficulty(b, n, c)


# --- game and profiles --------------------------------------------------------

def test_payoffs_never_succeed_means_deterred():
    u_d, u_a = econ.stackelberg_payoffs(EXAMPLE, PayoffInputs(0.0, 1000.0, 1e9), P)
    assert u_a == -econ.total_attacker_cost(EXAMPLE, P).total < 0
    assert u_d == pytest.approx(-econ.defender_cost(P))


def test_payoffs_certain_success_below_cost():
    c = econ.total_attacker_cost(EXAMPLE, P).total
    _, u_a = econ.stackelberg_payoffs(EXAMPLE, PayoffInputs(1.0, 0.0, c * 0.9), P)
    assert u_a < 0


def test_payoffs_hand_arithmetic():
    theta = Theta.from_config(preset("moderate"))
    c_a = econ.total_attacker_cost(theta, P).total  # 2167.147...
    u_d, u_a = econ.stackelberg_payoffs(theta, PayoffInputs(0.62, 1000.0, 200.0), P)
    assert u_a == pytest.approx(0.62 * 200 - c_a)
    assert u_a < 0
    assert u_d == pytest.approx(-econ.defender_cost(P) - 620.0)


def test_payoff_inputs_validated():
    with pytest.raises(DomainError):
        PayoffInputs(1.5, 0, 0)


def test_profile_validation():
    with pytest.raises(DomainError):
        AttackerProfile("x", 0, cpu_hash_rate=1)
    with pytest.raises(DomainError):
        AttackerProfile("x", 10)


def test_unbounded_budget_has_no_threshold():
    p = AttackerProfile("nation", math.inf, cpu_hash_rate=1e9)
    assert econ.deterrence_threshold(p, 1e4) is None


@given(st.floats(1e3, 1e12), st.floats(1, 1e6), st.floats(1, 1e4))
def test_doubling_rate_raises_threshold_by_one(rate, budget, attempts):
    # pure time-cost model (no per-hash dollars) so halving time halves cost
    slow = AttackerProfile("a", budget, cpu_hash_rate=rate)
    fast = AttackerProfile("b", budget, cpu_hash_rate=2 * rate)
    d1 = econ.deterrence_threshold(slow, attempts, hash_cost=0.0, d_range=(1, 200))
    d2 = econ.deterrence_threshold(fast, attempts, hash_cost=0.0, d_range=(1, 200))
    assume(d1 is not None and d1 > 1)
    assert d2 == d1 + 1


def test_threshold_is_minimal():
    for p in econ.PROFILES:
        d = econ.deterrence_threshold(p, 1e4, 1e3)
        if d is not None:
            assert econ.profile_attack_cost(p, d, 1e4, P.hash_cost) > min(p.budget, 1e3)
            assert d == 1 or econ.profile_attack_cost(p, d - 1, 1e4, P.hash_cost) <= min(p.budget, 1e3)


def test_profiles_report_thresholds():
    # printed, not asserted: the reference thresholds come without their benefit and attempt assumptions
    rows = [(p.name, econ.deterrence_threshold(p, 1e4), p.reported_threshold) for p in econ.PROFILES]
    print("\n" + "\n".join(f"{n}: computed={c} reported={r}" for n, c, r in rows))
    assert [r for _, _, r in rows] == [14, 18, 20, 22]


# --- mitigation and sensitivity -----------------------------------------------

def test_mitigation_examples():
    assert econ.combined_mitigation(0.67, 0.18) == pytest.approx(0.9406, abs=1e-12)
    assert econ.combined_mitigation(1.0, 0.7) == 1.0
    assert econ.combined_mitigation(0.3, 0.0) == 1.0


@pytest.mark.parametrize("args", [(-0.1, 0.5), (0.5, 1.1), (math.nan, 0.5)])
def test_mitigation_domain(args):
    with pytest.raises(DomainError):
        econ.combined_mitigation(*args)


def test_mitigation_monotone_in_detection():
    vals = [econ.combined_mitigation(i / 99, 0.18) for i in range(100)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_sweep_moderate_stays_above_100():
    res = econ.sensitivity_sweep(Theta.from_config(preset("moderate")), P, 0.5)
    assert len(res.grid) == 9 and res.min_asymmetry > 100


def test_sweep_tiny_fraction_matches_baseline():
    res = econ.sensitivity_sweep(EXAMPLE, P, 1e-12)
    assert all(v == pytest.approx(res.baseline, rel=1e-9) for v in res.grid.values())


def test_sweep_monotone_in_time_value():
    res = econ.sensitivity_sweep(EXAMPLE, P, 0.5)
    for hc in (0.5, 1.0, 1.5):
        row = [res.grid[(hc, tv)] for tv in (0.5, 1.0, 1.5)]
        assert row == sorted(row) and len(set(row)) == 3


def test_sweep_fraction_domain():
    with pytest.raises(DomainError):
        econ.sensitivity_sweep(EXAMPLE, P, 1.0)


def test_single_unit_conversion_point():
    assert econ.per_second(3600.0) == 1.0

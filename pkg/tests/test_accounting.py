import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from dmcv_qkd.accounting import (
    EPSILON_Q,
    EpsilonBudget,
    KeyLengthReport,
    binary_entropy,
    delta_aep,
    delta_w,
    epsilon_auth,
    epsilon_correct,
    epsilon_ledger,
    epsilon_pa_implemented,
    key_length,
)

# High-precision reference evaluations (50-digit arithmetic), frozen.
DELTA_W_1E7 = 4.765448540108943e-3
DELTA_W_QUARTER = 2.3774437510817343
DELTA_AEP_RUN = 1.1038399300801606e-3  # eps_bar 7e-11, rank 4, n = 8.9866e8


def test_binary_entropy_endpoints():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == 1.0


@given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_binary_entropy_symmetric(x):
    # below ~1e-6 the rounding of 1-x itself dominates, so stay above it
    assert math.isclose(binary_entropy(x), binary_entropy(1.0 - x), rel_tol=1e-9)
    assert 0.0 < binary_entropy(x) <= 1.0


def test_binary_entropy_domain():
    with pytest.raises(ValueError):
        binary_entropy(-0.01)
    with pytest.raises(ValueError):
        binary_entropy(1.01)


def test_delta_w_zero():
    assert delta_w(0.0) == 0.0


def test_delta_w_reference_values():
    assert math.isclose(delta_w(1e-7, 4), DELTA_W_1E7, rel_tol=1e-12)
    assert math.isclose(delta_w(0.25, 4), DELTA_W_QUARTER, rel_tol=1e-12)
    # full weight: sqrt(1)*2 + 2*h2(1/2) = 4 exactly
    assert delta_w(1.0, 4) == pytest.approx(4.0, rel=1e-15)


@given(st.floats(min_value=1e-12, max_value=0.5), st.floats(min_value=1.01, max_value=2.0))
def test_delta_w_monotone(w, factor):
    w2 = min(w * factor, 0.5)
    assert delta_w(w2) >= delta_w(w)


@given(st.floats(min_value=1e-12, max_value=1.0))
def test_delta_w_alphabet_term(w):
    # the alphabet enters only through sqrt(w) * log2(z_dim)
    gap = delta_w(w, 8) - delta_w(w, 4)
    assert math.isclose(gap, math.sqrt(w), rel_tol=1e-9, abs_tol=1e-15)


def test_delta_w_domain():
    with pytest.raises(ValueError):
        delta_w(-1e-9)
    with pytest.raises(ValueError):
        delta_w(1.0 + 1e-9)
    with pytest.raises(ValueError):
        delta_w(0.1, z_dim=0)


def test_delta_aep_reference_value():
    assert math.isclose(delta_aep(7e-11, 4, 8.9866e8), DELTA_AEP_RUN, rel_tol=1e-12)


@given(
    st.floats(min_value=1e-12, max_value=0.1),
    st.floats(min_value=1e3, max_value=1e15),
)
def test_delta_aep_inverse_sqrt_scaling(eps, n):
    assert math.isclose(delta_aep(eps, 4, 4 * n), delta_aep(eps, 4, n) / 2, rel_tol=1e-12)


def test_delta_aep_vanishes():
    assert delta_aep(7e-11, 4, 1e30) < 1e-12


def test_delta_aep_domain():
    with pytest.raises(ValueError):
        delta_aep(7e-11, 4, 0)
    with pytest.raises(ValueError):
        delta_aep(0.0, 4, 1e6)
    with pytest.raises(ValueError):
        delta_aep(1.5, 4, 1e6)
    with pytest.raises(ValueError):
        delta_aep(1e-10, 0, 1e6)


def test_budget_composition_exact():
    budget = EpsilonBudget.default()
    assert budget.total() == Fraction(1, 10**10)
    # float-literal construction lands on the same exact decimals
    same = EpsilonBudget(1e-11, 7e-11, 7e-11, 2e-11, 1e-11)
    assert same == budget
    assert same.total() == Fraction(1, 10**10)


def test_budget_secrecy_exact():
    budget = EpsilonBudget.default()
    # budgeted eps_PA: max(0.05 + 0.7, 0.1 + 0.7) * 1e-10 = 0.8e-10
    assert budget.secrecy() == Fraction(4, 5) * Fraction(1, 10**10)
    # implemented eps_PA = 2^-50 only shrinks the first branch
    assert budget.secrecy(epsilon_pa_implemented(100)) == Fraction(4, 5) * Fraction(1, 10**10)


def test_budget_min_pa_bits():
    budget = EpsilonBudget.default()
    assert math.isclose(budget.min_pa_bits(), 73.0824180875, rel_tol=1e-9)
    assert budget.min_pa_bits() < 100


def test_budget_json_roundtrip():
    budget = EpsilonBudget.default()
    assert EpsilonBudget.from_json(budget.to_json()) == budget
    floats = budget.as_floats()
    assert floats["epsilon_AT"] == pytest.approx(7e-11)


def test_budget_domain():
    with pytest.raises(ValueError):
        EpsilonBudget(0, 7e-11, 7e-11, 2e-11, 1e-11)
    with pytest.raises(ValueError):
        EpsilonBudget(1e-11, 7e-11, 7e-11, 2e-11, 2)


def test_epsilon_pa_implemented():
    assert epsilon_pa_implemented(100) == Fraction(1, 2**50)
    with pytest.raises(ValueError):
        epsilon_pa_implemented(99)
    with pytest.raises(ValueError):
        epsilon_pa_implemented(0)


def test_epsilon_correct_reference():
    # 1.24e8 retained bits, 128-bit confirmation
    val = epsilon_correct(124_000_000, 0)
    assert val < Fraction(1, 10**32)
    assert float(val) == pytest.approx(2.8469e-33, rel=1e-4)
    assert epsilon_correct(124_000_000 + 500, 500) == val


def test_epsilon_correct_domain():
    with pytest.raises(ValueError):
        epsilon_correct(100, 200)
    with pytest.raises(ValueError):
        epsilon_correct(100, 0, t=0)


def test_epsilon_auth_reference():
    # 480 MB transcript, 96-bit tag
    val = epsilon_auth(480 * 10**6 * 8)
    assert val < Fraction(1, 10**21)
    assert float(val) == pytest.approx(5.04871e-22, rel=1e-4)


def test_epsilon_auth_domain():
    with pytest.raises(ValueError):
        epsilon_auth(-1)
    with pytest.raises(ValueError):
        epsilon_auth(100, tag_bits=0)


def test_epsilon_ledger_session():
    budget = EpsilonBudget.default()
    led = epsilon_ledger(
        budget,
        raw_bits=1_797_320_000,
        disclosed_bits=1_673_320_000,
        transcript_bits=480 * 10**6 * 8,
    )
    assert led.epsilon_sec == Fraction(4, 5) * Fraction(1, 10**10)
    assert led.epsilon_total == Fraction(1, 10**10)
    assert led.epsilon_cor < Fraction(1, 10**32)
    assert led.epsilon_q == EPSILON_Q == Fraction(1, 2**100)
    assert led.epsilon_sec < led.epsilon_implemented < Fraction(1, 10**10)
    js = led.to_json()
    assert js["epsilon_implemented"] == pytest.approx(8e-11, rel=1e-4)


def test_key_length_plain_arithmetic():
    budget = EpsilonBudget.default()
    rep = key_length(2.0, 0.0, 0.0, 0, budget, n=1_000_000, n_total=1_000_000)
    assert rep.l == 2_000_000 - 100
    assert not rep.aborted
    assert rep.rate == pytest.approx((2_000_000 - 100) / 1_000_000)


def test_key_length_abort_clamps():
    budget = EpsilonBudget.default()
    rep = key_length(1e-4, 1e-3, 5e-3, 10_000, budget, n=1e6, n_total=4e6 / 3)
    assert rep.aborted
    assert rep.l == 0
    assert rep.rate == 0.0


def test_key_length_run_scale():
    # run-shaped inputs: entropy floor just above the corrections
    budget = EpsilonBudget.default()
    n = 8.9866e8
    n_total = n / 0.75
    d_aep = delta_aep(float(budget.epsilon_bar), 4, n)
    d_w = delta_w(1e-7, 4)
    leak = 1_673_320_000
    h = 1.898
    rep = key_length(h, d_aep, d_w, leak, budget, n=n, n_total=n_total)
    rhs = n * (h - d_aep - d_w) - leak - 100
    assert rep.l == math.floor(rhs)
    assert rep.l > 0 and not rep.aborted
    # per-symbol form times the block size reproduces the same length
    assert rep.per_symbol_rate * n_total == pytest.approx(rhs, rel=1e-12)


@given(
    st.floats(min_value=0.0, max_value=2.0),
    st.floats(min_value=0.0, max_value=0.05),
    st.floats(min_value=0.0, max_value=0.05),
    st.integers(min_value=0, max_value=10**9),
    st.floats(min_value=1e3, max_value=1e12),
)
@settings(max_examples=60)
def test_key_length_floor_and_clamp(h, d1, d2, leak, n):
    budget = EpsilonBudget.default()
    rep = key_length(h, d1, d2, leak, budget, n=n, n_total=2 * n)
    rhs = n * (h - d1 - d2) - leak - 100
    if rhs >= 0:
        assert rep.l <= rhs < rep.l + 1
        assert not rep.aborted
    else:
        assert rep.l == 0 and rep.aborted
    assert rep.per_symbol_rate * rep.n_total == pytest.approx(rhs, rel=1e-9, abs=1e-6)


def test_key_length_domain():
    budget = EpsilonBudget.default()
    with pytest.raises(ValueError):
        key_length(2.0, 0.0, 0.0, 0, budget, n=0, n_total=10)
    with pytest.raises(ValueError):
        key_length(2.0, 0.0, 0.0, 0, budget, n=20, n_total=10)
    with pytest.raises(ValueError):
        key_length(math.nan, 0.0, 0.0, 0, budget, n=10, n_total=10)
    with pytest.raises(ValueError):
        key_length(2.0, 0.0, 0.0, -5, budget, n=10, n_total=10)


def test_report_json_roundtrip():
    budget = EpsilonBudget.default()
    rep = key_length(1.9, 1.1e-3, 4.8e-3, 12345, budget, n=1e6, n_total=2e6,
                     solver={"iterations": 17, "gap": 3e-7})
    back = KeyLengthReport.from_json(rep.to_json())
    assert back == rep

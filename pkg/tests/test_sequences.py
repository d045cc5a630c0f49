import math

import numpy as np
import pytest

from displab.arith_core import build_sieve
from displab.sequences import (
    ArithSequence,
    BoundViolation,
    SequenceSpec,
    almost_prime_s_mask,
    counter_uniform,
    generate,
    s_set_mask,
    siegel_walfisz_score,
    sieve_weight_coefficients,
    sieve_weight_divisor_sum,
    sieve_weight_values,
    split_factor,
    split_factor_values,
)

from . import oracles


def values(kind, n_lo, param=None):
    return generate(SequenceSpec(kind, n_lo, param)).values


def test_generate_examples():
    assert values("constant_one", 4).tolist() == [1, 1, 1, 1]
    assert values("omega_eq", 4, 2).real.tolist() == [0, 1, 0, 0]
    assert values("tau_k", 2, 2).real.tolist() == [2, 3]


def test_generate_kinds_against_definitions():
    n_lo = 500
    ns = range(n_lo + 1, 2 * n_lo + 1)
    assert values("moebius", n_lo).real.tolist() == [oracles.mu(n) for n in ns]
    assert values("prime_indicator", n_lo).real.tolist() == [
        float(oracles.trial_factor(n) == {n: 1}) for n in ns]
    assert values("omega_eq", n_lo, 3).real.tolist() == [
        float(oracles.big_omega(n) == 3) for n in ns]
    assert values("tau_k", n_lo, 3).real.tolist() == [oracles.tau_k_formula(n, 3) for n in ns]
    table = {2: -1.0, 3: 0.5j, 0: 0.9}
    got = values("multiplicative_from_primes", n_lo, table)
    for n, v in zip(ns, got):
        ref = 1
        for p, e in oracles.trial_factor(n).items():
            ref *= table.get(p, table[0]) ** e
        assert abs(v - ref) < 1e-12


def test_bound_orders():
    assert generate(SequenceSpec("tau_k", 50, 3)).bound_order == 3
    assert generate(SequenceSpec("prime_indicator", 50)).bound_order == 1
    assert generate(SequenceSpec("random_unimodular", 50, 1)).bound_order == 1


def test_random_kinds_deterministic_and_range_free():
    a = values("random_unimodular", 100, 7)  # n in 101..200
    b = values("random_unimodular", 150, 7)  # n in 151..300
    assert np.array_equal(a[50:], b[:50])
    assert np.allclose(np.abs(a), 1)
    pm = values("random_pm1", 1000, 3)
    assert set(pm.real.tolist()) == {-1.0, 1.0}
    assert not np.array_equal(pm, values("random_pm1", 1000, 4))
    u = counter_uniform(5, np.arange(10**5))
    assert 0 <= u.min() and u.max() < 1 and abs(u.mean() - 0.5) < 0.01


def test_generate_rejects_uncovered_sieve():
    with pytest.raises(ValueError, match="does not cover"):
        generate(SequenceSpec("moebius", 100), sieve=build_sieve(1, 150))


def test_bound_violation_and_support():
    with pytest.raises(BoundViolation):
        ArithSequence(3, np.array([1.0, 1.5, 1.0]))  # |value(5)| > 1
    with pytest.raises(BoundViolation):
        ArithSequence(3, np.array([1.0, 2.5, 1.0]), bound_order=2)  # tau_2(5) = 2
    seq = ArithSequence(3, np.array([3.0, 2.0, 4.0]), bound_order=2)  # n = 4, 5, 6
    assert seq.value(3) == 0 and seq.value(7) == 0 and seq.value(6) == 4.0


def test_twist_is_isometric():
    seq = generate(SequenceSpec("tau_k", 300, 2, twist_t=3.7))
    base = generate(SequenceSpec("tau_k", 300, 2))
    assert np.allclose(np.abs(seq.values), np.abs(base.values))
    n = 301
    assert abs(seq.value(n) - base.value(n) * n ** (-3.7j)) < 1e-12


def test_spec_string_roundtrip():
    specs = [SequenceSpec("tau_k", 10, 3), SequenceSpec("random_unimodular", 10, 9, 1.5),
             SequenceSpec("multiplicative_from_primes", 10, {0: 1.0, 2: -1.0, 3: 0.5j}),
             SequenceSpec("constant_one", 10)]
    for spec in specs:
        back = SequenceSpec.from_string(spec.to_string(), 10)
        assert back == spec
    with pytest.raises(ValueError):
        SequenceSpec("zeta", 10)


def test_sieve_weight_examples():
    assert sieve_weight_divisor_sum(5, 16) == 1.0
    assert sieve_weight_divisor_sum(6, 16) == pytest.approx(0.0855453, abs=1e-7)
    inner = math.log(6) / math.log(4) - 1
    assert sieve_weight_divisor_sum(6, 16) == pytest.approx(inner**2, rel=1e-14)
    with pytest.raises(ValueError):
        sieve_weight_divisor_sum(5, 3)


def test_sieve_weight_values_match_definition():
    vals = sieve_weight_values(1, 600, 150)
    for n in range(1, 601):
        assert vals[n - 1] == pytest.approx(oracles.sieve_weight_inner(n, 150) ** 2, abs=1e-12)
        assert vals[n - 1] >= 0


def test_sieve_weights_majorize_primes():
    z = 400
    vals = sieve_weight_values(21, 3000, z)
    for n in range(21, 3001):
        if oracles.trial_factor(n) == {n: 1}:
            assert vals[n - 21] == pytest.approx(1.0, abs=1e-14)


def test_sieve_lambda_expansion_by_moebius_inversion():
    for z in (16, 50, 200):
        lam = sieve_weight_coefficients(z)
        ref = oracles.sieve_lambda_by_inversion(z, z)
        assert np.allclose(lam, ref, atol=1e-11)


def test_sieve_lambda_bound():
    zs = list(range(4, 200)) + list(range(200, 10**4, 331)) + [10**4]
    for z in zs:
        lam = sieve_weight_coefficients(z)
        for d in np.flatnonzero(lam).tolist():
            assert abs(lam[d]) <= 3 ** oracles.small_omega(d) + 1e-12


def test_siegel_walfisz_scores():
    const = generate(SequenceSpec("constant_one", 10**4))
    assert siegel_walfisz_score(const, 50, 10) < 0.01
    mob = generate(SequenceSpec("moebius", 10**5))
    assert siegel_walfisz_score(mob, 30, 5) < 0.05
    N = 3000
    ns = np.arange(N + 1, 2 * N + 1)
    biased = ArithSequence(N, (ns % 3 == 1).astype(float))
    # E*(3, 1; 1) = N/3 - (N/3)/2 = N/6, half of the density 1/3
    assert siegel_walfisz_score(biased, 3, 1) >= 1 / 6 - 1e-3


def test_split_factor_rectangle_identity():
    def g(n):
        return (-1) ** oracles.big_omega(n)

    small_below, large_above = 7, 11
    B = C = 100
    lhs = sum(g(b) for b in range(1, B + 1)
              if all(p < small_below for p in oracles.trial_factor(b)))
    rhs = sum(g(c) for c in range(1, C + 1)
              if all(p > large_above for p in oracles.trial_factor(c)))
    top = B * C
    beta = split_factor_values(1, top, g, small_below, large_above)
    total = 0
    for m in range(1, top + 1):
        bc = split_factor(m, small_below, large_above)
        if bc and bc[0] <= B and bc[1] <= C:
            total += beta[m - 1]
    assert total == lhs * rhs


def _rung_ok(rungs):
    return len(rungs) == len(set(rungs))


def test_s_set_mask_against_definition():
    x = 10**6
    lo, hi = x + 1, x + 6000
    sieve = build_sieve(lo, hi)
    for delta in (None, 0.5):
        mask = s_set_mask(sieve, lo, hi, x, eps=0.3, delta=delta)
        d = 1 / math.log(x) ** 2 if delta is None else delta
        bottom, top = math.exp(math.log(x) ** 0.2), x**0.3
        for n in range(lo, hi + 1):
            ps = [p for p, e in oracles.trial_factor(n).items() for _ in range(e)
                  if bottom <= p <= top]
            rungs = [math.floor(math.log(p / bottom) / math.log1p(d)) for p in ps]
            assert mask[n - lo] == (bool(ps) and _rung_ok(rungs)), n


def test_almost_prime_s_mask_against_definition():
    x = 10**6
    lo, hi = x + 1, x + 6000
    sieve = build_sieve(lo, hi)
    y = math.exp(math.log(x) ** 0.2)
    top = y * 2 ** max(1, math.ceil(math.log2(x**0.2 / y)))
    for k in (2, 3):
        mask = almost_prime_s_mask(sieve, lo, hi, x, k)
        for n in range(lo, hi + 1):
            f = oracles.trial_factor(n)
            ps = sorted(p for p, e in f.items() for _ in range(e))
            small = [p for p in ps if y <= p < top]
            rungs = [int(math.log2(p / y)) for p in small]
            ref = len(ps) == k and y <= ps[0] <= top and _rung_ok(rungs)
            assert mask[n - lo] == ref, n

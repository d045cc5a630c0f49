import math
import random

import numpy as np
import pytest

from displab.arith_core import (
    NotInvertible,
    SieveSizeError,
    build_sieve,
    characters_mod_prime,
    crt,
    crt_general,
    dinfty_split,
    divisors,
    euler_phi,
    factorize,
    inverse_table,
    is_prime,
    mod_inverse,
    moebius,
    primes_upto,
    primitive_root,
    residue_sums,
    tau_k,
    unit_mask,
)

from . import oracles


def test_sieve_small_values():
    s = build_sieve(1, 10)
    assert s.mu[5] == 1  # n = 6
    assert s.phi[8] == 6  # n = 9
    assert s.big_omega[7] == 3  # n = 8
    assert (s.spf[0], s.mu[0], s.phi[0], s.big_omega[0], s.small_omega[0]) == (1, 1, 1, 0, 0)


def test_sieve_matches_trial_division_up_to_1e4():
    s = build_sieve(1, 10**4, segment=997)  # odd segment length exercises the seams
    for n in range(1, 10**4 + 1):
        i = n - 1
        f = oracles.trial_factor(n)
        assert s.spf[i] == oracles.spf(n)
        assert s.mu[i] == oracles.mu(n)
        assert s.big_omega[i] == sum(f.values())
        assert s.small_omega[i] == len(f)
    sample = random.Random(1).sample(range(1, 10**4 + 1), 300)
    for n in sample:
        assert s.phi[n - 1] == oracles.phi(n)


def test_sieve_offset_range_sampled():
    lo, hi = 10**6, 10**6 + 10**5
    s = build_sieve(lo, hi)
    rng = random.Random(2)
    for n in rng.sample(range(lo, hi + 1), 1000):
        i = n - lo
        f = oracles.trial_factor(n)
        assert s.spf[i] == min(f)
        assert s.mu[i] == oracles.mu(n)
        assert s.big_omega[i] == sum(f.values())
        assert s.phi[i] == oracles.phi(n)


def test_sieve_near_1e9():
    lo = 10**9 - 5000
    s = build_sieve(lo, lo + 10_000)
    rng = random.Random(3)
    for n in rng.sample(range(lo, lo + 10_001), 1000):
        f = oracles.trial_factor(n)
        i = n - lo
        assert s.spf[i] == min(f)
        assert s.small_omega[i] == len(f)
        assert s.big_omega[i] == sum(f.values())
        assert s.mu[i] == oracles.mu(n)
        assert s.tau_k_values(3, n, n)[0] == oracles.tau_k_formula(n, 3)


def test_sieve_size_errors():
    with pytest.raises(SieveSizeError):
        build_sieve(10, 9)
    with pytest.raises(SieveSizeError):
        build_sieve(0, 5)
    with pytest.raises(SieveSizeError, match="exceeds cap"):
        build_sieve(1, 1001, max_entries=1000)


def test_sieve_prime_invariants():
    s = build_sieve(2, 5000)
    for p in primes_upto(5000).tolist():
        i = p - 2
        assert (s.spf[i], s.phi[i], s.mu[i], s.big_omega[i], s.small_omega[i]) == (p, p - 1, -1, 1, 1)


def test_phi_divisor_sum():
    s = build_sieve(1, 2000)
    for n in range(1, 2001):
        assert sum(int(s.phi[d - 1]) for d in divisors(n)) == n


def test_tau_k_examples():
    assert all(tau_k(n, 1) == 1 for n in range(1, 50))
    assert tau_k(6, 2) == 4
    assert tau_k(4, 3) == 6
    with pytest.raises(ValueError):
        tau_k(5, 0)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_tau_k_matches_tuple_count(k):
    for n in range(1, 121):
        assert tau_k(n, k) == oracles.tau_k_count(n, k)


def test_tau_k_values_table():
    s = build_sieve(1, 3000)
    for k in (2, 3, 5, 9):
        vals = s.tau_k_values(k)
        for n in range(1, 3001, 7):
            assert vals[n - 1] == oracles.tau_k_formula(n, k)


def test_factorize_and_helpers():
    for n in [1, 2, 97, 360, 2**31 - 1, 600851475143, 10**9 + 7]:
        assert factorize(n) == ({} if n == 1 else oracles.trial_factor(n))
    assert is_prime(97) and not is_prime(1) and not is_prime(91)
    assert euler_phi(1) == 1 and euler_phi(36) == 12
    assert moebius(1) == 1 and moebius(30) == -1 and moebius(12) == 0
    assert divisors(12) == [1, 2, 3, 4, 6, 12]


def test_mod_inverse():
    assert mod_inverse(3, 7) == 5
    for m in range(2, 40):
        assert mod_inverse(1, m) == 1
    with pytest.raises(NotInvertible) as info:
        mod_inverse(2, 4)
    assert info.value.gcd == 2


def test_crt():
    assert crt([(2, 3), (3, 5)]) == (8, 15)
    assert crt([(17, 5)]) == (2, 5)
    assert crt([(1, 3), (1, 4), (1, 5)]) == (1, 60)
    with pytest.raises(ValueError):
        crt([(1, 4), (3, 6)])
    assert crt_general([(1, 4), (3, 6)]) == (9, 12)
    assert crt_general([(1, 4), (2, 6)]) is None


def test_dinfty_split():
    assert dinfty_split(10, 4) == (2, 5)
    assert dinfty_split(18, 12) == (18, 1)
    for n in range(1, 200):
        assert dinfty_split(n, 1) == (1, n)
        for d in range(1, 30):
            d1, rest = dinfty_split(n, d)
            assert d1 * rest == n and math.gcd(rest, d) == 1
            assert all(d % p == 0 for p in oracles.trial_factor(d1))
            assert dinfty_split(rest, d) == (1, rest)


def test_characters_mod_3_and_5():
    t3 = characters_mod_prime(3)
    chi = t3.chi(1, [1, 2, 3])
    assert np.allclose(chi, [1, -1, 0])
    t5 = characters_mod_prime(5)
    assert np.allclose(t5.chi(0, [1, 2, 3, 4, 6]), 1)
    with pytest.raises(ValueError):
        characters_mod_prime(9)
    with pytest.raises(ValueError):
        characters_mod_prime(100_003)


def test_character_orthogonality_to_101():
    for p in primes_upto(101).tolist():
        t = characters_mod_prime(p)
        mat = t.matrix(np.arange(p))  # (p-1) x p
        # sum over n of chi_j(n) vanishes for j != 0
        row_sums = mat.sum(axis=1)
        assert abs(row_sums[0] - (p - 1)) < 1e-12
        assert np.all(np.abs(row_sums[1:]) < 1e-9)
        # sum over j of chi_j(a) conj(chi_j(b)) = (p-1) [a = b]
        gram = mat[:, 1:].T @ mat[:, 1:].conj()
        assert np.allclose(gram, (p - 1) * np.eye(p - 1), atol=1e-9)


def test_primitive_root_order():
    for p in primes_upto(400).tolist():
        g = primitive_root(p)
        orders = [j for j in range(1, p) if pow(g, j, p) == 1]
        assert orders[0] == p - 1
        t = characters_mod_prime(p)
        for j in range(p - 1):
            assert t.dlog[pow(g, j, p)] == j


def test_residue_helpers():
    vals = np.arange(1, 11, dtype=float)  # n = 5..14
    sums = residue_sums(vals, 5, 4)
    ref = [sum(v for n, v in zip(range(5, 15), vals) if n % 4 == r) for r in range(4)]
    assert np.allclose(sums, ref)
    assert unit_mask(10).tolist() == [False, True, False, True, False, False, False, True, False, True]
    inv = inverse_table(10)
    assert inv[3] == 7 and inv[2] == -1
    assert inverse_table(1).tolist() == [0]

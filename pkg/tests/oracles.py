"""Slow, direct reference implementations used only by the tests.

Nothing here imports from displab: each function works from the plain
definition so that it can serve as an independent check.
"""

from __future__ import annotations

import cmath
import math
from fractions import Fraction
from itertools import product


def trial_factor(n: int) -> dict[int, int]:
    out: dict[int, int] = {}
    p = 2
    while p * p <= n:
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
        p += 1
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def phi(n: int) -> int:
    if n < 10**5:
        return sum(1 for k in range(1, n + 1) if math.gcd(k, n) == 1)
    r = n
    for p in trial_factor(n):
        r = r // p * (p - 1)
    return r


def mu(n: int) -> int:
    f = trial_factor(n)
    if any(e > 1 for e in f.values()):
        return 0
    return (-1) ** len(f)


def big_omega(n: int) -> int:
    return sum(trial_factor(n).values())


def small_omega(n: int) -> int:
    return len(trial_factor(n))


def spf(n: int) -> int:
    return 1 if n == 1 else min(trial_factor(n))


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def tau_k_count(n: int, k: int) -> int:
    """Number of ordered k-tuples of positive integers with product n."""
    if k == 1:
        return 1
    return sum(tau_k_count(n // d, k - 1) for d in divisors(n))


def tau_k_formula(n: int, k: int) -> int:
    out = 1
    for e in trial_factor(n).values():
        out *= math.comb(e + k - 1, k - 1)
    return out


def inverse(a: int, m: int) -> int:
    for x in range(1, m):
        if a * x % m == 1:
            return x
    raise ValueError("not invertible")


def e(x: Fraction | float) -> complex:
    if isinstance(x, Fraction):
        x = x - math.floor(x)
    return cmath.exp(2j * math.pi * float(x))


def kloosterman(a: int, b: int, c: int) -> complex:
    if c == 1:
        return 1.0
    return sum(e(Fraction(a * x + b * inverse(x, c), c))
               for x in range(1, c) if math.gcd(x, c) == 1)


def trilinear(theta, A, M, N, nu, alpha, beta) -> complex:
    total = 0j
    for i, a in enumerate(range(A + 1, 2 * A + 1)):
        for j, m in enumerate(range(M + 1, 2 * M + 1)):
            for k, n in enumerate(range(N + 1, 2 * N + 1)):
                if math.gcd(m, n) != 1:
                    continue
                mbar = 0 if n == 1 else inverse(m % n, n)
                total += nu[i] * alpha[j] * beta[k] * e(Fraction(theta * a * mbar, n))
    return total


def discrepancy(values: dict, q: int, a: int, r: int = 1) -> complex:
    """``values`` maps n -> beta_n."""
    prog = sum(v for n, v in values.items() if (n - a) % q == 0 and math.gcd(n, r) == 1)
    cop = sum(v for n, v in values.items() if math.gcd(n, q * r) == 1)
    return prog - cop / phi(q)


def conv_discrepancy(alpha: dict, beta: dict, q: int, a: int, weight=lambda k: 1.0) -> complex:
    prog = cop = 0j
    for m, x in alpha.items():
        for n, y in beta.items():
            k = m * n
            w = x * y * weight(k)
            if (k - a) % q == 0:
                prog += w
            if math.gcd(k, q) == 1:
                cop += w
    return prog - cop / phi(q)


def cal_e_star(values: dict, Q: int) -> float:
    total = 0.0
    for delta in range(2, 2 * Q + 1):
        for v in range(1, 2 * Q + 1):
            if not Q < delta * v <= 2 * Q:
                continue
            for dp in range(1, delta):
                if math.gcd(dp, delta) == 1:
                    total += abs(discrepancy(values, delta, dp, v)) ** 2
    return total


def bump_edge(u: float) -> float:
    """``s(u) / (s(u) + s(1 - u))`` with ``s(u) = exp(-1/u)``."""
    if u <= 0:
        return 0.0
    if u >= 1:
        return 1.0
    s1, s2 = math.exp(-1 / u), math.exp(-1 / (1 - u))
    return s1 / (s1 + s2)


def psi(t: float) -> float:
    if t <= 0.5 or t >= 2.5:
        return 0.0
    if t < 1:
        return bump_edge(2 * t - 1)
    if t <= 2:
        return 1.0
    return bump_edge(5 - 2 * t)


def psi_progression(M: int, q: int, a: int) -> float:
    return math.fsum(psi(m / M) for m in range(M // 2, 3 * M) if (m - a) % q == 0)


def congruence_solutions(n1, n2, q1, q2, a, lo, hi) -> list[int]:
    return [m for m in range(lo, hi + 1)
            if (m * n1 - a) % q1 == 0 and (m * n2 - a) % q2 == 0]


def sieve_weight_inner(n: int, z: int) -> float:
    root = math.sqrt(z)
    return sum(mu(d) * (1 - math.log(d) / math.log(root))
               for d in divisors(n) if d <= root)


def sieve_lambda_by_inversion(z: int, top: int) -> list[float]:
    """``lambda_d = sum_{e | d} mu(d / e) F(e)`` with ``F(n)`` the squared divisor sum."""
    F = [0.0] + [sieve_weight_inner(n, z) ** 2 for n in range(1, top + 1)]
    return [0.0] + [math.fsum(mu(d // e) * F[e] for e in divisors(d)) for d in range(1, top + 1)]


def dispersion_direct(c: dict, beta: dict, M: int, a: int):
    """U, V, W straight from the m-sum definitions with the reference psi."""
    U = V = W = 0j
    for m in range(M // 2, 3 * M):
        w = psi(m / M)
        if w == 0:
            continue
        P = R = 0j
        for q, cq in c.items():
            if cq == 0:
                continue
            P += cq * sum(b for n, b in beta.items() if (m * n - a) % q == 0)
            if math.gcd(m, q) == 1:
                S = sum(b for n, b in beta.items() if math.gcd(n, q) == 1)
                R += cq / phi(q) * S
        U += w * abs(R) ** 2
        V += w * P * R.conjugate()
        W += w * abs(P) ** 2
    return U.real, V, W.real


def characters_sum_side(values: dict, p: int) -> float:
    """``(1/phi(p)) sum_{chi != chi0} |sum beta_n chi(n)|^2`` from a brute primitive root."""
    g = next(g for g in range(1, p) if len({pow(g, j, p) for j in range(p - 1)}) == p - 1)
    dlog = {pow(g, j, p): j for j in range(p - 1)}
    total = 0.0
    for j in range(1, p - 1):
        s = sum(v * e(Fraction(j * dlog[n % p], p - 1)) for n, v in values.items() if n % p)
        total += abs(s) ** 2
    return total / (p - 1)


def all_tuples(*ranges):
    return product(*ranges)

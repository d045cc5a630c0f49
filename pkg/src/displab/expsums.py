"""Kloosterman sums and trilinear forms in Kloosterman fractions, evaluated
directly and compared with the trivial, Weil and trilinear bound formulas.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .arith_core import inverse_table, primes_upto

TRILINEAR_BUDGET = 10**10


def e_frac(num: int, den: int) -> complex:
    """``exp(2 pi i num / den)`` from the reduced residue ``num mod den``."""
    if den == 0:
        raise ValueError("denominator must be non-zero")
    if den < 0:
        num, den = -num, -den
    r = num % den
    return cmath.exp(2j * math.pi * r / den)


@lru_cache(maxsize=8192)
def _unit_phases(n: int) -> np.ndarray:
    t = np.exp(2j * np.pi * np.arange(n) / n)
    t.flags.writeable = False
    return t


@lru_cache(maxsize=8192)
def _inv(n: int) -> np.ndarray:
    t = inverse_table(n)
    t.flags.writeable = False
    return t


def complete_kloosterman(a: int, b: int, c: int) -> float:
    """``S(a, b; c) = sum_{x mod c, (x, c) = 1} e((a x + b x^-1) / c)`` (real)."""
    if c < 1:
        raise ValueError("modulus must be >= 1")
    inv = _inv(c)
    xs = np.flatnonzero(inv >= 0)
    k = ((a % c) * xs + (b % c) * inv[xs]) % c
    return float(np.sum(_unit_phases(c)[k]).real)


def kloosterman_row(p: int, b: int = 1) -> np.ndarray:
    """``S(a, b; p)`` for every ``a = 1 .. p-1`` (``p`` prime)."""
    inv = _inv(p)
    xs = np.arange(1, p, dtype=np.int64)
    k = (np.outer(xs, xs) + (b % p) * inv[xs][None, :]) % p
    cos = np.cos(2 * np.pi * np.arange(p) / p)
    return cos[k].sum(axis=1)


@dataclass(frozen=True)
class WeilScan:
    primes_checked: int
    pairs_checked: int
    violations: list
    worst_ratio: float  # max |S| / (2 sqrt p)


def weil_scan(p_max: int, slack: float = 1e-9) -> WeilScan:
    """Check ``|S(a, 1; p)| <= 2 sqrt(p)`` for all primes ``p <= p_max``, ``p | a`` excluded."""
    violations, pairs, worst = [], 0, 0.0
    ps = primes_upto(p_max)
    for p in ps.tolist():
        row = np.abs(kloosterman_row(p))
        bound = 2 * math.sqrt(p)
        pairs += row.size
        worst = max(worst, float(row.max()) / bound)
        for a in np.flatnonzero(row > bound + slack).tolist():
            violations.append((p, a + 1, float(row[a])))
    return WeilScan(len(ps), pairs, violations, worst)


# ---------------------------------------------------------------------------
# trilinear forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrilinearConfig:
    """``sum_{a ~ A} sum_{m ~ M} sum_{n ~ N} nu(a) alpha(m) beta(n) e(theta a m^-1 / n)``.

    Coefficient arrays are indexed from the first element of each dyadic
    range (``nu[0]`` is ``a = A + 1``).
    """

    theta: int
    A: int
    M: int
    N: int
    nu: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    budget: int = TRILINEAR_BUDGET

    def __post_init__(self):
        if self.theta == 0:
            raise ValueError("theta must be non-zero")
        for name, size in (("nu", self.A), ("alpha", self.M), ("beta", self.N)):
            arr = np.asarray(getattr(self, name), dtype=np.complex128)
            if arr.shape != (size,):
                raise ValueError(f"{name} must have length {size}")
            object.__setattr__(self, name, arr)
        cost = self.A * self.M * self.N
        if cost > self.budget:
            raise ValueError(f"estimated cost {cost:.3g} term operations exceeds budget {self.budget:.3g}")

    @classmethod
    def constant(cls, theta: int, A: int, M: int, N: int) -> "TrilinearConfig":
        return cls(theta, A, M, N, np.ones(A), np.ones(M), np.ones(N))

    @classmethod
    def random_unimodular(cls, theta: int, A: int, M: int, N: int, seed: int) -> "TrilinearConfig":
        rng = np.random.default_rng(seed)
        u = lambda k: np.exp(2j * np.pi * rng.random(k))  # noqa: E731
        return cls(theta, A, M, N, u(A), u(M), u(N))


@dataclass(frozen=True)
class CancellationReport:
    sum_value: complex
    trivial_bound: float
    weil_or_bc_bound: float
    ratio_trivial: float
    ratio_bound: float
    skipped_pairs: int = 0

    def to_row(self) -> dict:
        return {"sum_re": self.sum_value.real, "sum_im": self.sum_value.imag,
                "abs_sum": abs(self.sum_value), "trivial_bound": self.trivial_bound,
                "bc_bound": self.weil_or_bc_bound, "ratio_trivial": self.ratio_trivial,
                "ratio_bound": self.ratio_bound, "skipped_pairs": self.skipped_pairs}


def bc_bound(theta: float, A: float, M: float, N: float, norms: tuple[float, float, float],
             eps: float = 0.0, C: float = 1.0) -> float:
    """Right side of the trilinear Kloosterman-fraction bound at ``(eps, C)``."""
    amn = A * M * N
    return (C * norms[0] * norms[1] * norms[2]
            * math.sqrt(1 + abs(theta) * A / (M * N))
            * (amn ** (7 / 20 + eps) * (M + N) ** 0.25
               + amn ** (3 / 8 + eps) * (A * N + A * M) ** 0.125))


def _trilinear_core(theta: int, a_vals, nu, m_vals, alpha, n_vals, beta) -> tuple[complex, int]:
    """Sum over explicit supports; pairs with ``gcd(m, n) > 1`` are skipped and counted."""
    a_vals = np.asarray(a_vals, dtype=np.int64)
    m_vals = np.asarray(m_vals, dtype=np.int64)
    nu, alpha = np.asarray(nu), np.asarray(alpha)
    total = []
    skipped = 0
    for n, b in zip(np.asarray(n_vals).tolist(), np.asarray(beta).tolist()):
        inv = _inv(n)
        mbar = inv[m_vals % n]
        ok = mbar >= 0
        skipped += int((~ok).sum())
        if not ok.any() or b == 0:
            continue
        ta = ((theta % n) * (a_vals % n)) % n
        k = np.outer(ta, mbar[ok]) % n
        inner = nu @ _unit_phases(n)[k] @ alpha[ok]
        total.append(b * inner)
    value = complex(math.fsum(z.real for z in total), math.fsum(z.imag for z in total))
    return value, skipped


def trilinear_sum(cfg: TrilinearConfig, eps: float = 0.0, C: float = 1.0) -> CancellationReport:
    """Direct evaluation (``a`` outer in the phase, ``n`` looped, ``m^-1 mod n`` cached)."""
    a_vals = np.arange(cfg.A + 1, 2 * cfg.A + 1)
    m_vals = np.arange(cfg.M + 1, 2 * cfg.M + 1)
    n_vals = np.arange(cfg.N + 1, 2 * cfg.N + 1)
    value, skipped = _trilinear_core(cfg.theta, a_vals, cfg.nu, m_vals, cfg.alpha,
                                     n_vals, cfg.beta)
    trivial = float(np.abs(cfg.nu).sum() * np.abs(cfg.alpha).sum() * np.abs(cfg.beta).sum())
    norms = tuple(float(np.linalg.norm(v)) for v in (cfg.nu, cfg.alpha, cfg.beta))
    bound = bc_bound(cfg.theta, cfg.A, cfg.M, cfg.N, norms, eps, C)
    return CancellationReport(value, trivial, bound, abs(value) / trivial if trivial else 0.0,
                              abs(value) / bound if bound else 0.0, skipped)


def bilinear_sum(theta: int, M: int, N: int, alpha: np.ndarray, beta: np.ndarray) -> complex:
    """``sum_{m ~ M} sum_{n ~ N} alpha(m) beta(n) e(theta m^-1 / n)``."""
    return _trilinear_core(theta, [1], np.ones(1), np.arange(M + 1, 2 * M + 1), alpha,
                           np.arange(N + 1, 2 * N + 1), beta)[0]


# ---------------------------------------------------------------------------
# the W^Err1 inner sum
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Werr1Params:
    a: int
    gamma: int
    d: int
    d1: int
    H: int
    K1: int
    K2: int
    nu1p: int
    nu2: int


@dataclass(frozen=True)
class Werr1Result:
    value: complex
    mapped_value: complex
    skipped: int
    theta: int
    mapped_A: int
    mapped_M: int
    mapped_N: int
    coefficient_mass: float
    bound: float  # trilinear bound at the mapped sizes, C = 1

    def to_row(self) -> dict:
        return {"value_re": self.value.real, "value_im": self.value.imag,
                "abs_value": abs(self.value), "skipped": self.skipped, "theta": self.theta,
                "A": self.mapped_A, "M": self.mapped_M, "N": self.mapped_N,
                "mass": self.coefficient_mass, "bound": self.bound}


def werr1_inner_sum(params: Werr1Params, eta0: np.ndarray, eta1: np.ndarray,
                    eta2: np.ndarray, eps: float = 0.0) -> Werr1Result:
    """``sum_{h ~ H} sum_{k1' ~ K1} sum_{k2' ~ K2} eta0 eta1 eta2
    e(a h (gamma d d1)^-1 (d1 nu1' - nu2) (nu2 k1')^-1 / (nu1' k2'))``.

    Terms whose fraction is undefined (a shared factor between
    ``gamma d d1 nu2 k1'`` and ``nu1' k2'``) are skipped and counted. The sum is
    also evaluated through the substitution ``theta = a (d1 nu1' - nu2)``,
    ``m = gamma d d1 nu2 k1'``, ``n = nu1' k2'``.
    """
    p = params
    hs = np.arange(p.H + 1, 2 * p.H + 1)
    k1s = np.arange(p.K1 + 1, 2 * p.K1 + 1)
    k2s = np.arange(p.K2 + 1, 2 * p.K2 + 1)
    eta0, eta1, eta2 = (np.asarray(e, dtype=np.complex128) for e in (eta0, eta1, eta2))
    theta = p.a * (p.d1 * p.nu1p - p.nu2)
    base = p.gamma * p.d * p.d1

    # direct form: inverses of gamma d d1 and of nu2 k1' modulo nu1' k2'
    terms, skipped = [], 0
    for k2, e2 in zip(k2s.tolist(), eta2.tolist()):
        n = p.nu1p * k2
        if math.gcd(base, n) != 1:
            skipped += hs.size * k1s.size
            continue
        inv = _inv(n)
        base_bar = int(inv[base % n])
        t_bar = inv[(p.nu2 * k1s) % n]
        ok = t_bar >= 0
        skipped += hs.size * int((~ok).sum())
        coeff = (p.a % n) * base_bar % n * ((p.d1 * p.nu1p - p.nu2) % n) % n
        k = np.outer((coeff * hs) % n, t_bar[ok]) % n
        terms.append(e2 * (eta0 @ _unit_phases(n)[k] @ eta1[ok]))
    value = complex(math.fsum(z.real for z in terms), math.fsum(z.imag for z in terms))

    # mapped onto the trilinear shape
    m_vals = base * p.nu2 * k1s
    n_vals = p.nu1p * k2s
    if theta != 0:
        mapped, _ = _trilinear_core(theta, hs, eta0, m_vals, eta1, n_vals, eta2)
    else:
        mapped, _ = _trilinear_core(1, np.zeros(1, dtype=np.int64), np.ones(1), m_vals,
                                    eta1, n_vals, eta2)
        mapped *= eta0.sum()
    mapped_M, mapped_N = base * p.nu2 * p.K1, p.nu1p * p.K2
    norms = (float(np.linalg.norm(eta0)), float(np.linalg.norm(eta1)),
             float(np.linalg.norm(eta2)))
    bound = bc_bound(theta, p.H, mapped_M, mapped_N, norms, eps, 1.0)
    mass = float(np.abs(eta0).sum() * np.abs(eta1).sum() * np.abs(eta2).sum())
    return Werr1Result(value, mapped, skipped, theta, p.H, mapped_M, mapped_N, mass, bound)

"""Exact integer arithmetic and sieving substrate.

Everything downstream (sequence generators, discrepancies, the dispersion
pipeline) reads its factorization data from a :class:`SieveTable` built by a
segmented sieve, and its modular bookkeeping from the helpers here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

#: Default cap on the number of integers a single sieve table may cover.
SIEVE_MAX_ENTRIES = 10**8
#: Default segment length of the segmented sieve.
SIEVE_SEGMENT = 1 << 22
#: Largest prime modulus accepted by :func:`characters_mod_prime`.
CHARACTER_CAP = 10**5


class SieveSizeError(ValueError):
    """Requested sieve range is empty or larger than the configured cap."""


class NotInvertible(ValueError):
    """Raised by :func:`mod_inverse` when ``gcd(a, m) > 1``."""

    def __init__(self, gcd: int):
        super().__init__(f"not invertible: gcd = {gcd}")
        self.gcd = gcd


# ---------------------------------------------------------------------------
# primes and factorization
# ---------------------------------------------------------------------------

def primes_upto(limit: int) -> np.ndarray:
    """All primes ``<= limit`` as an int64 array (plain Eratosthenes)."""
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    is_p = np.ones(limit + 1, dtype=bool)
    is_p[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_p[p]:
            is_p[p * p::p] = False
    return np.flatnonzero(is_p).astype(np.int64)


@lru_cache(maxsize=8)
def _small_primes(limit: int) -> tuple[int, ...]:
    return tuple(int(p) for p in primes_upto(limit))


def factorize(n: int) -> dict[int, int]:
    """Prime factorization ``{p: e}`` of ``n >= 1`` by trial division."""
    if n < 1:
        raise ValueError(f"factorize needs n >= 1, got {n}")
    out: dict[int, int] = {}

    def strip(p: int) -> None:
        nonlocal n
        e = 0
        while n % p == 0:
            n //= p
            e += 1
        if e:
            out[p] = e

    small = _small_primes(100_000)
    for p in small:
        if p * p > n:
            break
        strip(p)
    else:
        p = small[-1] + 2
        while p * p <= n:
            strip(p)
            p += 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return factorize(n) == {n: 1}


def euler_phi(n: int) -> int:
    result = n
    for p in factorize(n):
        result -= result // p
    return result


def moebius(n: int) -> int:
    f = factorize(n)
    if any(e > 1 for e in f.values()):
        return 0
    return -1 if len(f) % 2 else 1


def divisors(n: int) -> list[int]:
    """Sorted list of the positive divisors of ``n``."""
    divs = [1]
    for p, e in factorize(n).items():
        divs = [d * p**j for d in divs for j in range(e + 1)]
    return sorted(divs)


def _tau_k_from_exponents(exponents: Sequence[int], k: int) -> int:
    out = 1
    for e in exponents:
        out *= math.comb(e + k - 1, k - 1)
    return out


def tau_k(n: int, k: int) -> int:
    """Number of ordered ``k``-tuples of positive integers with product ``n``."""
    if k < 1:
        raise ValueError("tau_k needs k >= 1")
    if n < 1:
        raise ValueError("tau_k needs n >= 1")
    return _tau_k_from_exponents(factorize(n).values(), k)


# ---------------------------------------------------------------------------
# segmented sieve
# ---------------------------------------------------------------------------

def _prime_power_pass(
    lo: int, hi: int, segment: int
) -> Iterator[tuple[int, int, list[tuple[int, np.ndarray, np.ndarray]], np.ndarray]]:
    """Walk [lo, hi] in segments, dividing out every base prime.

    Yields ``(seg_lo, seg_len, hits, rem)`` where ``hits`` lists
    ``(p, offsets, exponents)`` for each base prime dividing something in the
    segment, and ``rem`` is the cofactor left after all base primes (1 or a
    single prime larger than sqrt(hi)).
    """
    base = primes_upto(math.isqrt(hi))
    for seg_lo in range(lo, hi + 1, segment):
        seg_hi = min(seg_lo + segment - 1, hi)
        rem = np.arange(seg_lo, seg_hi + 1, dtype=np.int64)
        hits = []
        for p in base:
            p = int(p)
            if p * p > seg_hi:
                break
            start = (-seg_lo) % p
            if start > seg_hi - seg_lo:
                continue
            offs = np.arange(start, seg_hi - seg_lo + 1, p)
            r = rem[offs] // p
            e = np.ones(offs.size, dtype=np.int64)
            m = r % p == 0
            while m.any():
                r[m] //= p
                e[m] += 1
                m = r % p == 0
            rem[offs] = r
            hits.append((p, offs, e))
        yield seg_lo, seg_hi - seg_lo + 1, hits, rem


@dataclass(frozen=True)
class SieveTable:
    """Per-integer arithmetic data on the closed range ``[lo, hi]``.

    Arrays are indexed by ``n - lo``. Conventions at 1: ``spf = phi = mu = 1``
    and ``big_omega = small_omega = 0``.
    """

    lo: int
    hi: int
    spf: np.ndarray
    phi: np.ndarray
    mu: np.ndarray
    big_omega: np.ndarray
    small_omega: np.ndarray
    segment: int = field(default=SIEVE_SEGMENT, repr=False, compare=False)

    def __len__(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, n: int) -> bool:
        return self.lo <= n <= self.hi

    def covers(self, lo: int, hi: int) -> bool:
        return self.lo <= lo and hi <= self.hi

    def index(self, n):
        """Array offset(s) of ``n`` (scalar or array) in this table."""
        n_arr = np.asarray(n)
        if np.any((n_arr < self.lo) | (n_arr > self.hi)):
            raise IndexError(f"{n} outside sieve range [{self.lo}, {self.hi}]")
        return n_arr - self.lo

    def view(self, name: str, lo: int, hi: int) -> np.ndarray:
        """Slice of the named field for ``lo <= n <= hi``."""
        if not self.covers(lo, hi):
            raise IndexError(f"[{lo}, {hi}] not inside [{self.lo}, {self.hi}]")
        return getattr(self, name)[lo - self.lo: hi - self.lo + 1]

    def tau_k_values(self, k: int, lo: int | None = None, hi: int | None = None) -> np.ndarray:
        """τ_k(n) for every n in ``[lo, hi]`` (default: the whole table).

        Recomputed from the prime exponents on demand; never cached per k.
        """
        if k < 1:
            raise ValueError("tau_k needs k >= 1")
        lo = self.lo if lo is None else lo
        hi = self.hi if hi is None else hi
        if not self.covers(lo, hi):
            raise IndexError(f"[{lo}, {hi}] not inside [{self.lo}, {self.hi}]")
        out = np.ones(hi - lo + 1, dtype=np.float64 if k > 8 else np.int64)
        if k == 1:
            return out
        table = np.array([math.comb(e + k - 1, k - 1) for e in range(64)], dtype=out.dtype)
        for seg_lo, _, hits, rem in _prime_power_pass(lo, hi, self.segment):
            base = seg_lo - lo
            for _, offs, e in hits:
                out[base + offs] *= table[e]
            big = np.flatnonzero(rem > 1)
            out[base + big] *= k
        return out


def build_sieve(lo: int, hi: int, max_entries: int = SIEVE_MAX_ENTRIES,
                segment: int = SIEVE_SEGMENT) -> SieveTable:
    """Segmented sieve for spf, φ, μ, Ω and ω on ``[lo, hi]``."""
    if lo < 1 or hi < lo:
        raise SieveSizeError(f"empty or invalid sieve range [{lo}, {hi}]")
    size = hi - lo + 1
    if size > max_entries:
        raise SieveSizeError(
            f"sieve range of {size} integers exceeds cap {max_entries}; "
            f"needs about {size * 19 / 2**20:.0f} MiB"
        )
    spf = np.zeros(size, dtype=np.int64)
    phi = np.arange(lo, hi + 1, dtype=np.int64)
    mu = np.ones(size, dtype=np.int8)
    big_omega = np.zeros(size, dtype=np.int8)
    small_omega = np.zeros(size, dtype=np.int8)
    for seg_lo, seg_len, hits, rem in _prime_power_pass(lo, hi, segment):
        base = seg_lo - lo
        sl = slice(base, base + seg_len)
        s_spf, s_phi, s_mu = spf[sl], phi[sl], mu[sl]
        s_big, s_small = big_omega[sl], small_omega[sl]
        for p, offs, e in hits:
            fresh = offs[s_spf[offs] == 0]
            s_spf[fresh] = p
            s_phi[offs] = s_phi[offs] // p * (p - 1)
            s_mu[offs] = np.where(e > 1, 0, -s_mu[offs])
            s_big[offs] += e.astype(np.int8)
            s_small[offs] += 1
        big = np.flatnonzero(rem > 1)
        r = rem[big]
        s_spf[big] = np.where(s_spf[big] == 0, r, s_spf[big])
        s_phi[big] = s_phi[big] // r * (r - 1)
        s_mu[big] = -s_mu[big]
        s_big[big] += 1
        s_small[big] += 1
    if lo == 1:
        spf[0] = 1
    for arr in (spf, phi, mu, big_omega, small_omega):
        arr.flags.writeable = False
    return SieveTable(lo, hi, spf, phi, mu, big_omega, small_omega, segment)


# ---------------------------------------------------------------------------
# modular helpers
# ---------------------------------------------------------------------------

def mod_inverse(a: int, m: int) -> int:
    """Inverse of ``a`` modulo ``m`` in ``[1, m-1]`` (``0`` when ``m == 1``)."""
    if m < 1:
        raise ValueError("modulus must be positive")
    if m == 1:
        return 0
    try:
        return pow(a, -1, m)
    except ValueError:
        raise NotInvertible(math.gcd(a, m)) from None


def _merge(r1: int, m1: int, r2: int, m2: int) -> tuple[int, int] | None:
    """Merge two congruences with arbitrary moduli; None when inconsistent."""
    g = math.gcd(m1, m2)
    if (r2 - r1) % g:
        return None
    m2g = m2 // g
    t = (r2 - r1) // g * mod_inverse(m1 // g, m2g) % m2g
    lcm = m1 * m2g
    return (r1 + m1 * t) % lcm, lcm


def crt(residues: Sequence[tuple[int, int]]) -> tuple[int, int]:
    """Chinese remainder theorem for pairwise coprime moduli."""
    if not residues:
        raise ValueError("crt needs at least one congruence")
    moduli = [m for _, m in residues]
    if any(m < 1 for m in moduli):
        raise ValueError("moduli must be positive")
    for i, mi in enumerate(moduli):
        for mj in moduli[i + 1:]:
            if math.gcd(mi, mj) != 1:
                raise ValueError(f"moduli {mi} and {mj} are not coprime")
    r, m = residues[0][0] % residues[0][1], residues[0][1]
    for r2, m2 in residues[1:]:
        r, m = _merge(r, m, r2, m2)  # type: ignore[misc]
    return r, m


def crt_general(residues: Sequence[tuple[int, int]]) -> tuple[int, int] | None:
    """CRT without the coprimality precondition; None if inconsistent."""
    r, m = residues[0][0] % residues[0][1], residues[0][1]
    for r2, m2 in residues[1:]:
        merged = _merge(r, m, r2, m2)
        if merged is None:
            return None
        r, m = merged
    return r, m


def dinfty_split(n: int, d: int) -> tuple[int, int]:
    """Split ``n = d1 * n'`` with ``d1 | d^∞`` and ``gcd(n', d) = 1``."""
    if n < 1 or d < 1:
        raise ValueError("dinfty_split needs positive arguments")
    d1 = 1
    g = math.gcd(n, d)
    while g > 1:
        n //= g
        d1 *= g
        g = math.gcd(n, g)
    return d1, n


# ---------------------------------------------------------------------------
# characters modulo a prime
# ---------------------------------------------------------------------------

def primitive_root(p: int) -> int:
    """Least primitive root of the prime ``p`` by order testing."""
    if p == 2:
        return 1
    fac = factorize(p - 1)
    for g in range(2, p):
        if all(pow(g, (p - 1) // r, p) != 1 for r in fac):
            return g
    raise ArithmeticError(f"no primitive root found modulo {p}")


@dataclass(frozen=True)
class PrimeCharacterTable:
    """Dirichlet characters modulo a prime via a discrete-log table.

    ``dlog[n]`` is the index of ``n`` with respect to ``primitive_root``
    (``-1`` at ``n = 0``). Character ``j`` sends ``n`` to
    ``e(j * dlog(n) / (p - 1))`` and vanishes on multiples of ``p``.
    """

    modulus: int
    primitive_root: int
    dlog: np.ndarray

    def chi(self, j: int, n):
        p = self.modulus
        r = np.asarray(n, dtype=np.int64) % p
        ind = self.dlog[r]
        val = np.exp(2j * np.pi * ((j * ind) % (p - 1)) / (p - 1))
        return np.where(r == 0, 0.0, val)

    def matrix(self, n) -> np.ndarray:
        """Values of all characters at ``n``: shape ``(p-1, len(n))``."""
        p = self.modulus
        r = np.asarray(n, dtype=np.int64) % p
        ind = self.dlog[r]
        js = np.arange(p - 1)[:, None]
        vals = np.exp(2j * np.pi * ((js * ind[None, :]) % (p - 1)) / (p - 1))
        vals[:, r == 0] = 0.0
        return vals


def characters_mod_prime(p: int, cap: int = CHARACTER_CAP) -> PrimeCharacterTable:
    if p > cap:
        raise ValueError(f"modulus {p} exceeds the character cap {cap}")
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    g = primitive_root(p)
    dlog = np.full(p, -1, dtype=np.int64)
    x = 1
    for j in range(p - 1):
        dlog[x] = j
        x = x * g % p
    dlog.flags.writeable = False
    return PrimeCharacterTable(p, g, dlog)


# ---------------------------------------------------------------------------
# residue bucketing
# ---------------------------------------------------------------------------

def residue_sums(values: np.ndarray, first_n: int, q: int) -> np.ndarray:
    """Bucket a contiguous run of values by residue class modulo ``q``.

    ``values[i]`` belongs to the integer ``first_n + i``; the result ``S`` has
    ``S[r] = sum of values[i] with first_n + i ≡ r (mod q)``.
    """
    if q < 1:
        raise ValueError("modulus must be positive")
    values = np.asarray(values)
    size = values.shape[0]
    full = size // q * q
    shifted = np.zeros(q, dtype=values.dtype if values.dtype.kind in "fc" else np.float64)
    if full:
        shifted += values[:full].reshape(-1, q).sum(axis=0)
    if full < size:
        shifted[: size - full] += values[full:]
    return np.roll(shifted, first_n % q)


def unit_mask(q: int) -> np.ndarray:
    """Boolean mask over residues ``0..q-1`` of the units modulo ``q``."""
    return np.gcd(np.arange(q), q) == 1


def inverse_table(q: int) -> np.ndarray:
    """``inv[r]`` = inverse of ``r`` mod ``q`` for units, ``-1`` elsewhere."""
    inv = np.full(q, -1, dtype=np.int64)
    if q == 1:
        inv[0] = 0
        return inv
    for r in np.flatnonzero(unit_mask(q)):
        inv[r] = pow(int(r), -1, q)
    return inv

"""The alpha and beta sequences: divisor-bounded, multiplicative, indicator,
twisted, sieve-weight and random families, plus an empirical Siegel-Walfisz
diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .arith_core import (
    SieveTable,
    build_sieve,
    factorize,
    moebius,
    primes_upto,
    residue_sums,
    tau_k,
    unit_mask,
    _prime_power_pass,
)

BOUND_SLACK = 1e-9

KINDS = (
    "constant_one",
    "moebius",
    "tau_k",
    "prime_indicator",
    "omega_eq",
    "multiplicative_from_primes",
    "sieve_weight_divisor_sum",
    "random_unimodular",
    "random_pm1",
)


class BoundViolation(ValueError):
    """A sequence value exceeds its declared divisor bound."""


@dataclass(frozen=True, eq=False)
class ArithSequence:
    """Complex values on ``n_lo < n <= 2 * n_lo`` with ``|value(n)| <= τ_k(n)``.

    ``values[i]`` is the value at ``n = n_lo + 1 + i``.
    """

    n_lo: int
    values: np.ndarray
    bound_order: int = 1
    label: str = ""

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        if vals.shape != (self.n_lo,):
            raise ValueError(f"expected {self.n_lo} values, got shape {vals.shape}")
        if self.bound_order < 1:
            raise ValueError("bound_order must be >= 1")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        self._check_bound()

    def _check_bound(self) -> None:
        mags = np.abs(self.values)
        if mags.size == 0 or mags.max() <= 1 + BOUND_SLACK:
            return
        if self.bound_order == 1:
            bad = int(np.argmax(mags > 1 + BOUND_SLACK))
        else:
            taus = build_sieve(self.n_lo + 1, 2 * self.n_lo).tau_k_values(self.bound_order)
            over = mags > taus + BOUND_SLACK
            if not over.any():
                return
            bad = int(np.argmax(over))
        n = self.n_lo + 1 + bad
        raise BoundViolation(
            f"|value({n})| = {mags[bad]:.6g} exceeds tau_{self.bound_order}({n})"
        )

    @property
    def first(self) -> int:
        return self.n_lo + 1

    @property
    def last(self) -> int:
        return 2 * self.n_lo

    @property
    def ns(self) -> np.ndarray:
        return np.arange(self.first, self.last + 1, dtype=np.int64)

    def value(self, n: int) -> complex:
        if self.first <= n <= self.last:
            return complex(self.values[n - self.first])
        return 0j

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)))

    def is_real(self) -> bool:
        return bool(np.all(self.values.imag == 0))

    def with_values(self, values: np.ndarray, bound_order: int | None = None,
                    label: str | None = None) -> "ArithSequence":
        return ArithSequence(
            self.n_lo,
            values,
            self.bound_order if bound_order is None else bound_order,
            self.label if label is None else label,
        )

    def twisted(self, t: float) -> "ArithSequence":
        """Multiply by ``n^{-it}``."""
        if t == 0:
            return self
        phase = np.exp(-1j * t * np.log(self.ns.astype(np.float64)))
        return self.with_values(self.values * phase)

    def residue_sums(self, q: int) -> np.ndarray:
        return residue_sums(self.values, self.first, q)


@dataclass(frozen=True)
class SequenceSpec:
    """Serializable recipe for an :class:`ArithSequence`.

    ``param`` is the kind-specific parameter: ``k`` for ``tau_k`` and
    ``omega_eq``, ``z`` for ``sieve_weight_divisor_sum``, the seed for the
    random kinds, and a ``{prime: value}`` table (key ``0`` = default value
    for unlisted primes) for ``multiplicative_from_primes``.
    """

    kind: str
    n_lo: int
    param: object = None
    twist_t: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}; expected one of {KINDS}")
        if self.n_lo < 1:
            raise ValueError("n_lo must be >= 1")

    def to_string(self) -> str:
        """Compact text form ``kind[:param][@twist]`` (``n_lo`` is stored separately)."""
        s = self.kind
        if self.kind == "multiplicative_from_primes":
            table = dict(self.param or {})
            s += ":" + ",".join(f"{p}={_fmt_num(v)}" for p, v in sorted(table.items()))
        elif self.param is not None:
            s += f":{self.param}"
        if self.twist_t:
            s += f"@{self.twist_t!r}"
        return s

    @classmethod
    def from_string(cls, text: str, n_lo: int) -> "SequenceSpec":
        text = text.strip()
        twist = 0.0
        if "@" in text:
            text, tw = text.split("@", 1)
            twist = float(tw)
        kind, _, raw = text.partition(":")
        kind = kind.strip()
        param: object = None
        if kind == "multiplicative_from_primes":
            table = {}
            for item in filter(None, (s.strip() for s in raw.split(","))):
                p, v = item.split("=")
                table[int(p)] = complex(v.replace(" ", ""))
            param = table
        elif raw:
            param = int(raw)
        return cls(kind, n_lo, param, twist)


def _fmt_num(v: complex) -> str:
    v = complex(v)
    return repr(v.real) if v.imag == 0 else repr(v).strip("()")


# ---------------------------------------------------------------------------
# counter-based randomness
# ---------------------------------------------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return z


def counter_uniform(seed: int, ns: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) draws keyed by ``(seed, n)``, independent of the range."""
    key = _splitmix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
    with np.errstate(over="ignore"):
        z = _splitmix(np.asarray(ns, dtype=np.int64).astype(np.uint64) ^ key)
        z = _splitmix(z + key)
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


# ---------------------------------------------------------------------------
# sieve weights
# ---------------------------------------------------------------------------

def _sieve_weight_terms(z: int) -> tuple[np.ndarray, np.ndarray]:
    """Squarefree ``d <= sqrt(z)`` and ``mu(d) (1 - log d / log sqrt z)``."""
    if z < 4:
        raise ValueError("sieve weights need z >= 4")
    root = math.sqrt(z)
    top = math.isqrt(z)
    ds, ws = [], []
    log_root = math.log(root)
    for d in range(1, top + 1):
        m = moebius(d)
        if m:
            ds.append(d)
            ws.append(m * (1.0 - math.log(d) / log_root))
    return np.array(ds, dtype=np.int64), np.array(ws)


def sieve_weight_divisor_sum(n: int, z: int) -> float:
    """``(sum_{d | n, d <= sqrt z} mu(d) (1 - log d / log sqrt z))^2``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ds, ws = _sieve_weight_terms(z)
    inner = float(np.sum(ws[n % ds == 0]))
    return inner * inner


def sieve_weight_values(lo: int, hi: int, z: int) -> np.ndarray:
    """:func:`sieve_weight_divisor_sum` for every ``n`` in ``[lo, hi]``."""
    ds, ws = _sieve_weight_terms(z)
    inner = np.zeros(hi - lo + 1)
    for d, w in zip(ds.tolist(), ws.tolist()):
        inner[(-lo) % d::d] += w
    return inner * inner


def sieve_weight_coefficients(z: int) -> np.ndarray:
    """Expanded-square coefficients ``lambda_{d,z}`` for ``d = 0..z``.

    ``lambda_d = sum_{lcm(d1, d2) = d} w(d1) w(d2)``, so that
    ``sum_{d | n} lambda_d`` reproduces the squared divisor sum.
    """
    ds, ws = _sieve_weight_terms(z)
    lam = np.zeros(z + 1)
    for d1, w1 in zip(ds.tolist(), ws.tolist()):
        for d2, w2 in zip(ds.tolist(), ws.tolist()):
            lam[d1 // math.gcd(d1, d2) * d2] += w1 * w2
    return lam


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _multiplicative_values(sieve: SieveTable, lo: int, hi: int,
                           g_pe: Callable[[int, int], complex]) -> np.ndarray:
    out = np.ones(hi - lo + 1, dtype=np.complex128)
    for seg_lo, _, hits, rem in _prime_power_pass(lo, hi, sieve.segment):
        base = seg_lo - lo
        for p, offs, e in hits:
            uniq = np.unique(e)
            vals = {int(u): complex(g_pe(p, int(u))) for u in uniq}
            out[base + offs] *= np.array([vals[int(x)] for x in e]) if len(uniq) > 1 \
                else vals[int(uniq[0])]
        big = np.flatnonzero(rem > 1)
        out[base + big] *= np.array([complex(g_pe(int(r), 1)) for r in rem[big]])
    return out


def generate(spec: SequenceSpec, sieve: SieveTable | None = None) -> ArithSequence:
    """Materialize ``spec`` on ``(n_lo, 2 n_lo]`` using ``sieve`` for factorizations."""
    lo, hi = spec.n_lo + 1, 2 * spec.n_lo
    if sieve is None:
        sieve = build_sieve(lo, hi)
    elif not sieve.covers(lo, hi):
        raise ValueError(
            f"sieve [{sieve.lo}, {sieve.hi}] does not cover the support [{lo}, {hi}]"
        )
    kind, param = spec.kind, spec.param
    bound = 1
    ns = np.arange(lo, hi + 1, dtype=np.int64)
    if kind == "constant_one":
        vals = np.ones(ns.size)
    elif kind == "moebius":
        vals = sieve.view("mu", lo, hi).astype(np.float64)
    elif kind == "tau_k":
        bound = int(param)
        vals = sieve.tau_k_values(bound, lo, hi).astype(np.float64)
    elif kind == "prime_indicator":
        vals = (sieve.view("spf", lo, hi) == ns).astype(np.float64)
    elif kind == "omega_eq":
        vals = (sieve.view("big_omega", lo, hi) == int(param)).astype(np.float64)
    elif kind == "multiplicative_from_primes":
        table: Mapping[int, complex] = dict(param or {})
        default = complex(table.get(0, 1.0))
        if any(abs(v) > 1 + BOUND_SLACK for v in table.values()):
            raise BoundViolation("multiplicative_from_primes needs |g(p)| <= 1")
        vals = _multiplicative_values(
            sieve, lo, hi, lambda p, e: complex(table.get(p, default)) ** e
        )
    elif kind == "sieve_weight_divisor_sum":
        # |sum| <= 2^omega(n) <= tau_2(n), and tau_2^2 <= tau_4 pointwise
        bound = 4
        vals = sieve_weight_values(lo, hi, int(param))
    elif kind == "random_unimodular":
        vals = np.exp(2j * np.pi * counter_uniform(int(param or 0), ns))
    elif kind == "random_pm1":
        vals = np.where(counter_uniform(int(param or 0), ns) < 0.5, -1.0, 1.0)
    else:  # pragma: no cover - guarded by SequenceSpec
        raise ValueError(kind)
    seq = ArithSequence(spec.n_lo, vals, bound, spec.to_string())
    return seq.twisted(spec.twist_t)


# ---------------------------------------------------------------------------
# factorization-restricted families
# ---------------------------------------------------------------------------

def split_factor(m: int, small_below: float, large_above: float) -> tuple[int, int] | None:
    """Write ``m = b c`` with primes of ``b`` < ``small_below`` and primes of
    ``c`` > ``large_above``; None when some prime lies in between."""
    b = c = 1
    for p, e in factorize(m).items():
        if p < small_below:
            b *= p**e
        elif p > large_above:
            c *= p**e
        else:
            return None
    return b, c


def split_factor_values(lo: int, hi: int, g: Callable[[int], complex],
                        small_below: float, large_above: float) -> np.ndarray:
    """``beta_m = sum_{m = bc} g(b) g(c)`` over the smooth/rough splitting."""
    out = np.zeros(hi - lo + 1, dtype=np.complex128)
    for i, m in enumerate(range(lo, hi + 1)):
        bc = split_factor(m, small_below, large_above)
        if bc is not None:
            out[i] = g(bc[0]) * g(bc[1])
    return out


def s_set_mask(sieve: SieveTable, lo: int, hi: int, x: float, eps: float = 0.2,
               delta: float | None = None, y_exponent: float = 0.2) -> np.ndarray:
    """Membership in the set of ``n`` with a prime factor in
    ``[exp((log x)^y_exponent), x^eps]`` and at most one prime factor
    (with multiplicity) in each interval ``[M_l, M_{l+1})`` of the geometric
    ladder ``M_l = exp((log x)^y_exponent) (1 + delta)^l`` below ``x^eps``.
    """
    logx = math.log(x)
    bottom = math.exp(logx**y_exponent)
    top = x**eps
    if delta is None:
        delta = 1.0 / logx**2
    has_j = np.zeros(hi - lo + 1, dtype=bool)
    bad = np.zeros(hi - lo + 1, dtype=bool)
    last = np.full(hi - lo + 1, -1, dtype=np.int64)
    for seg_lo, _, hits, rem in _prime_power_pass(lo, hi, sieve.segment):
        base = seg_lo - lo
        for p, offs, e in hits:
            if p < bottom:
                continue
            if p > top:
                break
            at = base + offs
            has_j[at] = True
            rung = int(math.floor(math.log(p / bottom) / math.log1p(delta)))
            bad[at] |= (e > 1) | (last[at] == rung)
            last[at] = rung
        big = np.flatnonzero((rem >= bottom) & (rem <= top))
        at = base + big
        has_j[at] = True
        rungs = np.floor(np.log(rem[big] / bottom) / math.log1p(delta)).astype(np.int64)
        bad[at] |= last[at] == rungs
    return has_j & ~bad


def almost_prime_s_mask(sieve: SieveTable, lo: int, hi: int, x: float, k: int,
                        eps: float = 0.2, y_exponent: float = 0.2) -> np.ndarray:
    """Membership of ``n`` with ``Omega(n) = k`` in the dyadic-ladder set:
    smallest prime in ``[y, c0 x^eps]`` and at most one prime factor in each
    ``[y 2^j, y 2^{j+1})`` below ``c0 x^eps``, where ``y = exp((log x)^y_exponent)``
    and ``c0 in [1, 2)`` makes ``c0 x^eps / y`` a power of two.
    """
    y = math.exp(math.log(x) ** y_exponent)
    j0 = max(1, math.ceil(math.log2(x**eps / y)))
    top = y * 2**j0
    omega_ok = sieve.view("big_omega", lo, hi) == k
    spf = sieve.view("spf", lo, hi)
    first_ok = (spf >= y) & (spf <= top)
    bad = np.zeros(hi - lo + 1, dtype=bool)
    last = np.full(hi - lo + 1, -1, dtype=np.int64)
    for seg_lo, _, hits, rem in _prime_power_pass(lo, hi, sieve.segment):
        base = seg_lo - lo
        for p, offs, e in hits:
            if p < y:
                continue
            if p >= top:
                break
            at = base + offs
            rung = int(math.log2(p / y))
            bad[at] |= (e > 1) | (last[at] == rung)
            last[at] = rung
        big = np.flatnonzero((rem >= y) & (rem < top))
        at = base + big
        bad[at] |= last[at] == np.floor(np.log2(rem[big] / y)).astype(np.int64)
    return omega_ok & first_ok & ~bad


# ---------------------------------------------------------------------------
# Siegel-Walfisz diagnostic
# ---------------------------------------------------------------------------

def siegel_walfisz_score(seq: ArithSequence, q_max: int, r_max: int) -> float:
    """``max |E*(seq, q, a; r)| / (tau_k(r) N)`` over ``2 <= q <= q_max``,
    reduced ``a`` and ``1 <= r <= r_max``, with ``k = seq.bound_order``.
    """
    if q_max < 2:
        raise ValueError("q_max must be >= 2")
    ns = seq.ns
    best = 0.0
    for r in range(1, r_max + 1):
        vals = seq.values if r == 1 else np.where(np.gcd(ns, r) == 1, seq.values, 0)
        norm = tau_k(r, seq.bound_order) * seq.n_lo
        for q in range(2, q_max + 1):
            buckets = residue_sums(vals, seq.first, q)
            units = unit_mask(q)
            coprime_total = buckets[units].sum()
            phi_q = int(units.sum())
            e_star = buckets[units] - coprime_total / phi_q
            best = max(best, float(np.abs(e_star).max()) / norm)
    return best


def primes_in_range(lo: int, hi: int) -> np.ndarray:
    ps = primes_upto(hi)
    return ps[ps >= lo]

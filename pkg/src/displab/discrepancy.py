"""Discrepancy functionals for single sequences and convolutions in
arithmetic progressions, with a residue-bucketed fast path and a brute-force
oracle path.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .arith_core import euler_phi, inverse_table, residue_sums, unit_mask
from .sequences import ArithSequence

CONV_BUDGET = 10**7

Window = tuple | None


@dataclass(frozen=True)
class DiscrepancyReport:
    """``value = progression_sum - coprime_sum / phi``."""

    q: int
    a: int
    r: int
    progression_sum: complex
    coprime_sum: complex
    phi: int

    @property
    def value(self) -> complex:
        return self.progression_sum - self.coprime_sum / self.phi

    def to_row(self) -> dict:
        v = self.value
        return {
            "q": self.q, "a": self.a, "r": self.r,
            "progression_re": self.progression_sum.real,
            "progression_im": self.progression_sum.imag,
            "coprime_re": self.coprime_sum.real,
            "coprime_im": self.coprime_sum.imag,
            "value_re": v.real, "value_im": v.imag,
        }


@dataclass(frozen=True)
class DeltaReport:
    """Sum of ``|E|`` over ``Q < q <= 2Q`` with ``(q, a) = 1``."""

    Q: int
    a: int
    moduli: np.ndarray
    values: np.ndarray  # complex E per modulus
    per_q: np.ndarray = field(init=False)
    total: float = field(init=False)

    def __post_init__(self):
        per_q = np.abs(np.asarray(self.values, dtype=np.complex128))
        object.__setattr__(self, "per_q", per_q)
        object.__setattr__(self, "total", math.fsum(per_q.tolist()))

    def rows(self) -> list[dict]:
        return [
            {"q": int(q), "a": self.a, "value_re": v.real, "value_im": v.imag, "abs": abs(v)}
            for q, v in zip(self.moduli.tolist(), self.values.tolist())
        ]


def _check_modulus(q: int, a: int) -> None:
    if q < 1:
        raise ValueError("modulus must be >= 1")
    if math.gcd(a, q) != 1:
        raise ValueError(f"gcd(a, q) = {math.gcd(a, q)} > 1 for a={a}, q={q}")


def dyadic_moduli(Q: int, a: int) -> np.ndarray:
    qs = np.arange(Q + 1, 2 * Q + 1, dtype=np.int64)
    return qs[np.gcd(qs, a) == 1]


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

def smooth_step(u, steepness: float = 1.0):
    """``s(u) / (s(u) + s(1-u))`` with ``s(u) = exp(-steepness/u)``: 0 at 0, 1 at 1."""
    u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
    v = 1.0 - u
    # the ratio equals 1 / (1 + exp(steepness (1/u - 1/v))), stable for tiny u or v
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        expo = steepness * (1.0 / u - 1.0 / v)
        out = 1.0 / (1.0 + np.exp(expo))
    out = np.where(u <= 0, 0.0, np.where(v <= 0, 1.0, out))
    return out if out.ndim else float(out)


def smooth_window(t, width: float):
    """1 on ``[1, 2]``, support ``[1 - width, 2 + width]``, smooth edges."""
    t = np.asarray(t, dtype=np.float64)
    rise = smooth_step((t - (1.0 - width)) / width)
    fall = smooth_step(((2.0 + width) - t) / width)
    return np.minimum(rise, fall)


def default_window_width(x: float) -> float:
    return math.log(x) ** -2


def _normalize_window(window: Window) -> Window:
    if window is None or window == "none":
        return None
    mode = window[0]
    if mode == "sharp":
        return ("sharp", float(window[1]))
    if mode == "smooth":
        x = float(window[1])
        width = float(window[2]) if len(window) > 2 and window[2] is not None \
            else default_window_width(x)
        if not 0 < width < 1:
            raise ValueError("smooth window width must lie in (0, 1)")
        return ("smooth", x, width)
    raise ValueError(f"unknown window mode {mode!r}")


def window_weights(products: np.ndarray, window: Window) -> np.ndarray:
    """Window evaluated at ``products / x`` (all ones for no window)."""
    window = _normalize_window(window)
    products = np.asarray(products)
    if window is None:
        return np.ones(products.shape)
    x = window[1]
    if window[0] == "sharp":
        # integer-exact test x < k <= 2x
        return ((products > x) & (products <= 2 * x)).astype(np.float64)
    return smooth_window(products / x, window[2])


# ---------------------------------------------------------------------------
# single sequences
# ---------------------------------------------------------------------------

def E(seq: ArithSequence, q: int, a: int) -> DiscrepancyReport:
    return E_star(seq, q, a, 1)


def E_star(seq: ArithSequence, q: int, a: int, r: int) -> DiscrepancyReport:
    """Progression side restricted to ``(n, r) = 1``; coprime side to ``(n, qr) = 1``."""
    _check_modulus(q, a)
    if r < 1:
        raise ValueError("twist r must be >= 1")
    vals = seq.values
    if r > 1:
        vals = np.where(np.gcd(seq.ns, r) == 1, vals, 0)
    buckets = residue_sums(vals, seq.first, q)
    prog = complex(buckets[a % q])
    cop = complex(buckets[unit_mask(q)].sum())
    return DiscrepancyReport(q, a, r, prog, cop, euler_phi(q))


def E_star_all(values: np.ndarray, first_n: int, q: int) -> np.ndarray:
    """``E*`` at every reduced residue mod ``q`` (twist already applied to ``values``)."""
    buckets = residue_sums(values, first_n, q)
    units = unit_mask(q)
    cop = buckets[units].sum()
    return buckets[units] - cop / units.sum()


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------

def convolution_values(alpha: ArithSequence, beta: ArithSequence, window: Window = None,
                       budget: int = CONV_BUDGET) -> tuple[int, np.ndarray]:
    """``gamma_k = sum_{mn = k} alpha_m beta_n f(k / x)`` on ``(MN, 4MN]``.

    Returns ``(first_k, gamma)``.
    """
    first, last = alpha.first * beta.first, alpha.last * beta.last
    size = last - first + 1
    if size > budget:
        raise ValueError(f"convolution support {size} exceeds budget {budget}")
    gamma = np.zeros(size, dtype=np.complex128)
    short, long_ = (alpha, beta) if alpha.n_lo <= beta.n_lo else (beta, alpha)
    long_ns = long_.ns
    for n, b in zip(short.ns.tolist(), short.values.tolist()):
        if b == 0:
            continue
        prods = n * long_ns
        gamma[prods - first] += b * long_.values * window_weights(prods, window)
    return first, gamma


def E_conv(alpha: ArithSequence, beta: ArithSequence, q: int, a: int,
           window: Window = None) -> DiscrepancyReport:
    """Discrepancy of ``alpha * beta`` in the class ``a mod q``."""
    _check_modulus(q, a)
    window = _normalize_window(window)
    if window is None:
        return _conv_report_unwindowed(alpha, beta, q, a)
    first, gamma = convolution_values(alpha, beta, window)
    buckets = residue_sums(gamma, first, q)
    return DiscrepancyReport(q, a, 1, complex(buckets[a % q]),
                             complex(buckets[unit_mask(q)].sum()), euler_phi(q))


def _conv_report_unwindowed(alpha: ArithSequence, beta: ArithSequence, q: int, a: int,
                            ) -> DiscrepancyReport:
    A = residue_sums(alpha.values, alpha.first, q)
    B = residue_sums(beta.values, beta.first, q)
    inv = inverse_table(q)
    units = np.flatnonzero(inv >= 0)
    # m = r, n = a r^{-1}
    prog = complex(np.sum(A[units] * B[(a * inv[units]) % q]))
    cop = complex(A[units].sum() * B[units].sum())
    return DiscrepancyReport(q, a, 1, prog, cop, len(units))


def E_conv_oracle(alpha: ArithSequence, beta: ArithSequence, q: int, a: int,
                  window: Window = None) -> DiscrepancyReport:
    """Direct double loop over all pairs ``(m, n)``."""
    _check_modulus(q, a)
    prods = np.outer(alpha.ns, beta.ns)
    terms = np.outer(alpha.values, beta.values) * window_weights(prods, window)
    residues = prods % q
    prog = complex(terms[residues == a % q].sum())
    cop = complex(terms[np.gcd(residues, q) == 1].sum())
    return DiscrepancyReport(q, a, 1, prog, cop, euler_phi(q))


def _map_moduli(fn, moduli: Sequence[int], threads: int) -> list:
    if threads <= 1 or len(moduli) < 2:
        return [fn(q) for q in moduli]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, moduli))  # map keeps input order


def Delta(alpha: ArithSequence, beta: ArithSequence | None, Q: int, a: int,
          window: Window = None, oracle: bool = False, threads: int = 1) -> DeltaReport:
    """Sum of ``|E|`` over ``q ~ Q`` coprime to ``a``.

    ``beta=None`` treats ``alpha`` as a single sequence.
    """
    if a == 0:
        raise ValueError("a must be non-zero")
    moduli = dyadic_moduli(Q, a)
    window = _normalize_window(window)
    if beta is None:
        def one(q):
            if oracle:
                return _single_oracle(alpha, q, a)
            return E(alpha, q, a).value
    elif oracle:
        def one(q):
            return E_conv_oracle(alpha, beta, q, a, window).value
    elif window is None:
        def one(q):
            return _conv_report_unwindowed(alpha, beta, q, a).value
    else:
        first, gamma = convolution_values(alpha, beta, window)

        def one(q):
            buckets = residue_sums(gamma, first, q)
            units = unit_mask(q)
            return complex(buckets[a % q] - buckets[units].sum() / units.sum())
    values = np.array(_map_moduli(one, moduli.tolist(), threads), dtype=np.complex128)
    return DeltaReport(Q, a, moduli, values)


def _single_oracle(seq: ArithSequence, q: int, a: int) -> complex:
    ns = seq.ns
    prog = sum(v for n, v in zip(ns.tolist(), seq.values.tolist()) if (n - a) % q == 0)
    cop = sum(v for n, v in zip(ns.tolist(), seq.values.tolist()) if math.gcd(n, q) == 1)
    return complex(prog - cop / euler_phi(q))


# ---------------------------------------------------------------------------
# small-moduli energy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalEReport:
    Q: int
    total: float
    by_delta: dict  # delta -> contribution


def calE_star(beta: ArithSequence, Q: int, breakdown: bool = False):
    """``sum_{delta <= 2Q} sum_{v ~ Q/delta} sum_{delta'} |E*(beta, delta, delta'; v)|^2``."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    by_delta: dict[int, list[float]] = {}
    ns = beta.ns
    for v in range(1, 2 * Q + 1):
        # v ~ Q/delta  <=>  Q < delta v <= 2Q
        d_lo, d_hi = Q // v + 1, (2 * Q) // v
        if d_lo > d_hi:
            continue
        vals = beta.values if v == 1 else np.where(np.gcd(ns, v) == 1, beta.values, 0)
        for delta in range(d_lo, d_hi + 1):
            if delta == 1:
                by_delta.setdefault(1, []).append(0.0)
                continue
            e = E_star_all(vals, beta.first, delta)
            by_delta.setdefault(delta, []).append(float(np.sum(np.abs(e) ** 2)))
    contrib = {d: math.fsum(parts) for d, parts in sorted(by_delta.items())}
    total = math.fsum(contrib.values())
    if breakdown:
        return CalEReport(Q, total, contrib)
    return total


def calE_star_oracle(beta: ArithSequence, Q: int) -> float:
    """Triple loop straight from the definition, via :func:`E_star`."""
    total = []
    for delta in range(1, 2 * Q + 1):
        for v in range(1, 2 * Q + 1):
            if not Q < delta * v <= 2 * Q:
                continue
            for dp in range(delta):
                if math.gcd(dp, delta) == 1:
                    total.append(abs(E_star(beta, delta, dp, v).value) ** 2)
    return math.fsum(total)

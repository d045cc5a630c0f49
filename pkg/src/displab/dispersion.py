"""Dispersion machinery: the smooth cutoff psi and Poisson summation in
progressions, exact variable decompositions, the congruence reduction
``m = m0 mod l``, Bezout reciprocity, and the sums U, V, W, W(Q, D) and T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate

from .arith_core import (
    crt_general,
    dinfty_split,
    divisors,
    euler_phi,
    factorize,
    inverse_table,
    is_prime,
    mod_inverse,
    moebius,
    residue_sums,
    tau_k,
    unit_mask,
)
from .discrepancy import E_star_all, calE_star, smooth_step
from .sequences import ArithSequence

HAT_TOL = 1e-10
TRANSFORM_BUDGET = 2 * 10**6
POISSON_CONSTANT = 10.0


class QuadratureError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# smooth cutoff
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothCutoff:
    """``psi = 1`` on ``[1, 2]``, support ``[1/2, 5/2]``, bump-ratio edges."""

    steepness: float = 1.0
    plateau: tuple = (1.0, 2.0)
    support: tuple = (0.5, 2.5)

    def __post_init__(self):
        if not self.steepness > 0:
            raise ValueError("steepness must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        rise = smooth_step(2.0 * t - 1.0, self.steepness)
        fall = smooth_step(5.0 - 2.0 * t, self.steepness)
        return np.minimum(rise, fall)

    def eval(self, t):
        return self(t)

    @property
    def hat0(self) -> float:
        return self.hat(0.0).real

    def hat(self, xi: float) -> complex:
        """``int psi(t) e(-xi t) dt``."""
        xi = float(xi)
        if xi < 0:
            return _psi_hat(self.steepness, -xi).conjugate()
        return _psi_hat(self.steepness, xi)

    def hats(self, xis) -> np.ndarray:
        return np.array([self.hat(x) for x in np.asarray(xis, dtype=np.float64).ravel()])


def make_cutoff(steepness: float = 1.0) -> SmoothCutoff:
    return SmoothCutoff(steepness)


def psi_hat(cutoff: SmoothCutoff, xi: float) -> complex:
    return cutoff.hat(xi)


def _quad(f, lo, hi, weight=None, wvar=None):
    kw = dict(epsabs=1e-13, epsrel=1e-13, limit=400, full_output=1)
    if weight is not None:
        kw.update(weight=weight, wvar=wvar)
    val, err, *rest = integrate.quad(f, lo, hi, **kw)
    if not err <= HAT_TOL:
        raise QuadratureError(f"quadrature reached only {err:.3g} (target {HAT_TOL:g})")
    return val


@lru_cache(maxsize=1 << 16)
def _psi_hat(steepness: float, xi: float) -> complex:
    def rise(t):
        return float(smooth_step(2.0 * t - 1.0, steepness))

    def fall(t):
        return float(smooth_step(5.0 - 2.0 * t, steepness))

    if xi == 0.0:
        return complex(1.0 + _quad(rise, 0.5, 1.0) + _quad(fall, 2.0, 2.5))
    w = 2.0 * math.pi * xi
    re = (math.sin(2 * w) - math.sin(w)) / w
    im_pos = (math.cos(w) - math.cos(2 * w)) / w  # int_1^2 sin
    re += _quad(rise, 0.5, 1.0, "cos", w) + _quad(fall, 2.0, 2.5, "cos", w)
    im_pos += _quad(rise, 0.5, 1.0, "sin", w) + _quad(fall, 2.0, 2.5, "sin", w)
    return complex(re, -im_pos)


def psi_weights(cutoff: SmoothCutoff, M: int) -> tuple[int, np.ndarray]:
    """``(m_first, psi(m / M))`` over every integer ``m`` with ``psi(m/M) > 0``."""
    m_first = M // 2 + 1
    m_last = -((-5 * M) // 2) - 1
    ms = np.arange(m_first, m_last + 1, dtype=np.float64)
    return m_first, cutoff(ms / M)


# ---------------------------------------------------------------------------
# Poisson summation
# ---------------------------------------------------------------------------

def poisson_threshold(M: int, q: int) -> int:
    return math.ceil(q / M * math.log(2 * M) ** 4)


@dataclass(frozen=True)
class PoissonResult:
    approx: complex
    exact: float
    residual: float
    H: int


def poisson_progression(cutoff: SmoothCutoff, M: int, q: int, a: int,
                        H: int | None = None) -> PoissonResult:
    """Compare ``sum_{m = a (q)} psi(m/M)`` with its truncated Poisson expansion."""
    if M < 1 or q < 1:
        raise ValueError("need M >= 1 and q >= 1")
    threshold = q / M * math.log(2 * M) ** 4
    if H is None:
        H = math.ceil(threshold)
    elif H < threshold:
        raise ValueError(f"H = {H} is below the threshold (q/M) log^4(2M) = {threshold:.4g}")
    first, w = psi_weights(cutoff, M)
    exact = math.fsum(w[(a - first) % q::q].tolist())
    approx = _poisson_approx(cutoff, M, q, np.array([a % q]), H)[0]
    return PoissonResult(approx, exact, abs(exact - approx), H)


def poisson_progression_all(cutoff: SmoothCutoff, M: int, q: int,
                            H: int | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Exact and approximate sums for every residue ``a mod q`` at once."""
    if H is None:
        H = poisson_threshold(M, q)
    first, w = psi_weights(cutoff, M)
    exact = residue_sums(w, first, q).real
    approx = _poisson_approx(cutoff, M, q, np.arange(q), H)
    return exact, approx, H


def _poisson_approx(cutoff, M, q, residues, H) -> np.ndarray:
    hs = np.arange(1, H + 1)
    hats = cutoff.hats(hs * (M / q))
    # psi real: the -h term is the conjugate of the +h term
    phases = np.exp(2j * np.pi * np.outer(residues % q, hs) / q)
    tail = 2.0 * (phases @ hats).real
    return (M / q) * (cutoff.hat0 + tail)


@dataclass(frozen=True)
class CoprimePoisson:
    exact: float
    main: float
    residual: float
    bound: float  # tau_2(q) log^4(2M)
    oracle: float


def poisson_coprime(cutoff: SmoothCutoff, M: int, q: int) -> CoprimePoisson:
    first, w = psi_weights(cutoff, M)
    ms = np.arange(first, first + w.size)
    exact = math.fsum(w[np.gcd(ms, q) == 1].tolist())
    # Moebius over divisors of q
    oracle = math.fsum(
        moebius(d) * math.fsum(w[(-first) % d::d].tolist()) for d in divisors(q) if moebius(d)
    )
    main = euler_phi(q) / q * cutoff.hat0 * M
    return CoprimePoisson(exact, main, abs(exact - main),
                          tau_k(q, 2) * math.log(2 * M) ** 4, oracle)


class PsiSums:
    """Memoized sums of ``psi(m / M)`` over progressions and multiples."""

    def __init__(self, cutoff: SmoothCutoff, M: int):
        self.cutoff, self.M = cutoff, M
        self.first, self.w = psi_weights(cutoff, M)
        self._res: dict[int, np.ndarray] = {}
        self._mult: dict[int, float] = {}

    def progression(self, modulus: int) -> np.ndarray:
        """Array ``r -> sum_{m = r (modulus)} psi(m/M)``."""
        got = self._res.get(modulus)
        if got is None:
            got = residue_sums(self.w, self.first, modulus).real
            self._res[modulus] = got
        return got

    def multiples(self, d: int) -> float:
        got = self._mult.get(d)
        if got is None:
            got = float(self.w[(-self.first) % d::d].sum())
            self._mult[d] = got
        return got

    def coprime(self, n: int) -> float:
        """``sum_{(m, n) = 1} psi(m/M)`` by Moebius over squarefree ``d | n``."""
        primes = list(factorize(n))
        total = 0.0
        for mask in range(1 << len(primes)):
            d, sign = 1, 1
            for i, p in enumerate(primes):
                if mask >> i & 1:
                    d *= p
                    sign = -sign
            total += sign * self.multiples(d)
        return total


# ---------------------------------------------------------------------------
# decompositions
# ---------------------------------------------------------------------------

def decompose_pair(n1: int, n2: int) -> tuple[int, int, int, int]:
    """``(d, d1, nu1', nu2)`` with ``n1 = d d1 nu1'``, ``n2 = d nu2``."""
    d = math.gcd(n1, n2)
    d1, nu1p = dinfty_split(n1 // d, d)
    return d, d1, nu1p, n2 // d


def compose_pair(d: int, d1: int, nu1p: int, nu2: int) -> tuple[int, int]:
    return d * d1 * nu1p, d * nu2


def decompose_moduli(q1: int, q2: int) -> tuple[int, int, int, int, int]:
    """``(delta, delta1, delta2, k1', k2')`` with ``q_i = delta delta_i k_i'``."""
    delta = math.gcd(q1, q2)
    delta1, k1p = dinfty_split(q1 // delta, delta)
    delta2, k2p = dinfty_split(q2 // delta, delta)
    return delta, delta1, delta2, k1p, k2p


def _in_dyadic(n: int, lo: int) -> bool:
    return lo < n <= 2 * lo


def gcd_reindex_check(Q: int, weights: np.ndarray) -> float:
    """``|sum_{q1, q2 ~ Q} w - sum_delta sum_{(k1, k2) = 1} w(delta k1, delta k2)|``.

    ``weights[i, j]`` is ``w(Q + 1 + i, Q + 1 + j)``.
    """
    weights = np.asarray(weights)
    direct = _csum(weights.ravel())
    terms = []
    for delta in range(1, 2 * Q + 1):
        ks = [k for k in range(1, 2 * Q // delta + 1) if _in_dyadic(delta * k, Q)]
        for k1 in ks:
            for k2 in ks:
                if math.gcd(k1, k2) == 1:
                    terms.append(weights[delta * k1 - Q - 1, delta * k2 - Q - 1])
    return abs(direct - _csum(np.array(terms)))


def conv_reindex_check(N: int, weights: np.ndarray) -> float:
    """Same as :func:`gcd_reindex_check` for ``(n1, n2) <-> (d, d1, nu1', nu2)``.

    The right side enumerates the decomposition freely: ``d``, then
    ``d1 | d^inf``, then ``nu1'`` coprime to ``d``, then ``nu2`` coprime to
    ``d1 nu1'``.
    """
    weights = np.asarray(weights)
    direct = _csum(weights.ravel())
    terms = []
    top = 2 * N
    for d in range(1, top + 1):
        rad = math.prod(factorize(d))
        smooth = [e for e in range(1, top // d + 1) if dinfty_split(e, rad)[1] == 1]
        for d1 in smooth:
            for nu1p in range(1, top // (d * d1) + 1):
                n1 = d * d1 * nu1p
                if not _in_dyadic(n1, N) or math.gcd(nu1p, d) != 1:
                    continue
                for nu2 in range(N // d + 1, top // d + 1):
                    if math.gcd(d1 * nu1p, nu2) == 1:
                        terms.append(weights[n1 - N - 1, d * nu2 - N - 1])
    return abs(direct - _csum(np.array(terms)))


def _csum(z: np.ndarray) -> complex:
    z = np.asarray(z, dtype=np.complex128)
    return complex(math.fsum(z.real.tolist()), math.fsum(z.imag.tolist()))


# ---------------------------------------------------------------------------
# congruence reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CongruenceReduction:
    n1: int
    n2: int
    q1: int
    q2: int
    a: int
    d: int
    d1: int
    nu1p: int
    nu2: int
    delta: int
    delta1: int
    delta2: int
    k1p: int
    k2p: int
    gamma: int
    ell: int
    solvable: bool
    m0: int | None
    lam: int | None  # the class a*lambda mod gamma

    def solutions(self, lo: int, hi: int) -> list[int]:
        if not self.solvable:
            return []
        start = lo + (self.m0 - lo) % self.ell
        return list(range(start, hi + 1, self.ell))


def _display_coefficients(gamma: int, k1p: int, k2p: int) -> tuple[int, int, int]:
    e1 = k1p * k2p * mod_inverse(k1p * k2p, gamma)
    e2 = gamma * k2p * mod_inverse(gamma * k2p, k1p)
    e3 = gamma * k1p * mod_inverse(gamma * k1p, k2p)
    return e1, e2, e3


def reduce_congruence_system(n1: int, n2: int, q1: int, q2: int, a: int) -> CongruenceReduction:
    """Collapse ``m n1 = a (q1)``, ``m n2 = a (q2)`` to ``m = m0 (l)``.

    ``m0`` comes from the explicit three-term formula and is cross-checked
    against a direct CRT merge of the two congruences.
    """
    if math.gcd(a, q1 * q2) != 1:
        raise ValueError("need gcd(a, q1 q2) = 1")
    d, d1, nu1p, nu2 = decompose_pair(n1, n2)
    delta, delta1, delta2, k1p, k2p = decompose_moduli(q1, q2)
    gamma = delta * delta1 * delta2
    ell = gamma * k1p * k2p
    solvable = (math.gcd(n1, q1) == 1 and math.gcd(n2, q2) == 1
                and (n1 - n2) % delta == 0)
    m0 = lam = None
    if solvable:
        u1, u2 = mod_inverse(n1, q1), mod_inverse(n2, q2)
        merged = crt_general([(a * u1 % (delta * delta1), delta * delta1),
                              (a * u2 % (delta * delta2), delta * delta2)])
        lam = merged[0] % gamma
        e1, e2, e3 = _display_coefficients(gamma, k1p, k2p)
        m0 = (lam * e1 + a * u1 * e2 + a * u2 * e3) % ell
        truth = crt_general([(a * u1 % q1, q1), (a * u2 % q2, q2)])
        if truth is None or truth != (m0, ell):
            raise AssertionError(f"display formula {m0} mod {ell} disagrees with CRT {truth}")
    return CongruenceReduction(n1, n2, q1, q2, a, d, d1, nu1p, nu2, delta, delta1, delta2,
                               k1p, k2p, gamma, ell, solvable, m0, lam)


@lru_cache(maxsize=1 << 14)
def _moduli_plan(q1: int, q2: int) -> tuple:
    delta, delta1, delta2, k1p, k2p = decompose_moduli(q1, q2)
    gamma = delta * delta1 * delta2
    return (delta, delta1, delta2, k1p, k2p, gamma, gamma * k1p * k2p,
            _display_coefficients(gamma, k1p, k2p), mod_inverse(delta1, delta2))


def reduce_congruence_batch(n1: np.ndarray, n2: np.ndarray, q1: int, q2: int, a: int
                            ) -> tuple[np.ndarray, int, np.ndarray]:
    """Vectorized :func:`reduce_congruence_system` over arrays ``n1, n2``.

    Returns ``(solvable, ell, m0)``; ``m0`` is meaningful where solvable.
    """
    if math.gcd(a, q1 * q2) != 1:
        raise ValueError("need gcd(a, q1 q2) = 1")
    delta, delta1, delta2, k1p, k2p, gamma, ell, (e1, e2, e3), inv_d1 = _moduli_plan(q1, q2)
    n1, n2 = np.broadcast_arrays(np.asarray(n1, dtype=np.int64), np.asarray(n2, dtype=np.int64))
    u1 = _cached_inverse_table(q1)[n1 % q1]
    u2 = _cached_inverse_table(q2)[n2 % q2]
    ok = (u1 >= 0) & (u2 >= 0) & ((n1 - n2) % delta == 0)
    u1 = np.where(ok, u1, 0)
    u2 = np.where(ok, u2, 0)
    A = delta * delta1
    r1 = (a * u1) % A
    r2 = (a * u2) % (delta * delta2)
    t = (((r2 - r1) // delta) * inv_d1) % delta2
    lam = (r1 + A * t) % gamma
    m0 = ((lam * (e1 % ell)) % ell
          + ((a * u1) % ell) * (e2 % ell) % ell
          + ((a * u2) % ell) * (e3 % ell) % ell) % ell
    return ok, ell, m0


@lru_cache(maxsize=4096)
def _cached_inverse_table(q: int) -> np.ndarray:
    t = inverse_table(q)
    t.flags.writeable = False
    return t


# ---------------------------------------------------------------------------
# Bezout reciprocity
# ---------------------------------------------------------------------------

def _frac_mod1(x: Fraction) -> Fraction:
    return x - math.floor(x)


def bezout_reciprocity(r: int, s: int) -> tuple[Fraction, Fraction, Fraction]:
    """``(s^-1 mod r) / r + (r^-1 mod s) / s = 1 / (rs) mod 1`` as exact rationals."""
    if r < 1 or s < 1 or math.gcd(r, s) != 1:
        raise ValueError("need coprime r, s >= 1")
    x = Fraction(mod_inverse(s, r) if r > 1 else 0, r)
    y = Fraction(mod_inverse(r, s) if s > 1 else 0, s)
    z = Fraction(1, r * s)
    if _frac_mod1(x + y - z) != 0:
        raise AssertionError(f"reciprocity fails for r={r}, s={s}")
    return x, y, z


def bezout_three_term(A: int, B: int, C: int) -> tuple[Fraction, Fraction, Fraction, Fraction]:
    """For pairwise coprime ``A, B, C``:
    ``(AB)^-1/C + (AC)^-1/B + (BC)^-1/A = 1/(ABC) mod 1``
    with each inverse taken modulo the denominator.
    """
    if math.gcd(A, B) != 1 or math.gcd(A, C) != 1 or math.gcd(B, C) != 1:
        raise ValueError("need pairwise coprime A, B, C")

    def part(num: int, den: int) -> Fraction:
        return Fraction(mod_inverse(num, den) if den > 1 else 0, den)

    x, y, z = part(A * B, C), part(A * C, B), part(B * C, A)
    total = Fraction(1, A * B * C)
    if _frac_mod1(x + y + z - total) != 0:
        raise AssertionError(f"three-term reciprocity fails for {(A, B, C)}")
    return x, y, z, total


# ---------------------------------------------------------------------------
# U, V, W, T
# ---------------------------------------------------------------------------

@dataclass
class DispersionConfig:
    """Inputs of the dispersion: weights ``c[q - Q - 1]`` for ``q ~ Q``,
    the sequence ``beta``, the ``m``-scale ``M`` and the residue ``a``."""

    c: np.ndarray
    beta: ArithSequence
    M: int
    Q: int
    a: int
    cutoff: SmoothCutoff = field(default_factory=SmoothCutoff)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.complex128).copy()
        if c.shape != (self.Q,):
            raise ValueError(f"expected {self.Q} weights, got {c.shape}")
        mags = np.abs(c)
        if np.any(mags > 1 + 1e-12):
            raise ValueError("weights must satisfy |c_q| <= 1")
        c[np.gcd(self.moduli, self.a) != 1] = 0
        self.c = c

    @property
    def moduli(self) -> np.ndarray:
        return np.arange(self.Q + 1, 2 * self.Q + 1, dtype=np.int64)

    def weight(self, q: int) -> complex:
        return complex(self.c[q - self.Q - 1]) if self.Q < q <= 2 * self.Q else 0j

    def active(self) -> list[int]:
        return [int(q) for q, w in zip(self.moduli, self.c) if w != 0]


@dataclass(frozen=True)
class DispersionParts:
    U: float
    V: complex
    W: float
    T: complex
    W_MT: complex
    U_main: complex
    W_Err2_bound: float
    residual_VU: float
    residual_disp: float
    U_transformed: complex | None = None
    V_transformed: complex | None = None
    W_transformed: complex | None = None
    W_by_level: dict | None = None

    @property
    def dispersion(self) -> float:
        return self.W - 2 * self.V.real + self.U

    def W_trunc(self, D: int) -> complex:
        if self.W_by_level is None:
            raise ValueError("W grouped by decomposition was not computed")
        return sum((v for lvl, v in self.W_by_level.items() if lvl <= D), 0j)

    def to_row(self) -> dict:
        row = {"U": self.U, "V_re": self.V.real, "V_im": self.V.imag, "W": self.W,
               "T_re": self.T.real, "T_im": self.T.imag,
               "W_MT_re": self.W_MT.real, "U_main_re": self.U_main.real,
               "W_Err2_bound": self.W_Err2_bound, "residual_VU": self.residual_VU,
               "residual_disp": self.residual_disp, "dispersion": self.dispersion}
        for key in ("U_transformed", "V_transformed", "W_transformed"):
            v = getattr(self, key)
            row[key + "_re"] = float("nan") if v is None else v.real
        return row


def _direct_PR(cfg: DispersionConfig):
    """Per-``m`` inner sums of the dispersion (progression part P, coprime part R)."""
    psums = PsiSums(cfg.cutoff, cfg.M)
    first, w = psums.first, psums.w
    ms = np.arange(first, first + w.size, dtype=np.int64)
    beta = cfg.beta
    P = np.zeros(ms.size, dtype=np.complex128)
    R = np.zeros(ms.size, dtype=np.complex128)
    for q in cfg.active():
        cq = cfg.weight(q)
        B = residue_sums(beta.values, beta.first, q)
        inv = _cached_inverse_table(q)
        units = inv >= 0
        T = np.zeros(q, dtype=np.complex128)
        T[units] = B[(cfg.a * inv[units]) % q]
        r = ms % q
        P += cq * T[r]
        R += (cq / units.sum()) * B[units].sum() * units[r]
    return w, P, R


def compute_UVW(cfg: DispersionConfig, transformed: bool | None = None,
                budget: int = TRANSFORM_BUDGET) -> DispersionParts:
    """U, V, W from their definitions, plus main terms and (optionally) the
    transformed exact re-expressions used as an independent route."""
    w, P, R = _direct_PR(cfg)
    U = float(np.sum(w * np.abs(R) ** 2))
    V = complex(np.sum(w * P * np.conj(R)))
    W = float(np.sum(w * np.abs(P) ** 2))
    U_main = U_main_term(cfg)
    W_MT = W_main_term(cfg)
    T = main_term_T(cfg)[0]
    n_abs = np.abs(cfg.beta.values)
    err2 = POISSON_CONSTANT / cfg.M * float(np.sum(np.abs(cfg.c)) ** 2 * n_abs.sum() ** 2)
    cost = cfg.Q**2 * cfg.beta.n_lo**2
    if transformed is None:
        transformed = cost <= budget
    elif transformed and cost > budget:
        raise ValueError(f"transformed route needs {cost} tuples (budget {budget})")
    Ut = Vt = Wt = by_level = None
    if transformed:
        Ut = U_transformed(cfg)
        Vt = V_transformed(cfg)
        Wt, by_level = W_transformed(cfg)
    disp = W - 2 * V.real + U
    return DispersionParts(U, V, W, T, W_MT, U_main, err2, abs(V - U), disp - T.real,
                           Ut, Vt, Wt, by_level)


def _coprime_sums(cfg: DispersionConfig) -> dict[int, complex]:
    beta = cfg.beta
    out = {}
    for q in cfg.active():
        B = residue_sums(beta.values, beta.first, q)
        out[q] = complex(B[unit_mask(q)].sum())
    return out


def _delta_pairs(cfg: DispersionConfig):
    """Yield ``(delta, k1, k2)`` with ``delta k_i ~ Q`` active and ``(k1, k2) = 1``."""
    Q = cfg.Q
    active = set(cfg.active())
    for delta in range(1, 2 * Q + 1):
        ks = [k for k in range(1, 2 * Q // delta + 1) if delta * k in active]
        for k1 in ks:
            for k2 in ks:
                if math.gcd(k1, k2) == 1:
                    yield delta, k1, k2


def U_transformed(cfg: DispersionConfig) -> complex:
    """Exact gcd-reindexed U: the m-sum over ``(m, q1 q2) = 1`` is evaluated
    exactly rather than by its Poisson main term."""
    psums = PsiSums(cfg.cutoff, cfg.M)
    S = _coprime_sums(cfg)
    terms = []
    for delta, k1, k2 in _delta_pairs(cfg):
        q1, q2 = delta * k1, delta * k2
        terms.append(cfg.weight(q1) * np.conj(cfg.weight(q2)) / (euler_phi(q1) * euler_phi(q2))
                     * S[q1] * np.conj(S[q2]) * psums.coprime(delta * k1 * k2))
    return _csum(np.array(terms, dtype=np.complex128))


def U_main_term(cfg: DispersionConfig) -> complex:
    """``psi^(0) M sum_delta 1/(delta phi(delta)) sum c c' / (k1 k2) S S'``."""
    S = _coprime_sums(cfg)
    terms = []
    for delta, k1, k2 in _delta_pairs(cfg):
        q1, q2 = delta * k1, delta * k2
        terms.append(cfg.weight(q1) * np.conj(cfg.weight(q2)) / (delta * euler_phi(delta) * k1 * k2)
                     * S[q1] * np.conj(S[q2]))
    return cfg.cutoff.hat0 * cfg.M * _csum(np.array(terms, dtype=np.complex128))


def V_transformed(cfg: DispersionConfig) -> complex:
    """V through the expanded form: the m-sum with ``m = a n1^-1 (q1)`` and
    ``(m, q2) = 1`` is resolved by Moebius over ``d | q2``, ``(d, q1) = 1``,
    with the class ``lambda_0 mod d q1`` found by CRT."""
    psums = PsiSums(cfg.cutoff, cfg.M)
    beta = cfg.beta
    S = _coprime_sums(cfg)
    terms = []
    for q1 in cfg.active():
        B1 = residue_sums(beta.values, beta.first, q1)
        inv1 = _cached_inverse_table(q1)
        units = np.flatnonzero(inv1 >= 0)
        targets = (cfg.a * inv1[units]) % q1  # a n1^-1 for each unit class n1
        for q2 in cfg.active():
            inner = np.zeros(units.size)
            for d in divisors(q2):
                mu = moebius(d)
                if mu == 0 or math.gcd(d, q1) != 1:
                    continue
                L = d * q1
                # lambda_0 = target (q1), 0 (d)
                lam0 = (targets * d * mod_inverse(d, q1)) % L if q1 > 1 else np.zeros_like(targets)
                inner += mu * psums.progression(L)[lam0]
            terms.append(cfg.weight(q1) * np.conj(cfg.weight(q2)) / euler_phi(q2)
                         * np.conj(S[q2]) * np.sum(B1[units] * inner))
    return _csum(np.array(terms, dtype=np.complex128))


def W_transformed(cfg: DispersionConfig) -> tuple[complex, dict[int, complex]]:
    """W through the congruence reduction: for each ``(q1, q2, n1, n2)`` the
    m-sum is ``sum_{m = m0 (l)} psi(m/M)``. Also returns the contributions
    grouped by ``max(d, d1, delta, delta1, delta2)``."""
    psums = PsiSums(cfg.cutoff, cfg.M)
    beta = cfg.beta
    ns = beta.ns
    n1, n2 = np.meshgrid(ns, ns, indexing="ij")
    bb = np.outer(beta.values, np.conj(beta.values))
    d = np.gcd(n1, n2)
    nu1 = n1 // d
    d1 = np.ones_like(nu1)
    g = np.gcd(nu1, d)
    while np.any(g > 1):
        d1 *= g
        nu1 //= g
        g = np.gcd(nu1, d)
    pair_level = np.maximum(d, d1)
    by_level: dict[int, list[complex]] = {}
    for q1 in cfg.active():
        for q2 in cfg.active():
            ok, ell, m0 = reduce_congruence_batch(n1, n2, q1, q2, cfg.a)
            if not ok.any():
                continue
            delta, delta1, delta2 = _moduli_plan(q1, q2)[:3]
            weight = cfg.weight(q1) * np.conj(cfg.weight(q2))
            contrib = weight * bb[ok] * psums.progression(ell)[m0[ok]]
            level = np.maximum(pair_level[ok], max(delta, delta1, delta2))
            for lvl in np.unique(level).tolist():
                by_level.setdefault(lvl, []).append(_csum(contrib[level == lvl]))
    grouped = {k: _csum(np.array(v)) for k, v in sorted(by_level.items())}
    total = _csum(np.array(list(grouped.values()), dtype=np.complex128)) if grouped else 0j
    return total, grouped


def W_main_term(cfg: DispersionConfig) -> complex:
    """Fourier main term of W: ``psi^(0) M sum c c' / l sum_{solvable} beta beta'``,
    evaluated in the delta/alpha grouped form."""
    beta = cfg.beta
    ns = beta.ns
    terms = []
    cache: dict[tuple[int, int], np.ndarray] = {}

    def classes(delta: int, k: int) -> np.ndarray:
        # sum over n = alpha (delta), (n, delta k) = 1, for each unit alpha
        key = (delta, k)
        if key not in cache:
            vals = np.where(np.gcd(ns, delta * k) == 1, beta.values, 0)
            cache[key] = residue_sums(vals, beta.first, delta)[unit_mask(delta)]
        return cache[key]

    for delta, k1, k2 in _delta_pairs(cfg):
        q1, q2 = delta * k1, delta * k2
        s = np.sum(classes(delta, k1) * np.conj(classes(delta, k2)))
        terms.append(cfg.weight(q1) * np.conj(cfg.weight(q2)) / (delta * k1 * k2) * s)
    return cfg.cutoff.hat0 * cfg.M * _csum(np.array(terms, dtype=np.complex128))


def main_term_T(cfg: DispersionConfig) -> tuple[complex, float]:
    """``T`` from the twisted discrepancies ``E*``, and the bound ``M Q^-1 calE*``."""
    beta = cfg.beta
    ns = beta.ns
    cache: dict[tuple[int, int], np.ndarray] = {}

    def estar(delta: int, k: int) -> np.ndarray:
        key = (delta, k)
        if key not in cache:
            vals = beta.values if k == 1 else np.where(np.gcd(ns, k) == 1, beta.values, 0)
            cache[key] = E_star_all(vals, beta.first, delta)
        return cache[key]

    terms = []
    for delta, k1, k2 in _delta_pairs(cfg):
        if delta == 1:
            continue  # E*(beta, 1, 1; k) = 0
        q1, q2 = delta * k1, delta * k2
        s = np.sum(estar(delta, k1) * np.conj(estar(delta, k2)))
        terms.append(cfg.weight(q1) * np.conj(cfg.weight(q2)) / (delta * k1 * k2) * s)
    T = cfg.cutoff.hat0 * cfg.M * _csum(np.array(terms, dtype=np.complex128))
    bound = cfg.M / cfg.Q * calE_star(beta, cfg.Q)
    return T, bound


def main_term_T_prime(cfg: DispersionConfig) -> complex:
    """Single-delta form of T when ``c`` lives on primes:
    ``M psi^(0) sum_{delta prime} |c_delta|^2 / delta sum_{delta'} |E*(beta, delta, delta'; 1)|^2``."""
    total = []
    for q in cfg.active():
        if is_prime(q):
            e = E_star_all(cfg.beta.values, cfg.beta.first, q)
            total.append(abs(cfg.weight(q)) ** 2 / q * float(np.sum(np.abs(e) ** 2)))
    return cfg.cutoff.hat0 * cfg.M * math.fsum(total)


def W_truncated(cfg: DispersionConfig, D: int, kappa: float = 0.0,
                parts: DispersionParts | None = None) -> tuple[complex, float, float]:
    """``(W(Q, D), |W - W(Q, D)|, L^kappa D^-1/2 M N^2)``."""
    if D < 1:
        raise ValueError("D must be >= 1")
    if parts is None or parts.W_by_level is None:
        W, grouped = W_transformed(cfg)
    else:
        W, grouped = parts.W_transformed, parts.W_by_level
    trunc = sum((v for lvl, v in grouped.items() if lvl <= D), 0j)
    N = cfg.beta.n_lo
    L = math.log(2 * cfg.M * N)
    return trunc, abs(W - trunc), L**kappa * D**-0.5 * cfg.M * N**2


def dispersion_from_discrepancies(values: np.ndarray) -> np.ndarray:
    """Unimodular ``c_q`` with ``c_q E_q = |E_q|`` (1 where ``E_q = 0``)."""
    values = np.asarray(values, dtype=np.complex128)
    mags = np.abs(values)
    return np.where(mags > 0, np.conj(values) / np.where(mags > 0, mags, 1), 1.0)

"""Frequency-vector arithmetic.

Finite-range Diophantine certificates, super-Liouville vectors with exact
witnesses, best approximations of a frequency pair, and the resonance
sequences ``(k_j, s_j)`` with ``<omega~(s_j), k_j> = 0`` that drive the
diffusion constructions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath
import numpy as np
from mpmath import mp, mpf

from .numerics import (
    CapacityError,
    LogAmplitude,
    PrecisionError,
    from_decimal,
    mpf_to_fraction,
    precision,
    to_decimal,
    to_mpf,
)

IntVec = tuple[int, ...]

# Largest tower exponent we materialise as an integer (2**a_m must fit in memory
# only as an exponent, never as a number).
EXPONENT_BITS_CAP = 62


class ResonantFrequencyError(ValueError):
    """The frequency data is resonant where a non-resonant one is required."""


def sup_norm(k: Sequence[int]) -> int:
    return max((abs(int(c)) for c in k), default=0)


def dot(k: Sequence[int], omega: Sequence[mpf]) -> mpf:
    return mpmath.fsum(int(c) * w for c, w in zip(k, omega))


def _tie_key(k: Sequence[int]):
    return sup_norm(k), tuple(k)


def _representative(k: Sequence[int]) -> IntVec:
    """Lexicographically smaller of k and -k."""
    k = tuple(int(c) for c in k)
    neg = tuple(-c for c in k)
    return min(k, neg)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LiouvilleWitness:
    index: int
    k_bar: IntVec
    inner_log: mpf
    sign: int = 1

    @property
    def ratio(self) -> mpf:
        return self.inner_log / sup_norm(self.k_bar)

    @property
    def inner(self) -> LogAmplitude:
        return LogAmplitude(self.sign, self.inner_log)

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "k_bar": list(self.k_bar),
            "inner_log": to_decimal(self.inner_log),
            "sign": self.sign,
            "ratio": to_decimal(self.ratio),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LiouvilleWitness":
        return cls(int(data["index"]), tuple(int(c) for c in data["k_bar"]),
                   from_decimal(data["inner_log"]), int(data.get("sign", 1)))


@dataclass
class FrequencyVector:
    """Base frequency with arithmetic classification metadata."""

    components: tuple[mpf, ...]
    precision: int = field(default_factory=lambda: mp.prec)
    class_tag: str = "unknown"
    tag_params: dict = field(default_factory=dict)
    witnesses: tuple[LiouvilleWitness, ...] = ()

    def __post_init__(self):
        self.components = tuple(to_mpf(c) for c in self.components)
        if len(self.components) < 2:
            raise ValueError("a frequency vector needs at least two components")
        if self.class_tag not in ("unknown", "diophantine_checked", "liouville_constructed"):
            raise ValueError(f"unknown class tag {self.class_tag!r}")
        if self.class_tag == "liouville_constructed" and not self.witnesses:
            raise ValueError("liouville_constructed vectors carry at least one witness")

    @property
    def d(self) -> int:
        return len(self.components)

    def __len__(self) -> int:
        return self.d

    def __getitem__(self, i):
        return self.components[i]

    @property
    def tilde(self) -> tuple[mpf, ...]:
        return self.components[:-1]

    def witness_for(self, k: Sequence[int]) -> LiouvilleWitness | None:
        k = tuple(int(c) for c in k)
        neg = tuple(-c for c in k)
        for w in self.witnesses:
            if w.k_bar == k:
                return w
            if w.k_bar == neg:
                return LiouvilleWitness(w.index, neg, w.inner_log, -w.sign)
        return None

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "precision": self.precision,
            "components": [to_decimal(c) for c in self.components],
            "class_tag": self.class_tag,
            "tag_params": {k: to_decimal(v) if isinstance(v, mpf) else v for k, v in self.tag_params.items()},
            "witnesses": [w.to_json() for w in self.witnesses],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FrequencyVector":
        prec = int(data.get("precision", mp.prec))
        with precision(max(prec, mp.prec)):
            comps = tuple(from_decimal(c) for c in data["components"])
        if "d" in data and int(data["d"]) != len(comps):
            raise ValueError("dimension field does not match the component list")
        return cls(
            comps,
            precision=prec,
            class_tag=data.get("class_tag", "unknown"),
            tag_params=dict(data.get("tag_params", {})),
            witnesses=tuple(LiouvilleWitness.from_json(w) for w in data.get("witnesses", [])),
        )


@dataclass(frozen=True)
class ResonancePair:
    """One resonance ``<omega~(s), k> = 0`` (or a Liouville witness for constant maps)."""

    k: IntVec
    s: mpf | None
    residual_log: mpf
    s_exact: Fraction | None = None
    inner: LogAmplitude | None = None

    @property
    def norm(self) -> int:
        return sup_norm(self.k)

    def to_json(self) -> dict:
        out = {"k": list(self.k), "s": None if self.s is None else to_decimal(self.s),
               "residual_log": to_decimal(self.residual_log)}
        if self.s_exact is not None:
            out["s_exact"] = f"{self.s_exact.numerator}/{self.s_exact.denominator}"
        if self.inner is not None:
            out["inner"] = self.inner.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ResonancePair":
        s_exact = Fraction(data["s_exact"]) if data.get("s_exact") else None
        return cls(
            tuple(int(c) for c in data["k"]),
            None if data.get("s") is None else from_decimal(data["s"]),
            from_decimal(data.get("residual_log", "-inf")),
            s_exact,
            LogAmplitude.from_json(data["inner"]) if data.get("inner") else None,
        )


@dataclass
class ResonanceSequence:
    pairs: list[ResonancePair]
    requested: int
    shortfall: int = 0
    reason: str = ""

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    @property
    def complete(self) -> bool:
        return self.shortfall == 0


# ---------------------------------------------------------------------------
# Diophantine certificates on finite ranges
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiophantineCertificate:
    passed: bool
    worst_k: IntVec
    worst_value: mpf
    worst_lower: mpf
    K: int
    tau: mpf
    gamma: mpf


def _half_box(d: int, K: int) -> np.ndarray:
    """Integer vectors with 0 < |k| <= K, one of each pair {k, -k} (the lexicographically smaller)."""
    axes = [np.arange(-K, K + 1, dtype=np.int64)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    nz = grid != 0
    first = np.argmax(nz, axis=1)
    lead = grid[np.arange(len(grid)), first]
    return grid[lead < 0]


def _enclosure(k: Sequence[int], omega: Sequence[mpf], tau: mpf) -> tuple[mpf, mpf]:
    """Interval bounds on |<omega, k>| |k|^tau at working precision plus guard bits."""
    iv = mpmath.iv
    saved, iv.prec = iv.prec, mp.prec + 16
    try:
        dot_ = iv.mpf(0)
        for c, wc in zip(k, omega):
            dot_ += c * iv.mpf(wc)
        enc = abs(dot_) * iv.mpf(sup_norm(k)) ** iv.mpf(tau)
        with precision(mp.prec + 16):
            return mpf(enc.a), mpf(enc.b)
    finally:
        iv.prec = saved


def _scan_min(omega: Sequence[mpf], K: int, tau: mpf, ks: np.ndarray | None = None):
    """Rigorous minimum of |<omega,k>| |k|^tau over the box; returns (k, value, lower, upper)."""
    d = len(omega)
    if ks is None:
        ks = _half_box(d, K)
    w = np.array([float(c) for c in omega])
    werr = np.array([float(abs(to_mpf(c) - mpf(float(c)))) for c in omega])
    absk = np.abs(ks).astype(float)
    dots = np.abs(ks @ w)
    scale = absk @ np.abs(w)
    u = 2.0**-52
    err = (d + 2) * u * scale + absk @ werr + 1e-300
    norms = absk.max(axis=1)
    npow = norms ** float(tau)
    lower = np.maximum(dots - err, 0.0) * npow * (1 - 8 * u)
    upper = (dots + err) * npow * (1 + 8 * u)
    cand = np.nonzero(lower <= upper.min())[0]

    best = None
    for idx in cand:
        k = tuple(int(c) for c in ks[idx])
        lo_v, hi_v = _enclosure(k, omega, tau)
        mid = (lo_v + hi_v) / 2
        key = (mid, _tie_key(k))
        if best is None or key < best[0]:
            best = (key, k, mid, lo_v, hi_v)
    assert best is not None
    return best[1], best[2], best[3], best[4], cand, ks


def diophantine_check(omega: FrequencyVector | Sequence, K: int, tau, gamma) -> DiophantineCertificate:
    """Certify ``|<omega,k>| >= gamma/|k|^tau`` for every ``0 < |k| <= K``.

    The minimiser of ``|<omega,k>| |k|^tau`` is returned with ties resolved
    by smallest norm, then lexicographically.  Float screening is followed by
    interval re-evaluation of every vector that could be the minimum.
    """
    tau, gamma = to_mpf(tau), to_mpf(gamma)
    if K < 1 or tau <= 0 or gamma <= 0:
        raise ValueError("need K >= 1, tau > 0, gamma > 0")
    comps = omega.components if isinstance(omega, FrequencyVector) else tuple(to_mpf(c) for c in omega)
    prec = omega.precision if isinstance(omega, FrequencyVector) else mp.prec
    needed = 2 * math.log2(max(K ** float(tau) / float(gamma), 2.0))
    if prec < needed:
        raise PrecisionError(f"{prec} bits < required {needed:.0f} bits for K={K}, tau={tau}", int(needed) + 1)

    k, value, lo, hi, cand, ks = _scan_min(comps, K, tau)
    # The overall minimum lies within [min lower, min upper] of the candidate set.
    min_lo = lo
    for idx in cand:
        kk = tuple(int(c) for c in ks[idx])
        if kk == k:
            continue
        min_lo = min(min_lo, _enclosure(kk, comps, tau)[0])
    if min_lo >= gamma:
        passed = True
    elif hi < gamma:
        passed = False
    else:
        raise PrecisionError(
            f"enclosure [{mpmath.nstr(lo, 8)}, {mpmath.nstr(hi, 8)}] straddles gamma={mpmath.nstr(gamma, 8)}",
            mp.prec * 2,
        )
    cert = DiophantineCertificate(passed, k, value, min_lo, K, tau, gamma)
    if passed and isinstance(omega, FrequencyVector) and omega.class_tag == "unknown":
        omega.class_tag = "diophantine_checked"
        omega.tag_params = {"K": K, "tau": to_decimal(tau), "gamma": to_decimal(gamma)}
    return cert


def diophantine_constant(omega: Sequence[mpf], K: int, tau) -> tuple[IntVec, mpf]:
    """Largest certified gamma with ``omega`` in the finite-range class; (worst k, gamma)."""
    k, value, lo, hi, cand, ks = _scan_min(tuple(to_mpf(c) for c in omega), K, to_mpf(tau))
    return k, lo


# ---------------------------------------------------------------------------
# Super-Liouville construction
# ---------------------------------------------------------------------------


def default_tower_step(m: int, a_m: int) -> int:
    """a_{m+1} = m * 2**a_m."""
    if a_m > EXPONENT_BITS_CAP:
        raise CapacityError(f"tower exponent 2**{a_m} is not representable")
    return m * (1 << a_m)


def tower_exponents(count: int, step: Callable[[int, int], int] = default_tower_step, a1: int = 2) -> list[int]:
    exps = [a1]
    while len(exps) < count:
        exps.append(int(step(len(exps), exps[-1])))
        if exps[-1] <= exps[-2]:
            raise ValueError("tower exponents must increase")
    return exps


_FILLER_PRIMES = (3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def construct_superliouville(
    d: int,
    depth: int,
    step: Callable[[int, int], int] = default_tower_step,
    prec: int | None = None,
) -> tuple[FrequencyVector, list[LiouvilleWitness]]:
    """Build ``omega = (1, alpha, sqrt 3, sqrt 5, ...)`` with ``alpha = sum 2**-a_m``.

    Witness ``m`` is ``k = (-p_m, q_m, 0, ...)`` with ``q_m = 2**a_m`` and
    ``p_m = q_m * sum_{i<=m} 2**-a_i``; its inner product
    ``q_m * sum_{i>m} 2**-a_i`` is evaluated from the exponents, so the log is
    exact even where the numeric components cannot resolve it.
    """
    if d < 3:
        raise ValueError("d >= 3 required")
    if depth < 1:
        raise ResonantFrequencyError("depth 0 leaves the single-term sum alpha = 1/4, which is rational")
    if d - 2 > len(_FILLER_PRIMES):
        raise CapacityError(f"no filler irrationals configured for d = {d}")
    prec = mp.prec if prec is None else prec

    # witnesses m = 1..depth need a_1..a_{depth+1}
    exps = tower_exponents(depth + 1, step)
    try:
        exps_next = tower_exponents(depth + 2, step)[-1]
    except CapacityError:
        exps_next = None

    with precision(prec):
        with precision(prec + 64):
            alpha = mpf(0)
            for a in exps + ([exps_next] if exps_next is not None else []):
                if a <= prec + 64:
                    alpha += mpf(2) ** -a
        alpha = +alpha
        comps = [mpf(1), alpha] + [mpmath.sqrt(p) for p in _FILLER_PRIMES[: d - 2]]

        witnesses = []
        ln2 = mpmath.log(2)
        all_exps = exps + ([exps_next] if exps_next is not None else [])
        for m in range(1, depth + 1):
            a_m, a_next = exps[m - 1], exps[m]
            q = 1 << a_m
            p = sum(1 << (a_m - a_i) for a_i in exps[:m])
            correction = mpf(0)
            for a_i in all_exps[m + 1:]:
                correction += mpf(2) ** (a_next - a_i)
            inner_log = (a_m - a_next) * ln2 + mpmath.log1p(correction)
            k_bar = (-p, q) + (0,) * (d - 3)
            witnesses.append(LiouvilleWitness(m, k_bar, inner_log, 1))

    omega = FrequencyVector(
        tuple(comps),
        precision=prec,
        class_tag="liouville_constructed",
        tag_params={"depth": depth, "exponents": [str(a) for a in exps]},
        witnesses=tuple(witnesses),
    )
    return omega, witnesses


# ---------------------------------------------------------------------------
# Best approximations of a frequency pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirichletResult:
    k: IntVec
    value: mpf
    resonant: bool
    bound_holds: bool


def dirichlet_best(omega2: Sequence, K: int) -> DirichletResult:
    """Minimise ``|<omega', k'>|`` over ``0 < |k'| <= K`` for a pair ``omega'``.

    For each second component the best first component is one of the two
    integers bracketing ``-k2*w2/w1``; exact zeros flag a resonance relation.
    """
    if K < 2:
        raise ValueError("K >= 2 required")
    w1, w2 = (to_mpf(c) for c in omega2)
    if w1 == 0:
        raise ResonantFrequencyError("first component must be non-zero")
    best = None
    with precision(mp.prec + 2 * int(math.log2(K + 1)) + 8):
        for k2 in range(-K, K + 1):
            centre = -k2 * w2 / w1
            lo = int(mpmath.floor(centre))
            for k1 in {lo, lo + 1, -K, K} if k2 else {-1, 1}:
                if abs(k1) > K or (k1 == 0 and k2 == 0):
                    continue
                val = abs(k1 * w1 + k2 * w2)
                key = (val, _tie_key((k1, k2)))
                if best is None or key < best[0]:
                    best = (key, (k1, k2), val)
    k, val = best[1], +best[2]
    C = abs(w1) + abs(w2)
    return DirichletResult(k, val, val == 0, bool(val * sup_norm(k) < C))


def continued_fraction_convergents(x: mpf, max_denominator: int) -> list[tuple[int, int]]:
    """Convergents p/q of x (floor expansion) with q <= max_denominator."""
    out = []
    p_prev, q_prev, p, q = 1, 0, None, None
    y = to_mpf(x)
    a = int(mpmath.floor(y))
    p, q = a, 1
    out.append((p, q))
    p_prev, q_prev = 1, 0
    frac = y - a
    tiny = mpf(2) ** (-(mp.prec - 40))
    while frac > tiny:
        y = 1 / frac
        a = int(mpmath.floor(y))
        frac = y - a
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        if q > max_denominator:
            break
        out.append((p, q))
    return out


# ---------------------------------------------------------------------------
# Resonance sequences
# ---------------------------------------------------------------------------

HAT, BAR, CONST = "hat", "bar", "const"
MAP_VARIANTS = (HAT, BAR, CONST)


def omega_of_s(omega: Sequence[mpf], variant: str, s) -> tuple[mpf, ...]:
    """omega(s) for the hat, bar or constant frequency map."""
    s = to_mpf(s)
    d = len(omega)
    if variant == HAT:
        return (omega[0] + s,) + tuple(omega[1:])
    if variant == BAR:
        return tuple(omega[i] + s ** (i + 1) for i in range(d - 1)) + (omega[-1],)
    if variant == CONST:
        return tuple(omega)
    raise ValueError(f"unknown frequency map {variant!r}")


def _bisect_root(f: Callable[[mpf], mpf], lo: mpf, hi: mpf, tol: mpf, max_iter: int = 2000) -> mpf:
    flo = f(lo)
    if flo == 0:
        return lo
    fhi = f(hi)
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ValueError("bisection bracket does not change sign")
    mid = (lo + hi) / 2
    for _ in range(max_iter):
        mid = (lo + hi) / 2
        fm = f(mid)
        if abs(fm) < tol or mid in (lo, hi):
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return mid


def _quadratic_small_root(a2, a1, a0):
    """Root of a2 s^2 + a1 s + a0 = 0 nearest 0 (ties toward positive); None if disc <= 0."""
    if a2 == 0:
        return None if a1 == 0 else -a0 / a1
    disc = a1 * a1 - 4 * a2 * a0
    if disc <= 0:
        return None
    root = mpmath.sqrt(disc)
    qq = -(a1 + (root if a1 >= 0 else -root)) / 2
    roots = [qq / a2] + ([a0 / qq] if qq != 0 else [])
    roots = [r for r in roots if r != 0]
    if not roots:
        return None
    return min(roots, key=lambda r: (abs(r), -r))


def _exact_small_root(a2: Fraction, a1: Fraction, a0: Fraction) -> Fraction | None:
    """Rational root nearest 0 when the discriminant is a rational square."""
    if a2 == 0:
        return None if a1 == 0 else -a0 / a1
    disc = a1 * a1 - 4 * a2 * a0
    if disc <= 0:
        return None
    num, den = disc.numerator, disc.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn != num or rd * rd != den:
        return None
    r = Fraction(rn, rd)
    roots = [x for x in ((-a1 + r) / (2 * a2), (-a1 - r) / (2 * a2)) if x != 0]
    return min(roots, key=lambda x: (abs(x), -x)) if roots else None


def _residual_log(value: mpf) -> mpf:
    return mpf("-inf") if value == 0 else mpmath.log(abs(value))


def solve_resonance(omega: Sequence[mpf], variant: str, k: Sequence[int], tol=None) -> ResonancePair | None:
    """Solve ``<omega~(s), k> = 0`` for the s nearest 0; None when no admissible root exists."""
    omega = tuple(to_mpf(c) for c in omega)
    k = tuple(int(c) for c in k)
    if len(k) != len(omega) - 1:
        raise ValueError("k must live in Z^{d-1}")
    if any(k[2:]):
        raise ValueError("resonance solves use k supported on the first two angles")
    k1, k2 = k[0], k[1]
    c = k1 * omega[0] + k2 * omega[1]
    wt = omega[:-1]
    exact = None
    if variant == HAT:
        if k1 == 0:
            return None
        s = -c / k1
        try:
            fw = [mpf_to_fraction(w) for w in omega[:2]]
            exact = -(k1 * fw[0] + k2 * fw[1]) / k1
        except (ValueError, OverflowError):
            exact = None
        if exact is not None and exact.denominator.bit_length() > 64:
            exact = None
    elif variant == BAR:
        tol = mpf(10) ** -30 if tol is None else to_mpf(tol)
        s0 = _quadratic_small_root(mpf(k2), mpf(k1), c)
        if s0 is None:
            return None
        fw = [mpf_to_fraction(w) for w in omega[:2]]
        exact = _exact_small_root(Fraction(k2), Fraction(k1), k1 * fw[0] + k2 * fw[1])
        if exact is not None and exact.denominator.bit_length() > 64:
            exact = None

        def f(x):
            return k2 * x * x + k1 * x + c

        h = max(abs(s0) * mpf(2) ** -40, mpf(2) ** -(mp.prec - 8))
        try:
            s = _bisect_root(f, s0 - h, s0 + h, tol)
        except ValueError:
            s = s0
    else:
        raise ValueError("resonance solves apply to the hat and bar maps")
    if s == 0:
        return None
    if exact is not None:
        s = to_mpf(exact)
    resid = dot(k, omega_of_s(omega, variant, s)[:-1]) if exact is None else mpf(0)
    return ResonancePair(k, s, _residual_log(resid), exact)


def resonance_relation(omega2: Sequence, K: int = 64) -> IntVec | None:
    """Integer relation m with <m, omega'> = 0 and first component positive, if |m| <= K."""
    res = dirichlet_best(omega2, K)
    if not res.resonant:
        return None
    m = res.k
    return tuple(-c for c in m) if m[0] < 0 or (m[0] == 0 and m[1] < 0) else m


def resonance_sequence(
    omega: FrequencyVector,
    map_variant: str,
    count: int,
    growth: float = 2.0,
    tau_opt=None,
    min_norm: int = 1,
    max_norm: int = 10**12,
    tol=None,
    relation_search: int = 64,
    start_index: int = 2,
) -> ResonanceSequence:
    """Build ``count`` resonance pairs with ``|k_{j+1}| >= growth |k_j|`` and ``|s_j|`` decreasing.

    hat/bar maps use continued-fraction best approximations of
    ``(omega_1, omega_2)`` (or, for a resonant pair, ``k = (a m_1 + 1, a m_2)``);
    the constant map takes a gapped subsequence of the vector's Liouville
    witnesses starting at witness ``start_index``, leaving s free.
    """
    if count < 1:
        raise ValueError("count >= 1 required")
    comps = omega.components
    d = len(comps)
    pairs: list[ResonancePair] = []

    def admit(pair: ResonancePair) -> bool:
        if pairs:
            last = pairs[-1]
            if pair.norm < growth * last.norm:
                return False
            if pair.s is not None and last.s is not None and not abs(pair.s) < abs(last.s):
                return False
        return True

    if map_variant == CONST:
        if not omega.witnesses:
            raise ValueError("the constant map needs Liouville witnesses")
        for w in omega.witnesses:
            if w.index < start_index or sup_norm(w.k_bar) < min_norm:
                continue
            pair = ResonancePair(w.k_bar, None, w.inner_log, None, w.inner)
            if admit(pair):
                pairs.append(pair)
            if len(pairs) == count:
                break
        short = count - len(pairs)
        return ResonanceSequence(pairs, count, short, "witness list exhausted" if short else "")

    if map_variant not in (HAT, BAR):
        raise ValueError(f"unknown frequency map {map_variant!r}")
    if tau_opt is not None and map_variant != HAT:
        raise ValueError("the exponent constraint applies to the hat map only")

    pad = (0,) * (d - 3)
    relation = resonance_relation(comps[:2], relation_search)
    if relation is not None:
        m1, m2 = relation
        a = 1
        while len(pairs) < count:
            k = (a * m1 + 1, a * m2) + pad
            if sup_norm(k) > max_norm:
                break
            if sup_norm(k) >= min_norm:
                pair = solve_resonance(comps, map_variant, k, tol)
                if pair is not None and admit(pair):
                    pairs.append(pair)
            a += 1
        short = count - len(pairs)
        return ResonanceSequence(pairs, count, short, "norm bound reached" if short else "")

    with precision(mp.prec + 32):
        convergents = continued_fraction_convergents(-comps[1] / comps[0], max_norm)
    tau = None if tau_opt is None else to_mpf(tau_opt)
    for p, q in convergents:
        k = (p, q) + pad
        if sup_norm(k) < min_norm or sup_norm(k) > max_norm:
            continue
        pair = solve_resonance(comps, map_variant, k, tol)
        if pair is None:
            continue
        if tau is not None and not sup_norm(k) < abs(pair.s) ** (-1 / (tau + 1)):
            continue
        if admit(pair):
            pairs.append(pair)
        if len(pairs) == count:
            break
    short = count - len(pairs)
    return ResonanceSequence(pairs, count, short, "growth gap not met within the search bound" if short else "")


# ---------------------------------------------------------------------------
# Diophantine extension of a (d-1)-vector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtensionCandidate:
    omega_d: mpf
    gamma: mpf
    worst_k: IntVec


def extend_frequency(
    omega_tilde: FrequencyVector | Sequence,
    tau,
    K: int,
    samples: int,
    interval: tuple = (1, 2),
    seed: int = 0,
) -> list[ExtensionCandidate]:
    """Sample ``omega_d`` on ``interval`` and keep the values that extend ``omega_tilde``.

    Each kept candidate carries the largest gamma certified on ``|k| <= K``;
    results are sorted by gamma, largest first.  Samples come from a seeded
    Philox stream.
    """
    comps = omega_tilde.components if isinstance(omega_tilde, FrequencyVector) else tuple(to_mpf(c) for c in omega_tilde)
    tau = to_mpf(tau)
    _, base_gamma = diophantine_constant(comps, K, tau)
    if base_gamma <= 0:
        raise ResonantFrequencyError("omega_tilde fails every Diophantine bound on the range")
    if samples <= 0:
        return []
    lo, hi = (to_mpf(x) for x in interval)
    rng = np.random.Generator(np.random.Philox(seed))
    ks = _half_box(len(comps) + 1, K)
    out = []
    for u in rng.random(samples):
        omega_d = lo + (hi - lo) * mpf(float(u))
        k, value, lo_v, hi_v, cand, _ = _scan_min(comps + (omega_d,), K, tau, ks)
        lower = lo_v
        for idx in cand:
            kk = tuple(int(c) for c in ks[idx])
            lower = min(lower, _enclosure(kk, comps + (omega_d,), tau)[0])
        if lower > 0:
            out.append(ExtensionCandidate(omega_d, lower, k))
    out.sort(key=lambda c: c.gamma, reverse=True)
    return out


def sqrt_vector(*radicands: int, prec: int | None = None) -> FrequencyVector:
    """Convenience: a frequency vector of square roots, e.g. sqrt_vector(1, 2, 3)."""
    with precision(prec or mp.prec):
        return FrequencyVector(tuple(mpmath.sqrt(r) for r in radicands), precision=prec or mp.prec)


def parse_component(text: str) -> mpf:
    """Decimal string or ``sqrt(N)`` / ``-sqrt(N)`` / ``p/q``."""
    t = text.strip().replace(" ", "")
    neg = t.startswith("-")
    body = t[1:] if neg else t
    if body.startswith("sqrt(") and body.endswith(")"):
        val = mpmath.sqrt(int(body[5:-1]))
    elif "/" in body:
        num, den = body.split("/")
        val = mpf(int(num)) / int(den)
    else:
        val = from_decimal(body)
    return -val if neg else val


def frequency_from_strings(items: Iterable[str]) -> FrequencyVector:
    return FrequencyVector(tuple(parse_component(s) for s in items))


__all__ = [
    "FrequencyVector", "LiouvilleWitness", "ResonancePair", "ResonanceSequence",
    "DiophantineCertificate", "DirichletResult", "ExtensionCandidate",
    "diophantine_check", "diophantine_constant", "construct_superliouville", "dirichlet_best",
    "resonance_sequence", "solve_resonance", "extend_frequency", "omega_of_s",
    "continued_fraction_convergents", "resonance_relation", "ResonantFrequencyError",
    "HAT", "BAR", "CONST", "sup_norm", "dot", "sqrt_vector", "parse_component",
    "frequency_from_strings", "tower_exponents", "default_tower_step",
]

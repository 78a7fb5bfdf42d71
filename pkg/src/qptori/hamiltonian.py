"""Truncated Hamiltonian families and their evaluation.

A family is

    H_n(theta, r) = <omega(s), r> - sum_{j=2..n} phi_j(s) sin(2 pi <k_j, theta~>),   s = r_d,

with a frequency map ``omega(s)`` (hat, bar or constant) and one of seven
coupling schedules ``phi_j``.  Amplitudes are handled as
:class:`~qptori.numerics.LogAmplitude` so that scales like ``exp(-n^2 |k_n|)``
never underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import mpmath
from mpmath import mp, mpf

from .arithmetic import BAR, CONST, HAT, FrequencyVector, ResonancePair, dot, omega_of_s, sup_norm
from .numerics import LogAmplitude, from_decimal, to_decimal, to_mpf
from .state import PhaseState

VARIANTS = ("i", "ii", "iii", "iv", "v", "vi", "vii")
# Schedules whose amplitude carries the factor <omega~, k_j>.
INNER_VARIANTS = ("v", "vi", "vii")
FAMILY_VERSION = "family-v1"
DEFAULT_TOLERANCE = mpf(10) ** -30


class DivergentBoundError(ArithmeticError):
    """A tail-bound summand fails to decrease; the k-growth is too slow for the domain."""


class NoCandidateError(ValueError):
    """No candidate wave vector meets the requested closeness."""

    def __init__(self, message: str, required_log_norm: mpf | None = None):
        super().__init__(message)
        self.required_log_norm = required_log_norm


# ---------------------------------------------------------------------------
# Frequency maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyMap:
    variant: str
    base: FrequencyVector

    def __post_init__(self):
        if self.variant not in (HAT, BAR, CONST):
            raise ValueError(f"unknown frequency map {self.variant!r}")

    @property
    def d(self) -> int:
        return self.base.d

    def eval(self, s) -> tuple[mpf, ...]:
        return omega_of_s(self.base.components, self.variant, s)

    def deriv(self, s) -> tuple[mpf, ...]:
        s = to_mpf(s)
        d = self.d
        if self.variant == HAT:
            return (mpf(1),) + (mpf(0),) * (d - 1)
        if self.variant == BAR:
            return tuple((i + 1) * s**i for i in range(d - 1)) + (mpf(0),)
        return (mpf(0),) * d

    def second_deriv(self, s) -> tuple[mpf, ...]:
        s = to_mpf(s)
        d = self.d
        if self.variant == BAR:
            return tuple((i + 1) * i * s ** (i - 1) if i else mpf(0) for i in range(d - 1)) + (mpf(0),)
        return (mpf(0),) * d

    def inner_poly(self, k: Sequence[int]) -> list[mpf]:
        """Coefficients c_m of <k, omega~(s)> = sum_m c_m s^m."""
        base = self.base.components
        c = [dot(k, base[:-1])]
        if self.variant == HAT:
            c.append(mpf(k[0]))
        elif self.variant == BAR:
            c.extend(mpf(ki) for ki in k)
        return c


# ---------------------------------------------------------------------------
# Coupling schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingSchedule:
    """phi_j(s) for one of the seven variants.

    ``C`` parametrises variant ii and ``l`` variant vi.  Variants v-vii take
    ``beta = <omega~, k_j>`` as a LogAmplitude.
    """

    variant: str
    C: mpf | None = None
    l: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown schedule variant {self.variant!r}")
        if self.variant == "ii":
            if self.C is None or to_mpf(self.C) <= 0:
                raise ValueError("variant ii needs C > 0")
            object.__setattr__(self, "C", to_mpf(self.C))
        if self.variant == "vi":
            if self.l is None or int(self.l) < 0:
                raise ValueError("variant vi needs an integer l >= 0")
            object.__setattr__(self, "l", int(self.l))

    @property
    def uses_inner(self) -> bool:
        return self.variant in INNER_VARIANTS

    def _exponent(self, j: int, knorm: int, s: mpf) -> mpf:
        """log of the non-polynomial factor of phi_j (without beta)."""
        v = self.variant
        if v in ("i", "iii", "iv"):
            return mpf(-j * knorm)
        if v == "ii":
            return -self.C / 2 * knorm
        if v == "v":
            return knorm * s
        if v == "vi":
            return -(self.l + 1) * mpmath.log(knorm) - 2 * mpmath.log(j)
        return knorm * s * s

    def _power(self, j: int) -> int:
        return 2 if self.variant == "iv" else j

    def reduced(self, j: int, knorm: int, s) -> LogAmplitude:
        """phi_j / beta for v-vii, phi_j otherwise."""
        s = to_mpf(s)
        return LogAmplitude.from_value(s) ** self._power(j) * LogAmplitude.from_log(self._exponent(j, knorm, s))

    def reduced_deriv(self, j: int, knorm: int, s) -> LogAmplitude:
        """d/ds of :meth:`reduced`."""
        s = to_mpf(s)
        p = self._power(j)
        e = LogAmplitude.from_log(self._exponent(j, knorm, s))
        base = LogAmplitude.from_value(p) * LogAmplitude.from_value(s) ** (p - 1) if p else LogAmplitude.zero()
        if self.variant == "v":
            return (base + LogAmplitude.from_value(knorm) * LogAmplitude.from_value(s) ** p) * e
        if self.variant == "vii":
            return (base + LogAmplitude.from_value(2 * knorm) * LogAmplitude.from_value(s) ** (p + 1)) * e
        return base * e

    def reduced_deriv2(self, j: int, knorm: int, s) -> mpf:
        """Second s-derivative of :meth:`reduced` (plain value)."""
        s = to_mpf(s)
        p = self._power(j)
        e = mpmath.exp(self._exponent(j, knorm, s))
        poly = p * (p - 1) * s ** (p - 2) if p >= 2 else mpf(0)
        if self.variant == "v":
            K = knorm
            return e * (poly + 2 * K * p * s ** (p - 1) + K * K * s**p)
        if self.variant == "vii":
            K = knorm
            # f = s^p e^{K s^2}: f'' = e [p(p-1)s^{p-2} + 2K(2p+1)s^p + 4K^2 s^{p+2}]
            return e * (poly + 2 * K * (2 * p + 1) * s**p + 4 * K * K * s ** (p + 2))
        return e * poly

    def phi(self, j: int, knorm: int, s, beta: LogAmplitude | None = None) -> LogAmplitude:
        amp = self.reduced(j, knorm, s)
        return amp * self._beta(beta) if self.uses_inner else amp

    def dphi(self, j: int, knorm: int, s, beta: LogAmplitude | None = None) -> LogAmplitude:
        amp = self.reduced_deriv(j, knorm, s)
        return amp * self._beta(beta) if self.uses_inner else amp

    def _beta(self, beta):
        if beta is None:
            raise ValueError(f"variant {self.variant} needs <omega~, k_j>")
        return beta

    def series(self, j: int, knorm: int, order: int) -> list[mpf]:
        """Taylor coefficients in s of :meth:`reduced` up to s^order."""
        out = [mpf(0)] * (order + 1)
        p = self._power(j)
        v = self.variant
        if v in ("i", "ii", "iii", "iv", "vi"):
            if p <= order:
                out[p] = mpmath.exp(self._exponent(j, knorm, mpf(0)))
            return out
        step = 1 if v == "v" else 2
        m = 0
        while p + step * m <= order:
            out[p + step * m] = mpf(knorm) ** m / mpmath.factorial(m)
            m += 1
        return out

    def sup_abs(self, j: int, knorm: int, radius: mpf, beta: LogAmplitude | None) -> LogAmplitude:
        """Upper bound of |phi_j(s)| over complex |s| <= radius."""
        R = to_mpf(radius)
        p = self._power(j)
        v = self.variant
        if v == "v":
            log_e = knorm * R
        elif v == "vii":
            log_e = knorm * R * R
        else:
            log_e = self._exponent(j, knorm, mpf(0))
        amp = LogAmplitude.from_value(R) ** p * LogAmplitude.from_log(log_e)
        return amp * abs(self._beta(beta)) if self.uses_inner else amp

    def to_json(self) -> dict:
        out = {"variant": self.variant}
        if self.C is not None:
            out["C"] = to_decimal(self.C)
        if self.l is not None:
            out["l"] = self.l
        return out

    @classmethod
    def from_json(cls, data: dict) -> "CouplingSchedule":
        return cls(data["variant"], from_decimal(data["C"]) if "C" in data else None, data.get("l"))


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coupling:
    """One term j of the family, with the data every evaluator needs."""

    j: int
    k: tuple[int, ...]
    knorm: int
    beta: LogAmplitude | None
    exact_inner: bool


@dataclass(frozen=True)
class HamiltonianFamily:
    freq_map: FrequencyMap
    schedule: CouplingSchedule
    pairs: tuple[ResonancePair, ...] = ()
    tolerance: mpf = DEFAULT_TOLERANCE
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.freq_map.d < 3:
            raise ValueError("families need d >= 3")
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "tolerance", to_mpf(self.tolerance))
        for p in self.pairs:
            if len(p.k) != self.d - 1:
                raise ValueError(f"wave vector {p.k} must have d-1 = {self.d - 1} components")
            if not any(p.k):
                raise ValueError("wave vectors must be non-zero")

    @property
    def d(self) -> int:
        return self.freq_map.d

    @property
    def n(self) -> int:
        return len(self.pairs) + 1

    @property
    def omega(self) -> FrequencyVector:
        return self.freq_map.base

    def truncate(self, n: int) -> "HamiltonianFamily":
        if not 1 <= n <= self.n:
            raise ValueError(f"truncation order {n} outside 1..{self.n}")
        return replace(self, pairs=self.pairs[: n - 1])

    def extend(self, pair: ResonancePair) -> "HamiltonianFamily":
        return replace(self, pairs=self.pairs + (pair,))

    def pair(self, j: int) -> ResonancePair:
        if not 2 <= j <= self.n:
            raise IndexError(f"no pair with index {j} (family has 2..{self.n})")
        return self.pairs[j - 2]

    def couplings(self) -> list[Coupling]:
        out = []
        base = self.omega.components[:-1]
        for j, p in enumerate(self.pairs, start=2):
            exact = p.inner is not None and self.freq_map.variant == CONST
            if exact:
                beta = p.inner
            else:
                beta = LogAmplitude.from_value(dot(p.k, base))
            out.append(Coupling(j, p.k, sup_norm(p.k), beta, exact))
        return out

    def inner(self, c: Coupling, s) -> mpf:
        """b_j(s) = <k_j, omega~(s)>, snapped to 0 inside the resonance tolerance."""
        if c.exact_inner:
            return c.beta.value()
        b = dot(c.k, self.freq_map.eval(s)[:-1])
        return mpf(0) if abs(b) < 10 * self.tolerance else b

    def inner_deriv(self, c: Coupling, s) -> mpf:
        return dot(c.k, self.freq_map.deriv(s)[:-1])

    def phi(self, c: Coupling, s) -> LogAmplitude:
        return self.schedule.phi(c.j, c.knorm, s, c.beta)

    def dphi(self, c: Coupling, s) -> LogAmplitude:
        return self.schedule.dphi(c.j, c.knorm, s, c.beta)

    # -- serialisation ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "version": FAMILY_VERSION,
            "map": self.freq_map.variant,
            "schedule": self.schedule.to_json(),
            "omega": self.omega.to_json(),
            "pairs": [p.to_json() for p in self.pairs],
            "tolerance": to_decimal(self.tolerance),
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> "HamiltonianFamily":
        if data.get("version") != FAMILY_VERSION:
            raise ValueError(f"unsupported family version {data.get('version')!r}")
        omega = FrequencyVector.from_json(data["omega"])
        return cls(
            FrequencyMap(data["map"], omega),
            CouplingSchedule.from_json(data["schedule"]),
            tuple(ResonancePair.from_json(p) for p in data["pairs"]),
            from_decimal(data.get("tolerance", "1e-30")),
            dict(data.get("meta", {})),
        )


def build_family(
    omega: FrequencyVector,
    map_variant: str,
    schedule: CouplingSchedule | str,
    pairs: Iterable[ResonancePair],
    tolerance=DEFAULT_TOLERANCE,
    **meta,
) -> HamiltonianFamily:
    if isinstance(schedule, str):
        schedule = CouplingSchedule(schedule)
    return HamiltonianFamily(FrequencyMap(map_variant, omega), schedule, tuple(pairs), tolerance, dict(meta))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def phase(k: Sequence[int], theta: Sequence[mpf]) -> mpf:
    """<k, theta~> reduced mod 1."""
    x = mpmath.fsum(int(c) * t for c, t in zip(k, theta))
    return x - mpmath.floor(x)


def _check_dim(fam: HamiltonianFamily, z: PhaseState):
    if z.d != fam.d:
        raise ValueError(f"state dimension {z.d} does not match family dimension {fam.d}")


def eval_H(fam: HamiltonianFamily, z: PhaseState) -> mpf:
    _check_dim(fam, z)
    s = z.s
    omega = fam.freq_map.eval(s)
    terms = [w * x for w, x in zip(omega, z.r)]
    for c in fam.couplings():
        sn = mpmath.sinpi(2 * phase(c.k, z.theta))
        if sn:
            terms.append(-fam.phi(c, s).value() * sn)
    return mpmath.fsum(terms)


def vector_field(fam: HamiltonianFamily, z: PhaseState) -> tuple[tuple[mpf, ...], tuple[mpf, ...]]:
    """(d theta/dt, d r/dt) = (dH/dr, -dH/dtheta)."""
    _check_dim(fam, z)
    d, s = fam.d, z.s
    omega = fam.freq_map.eval(s)
    domega = fam.freq_map.deriv(s)
    theta_dot = list(omega[:-1])
    last = [omega[-1]] + [domega[i] * z.r[i] for i in range(d - 1)]
    r_terms: list[list[mpf]] = [[] for _ in range(d - 1)]
    for c in fam.couplings():
        a = phase(c.k, z.theta)
        sn, cs = mpmath.sinpi(2 * a), mpmath.cospi(2 * a)
        if sn:
            last.append(-fam.dphi(c, s).value() * sn)
        if cs:
            amp = 2 * mpmath.pi * fam.phi(c, s).value() * cs
            for i, ki in enumerate(c.k):
                if ki:
                    r_terms[i].append(amp * ki)
    theta_dot.append(mpmath.fsum(last))
    r_dot = tuple(mpmath.fsum(t) for t in r_terms) + (mpf(0),)
    return tuple(theta_dot), r_dot


# ---------------------------------------------------------------------------
# Convergence certificates
# ---------------------------------------------------------------------------


def tail_term(fam: HamiltonianFamily, j: int, knorm: int, beta: LogAmplitude | None, delta, rho) -> LogAmplitude:
    """Bound on sup |phi_j(s) sin(2 pi <k_j, theta~>)| over |s| <= delta + rho, |Im theta| < rho."""
    delta, rho = to_mpf(delta), to_mpf(rho)
    amp = fam.schedule.sup_abs(j, knorm, delta + rho, beta)
    return amp * LogAmplitude.from_log(2 * mpmath.pi * fam.d * rho * knorm)


def _check_domain(fam: HamiltonianFamily, delta, rho):
    if delta <= 0 or rho <= 0:
        raise ValueError("need delta > 0 and rho > 0")
    if fam.schedule.variant == "ii":
        limit = fam.schedule.C / (8 * mpmath.pi * fam.d)
        if not rho < limit:
            raise ValueError(f"variant ii needs rho strictly below C/(8 pi d) = {mpmath.nstr(limit, 10)}")


def tail_bound(
    fam: HamiltonianFamily,
    frm: int,
    to: int | float,
    delta,
    rho,
    norm_law: Callable[[int], int] | None = None,
    inner_log_law: Callable[[int], mpf] | None = None,
    max_terms: int = 10_000,
) -> LogAmplitude:
    """Upper bound on ``||H_to - H_frm||`` over the complex domain of width (delta, rho).

    Built pairs supply ``|k_j|`` (and ``<omega~, k_j>`` for v-vii); beyond
    them, and for ``to = inf``, ``norm_law(j)`` (and ``inner_log_law(j)``)
    must be supplied.  A finite tail is a plain sum of term bounds.  An
    infinite tail is closed with the geometric bound of the last term ratio
    once the summands decrease and are negligible against the partial sum;
    if that never happens within ``max_terms``, :class:`DivergentBoundError`
    is raised.
    """
    delta, rho = to_mpf(delta), to_mpf(rho)
    _check_domain(fam, delta, rho)
    if to != math.inf and to < frm:
        raise ValueError("need to >= from")
    if to != math.inf and to == frm:
        return LogAmplitude.zero()
    built = {c.j: c for c in fam.couplings()}

    def term(j: int) -> LogAmplitude:
        if j in built:
            c = built[j]
            return tail_term(fam, j, c.knorm, c.beta, delta, rho)
        if norm_law is None:
            raise ValueError(f"no pair {j} in the family and no norm_law supplied")
        beta = None
        if fam.schedule.uses_inner:
            if inner_log_law is None:
                raise ValueError("variants v-vii need inner_log_law beyond the built pairs")
            beta = LogAmplitude.from_log(inner_log_law(j))
        return tail_term(fam, j, int(norm_law(j)), beta, delta, rho)

    total = LogAmplitude.zero()
    prev = None
    j = max(frm + 1, 2)
    last = to if to != math.inf else None
    eps_log = -mp.prec * mpmath.log(2)
    while last is None or j <= last:
        t = term(j)
        total = total + t
        if last is None:
            decreasing = prev is not None and prev and t.log_mag < prev.log_mag
            if decreasing and t and total and t.log_mag - total.log_mag < eps_log:
                ratio = LogAmplitude.from_log(t.log_mag - prev.log_mag)
                return total + t * ratio / (1 - ratio.value())
            if j - frm > max_terms:
                raise DivergentBoundError("infinite tail did not settle within the term budget")
        prev = t
        j += 1
    return total


def _single_field_bound(fam: HamiltonianFamily, j: int, knorm: int, beta, delta, rho) -> LogAmplitude:
    """Cauchy estimate: C^1 size of one coupling term on the real domain."""
    return tail_term(fam, j, knorm, beta, delta, rho) / rho


def choose_next_k(
    fam: HamiltonianFamily,
    delta,
    horizon,
    candidates: Iterable[ResonancePair | Sequence[int]],
    domain_radius=1,
    rho=mpf("0.01"),
) -> ResonancePair:
    """Smallest-norm candidate whose added coupling moves trajectories by at most ``delta``.

    In both ``H_n`` and ``H_{n+1}`` the angles ``theta~`` and ``s`` evolve
    identically and ``d r~/dt`` does not depend on ``r``, so the action
    divergence over ``[0, horizon]`` is at most the field difference times the
    horizon (the Gronwall bound with zero Lipschitz constant).  The field
    difference is the Cauchy estimate of the new term on the ``rho``-widened
    domain ``|s| <= domain_radius``.
    """
    from .flow import gronwall_bound

    delta = to_mpf(delta) if not (isinstance(delta, float) and math.isinf(delta)) else mpf("inf")
    horizon = horizon if isinstance(horizon, LogAmplitude) else LogAmplitude.from_value(horizon)
    rho = to_mpf(rho)
    last = fam.pairs[-1] if fam.pairs else None
    pool = []
    for cand in candidates:
        pair = cand if isinstance(cand, ResonancePair) else ResonancePair(tuple(int(c) for c in cand), None, mpf("-inf"))
        if len(pair.k) != fam.d - 1:
            raise ValueError("candidate wave vector has the wrong dimension")
        if last is not None and pair.norm <= last.norm:
            continue
        if last is not None and pair.s is not None and last.s is not None and not abs(pair.s) < abs(last.s):
            continue
        pool.append(pair)
    if not pool:
        raise NoCandidateError("no admissible candidates")
    pool.sort(key=lambda p: (p.norm, p.k))
    if mpmath.isinf(delta):
        return pool[0]
    j = fam.n + 1
    base = fam.omega.components[:-1]
    best_log = None
    for pair in pool:
        if fam.schedule.uses_inner:
            beta = pair.inner if pair.inner is not None else LogAmplitude.from_value(dot(pair.k, base))
        else:
            beta = None
        field_bound = _single_field_bound(fam, j, pair.norm, beta, domain_radius, rho)
        moved = gronwall_bound(field_bound, 0, horizon)
        if moved <= LogAmplitude.from_value(delta):
            return pair
        best_log = moved.log_mag
    raise NoCandidateError(
        f"no candidate keeps the divergence below {mpmath.nstr(delta, 5)}; best log-divergence {mpmath.nstr(best_log, 8)}",
        best_log,
    )


__all__ = [
    "FrequencyMap", "CouplingSchedule", "HamiltonianFamily", "Coupling", "build_family",
    "eval_H", "vector_field", "tail_bound", "tail_term", "choose_next_k", "phase",
    "DivergentBoundError", "NoCandidateError", "VARIANTS", "FAMILY_VERSION",
]

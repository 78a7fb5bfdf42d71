"""Canonical maps conjugating H_n to its integrable part, and normal-form data.

With ``b_j(s) = <k_j, omega~(s)>`` and ``psi_j = phi_j / b_j`` the generating
function ``F(theta~, s) = (1/2 pi) sum_j psi_j(s) cos(2 pi <k_j, theta~>)``
defines the explicit symplectic map

    R~ = r~ + d_theta~ F,   Theta_d = theta_d - d_s F,   Theta~ = theta~,   R_d = s,

for which ``H_n = H_0 o Psi_n`` with ``H_0(Theta, R) = <omega(R_d), R>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np
from mpmath import mp, mpf

from .arithmetic import CONST, ResonancePair, sup_norm
from .hamiltonian import Coupling, CouplingSchedule, HamiltonianFamily, build_family, eval_H, phase
from .numerics import MAX_PREC, LogAmplitude, PrecisionError, from_decimal, precision, to_decimal, to_mpf
from .state import PhaseState


class ResonantDenominatorError(ZeroDivisionError):
    """<k_j, omega~(s)> vanishes (to tolerance) at the requested point."""


class UnsupportedVariant(ValueError):
    """The operation is not defined for this coupling schedule."""


# ---------------------------------------------------------------------------
# Canonical map
# ---------------------------------------------------------------------------


def _reduced_amplitudes(fam: HamiltonianFamily, c: Coupling, s: mpf) -> tuple[mpf, mpf]:
    """(psi_j(s), d psi_j / ds)."""
    sch = fam.schedule
    if fam.freq_map.variant == CONST and sch.uses_inner:
        return sch.reduced(c.j, c.knorm, s).value(), sch.reduced_deriv(c.j, c.knorm, s).value()
    b = fam.inner(c, s)
    if b == 0:
        raise ResonantDenominatorError(f"<k_{c.j}, omega~(s)> vanishes at s = {mpmath.nstr(s, 12)}")
    db = fam.inner_deriv(c, s)
    phi, dphi = fam.phi(c, s).value(), fam.dphi(c, s).value()
    return phi / b, (dphi * b - phi * db) / (b * b)


@dataclass(frozen=True)
class CanonicalMap:
    family: HamiltonianFamily
    direction: str = "forward"

    def __post_init__(self):
        if self.direction not in ("forward", "inverse"):
            raise ValueError("direction is 'forward' or 'inverse'")

    @property
    def n(self) -> int:
        return self.family.n

    def inverse(self) -> "CanonicalMap":
        return CanonicalMap(self.family, "inverse" if self.direction == "forward" else "forward")


def generating_corrections(fam: HamiltonianFamily, theta: Sequence[mpf], s) -> tuple[list[mpf], mpf]:
    """(d_theta~ F, d_s F) at (theta~, s)."""
    s = to_mpf(s)
    d = fam.d
    grad = [[] for _ in range(d - 1)]
    ds = []
    for c in fam.couplings():
        psi, dpsi = _reduced_amplitudes(fam, c, s)
        a = phase(c.k, theta)
        sn, cs = mpmath.sinpi(2 * a), mpmath.cospi(2 * a)
        for i, ki in enumerate(c.k):
            if ki and sn:
                grad[i].append(-psi * ki * sn)
        if cs:
            ds.append(dpsi * cs)
    return [mpmath.fsum(g) for g in grad], mpmath.fsum(ds) / (2 * mpmath.pi)


def psi_n(cmap: CanonicalMap | HamiltonianFamily, z: PhaseState) -> PhaseState:
    """Apply the canonical map (or its inverse); both fix theta~ and s, so the inverse is exact."""
    if isinstance(cmap, HamiltonianFamily):
        cmap = CanonicalMap(cmap)
    fam = cmap.family
    if z.d != fam.d:
        raise ValueError("state dimension does not match the family")
    grad, ds = generating_corrections(fam, z.theta, z.s)
    sign = 1 if cmap.direction == "forward" else -1
    r = tuple(z.r[i] + sign * grad[i] for i in range(fam.d - 1)) + (z.s,)
    theta = z.theta[:-1] + (z.theta[-1] - sign * ds,)
    return PhaseState(theta, r, z.winding)


def h0(fam: HamiltonianFamily, z: PhaseState) -> mpf:
    omega = fam.freq_map.eval(z.s)
    return mpmath.fsum(w * x for w, x in zip(omega, z.r))


@dataclass
class ConjugacyReport:
    max_residual: mpf
    worst_point: PhaseState | None
    passed: bool
    tol: mpf
    failures: list = field(default_factory=list)
    checked: int = 0


def verify_conjugacy(fam: HamiltonianFamily, points: Iterable[PhaseState], tol=mpf(10) ** -25) -> ConjugacyReport:
    """max_i |H_n(z_i) - H_0(Psi_n(z_i))|; resonant points are recorded, not fatal."""
    tol = to_mpf(tol)
    worst, worst_z, failures, count = mpf(0), None, [], 0
    for z in points:
        try:
            img = psi_n(fam, z)
        except ResonantDenominatorError as exc:
            failures.append((z, str(exc)))
            continue
        res = abs(eval_H(fam, z) - h0(fam, img))
        count += 1
        if worst_z is None or res > worst:
            worst, worst_z = res, z
    return ConjugacyReport(worst, worst_z, bool(worst <= tol and not failures), tol, failures, count)


def random_points(fam: HamiltonianFamily, count: int, s_range=(-1, 1), r_radius=1, seed: int = 0,
                  avoid=mpf("1e-3")) -> list[PhaseState]:
    """Seeded points in T^d x [-r, r]^{d-1} x s_range, kept away from resonant s."""
    rng = np.random.Generator(np.random.Philox(seed))
    lo, hi = (to_mpf(x) for x in s_range)
    R = to_mpf(r_radius)
    out = []
    while len(out) < count:
        u = rng.random(2 * fam.d)
        s = lo + (hi - lo) * mpf(float(u[-1]))
        if s == 0:
            continue
        if fam.freq_map.variant != CONST:
            bad = False
            for c in fam.couplings():
                b = mpmath.fsum(ki * w for ki, w in zip(c.k, fam.freq_map.eval(s)[:-1]))
                if abs(b) < avoid:
                    bad = True
            if bad:
                continue
        theta = tuple(mpf(float(x)) for x in u[: fam.d])
        r = tuple(R * (2 * mpf(float(x)) - 1) for x in u[fam.d: 2 * fam.d - 1]) + (s,)
        out.append(PhaseState(theta, r))
    return out


def near_identity_radius(fam: HamiltonianFamily, budget=1, r_max=1) -> mpf:
    """Largest R <= r_max with sum_j |k_j| |psi_j(s)| <= budget for real |s| <= R.

    Only constant-map schedules v-vii can have amplitudes growing in |s|;
    every other family returns ``r_max``.
    """
    budget, r_max = to_mpf(budget), to_mpf(r_max)
    sch = fam.schedule
    if fam.freq_map.variant != CONST or not sch.uses_inner or not fam.pairs:
        return r_max
    log_budget = mpmath.log(budget)

    def fits(R):
        total = LogAmplitude.zero()
        for c in fam.couplings():
            total = total + LogAmplitude.from_value(c.knorm) * sch.reduced(c.j, c.knorm, R)
        return total.log_mag <= log_budget

    if fits(r_max):
        return r_max
    lo, hi = -mpf(mp.prec), mpmath.log(r_max)
    if not fits(mpmath.exp(lo)):
        return mpf(0)
    for _ in range(80):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if fits(mpmath.exp(mid)) else (lo, mid)
    return mpmath.exp(lo)


def symplectic_defect(fam: HamiltonianFamily, z: PhaseState, h=None) -> mpf:
    """max entry of |J^T Omega J - Omega| for the central-difference Jacobian of Psi_n."""
    d = fam.d
    h = mpf(2) ** (-mp.prec // 3) if h is None else to_mpf(h)
    coords = list(z.theta) + list(z.r)

    def image(x):
        w = psi_n(fam, PhaseState(tuple(x[:d]), tuple(x[d:])))
        th = [t + wi for t, wi in zip(w.theta, w.winding)]
        return th + list(w.r)

    base = image(coords)
    cols = []
    for i in range(2 * d):
        xp, xm = list(coords), list(coords)
        xp[i] += h
        xm[i] -= h
        fp, fm = image(xp), image(xm)
        col = []
        for a, b, c0 in zip(fp, fm, base):
            # undo mod-1 jumps of angle images
            diff = a - b
            diff -= mpmath.nint(diff) if abs(diff) > mpf("0.5") else 0
            col.append(diff / (2 * h))
        cols.append(col)
    J = mpmath.matrix(2 * d, 2 * d)
    for i in range(2 * d):
        for k in range(2 * d):
            J[k, i] = cols[i][k]
    Om = mpmath.zeros(2 * d, 2 * d)
    for i in range(d):
        Om[i, d + i] = 1
        Om[d + i, i] = -1
    D = J.T * Om * J - Om
    return max(abs(D[i, k]) for i in range(2 * d) for k in range(2 * d))


# ---------------------------------------------------------------------------
# Normal-form coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigPolynomial:
    """sum_k c_k cos(2 pi <k, Theta~>)."""

    terms: tuple[tuple[tuple[int, ...], LogAmplitude], ...]

    @classmethod
    def from_terms(cls, items: Iterable[tuple[Sequence[int], mpf | LogAmplitude]]) -> "TrigPolynomial":
        acc: dict[tuple[int, ...], mpf] = {}
        for k, c in items:
            k = tuple(int(x) for x in k)
            val = c.value() if isinstance(c, LogAmplitude) else to_mpf(c)
            acc[k] = acc.get(k, mpf(0)) + val
        return cls(tuple((k, LogAmplitude.from_value(v)) for k, v in acc.items() if v))

    def __len__(self):
        return len(self.terms)

    def coefficient(self, k: Sequence[int]) -> mpf:
        k = tuple(k)
        for kk, c in self.terms:
            if kk == k:
                return c.value()
        return mpf(0)

    def __call__(self, theta: Sequence[mpf]) -> mpf:
        return mpmath.fsum(c.value() * mpmath.cospi(2 * phase(k, theta)) for k, c in self.terms)

    def gradient(self, theta: Sequence[mpf]) -> list[mpf]:
        dim = len(self.terms[0][0]) if self.terms else len(theta)
        out = [[] for _ in range(dim)]
        for k, c in self.terms:
            sn = mpmath.sinpi(2 * phase(k, theta))
            for i, ki in enumerate(k):
                if ki:
                    out[i].append(-2 * mpmath.pi * ki * c.value() * sn)
        return [mpmath.fsum(x) for x in out]

    def to_json(self) -> list[dict]:
        return [{"k": list(k), "log_coeff": to_decimal(c.log_mag), "sign": c.sign} for k, c in self.terms]

    @classmethod
    def from_json(cls, data: list[dict]) -> "TrigPolynomial":
        return cls(tuple((tuple(int(x) for x in t["k"]), LogAmplitude(int(t["sign"]), from_decimal(t["log_coeff"])))
                         for t in data))


def _reciprocal_series(c: list[mpf], order: int) -> list[mpf]:
    """Taylor coefficients of 1 / (c_0 + c_1 s + ...) up to s^order."""
    if c[0] == 0:
        raise ResonantDenominatorError("<k_j, omega~> vanishes at s = 0")
    out = [1 / c[0]]
    for m in range(1, order + 1):
        acc = mpmath.fsum(c[i] * out[m - i] for i in range(1, min(m, len(c) - 1) + 1))
        out.append(-acc / c[0])
    return out


def psi_series(fam: HamiltonianFamily, c: Coupling, order: int) -> list[mpf]:
    """Taylor coefficients of psi_j(s) = phi_j(s) / b_j(s) up to s^order."""
    sch = fam.schedule
    red = sch.series(c.j, c.knorm, order)
    if fam.freq_map.variant == CONST:
        if sch.uses_inner:
            return red
        beta = c.beta.value()
        if beta == 0:
            raise ResonantDenominatorError(f"<k_{c.j}, omega~> vanishes")
        return [x / beta for x in red]
    if sch.uses_inner:
        red = [x * c.beta.value() for x in red]
    recip = _reciprocal_series(fam.freq_map.inner_poly(c.k), order)
    return [mpmath.fsum(red[i] * recip[m - i] for i in range(m + 1)) for m in range(order + 1)]


def _require_bnf(fam: HamiltonianFamily):
    if fam.schedule.variant == "iv":
        raise UnsupportedVariant("variant iv has no normal form statement: its amplitudes do not carry increasing powers of s")


def bnf_coefficient(fam: HamiltonianFamily, p: int) -> TrigPolynomial:
    """Coefficient of s^p in the generating function F(Theta~, s)."""
    _require_bnf(fam)
    if p < 2:
        raise ValueError("p >= 2 required")
    items = []
    for c in fam.couplings():
        coeff = psi_series(fam, c, p)[p]
        if coeff:
            items.append((c.k, coeff / (2 * mpmath.pi)))
    return TrigPolynomial.from_terms(items)


def bnf_coefficient_p2(fam: HamiltonianFamily) -> TrigPolynomial:
    """Closed form of the s^2 coefficient: only the j = 2 term with its leading amplitude."""
    _require_bnf(fam)
    if fam.n < 2:
        return TrigPolynomial(())
    c = fam.couplings()[0]
    sch = fam.schedule
    lead = mpmath.exp(sch._exponent(2, c.knorm, mpf(0))) if sch.variant not in ("v", "vii") else mpf(1)
    if fam.freq_map.variant == CONST and sch.uses_inner:
        coeff = lead
    else:
        scale = c.beta.value() if sch.uses_inner else mpf(1)
        coeff = lead * scale / fam.freq_map.inner_poly(c.k)[0]
    return TrigPolynomial.from_terms([(c.k, coeff / (2 * mpmath.pi))])


def default_probe_angles(d: int) -> tuple[mpf, ...]:
    """A fixed generic angle: fractional parts of sqrt of primes."""
    primes = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    return tuple(mpmath.frac(mpmath.sqrt(p)) for p in primes[:d])


def convergence_radius(fam: HamiltonianFamily) -> mpf:
    """Smallest |s| at which some b_j(s) vanishes (inf for constant maps)."""
    if fam.freq_map.variant == CONST or not fam.pairs:
        return mpf("inf")
    best = mpf("inf")
    for c in fam.couplings():
        coeffs = list(reversed(fam.freq_map.inner_poly(c.k)))
        while len(coeffs) > 1 and coeffs[0] == 0:
            coeffs = coeffs[1:]
        if len(coeffs) < 2:
            continue
        roots = mpmath.polyroots(coeffs, maxsteps=200, extraprec=64)
        best = min([best] + [abs(r) for r in roots])
    return best


def bnf_residual(fam: HamiltonianFamily, P: int, s, theta: Sequence[mpf] | None = None) -> mpf:
    """|H_n(Theta, R - d_Theta F_P) - <omega(s), R>| at one s (R is irrelevant; R = 0)."""
    d = fam.d
    theta = default_probe_angles(d) if theta is None else tuple(theta)
    s = to_mpf(s)
    polys = [bnf_coefficient(fam, p) for p in range(2, P + 1)]
    grad = [mpf(0)] * (d - 1)
    for p, poly in zip(range(2, P + 1), polys):
        if len(poly):
            g = poly.gradient(theta[:-1])
            grad = [a + s**p * b for a, b in zip(grad, g)]
    r = tuple(-g for g in grad) + (s,)
    z = PhaseState(theta, r)
    return abs(eval_H(fam, z) - fam.freq_map.eval(s)[-1] * s)


def bnf_remainder_order(fam: HamiltonianFamily, P: int, s_values: Sequence | None = None,
                        thetas: Sequence[Sequence[mpf]] | None = None) -> mpf:
    """Log-log slope of the order-P normal-form residual as s shrinks (+inf if it vanishes)."""
    _require_bnf(fam)
    if P < 2:
        raise ValueError("P >= 2 required")
    if fam.n == 1:
        return mpf("inf")
    if s_values is None:
        rad = min(convergence_radius(fam), mpf(1))
        s_values = [rad * mpf(10) ** -e for e in (1, 2, 3)]
    thetas = [default_probe_angles(fam.d)] if thetas is None else thetas
    xs, ys = [], []
    for s in s_values:
        res = max(bnf_residual(fam, P, s, th) for th in thetas)
        if res == 0:
            continue
        xs.append(mpmath.log(to_mpf(s)))
        ys.append(mpmath.log(res))
    if len(xs) < 2:
        return mpf("inf")
    mx, my = mpmath.fsum(xs) / len(xs), mpmath.fsum(ys) / len(ys)
    num = mpmath.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    den = mpmath.fsum((x - mx) ** 2 for x in xs)
    return num / den


# ---------------------------------------------------------------------------
# Regularity probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DerivativeSample:
    n: int
    value: mpf
    error: mpf


def regularity_family(l: int, n_max: int, d: int = 3, growth=None) -> HamiltonianFamily:
    """Variant vi family with |k_j| = growth(j) (default 2**(2**j)) along the first angle.

    The canonical map of variant vi does not depend on omega (the factor
    <omega~, k_j> cancels), so the wave vectors need not be Liouville witnesses.
    """
    from .arithmetic import sqrt_vector

    growth = (lambda j: 2 ** (2**j)) if growth is None else growth
    omega = sqrt_vector(*(1, 2, 3, 5, 7, 11, 13)[:d])
    pairs = [ResonancePair((int(growth(j)),) + (0,) * (d - 2), None, mpf("-inf")) for j in range(2, n_max + 1)]
    return build_family(omega, CONST, CouplingSchedule("vi", l=l), pairs)


def _directional(fam: HamiltonianFamily, z: PhaseState, axis: int, comp: int):
    def f(x):
        theta = list(z.theta)
        theta[axis] = x
        grad, _ = generating_corrections(fam, theta, z.s)
        return z.r[comp] + grad[comp]

    return f


def _central_derivative(f, x: mpf, m: int, h: mpf) -> mpf:
    total = mpf(0)
    for i in range(m + 1):
        total += (-1) ** i * mpmath.binomial(m, i) * f(x + (mpf(m) / 2 - i) * h)
    return total / h**m


def regularity_probe(fam: HamiltonianFamily, m: int, probe: PhaseState, n_range: Iterable[int],
                     axis: int = 0, component: int = 0) -> list[DerivativeSample]:
    """m-th derivative along theta_{axis} of the R~_{component} of Psi_n, for each n.

    Central differences with Richardson extrapolation; the step is scaled
    below 1/|k_n| and working precision is raised to absorb the h**-m
    cancellation.
    """
    if fam.schedule.variant != "vi":
        raise UnsupportedVariant("the regularity probe targets variant vi families")
    l = fam.schedule.l
    if m < 0 or m > l + 2:
        raise ValueError(f"derivative order must lie in 0..{l + 2}")
    if probe.s == 0:
        raise ValueError("probe needs s != 0")
    out = []
    for n in n_range:
        sub = fam.truncate(n)
        f = _directional(sub, probe, axis, component)
        x = probe.theta[axis]
        if m == 0:
            out.append(DerivativeSample(n, f(x), mpf(0)))
            continue
        kmax = max((c.knorm for c in sub.couplings()), default=1)
        step_bits = int(math.log2(kmax)) + 24
        bits = mp.prec + m * step_bits + 64
        if bits > MAX_PREC:
            raise PrecisionError(f"finite-difference step 2**-{step_bits} needs {bits} bits", bits)
        with precision(bits):
            h = mpf(2) ** -step_bits
            xx = +x
            d1 = _central_derivative(f, xx, m, h)
            d2 = _central_derivative(f, xx, m, h / 2)
            value = (4 * d2 - d1) / 3
            err = abs(d2 - d1)
        out.append(DerivativeSample(n, +value, +err))
    return out


def increments(samples: Sequence[DerivativeSample]) -> list[mpf]:
    """Successive differences of a derivative sequence."""
    return [abs(b.value - a.value) for a, b in zip(samples, samples[1:])]


__all__ = [
    "CanonicalMap", "psi_n", "verify_conjugacy", "ConjugacyReport", "TrigPolynomial", "bnf_coefficient",
    "bnf_coefficient_p2", "bnf_remainder_order", "bnf_residual", "regularity_probe", "regularity_family",
    "increments", "symplectic_defect", "random_points", "ResonantDenominatorError", "UnsupportedVariant",
    "h0", "generating_corrections", "psi_series", "convergence_radius", "default_probe_angles",
    "near_identity_radius",
]

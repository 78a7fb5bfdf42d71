"""Flows of truncated families.

Because ``s = r_d`` is conserved and ``theta~`` moves linearly, every term of
the vector field integrates in closed form; :func:`exact_flow` evaluates the
result at any time, including times such as ``e^256`` given as a
:class:`~qptori.numerics.LogAmplitude`.  :func:`numeric_flow` is an
independent float64 integrator used as an oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np
from mpmath import mp, mpf
from scipy.integrate import DOP853

from .hamiltonian import HamiltonianFamily, eval_H, phase
from .numerics import (
    GUARD_BITS,
    LogAmplitude,
    cos_double_integral,
    cos_integral,
    phase_bits,
    precision,
    sin_integral,
    to_decimal,
    to_mpf,
)
from .state import PhaseState

Time = "mpf | int | float | str | LogAmplitude"


@dataclass(frozen=True)
class Trajectory:
    times: tuple[mpf, ...]
    states: tuple[PhaseState, ...]
    method: str
    max_error: float | None = None
    complete: bool = True
    steps: int = 0

    def __post_init__(self):
        if self.method not in ("closed_form", "numeric"):
            raise ValueError(f"unknown method {self.method!r}")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must increase strictly")

    def __len__(self):
        return len(self.times)

    def to_csv(self, path, fam: HamiltonianFamily | None = None) -> None:
        d = self.states[0].d if self.states else 0
        header = ["t"] + [f"theta{i + 1}" for i in range(d)] + [f"r{i + 1}" for i in range(d)] + ["H", "method"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t, z in zip(self.times, self.states):
                H = to_decimal(eval_H(fam, z)) if fam is not None else ""
                w.writerow([to_decimal(t)] + [to_decimal(x) for x in z.theta] + [to_decimal(x) for x in z.r] + [H, self.method])


@dataclass(frozen=True)
class ABDecomposition:
    """r~(t) - r~(0) split into the secular/resonant term A and the bounded rest B."""

    A: tuple[mpf, ...]
    B: tuple[mpf, ...]
    resonant_index: int | None


def _as_time(t) -> mpf:
    if isinstance(t, LogAmplitude):
        if t.sign < 0:
            raise ValueError("negative time given as LogAmplitude")
        return t.value()
    return to_mpf(t)


@dataclass(frozen=True)
class _Term:
    j: int
    k: tuple[int, ...]
    a: mpf
    b: mpf
    phi: mpf
    dphi: mpf
    kdom: mpf  # <k_j, d omega~/ds>


def _terms(fam: HamiltonianFamily, z: PhaseState) -> list[_Term]:
    s = z.s
    domega = fam.freq_map.deriv(s)[:-1]
    out = []
    for c in fam.couplings():
        out.append(_Term(
            c.j, c.k, phase(c.k, z.theta), fam.inner(c, s),
            fam.phi(c, s).value(), fam.dphi(c, s).value(),
            mpmath.fsum(ki * w for ki, w in zip(c.k, domega)),
        ))
    return out


def required_bits(fam: HamiltonianFamily, z: PhaseState, t) -> int:
    """Working precision that resolves every phase a + b t mod 1 at time t."""
    t = _as_time(t)
    omega = fam.freq_map.eval(z.s)
    products = [w * t for w in omega] + [c.beta.value() * t if c.exact_inner else fam.inner(c, z.s) * t
                                         for c in fam.couplings()]
    return mp.prec + phase_bits(*products) + GUARD_BITS


def exact_flow(fam: HamiltonianFamily, z: PhaseState, t) -> PhaseState:
    """Closed-form time-t map of H_n (t may be negative or a LogAmplitude)."""
    if z.d != fam.d:
        raise ValueError("state dimension does not match the family")
    out_prec = mp.prec
    with precision(required_bits(fam, z, t)):
        t = _as_time(t)
        d, s = fam.d, z.s
        theta = [th + w for th, w in zip(z.theta, z.winding)]
        omega = fam.freq_map.eval(s)
        domega = fam.freq_map.deriv(s)[:-1]
        terms = _terms(fam, z)
        two_pi = 2 * mpmath.pi
        new_theta = [theta[i] + omega[i] * t for i in range(d - 1)]
        r_parts: list[list[mpf]] = [[z.r[i]] for i in range(d - 1)]
        last = [theta[-1], omega[-1] * t, mpmath.fsum(w * x for w, x in zip(domega, z.r[:-1])) * t]
        for term in terms:
            ci = cos_integral(term.a, term.b, t)
            for i, ki in enumerate(term.k):
                if ki:
                    r_parts[i].append(two_pi * term.phi * ki * ci)
            if term.kdom:
                last.append(two_pi * term.phi * term.kdom * cos_double_integral(term.a, term.b, t))
            if term.dphi:
                last.append(-term.dphi * sin_integral(term.a, term.b, t))
        new_theta.append(mpmath.fsum(last))
        new_r = [mpmath.fsum(p) for p in r_parts] + [s]
        floors = [int(mpmath.floor(x)) for x in new_theta]
        reduced = [x - f for x, f in zip(new_theta, floors)]
    with precision(out_prec):
        return PhaseState(tuple(+x for x in reduced), tuple(+x for x in new_r), tuple(floors))


def decompose(fam: HamiltonianFamily, z: PhaseState, t, n: int | None = None) -> ABDecomposition:
    """Split r~(t) - r~(0) into the term of pair n (A) and the remaining terms (B)."""
    n = fam.n if n is None else n
    with precision(required_bits(fam, z, t)):
        t = _as_time(t)
        two_pi = 2 * mpmath.pi
        A = [mpf(0)] * (fam.d - 1)
        B = [[] for _ in range(fam.d - 1)]
        res = None
        for term in _terms(fam, z):
            ci = cos_integral(term.a, term.b, t)
            for i, ki in enumerate(term.k):
                contrib = two_pi * term.phi * ki * ci
                if term.j == n:
                    A[i] = contrib
                else:
                    B[i].append(contrib)
            if term.j == n and term.b == 0:
                res = n
        A_out, B_out = tuple(A), tuple(mpmath.fsum(b) for b in B)
    return ABDecomposition(tuple(+a for a in A_out), tuple(+b for b in B_out), res)


def oscillation_bound(fam: HamiltonianFamily, z: PhaseState, skip: Iterable[int] = ()) -> mpf:
    """sup_t |r~_i(t) - r~_i(0)| bound from the non-resonant terms: sum 2 phi_j |k_j| / |b_j|."""
    skip = set(skip)
    total = []
    for term in _terms(fam, z):
        if term.j in skip:
            continue
        if term.b == 0:
            return mpf("inf")
        total.append(2 * abs(term.phi) * max(abs(k) for k in term.k) / abs(term.b))
    return mpmath.fsum(total)


# ---------------------------------------------------------------------------
# Numeric oracle
# ---------------------------------------------------------------------------


def _rhs_factory(fam: HamiltonianFamily, s: mpf):
    d = fam.d
    omega = np.array([float(w) for w in fam.freq_map.eval(s)])
    domega = np.array([float(w) for w in fam.freq_map.deriv(s)[:-1]])
    couplings = fam.couplings()
    if couplings:
        K = np.array([c.k for c in couplings], dtype=float)
        phi = np.array([float(fam.phi(c, s).value()) for c in couplings])
        dphi = np.array([float(fam.dphi(c, s).value()) for c in couplings])
    else:
        K = np.zeros((0, d - 1))
        phi = dphi = np.zeros(0)
    two_pi = 2 * np.pi

    def rhs(t, y):
        th = y[: d - 1]
        r = y[d:]
        ph = two_pi * (K @ th)
        out = np.empty_like(y)
        out[: d - 1] = omega[:-1]
        out[d - 1] = omega[-1] + domega @ r - dphi @ np.sin(ph)
        out[d:] = two_pi * ((phi * np.cos(ph)) @ K)
        return out

    return rhs


def vector_field_float(fam: HamiltonianFamily, z: PhaseState) -> np.ndarray:
    """float64 field on the reduced coordinates (theta, r~); tested against vector_field."""
    rhs = _rhs_factory(fam, z.s)
    y = np.array([float(x) for x in z.theta] + [float(x) for x in z.r[:-1]])
    return rhs(0.0, y)


def numeric_flow(
    fam: HamiltonianFamily,
    z: PhaseState,
    t_end,
    tol: float = 1e-12,
    max_steps: int = 200_000,
    sample_times: Sequence[float] | None = None,
) -> Trajectory:
    """DOP853 integration of the 2d-1 coordinates that move; s stays fixed by construction."""
    t_end = float(t_end)
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    d, s = fam.d, z.s
    rhs = _rhs_factory(fam, s)
    theta0 = [float(th + w) for th, w in zip(z.theta, z.winding)]
    y0 = np.array(theta0 + [float(x) for x in z.r[:-1]])
    solver = DOP853(rhs, 0.0, y0, t_end, rtol=tol, atol=tol)
    times = np.array(sorted(set([0.0] + list(sample_times or []) + [t_end])))
    times = times[(times >= 0) & (times <= t_end)]
    out_t, out_y = [0.0], [y0.copy()]
    idx = 1
    steps = 0
    complete = True
    while solver.status == "running":
        if steps >= max_steps:
            complete = False
            break
        msg = solver.step()
        steps += 1
        if solver.status == "failed":
            complete = False
            break
        dense = solver.dense_output()
        while idx < len(times) and times[idx] <= solver.t:
            out_t.append(float(times[idx]))
            out_y.append(dense(times[idx]))
            idx += 1
    states = []
    for y in out_y:
        th = [mpf(float(v)) for v in y[:d]]
        states.append(PhaseState(tuple(th), tuple(mpf(float(v)) for v in y[d:]) + (s,)))
    return Trajectory(tuple(mpf(t) for t in out_t), tuple(states), "numeric", tol, complete, steps)


def closed_form_trajectory(fam: HamiltonianFamily, z: PhaseState, times: Iterable) -> Trajectory:
    times = sorted(set(to_mpf(t) for t in times))
    return Trajectory(tuple(times), tuple(exact_flow(fam, z, t) for t in times), "closed_form")


# ---------------------------------------------------------------------------
# Persistence bounds
# ---------------------------------------------------------------------------


def _amp(x) -> LogAmplitude:
    return x if isinstance(x, LogAmplitude) else LogAmplitude.from_value(x)


def gronwall_bound(delta, L, T) -> LogAmplitude:
    """delta (e^{L T} - 1) / L, or delta T when L = 0, in the log domain."""
    delta, L, T = _amp(delta), _amp(L), _amp(T)
    if delta.sign < 0 or L.sign < 0 or T.sign < 0:
        raise ValueError("delta, L and T must be non-negative")
    if not delta or not T:
        return LogAmplitude.zero()
    if not L:
        return delta * T
    LT = (L * T).value()
    if LT > 50:
        log_growth = LT + mpmath.log1p(-mpmath.exp(-LT))
    else:
        log_growth = mpmath.log(mpmath.expm1(LT))
    return delta * LogAmplitude.from_log(log_growth) / L


def lipschitz_bound(fam: HamiltonianFamily, r_radius, s_radius) -> mpf:
    """Upper bound of the sup-norm operator norm of the Jacobian of the field.

    Domain: all angles, ``|r~_i| <= r_radius``, ``|s| <= s_radius``.  The
    amplitude derivatives are bounded by their power-series majorants at
    ``s_radius`` (every reduced amplitude has non-negative Taylor coefficients).
    """
    R, S = to_mpf(r_radius), to_mpf(s_radius)
    if R < 0 or S < 0:
        raise ValueError("radii must be non-negative")
    d = fam.d
    sch = fam.schedule
    dom = [abs(x) for x in fam.freq_map.deriv(S)[:-1]]
    dom2 = [abs(x) for x in fam.freq_map.second_deriv(S)[:-1]]
    two_pi = 2 * mpmath.pi
    sup0, sup1, sup2, ks = [], [], [], []
    for c in fam.couplings():
        beta = abs(c.beta.value()) if sch.uses_inner else mpf(1)
        sup0.append(beta * abs(sch.reduced(c.j, c.knorm, S).value()))
        sup1.append(beta * abs(sch.reduced_deriv(c.j, c.knorm, S).value()))
        sup2.append(beta * abs(sch.reduced_deriv2(c.j, c.knorm, S)))
        ks.append(c.k)
    rows = [dom[i] for i in range(d - 1)]
    last = mpmath.fsum(dom) + R * mpmath.fsum(dom2) + mpmath.fsum(sup2)
    last += two_pi * mpmath.fsum(p1 * sum(abs(x) for x in k) for p1, k in zip(sup1, ks))
    rows.append(last)
    for i in range(d - 1):
        row = mpmath.fsum(
            two_pi * p1 * abs(k[i]) + two_pi**2 * p0 * abs(k[i]) * sum(abs(x) for x in k)
            for p0, p1, k in zip(sup0, sup1, ks)
        )
        rows.append(row)
    return max(rows)


__all__ = [
    "PhaseState", "Trajectory", "ABDecomposition", "exact_flow", "numeric_flow", "decompose",
    "oscillation_bound", "gronwall_bound", "lipschitz_bound", "vector_field_float",
    "closed_form_trajectory", "required_bits",
]

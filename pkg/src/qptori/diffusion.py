"""Finite-time diffusion predicates and escape times.

Distances to the torus ``r = 0`` are sup norms of the actions.  Each
predicate is checked on the flow of a truncated family and returned as a
:class:`DiffusionReport` carrying the witness, the witnessed time and the
slack that a perturbation may use up (see :func:`qptori.flow.gronwall_bound`).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import mpmath
import numpy as np
from mpmath import mp, mpf

from .arithmetic import BAR, CONST, HAT
from .flow import decompose, exact_flow, gronwall_bound, lipschitz_bound, oscillation_bound, ABDecomposition
from .hamiltonian import HamiltonianFamily, phase
from .numerics import GUARD_BITS, LogAmplitude, PrecisionError, precision, to_decimal, to_mpf
from .state import PhaseState

# Schedule variant proved to satisfy each predicate.
PREDICATE_VARIANT = {1: "i", 2: "ii", 3: "iii", 4: "iv", 5: "v", 6: "vii"}


class PredicateMismatchError(ValueError):
    """The family's schedule does not match the requested predicate."""


class NonCanonicalStateError(ValueError):
    """The decomposition is only defined at the canonical initial condition."""


@dataclass(frozen=True)
class PropertyId:
    index: int
    n: int
    C: mpf | None = None
    tau: mpf | None = None

    def __post_init__(self):
        if self.index not in PREDICATE_VARIANT:
            raise ValueError("predicate index must be 1..6")
        if self.n < 2:
            raise ValueError("n >= 2 required")
        if self.index == 2 and (self.C is None or self.tau is None):
            raise ValueError("P2 needs C and tau")

    @property
    def name(self) -> str:
        return f"P{self.index}"

    def to_json(self) -> dict:
        out = {"id": self.name, "n": self.n}
        if self.C is not None:
            out["C"] = to_decimal(self.C)
        if self.tau is not None:
            out["tau"] = to_decimal(self.tau)
        return out


@dataclass
class DiffusionReport:
    property: PropertyId
    passed: bool
    status: str
    witness: PhaseState | None
    escape_time: LogAmplitude
    threshold: mpf
    threshold_reached: mpf
    margin: mpf
    persistence_delta: LogAmplitude
    time_bound: LogAmplitude | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def enc(v):
            if isinstance(v, LogAmplitude):
                return v.to_json()
            if isinstance(v, mpf):
                return to_decimal(v)
            if isinstance(v, PhaseState):
                return v.to_json()
            if isinstance(v, dict):
                return {k: enc(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [enc(x) for x in v]
            return v

        return {
            "property": self.property.to_json(),
            "passed": self.passed,
            "status": self.status,
            "witness": enc(self.witness),
            "escape_time": self.escape_time.to_json(),
            "threshold": to_decimal(self.threshold),
            "threshold_reached": to_decimal(self.threshold_reached),
            "margin": to_decimal(self.margin),
            "persistence_delta": self.persistence_delta.to_json(),
            "time_bound": None if self.time_bound is None else self.time_bound.to_json(),
            "details": enc(self.details),
        }


def distance(z: PhaseState) -> mpf:
    return z.action_norm()


# ---------------------------------------------------------------------------
# Initial conditions and the A/B split
# ---------------------------------------------------------------------------


def bound_scale(fam: HamiltonianFamily, n: int) -> mpf:
    """s_n for the family: the resonance root, or exp(-n^2 |k_n|) for constant maps."""
    pair = fam.pair(n)
    if fam.freq_map.variant == CONST:
        return mpmath.exp(-(n * n) * pair.norm)
    if pair.s is None:
        raise ValueError(f"pair {n} carries no resonance parameter")
    return pair.s


def canonical_initial_condition(fam: HamiltonianFamily, n: int, sample: int = 0, seed: int = 0) -> PhaseState:
    """theta = 0, r = (0, ..., 0, s_n); for schedules v and vii a seeded point of Q_n^+ or Q_n."""
    fam.pair(n)
    d = fam.d
    variant = fam.schedule.variant
    if variant in ("v", "vii"):
        rng = np.random.Generator(np.random.Philox(seed))
        u = rng.random((sample + 1, 2 * d + 1))[sample]
        theta = tuple(mpf(float(x)) for x in u[:d])
        r_tilde = tuple(n * (2 * mpf(float(x)) - 1) for x in u[d: 2 * d - 1])
        s = 1 / mpf(n) + (n - 1 / mpf(n)) * mpf(float(u[2 * d - 1]))
        if variant == "vii" and u[2 * d] < 0.5:
            s = -s
        return PhaseState(theta, r_tilde + (s,))
    return PhaseState((mpf(0),) * d, (mpf(0),) * (d - 1) + (bound_scale(fam, n),))


def _is_canonical(fam: HamiltonianFamily, n: int, z: PhaseState) -> bool:
    return all(t == 0 for t in z.theta) and all(x == 0 for x in z.r[:-1]) and z.s == bound_scale(fam, n)


def decompose_AB(fam: HamiltonianFamily, n: int, t, z: PhaseState | None = None) -> ABDecomposition:
    """A: the term of pair n; B: every other coupling, at the canonical initial condition."""
    canon = canonical_initial_condition(fam, n)
    if z is not None and not _is_canonical(fam, n, z):
        raise NonCanonicalStateError("decomposition requires the canonical initial condition")
    return decompose(fam, canon, t, n)


def b_bound(fam: HamiltonianFamily, n: int) -> mpf:
    """sum_{j != n} 2 |k_j| phi_j / |b_j| at the canonical initial condition."""
    return oscillation_bound(fam, canonical_initial_condition(fam, n), skip=(n,))


# ---------------------------------------------------------------------------
# Escape times
# ---------------------------------------------------------------------------


def _secular_rate(fam: HamiltonianFamily, n: int, z: PhaseState) -> mpf:
    """|d A / dt| in sup norm for a resonant pair n at z (0 when pair n is not resonant)."""
    for c in fam.couplings():
        if c.j == n:
            if fam.inner(c, z.s) != 0:
                return mpf(0)
            cs = abs(mpmath.cospi(2 * phase(c.k, z.theta)))
            return 2 * mpmath.pi * abs(fam.phi(c, z.s).value()) * c.knorm * cs
    return mpf(0)


def predicted_escape_time(fam: HamiltonianFamily, n: int, target) -> LogAmplitude:
    """Closed-form escape time: target / |A'| for secular growth, s_n^{-2n} or s_n^{-4} for iii/iv."""
    target = to_mpf(target)
    if target <= 0:
        return LogAmplitude.zero()
    variant = fam.schedule.variant
    if variant in ("v", "vi", "vii"):
        raise NotImplementedError("no secular structure for schedules v-vii")
    z = canonical_initial_condition(fam, n)
    if variant in ("iii", "iv"):
        s = LogAmplitude.from_value(bound_scale(fam, n))
        return s ** (-2 * n) if variant == "iii" else s ** -4
    rate = _secular_rate(fam, n, z)
    if rate == 0:
        raise ValueError(f"pair {n} is not resonant at the canonical initial condition")
    return LogAmplitude.from_value(target) / LogAmplitude.from_value(rate)


def _dist_at(fam, z, t) -> mpf:
    return distance(exact_flow(fam, z, t))


def _persistence(slack: mpf, t: LogAmplitude) -> LogAmplitude:
    """Field closeness delta with gronwall_bound(delta, 0, t) equal to the slack."""
    if slack <= 0 or not t:
        return LogAmplitude.zero()
    return LogAmplitude.from_value(slack) / t


def _report(prop, z, t: LogAmplitude, threshold, reached, status, time_bound=None, **details) -> DiffusionReport:
    threshold, reached = to_mpf(threshold), to_mpf(reached)
    passed = status in ("certified", "grid-verified")
    margin = reached / threshold if threshold else mpf("inf")
    return DiffusionReport(prop, passed, status, z, t, threshold, reached, margin,
                           _persistence(reached - threshold, t), time_bound, details)


def escape_time(
    fam: HamiltonianFamily,
    n: int,
    z: PhaseState,
    target,
    t_max,
    strategy: str = "closed_form_root",
    rel_tol=mpf(10) ** -15,
    scan_points: int = 200,
) -> DiffusionReport:
    """Least witnessed t <= t_max with distance(Phi^t(z)) >= target."""
    target = to_mpf(target)
    t_max = t_max if isinstance(t_max, LogAmplitude) else LogAmplitude.from_value(t_max)
    prop = PropertyId(1, max(n, 2))
    d0 = distance(z)
    if target <= d0:
        raise ValueError("target distance must exceed the initial distance")

    if strategy == "numeric":
        from .flow import numeric_flow

        T = float(t_max.value())
        times = np.linspace(0, T, scan_points + 1)[1:]
        tr = numeric_flow(fam, z, T, 1e-12, sample_times=list(times))
        for t, w in zip(tr.times, tr.states):
            if t > 0 and distance(w) >= target:
                return _report(prop, z, LogAmplitude.from_value(t), target, distance(w), "certified", strategy=strategy)
        best = max(distance(w) for w in tr.states)
        return _report(prop, z, t_max, target, best, "failed", strategy=strategy)

    lo = mpf(0)
    hi = None
    if strategy == "closed_form_root":
        rate = _secular_rate(fam, n, z) if 2 <= n <= fam.n else mpf(0)
        if rate > 0:
            guess = (target - d0) / rate
            for _ in range(60):
                if LogAmplitude.from_value(guess) > t_max:
                    guess = t_max.value()
                if _dist_at(fam, z, guess) >= target:
                    hi = guess
                    break
                lo = guess
                if guess == t_max.value():
                    break
                guess = guess * (1 + mpf(2) ** -20) + (target - _dist_at(fam, z, guess)) / rate
        strategy_used = "closed_form_root" if hi is not None else "bisection_on_exact_flow"
    else:
        strategy_used = strategy
    if hi is None:
        # log-spaced scan up to t_max
        log_hi = t_max.log_mag
        log_lo = min(mpf(-10), log_hi - 50)
        best, prev = d0, mpf(0)
        for i in range(1, scan_points + 1):
            t = mpmath.exp(log_lo + (log_hi - log_lo) * i / scan_points)
            dist = _dist_at(fam, z, t)
            best = max(best, dist)
            if dist >= target:
                lo, hi = prev, t
                break
            prev = t
        if hi is None:
            return _report(prop, z, t_max, target, best, "failed", strategy=strategy_used)
    # bisection to the first crossing inside [lo, hi]
    while hi - lo > rel_tol * hi:
        mid = (lo + hi) / 2
        if _dist_at(fam, z, mid) >= target:
            hi = mid
        else:
            lo = mid
    reached = _dist_at(fam, z, hi)
    return _report(prop, z, LogAmplitude.from_value(hi), target, reached, "certified", strategy=strategy_used)


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------


def _check_variant(fam: HamiltonianFamily, prop: PropertyId):
    want = PREDICATE_VARIANT[prop.index]
    have = fam.schedule.variant
    if have != want:
        raise PredicateMismatchError(f"{prop.name} applies to schedule {want}, family has {have}")
    if prop.index == 2:
        if fam.schedule.C != prop.C:
            raise PredicateMismatchError("P2 constant C differs from the family's C")
    fam.pair(prop.n)


def check_property(
    fam: HamiltonianFamily,
    n: int,
    prop: PropertyId | int,
    grid: int = 5,
    ceiling_factor=10,
    overshoot=2,
    C=None,
    tau=None,
) -> DiffusionReport:
    """Check predicate P^i_n on the flow of ``fam`` (all couplings included)."""
    if isinstance(prop, int):
        prop = PropertyId(prop, n, None if C is None else to_mpf(C), None if tau is None else to_mpf(tau))
    if prop.n != n:
        raise ValueError("predicate order differs from n")
    _check_variant(fam, prop)
    if prop.index == 1:
        return _check_p1(fam, prop, ceiling_factor, overshoot)
    if prop.index == 2:
        return _check_p2(fam, prop)
    if prop.index in (3, 4):
        return _check_p34(fam, prop)
    return _check_p56(fam, prop, grid)


def _check_p1(fam, prop, ceiling_factor, overshoot) -> DiffusionReport:
    n = prop.n
    z = canonical_initial_condition(fam, n)
    r0 = distance(z)
    if r0 > 1 / mpf(n):
        return _report(prop, z, LogAmplitude.zero(), n, r0, "failed", reason="|z| > 1/n")
    target = mpf(n)
    ceiling = predicted_escape_time(fam, n, overshoot * target) * ceiling_factor
    rep = escape_time(fam, n, z, overshoot * target, ceiling)
    if not rep.passed:
        rep = escape_time(fam, n, z, target * (1 + mpf(2) ** -40), ceiling)
    status = "certified" if rep.passed and rep.threshold_reached > target else "failed"
    return _report(prop, z, rep.escape_time, target, rep.threshold_reached, status,
                   ceiling, predicted=predicted_escape_time(fam, n, target), initial_norm=r0)


def _check_p2(fam, prop) -> DiffusionReport:
    n, C, tau = prop.n, prop.C, prop.tau
    z = canonical_initial_condition(fam, n)
    r0 = distance(z)
    if r0 > 1 / mpf(n):
        return _report(prop, z, LogAmplitude.zero(), 1 / r0, r0, "failed", reason="|z| > 1/n")
    log_T = C * r0 ** (-1 / (tau + 1))
    T_b = LogAmplitude.from_log(log_T)
    target = 1 / r0
    ab = decompose_AB(fam, n, T_b)
    normA = max(abs(a) for a in ab.A)
    normB = max((abs(b) for b in ab.B), default=mpf(0))
    rep = escape_time(fam, n, z, target * (1 + mpf(2) ** -40), T_b)
    status = "certified" if rep.passed and rep.escape_time <= T_b else "failed"
    return _report(prop, z, rep.escape_time, target, rep.threshold_reached, status, T_b,
                   log_time_bound=log_T, A_norm_at_bound=normA, B_norm_at_bound=normB,
                   A_dominates=bool(normA >= 2 * target), B_small=bool(normB < 1),
                   B_bound=b_bound(fam, n), initial_norm=r0)


def _check_p34(fam, prop) -> DiffusionReport:
    n = prop.n
    z = canonical_initial_condition(fam, n)
    r0 = distance(z)
    target = 1 / r0
    rn = LogAmplitude.from_value(r0)
    T_b = rn ** (-2 * n) if prop.index == 3 else rn ** -4
    c = fam.couplings()[n - 2]
    beta = abs(fam.inner(c, z.s))
    beta_amp = LogAmplitude.from_value(beta)
    quarter = LogAmplitude.from_value(mpf(1) / 4) / beta_amp if beta else None
    t_w = T_b if quarter is None or quarter > T_b else quarter
    zt = exact_flow(fam, z, t_w)
    reached = distance(zt)
    bt = beta_amp * T_b
    # the near-resonant step |sin(2 pi b t)| > |b| t at t = T_b
    sin_val = None
    if bt and bt.log_mag < 10**5:
        extra_bits = max(0, int(bt.log_mag / mpmath.log(2))) + GUARD_BITS
        with precision(mp.prec + extra_bits):
            sin_val = +abs(mpmath.sinpi(2 * beta * T_b.value()))
    sine_ok = bool(sin_val is not None and sin_val > bt.value())
    extra = {}
    if prop.index == 3:
        extra["theorem_bound"] = rn ** -n
    status = "certified" if reached > target else "failed"
    return _report(prop, z, t_w, target, reached, status, T_b, sine_inequality_holds=sine_ok,
                   b_times_t=bt, sine_at_bound=sin_val, A_amplitude=LogAmplitude.from_value(
                       abs(fam.phi(c, z.s).value()) * c.knorm / beta) if beta else LogAmplitude.zero(),
                   initial_norm=r0, **extra)


def _psi_abs(fam, c, s) -> mpf:
    return abs(fam.schedule.reduced(c.j, c.knorm, s).value())


def _check_p56(fam, prop, grid: int) -> DiffusionReport:
    """Every point of Q_n^+ (P5) or Q_n (P6) leaves the box of radius n."""
    n = prop.n
    d = fam.d
    if fam.freq_map.variant != CONST:
        raise PredicateMismatchError("P5/P6 are stated for the constant frequency map")
    cs = fam.couplings()
    cn = cs[n - 2]
    beta = cn.beta.value()
    if beta == 0:
        raise PredicateMismatchError(f"<k_{n}, omega~> vanishes; no oscillation to drive escape")
    tau_n = 1 / abs(beta)
    others = [c for c in cs if c.j != n]
    N = mpf(n)

    # box-wide certificate: |A| >= |k_n| |psi_n(s)| at the chosen time, |B| <= sum 2 |k_j| |psi_j|
    s_lo, s_hi = 1 / N, N
    lower_A = cn.knorm * _psi_abs(fam, cn, s_lo)
    upper_B = mpmath.fsum(2 * c.knorm * max(_psi_abs(fam, c, s_hi), _psi_abs(fam, c, -s_hi)) for c in others)
    box_margin = lower_A - upper_B - N
    box_certified = box_margin > N

    s_axis = [s_lo + (s_hi - s_lo) * i / (grid - 1) for i in range(grid)] if grid > 1 else [s_lo]
    if prop.index == 6:
        s_axis = [-s for s in reversed(s_axis)] + s_axis
    th_axis = [mpf(i) / grid for i in range(grid)]
    worst_reached, worst_t, worst_z = None, LogAmplitude.zero(), None
    all_ok = True
    count = 0
    for s in s_axis:
        for th in itertools.product(th_axis, repeat=d - 1):
            z = PhaseState(tuple(th) + (mpf(0),), (mpf(0),) * (d - 1) + (s,))
            a = phase(cn.k, z.theta)
            goal = mpf(1) / 4 if mpmath.sinpi(2 * a) <= 0 else mpf(3) / 4
            if beta > 0:
                t = ((goal - a) % 1) * tau_n
            else:
                t = ((a - goal) % 1) * tau_n
            if t == 0:
                t = tau_n
            # displacement from r~ = 0; any r~_0 in [-n, n]^{d-1} shifts it by at most n
            try:
                disp = distance(PhaseState(z.theta, exact_flow(fam, z, t).r[:-1] + (mpf(0),)))
            except PrecisionError:  # phase too fine to resolve: fall back to the amplitude bound
                disp = cn.knorm * _psi_abs(fam, cn, s) - mpmath.fsum(2 * c.knorm * _psi_abs(fam, c, s) for c in others)
            reached = disp - N
            count += 1
            if reached <= N:
                all_ok = False
            if worst_reached is None or reached < worst_reached:
                worst_reached, worst_z = reached, z
            tt = LogAmplitude.from_value(t)
            if tt > worst_t:
                worst_t = tt
    status = "certified" if box_certified and all_ok else ("grid-verified" if all_ok else "failed")
    bound_n = LogAmplitude.from_value(N) ** (-n) * LogAmplitude.from_value(cn.knorm) * LogAmplitude.from_log(cn.knorm / N)
    return _report(prop, worst_z, worst_t, N, worst_reached, status, LogAmplitude.from_value(tau_n),
                   grid_points=count, box_certificate_margin=box_margin, box_certified=bool(box_certified),
                   amplitude_bound=bound_n, tau_n=LogAmplitude.from_value(tau_n))


def half_space_oscillation(fam: HamiltonianFamily, s_values: Sequence, times: Sequence, grid: int = 3) -> dict:
    """For s < 0, the largest observed |r~(t) - r~(0)| against the closed-form bound sum 2 |k_j| |psi_j(s)|."""
    d = fam.d
    worst_ratio = mpf(0)
    checks = 0
    for s in s_values:
        s = to_mpf(s)
        for th in itertools.product([mpf(i) / grid for i in range(grid)], repeat=d - 1):
            z = PhaseState(tuple(th) + (mpf(0),), (mpf(0),) * (d - 1) + (s,))
            bound = oscillation_bound(fam, z)
            for t in times:
                disp = max(abs(x) for x in exact_flow(fam, z, t).r[:-1])
                checks += 1
                worst_ratio = max(worst_ratio, disp / bound)
    return {"worst_ratio": worst_ratio, "checks": checks, "holds": bool(worst_ratio <= 1)}


def trajectory_samples(fam: HamiltonianFamily, z: PhaseState, t_end: LogAmplitude, count: int = 1000,
                       decades: int = 12) -> list[tuple[mpf, PhaseState]]:
    """exact_flow at ``count`` log-spaced times ending at t_end."""
    hi = t_end.log_mag
    lo = hi - decades * mpmath.log(10)
    out = []
    for i in range(count):
        t = mpmath.exp(lo + (hi - lo) * i / (count - 1))
        out.append((t, exact_flow(fam, z, t)))
    return out


def write_trajectory_csv(path, fam: HamiltonianFamily, samples, method: str = "closed_form") -> None:
    from .hamiltonian import eval_H

    d = fam.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"theta{i + 1}" for i in range(d)] + [f"r{i + 1}" for i in range(d)] + ["H", "method"])
        for t, z in samples:
            w.writerow([to_decimal(t)] + [to_decimal(x) for x in z.theta] + [to_decimal(x) for x in z.r]
                       + [to_decimal(eval_H(fam, z)), method])


__all__ = [
    "PropertyId", "DiffusionReport", "canonical_initial_condition", "decompose_AB", "escape_time",
    "check_property", "predicted_escape_time", "PredicateMismatchError", "NonCanonicalStateError",
    "b_bound", "half_space_oscillation", "trajectory_samples", "write_trajectory_csv", "bound_scale",
    "PREDICATE_VARIANT", "distance",
]

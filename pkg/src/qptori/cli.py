"""Command-line runner: build families, certify them, check diffusion predicates.

Exit codes: 0 pass, 1 certified failure, 2 usage or parse error,
3 precision or capacity error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import mpmath
from mpmath import mp, mpf

from .arithmetic import (
    BAR,
    CONST,
    HAT,
    FrequencyVector,
    construct_superliouville,
    diophantine_check,
    extend_frequency,
    parse_component,
    resonance_sequence,
)
from .diffusion import (
    PREDICATE_VARIANT,
    PredicateMismatchError,
    PropertyId,
    check_property,
    trajectory_samples,
    write_trajectory_csv,
)
from .flow import exact_flow, numeric_flow
from .hamiltonian import (
    CouplingSchedule,
    DivergentBoundError,
    HamiltonianFamily,
    NoCandidateError,
    build_family,
    choose_next_k,
    tail_bound,
)
from .normalform import (
    UnsupportedVariant,
    bnf_remainder_order,
    increments,
    near_identity_radius,
    random_points,
    regularity_family,
    regularity_probe,
    verify_conjugacy,
)
from .numerics import CapacityError, LogAmplitude, PrecisionError, to_decimal
from .state import PhaseState

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_PRECISION = 0, 1, 2, 3

# theorem tag -> (frequency map, schedule variant)
THEOREMS = {
    "th1": (HAT, "i"),
    "th2": (HAT, "ii"),
    "th03a": (CONST, "iii"),
    "th03b": (CONST, "iv"),
    "th3": (CONST, "v"),
    "th3bis": (CONST, "vi"),
    "th4": (CONST, "vii"),
}
# Map overrides each theorem admits.
ALLOWED_MAPS = {"th1": (HAT, BAR)}
SUITES = ("conjugacy", "convergence", "bnf", "flow-oracle", "regularity")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_json(path: str) -> tuple[dict, str]:
    try:
        raw = Path(path).read_bytes()
        return json.loads(raw), _sha256(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def parse_config(cfg: dict) -> dict:
    """Validate an experiment config and fill defaults."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    tag = cfg.get("theorem")
    if tag not in THEOREMS:
        raise ConfigError(f"theorem must be one of {sorted(THEOREMS)}")
    default_map, variant = THEOREMS[tag]
    fmap = cfg.get("map", default_map)
    if fmap != default_map and fmap not in ALLOWED_MAPS.get(tag, ()):
        raise ConfigError(f"{tag} does not admit the {fmap!r} frequency map")
    if cfg.get("schedule_variant", variant) != variant:
        raise ConfigError(f"{tag} fixes schedule variant {variant}")
    d = int(cfg.get("d", 3))
    n = int(cfg.get("n", 2))
    if d < 3 or n < 1:
        raise ConfigError("need d >= 3 and n >= 1")
    freq = cfg.get("frequency", {})
    if fmap == CONST and "superliouville_depth" not in freq:
        freq = dict(freq, superliouville_depth=2)
    if fmap != CONST and "components" not in freq:
        raise ConfigError("hat/bar theorems need explicit frequency components")
    sched = cfg.get("schedule", {})
    if variant == "ii" and "C" not in sched:
        raise ConfigError("th2 needs schedule.C")
    if variant == "vi" and "l" not in sched:
        raise ConfigError("th3bis needs schedule.l")
    for key in ("C", "tau"):
        if key in sched and not isinstance(sched[key], str):
            raise ConfigError(f"schedule.{key} must be a decimal string")
    out = {
        "theorem": tag, "map": fmap, "variant": variant, "d": d, "n": n, "frequency": freq,
        "schedule": sched, "min_norm": int(cfg.get("min_norm", 5)), "growth": float(cfg.get("growth", 2)),
        "tau_opt": cfg.get("tau_opt"), "delta": cfg.get("delta"), "horizon": cfg.get("horizon", "1e3"),
        "precision_bits": int(cfg.get("precision_bits", mp.prec)),
    }
    if variant == "ii" and out["tau_opt"] is None and "tau" in sched:
        out["tau_opt"] = sched["tau"]
    return out


def build_omega(cfg: dict) -> FrequencyVector:
    freq = cfg["frequency"]
    if "components" in freq:
        comps = tuple(parse_component(str(c)) for c in freq["components"])
        if len(comps) != cfg["d"]:
            raise ConfigError("frequency components do not match d")
        return FrequencyVector(comps)
    omega, _ = construct_superliouville(cfg["d"], int(freq["superliouville_depth"]))
    return omega


def build_from_config(cfg: dict) -> tuple[HamiltonianFamily, list[dict]]:
    log: list[dict] = []
    omega = build_omega(cfg)
    sched_cfg = cfg["schedule"]
    schedule = CouplingSchedule(
        cfg["variant"],
        C=mpf(sched_cfg["C"]) if "C" in sched_cfg else None,
        l=int(sched_cfg["l"]) if "l" in sched_cfg else None,
    )
    n = cfg["n"]
    count = max(n - 1, 0)
    if cfg["map"] != CONST and "diophantine" in cfg["frequency"]:
        dc = cfg["frequency"]["diophantine"]
        cert = diophantine_check(omega, int(dc["K"]), mpf(dc["tau"]), mpf(dc["gamma"]))
        log.append({"step": "diophantine_check", "passed": cert.passed, "worst_k": list(cert.worst_k),
                    "worst_value": to_decimal(cert.worst_value)})
    fam = build_family(omega, cfg["map"], schedule, [], theorem=cfg["theorem"])
    if count:
        pool_size = count if cfg["delta"] is None else 3 * count
        seq = resonance_sequence(
            omega, cfg["map"], pool_size, growth=cfg["growth"],
            tau_opt=None if cfg["tau_opt"] is None else mpf(cfg["tau_opt"]),
            min_norm=cfg["min_norm"] if cfg["map"] != CONST else 1,
        )
        log.append({"step": "resonance_sequence", "found": len(seq), "requested": pool_size,
                    "shortfall": seq.shortfall, "reason": seq.reason,
                    "pairs": [p.to_json() for p in seq]})
        delta = math.inf if cfg["delta"] is None else mpf(cfg["delta"])
        for _ in range(count):
            try:
                pick = choose_next_k(fam, delta, mpf(cfg["horizon"]), list(seq))
            except NoCandidateError:
                if not fam.pairs:
                    raise
                break
            fam = fam.extend(pick)
            log.append({"step": "choose_next_k", "j": fam.n, "k": list(pick.k)})
        if fam.n < n:
            log.append({"step": "shortfall", "built_n": fam.n, "requested_n": n})
    meta = dict(fam.meta, theorem=cfg["theorem"])
    if cfg["variant"] == "ii":
        limit = schedule.C / (8 * mpmath.pi * cfg["d"])
        meta["analyticity_radius_limit"] = to_decimal(limit)
        meta["analyticity_radius_note"] = "rho must stay strictly below C/(8 pi d)"
    if cfg["tau_opt"] is not None:
        meta["tau_opt"] = str(cfg["tau_opt"])
    fam = HamiltonianFamily(fam.freq_map, fam.schedule, fam.pairs, fam.tolerance, meta)
    return fam, log


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def _s_range(fam: HamiltonianFamily):
    if fam.schedule.variant == "v":
        return (-1, mpf("-0.1"))
    R = near_identity_radius(fam)
    return (-R, R)


def suite_conjugacy(fam: HamiltonianFamily, seed: int, points: int = 100) -> dict:
    pts = random_points(fam, points, s_range=_s_range(fam), seed=seed) if fam.n > 1 else \
        [PhaseState((0,) * fam.d, (0,) * (fam.d - 1) + (mpf("0.5"),))]
    rep = verify_conjugacy(fam, pts)
    return {"passed": rep.passed, "max_residual": to_decimal(rep.max_residual), "points": rep.checked,
            "failures": len(rep.failures)}


def suite_convergence(fam: HamiltonianFamily, delta=1, rho=1) -> dict:
    if fam.schedule.variant == "ii":
        rho = min(mpf(rho), fam.schedule.C / (8 * mpmath.pi * fam.d) * mpf("0.9"))
    rows, ok = [], True
    prev = None
    for frm in range(1, fam.n):
        try:
            b = tail_bound(fam, frm, fam.n, delta, rho)
        except DivergentBoundError as exc:
            rows.append({"from": frm, "to": fam.n, "error": str(exc)})
            ok = False
            continue
        if prev is not None and b > prev:
            ok = False
        prev = b
        rows.append({"from": frm, "to": fam.n, "bound": b.to_json()})
    return {"passed": ok, "delta": to_decimal(mpf(delta)), "rho": to_decimal(mpf(rho)), "table": rows}


def suite_bnf(fam: HamiltonianFamily) -> dict:
    try:
        slopes = {P: bnf_remainder_order(fam, P) for P in (2, 3)}
    except UnsupportedVariant as exc:
        return {"passed": False, "error": str(exc)}
    ok = all(v >= P + mpf("0.9") for P, v in slopes.items())
    return {"passed": ok, "slopes": {str(P): to_decimal(v) for P, v in slopes.items()}}


def suite_flow_oracle(fam: HamiltonianFamily, seed: int, count: int = 5, t_end=1000) -> dict:
    pts = random_points(fam, count, s_range=(mpf("-0.5"), mpf("0.5")), seed=seed)
    worst = mpf(0)
    for z in pts:
        tr = numeric_flow(fam, z, t_end, 1e-13)
        ze = exact_flow(fam, z, t_end)
        zn = tr.states[-1]
        for a, wa, b, wb in zip(ze.theta, ze.winding, zn.theta, zn.winding):
            worst = max(worst, abs((a + wa) - (b + wb)))
        for a, b in zip(ze.r, zn.r):
            worst = max(worst, abs(a - b))
    return {"passed": bool(worst < mpf("1e-8")), "max_abs_difference": to_decimal(worst), "t_end": t_end}


def suite_regularity(fam: HamiltonianFamily, n_max: int = 6) -> dict:
    if fam.schedule.variant != "vi":
        return {"passed": False, "error": "regularity suite targets variant vi"}
    l = fam.schedule.l
    probe_fam = fam if fam.n >= n_max else regularity_family(l, n_max, fam.d)
    probe = PhaseState(tuple(mpmath.frac(mpmath.sqrt(p)) for p in (2, 3, 5, 7, 11)[: fam.d]),
                       (0,) * (fam.d - 1) + (mpf("0.5"),))
    res = {}
    for m in (l, l + 1):
        inc = increments(regularity_probe(probe_fam, m, probe, range(2, n_max + 1)))
        res[str(m)] = [to_decimal(x) for x in inc]
    conv = mpf(res[str(l)][-1]) < mpf("1e-6")
    div = mpf(res[str(l + 1)][-1]) > mpf("1e6")
    return {"passed": bool(conv and div), "order_l_convergent": bool(conv), "order_l_plus_1_divergent": bool(div),
            "increments": res, "probe_family": "own pairs" if probe_fam is fam else "default k-growth 2**(2**j)"}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _write(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _envelope(payload: dict, digest: str) -> dict:
    return dict(payload, config_sha256=digest, precision_bits=mp.prec)


def cmd_build(args) -> int:
    raw, digest = load_json(args.config)
    cfg = parse_config(raw)
    fam, log = build_from_config(cfg)
    out = _envelope({"family": fam.to_json(), "build_log": log}, digest)
    _write(args.out, out)
    return EXIT_PASS


def _load_family(path: str) -> tuple[HamiltonianFamily, str]:
    data, digest = load_json(path)
    if "family" in data:
        data = data["family"]
    try:
        return HamiltonianFamily.from_json(data), digest
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid family file: {exc}") from exc


def cmd_certify(args) -> int:
    fam, digest = _load_family(args.family)
    suite = args.suite
    if suite == "conjugacy":
        res = suite_conjugacy(fam, args.seed)
    elif suite == "convergence":
        res = suite_convergence(fam, mpf(args.delta), mpf(args.rho))
    elif suite == "bnf":
        res = suite_bnf(fam)
    elif suite == "flow-oracle":
        res = suite_flow_oracle(fam, args.seed)
    else:
        res = suite_regularity(fam)
    _write(args.out, _envelope({"suite": suite, **res}, digest))
    return EXIT_PASS if res["passed"] else EXIT_FAIL


def cmd_diffuse(args) -> int:
    fam, digest = _load_family(args.family)
    index = int(args.property.upper().lstrip("P"))
    n = args.n or fam.n
    C = fam.schedule.C if index == 2 else None
    tau = mpf(args.tau) if args.tau else (mpf(fam.meta["tau_opt"]) if "tau_opt" in fam.meta else None)
    if index == 2 and tau is None:
        raise ConfigError("P2 needs --tau")
    if PREDICATE_VARIANT[index] != fam.schedule.variant:
        raise PredicateMismatchError(f"P{index} applies to schedule {PREDICATE_VARIANT[index]}, "
                                     f"family has {fam.schedule.variant}")
    rep = check_property(fam, n, PropertyId(index, n, C, tau), grid=args.grid)
    payload = _envelope({"report": rep.to_json()}, digest)
    _write(args.out, payload)
    if args.csv and rep.witness is not None:
        t_end = rep.escape_time if rep.escape_time else LogAmplitude.from_value(1)
        try:
            samples = trajectory_samples(fam, rep.witness, t_end, 1000)
            write_trajectory_csv(args.csv, fam, samples)
        except PrecisionError:
            Path(args.csv).write_text("t,note\n,escape time too large for sampled trajectories\n")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_resonances(args) -> int:
    raw, digest = load_json(args.config)
    cfg = parse_config(raw)
    omega = build_omega(cfg)
    seq = resonance_sequence(omega, cfg["map"], args.count, growth=cfg["growth"],
                             tau_opt=None if cfg["tau_opt"] is None else mpf(cfg["tau_opt"]),
                             min_norm=cfg["min_norm"] if cfg["map"] != CONST else 1)
    _write(args.out, _envelope({"pairs": [p.to_json() for p in seq], "shortfall": seq.shortfall,
                                "reason": seq.reason, "omega": omega.to_json()}, digest))
    return EXIT_PASS if seq.complete else EXIT_FAIL


def cmd_extend(args) -> int:
    raw, digest = load_json(args.config)
    comps = tuple(parse_component(str(c)) for c in raw["components"])
    cands = extend_frequency(comps, mpf(str(raw.get("tau", "2"))), int(raw.get("K", 20)),
                             int(raw.get("samples", 100)), tuple(mpf(str(x)) for x in raw.get("interval", ["1", "2"])),
                             seed=args.seed)
    _write(args.out, _envelope({"candidates": [{"omega_d": to_decimal(c.omega_d), "gamma": to_decimal(c.gamma),
                                                "worst_k": list(c.worst_k)} for c in cands],
                                "empty": not cands}, digest))
    return EXIT_PASS


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qptori", description=__doc__.splitlines()[0])
    p.add_argument("--precision-bits", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="verb", required=True)

    b = sub.add_parser("build", help="build a family from a config")
    b.add_argument("--config", required=True)
    b.add_argument("--out")
    b.set_defaults(func=cmd_build)

    c = sub.add_parser("certify", help="run a certification suite on a family file")
    c.add_argument("family")
    c.add_argument("--suite", choices=SUITES, required=True)
    c.add_argument("--delta", default="1")
    c.add_argument("--rho", default="1")
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    d = sub.add_parser("diffuse", help="check a diffusion predicate P1..P6")
    d.add_argument("family")
    d.add_argument("--property", required=True, choices=[f"P{i}" for i in range(1, 7)])
    d.add_argument("--n", type=int)
    d.add_argument("--tau")
    d.add_argument("--grid", type=int, default=5)
    d.add_argument("--out")
    d.add_argument("--csv")
    d.set_defaults(func=cmd_diffuse)

    r = sub.add_parser("resonances", help="list resonance pairs for a config")
    r.add_argument("--config", required=True)
    r.add_argument("--count", type=int, default=3)
    r.add_argument("--out")
    r.set_defaults(func=cmd_resonances)

    e = sub.add_parser("extend-frequency", help="sample Diophantine extensions of a frequency")
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_extend)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    mp.prec = args.precision_bits
    try:
        return args.func(args)
    except (NoCandidateError, DivergentBoundError, UnsupportedVariant) as exc:
        _error(exc)
        return EXIT_FAIL
    except (PrecisionError, CapacityError) as exc:
        _error(exc)
        return EXIT_PRECISION
    except (ValueError, KeyError) as exc:
        _error(exc)
        return EXIT_USAGE


def _error(exc: Exception) -> None:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

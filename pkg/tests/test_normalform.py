import json

import mpmath
import pytest
from mpmath import mpf

from conftest import const_family
from qptori.arithmetic import solve_resonance
from qptori.flow import exact_flow
from qptori.hamiltonian import CouplingSchedule, build_family, eval_H
from qptori.normalform import (
    CanonicalMap,
    ResonantDenominatorError,
    TrigPolynomial,
    UnsupportedVariant,
    bnf_coefficient,
    bnf_coefficient_p2,
    bnf_remainder_order,
    convergence_radius,
    default_probe_angles,
    h0,
    increments,
    psi_n,
    random_points,
    regularity_family,
    regularity_probe,
    symplectic_defect,
    verify_conjugacy,
)
from qptori.state import PhaseState


def unwrapped(z):
    return [t + w for t, w in zip(z.theta, z.winding)]


def h0_frequency(fam, w):
    """gradient of H_0 in the actions at w, by central differences."""
    h = mpf(10) ** -30
    out = []
    for i in range(fam.d):
        up = list(w.r)
        dn = list(w.r)
        up[i] += h
        dn[i] -= h
        out.append((h0(fam, PhaseState(w.theta, tuple(up))) - h0(fam, PhaseState(w.theta, tuple(dn)))) / (2 * h))
    return out


@pytest.fixture(scope="module")
def fam_v3(liouville3):
    return const_family(liouville3, "v", count=2)


@pytest.fixture(scope="module")
def hat5(omega, hat_pairs):
    """variant v on the hat map with four pairs (n = 5)."""
    return build_family(omega, "hat", "v", hat_pairs[:4])


def test_identity_at_order_one(omega):
    fam = build_family(omega, "hat", "i", [])
    pts = random_points(fam, 10, seed=2)
    rep = verify_conjugacy(fam, pts)
    assert rep.max_residual == 0 and rep.passed
    assert all(psi_n(fam, z) == z for z in pts)


def test_zero_angle_image(fam_v):
    z = PhaseState((0, 0, 0), (0, 0, mpf("-0.5")))
    w = psi_n(fam_v, z)
    assert w.r == z.r
    s = mpf("-0.5")
    expected = -(2 * s + 16 * s * s) * mpmath.exp(16 * s) / (2 * mpmath.pi)
    assert abs(unwrapped(w)[2] - expected) < mpf(10) ** -70
    assert abs(expected + mpf("1.6017e-4")) < mpf("1e-8")


def test_zero_angle_image_conjugates(fam_v):
    # the sign of the angle correction is fixed by H_n = H_0 o Psi_n on the full orbit
    z = PhaseState((0, 0, 0), (mpf("0.3"), mpf("-0.2"), mpf("-0.5")))
    t = mpf(3)
    lhs = psi_n(fam_v, exact_flow(fam_v, z, t))
    w = psi_n(fam_v, z)
    omega = h0_frequency(fam_v, w)
    for a, b, om in zip(unwrapped(lhs), unwrapped(w), omega):
        assert abs(a - (b + om * t)) < mpf(10) ** -40


def test_round_trip_variant_v(fam_v3, hat5):
    for fam, s_range in ((fam_v3, (-1, mpf("-0.1"))), (hat5, (-1, 1))):
        inv = CanonicalMap(fam).inverse()
        for z in random_points(fam, 100, s_range=s_range, seed=4):
            back = psi_n(inv, psi_n(fam, z))
            for a, b in zip(unwrapped(back) + list(back.r), unwrapped(z) + list(z.r)):
                assert abs(a - b) < mpf(10) ** -25


def test_conjugacy_variant_v_negative_half(fam_v3):
    pts = random_points(fam_v3, 100, s_range=(-1, mpf("-0.1")), seed=1)
    assert verify_conjugacy(fam_v3, pts).max_residual < mpf(10) ** -25


def test_conjugacy_variant_i_hat(fam_i):
    pts = random_points(fam_i, 100, seed=5)
    rep = verify_conjugacy(fam_i, pts)
    assert rep.passed and rep.checked == 100


def test_resonant_point_reported_not_fatal(fam_i):
    z = PhaseState((0, 0, 0), (0, 0, fam_i.pairs[0].s))
    with pytest.raises(ResonantDenominatorError):
        psi_n(fam_i, z)
    rep = verify_conjugacy(fam_i, [z] + random_points(fam_i, 3))
    assert not rep.passed and len(rep.failures) == 1 and rep.checked == 3


@pytest.mark.parametrize("which", ["i", "v", "vii"])
def test_symplectic(which, fam_i4, fam_v3, omega, hat_pairs):
    fam = {"i": fam_i4, "v": fam_v3, "vii": build_family(omega, "hat", "vii", hat_pairs[:3])}[which]
    s_range = (-1, mpf("-0.1")) if which == "v" else (-1, 1)
    for z in random_points(fam, 20, s_range=s_range, seed=9):
        assert symplectic_defect(fam, z) < mpf(10) ** -15


def test_flow_conjugacy(fam_i4):
    for z in random_points(fam_i4, 5, s_range=(mpf("0.05"), mpf("0.5")), seed=3):
        w = psi_n(fam_i4, z)
        omega = h0_frequency(fam_i4, w)
        for t in (mpf("0.5"), mpf(3), mpf(10)):
            img = psi_n(fam_i4, exact_flow(fam_i4, z, t))
            for a, b, om in zip(unwrapped(img), unwrapped(w), omega):
                assert abs(a - (b + om * t)) < mpf(10) ** -15
            assert all(abs(a - b) < mpf(10) ** -15 for a, b in zip(img.r, w.r))
            assert abs(h0(fam_i4, img) - eval_H(fam_i4, z)) < mpf(10) ** -25


# --- normal-form coefficients ---------------------------------------------


def test_p2_matches_closed_form(fam_i4, fam_v3, hat5):
    for fam in (fam_i4, fam_v3, hat5):
        a, b = bnf_coefficient(fam, 2), bnf_coefficient_p2(fam)
        assert len(a) == len(b) == 1
        k = fam.pairs[0].k
        assert abs(a.coefficient(k) - b.coefficient(k)) < mpf(10) ** -60 * abs(b.coefficient(k))


def test_p2_hat_formula(fam_i):
    k = (-7, 5)
    b0 = -7 + 5 * mpmath.sqrt(2)
    expected = mpmath.exp(-14) / b0 / (2 * mpmath.pi)
    assert abs(bnf_coefficient(fam_i, 2).coefficient(k) - expected) < mpf(10) ** -70


def test_p3_hat_formula(fam_i4):
    # c_j / b^(l+1) (-k_1)^l expansion of phi/(b0 + k_1 s)
    c2 = fam_i4.couplings()[0]
    c3 = fam_i4.couplings()[1]
    b2 = c2.beta.value()
    b3 = c3.beta.value()
    poly = bnf_coefficient(fam_i4, 3)
    two_pi = 2 * mpmath.pi
    e2 = mpmath.exp(-2 * c2.knorm) / b2 * (-c2.k[0] / b2) / two_pi
    e3 = mpmath.exp(-3 * c3.knorm) / b3 / two_pi
    assert abs(poly.coefficient(c2.k) - e2) < mpf(10) ** -60 * abs(e2)
    assert abs(poly.coefficient(c3.k) - e3) < mpf(10) ** -60 * abs(e3)


def test_p3_const_variant_v(fam_v3):
    poly = bnf_coefficient(fam_v3, 3)
    k2, k3 = fam_v3.pairs[0].k, fam_v3.pairs[1].k
    two_pi = 2 * mpmath.pi
    assert abs(poly.coefficient(k2) - mpf(16) / two_pi) < mpf(10) ** -70
    assert abs(poly.coefficient(k3) - 1 / two_pi) < mpf(10) ** -70


def test_p4_variant_v_includes_factorial(fam_v3):
    k2 = fam_v3.pairs[0].k
    assert abs(bnf_coefficient(fam_v3, 4).coefficient(k2) - mpf(16) ** 2 / 2 / (2 * mpmath.pi)) < mpf(10) ** -70


def test_variant_iv_fails_loudly(fam_iv):
    with pytest.raises(UnsupportedVariant):
        bnf_coefficient(fam_iv, 2)
    with pytest.raises(UnsupportedVariant):
        bnf_remainder_order(fam_iv, 2)


@pytest.mark.parametrize("P", [2, 3])
def test_remainder_order(fam_i4, fam_v3, P):
    assert bnf_remainder_order(fam_i4, P) >= P + mpf("0.9")
    assert bnf_remainder_order(fam_v3, P) >= P + mpf("0.9")


def test_remainder_order_trivial(omega):
    assert bnf_remainder_order(build_family(omega, "hat", "i", []), 2) == mpf("inf")


def test_convergence_radius(fam_i4):
    rad = convergence_radius(fam_i4)
    assert abs(rad - min(abs(p.s) for p in fam_i4.pairs)) < mpf(10) ** -60


def test_trig_polynomial_merges_and_serialises():
    p = TrigPolynomial.from_terms([((1, 2), mpf(1)), ((1, 2), mpf(2)), ((0, 1), mpf(-3)), ((4, 4), mpf(0))])
    assert len(p) == 2 and p.coefficient((1, 2)) == 3
    back = TrigPolynomial.from_json(json.loads(json.dumps(p.to_json())))
    theta = (mpf("0.1"), mpf("0.7"))
    assert abs(back(theta) - p(theta)) < mpf(10) ** -70
    h = mpf(10) ** -30
    fd = (p((theta[0] + h, theta[1])) - p((theta[0] - h, theta[1]))) / (2 * h)
    assert abs(p.gradient(theta)[0] - fd) < mpf(10) ** -25


# --- regularity probe -------------------------------------------------------


@pytest.fixture(scope="module")
def reg():
    return regularity_family(2, 6)


@pytest.fixture(scope="module")
def probe():
    return PhaseState(default_probe_angles(3), (0, 0, mpf("0.5")))


def oracle_increment(fam, probe, j, m):
    """|d^m/dtheta_1^m| of the j-th R~_1 correction, -psi k (2 pi k)^m sin(2 pi a + m pi/2)."""
    c = fam.couplings()[j - 2]
    k = c.k[0]
    psi = probe.s ** j * mpf(k) ** -3 / j**2
    a = k * probe.theta[0]
    return abs(psi * k * (2 * mpmath.pi * k) ** m * mpmath.sin(2 * mpmath.pi * a + m * mpmath.pi / 2))


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_probe_increments_match_term_oracle(reg, probe, m):
    inc = increments(regularity_probe(reg, m, probe, range(2, 7)))
    for j, got in zip(range(3, 7), inc):
        ref = oracle_increment(reg, probe, j, m)
        assert abs(got - ref) <= mpf(10) ** -20 * (1 + ref)


def test_order_l_increments_bounded_by_geometric_oracle(reg, probe):
    inc = increments(regularity_probe(reg, 2, probe, range(2, 7)))
    for j, x in zip(range(3, 7), inc):
        assert x <= (2 * mpmath.pi) ** 2 * mpf("0.5") ** j / j**2


def test_order_l_plus_one_increments_diverge(reg, probe):
    inc = increments(regularity_probe(reg, 3, probe, range(2, 7)))
    assert inc[-1] > mpf(10) ** 6
    assert inc[-1] > inc[-2] > inc[-3]


def test_order_zero_values_converge(reg, probe):
    vals = [x.value for x in regularity_probe(reg, 0, probe, range(2, 7))]
    bound = mpmath.fsum(mpf("0.5") ** j / j**2 * mpf(2 ** (2**j)) ** -2 for j in range(2, 7))
    assert all(abs(v) <= bound for v in vals)


def test_probe_guards(fam_v, reg):
    with pytest.raises(UnsupportedVariant):
        regularity_probe(fam_v, 1, PhaseState((0, 0, 0), (0, 0, mpf("0.5"))), [2])
    with pytest.raises(ValueError):
        regularity_probe(reg, 5, PhaseState((0, 0, 0), (0, 0, mpf("0.5"))), [2])
    with pytest.raises(ValueError):
        regularity_probe(reg, 1, PhaseState((0, 0, 0), (0, 0, 0)), [2])


def test_random_points_are_seeded_and_admissible(fam_i4):
    a = random_points(fam_i4, 10, seed=8)
    b = random_points(fam_i4, 10, seed=8)
    assert a == b
    for z in a:
        for c in fam_i4.couplings():
            assert abs(fam_i4.inner(c, z.s)) >= mpf("1e-3")


def test_variant_ii_conjugacy(omega, hat_pairs):
    fam = build_family(omega, "hat", CouplingSchedule("ii", C=1), hat_pairs[:4])
    assert verify_conjugacy(fam, random_points(fam, 30, seed=12)).passed


def test_inverse_direction_guard(fam_i):
    with pytest.raises(ValueError):
        CanonicalMap(fam_i, "sideways")


def test_near_identity_radius(liouville3, fam_i4):
    from qptori.normalform import near_identity_radius

    assert near_identity_radius(fam_i4) == 1
    fam = const_family(liouville3, "vii", count=2)
    R = near_identity_radius(fam)
    K = fam.pairs[1].norm
    # the 2^32 pair dominates: K R^3 e^{K R^2} = 1
    assert abs(K * R**3 * mpmath.exp(K * R * R) - 1) < mpf("0.01")
    pts = random_points(fam, 20, s_range=(-R, R), seed=2)
    assert verify_conjugacy(fam, pts).passed

import mpmath
import pytest
from mpmath import mp, mpf

from qptori.arithmetic import construct_superliouville, resonance_sequence, sqrt_vector
from qptori.hamiltonian import CouplingSchedule, build_family


@pytest.fixture(autouse=True)
def _precision():
    mp.prec = 256
    yield
    mp.prec = 256


@pytest.fixture(scope="session")
def omega():
    mp.prec = 256
    return sqrt_vector(1, 2, 3)


@pytest.fixture(scope="session")
def hat_pairs(omega):
    return resonance_sequence(omega, "hat", 4, min_norm=5).pairs


@pytest.fixture(scope="session")
def fam_i(omega, hat_pairs):
    """hat map, variant i, k2 = (-7, 5)."""
    return build_family(omega, "hat", "i", hat_pairs[:1])


@pytest.fixture(scope="session")
def fam_i4(omega, hat_pairs):
    return build_family(omega, "hat", "i", hat_pairs[:3])


@pytest.fixture(scope="session")
def liouville2():
    mp.prec = 256
    return construct_superliouville(3, 2)


@pytest.fixture(scope="session")
def liouville3():
    mp.prec = 256
    return construct_superliouville(3, 3)


def const_family(liouville, variant, count=1, **kw):
    w, _ = liouville
    sched = CouplingSchedule(variant, **kw)
    return build_family(w, "const", sched, resonance_sequence(w, "const", count).pairs)


@pytest.fixture(scope="session")
def fam_v(liouville2):
    return const_family(liouville2, "v")


@pytest.fixture(scope="session")
def fam_iv(liouville2):
    return const_family(liouville2, "iv")


def sqrt2():
    return mpmath.sqrt(2)


def s2_hat():
    return (5 * mpmath.sqrt(2) - 7) / 7


def close(a, b, rel):
    a, b = mpf(a), mpf(b)
    return abs(a - b) <= rel * max(abs(a), abs(b))

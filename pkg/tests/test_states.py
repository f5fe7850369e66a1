import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density
from qtoken.states import (
    KET0,
    KET1,
    KET_PLUS,
    DensityMatrix,
    PureQubit,
    fidelity_dm,
    haar_unitary,
    measure_projective,
    outcome_probability,
    overlap_pure,
)

angles = st.tuples(st.floats(0, math.pi), st.floats(0, 2 * math.pi, exclude_max=True))


def uhlmann_sqrtm(rho, sigma):
    # textbook route with scipy's general matrix square root
    s = scipy.linalg.sqrtm(rho)
    return float(np.real(np.trace(scipy.linalg.sqrtm(s @ sigma @ s))) ** 2)


def test_pure_qubit_rejects_out_of_range_angles():
    with pytest.raises(ValueError):
        PureQubit(-0.1, 0.0)
    with pytest.raises(ValueError):
        PureQubit(1.0, 2 * math.pi)


@given(angles)
def test_pure_qubit_vector_is_normalised_and_matches_bloch(a):
    q = PureQubit(*a)
    assert np.linalg.norm(q.vector) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(DensityMatrix.from_vector(q.vector).bloch, q.bloch, atol=1e-12)


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix(np.array([[1, 1], [0, 0]]))
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(2))
    with pytest.raises(ValueError):
        DensityMatrix(np.diag([1.5, -0.5]))
    rho = DensityMatrix(np.eye(3) / 3)
    assert rho.dim == 3
    with pytest.raises(ValueError):
        rho.entries[0, 0] = 0


def test_fidelity_examples():
    rho = KET_PLUS.to_density()
    assert fidelity_dm(rho, rho) == pytest.approx(1.0, abs=1e-12)
    assert fidelity_dm(KET0, KET1) == pytest.approx(0.0, abs=1e-12)
    assert fidelity_dm(KET0, KET_PLUS) == pytest.approx(0.5, abs=1e-12)


def test_fidelity_errors():
    with pytest.raises(ValueError):
        fidelity_dm(DensityMatrix.maximally_mixed(2), DensityMatrix.maximally_mixed(3))
    with pytest.raises(ValueError):
        fidelity_dm(np.diag([1.1, -0.1]), DensityMatrix.maximally_mixed(2))


def test_fidelity_matches_sqrtm_oracle(rng):
    for dim in (2, 3, 5):
        for _ in range(20):
            a, b = random_density(dim, rng), random_density(dim, rng)
            assert fidelity_dm(a, b) == pytest.approx(uhlmann_sqrtm(a, b), abs=1e-9)


def test_fidelity_rank_deficient_against_oracle(rng):
    a = random_density(4, rng, rank=1)
    b = random_density(4, rng, rank=2)
    v = np.linalg.eigh(a)[1][:, -1]
    assert fidelity_dm(a, b) == pytest.approx(float(np.real(v.conj() @ b @ v)), abs=1e-9)


@given(angles, angles)
def test_overlap_pure_matches_inner_product(a, b):
    qa, qb = PureQubit(*a), PureQubit(*b)
    direct = abs(np.vdot(qa.vector, qb.vector)) ** 2
    assert overlap_pure(qa, qb) == pytest.approx(direct, abs=1e-12)
    assert overlap_pure(qa, qb) == pytest.approx(overlap_pure(qb, qa), abs=1e-15)


def test_overlap_examples():
    q = PureQubit(1.1, 0.3)
    assert overlap_pure(q, q) == pytest.approx(1.0)
    assert overlap_pure(q, q.antipode()) == pytest.approx(0.0, abs=1e-15)
    assert overlap_pure(PureQubit(0.2, 1.0), PureQubit(0.2 + math.pi / 2, 1.0)) == pytest.approx(0.5)


def test_measure_projective_deterministic_cases(rng):
    q = PureQubit(0.7, 2.0)
    assert all(measure_projective(q, q, rng) == 1 for _ in range(200))
    assert all(measure_projective(q.antipode(), q, rng) == 0 for _ in range(200))


def test_measure_projective_orthogonal_frequency(rng):
    draws = [measure_projective(KET_PLUS, KET0, rng) for _ in range(100_000)]
    assert abs(np.mean(draws) - 0.5) < 0.005


def test_measure_projective_replay():
    q, axis = PureQubit(1.0, 0.5), PureQubit(2.0, 4.0)
    a = [measure_projective(q, axis, np.random.default_rng(5)) for _ in range(1)]
    b = [measure_projective(q, axis, np.random.default_rng(5)) for _ in range(1)]
    assert a == b


def test_mixed_state_outcome_probability(rng):
    rho = DensityMatrix(random_density(2, rng))
    axis = PureQubit(0.4, 1.2)
    proj = np.outer(axis.vector, axis.vector.conj())
    assert outcome_probability(rho, axis) == pytest.approx(np.trace(rho.entries @ proj).real, abs=1e-12)


def test_haar_unitary_is_unitary(rng):
    u = haar_unitary(16, rng)
    assert np.allclose(u.conj().T @ u, np.eye(16), atol=1e-10)

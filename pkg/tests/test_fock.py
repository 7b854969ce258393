import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slsync.fock import (
    DensityMatrix,
    DimensionMismatchError,
    FockSpace,
    TruncationError,
    annihilation,
    coherent_state,
    creation,
    dagger,
    default_dim,
    expectation,
    fock_projector,
    fock_tail_population,
    identity,
    min_eigenvalue,
    number_operator,
)
from tests.conftest import random_density


def test_annihilation_dim2():
    a = annihilation(FockSpace(2)).entries
    expected = np.zeros((2, 2), complex)
    expected[0, 1] = 1.0
    assert np.array_equal(a, expected)


def test_annihilation_dim3_entries():
    a = annihilation(FockSpace(3)).entries
    assert a[0, 1] == 1.0
    assert a[1, 2] == pytest.approx(np.sqrt(2))
    assert np.count_nonzero(a) == 2


def test_creation_is_adjoint():
    sp = FockSpace(2)
    adag = creation(sp).entries
    assert adag[1, 0] == 1.0
    assert np.array_equal(adag, dagger(annihilation(sp)).entries)


def test_dagger_identity_and_involution():
    sp = FockSpace(5)
    eye = identity(sp)
    assert np.array_equal(dagger(eye).entries, eye.entries)
    a = annihilation(sp)
    assert np.array_equal(dagger(dagger(a)).entries, a.entries)


def test_number_operator_from_ladder():
    sp = FockSpace(6)
    a = annihilation(sp)
    n = dagger(a).entries @ a.entries
    assert np.allclose(n, np.diag(np.arange(6)))
    assert np.allclose(number_operator(sp).entries, n)


def test_commutator_holds_off_last_level():
    sp = FockSpace(9)
    a = annihilation(sp).entries
    ad = a.conj().T
    comm = a @ ad - ad @ a
    # truncation breaks the canonical commutator only in the last level
    assert np.allclose(comm[:-1, :-1], np.eye(8))
    assert comm[-1, -1] == pytest.approx(-(sp.dim - 1))


def test_expectation_fock_states():
    sp = FockSpace(5)
    n_op = number_operator(sp)
    assert expectation(n_op, fock_projector(0, sp)) == 0
    assert expectation(n_op, fock_projector(2, sp)) == pytest.approx(2)


def test_expectation_coherent_eigenrelation():
    sp = FockSpace(20)
    rho = coherent_state(0.5, sp)
    assert expectation(annihilation(sp), rho) == pytest.approx(0.5, abs=1e-6)


def test_expectation_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        expectation(annihilation(FockSpace(4)), fock_projector(0, FockSpace(5)))


def test_coherent_vacuum():
    rho = coherent_state(0.0, FockSpace(4))
    assert np.array_equal(rho.entries, fock_projector(0, FockSpace(4)).entries)


def test_coherent_pure_and_unit_mean():
    sp = FockSpace(25)
    rho = coherent_state(1.0, sp)
    p = np.trace(rho.entries @ rho.entries).real
    assert p == pytest.approx(1.0, abs=1e-8)
    assert expectation(number_operator(sp), rho).real == pytest.approx(1.0, abs=1e-6)


def test_coherent_truncation_guard():
    with pytest.raises(TruncationError):
        coherent_state(2.0, FockSpace(10))  # |alpha|^2 = 4 > 10/4


def test_tail_population_examples():
    sp = FockSpace(4)
    assert fock_tail_population(fock_projector(0, sp), 2) == 0.0
    mixed = DensityMatrix(sp, np.eye(4, dtype=complex) / 4)
    assert fock_tail_population(mixed, 1) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        fock_tail_population(mixed, 4)


def test_default_dim_bounds():
    assert default_dim(1.0, 3.0) == 12
    assert 30 <= default_dim(1.0, 0.05) <= 60
    assert default_dim(1.0, 1e-4) == 60


def test_density_matrix_validation():
    sp = FockSpace(3)
    bad = np.eye(3, dtype=complex)
    with pytest.raises(ValueError, match="unit trace"):
        DensityMatrix(sp, bad)
    notherm = np.eye(3, dtype=complex) / 3
    notherm[0, 1] = 0.5
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix(sp, notherm)
    with pytest.raises(DimensionMismatchError):
        DensityMatrix(sp, np.eye(4, dtype=complex) / 4)
    with pytest.raises(ValueError):
        FockSpace(1)


def test_min_eigenvalue_diagnostic():
    sp = FockSpace(3)
    assert min_eigenvalue(fock_projector(1, sp)) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=9), st.integers(min_value=0, max_value=2**32))
def test_expectation_hermitian_is_real(dim, seed):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, dim)
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    herm = m + m.conj().T
    from slsync.fock import Operator

    val = expectation(Operator(FockSpace(dim), herm), rho)
    assert abs(val.imag) < 1e-10 * max(1.0, abs(val.real))


@settings(max_examples=20, deadline=None)
@given(
    st.floats(min_value=0.0, max_value=1.5),
    st.floats(min_value=-np.pi, max_value=np.pi),
)
def test_coherent_unit_trace_rank_one(r, phase):
    sp = FockSpace(24)
    rho = coherent_state(r * np.exp(1j * phase), sp)
    assert np.trace(rho.entries).real == pytest.approx(1.0, abs=1e-10)
    assert np.trace(rho.entries @ rho.entries).real == pytest.approx(1.0, abs=1e-8)

import numpy as np
import pytest

from slsync.fock import (
    DensityMatrix,
    FockSpace,
    annihilation,
    coherent_state,
    fock_projector,
)
from slsync.master import (
    DegenerateSteadyStateError,
    SteadyStateMethod,
    _null_space_solve,
    build_liouvillian,
    evolve,
    steady_state,
    validated_dim,
    vec,
)
from slsync.model import ModelParams, drift
from tests.conftest import random_density

STANDARD = ModelParams(drive=0.3, gamma2=1.0, gamma3=0.1, dim=14)


class TestLiouvillian:
    def test_matches_drift_on_random_states(self, rng):
        p = ModelParams(
            detuning=0.1, drive=0.4, squeezing=0.05, gamma2=0.9, gamma3=0.2, dim=7
        )
        liou = build_liouvillian(p)
        for _ in range(10):
            rho = random_density(rng, 7)
            lhs = (liou.matrix @ vec(rho.entries)).reshape((7, 7), order="F")
            rhs = drift(p, rho).entries
            assert np.abs(lhs - rhs).max() < 1e-10

    def test_trace_preservation_left_null_vector(self):
        p = ModelParams(drive=0.2, gamma2=1.5, gamma3=0.3, dim=6)
        liou = build_liouvillian(p)
        residual = np.abs(vec(np.eye(6)).conj() @ liou.matrix).max()
        assert residual < 1e-8

    def test_single_decay_spectrum_dim2(self):
        # gamma3-only generator on two levels: relaxation at gamma3,
        # coherence decay at gamma3/2 (twice), one conserved direction
        g3 = 0.37
        p = ModelParams(gamma2=1e-12, gamma3=g3, gamma1=1e-12, dim=2)
        liou = build_liouvillian(p)
        eigs = np.sort(np.linalg.eigvals(liou.matrix).real)
        assert np.allclose(eigs, [-g3, -g3 / 2, -g3 / 2, 0.0], atol=1e-9)


class TestSteadyState:
    def test_u1_symmetry_undriven(self):
        p = ModelParams(drive=0.0, gamma2=1.0, gamma3=0.1, dim=12)
        ss = steady_state(p)
        off_diag = ss.rho.entries - np.diag(np.diag(ss.rho.entries))
        assert np.abs(off_diag).max() < 1e-8
        a = annihilation(FockSpace(12)).entries
        assert abs(np.trace(a @ ss.rho.entries)) < 1e-8

    def test_residual_tolerance(self):
        ss = steady_state(STANDARD)
        assert ss.residual <= 1e-8
        assert ss.method == SteadyStateMethod.NULL_SPACE

    def test_agrees_with_long_time_integration(self):
        ss = steady_state(STANDARD)
        rho0 = coherent_state(1.0, FockSpace(14))
        endpoint = evolve(STANDARD, rho0, t_total=200.0, dt=1e-3)
        assert np.abs(endpoint.entries - ss.rho.entries).max() <= 1e-6

    def test_initial_condition_independence(self):
        ss = steady_state(STANDARD)
        for rho0 in (fock_projector(0, FockSpace(14)), coherent_state(1.2, FockSpace(14))):
            endpoint = evolve(STANDARD, rho0, t_total=120.0, dt=1e-3)
            assert np.abs(endpoint.entries - ss.rho.entries).max() <= 1e-6

    def test_baseline_coherence_decreases_with_gamma2(self):
        mags = []
        for g2 in (0.5, 1.0, 2.0, 3.0):
            p = ModelParams(drive=0.3, gamma2=g2, gamma3=0.1, dim=16)
            ss = steady_state(p)
            a = annihilation(FockSpace(16)).entries
            num = np.trace(a @ ss.rho.entries)
            den = np.trace(a.conj().T @ a @ ss.rho.entries).real
            mags.append(abs(num) / np.sqrt(den))
        assert all(m1 > m2 for m1, m2 in zip(mags, mags[1:]))

    def test_degenerate_null_space_rejected(self):
        # two-photon loss alone conserves parity: at least two invariant
        # states, which the trace-pinned double solve must flag
        sp = FockSpace(4)
        a = annihilation(sp).entries
        a2 = a @ a
        eye = np.eye(4)
        ldl = a2.conj().T @ a2
        liou = (
            np.kron(a2.conj(), a2)
            - 0.5 * np.kron(eye, ldl)
            - 0.5 * np.kron(ldl.T, eye)
        )
        with pytest.raises(DegenerateSteadyStateError):
            _null_space_solve(liou, 4)


class TestEvolve:
    def test_identity_generator_returns_input(self):
        p = ModelParams(gamma1=1e-12, gamma2=1e-12, dim=5)
        rho0 = coherent_state(0.8, FockSpace(5))
        out = evolve(p, rho0, t_total=1.0, dt=1e-2)
        assert np.abs(out.entries - rho0.entries).max() < 1e-10

    def test_fourth_order_self_convergence(self):
        rho0 = coherent_state(1.0, FockSpace(14))
        coarse = evolve(STANDARD, rho0, t_total=2.0, dt=2e-3)
        fine = evolve(STANDARD, rho0, t_total=2.0, dt=1e-3)
        assert np.abs(coarse.entries - fine.entries).max() <= 1e-8

    def test_trace_and_hermiticity_preserved(self):
        rho0 = coherent_state(1.0, FockSpace(14))
        out = evolve(STANDARD, rho0, t_total=5.0, dt=1e-3)
        assert abs(np.trace(out.entries) - 1) < 1e-8
        assert np.abs(out.entries - out.entries.conj().T).max() < 1e-8

    def test_argument_validation(self):
        rho0 = fock_projector(0, FockSpace(14))
        with pytest.raises(ValueError):
            evolve(STANDARD, rho0, t_total=-1.0)
        with pytest.raises(ValueError):
            evolve(STANDARD, rho0, t_total=1.0, dt=-1e-3)


class TestValidatedDim:
    def test_tail_criterion_at_small_gamma2(self):
        p = ModelParams(drive=0.3, gamma2=0.05, gamma3=0.1, dim=40)
        ss = steady_state(p)
        from slsync.fock import fock_tail_population

        assert fock_tail_population(ss.rho, 2) < 1e-6

    def test_escalates_undersized_start(self):
        p = ModelParams(drive=0.3, gamma2=0.1, gamma3=0.1, dim=16)
        dim, ss = validated_dim(p)
        assert dim > 16
        from slsync.fock import fock_tail_population

        assert fock_tail_population(ss.rho, 2) < 1e-6

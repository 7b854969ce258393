"""Unconditioned master equation: Liouvillian, steady state, time evolution.

The measurement-averaged dynamics is linear, so the generator is a
dim^2 x dim^2 matrix acting on column-stacked states. Steady states come
from a direct null-space solve (cheap and exact-to-roundoff at the
truncations used here), with long-time integration as fallback and as an
independent cross-check in the tests.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .fock import DensityMatrix, FockSpace, fock_tail_population
from .model import ModelParams, build_bundle

STEADY_RESIDUAL_TOL = 1e-8
TAIL_TOL = 1e-6

__all__ = [
    "Liouvillian",
    "SteadyState",
    "SteadyStateMethod",
    "build_liouvillian",
    "steady_state",
    "evolve",
    "validated_dim",
    "ConvergenceError",
    "DegenerateSteadyStateError",
]


class ConvergenceError(RuntimeError):
    """Steady-state solve failed to reach the residual tolerance."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class DegenerateSteadyStateError(RuntimeError):
    """The Liouvillian null space is not numerically one-dimensional."""


class SteadyStateMethod(enum.Enum):
    NULL_SPACE = "null-space"
    LONG_TIME = "long-time"


@dataclass(frozen=True)
class Liouvillian:
    """Generator matrix over column-stacked density matrices."""

    space: FockSpace
    matrix: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SteadyState:
    rho: DensityMatrix
    residual: float
    method: SteadyStateMethod


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stack a matrix."""
    return m.reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return v.reshape((dim, dim), order="F")


def build_liouvillian(params: ModelParams) -> Liouvillian:
    """Assemble L with L @ vec(rho) = vec(drift(rho)).

    Uses vec(A X B) = (B^T kron A) vec(X) for column stacking.
    """
    bundle = build_bundle(params)
    dim = params.dim
    eye = np.eye(dim)
    k = bundle.k_drift
    # K rho + rho K^dag
    mat = np.kron(eye, k) + np.kron(bundle.k_drift_dag.T, eye)
    for j in bundle.jumps:
        mat += np.kron(j.conj(), j)
    return Liouvillian(FockSpace(dim), mat)


def _residual(params: ModelParams, rho: np.ndarray) -> float:
    bundle = build_bundle(params)
    return float(np.abs(bundle.drift_matrix(rho)).max())


def _null_space_solve(matrix: np.ndarray, dim: int) -> np.ndarray:
    """Unit-trace element of a (numerically) 1-D null space.

    Replaces one row with the trace constraint and solves; doing it for
    two different rows flags a degenerate null space, where any single
    replacement would silently pick an arbitrary mixture.
    """
    n2 = dim * dim
    trace_row = vec(np.eye(dim)).astype(complex)

    solutions = []
    for row in (0, n2 - 1):
        m2 = matrix.copy()
        m2[row, :] = trace_row
        b = np.zeros(n2, dtype=complex)
        b[row] = 1.0
        try:
            sol = np.linalg.solve(m2, b)
        except np.linalg.LinAlgError:
            sol = None
        solutions.append(sol)

    ok = [s for s in solutions if s is not None and np.isfinite(s).all()]
    if not ok:
        # the trace constraint pins a unique state only when the null
        # space is one-dimensional; staying singular means it is not
        raise DegenerateSteadyStateError(
            "trace-pinned solves are singular for every pivot row; "
            "the generator has no unique invariant state"
        )
    if len(ok) == 2:
        r0 = unvec(ok[0], dim)
        r1 = unvec(ok[1], dim)
        r0 = r0 / np.trace(r0)
        r1 = r1 / np.trace(r1)
        if np.abs(r0 - r1).max() > 1e-6:
            raise DegenerateSteadyStateError(
                "two trace-pinned solves disagree; null space has rank > 1"
            )
    rho = unvec(ok[0], dim)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return rho


def steady_state(params: ModelParams) -> SteadyState:
    """Unique invariant state of the unconditioned master equation."""
    liou = build_liouvillian(params)
    try:
        rho = _null_space_solve(liou.matrix, params.dim)
        res = _residual(params, rho)
        if res <= STEADY_RESIDUAL_TOL:
            return SteadyState(
                DensityMatrix(liou.space, rho), res, SteadyStateMethod.NULL_SPACE
            )
    except DegenerateSteadyStateError:
        raise
    except ConvergenceError:
        res = np.inf

    # direct solve too inaccurate: relax toward the attractor instead
    rho0 = np.zeros((params.dim, params.dim), dtype=complex)
    rho0[0, 0] = 1.0
    rho = rho0
    t_chunk = 50.0 / params.gamma1
    dt = _default_evolve_dt(params)
    for _ in range(8):
        rho = _evolve_matrix(params, rho, t_chunk, dt)
        res = _residual(params, rho)
        if res <= STEADY_RESIDUAL_TOL:
            rho = 0.5 * (rho + rho.conj().T)
            rho /= np.trace(rho).real
            return SteadyState(
                DensityMatrix(liou.space, rho), res, SteadyStateMethod.LONG_TIME
            )
    raise ConvergenceError(
        f"steady state not converged: residual {res:.3e} after fallback", residual=res
    )


def _default_evolve_dt(params: ModelParams) -> float:
    scale = max(
        1.0,
        params.gamma2,
        params.gamma3,
        params.drive,
        abs(params.detuning),
        params.squeezing,
    )
    return 1e-3 / scale


def _evolve_matrix(params, rho, t_total, dt):
    """Fixed-step RK4 on the (linear) drift."""
    bundle = build_bundle(params)
    n_steps = max(1, int(round(t_total / dt)))
    h = t_total / n_steps
    drift = bundle.drift_matrix
    for _ in range(n_steps):
        k1 = drift(rho)
        k2 = drift(rho + 0.5 * h * k1)
        k3 = drift(rho + 0.5 * h * k2)
        k4 = drift(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


def evolve(
    params: ModelParams,
    rho0: DensityMatrix,
    t_total: float,
    dt: float | None = None,
) -> DensityMatrix:
    """Integrate the deterministic master equation for time ``t_total``."""
    if t_total <= 0:
        raise ValueError(f"t_total must be > 0, got {t_total}")
    if dt is None:
        dt = _default_evolve_dt(params)
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    rho = _evolve_matrix(params, rho0.entries, t_total, dt)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(FockSpace(params.dim), rho)


def validated_dim(params: ModelParams, tail_levels: int = 2) -> tuple[int, SteadyState]:
    """Truncation certified by the steady-state Fock tail.

    Starts from ``params.dim``, solves the steady state and checks that
    the top ``tail_levels`` levels carry < 1e-6 population; escalates the
    dimension by 25% (up to three times) until they do. Returns the
    certified dimension together with the steady state solved at it.
    """
    dim = params.dim
    last_exc = None
    for attempt in range(4):
        p = params.with_dim(dim)
        ss = steady_state(p)
        tail = fock_tail_population(ss.rho, tail_levels)
        if tail < TAIL_TOL:
            return dim, ss
        last_exc = tail
        dim = int(np.ceil(dim * 1.25))
    warnings.warn(
        f"Fock tail population {last_exc:.2e} still above {TAIL_TOL:.0e} "
        f"after escalating to dim={dim}; results may be truncation-limited",
        stacklevel=2,
    )
    p = params.with_dim(dim)
    return dim, steady_state(p)

"""Truncated Fock-space linear algebra.

Dense complex matrices over the lowest ``dim`` number states. Everything
else in the package (Hamiltonians, dissipators, trajectory integration)
is built on the small set of constructors and checks defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_WARN = -1e-6

__all__ = [
    "FockSpace",
    "Operator",
    "DensityMatrix",
    "annihilation",
    "creation",
    "number_operator",
    "identity",
    "dagger",
    "expectation",
    "coherent_state",
    "fock_projector",
    "fock_tail_population",
    "default_dim",
    "min_eigenvalue",
    "DimensionMismatchError",
    "TruncationError",
]


class DimensionMismatchError(ValueError):
    """Operands live on Fock spaces of different dimension."""


class TruncationError(ValueError):
    """Requested state cannot be represented faithfully at this truncation."""


@dataclass(frozen=True, slots=True)
class FockSpace:
    """Truncated bosonic Hilbert space spanned by |0>..|dim-1>."""

    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"Fock truncation needs dim >= 2, got {self.dim}")


@dataclass(frozen=True)
class Operator:
    """Dense complex square matrix acting on a truncated Fock space."""

    space: FockSpace
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise DimensionMismatchError(
                f"entries shape {m.shape} does not match dim {self.space.dim}"
            )
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.space.dim


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace state on a truncated Fock space.

    Hermiticity and trace are validated on construction; positivity is
    monitored by callers (see ``min_eigenvalue``), never enforced.
    """

    space: FockSpace
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise DimensionMismatchError(
                f"entries shape {m.shape} does not match dim {self.space.dim}"
            )
        herm_dev = np.abs(m - m.conj().T).max()
        if herm_dev > HERMITICITY_TOL:
            raise ValueError(f"state not Hermitian: max |rho - rho^dag| = {herm_dev:.3e}")
        tr_dev = abs(m.trace() - 1.0)
        if tr_dev > TRACE_TOL:
            raise ValueError(f"state not unit trace: |tr(rho) - 1| = {tr_dev:.3e}")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.space.dim


def _check_spaces(a, b):
    if a.space.dim != b.space.dim:
        raise DimensionMismatchError(
            f"dimension mismatch: {a.space.dim} vs {b.space.dim}"
        )


def annihilation(space: FockSpace) -> Operator:
    """Ladder-down operator: entries[n-1, n] = sqrt(n)."""
    n = np.arange(1, space.dim)
    m = np.zeros((space.dim, space.dim), dtype=complex)
    m[n - 1, n] = np.sqrt(n)
    return Operator(space, m)


def creation(space: FockSpace) -> Operator:
    """Ladder-up operator, the adjoint of ``annihilation``."""
    return dagger(annihilation(space))


def number_operator(space: FockSpace) -> Operator:
    return Operator(space, np.diag(np.arange(space.dim, dtype=float)).astype(complex))


def identity(space: FockSpace) -> Operator:
    return Operator(space, np.eye(space.dim, dtype=complex))


def dagger(op: Operator) -> Operator:
    """Conjugate transpose."""
    return Operator(op.space, op.entries.conj().T.copy())


def expectation(op: Operator, rho: DensityMatrix) -> complex:
    """Tr[op . rho]."""
    _check_spaces(op, rho)
    return complex(np.einsum("ij,ji->", op.entries, rho.entries))


def coherent_state(alpha: complex, space: FockSpace) -> DensityMatrix:
    """Pure coherent state |alpha><alpha|, renormalized after truncation.

    Requires |alpha|^2 <= dim/4 so the truncated tail is negligible.
    """
    nbar = abs(alpha) ** 2
    if nbar > space.dim / 4:
        raise TruncationError(
            f"|alpha|^2 = {nbar:.3g} exceeds dim/4 = {space.dim / 4:.3g}; "
            "increase the truncation"
        )
    amps = np.zeros(space.dim, dtype=complex)
    if alpha == 0:
        amps[0] = 1.0
    else:
        n = np.arange(space.dim)
        # log-space amplitudes keep large-n factorials finite
        log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, space.dim)))))
        mag = np.exp(-nbar / 2 + n * np.log(abs(alpha)) - 0.5 * log_fact)
        amps = mag * np.exp(1j * n * np.angle(alpha))
        amps /= np.linalg.norm(amps)
    rho = np.outer(amps, amps.conj())
    return DensityMatrix(space, rho)


def fock_projector(n: int, space: FockSpace) -> DensityMatrix:
    """Number state |n><n|."""
    if not 0 <= n < space.dim:
        raise ValueError(f"level {n} outside truncation 0..{space.dim - 1}")
    m = np.zeros((space.dim, space.dim), dtype=complex)
    m[n, n] = 1.0
    return DensityMatrix(space, m)


def fock_tail_population(rho: DensityMatrix, k: int) -> float:
    """Total population of the top ``k`` Fock levels.

    Small values certify that the truncation is wide enough for this state.
    """
    if not 1 <= k < rho.dim:
        raise ValueError(f"need 1 <= k < dim, got k={k}, dim={rho.dim}")
    return float(np.real(np.diag(rho.entries)[-k:]).sum())


def default_dim(gamma1: float, gamma2: float) -> int:
    """Starting truncation for a given gain/two-photon-loss balance.

    The limit-cycle photon number scales like gamma1/(2*gamma2); the
    number distribution around it is Poisson-like, so nbar plus a
    multiple of sqrt(nbar) covers the occupied levels. Callers should
    still confirm with ``fock_tail_population`` on the solved steady
    state (see master.validated_dim) and escalate if the tail is fat.
    """
    nbar = gamma1 / (2.0 * gamma2)
    est = math.ceil(nbar + 6.0 * math.sqrt(nbar) + 9.0)
    return int(min(max(est, 12), 60))


def min_eigenvalue(rho: DensityMatrix) -> float:
    """Smallest eigenvalue; positivity diagnostic (monitored, not enforced)."""
    return float(np.linalg.eigvalsh(rho.entries)[0])

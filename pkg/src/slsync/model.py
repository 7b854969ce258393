"""Physical model: Hamiltonian, dissipators, measurement back-action.

The conditioned state of the driven, squeezed Stuart-Landau oscillator
under homodyne monitoring evolves as

    d rho = { -i[H, rho] + gamma1 D[ad] rho + gamma2 D[a^2] rho
              + gamma3 D[a] rho } dt
            + sqrt(eta_d * gamma3) Hsup[a e^{-i theta}] rho dW

with

    H = -Delta ad a + i E (a - ad) + i eta (ad^2 e^{2i phi} - a^2 e^{-2i phi})
    D[L] rho    = L rho Ld - (Ld L rho + rho Ld L) / 2
    Hsup[L] rho = L rho + rho Ld - Tr[(L + Ld) rho] rho

All rates are in units of gamma1 = 1 and hbar = 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .fock import (
    DensityMatrix,
    DimensionMismatchError,
    FockSpace,
    Operator,
    annihilation,
    default_dim,
)

SQUEEZING_SOFT_LIMIT = 0.1

__all__ = ["ModelParams", "ModelBundle", "build_bundle", "hamiltonian",
           "dissipator", "measurement_superop", "drift"]


@dataclass(frozen=True)
class ModelParams:
    """All physical knobs plus the Fock truncation.

    detuning            Delta, drive minus oscillator frequency
    drive               E, harmonic drive amplitude
    squeezing           eta, two-photon drive amplitude
    squeezing_phase     phi, radians
    gamma1              negative damping (gain); 1 by unit convention
    gamma2              two-photon (nonlinear) damping
    gamma3              single-photon (linear) damping
    detector_efficiency eta_d in [0, 1]
    measurement_angle   theta, monitored quadrature angle, radians
    dim                 Fock truncation; derived from gamma2 when omitted
    """

    detuning: float = 0.0
    drive: float = 0.0
    squeezing: float = 0.0
    squeezing_phase: float = 0.0
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: float = 0.0
    detector_efficiency: float = 1.0
    measurement_angle: float = math.pi / 2
    dim: int | None = None

    def __post_init__(self):
        if self.gamma1 <= 0:
            raise ValueError(f"gamma1 must be > 0, got {self.gamma1}")
        if self.gamma2 <= 0:
            raise ValueError(f"gamma2 must be > 0, got {self.gamma2}")
        if self.gamma3 < 0:
            raise ValueError(f"gamma3 must be >= 0, got {self.gamma3}")
        if self.drive < 0:
            raise ValueError(f"drive must be >= 0, got {self.drive}")
        if self.squeezing < 0:
            raise ValueError(f"squeezing must be >= 0, got {self.squeezing}")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError(
                f"detector_efficiency must lie in [0, 1], got {self.detector_efficiency}"
            )
        if self.squeezing > SQUEEZING_SOFT_LIMIT:
            # the phase-coherence measure degrades once higher off-diagonal
            # bands build up; see metrics.coherence_profile
            warnings.warn(
                f"squeezing = {self.squeezing} exceeds the validity soft limit "
                f"{SQUEEZING_SOFT_LIMIT}; phase-coherence results may be unreliable",
                stacklevel=2,
            )
        if self.dim is None:
            object.__setattr__(self, "dim", default_dim(self.gamma1, self.gamma2))
        elif self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")

    @property
    def space(self) -> FockSpace:
        return FockSpace(self.dim)

    def with_dim(self, dim: int) -> "ModelParams":
        return replace(self, dim=dim)


class ModelBundle:
    """Operators for one parameter set, built once and shared read-only.

    The drift is evaluated millions of times per sweep; everything that
    does not depend on the state is assembled here. The measurement
    operator a e^{-i theta} is never materialized: theta enters as a
    scalar phase on the cached ``a`` products.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        dim = params.dim
        space = FockSpace(dim)
        a = annihilation(space).entries
        ad = a.conj().T.copy()
        self.a = a
        self.ad = ad
        self.n_op = ad @ a
        self.h = _hamiltonian_matrix(params)

        # jump operators with rates folded in: sqrt(rate) * L
        self.jumps = [
            math.sqrt(params.gamma1) * ad,
            math.sqrt(params.gamma2) * (a @ a),
        ]
        if params.gamma3 > 0:
            self.jumps.append(math.sqrt(params.gamma3) * a)

        # drift(rho) = K rho + rho Kd + sum_i J_i rho J_i^dag,
        # K = -iH - (1/2) sum_i J_i^dag J_i
        k = -1j * self.h
        for j in self.jumps:
            k -= 0.5 * (j.conj().T @ j)
        self.k_drift = np.ascontiguousarray(k)
        self.k_drift_dag = np.ascontiguousarray(k.conj().T)
        self.jump_dags = [np.ascontiguousarray(j.conj().T) for j in self.jumps]

        # fused right-multiplication block [Kd | J1d | J2d | (J3d)] for the
        # batched integrator: rho @ block yields every product in one GEMM
        self.right_block = np.ascontiguousarray(
            np.hstack([self.k_drift_dag] + self.jump_dags)
        )

        # homodyne coupling sqrt(eta_d * gamma3); zero switches the
        # measurement term off entirely
        self.meas_strength = math.sqrt(params.detector_efficiency * params.gamma3)
        # a e^{-i theta} and its adjoint, for the H-superoperator
        self.meas_op = a * np.exp(-1j * params.measurement_angle)
        self.meas_quad = self.meas_op + self.meas_op.conj().T

    @property
    def space(self) -> FockSpace:
        return FockSpace(self.params.dim)

    def drift_matrix(self, rho: np.ndarray) -> np.ndarray:
        """Deterministic master-equation generator applied to one state."""
        out = self.k_drift @ rho
        out += rho @ self.k_drift_dag
        for j, jd in zip(self.jumps, self.jump_dags):
            out += j @ rho @ jd
        return out


@lru_cache(maxsize=64)
def build_bundle(params: ModelParams) -> ModelBundle:
    return ModelBundle(params)


def _hamiltonian_matrix(params: ModelParams) -> np.ndarray:
    space = FockSpace(params.dim)
    a = annihilation(space).entries
    ad = a.conj().T
    h = -params.detuning * (ad @ a)
    h = h + 1j * params.drive * (a - ad)
    if params.squeezing != 0.0:
        ph = np.exp(2j * params.squeezing_phase)
        h = h + 1j * params.squeezing * ((ad @ ad) * ph - (a @ a) * np.conj(ph))
    return np.ascontiguousarray(h)


def hamiltonian(params: ModelParams) -> Operator:
    """Rotating-frame Hamiltonian: drive, detuning, two-photon squeeze."""
    return Operator(FockSpace(params.dim), _hamiltonian_matrix(params))


def dissipator(op: Operator, rho: DensityMatrix) -> Operator:
    """Lindblad channel D[L] rho; traceless, Hermitian for Hermitian rho."""
    if op.space.dim != rho.space.dim:
        raise DimensionMismatchError(
            f"dimension mismatch: {op.space.dim} vs {rho.space.dim}"
        )
    l_mat = op.entries
    r = rho.entries
    ldl = l_mat.conj().T @ l_mat
    out = l_mat @ r @ l_mat.conj().T - 0.5 * (ldl @ r + r @ ldl)
    return Operator(op.space, out)


def measurement_superop(op: Operator, rho: DensityMatrix) -> Operator:
    """Homodyne back-action Hsup[L] rho; nonlinear through the trace term."""
    if op.space.dim != rho.space.dim:
        raise DimensionMismatchError(
            f"dimension mismatch: {op.space.dim} vs {rho.space.dim}"
        )
    l_mat = op.entries
    r = rho.entries
    lin = l_mat @ r + r @ l_mat.conj().T
    mean = np.einsum("ij,ji->", l_mat + l_mat.conj().T, r)
    return Operator(op.space, lin - mean * r)


def drift(params: ModelParams, rho: DensityMatrix) -> Operator:
    """Deterministic part of the master equation (coefficient of dt)."""
    if rho.space.dim != params.dim:
        raise DimensionMismatchError(
            f"state dim {rho.space.dim} does not match params dim {params.dim}"
        )
    bundle = build_bundle(params)
    return Operator(bundle.space, bundle.drift_matrix(rho.entries))

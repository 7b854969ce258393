"""Scalar observables: phase coherence, purity, enhancement factors.

The headline quantity is the enhancement factor F = |S_HD| / |S0|: the
trajectory-averaged phase coherence under homodyne monitoring relative
to the unconditioned steady-state baseline.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import _rng
from .fock import DensityMatrix, FockSpace, annihilation, number_operator
from .master import SteadyState, steady_state, validated_dim
from .model import ModelParams, build_bundle
from .trajectory import EnsembleResult, SdeConfig, run_ensemble

VACUUM_GUARD = 1e-10
BAND_RATIO_LIMIT = 0.1

__all__ = [
    "CoherenceSample",
    "EnhancementReport",
    "phase_coherence",
    "purity",
    "enhancement",
    "coherence_profile",
    "sample_run_statistics",
    "CoherenceUndefinedError",
]


class CoherenceUndefinedError(ValueError):
    """Phase coherence is 0/0 for states with no photons."""


@dataclass(frozen=True)
class CoherenceSample:
    """Phase coherence S = Tr[a rho] / sqrt(Tr[ad a rho])."""

    S: complex
    magnitude: float
    phi_avg: float


@dataclass(frozen=True)
class EnhancementReport:
    """Monitored-vs-unconditioned comparison at one parameter point."""

    F: float
    F_purity: float
    S0: CoherenceSample
    S_HD: complex
    P0: float
    P_HD: float
    mc_stderr_F: float
    ensemble: EnsembleResult
    steady: SteadyState


def phase_coherence(rho: DensityMatrix) -> CoherenceSample:
    """Degree and mean angle of phase locking for one state."""
    space = rho.space
    num = np.einsum("ij,ji->", annihilation(space).entries, rho.entries)
    den = np.einsum("ij,ji->", number_operator(space).entries, rho.entries).real
    if den <= VACUUM_GUARD:
        raise CoherenceUndefinedError(
            f"mean photon number {den:.3e} below {VACUUM_GUARD:.0e}; "
            "phase coherence undefined near vacuum"
        )
    s = complex(num / math.sqrt(den))
    return CoherenceSample(S=s, magnitude=abs(s), phi_avg=float(np.angle(s)))


def purity(rho: DensityMatrix) -> float:
    """Tr[rho^2]."""
    return float(np.einsum("ij,ij->", rho.entries, rho.entries.conj()).real)


def coherence_profile(rho: DensityMatrix, k_max: int) -> list[float]:
    """Total weight of each off-diagonal band, k = 1 .. k_max.

    The phase-coherence measure is trustworthy while bands beyond the
    first stay negligible; under squeezing the second band grows.
    """
    if not 1 <= k_max < rho.dim:
        raise ValueError(f"need 1 <= k_max < dim, got {k_max}")
    m = np.abs(rho.entries)
    return [float(np.trace(m, offset=k)) for k in range(1, k_max + 1)]


def check_coherence_validity(rho: DensityMatrix) -> float:
    """Band-2 / band-1 weight ratio; warns above the validity threshold."""
    bands = coherence_profile(rho, 2)
    ratio = bands[1] / bands[0] if bands[0] > 0 else 0.0
    if ratio > BAND_RATIO_LIMIT:
        warnings.warn(
            f"second off-diagonal band ratio {ratio:.3f} exceeds "
            f"{BAND_RATIO_LIMIT}; phase-coherence values may be unreliable",
            stacklevel=2,
        )
    return ratio


def _stderr_of_magnitude_mean(s_samples: np.ndarray) -> float:
    """Standard error of the mean coherence magnitude."""
    n = len(s_samples)
    if n < 2:
        return float("nan")
    return float(np.abs(s_samples).std(ddof=1) / math.sqrt(n))


def enhancement(
    params: ModelParams,
    cfg: SdeConfig,
    n_traj: int,
    executor=None,
    derive_dim: bool = False,
    steady: SteadyState | None = None,
) -> EnhancementReport:
    """Full monitored-vs-unconditioned comparison at one parameter point.

    With ``derive_dim`` the truncation is re-validated from the steady
    state (and escalated if the Fock tail is fat) before anything runs.
    """
    if derive_dim and steady is None:
        dim, steady = validated_dim(params)
        params = params.with_dim(dim)
    if steady is None:
        steady = steady_state(params)
    s0 = phase_coherence(steady.rho)
    if s0.magnitude == 0.0:
        raise CoherenceUndefinedError(
            "unconditioned baseline has no phase preference (|S0| = 0); "
            "enhancement is undefined without a drive"
        )
    p0 = purity(steady.rho)
    if params.squeezing > 0:
        check_coherence_validity(steady.rho)

    ens = run_ensemble(params, cfg, n_traj, rho0=steady.rho, executor=executor)
    f = abs(ens.S_HD) / s0.magnitude
    stderr = _stderr_of_magnitude_mean(ens.s_samples)
    return EnhancementReport(
        F=f,
        F_purity=ens.purity_HD / p0,
        S0=s0,
        S_HD=ens.S_HD,
        P0=p0,
        P_HD=ens.purity_HD,
        mc_stderr_F=stderr / s0.magnitude if math.isfinite(stderr) else float("nan"),
        ensemble=ens,
        steady=steady,
    )


def sample_run_statistics(
    params: ModelParams,
    cfg: SdeConfig,
    n_traj: int,
    n_runs: int,
    executor=None,
    steady: SteadyState | None = None,
) -> tuple[float, float]:
    """Mean and sample standard deviation of F over repeated ensembles.

    Each run re-derives its ensemble seed from ``cfg.seed`` and the run
    index, so runs are independent but the whole experiment is
    reproducible from one seed.
    """
    if n_runs < 2:
        raise ValueError(f"n_runs must be >= 2, got {n_runs}")
    if steady is None:
        steady = steady_state(params)
    s0 = phase_coherence(steady.rho)
    fs = np.empty(n_runs)
    for r in range(n_runs):
        run_cfg = replace(cfg, seed=_rng.run_seed(cfg.seed, r))
        ens = run_ensemble(params, run_cfg, n_traj, rho0=steady.rho, executor=executor)
        fs[r] = abs(ens.S_HD) / s0.magnitude
    return float(fs.mean()), float(fs.std(ddof=1))

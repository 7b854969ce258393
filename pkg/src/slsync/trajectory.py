"""Stochastic master equation integration and trajectory ensembles.

Euler-Maruyama on the normalized (nonlinear) conditioned equation with
per-step trace renormalization and defensive re-Hermitization:

    rho' = rho + drift(rho) dt + sqrt(eta_d gamma3) Hsup[a e^{-i theta}] rho dW

The integrator works on blocks of trajectories stacked into one
(B, dim, dim) tensor so each step costs a handful of large GEMMs instead
of thousands of tiny ones. Writing K = -iH - (1/2) sum_i Jd_i J_i, every
product the step needs is a *right* multiplication of Hermitian states:

    rho K_d, rho Jd_i  ->  one fused GEMM against [K_d | Jd_1 | ...]
    K rho = (rho K_d)^dag,  J_i rho Jd_i = (rho Jd_i)^dag Jd_i

Noise is drawn per trajectory from counter-based Philox streams keyed by
a splitmix derivation of (seed, trajectory index), so ensemble output is
a pure function of (seed, params, config, n_traj) regardless of block
scheduling or worker count; blocks reduce in fixed index order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _rng
from .fock import DensityMatrix, FockSpace
from .model import ModelBundle, ModelParams, build_bundle

BLOCK_SIZE = 64
NOISE_CHUNK = 1024
POSITIVITY_GATE = -1e-4
DT_RATE_LIMIT = 0.05

__all__ = [
    "SdeConfig",
    "TrajectoryResult",
    "EnsembleResult",
    "StepFailureError",
    "sme_step",
    "run_trajectory",
    "run_ensemble",
]


class StepFailureError(RuntimeError):
    """A step produced a non-positive or non-finite trace (dt too large)."""

    def __init__(self, msg, seed=None):
        super().__init__(msg)
        self.seed = seed


@dataclass(frozen=True)
class SdeConfig:
    """Integration controls for conditioned trajectories.

    dt         step, units of 1/gamma1
    t_burn     relaxation time before sampling starts
    t_end      total integrated time (>= t_burn); with time_average off,
               observables are sampled once, at t_end
    seed       base seed; per-trajectory streams derive from it
    renormalize_every_step   divide by the trace after every step
    time_average             average per-trajectory samples over
                             [t_burn, t_end] instead of the endpoint only
    sample_stride            steps between samples in time_average mode
    positivity_interval      steps between positivity spot-checks
    auto_halve_dt            retry once at dt/2 if min eigenvalue dips
                             below the positivity gate
    """

    dt: float = 5e-4
    t_burn: float = 30.0
    t_end: float = 30.0
    seed: int = 0
    renormalize_every_step: bool = True
    time_average: bool = False
    sample_stride: int = 100
    positivity_interval: int = 500
    auto_halve_dt: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.t_burn < 0:
            raise ValueError(f"t_burn must be >= 0, got {self.t_burn}")
        if self.t_end < self.t_burn:
            raise ValueError(f"t_end ({self.t_end}) < t_burn ({self.t_burn})")
        if self.sample_stride < 1 or self.positivity_interval < 1:
            raise ValueError("sample_stride and positivity_interval must be >= 1")

    def validate_for(self, params: ModelParams) -> None:
        """Step-size sanity bound against the fastest model rate."""
        nbar = params.gamma1 / (2.0 * params.gamma2)
        rate = max(
            params.gamma1,
            params.gamma2 * nbar,
            params.gamma3,
            params.drive,
            abs(params.detuning),
            params.squeezing,
        )
        if self.dt * rate > DT_RATE_LIMIT:
            raise ValueError(
                f"dt = {self.dt} too large: dt * max rate = {self.dt * rate:.3g} "
                f"> {DT_RATE_LIMIT}"
            )


@dataclass(frozen=True)
class TrajectoryResult:
    """Observables of a single conditioned trajectory."""

    rho_final: DensityMatrix
    S_k: complex
    purity_k: float
    record_mean: float
    seed: int
    min_eig_seen: float


@dataclass(frozen=True)
class EnsembleResult:
    """Trajectory-ensemble averages and Monte Carlo diagnostics."""

    S_HD: complex
    purity_HD: float
    n_traj: int
    rho_mean: DensityMatrix
    mc_stderr_S: float
    s_samples: np.ndarray = field(repr=False)
    purity_samples: np.ndarray = field(repr=False)
    entry_stderr: np.ndarray = field(repr=False)
    min_eig_seen: float = 0.0
    max_herm_dev: float = 0.0
    dt_used: float = 0.0
    seed: int = 0


@dataclass
class _BlockPartial:
    """Reduction-ready accumulators from one trajectory block."""

    start: int
    s_samples: np.ndarray
    purity_samples: np.ndarray
    record_means: np.ndarray
    min_eigs: np.ndarray
    max_herm_dev: float
    rho_sum: np.ndarray
    rho_abs2_sum: np.ndarray
    rho_final: np.ndarray  # states of the block, for single-trajectory use


def sme_step(
    params: ModelParams, rho: DensityMatrix, dW: float, dt: float
) -> tuple[DensityMatrix, float]:
    """One Euler-Maruyama step; returns the new state and the record
    increment dY evaluated at the pre-step state."""
    bundle = build_bundle(params)
    r = rho.entries
    g = bundle.meas_strength
    w = float(np.einsum("ij,ji->", bundle.meas_quad, r).real)
    d_y = g * w * dt + dW
    new = r + dt * bundle.drift_matrix(r)
    if g != 0.0:
        back_action = bundle.meas_op @ r + r @ bundle.meas_op.conj().T - w * r
        new += (g * dW) * back_action
    new = 0.5 * (new + new.conj().T)
    tr = float(new.trace().real)
    if not math.isfinite(tr) or tr <= 0.0:
        raise StepFailureError(f"step produced trace {tr}; reduce dt")
    new /= tr
    return DensityMatrix(rho.space, new), d_y


def _integrate_block(
    bundle: ModelBundle,
    cfg: SdeConfig,
    rho0: np.ndarray,
    start: int,
    size: int,
) -> _BlockPartial:
    """Integrate trajectories [start, start+size) as one batched tensor."""
    d = bundle.params.dim
    n_steps = int(round(cfg.t_end / cfg.dt))
    burn_steps = int(round(cfg.t_burn / cfg.dt))
    dt = cfg.t_end / n_steps if n_steps > 0 else cfg.dt
    sqrt_dt = math.sqrt(dt)

    rho = np.broadcast_to(rho0, (size, d, d)).copy()
    gens = _rng.wiener_generators(cfg.seed, range(start, start + size))
    seeds = [_rng.trajectory_key(cfg.seed, k) for k in range(start, start + size)]

    right = bundle.right_block
    jump_dags = bundle.jump_dags
    n_jump = len(jump_dags)
    g = bundle.meas_strength
    meas_on = g != 0.0
    if meas_on:
        # rho c^dag = s * (rho Jd_a) with J_a = sqrt(gamma3) a
        s_meas = np.exp(1j * bundle.params.measurement_angle) / math.sqrt(
            bundle.params.gamma3
        )
        a_slot = n_jump  # sqrt(gamma3) a is always the last jump when present

    n_blocks = 1 + n_jump
    y_buf = np.empty((size * d, n_blocks * d), dtype=complex)
    y_view = y_buf.reshape(size, d, n_blocks * d)
    ct_buf = np.empty((size, d, d), dtype=complex)
    sandwich = np.empty((size * d, d), dtype=complex)
    det_buf = np.empty((size, d, d), dtype=complex)
    sto_buf = np.empty((size, d, d), dtype=complex)
    rho2d = rho.reshape(size * d, d)

    record_sum = np.zeros(size)
    min_eigs = np.full(size, np.inf)
    max_herm_dev = 0.0
    s_accum = np.zeros(size, dtype=complex)
    p_accum = np.zeros(size)
    n_samples = 0

    a_mat = bundle.a
    n_mat = bundle.n_op

    def sample_state():
        nonlocal n_samples, s_accum, p_accum
        num = np.einsum("ij,nji->n", a_mat, rho)
        den = np.einsum("ij,nji->n", n_mat, rho).real
        if np.any(den <= 1e-12):
            raise StepFailureError(
                "mean photon number vanished; phase coherence undefined",
                seed=seeds[int(np.argmin(den))],
            )
        s_accum += num / np.sqrt(den)
        p_accum += np.einsum("nij,nij->n", rho, rho.conj()).real
        n_samples += 1

    def check_positivity():
        eigs = np.linalg.eigvalsh(rho)
        np.minimum(min_eigs, eigs[:, 0], out=min_eigs)

    noise = None
    noise_pos = NOISE_CHUNK
    for step in range(n_steps):
        if noise_pos >= NOISE_CHUNK:
            take = min(NOISE_CHUNK, n_steps - step)
            noise = np.stack([gen.standard_normal(take) for gen in gens])
            noise *= sqrt_dt
            noise_pos = 0
        d_w = noise[:, noise_pos]
        noise_pos += 1

        # one GEMM: rho @ [Kd | Jd_1 | ... ] for the whole block
        np.matmul(rho2d, right, out=y_buf)
        y_k = y_view[:, :, 0:d]

        # deterministic drift: (rho Kd)^dag + rho Kd + sum_i (rho Jd_i)^dag Jd_i
        np.conjugate(y_k.swapaxes(1, 2), out=det_buf)
        det_buf += y_k
        for i in range(n_jump):
            y_i = y_view[:, :, (i + 1) * d : (i + 2) * d]
            np.conjugate(y_i.swapaxes(1, 2), out=ct_buf)
            np.matmul(ct_buf.reshape(size * d, d), jump_dags[i], out=sandwich)
            det_buf += sandwich.reshape(size, d, d)

        if meas_on:
            y_a = y_view[:, :, a_slot * d : (a_slot + 1) * d]
            w = 2.0 * (s_meas * np.einsum("nii->n", y_a)).real
            # Hsup[c] rho = c rho + rho c^dag - w rho
            np.multiply(y_a, s_meas, out=sto_buf)
            np.conjugate(sto_buf.swapaxes(1, 2), out=ct_buf)
            sto_buf += ct_buf
            sto_buf -= w[:, None, None] * rho
            record_sum += g * w * dt + d_w
            coef = g * d_w
            rho += coef[:, None, None] * sto_buf
        else:
            record_sum += d_w

        det_buf *= dt
        rho += det_buf

        # defensive re-Hermitization, then trace renormalization
        done = step + 1
        np.conjugate(rho.swapaxes(1, 2), out=ct_buf)
        if done % cfg.positivity_interval == 0:
            dev = 0.5 * float(np.abs(rho - ct_buf).max())
            max_herm_dev = max(max_herm_dev, dev)
        rho += ct_buf
        rho *= 0.5
        tr = rho.reshape(size, d * d)[:, :: d + 1].sum(axis=1).real
        if not np.all(np.isfinite(tr)) or np.any(tr <= 0.0):
            bad = int(np.argmin(np.where(np.isfinite(tr), tr, -np.inf)))
            raise StepFailureError(
                f"trajectory {start + bad} trace became {tr[bad]}; reduce dt",
                seed=seeds[bad],
            )
        if cfg.renormalize_every_step:
            rho /= tr[:, None, None]

        if done % cfg.positivity_interval == 0:
            check_positivity()
        if cfg.time_average and done >= burn_steps:
            if (done - burn_steps) % cfg.sample_stride == 0:
                sample_state()

    if not cfg.renormalize_every_step:
        tr = rho.reshape(size, d * d)[:, :: d + 1].sum(axis=1).real
        rho /= tr[:, None, None]
    check_positivity()
    if n_samples == 0:
        sample_state()

    s_samples = s_accum / n_samples
    purity = p_accum / n_samples
    horizon = n_steps * dt if n_steps > 0 else 1.0
    return _BlockPartial(
        start=start,
        s_samples=s_samples,
        purity_samples=purity,
        record_means=record_sum / horizon,
        min_eigs=min_eigs,
        max_herm_dev=max_herm_dev,
        rho_sum=rho.sum(axis=0),
        rho_abs2_sum=(rho.real**2 + rho.imag**2).sum(axis=0),
        rho_final=rho,
    )


def _block_task(params: ModelParams, cfg: SdeConfig, rho0, start, size):
    return _integrate_block(build_bundle(params), cfg, rho0, start, size)


def _default_rho0(params: ModelParams) -> np.ndarray:
    # lazy import: master pulls in the Liouvillian machinery
    from .master import steady_state

    return steady_state(params).rho.entries


def run_trajectory(
    params: ModelParams, cfg: SdeConfig, rho0: DensityMatrix
) -> TrajectoryResult:
    """Integrate one conditioned trajectory (stream index 0 of cfg.seed)."""
    cfg.validate_for(params)
    if rho0.space.dim != params.dim:
        from .fock import DimensionMismatchError

        raise DimensionMismatchError(
            f"state dim {rho0.space.dim} does not match params dim {params.dim}"
        )
    part = _integrate_block(build_bundle(params), cfg, rho0.entries, 0, 1)
    s_k = complex(part.s_samples[0])
    if abs(s_k) > 1.0 + 1e-6:
        raise StepFailureError(f"|S_k| = {abs(s_k):.6f} violates the coherence bound")
    return TrajectoryResult(
        rho_final=DensityMatrix(FockSpace(params.dim), part.rho_final[0]),
        S_k=s_k,
        purity_k=float(part.purity_samples[0]),
        record_mean=float(part.record_means[0]),
        seed=_rng.trajectory_key(cfg.seed, 0),
        min_eig_seen=float(part.min_eigs[0]),
    )


def _gather_blocks(params, cfg, rho0, n_traj, executor):
    starts = list(range(0, n_traj, BLOCK_SIZE))
    sizes = [min(BLOCK_SIZE, n_traj - s) for s in starts]
    if executor is None:
        bundle = build_bundle(params)
        return [
            _integrate_block(bundle, cfg, rho0, s, z) for s, z in zip(starts, sizes)
        ]
    futures = [
        executor.submit(_block_task, params, cfg, rho0, s, z)
        for s, z in zip(starts, sizes)
    ]
    parts = [f.result() for f in futures]
    parts.sort(key=lambda p: p.start)
    return parts


def run_ensemble(
    params: ModelParams,
    cfg: SdeConfig,
    n_traj: int,
    rho0: DensityMatrix | None = None,
    executor=None,
) -> EnsembleResult:
    """Average ``n_traj`` independent trajectories.

    Trajectories start from the unconditioned steady state unless
    ``rho0`` is given. S_HD combines the mean coherence magnitude of the
    conditioned states with the phase of the complex sample mean; all
    raw complex samples are kept on the result for other reductions.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    cfg.validate_for(params)
    rho0_entries = rho0.entries if rho0 is not None else _default_rho0(params)

    effective = cfg
    for attempt in range(2):
        try:
            parts = _gather_blocks(params, effective, rho0_entries, n_traj, executor)
        except StepFailureError as exc:
            raise StepFailureError(
                f"ensemble aborted: {exc} (trajectory seed {exc.seed})", seed=exc.seed
            ) from exc
        min_eig = min(float(p.min_eigs.min()) for p in parts)
        if min_eig >= POSITIVITY_GATE or not effective.auto_halve_dt or attempt == 1:
            break
        warnings.warn(
            f"positivity diagnostic tripped (min eigenvalue {min_eig:.2e}); "
            f"retrying with dt = {effective.dt / 2}",
            stacklevel=2,
        )
        effective = replace(effective, dt=effective.dt / 2)

    s_samples = np.concatenate([p.s_samples for p in parts])
    purity_samples = np.concatenate([p.purity_samples for p in parts])
    if np.any(np.abs(s_samples) > 1.0 + 1e-6):
        raise StepFailureError(
            f"|S_k| up to {np.abs(s_samples).max():.6f} violates the coherence bound"
        )
    # Reduce the complex samples to mean magnitude at the mean locked
    # phase. A plain complex mean collapses to the unconditioned value
    # by construction (the trajectory average of rho reproduces the
    # master equation), hiding the per-trajectory phase localization
    # that monitoring buys; the mean magnitude is what grows with it.
    complex_mean = complex(s_samples.mean())
    locked_phase = np.angle(complex_mean) if complex_mean != 0 else 0.0
    s_hd = complex(np.abs(s_samples).mean() * np.exp(1j * locked_phase))
    rho_sum = sum(p.rho_sum for p in parts)
    abs2_sum = sum(p.rho_abs2_sum for p in parts)
    rho_mean = rho_sum / n_traj
    rho_mean = 0.5 * (rho_mean + rho_mean.conj().T)
    entry_var = np.maximum(
        abs2_sum / n_traj - (rho_mean.real**2 + rho_mean.imag**2), 0.0
    )
    entry_stderr = np.sqrt(entry_var / n_traj)
    if n_traj > 1:
        spread = float((np.abs(s_samples - s_hd) ** 2).sum() / (n_traj - 1))
        stderr = math.sqrt(spread / n_traj)
    else:
        stderr = float("nan")

    return EnsembleResult(
        S_HD=s_hd,
        purity_HD=float(purity_samples.mean()),
        n_traj=n_traj,
        rho_mean=DensityMatrix(FockSpace(params.dim), rho_mean),
        mc_stderr_S=stderr,
        s_samples=s_samples,
        purity_samples=purity_samples,
        entry_stderr=entry_stderr,
        min_eig_seen=min_eig,
        max_herm_dev=max(p.max_herm_dev for p in parts),
        dt_used=effective.dt,
        seed=cfg.seed,
    )

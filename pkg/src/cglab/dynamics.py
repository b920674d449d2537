"""Pathwise integration of the full mode equations.

The truncated system for the eigenbasis coefficients v in C^m is

    dv_k + i nu^-1 lam_k v_k dtau = P_k(v) dtau + sum_j B_kj dW_j(tau)

with a stiff but purely rotational linear part.  The integrator applies the
rotation exactly through its phase factor (Lawson-type exponential Euler),
so the step size is set by accuracy against the order-one perturbation P,
never by stiffness:

    v' = exp(-i lam h / nu) * (v + h P(v) + B dW).

P splits into a viscous part kappa * (modes of u_xx), a dissipative part
-gamma_r |u|^2p u and a Hamiltonian part -i gamma_i |u|^2q u, both evaluated
pseudo-spectrally on the quadrature grid.  Complex Wiener increments carry
independent real and imaginary components of variance h each.

Ensembles are stepped in vectorised blocks; every trajectory owns an RNG
stream derived from (base_seed, trajectory_index) alone, so results do not
depend on the block decomposition beyond float reassociation in BLAS calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import EffectiveCoefficients, NoiseSpec
from .spectral import SpectralBasis, from_modes, to_modes


class BlowUpError(RuntimeError):
    """A trajectory left the configured norm bound or went non-finite."""


@dataclass
class ModelParams:
    """Physical and stepping parameters of the perturbed equation.

    gamma_r + gamma_i = 1 is the physically meaningful normalisation; it is
    enforced at the experiment-config layer (see experiments.validate_config)
    rather than here, because scheme oracles legitimately integrate with
    both gammas zero.  Structural constraints are checked on construction.
    """

    nu: float
    kappa: float = 1.0
    gamma_r: float = 0.5
    gamma_i: float = 0.5
    p: int = 1
    q: int = 1
    noise: NoiseSpec = field(default_factory=lambda: NoiseSpec.exponential(0.3, 0.5))
    horizon: float = 1.0
    h_max: float = 1e-3
    h_per_nu: float = 0.1
    linear_damping_substitute: bool = False
    mass_correction: bool = False
    blowup_threshold: float = 1e6

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.kappa < 0 or self.gamma_r < 0 or self.gamma_i < 0:
            raise ValueError("kappa, gamma_r, gamma_i must be nonnegative")
        if self.p != int(self.p) or self.q != int(self.q) or self.p < 0 or self.q < 0:
            raise ValueError("p and q must be nonnegative integers")
        self.p = int(self.p)
        self.q = int(self.q)
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.kappa == 0.0 and not (self.gamma_r > 0 and self.p == 0):
            raise ValueError("kappa = 0 requires the linear-damping regime: "
                             "gamma_r > 0 and p = 0")

    def gamma_normalized(self) -> bool:
        return abs(self.gamma_r + self.gamma_i - 1.0) <= 1e-12

    def step_size(self) -> float:
        return min(self.h_max, self.h_per_nu * self.nu)


def check_dealiasing(params: ModelParams, basis: SpectralBasis) -> None:
    """Refuse grids too coarse for the requested polynomial degree."""
    need = (max(params.p, params.q) + 1) * basis.n_galerkin
    if basis.n_grid < need:
        raise ValueError(
            f"grid of {basis.n_grid} points cannot dealias p={params.p}, q={params.q}: "
            f"need at least {need}")


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------


def _drift_parts(v: np.ndarray, params: ModelParams, basis: SpectralBasis):
    """The three perturbation components, batched over leading axes of v."""
    p1 = np.zeros_like(v)
    p2 = np.zeros_like(v)
    p3 = np.zeros_like(v)

    need_grid = (params.kappa > 0 and not params.linear_damping_substitute) \
        or (params.gamma_r > 0 and params.p > 0 and not params.linear_damping_substitute) \
        or (params.gamma_i > 0 and params.q > 0)
    if need_grid:
        u = from_modes(v, basis)
        abs2 = u.real ** 2 + u.imag ** 2

    if params.kappa > 0 and not params.linear_damping_substitute:
        # modes of kappa * u_xx, via -A_V + V composed pseudo-spectrally
        p1 = params.kappa * (-(basis.lam * v) + to_modes(basis.potential_on_grid * u, basis))
        if params.mass_correction and params.gamma_r == 0:
            p1 = p1 - params.kappa * v

    if params.gamma_r > 0:
        if params.p == 0 or params.linear_damping_substitute:
            p2 = -params.gamma_r * v
        else:
            p2 = -params.gamma_r * to_modes(abs2 ** params.p * u, basis)

    if params.gamma_i > 0:
        if params.q == 0:
            p3 = -1j * params.gamma_i * v
        else:
            p3 = -1j * params.gamma_i * to_modes(abs2 ** params.q * u, basis)

    return p1, p2, p3


def drift_components(v, params: ModelParams, basis: SpectralBasis) -> dict:
    """Dict with the linear ("P1"), dissipative ("P2") and Hamiltonian ("P3")
    perturbation components plus their sum ("P")."""
    check_dealiasing(params, basis)
    v = np.asarray(v, dtype=complex)
    p1, p2, p3 = _drift_parts(v, params, basis)
    return {"P1": p1, "P2": p2, "P3": p3, "P": p1 + p2 + p3}


def drift_full(v, params: ModelParams, basis: SpectralBasis) -> np.ndarray:
    """Total perturbation P(v), batched over leading axes."""
    check_dealiasing(params, basis)
    v = np.asarray(v, dtype=complex)
    p1, p2, p3 = _drift_parts(v, params, basis)
    return p1 + p2 + p3


def rotation_factor(params: ModelParams, basis: SpectralBasis, h: float) -> np.ndarray:
    """Exact one-step phase factor exp(-i lam h / nu) of the fast rotation."""
    return np.exp(-1j * basis.lam * h / params.nu)


def step_full(v, h: float, params: ModelParams, basis: SpectralBasis,
              coeffs: EffectiveCoefficients, dW) -> np.ndarray:
    """One exponential Euler-Maruyama step.

    dW has shape (..., n_galerkin): complex increments with independent real
    and imaginary parts of variance h.  The noise and drift are applied before
    the exact rotation factor (Ito-consistent ordering; the alternative
    ordering differs at O(h)).
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    v = np.asarray(v, dtype=complex)
    dW = np.asarray(dW, dtype=complex)
    forcing = dW @ coeffs.B.T
    out = rotation_factor(params, basis, h) * (v + h * drift_full(v, params, basis) + forcing)
    norms = np.sqrt(np.sum(out.real ** 2 + out.imag ** 2, axis=-1))
    if not np.all(np.isfinite(norms)) or np.any(norms > params.blowup_threshold):
        raise BlowUpError("state norm exceeded blow-up threshold "
                          f"{params.blowup_threshold:g}")
    return out


# ---------------------------------------------------------------------------
# noise plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoisePlan:
    """Reproducible complex Wiener increments for one trajectory.

    The stream is a pure function of (base_seed, trajectory_index); a given
    (step, column) increment never depends on how many steps are drawn per
    call.
    """

    base_seed: int
    trajectory_index: int
    h: float

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.base_seed,
                                    spawn_key=(self.trajectory_index,))
        return np.random.Generator(np.random.PCG64(ss))

    def increments(self, n_steps: int, n_cols: int) -> np.ndarray:
        draws = self.generator().standard_normal((n_steps, n_cols, 2))
        return np.sqrt(self.h) * (draws[..., 0] + 1j * draws[..., 1])


def refine_increments(coarse: np.ndarray, h: float, seed: int) -> np.ndarray:
    """Split step-h increments into step-h/2 increments along the same path.

    Standard Brownian-bridge midpoint refinement: the first half-step takes
    dW/2 plus an independent complex normal with component variance h/4, and
    the second half takes the remainder.
    """
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal(coarse.shape + (2,))
    mid = 0.5 * np.sqrt(h) * (extra[..., 0] + 1j * extra[..., 1])
    first = 0.5 * coarse + mid
    second = coarse - first
    out = np.empty((2 * coarse.shape[0],) + coarse.shape[1:], dtype=complex)
    out[0::2] = first
    out[1::2] = second
    return out


# ---------------------------------------------------------------------------
# trajectories and ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Sampled states and energy bookkeeping for a batch of trajectories.

    states[i, s] is trajectory i at taus[s].  half_h0 carries 0.5 |v|^2 and
    drift_work the cumulative deterministic dissipation integral
    int (-gamma_r |u|_{2p+2}^{2p+2} - kappa |u_x|_2^2 [- kappa |u|_2^2]) dtau,
    so the energy identity reads
    d(half_h0) = d(drift_work) + injection_rate * dtau + martingale.
    Trajectories that blew up are flagged; their state freezes at the last
    finite value and they should be excluded from statistics.
    """

    taus: np.ndarray
    states: np.ndarray
    blown: np.ndarray
    blow_tau: np.ndarray
    half_h0: np.ndarray
    drift_work: np.ndarray
    injection_rate: float
    h: float
    base_seed: int
    n_traj: int

    def ok(self) -> np.ndarray:
        return ~self.blown


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Single sampled path with derived actions and angles."""

    taus: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    angles: np.ndarray
    blown: bool
    blow_tau: float
    half_h0: np.ndarray
    drift_work: np.ndarray
    h: float


def _sample_indices(sample_times, horizon: float, h: float, n_steps: int) -> np.ndarray:
    ts = np.asarray(sample_times, dtype=float)
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError("sample_times must be a nonempty 1d sequence")
    if np.any(ts < 0) or np.any(ts > horizon + 1e-12):
        raise ValueError("sample_times must lie in [0, horizon]")
    idx = np.unique(np.clip(np.round(ts / h).astype(int), 0, n_steps))
    return idx


def _step_grid(params: ModelParams):
    h0 = params.step_size()
    n_steps = max(1, int(np.ceil(params.horizon / h0 - 1e-12)))
    return params.horizon / n_steps, n_steps


def simulate_ensemble(v0, params: ModelParams, basis: SpectralBasis,
                      coeffs: EffectiveCoefficients, sample_times, n_traj: int,
                      base_seed: int, trajectory_offset: int = 0,
                      block_size: int = 256, step_chunk: int = 512) -> EnsembleResult:
    """Integrate n_traj independent trajectories of the full system.

    v0 may be a single state (m,) shared by all trajectories or one state
    per trajectory (n_traj, m).  Blow-ups freeze the affected trajectory and
    set its flag instead of aborting the batch.
    """
    check_dealiasing(params, basis)
    h, n_steps = _step_grid(params)
    sample_idx = _sample_indices(sample_times, params.horizon, h, n_steps)
    m = basis.m
    ncols = coeffs.B.shape[1]

    v0 = np.asarray(v0, dtype=complex)
    if v0.ndim == 1:
        v0 = np.broadcast_to(v0, (n_traj, m))
    if v0.shape != (n_traj, m):
        raise ValueError(f"v0 must have shape ({n_traj}, {m}) or ({m},)")

    rot = rotation_factor(params, basis, h)
    bt = coeffs.B.T
    weight = basis.weight
    vx = basis.potential_on_grid
    j2 = np.arange(1, basis.n_galerkin + 1, dtype=float) ** 2
    injection = float(np.sum(coeffs.Y ** 2))
    thr2 = params.blowup_threshold ** 2

    n_samp = sample_idx.size
    states = np.zeros((n_traj, n_samp, m), dtype=complex)
    half = np.zeros((n_traj, n_samp))
    work_rec = np.zeros((n_traj, n_samp))
    blown = np.zeros(n_traj, dtype=bool)
    blow_tau = np.full(n_traj, np.nan)

    use_visc = params.kappa > 0 and not params.linear_damping_substitute
    gr, gi, kap = params.gamma_r, params.gamma_i, params.kappa
    p_exp, q_exp = params.p, params.q
    mass = params.mass_correction and gr == 0 and use_visc

    for start in range(0, n_traj, block_size):
        stop = min(start + block_size, n_traj)
        nb = stop - start
        gens = [NoisePlan(base_seed, trajectory_offset + i, h).generator()
                for i in range(start, stop)]
        v = v0[start:stop].copy()
        work = np.zeros(nb)
        active = np.ones(nb, dtype=bool)
        b_blow_tau = np.full(nb, np.nan)
        pos = 0
        sample_set = set(int(s) for s in sample_idx)

        def record():
            nonlocal pos
            states[start:stop, pos] = v
            half[start:stop, pos] = 0.5 * np.sum(v.real ** 2 + v.imag ** 2, axis=-1)
            work_rec[start:stop, pos] = work
            pos += 1

        if 0 in sample_set:
            record()

        step = 0
        while step < n_steps:
            csteps = min(step_chunk, n_steps - step)
            draws = np.stack([g.standard_normal((csteps, ncols, 2)) for g in gens])
            dw = np.sqrt(h) * (draws[..., 0] + 1j * draws[..., 1])

            for s in range(csteps):
                u = v @ basis.phi
                abs2 = u.real ** 2 + u.imag ** 2

                drift = np.zeros_like(v)
                if use_visc:
                    drift += kap * (-(basis.lam * v) + ((vx * u) @ basis.phi.T) * weight)
                    if mass:
                        drift -= kap * v
                if gr > 0:
                    if p_exp == 0 or params.linear_damping_substitute:
                        drift -= gr * v
                    else:
                        drift -= gr * (((abs2 ** p_exp * u) @ basis.phi.T) * weight)
                if gi > 0:
                    if q_exp == 0:
                        drift -= 1j * gi * v
                    else:
                        drift -= 1j * gi * (((abs2 ** q_exp * u) @ basis.phi.T) * weight)

                # dissipation functionals at the pre-step state
                rate = np.zeros(nb)
                if gr > 0:
                    rate -= gr * weight * np.sum(abs2 ** (p_exp + 1), axis=-1)
                if use_visc:
                    ut = v @ basis.psi
                    rate -= kap * np.sum(j2 * (ut.real ** 2 + ut.imag ** 2), axis=-1)
                    if mass:
                        rate -= kap * weight * np.sum(abs2, axis=-1)

                vn = rot * (v + h * drift + dw[:, s] @ bt)
                norm2 = np.sum(vn.real ** 2 + vn.imag ** 2, axis=-1)
                bad = active & (~np.isfinite(norm2) | (norm2 > thr2))
                if np.any(bad):
                    b_blow_tau[bad] = (step + s + 1) * h
                    active = active & ~bad

                keep = active[:, None]
                v = np.where(keep, vn, v)
                work = np.where(active, work + h * rate, work)

                if (step + s + 1) in sample_set:
                    record()
            step += csteps

        blown[start:stop] = ~active
        blow_tau[start:stop] = b_blow_tau

    return EnsembleResult(
        taus=sample_idx * h, states=states, blown=blown, blow_tau=blow_tau,
        half_h0=half, drift_work=work_rec, injection_rate=injection, h=h,
        base_seed=base_seed, n_traj=n_traj,
    )


def simulate_trajectory(v0, params: ModelParams, basis: SpectralBasis,
                        coeffs: EffectiveCoefficients, plan: NoisePlan,
                        sample_times) -> Trajectory:
    """Single path of the full system, sampled at the requested times."""
    from .statistics import actions_angles

    res = simulate_ensemble(v0, params, basis, coeffs, sample_times, n_traj=1,
                            base_seed=plan.base_seed,
                            trajectory_offset=plan.trajectory_index)
    states = res.states[0]
    act = actions_angles(states)
    return Trajectory(
        taus=res.taus, states=states, actions=act.I, angles=act.phi,
        blown=bool(res.blown[0]), blow_tau=float(res.blow_tau[0]),
        half_h0=res.half_h0[0], drift_work=res.drift_work[0], h=res.h,
    )


# ---------------------------------------------------------------------------
# energy balance diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnergyBalance:
    """Ensemble residuals of the Ito identity for 0.5 |u|^2.

    residual_mean[s] is the ensemble mean, over the interval
    [taus[s], taus[s+1]], of the sampled energy change minus the integrated
    drift (dissipation plus injection); the martingale part averages out.
    ``normalized`` divides by the mean magnitude of the drift terms.
    """

    taus: np.ndarray
    residual_mean: np.ndarray
    residual_se: np.ndarray
    normalized: np.ndarray
    total_mean: float
    total_se: float
    total_normalized: float
    n_used: int


def energy_balance_residual(result: EnsembleResult, params: ModelParams) -> EnergyBalance:
    """Check d(0.5|u|^2) = dissipation dtau + injection dtau + martingale."""
    ok = result.ok()
    n = int(ok.sum())
    if n < 100:
        raise ValueError(f"need an ensemble of >= 100 unflagged trajectories, got {n}")
    half = result.half_h0[ok]
    work = result.drift_work[ok]
    taus = result.taus
    dtau = np.diff(taus)

    d_half = np.diff(half, axis=1)
    d_drift = np.diff(work, axis=1) + result.injection_rate * dtau[None, :]
    resid = d_half - d_drift

    mean = resid.mean(axis=0)
    se = resid.std(axis=0, ddof=1) / np.sqrt(n)
    scale = np.maximum(np.abs(d_drift).mean(axis=0), 1e-300)
    normalized = mean / scale

    total = (half[:, -1] - half[:, 0]) - (work[:, -1] - work[:, 0]) \
        - result.injection_rate * (taus[-1] - taus[0])
    tot_scale = max(float(np.abs((work[:, -1] - work[:, 0])
                                 + result.injection_rate * (taus[-1] - taus[0])).mean()), 1e-300)
    return EnergyBalance(
        taus=taus, residual_mean=mean, residual_se=se, normalized=normalized,
        total_mean=float(total.mean()),
        total_se=float(total.std(ddof=1) / np.sqrt(n)),
        total_normalized=float(total.mean() / tot_scale),
        n_used=n,
    )

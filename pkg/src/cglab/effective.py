"""Phase-averaged (effective) mode equations and their integrator.

Averaging the perturbation over independent rotations of every mode leaves
a rotation-equivariant drift R(v) which, for integer powers of the
dissipative nonlinearity, has a closed form:

    p = 0:  R_k = -kappa (lam_k - M_k) v_k - gamma_r v_k
    p = 1:  R_k = -v_k (kappa (lam_k - M_k) + gamma_r sum_l |v_l|^2 L_kl)

The Hamiltonian component averages to a purely tangential field and never
enters R.  The effective system

    dv_k = R_k(v) dtau + Y_k dW_k

is monotone; the integrator treats the damping semi-implicitly, which keeps
common-noise pairs contracting at any desk step size.  A Monte-Carlo phase
average over uniform torus rotations serves as the independent check of the
closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import EffectiveCoefficients
from .dynamics import BlowUpError, ModelParams, NoisePlan, drift_components
from .spectral import SpectralBasis

LINEAR = "linear_p0"
CUBIC = "cubic_p1"


@dataclass(frozen=True, eq=False)
class EffectiveDrift:
    """Closed-form effective drift; construction never looks at gamma_i."""

    kind: str
    lam: np.ndarray
    M: np.ndarray
    L: np.ndarray
    Y: np.ndarray
    kappa: float
    gamma_r: float

    @property
    def linear_rates(self) -> np.ndarray:
        return self.kappa * (self.lam - self.M)


def make_effective_drift(params: ModelParams, coeffs: EffectiveCoefficients) -> EffectiveDrift:
    if params.p == 0:
        kind = LINEAR
    elif params.p == 1:
        kind = CUBIC
    else:
        raise ValueError(f"closed-form effective drift exists for p in {{0, 1}}, got p = {params.p}")
    return EffectiveDrift(kind=kind, lam=coeffs.lam, M=coeffs.M, L=coeffs.L,
                          Y=coeffs.Y, kappa=params.kappa, gamma_r=params.gamma_r)


def drift_effective(v, drift: EffectiveDrift) -> np.ndarray:
    """R(v) for states of shape (..., m)."""
    v = np.asarray(v, dtype=complex)
    a = drift.linear_rates
    if drift.kind == LINEAR:
        return -(a + drift.gamma_r) * v
    abs2 = v.real ** 2 + v.imag ** 2
    return -v * (a + drift.gamma_r * (abs2 @ drift.L))


def step_effective(v, h: float, drift: EffectiveDrift, dW) -> np.ndarray:
    """Semi-implicit step: damping in the denominator, noise explicit.

    dW has shape (..., m), complex with component variance h.  For the cubic
    drift the modulus-dependent damping sum is evaluated at the current state
    and applied implicitly; for the linear drift the whole drift is implicit.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    v = np.asarray(v, dtype=complex)
    dW = np.asarray(dW, dtype=complex)
    a = drift.linear_rates
    if drift.kind == LINEAR:
        denom = 1.0 + h * (a + drift.gamma_r)
    else:
        abs2 = v.real ** 2 + v.imag ** 2
        denom = 1.0 + h * a + h * drift.gamma_r * (abs2 @ drift.L)
    out = (v + drift.Y * dW) / denom
    if not np.all(np.isfinite(out)):
        raise BlowUpError("effective step produced non-finite state")
    return out


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EffectiveEnsemble:
    taus: np.ndarray
    states: np.ndarray  # (n_traj, n_samples, m)
    h: float
    base_seed: int
    n_traj: int


def _sample_grid(sample_times, horizon: float, h: float):
    n_steps = max(1, int(np.ceil(horizon / h - 1e-12)))
    h = horizon / n_steps
    ts = np.asarray(sample_times, dtype=float)
    if ts.ndim != 1 or ts.size == 0:
        raise ValueError("sample_times must be a nonempty 1d sequence")
    if np.any(ts < 0) or np.any(ts > horizon + 1e-12):
        raise ValueError("sample_times must lie in [0, horizon]")
    idx = np.unique(np.clip(np.round(ts / h).astype(int), 0, n_steps))
    return h, n_steps, idx


def simulate_effective_ensemble(v0, drift: EffectiveDrift, sample_times,
                                horizon: float, h: float, n_traj: int,
                                base_seed: int, trajectory_offset: int = 0,
                                block_size: int = 1024,
                                step_chunk: int = 2048) -> EffectiveEnsemble:
    """Independent trajectories of the effective system.

    Per-trajectory RNG streams follow the same (base_seed, index) derivation
    as the full-system integrator.
    """
    h, n_steps, sample_idx = _sample_grid(sample_times, horizon, h)
    m = drift.lam.size
    v0 = np.asarray(v0, dtype=complex)
    if v0.ndim == 1:
        v0 = np.broadcast_to(v0, (n_traj, m))
    if v0.shape != (n_traj, m):
        raise ValueError(f"v0 must have shape ({n_traj}, {m}) or ({m},)")

    states = np.zeros((n_traj, sample_idx.size, m), dtype=complex)
    sample_set = set(int(s) for s in sample_idx)

    for start in range(0, n_traj, block_size):
        stop = min(start + block_size, n_traj)
        gens = [NoisePlan(base_seed, trajectory_offset + i, h).generator()
                for i in range(start, stop)]
        v = v0[start:stop].copy()
        pos = 0
        if 0 in sample_set:
            states[start:stop, pos] = v
            pos += 1
        step = 0
        while step < n_steps:
            csteps = min(step_chunk, n_steps - step)
            draws = np.stack([g.standard_normal((csteps, m, 2)) for g in gens])
            dw = np.sqrt(h) * (draws[..., 0] + 1j * draws[..., 1])
            for s in range(csteps):
                v = step_effective(v, h, drift, dw[:, s])
                if (step + s + 1) in sample_set:
                    states[start:stop, pos] = v
                    pos += 1
            step += csteps

    return EffectiveEnsemble(taus=sample_idx * h, states=states, h=h,
                             base_seed=base_seed, n_traj=n_traj)


@dataclass(frozen=True, eq=False)
class ContractionRecord:
    """Distance history of a common-noise pair of effective trajectories."""

    taus: np.ndarray
    distances: np.ndarray
    max_step_increase: float
    final_ratio: float


def simulate_effective_pair(v0_a, v0_b, drift: EffectiveDrift, sample_times,
                            horizon: float, h: float, base_seed: int,
                            trajectory_index: int = 0) -> ContractionRecord:
    """Step two initial states with identical noise, tracking their distance."""
    h, n_steps, sample_idx = _sample_grid(sample_times, horizon, h)
    m = drift.lam.size
    va = np.asarray(v0_a, dtype=complex).copy()
    vb = np.asarray(v0_b, dtype=complex).copy()
    if va.shape != (m,) or vb.shape != (m,):
        raise ValueError(f"initial states must have shape ({m},)")

    dw_all = NoisePlan(base_seed, trajectory_index, h).increments(n_steps, m)
    d0 = float(np.linalg.norm(va - vb))
    dists = np.zeros(sample_idx.size)
    sample_set = set(int(s) for s in sample_idx)
    pos = 0
    if 0 in sample_set:
        dists[pos] = d0
        pos += 1
    max_inc = 0.0
    prev = d0
    for s in range(n_steps):
        va = step_effective(va, h, drift, dw_all[s])
        vb = step_effective(vb, h, drift, dw_all[s])
        d = float(np.linalg.norm(va - vb))
        max_inc = max(max_inc, d - prev)
        prev = d
        if (s + 1) in sample_set:
            dists[pos] = d
            pos += 1
    return ContractionRecord(taus=sample_idx * h, distances=dists,
                             max_step_increase=max_inc,
                             final_ratio=prev / d0 if d0 > 0 else 0.0)


# ---------------------------------------------------------------------------
# Monte-Carlo phase averaging
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OracleEstimate:
    """Monte-Carlo estimate of a phase-averaged drift component.

    ``mean`` estimates the rotation average of exp(-i theta_k) P_k applied to
    rotated copies of v; ``se`` is the per-component standard error of the
    complex mean (real and imaginary variances combined).  ``action_mean``
    and ``action_se`` estimate the induced action drift Re(conj(v_k) ...).
    """

    mean: np.ndarray
    se: np.ndarray
    action_mean: np.ndarray
    action_se: np.ndarray
    n_samples: int


def phase_average_oracle(component: str, v, params: ModelParams,
                         basis: SpectralBasis, n_samples: int, seed: int,
                         chunk: int = 2048) -> OracleEstimate:
    """Estimate the effective drift by averaging over uniform mode rotations.

    component selects "P1", "P2", "P3" or the full sum "P".  Rotations are
    drawn independently and uniformly per mode; this is the rotation-average
    the effective equations are built from, so the estimate doubles as an
    independent oracle for the closed forms in this module.
    """
    if component not in ("P1", "P2", "P3", "P"):
        raise ValueError(f"unknown drift component {component!r}")
    if n_samples < 1000:
        raise ValueError("need at least 1000 Monte-Carlo samples")
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1 or v.size != basis.m:
        raise ValueError(f"v must have shape ({basis.m},)")

    rng = np.random.default_rng(seed)
    m = basis.m
    s_x = np.zeros(m, dtype=complex)
    s_re2 = np.zeros(m)
    s_im2 = np.zeros(m)
    s_a = np.zeros(m)
    s_a2 = np.zeros(m)

    done = 0
    while done < n_samples:
        c = min(chunk, n_samples - done)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=(c, m))
        rot = np.exp(1j * theta)
        rotated = rot * v[None, :]
        part = drift_components(rotated, params, basis)[component]
        x = np.conj(rot) * part
        s_x += x.sum(axis=0)
        s_re2 += np.sum(x.real ** 2, axis=0)
        s_im2 += np.sum(x.imag ** 2, axis=0)
        a = v.real * x.real + v.imag * x.imag  # Re(conj(v) x)
        s_a += a.sum(axis=0)
        s_a2 += np.sum(a ** 2, axis=0)
        done += c

    n = float(n_samples)
    mean = s_x / n
    var_re = np.maximum(s_re2 / n - mean.real ** 2, 0.0)
    var_im = np.maximum(s_im2 / n - mean.imag ** 2, 0.0)
    se = np.sqrt((var_re + var_im) / n)
    a_mean = s_a / n
    a_var = np.maximum(s_a2 / n - a_mean ** 2, 0.0)
    return OracleEstimate(mean=mean, se=se, action_mean=a_mean,
                          action_se=np.sqrt(a_var / n), n_samples=n_samples)


# ---------------------------------------------------------------------------
# Gaussian stationary references
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianReference:
    """Stationary complex-Gaussian moments of a linear effective system."""

    variance: np.ndarray      # E |v_k|^2
    mean_action: np.ndarray   # E I_k = variance / 2
    fourth_moment: np.ndarray  # E |v_k|^4 = 2 variance^2
    regime: str


def stationary_gaussian_reference(params: ModelParams,
                                  coeffs: EffectiveCoefficients) -> GaussianReference:
    """Per-mode stationary variances where the effective drift is linear.

    Applicable when p = 0 (linear damping, rate kappa(lam-M) + gamma_r) or
    when gamma_r = 0 (the dissipative nonlinearity is absent and only the
    viscous part damps, rate kappa(lam-M)).  Each mode is then a complex
    Ornstein-Uhlenbeck process with E |v_k|^2 = Y_k^2 / rate_k.
    """
    if params.p == 0:
        rates = params.kappa * (coeffs.lam - coeffs.M) + params.gamma_r
        regime = "linear_damping" if params.kappa == 0 else "viscous_plus_linear"
    elif params.gamma_r == 0:
        rates = params.kappa * (coeffs.lam - coeffs.M)
        regime = "viscous_only"
    else:
        raise ValueError("Gaussian stationary reference needs p = 0 or gamma_r = 0")
    if np.any(rates <= 1e-12):
        k = int(np.argmin(rates))
        raise ValueError(f"degenerate mode {k + 1}: damping rate {rates[k]:.3e} <= 0")
    variance = coeffs.Y ** 2 / rates
    return GaussianReference(variance=variance, mean_action=0.5 * variance,
                             fourth_moment=2.0 * variance ** 2, regime=regime)

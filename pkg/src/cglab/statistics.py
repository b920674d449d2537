"""Action-angle extraction and the empirical metrics the limit claims use.

Distribution comparisons are per-mode 1d Wasserstein distances on action
marginals (exact order-statistics formula); angle uniformity is measured by
the Rayleigh resultant and a Kolmogorov-Smirnov statistic against the
uniform circle.  Every estimator that feeds an acceptance decision carries a
standard error, and decisions are phrased as "within k standard errors".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# 99% null thresholds for n pooled independent angles: resultant <= 3/sqrt(n),
# Kolmogorov-Smirnov <= 1.63/sqrt(n)
RAYLEIGH_99 = 3.0
KS_99 = 1.63


class ActionAngle(NamedTuple):
    I: np.ndarray
    phi: np.ndarray


def actions_angles(v) -> ActionAngle:
    """I_k = 0.5 |v_k|^2 and phi_k = Arg v_k in [0, 2pi), with phi(0) = 0.

    Batched over leading axes.
    """
    v = np.asarray(v, dtype=complex)
    actions = 0.5 * (v.real ** 2 + v.imag ** 2)
    phi = np.mod(np.angle(v), 2.0 * np.pi)
    return ActionAngle(I=actions, phi=phi)


# ---------------------------------------------------------------------------
# distribution distances
# ---------------------------------------------------------------------------


def wasserstein1_1d(samples_a, samples_b) -> float:
    """Exact 1d Wasserstein-1 distance between empirical distributions.

    Equal sizes reduce to the mean absolute difference of sorted samples;
    otherwise the quantile-function L1 distance is integrated over the merged
    support.
    """
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be nonempty")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    support = np.sort(np.concatenate([a, b]))
    cdf_a = np.searchsorted(a, support[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, support[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * np.diff(support)))


def wasserstein1_bootstrap_se(samples_a, samples_b, n_boot: int = 200,
                              seed: int = 0) -> float:
    """Bootstrap standard error of the empirical Wasserstein-1 distance."""
    a = np.asarray(samples_a, dtype=float).ravel()
    b = np.asarray(samples_b, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    reps = np.empty(n_boot)
    for i in range(n_boot):
        ra = a[rng.integers(0, a.size, a.size)]
        rb = b[rng.integers(0, b.size, b.size)]
        reps[i] = wasserstein1_1d(ra, rb)
    return float(reps.std(ddof=1))


# ---------------------------------------------------------------------------
# angle uniformity
# ---------------------------------------------------------------------------


class CircularUniformity(NamedTuple):
    resultant: float
    ks: float
    n: int


def circular_uniformity(angles) -> CircularUniformity:
    """Rayleigh resultant length and KS distance to the uniform circle law."""
    phi = np.asarray(angles, dtype=float).ravel()
    n = phi.size
    if n < 100:
        raise ValueError(f"need at least 100 angle samples, got {n}")
    resultant = float(np.abs(np.mean(np.exp(1j * phi))))
    u = np.sort(np.mod(phi, 2.0 * np.pi) / (2.0 * np.pi))
    grid = np.arange(1, n + 1) / n
    ks = float(max(np.max(grid - u), np.max(u - (grid - 1.0 / n))))
    return CircularUniformity(resultant=resultant, ks=ks, n=n)


# ---------------------------------------------------------------------------
# occupation and moments
# ---------------------------------------------------------------------------


def occupation_below(actions, delta: float, taus=None) -> float:
    """Fraction of time an action trajectory spends at or below delta.

    With sample times the indicator is weighted by the interval lengths
    (left endpoints); without, samples weigh equally.
    """
    a = np.asarray(actions, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empty action trajectory")
    ind = (a <= delta).astype(float)
    if taus is None or a.size == 1:
        return float(ind.mean())
    t = np.asarray(taus, dtype=float).ravel()
    if t.size != a.size:
        raise ValueError("taus and actions must have equal length")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("sample times must be strictly increasing")
    return float(np.sum(ind[:-1] * dt) / np.sum(dt))


@dataclass(frozen=True, eq=False)
class GaussianMoments:
    """Sample moments of one complex mode with jackknife standard errors.

    kurtosis_ratio = E|v|^4 / (2 (E|v|^2)^2) equals 1 for a circular complex
    Gaussian and 1/2 for a deterministic modulus.
    """

    mean: complex
    mean_se: float
    abs2: float
    abs2_se: float
    abs4: float
    abs4_se: float
    kurtosis_ratio: float
    kurtosis_se: float
    n: int


def gaussian_moment_check(samples) -> GaussianMoments:
    z = np.asarray(samples, dtype=complex).ravel()
    n = z.size
    if n < 1000:
        raise ValueError(f"need at least 1000 samples, got {n}")
    a2 = z.real ** 2 + z.imag ** 2
    a4 = a2 ** 2

    mean = complex(z.mean())
    mean_se = float(np.sqrt((z.real.var(ddof=1) + z.imag.var(ddof=1)) / n))
    m2, m4 = float(a2.mean()), float(a4.mean())

    # leave-one-out kurtosis ratios, vectorised through the moment sums
    s2, s4 = a2.sum(), a4.sum()
    loo2 = (s2 - a2) / (n - 1)
    loo4 = (s4 - a4) / (n - 1)
    ratios = loo4 / (2.0 * loo2 ** 2)
    ratio = m4 / (2.0 * m2 ** 2)
    jack = np.sqrt((n - 1) / n * np.sum((ratios - ratios.mean()) ** 2))

    return GaussianMoments(
        mean=mean, mean_se=mean_se,
        abs2=m2, abs2_se=float(a2.std(ddof=1) / np.sqrt(n)),
        abs4=m4, abs4_se=float(a4.std(ddof=1) / np.sqrt(n)),
        kurtosis_ratio=float(ratio), kurtosis_se=float(jack), n=n,
    )


# ---------------------------------------------------------------------------
# per-mode ensemble summaries
# ---------------------------------------------------------------------------


def summarize_modes(states) -> list[dict]:
    """Per-mode moment and uniformity summary of ensemble samples (n, m).

    E is the mode energy 0.5 E|v_k|^2.  Angle statistics need at least 100
    samples and moments at least 1000; smaller ensembles get NaN entries.
    """
    z = np.asarray(states, dtype=complex)
    if z.ndim != 2:
        raise ValueError("states must have shape (n_samples, m)")
    n, m = z.shape
    out = []
    for k in range(m):
        col = z[:, k]
        entry: dict = {"mode": k + 1, "n": n}
        a2 = col.real ** 2 + col.imag ** 2
        entry["E"] = float(0.5 * a2.mean())
        entry["E_se"] = float(0.5 * a2.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        if n >= 1000:
            mom = gaussian_moment_check(col)
            entry["abs2"] = mom.abs2
            entry["abs4"] = mom.abs4
            entry["kurtosis_ratio"] = mom.kurtosis_ratio
            entry["kurtosis_se"] = mom.kurtosis_se
        else:
            entry["abs2"] = float(a2.mean())
            entry["abs4"] = float((a2 ** 2).mean())
            entry["kurtosis_ratio"] = float("nan")
            entry["kurtosis_se"] = float("nan")
        if n >= 100:
            uni = circular_uniformity(actions_angles(col).phi)
            entry["resultant"] = uni.resultant
            entry["ks"] = uni.ks
        else:
            entry["resultant"] = float("nan")
            entry["ks"] = float("nan")
        out.append(entry)
    return out

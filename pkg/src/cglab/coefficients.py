"""Coefficients entering the phase-averaged effective equations.

Everything here is a quadrature of eigenfunction products over one period:
damping shifts M_k = <V phi_k, phi_k>, quartic interaction integrals
L'_{kl} = int phi_k^2 phi_l^2 dx with the symmetrised combination
L = (2 - delta) L', and the noise footprint of the sine-space forcing in
the eigenbasis, B_{kj} = psi_{kj} b_j with per-mode intensities
Y_k = (sum_j b_j^2 psi_{kj}^2)^{1/2}.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .spectral import PotentialSpec, SpectralBasis


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Forcing amplitudes b_j for the sine modes, all expected positive.

    ``explicit`` carries a literal list; ``exponential`` generates
    b_j = amplitude * exp(-rate * j) for any requested truncation.
    """

    kind: str = "exponential"
    values: np.ndarray | None = None
    amplitude: float = 1.0
    rate: float = 1.0

    @classmethod
    def exponential(cls, amplitude: float, rate: float) -> "NoiseSpec":
        if amplitude <= 0 or rate < 0:
            raise ValueError("exponential noise needs amplitude > 0 and rate >= 0")
        return cls(kind="exponential", amplitude=float(amplitude), rate=float(rate))

    @classmethod
    def explicit(cls, values) -> "NoiseSpec":
        v = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(kind="explicit", values=v)

    def amplitudes(self, n: int) -> np.ndarray:
        """First n amplitudes; explicit lists must cover the truncation."""
        if self.kind == "exponential":
            j = np.arange(1, n + 1)
            return self.amplitude * np.exp(-self.rate * j)
        if self.values.size < n:
            raise ValueError(
                f"explicit noise gives {self.values.size} amplitudes, need {n}")
        return self.values[:n].copy()

    def noise_intensity(self, r: float, n: int) -> float:
        """Truncated intensity sum B_r = 2 sum_{j<=n} j^(2r) b_j^2."""
        b = self.amplitudes(n)
        j = np.arange(1, n + 1, dtype=float)
        return float(2.0 * np.sum(j ** (2 * r) * b ** 2))

    def to_dict(self) -> dict:
        if self.kind == "exponential":
            return {"kind": "exponential", "amplitude": self.amplitude, "rate": self.rate}
        return {"kind": "explicit", "values": [float(v) for v in self.values]}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        if d.get("kind") == "exponential":
            return cls.exponential(d["amplitude"], d["rate"])
        if d.get("kind") == "explicit":
            return cls.explicit(d["values"])
        raise ValueError(f"unknown noise kind {d.get('kind')!r}")


@dataclass(frozen=True, eq=False)
class EffectiveCoefficients:
    """Bundle of closed-form coefficients derived from one basis and noise."""

    m: int
    n_galerkin: int
    lam: np.ndarray       # (m,) eigenvalues, copied from the basis
    M: np.ndarray         # (m,) damping shifts <V phi_k, phi_k>
    Lprime: np.ndarray    # (m, m) quartic integrals
    L: np.ndarray         # (m, m) symmetrised interaction matrix
    Y: np.ndarray         # (m,) per-mode noise intensities
    B: np.ndarray         # (m, n_galerkin) dispersion matrix

    def to_dict(self) -> dict:
        return {
            "M": [float(v) for v in self.M],
            "Lprime": [[float(v) for v in row] for row in self.Lprime],
            "Y": [float(v) for v in self.Y],
        }

    def write_interaction_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "l", "L"])
            for k in range(self.m):
                for l in range(self.m):
                    writer.writerow([k + 1, l + 1, repr(self.L[k, l])])


def _check_same_potential(basis: SpectralBasis, potential: PotentialSpec) -> None:
    got = potential.evaluate(basis.x)
    if not np.allclose(got, basis.potential_on_grid, atol=1e-10, rtol=0):
        raise ValueError("potential does not match the one the basis was built from")


def compute_damping_shifts(basis: SpectralBasis, potential: PotentialSpec | None = None) -> np.ndarray:
    """M_k = <V phi_k, phi_k> by quadrature.

    The identity lam_k = |phi_k'|^2 + M_k forces M_k <= lam_k; a violation
    beyond roundoff means the basis and potential disagree.
    """
    if potential is not None:
        _check_same_potential(basis, potential)
    m = (basis.phi ** 2) @ (basis.weight * basis.potential_on_grid)
    if np.any(m > basis.lam + 1e-8):
        raise ValueError("damping shifts exceed eigenvalues: basis/potential mismatch")
    return m


def compute_interaction_matrix(basis: SpectralBasis):
    """Quartic integrals L'_{kl} = int phi_k^2 phi_l^2 dx and L = (2 - delta) L'."""
    sq = basis.phi ** 2
    lprime = (sq * basis.weight) @ sq.T
    lprime = 0.5 * (lprime + lprime.T)
    lmat = 2.0 * lprime - np.diag(np.diag(lprime))
    return lprime, lmat


def compute_noise_coefficients(basis: SpectralBasis, noise: NoiseSpec):
    """Per-mode intensities Y_k and the dispersion matrix B_{kj} = psi_{kj} b_j."""
    b = noise.amplitudes(basis.n_galerkin)
    if np.any(b == 0.0):
        warnings.warn("noise has zero amplitudes; stationary-measure uniqueness "
                      "arguments downstream assume every b_j nonzero", stacklevel=2)
    bmat = basis.psi * b[None, :]
    y = np.sqrt(np.sum(bmat ** 2, axis=1))
    return y, bmat


def build_coefficients(basis: SpectralBasis, noise: NoiseSpec) -> EffectiveCoefficients:
    """Compute every coefficient bundle for the given basis and noise."""
    m_shift = compute_damping_shifts(basis)
    lprime, lmat = compute_interaction_matrix(basis)
    y, bmat = compute_noise_coefficients(basis, noise)
    return EffectiveCoefficients(
        m=basis.m, n_galerkin=basis.n_galerkin, lam=basis.lam.copy(),
        M=m_shift, Lprime=lprime, L=lmat, Y=y, B=bmat,
    )

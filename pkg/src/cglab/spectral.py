"""Eigenbasis of -d2/dx2 + V(x) on odd 2pi-periodic functions.

The working basis diagonalises the Schroedinger operator A_V with an even,
nonnegative, 2pi-periodic potential, restricted to odd periodic functions
(equivalently: Dirichlet conditions on [0, pi]).  Everything downstream
(mode transforms, damping shifts, interaction integrals) lives in this
basis, so the module also carries the quadrature grid and the orthogonal
change-of-basis matrix from the plain sine system e_j(x) = sin(jx)/sqrt(pi).

Also provided: exhaustive integer-combination resonance detection for a
truncated spectrum, and exact time averaging of trigonometric polynomials
along a linear torus flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# first sine coefficient larger than this (relative to the row maximum)
# fixes the eigenvector sign
_SIGN_EPS = 1e-8


class SearchBudgetError(RuntimeError):
    """Raised when a resonance search would exceed its combination budget."""


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Even 2pi-periodic potential V(x) >= 0.

    Two representations are supported: a cosine polynomial
    V(x) = sum_j c_j cos(jx), or samples on a uniform grid over [0, 2pi).
    Grid samples are converted to a cosine series once (the conversion is
    exact for band-limited data) so both kinds evaluate identically.
    """

    kind: str = "trig"
    cosine_coefficients: np.ndarray | None = None
    samples: np.ndarray | None = None

    @classmethod
    def trig(cls, coefficients) -> "PotentialSpec":
        c = np.atleast_1d(np.asarray(coefficients, dtype=float))
        return cls(kind="trig", cosine_coefficients=c)

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls.trig([0.0])

    @classmethod
    def constant(cls, value: float) -> "PotentialSpec":
        return cls.trig([float(value)])

    @classmethod
    def from_samples(cls, samples) -> "PotentialSpec":
        s = np.asarray(samples, dtype=float)
        if s.ndim != 1 or s.size < 4:
            raise ValueError("potential samples must be a 1d array of >= 4 points")
        return cls(kind="grid", samples=s)

    def cosine_series(self) -> np.ndarray:
        if self.kind == "trig":
            return self.cosine_coefficients
        s = self.samples
        n = s.size
        spec = np.fft.rfft(s) / n
        c = np.empty(spec.size)
        c[0] = spec[0].real
        c[1:] = 2.0 * spec[1:].real
        if n % 2 == 0:
            c[-1] = spec[-1].real
        return c

    def evaluate(self, x) -> np.ndarray:
        """Sample V on the given points."""
        x = np.asarray(x, dtype=float)
        c = self.cosine_series()
        j = np.arange(c.size)
        return np.cos(np.multiply.outer(x, j)) @ c

    def validate(self, parity_tol: float = 1e-8) -> None:
        """Reject potentials that are not even or dip below zero."""
        if self.kind not in ("trig", "grid"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "grid":
            s = self.samples
            mirrored = np.roll(s[::-1], 1)  # sample at 2pi - x_i
            scale = max(1.0, float(np.max(np.abs(s))))
            if np.max(np.abs(s - mirrored)) > parity_tol * scale:
                raise ValueError("potential samples are not even about x = 0")
        probe = self.evaluate(np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False))
        if probe.min() < -1e-12:
            raise ValueError(f"potential is negative (min {probe.min():.3e})")

    def to_dict(self) -> dict:
        if self.kind == "trig":
            return {"kind": "trig",
                    "cosine_coefficients": [float(c) for c in self.cosine_coefficients]}
        return {"kind": "grid", "samples": [float(s) for s in self.samples]}

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        if d.get("kind") == "trig":
            return cls.trig(d["cosine_coefficients"])
        if d.get("kind") == "grid":
            return cls.from_samples(d["samples"])
        raise ValueError(f"unknown potential kind {d.get('kind')!r}")


# ---------------------------------------------------------------------------
# basis construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Truncated eigenbasis of A_V together with its quadrature grid.

    Attributes
    ----------
    m : retained mode count.
    n_galerkin : dimension of the sine-space Galerkin problem (>= 4m).
    lam : (m,) ascending eigenvalues.
    psi : (m, n_galerkin) sine coefficients of the eigenfunctions; rows are
        orthonormal, signs fixed so the first nonzero entry is positive.
    x, weight : uniform quadrature nodes on [0, 2pi) and the scalar weight.
    phi : (m, n_grid) eigenfunction samples on the grid.
    potential_on_grid : V sampled on the grid (cached for pseudo-spectral use).
    min_gap : smallest spacing among the retained eigenvalues.
    clustered : True when min_gap is below the gap tolerance (diagnostic only).
    """

    m: int
    n_galerkin: int
    lam: np.ndarray
    psi: np.ndarray
    x: np.ndarray
    weight: float
    phi: np.ndarray
    potential: PotentialSpec
    potential_on_grid: np.ndarray
    sine_on_grid: np.ndarray
    min_gap: float
    clustered: bool

    @property
    def n_grid(self) -> int:
        return self.x.size

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n_galerkin": self.n_galerkin,
            "lambda": [float(v) for v in self.lam],
            "psi": [float(v) for v in self.psi.ravel(order="C")],
            "potential": self.potential.to_dict(),
        }


def build_basis(potential: PotentialSpec, m: int, n_galerkin: int,
                grid_factor: int = 8, gap_tol: float = 1e-6) -> SpectralBasis:
    """Diagonalise A_V = -d2/dx2 + V in the sine Galerkin space.

    The Galerkin matrix is A_jl = j^2 delta_jl + <V e_j, e_l> with the inner
    product evaluated by uniform-grid quadrature (exact for trigonometric
    integrands below the grid's Nyquist degree).  Returns the lowest m
    eigenpairs.  Eigenvalue clusters tighter than ``gap_tol`` are flagged,
    not rejected.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if n_galerkin < 4 * m:
        raise ValueError(f"n_galerkin = {n_galerkin} too small: need >= 4*m = {4 * m}")
    potential.validate()

    n_grid = grid_factor * n_galerkin
    x = 2.0 * np.pi * np.arange(n_grid) / n_grid
    weight = 2.0 * np.pi / n_grid
    j = np.arange(1, n_galerkin + 1)
    sine = np.sin(np.multiply.outer(j, x)) / np.sqrt(np.pi)  # (n_galerkin, n_grid)
    v_grid = potential.evaluate(x)

    gal = (sine * (weight * v_grid)) @ sine.T
    gal[np.diag_indices_from(gal)] += j.astype(float) ** 2
    gal = 0.5 * (gal + gal.T)

    eigvals, eigvecs = np.linalg.eigh(gal)
    lam = eigvals[:m].copy()
    psi = eigvecs[:, :m].T.copy()

    for row in psi:
        lead = np.flatnonzero(np.abs(row) > _SIGN_EPS * np.max(np.abs(row)))
        if lead.size and row[lead[0]] < 0:
            row *= -1.0

    phi = psi @ sine
    gaps = np.diff(lam)
    min_gap = float(gaps.min()) if gaps.size else np.inf

    return SpectralBasis(
        m=m, n_galerkin=n_galerkin, lam=lam, psi=psi, x=x, weight=weight,
        phi=phi, potential=potential, potential_on_grid=v_grid,
        sine_on_grid=sine, min_gap=min_gap, clustered=bool(min_gap < gap_tol),
    )


def to_modes(u, basis: SpectralBasis) -> np.ndarray:
    """Project grid samples onto the eigenbasis: v_k = <u, phi_k> by quadrature.

    Accepts batched input of shape (..., n_grid).
    """
    u = np.asarray(u)
    if u.shape[-1] != basis.n_grid:
        raise ValueError(f"grid mismatch: got {u.shape[-1]} samples, basis has {basis.n_grid}")
    return (u @ basis.phi.T) * basis.weight


def from_modes(v, basis: SpectralBasis) -> np.ndarray:
    """Evaluate u(x_i) = sum_k v_k phi_k(x_i) for coefficients of shape (..., m)."""
    v = np.asarray(v)
    if v.shape[-1] != basis.m:
        raise ValueError(f"mode mismatch: got {v.shape[-1]} coefficients, basis has {basis.m}")
    return v @ basis.phi


# ---------------------------------------------------------------------------
# resonance detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ResonanceReport:
    """Outcome of an exhaustive search for integer eigenvalue combinations."""

    modes: int
    s_max: int
    l1_max: int | None
    eps: float
    min_abs: float
    argmin_s: np.ndarray
    resonant: bool
    n_candidates: int

    def to_dict(self) -> dict:
        return {
            "modes": self.modes,
            "s_max": self.s_max,
            "l1_max": self.l1_max,
            "eps": self.eps,
            "min_abs": self.min_abs,
            "argmin_s": [int(s) for s in self.argmin_s],
            "resonant": self.resonant,
            "n_candidates": self.n_candidates,
        }


def _decode(flat: int, radix: int, digits: int, s_max: int) -> np.ndarray:
    idx = np.array(np.unravel_index(flat, (radix,) * digits)) if digits else np.zeros(0, int)
    return idx - s_max


def check_nonresonance(eigenvalues, s_max: int, modes: int | None = None,
                       eps_res: float = 1e-9, l1_max: int | None = None,
                       budget: int = 10_000_000) -> ResonanceReport:
    """Minimise |lam . s| over nonzero integer vectors with |s_j| <= s_max.

    The search is exhaustive over the box {-s_max..s_max}^modes (optionally
    intersected with the l1 ball of radius ``l1_max``), refusing outright if
    the candidate count exceeds ``budget``.  The reported minimiser has its
    sign canonicalised (first nonzero component positive); ties in |lam . s|
    are broken by smaller l1 norm, then lexicographically.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.size if modes is None else int(modes)
    if n < 1 or n > lam.size:
        raise ValueError("modes must be between 1 and len(eigenvalues)")
    if s_max < 1:
        raise ValueError("s_max must be >= 1")
    lam = lam[:n]

    radix = 2 * s_max + 1
    total = radix ** n - 1
    if total > budget:
        raise SearchBudgetError(
            f"resonance search over {total} candidates exceeds budget {budget}; "
            f"reduce modes ({n}) or s_max ({s_max}), or raise the budget")

    offsets = np.arange(-s_max, s_max + 1, dtype=float)
    # additive cascade over the trailing n-1 components; the flat index is a
    # base-`radix` expansion with component 1 most significant
    tail = np.zeros(1)
    l1_tail = np.zeros(1)
    for k in range(1, n):
        tail = (tail[:, None] + lam[k] * offsets[None, :]).ravel()
        l1_tail = (l1_tail[:, None] + np.abs(offsets)[None, :]).ravel()

    best_val = np.inf
    best_key = None
    best_s = None
    for d0, s0 in enumerate(offsets):
        vals = np.abs(s0 * lam[0] + tail)
        l1 = np.abs(s0) + l1_tail
        bad = np.zeros(vals.shape, dtype=bool)
        if l1_max is not None:
            bad |= l1 > l1_max
        if s0 == 0:
            zero_flat = (radix ** (n - 1) - 1) // (radix - 1) * s_max if n > 1 else 0
            bad[zero_flat] = True

        vals = np.where(bad, np.inf, vals)
        low = vals.min()
        if not np.isfinite(low) or low > best_val:
            continue
        for flat in np.flatnonzero(vals == low):
            s = np.concatenate(([int(s0)], _decode(int(flat), radix, n - 1, s_max)))
            nz = np.flatnonzero(s)
            if s[nz[0]] < 0:
                s = -s
            key = (low, int(np.abs(s).sum()), tuple(s))
            if best_key is None or key < best_key:
                best_key = key
                best_val = low
                best_s = s

    min_abs = float(abs(np.dot(lam, best_s)))  # recompute exactly from the witness
    return ResonanceReport(
        modes=n, s_max=s_max, l1_max=l1_max, eps=eps_res, min_abs=min_abs,
        argmin_s=best_s.astype(int), resonant=bool(min_abs <= eps_res),
        n_candidates=total,
    )


# ---------------------------------------------------------------------------
# exact time averages along a linear torus flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrigPolynomial:
    """Finite Fourier sum f(q) = sum_t c_t exp(i s_t . q) on an n-torus."""

    exponents: np.ndarray  # (n_terms, n) integer
    coeffs: np.ndarray     # (n_terms,) complex

    @classmethod
    def constant(cls, value: complex, dim: int) -> "TrigPolynomial":
        return cls(np.zeros((1, dim), dtype=int), np.array([value], dtype=complex))

    @classmethod
    def cosine(cls, s) -> "TrigPolynomial":
        s = np.atleast_1d(np.asarray(s, dtype=int))
        return cls(np.stack([s, -s]), np.array([0.5, 0.5], dtype=complex))

    @property
    def dim(self) -> int:
        return self.exponents.shape[1]

    def mean(self) -> complex:
        zero = np.all(self.exponents == 0, axis=1)
        return complex(self.coeffs[zero].sum())

    def evaluate(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        phase = q @ self.exponents.T
        return np.exp(1j * phase) @ self.coeffs


def time_average_quasiperiodic(f: TrigPolynomial, freqs, q0, T: float):
    """Average f(q0 + t*freqs) over t in [0, T], integrated in closed form.

    Each harmonic exp(i s.(q0 + t L)) integrates to
    exp(i s.q0) (exp(i s.L T) - 1)/(i s.L T); resonant harmonics (s.L = 0)
    contribute their constant value.  Returns the average and its deviation
    |average - mean(f)| from the torus mean.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    freqs = np.asarray(freqs, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    omega = f.exponents @ freqs
    phase0 = f.exponents @ q0

    wt = omega * T
    factor = np.ones(wt.shape, dtype=complex)
    small = np.abs(wt) < 1e-10
    live = ~small
    factor[live] = (np.exp(1j * wt[live]) - 1.0) / (1j * wt[live])
    factor[small] = 1.0 + 0.5j * wt[small]

    average = complex(np.sum(f.coeffs * np.exp(1j * phase0) * factor))
    return average, abs(average - f.mean())

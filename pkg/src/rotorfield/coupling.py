"""Charge profile sampled on a spectral grid, and the rotor-field brackets.

The moment field ``varrho = x rho`` enters only through its transform
``i k̂ h(|k|)``, evaluated from the analytic radial formula on the retained
modes (sampling varrho in real space would alias its compact support).
"""
from __future__ import annotations

import functools

import numpy as np

from . import charge
from .charge import ChargeProfile
from .grid import SpectralGrid, cross, mode_mask, unit_wavevectors, wavenumber


class GridModel:
    """Everything the solver needs about one (grid, profile) pair.

    Attributes
    ----------
    h : ndarray (N, N, N)
        h(|k|) on retained modes, zero elsewhere.
    kappa0 : float
        Lattice version of kappa0, ``L^-3 Σ |varrho_hat|²/k²`` over retained
        modes; the soliton identities hold exactly with this value.
    I, I_eff : float
        Bare and effective (grid-consistent) moments of inertia.
    """

    def __init__(self, grid: SpectralGrid, profile: ChargeProfile):
        self.grid = grid
        self.profile = profile
        mask = mode_mask(grid)
        kn = wavenumber(grid)
        # |k|² takes few distinct values; evaluate h once per shell
        n2 = np.rint((kn * grid.L / (2 * np.pi)) ** 2).astype(np.int64)
        shells, inverse = np.unique(n2, return_inverse=True)
        h_shell = charge.varrho_hat_rad(profile, 2 * np.pi / grid.L * np.sqrt(shells.astype(float)))
        self.h = np.where(mask, h_shell[inverse.reshape(n2.shape)], 0.0)
        self.khat = unit_wavevectors(grid)
        k2 = np.where(mask, kn**2, 1.0)
        # real vector field W with soliton A_hat = i (omega ∧ W)
        self.W = self.khat * (self.h / k2)
        self.kappa0 = float(np.sum(self.h**2 / k2)) / grid.volume
        self.I = charge.bare_moment(profile)
        self.I_eff = self.I + 2.0 / 3.0 * self.kappa0
        for a in (self.h, self.W):
            a.setflags(write=False)

    @classmethod
    @functools.lru_cache(maxsize=8)
    def get(cls, grid: SpectralGrid, profile: ChargeProfile) -> "GridModel":
        return cls(grid, profile)

    def varrho_hat(self) -> np.ndarray:
        return 1j * self.khat * self.h

    def source_hat(self, omega) -> np.ndarray:
        """Coefficients of omega ∧ varrho."""
        return 1j * cross(np.asarray(omega, float), self.khat * self.h)

    def bracket(self, X: np.ndarray) -> np.ndarray:
        """<X ∧ varrho> = ∫ X(x) ∧ x rho(x) dx for a real field with coefficients X."""
        Xi = X.imag
        kh = self.khat
        h = self.h
        out = np.array([
            np.sum(h * (Xi[1] * kh[2] - Xi[2] * kh[1])),
            np.sum(h * (Xi[2] * kh[0] - Xi[0] * kh[2])),
            np.sum(h * (Xi[0] * kh[1] - Xi[1] * kh[0])),
        ])
        return out / self.grid.volume

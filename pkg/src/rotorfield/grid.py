"""Periodic pseudo-spectral grid, field containers and the transverse projection.

Spectral coefficients follow the package convention
``F(k) = ∫_box exp(i k·x) f(x) dx``; real-space samples sit at
``x_n = n L/N`` for ``n`` in ``[-N/2, N/2)`` (FFT ordering).  With this
convention ``∫ f g dx = L^-3 Σ_k F(k) conj(G(k))``.

Modes carrying a Nyquist index on any axis are kept identically zero so
that every retained mode has its Hermitian partner on the grid.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class SpectralGrid:
    N: int = 48
    L: float = 24.0

    def __post_init__(self):
        if self.N < 4 or self.N % 2:
            raise ValueError("N must be an even integer >= 4")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def volume(self) -> float:
        return self.L**3

    @property
    def k_max(self) -> float:
        """Largest retained wavenumber per axis."""
        return 2 * np.pi / self.L * (self.N // 2 - 1)

    def x1d(self) -> np.ndarray:
        return np.fft.fftfreq(self.N) * self.L

    def k1d(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.N, d=self.dx)

    def check_resolves(self, R_rho: float) -> list:
        """Problems with resolving a support of radius R_rho (empty list when fine)."""
        issues = []
        if 2 * R_rho / self.dx < 8:
            issues.append(f"support diameter {2 * R_rho:g} spans fewer than 8 cells (dx={self.dx:g})")
        if self.L <= 4 * R_rho:
            issues.append(f"box L={self.L:g} not larger than 4 R_rho={4 * R_rho:g}")
        return issues

    def wrap_time(self, R_rho: float) -> float:
        """Time after which radiation leaving the support meets its periodic image."""
        return (self.L - 2 * R_rho) / 2


@functools.lru_cache(maxsize=8)
def _arrays(grid: SpectralGrid):
    k1 = grid.k1d()
    kx, ky, kz = np.meshgrid(k1, k1, k1, indexing="ij")
    kvec = np.stack([kx, ky, kz])
    k2 = kx**2 + ky**2 + kz**2
    kn = np.sqrt(k2)
    nyq = np.zeros(grid.N, dtype=bool)
    nyq[grid.N // 2] = True
    nx, ny, nz = np.meshgrid(nyq, nyq, nyq, indexing="ij")
    mask = ~(nx | ny | nz)
    mask[0, 0, 0] = False
    safe = np.where(kn > 0, kn, 1.0)
    khat = np.where(mask, kvec / safe, 0.0)
    for a in (kvec, k2, kn, mask, khat):
        a.setflags(write=False)
    return kvec, k2, kn, mask, khat


def wavevectors(grid: SpectralGrid) -> np.ndarray:
    """(3, N, N, N) wavevector components."""
    return _arrays(grid)[0]


def wavenumber(grid: SpectralGrid) -> np.ndarray:
    return _arrays(grid)[2]


def mode_mask(grid: SpectralGrid) -> np.ndarray:
    """True on retained modes: no Nyquist index and not the zero mode."""
    return _arrays(grid)[3]


def unit_wavevectors(grid: SpectralGrid) -> np.ndarray:
    """k/|k| on retained modes, zero elsewhere."""
    return _arrays(grid)[4]


@functools.lru_cache(maxsize=8)
def positions(grid: SpectralGrid) -> np.ndarray:
    x1 = grid.x1d()
    out = np.stack(np.meshgrid(x1, x1, x1, indexing="ij"))
    out.setflags(write=False)
    return out


def to_spectral(grid: SpectralGrid, f: np.ndarray) -> np.ndarray:
    """Real samples (..., N, N, N) -> coefficients in the package convention."""
    return grid.volume * np.fft.ifftn(f, axes=(-3, -2, -1))


def to_physical(grid: SpectralGrid, F: np.ndarray) -> np.ndarray:
    return np.fft.fftn(F, axes=(-3, -2, -1)).real / grid.volume


def inner(grid: SpectralGrid, F: np.ndarray, G: np.ndarray) -> float:
    """Real L² inner product of two fields given by coefficients (summed over any leading axes)."""
    return float(np.sum((F * np.conj(G)).real)) / grid.volume


def norm2(grid: SpectralGrid, F: np.ndarray) -> float:
    return float(np.sum(F.real**2 + F.imag**2)) / grid.volume


def cross(a, b):
    """Cross product over the leading axis of two (3, ...) arrays (either may be a plain 3-vector)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 1 and b.ndim > 1:
        a = a.reshape((3,) + (1,) * (b.ndim - 1))
    if b.ndim == 1 and a.ndim > 1:
        b = b.reshape((3,) + (1,) * (a.ndim - 1))
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


@dataclass(frozen=True)
class FieldState:
    """Transverse spectral coefficients of the vector potential A and its momentum Pi."""

    A_hat: np.ndarray
    Pi_hat: np.ndarray

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "FieldState":
        shape = (3, grid.N, grid.N, grid.N)
        return cls(np.zeros(shape, complex), np.zeros(shape, complex))

    def __add__(self, other: "FieldState") -> "FieldState":
        return FieldState(self.A_hat + other.A_hat, self.Pi_hat + other.Pi_hat)

    def __sub__(self, other: "FieldState") -> "FieldState":
        return FieldState(self.A_hat - other.A_hat, self.Pi_hat - other.Pi_hat)

    def scaled(self, s: float) -> "FieldState":
        return FieldState(s * self.A_hat, s * self.Pi_hat)


@dataclass(frozen=True)
class SystemState:
    """Full phase point (A, Pi, omega) at time t."""

    field: FieldState
    omega: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))

    def with_time(self, t: float) -> "SystemState":
        return replace(self, t=t)

    def __sub__(self, other: "SystemState") -> "SystemState":
        return SystemState(self.field - other.field, self.omega - other.omega, self.t)

    def __add__(self, other: "SystemState") -> "SystemState":
        return SystemState(self.field + other.field, self.omega + other.omega, self.t)

    def scaled(self, s: float) -> "SystemState":
        return SystemState(self.field.scaled(s), s * self.omega, self.t)


def project_transverse(grid: SpectralGrid, X: np.ndarray) -> np.ndarray:
    """Remove the component along k on every mode; drop Nyquist and zero modes."""
    khat = unit_wavevectors(grid)
    along = np.sum(khat * X, axis=0)
    return np.where(mode_mask(grid), X - khat * along, 0.0)


def transverse_project(grid: SpectralGrid, field: FieldState) -> FieldState:
    return FieldState(project_transverse(grid, field.A_hat), project_transverse(grid, field.Pi_hat))


def hermitian_defect(grid: SpectralGrid, X: np.ndarray) -> float:
    """max |X(-k) - conj X(k)| over the grid (zero for coefficients of a real field)."""
    flipped = np.roll(np.flip(X, axis=(-3, -2, -1)), 1, axis=(-3, -2, -1))
    return float(np.max(np.abs(flipped - np.conj(X)))) if X.size else 0.0


def divergence_defect(grid: SpectralGrid, X: np.ndarray) -> float:
    """max |k·X(k)| over modes."""
    return float(np.max(np.abs(np.sum(wavevectors(grid) * X, axis=0))))


def gradient_physical(grid: SpectralGrid, X: np.ndarray) -> np.ndarray:
    """Real-space Jacobian d_j X_i as an array (3, 3, N, N, N) indexed [i, j]."""
    kvec = wavevectors(grid)
    return to_physical(grid, -1j * X[:, None] * kvec[None, :])


def curl_spectral(grid: SpectralGrid, X: np.ndarray) -> np.ndarray:
    # d/dx <-> -ik with f(x) = L^-3 Σ F exp(-ik·x)
    return cross(-1j * wavevectors(grid), X)


def random_transverse(grid: SpectralGrid, rng: np.random.Generator, k0: float = 1.0) -> np.ndarray:
    """Random real transverse field with spectral envelope exp(-k²/k0²)."""
    shape = (3, grid.N, grid.N, grid.N)
    white = rng.standard_normal(shape)
    X = to_spectral(grid, white)
    X = X * np.exp(-((wavenumber(grid) / k0) ** 2))
    return project_transverse(grid, X)

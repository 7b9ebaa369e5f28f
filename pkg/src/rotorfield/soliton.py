"""Solitons, the Coulomb potential and the conserved functionals H, pi, Lambda.

A soliton is the stationary state (A_w, 0, w) with -ΔA_w = w ∧ varrho.
In Fourier space ``A_w_hat = (w ∧ varrho_hat)/k²``; in real space
``A_w(x) = (w ∧ x) a(|x|)`` where ``(r⁴ a')' = -r⁴ rho`` and ``a(∞) = 0``.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .charge import ChargeProfile, _gauss_legendre, rho_eval, rho_hat
from .coupling import GridModel
from .grid import (
    FieldState,
    SpectralGrid,
    SystemState,
    cross,
    curl_spectral,
    mode_mask,
    norm2,
    random_transverse,
    to_physical,
    wavenumber,
    wavevectors,
)


class ResolutionWarning(UserWarning):
    """The grid under-resolves the charge support."""


@functools.lru_cache(maxsize=32)
def _fourth_moment(profile: ChargeProfile) -> float:
    if profile.kind == "uniform-ball":
        return 3.0 * profile.total_charge / (4.0 * math.pi * profile.R_rho**3) * profile.R_rho**5 / 5.0
    return float(_m4(profile, np.array([profile.R_rho]))[0])


def _m4(profile: ChargeProfile, t: np.ndarray, n: int = 96) -> np.ndarray:
    """∫_0^t s⁴ rho(s) ds for each entry of t (t <= R_rho)."""
    x, w = _gauss_legendre(n)
    s = 0.5 * t[:, None] * (x + 1.0)
    return 0.5 * t * np.sum(w * s**4 * rho_eval(profile, s), axis=1)


@functools.lru_cache(maxsize=32)
def radial_profile(profile: ChargeProfile) -> Callable:
    """Return a(r) with A_w(x) = (w ∧ x) a(|x|)."""
    R = profile.R_rho
    M4 = _fourth_moment(profile)
    if profile.kind == "uniform-ball":
        rho0 = 3.0 * profile.total_charge / (4.0 * math.pi * R**3)

        def a(r):
            r = np.asarray(r, dtype=float)
            inner = rho0 * R**2 / 15.0 + rho0 * (R**2 - r**2) / 10.0
            return np.where(r < R, inner, M4 / (3.0 * np.maximum(r, R) ** 3))

        return a

    x, w = _gauss_legendre(96)

    def a(r):
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        out = M4 / (3.0 * np.maximum(flat, R) ** 3)
        inside = flat < R
        ri = flat[inside]
        # ∫_r^R m4(t)/t⁴ dt
        t = ri[:, None] + 0.5 * (R - ri)[:, None] * (x + 1.0)
        m4 = _m4(profile, t.ravel()).reshape(t.shape)
        out[inside] += 0.5 * (R - ri) * np.sum(w * m4 / t**4, axis=1)
        return out.reshape(r.shape)

    return a


def soliton_A_pointwise(omega, profile: ChargeProfile, x) -> np.ndarray:
    """A_w at points x (shape (..., 3)) from the radial representation."""
    x = np.asarray(x, dtype=float)
    a = radial_profile(profile)(np.linalg.norm(x, axis=-1))
    return np.cross(np.asarray(omega, float), x) * a[..., None]


@dataclass(frozen=True)
class Soliton:
    omega: np.ndarray
    A_hat: np.ndarray
    a_rad: Callable
    grid: SpectralGrid
    profile: ChargeProfile

    def state(self, t: float = 0.0) -> SystemState:
        return SystemState(FieldState(self.A_hat, np.zeros_like(self.A_hat)), self.omega.copy(), t)

    def A_physical(self) -> np.ndarray:
        return to_physical(self.grid, self.A_hat)


def soliton_A(omega, profile: ChargeProfile, grid: SpectralGrid, strict: bool = False) -> Soliton:
    """Soliton with A_hat(k) = (w ∧ varrho_hat(k))/k² on the grid, zero mode set to 0.

    An under-resolved support is reported with a ResolutionWarning, or
    raised as ValueError when ``strict``.
    """
    issues = grid.check_resolves(profile.R_rho)
    if issues:
        if strict:
            raise ValueError("; ".join(issues))
        warnings.warn("; ".join(issues), ResolutionWarning, stacklevel=2)
    omega = np.asarray(omega, dtype=float).reshape(3)
    if not np.all(np.isfinite(omega)):
        raise ValueError("omega must be finite")
    model = GridModel.get(grid, profile)
    A_hat = 1j * cross(omega, model.W)
    return Soliton(omega=omega, A_hat=A_hat, a_rad=radial_profile(profile), grid=grid, profile=profile)


def _grid_soliton(omega, model: GridModel) -> Soliton:
    omega = np.asarray(omega, dtype=float).reshape(3)
    return Soliton(omega, 1j * cross(omega, model.W), radial_profile(model.profile), model.grid, model.profile)


def coulomb_phi(profile: ChargeProfile, x) -> np.ndarray:
    """Coulomb potential (1/4π)∫ rho(y)/|x-y| dy at points x (shape (..., 3))."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    R, Q = profile.R_rho, profile.total_charge
    if profile.kind == "uniform-ball":
        inner = Q * (3.0 * R**2 - r**2) / (8.0 * math.pi * R**3)
        out = np.where(r < R, inner, Q / (4.0 * math.pi * np.maximum(r, R)))
        return out if out.ndim else float(out)
    # Phi(r) = (1/r)∫_0^r rho s² ds + ∫_r^R rho s ds
    xs, ws = _gauss_legendre(96)
    flat = r.ravel()
    out = Q / (4.0 * math.pi * np.maximum(flat, R))
    inside = flat < R
    ri = flat[inside]
    s_in = 0.5 * ri[:, None] * (xs + 1.0)
    enclosed = 0.5 * ri * np.sum(ws * rho_eval(profile, s_in) * s_in**2, axis=1)
    s_out = ri[:, None] + 0.5 * (R - ri)[:, None] * (xs + 1.0)
    outer = 0.5 * (R - ri) * np.sum(ws * rho_eval(profile, s_out) * s_out, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(ri > 0, enclosed / np.where(ri > 0, ri, 1.0), 0.0)
    out[inside] = first + outer
    out = out.reshape(r.shape)
    return out if out.ndim else float(out)


def coulomb_phi_hat(profile: ChargeProfile, grid: SpectralGrid) -> np.ndarray:
    """Phi_hat = rho_hat/k² on retained modes (zero mode dropped: neutralising background)."""
    kn = wavenumber(grid)
    mask = mode_mask(grid)
    k2 = np.where(mask, kn**2, 1.0)
    return np.where(mask, rho_hat(profile, kn) / k2, 0.0).astype(complex)


def soliton_EB(s: Soliton, profile: ChargeProfile, grid: SpectralGrid):
    """Spectral coefficients of (E_w, B_w) = (-∇Phi, curl A_w)."""
    kvec = wavevectors(grid)
    E_hat = 1j * kvec * coulomb_phi_hat(profile, grid)[None]
    B_hat = curl_spectral(grid, s.A_hat)
    return E_hat, B_hat


@dataclass(frozen=True)
class FunctionalValues:
    H: float
    pi: np.ndarray
    Lambda: float


def field_energy(grid: SpectralGrid, field: FieldState) -> float:
    """½∫(|Pi|² + |curl A|²) dx."""
    curlA = cross(wavevectors(grid), field.A_hat)
    return 0.5 * (norm2(grid, field.Pi_hat) + norm2(grid, curlA))


def hamiltonian(Y: SystemState, model: GridModel) -> float:
    return field_energy(model.grid, Y.field) + 0.5 * model.I * float(Y.omega @ Y.omega)


def pi_invariant(Y: SystemState, model: GridModel) -> np.ndarray:
    """pi = I w + <varrho ∧ A>."""
    return model.I * Y.omega - model.bracket(Y.field.A_hat)


def lyapunov(omega_ref, Y: SystemState, model: GridModel) -> float:
    """Lambda_w(Y) = H(Y) - |w_ref| |pi(Y)|."""
    w = float(np.linalg.norm(omega_ref))
    return hamiltonian(Y, model) - w * float(np.linalg.norm(pi_invariant(Y, model)))


def functionals(omega_ref, Y: SystemState, model: GridModel) -> FunctionalValues:
    H = hamiltonian(Y, model)
    pi = pi_invariant(Y, model)
    return FunctionalValues(H=H, pi=pi, Lambda=H - float(np.linalg.norm(omega_ref)) * float(np.linalg.norm(pi)))


def y_norm(Y: SystemState, grid: SpectralGrid) -> float:
    """||Y|| = ||∇A||_L2 + ||Pi||_L2 + |w| on the whole periodic cell."""
    k2 = wavenumber(grid) ** 2
    gradA = math.sqrt(float(np.sum(k2 * (Y.field.A_hat.real**2 + Y.field.A_hat.imag**2))) / grid.volume)
    return gradA + math.sqrt(norm2(grid, Y.field.Pi_hat)) + float(np.linalg.norm(Y.omega))


def random_perturbation(grid: SpectralGrid, rng: np.random.Generator, size: float = 1e-2, k0: float = 2.0) -> SystemState:
    """Transverse random dY with ||dY||_Y = size."""
    dA = random_transverse(grid, rng, k0)
    dPi = random_transverse(grid, rng, k0)
    dw = rng.standard_normal(3)
    dY = SystemState(FieldState(dA, dPi), dw)
    return dY.scaled(size / y_norm(dY, grid))


def stability_gap(omega, dY: SystemState, model: GridModel) -> float:
    """Lambda_w(S_w + dY) - Lambda_w(S_w)."""
    S = _grid_soliton(omega, model).state()
    return lyapunov(omega, S + dY, model) - lyapunov(omega, S, model)

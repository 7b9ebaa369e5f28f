"""Radial charge profiles and the spectral quantities derived from them.

Fourier convention used throughout the package::

    f_hat(k) = ∫ exp(i k·x) f(x) dx,      f(x) = (2π)^-3 ∫ exp(-i k·x) f_hat(k) dk

For a radial density the transform is radial,
``rho_hat(k) = 4π ∫ rho(r) r² sinc(kr) dr``, and the moment field
``varrho(x) = x rho(x)`` has the transform ``i k̂ h(|k|)`` with
``h(k) = -d rho_hat/dk``.
"""
from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

PROFILE_KINDS = ("uniform-ball", "smooth-bump")

# Gauss-Legendre order for radial integrals over [0, R_rho].
_RADIAL_NODES = 256


class ScanResolutionWarning(UserWarning):
    """Two zeros of g may sit inside a single scan cell."""


class QuadratureWarning(UserWarning):
    """A quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class ChargeProfile:
    """Spherically symmetric, compactly supported charge density.

    ``kind`` is ``"uniform-ball"`` (the classical worked example, only
    piecewise smooth) or ``"smooth-bump"`` (``exp(-1/(1 - r²/R²))``, C^∞).
    """

    kind: str = "smooth-bump"
    R_rho: float = 1.0
    total_charge: float = 1.0
    m_b: float = 1.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if not (self.R_rho > 0 and math.isfinite(self.R_rho)):
            raise ValueError("R_rho must be positive and finite")
        if not (self.total_charge > 0 and math.isfinite(self.total_charge)):
            raise ValueError("total_charge must be positive")
        if not (self.m_b > 0 and math.isfinite(self.m_b)):
            raise ValueError("m_b must be positive")

    @classmethod
    def from_dict(cls, spec: dict) -> "ChargeProfile":
        known = {"kind", "R_rho", "charge", "total_charge", "m_b"}
        extra = set(spec) - known
        if extra:
            raise ValueError(f"unknown profile keys: {sorted(extra)}")
        charge = spec.get("charge", spec.get("total_charge", 1.0))
        return cls(
            kind=spec.get("kind", "smooth-bump"),
            R_rho=float(spec.get("R_rho", 1.0)),
            total_charge=float(charge),
            m_b=float(spec.get("m_b", 1.0)),
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "R_rho": self.R_rho, "charge": self.total_charge, "m_b": self.m_b}

    def scaled(self, factor: float) -> "ChargeProfile":
        """Same shape, charge multiplied by ``factor``."""
        return ChargeProfile(self.kind, self.R_rho, self.total_charge * factor, self.m_b)


def _bump_shape(s):
    """Unnormalised bump exp(-1/(1-s²)) on s = r/R in [0, 1)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@functools.lru_cache(maxsize=None)
def _bump_unit_mass() -> float:
    # ∫_{|x|<1} exp(-1/(1-|x|²)) dx
    val, _ = integrate.quad(lambda s: float(_bump_shape(s)) * s * s, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    return 4.0 * math.pi * val


def rho_eval(profile: ChargeProfile, r):
    """Radial density rho_rad(r); zero for r >= R_rho."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("radius must be non-negative")
    R = profile.R_rho
    if profile.kind == "uniform-ball":
        out = np.where(r_arr < R, 3.0 * profile.total_charge / (4.0 * math.pi * R**3), 0.0)
    else:
        c = profile.total_charge / (_bump_unit_mass() * R**3)
        out = c * _bump_shape(r_arr / R)
    return out if out.ndim else float(out)


@functools.lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def radial_nodes(profile: ChargeProfile, n: int = _RADIAL_NODES):
    """Gauss-Legendre nodes/weights on [0, R_rho] with rho sampled at the nodes."""
    x, w = _gauss_legendre(n)
    R = profile.R_rho
    r = 0.5 * R * (x + 1.0)
    return r, 0.5 * R * w, rho_eval(profile, r)


def _j1_over_u(u):
    """(sin u - u cos u)/u³, even and analytic; equals j₁(u)/u."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 0.1
    us = u[small] ** 2
    out[small] = 1 / 3 - us / 30 + us**2 / 840 - us**3 / 45360 + us**4 / 3991680
    ub = u[~small]
    out[~small] = (np.sin(ub) - ub * np.cos(ub)) / ub**3
    return out


def _j1_over_u_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 0.5
    us = u[small]
    # derivative of the series sum (-1)^n 2(n+1) u^{2n} / (2n+3)!
    acc = np.zeros_like(us)
    for n in range(1, 9):
        acc += (-1) ** n * 2 * (n + 1) * 2 * n * us ** (2 * n - 1) / math.factorial(2 * n + 3)
    out[small] = acc
    ub = u[~small]
    out[~small] = np.sin(ub) / ub**2 - 3.0 * (np.sin(ub) - ub * np.cos(ub)) / ub**4
    return out


def rho_hat(profile: ChargeProfile, k):
    """Radial Fourier transform of rho, continuous at k = 0 with value total_charge."""
    k_arr = np.asarray(k, dtype=float)
    if np.any(k_arr < 0):
        raise ValueError("wavenumber must be non-negative")
    if profile.kind == "uniform-ball":
        u = k_arr * profile.R_rho
        out = 3.0 * profile.total_charge * _j1_over_u(u)
    else:
        r, w, rho = radial_nodes(profile)
        kk = k_arr.reshape(-1, 1)
        out = 4.0 * math.pi * (np.sinc(kk * r / math.pi) * (w * rho * r * r)).sum(axis=1)
        out = out.reshape(k_arr.shape)
    return out if out.ndim else float(out)


def varrho_hat_rad(profile: ChargeProfile, k):
    """Scalar h(k) with varrho_hat(kvec) = i k̂ h(|kvec|); h = -d rho_hat/dk, odd in k."""
    k_arr = np.asarray(k, dtype=float)
    if profile.kind == "uniform-ball":
        R = profile.R_rho
        out = -3.0 * profile.total_charge * R * _j1_over_u_prime(k_arr * R)
    else:
        r, w, rho = radial_nodes(profile)
        kk = k_arr.reshape(-1, 1)
        out = 4.0 * math.pi * kk[:, 0] * (_j1_over_u(kk * r) * (w * rho * r**4)).sum(axis=1)
        out = out.reshape(k_arr.shape)
    return out if out.ndim else float(out)


def varrho_hat(profile: ChargeProfile, kvec) -> np.ndarray:
    """Fourier transform of varrho(x) = x rho(x) at wavevector(s) ``kvec`` (last axis = 3).

    The result is purely imaginary and parallel to ``kvec``; it vanishes at 0.
    """
    kv = np.asarray(kvec, dtype=float)
    if kv.shape[-1] != 3:
        raise ValueError("kvec must have a trailing axis of length 3")
    kn = np.linalg.norm(kv, axis=-1)
    safe = np.where(kn > 0, kn, 1.0)
    h = varrho_hat_rad(profile, kn)
    unit = kv / safe[..., None]
    out = 1j * unit * np.asarray(h)[..., None]
    return np.where((kn > 0)[..., None], out, 0.0 + 0.0j)


def g_eval(profile: ChargeProfile, mu):
    """Real part G of the spectral function g = iG.

    G(mu) = sqrt(2/pi) ∫ [mu r cos(mu r) - sin(mu r)]/mu² rho_rad(r) r dr,
    odd in mu with G(0) = 0.
    """
    mu_arr = np.asarray(mu, dtype=float)
    r, w, rho = radial_nodes(profile)
    m = mu_arr.reshape(-1, 1)
    # [mu r cos - sin]/mu² = -mu r³ (sin u - u cos u)/u³ with u = mu r
    vals = -(m[:, 0]) * (_j1_over_u(m * r) * (w * rho * r**4)).sum(axis=1)
    out = math.sqrt(2.0 / math.pi) * vals.reshape(mu_arr.shape)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SpectralZeros:
    """Positive zeros of G on (0, mu_max], ascending. mu_0 = 0 and mu_{-j} = -mu_j are implied."""

    mu: np.ndarray
    mu_max: float
    tol: float
    warnings: tuple = ()

    def __len__(self):
        return len(self.mu)

    def signed(self) -> dict:
        """Index -> zero, over j in [-J, J] including mu_0 = 0."""
        table = {0: 0.0}
        for j, m in enumerate(self.mu, start=1):
            table[j] = float(m)
            table[-j] = -float(m)
        return table


def _bisect(f: Callable[[float], float], a: float, b: float, fa: float, tol: float) -> float:
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def g_zeros(profile: ChargeProfile, mu_max: float, tol: float = 1e-12, n_scan: int = 4096) -> SpectralZeros:
    """Bracket sign changes of G on a uniform scan of (0, mu_max] and bisect each to ``tol``."""
    if not mu_max > 0:
        raise ValueError("mu_max must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    step = mu_max / n_scan
    grid = step * np.arange(1, n_scan + 1)
    vals = g_eval(profile, grid)
    f = lambda m: float(g_eval(profile, m))
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(_bisect(f, grid[i], grid[i + 1], vals[i], tol))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))

    notes = []
    # |G| dipping to a local minimum without a sign change hints at an unresolved pair
    a = np.abs(vals)
    scale = np.max(a) if a.size else 0.0
    for i in range(1, len(a) - 1):
        if a[i] < a[i - 1] and a[i] < a[i + 1] and vals[i - 1] * vals[i + 1] > 0 and vals[i] * vals[i - 1] > 0:
            if a[i] < 1e-3 * scale:
                notes.append(f"possible unresolved zero pair near mu={grid[i]:.6g}")
    for r1, r2 in zip(roots, roots[1:]):
        if r2 - r1 < step:
            notes.append(f"zeros {r1:.6g} and {r2:.6g} closer than scan step {step:.3g}")
    for msg in notes:
        warnings.warn(msg, ScanResolutionWarning, stacklevel=2)
    return SpectralZeros(mu=np.array(roots), mu_max=float(mu_max), tol=float(tol), warnings=tuple(notes))


@dataclass
class NonresonanceReport:
    passed: bool
    violations: list = field(default_factory=list)  # (j, k, l, residual)

    def to_dict(self):
        return {"passed": self.passed, "violations": [list(v) for v in self.violations]}


def _is_exempt(j: int, k: int, l: int) -> bool:
    # (-n, n, 0), (0, n, n), (n, 0, n) are all the multiset {n, -n, 0} of j, k, -l
    a, b, c = sorted((j, k, -l))
    return b == 0 and a == -c


def _canonical(j: int, k: int, l: int, table: dict) -> tuple:
    """Representative of the relation mu_j + mu_k + mu_{-l} = 0, invariant under swaps and sign flip."""
    terms = sorted((j, k, -l))
    flipped = sorted((-j, -k, l))
    terms = min(terms, flipped)
    c = max(terms, key=lambda i: (abs(table[i]), abs(i)))
    rest = list(terms)
    rest.remove(c)
    jj, kk, ll = rest[0], rest[1], -c
    if ll < 0:
        jj, kk, ll = -jj, -kk, -ll
    return (min(jj, kk), max(jj, kk), ll)


def check_nonresonance(zeros: SpectralZeros, tol: float = 1e-8) -> NonresonanceReport:
    """Find index triples with mu_j + mu_k = mu_l (within ``tol``) outside the exempt patterns.

    Index triples describing the same relation (j <-> k swap, global sign
    flip, moving a term across the equals sign) are reported once.
    """
    table = zeros.signed()
    idx = sorted(table, key=lambda i: table[i])
    vals = np.array([table[i] for i in idx])
    found = {}
    for a, b in itertools.combinations_with_replacement(idx, 2):
        target = table[a] + table[b]
        lo = np.searchsorted(vals, target - tol, side="left")
        hi = np.searchsorted(vals, target + tol, side="right")
        for pos in range(lo, hi):
            c = idx[pos]
            if _is_exempt(a, b, c):
                continue
            key = _canonical(a, b, c, table)
            found.setdefault(key, abs(table[a] + table[b] - table[c]))
    violations = [(j, k, l, res) for (j, k, l), res in sorted(found.items())]
    return NonresonanceReport(passed=not violations, violations=violations)


def bare_moment(profile: ChargeProfile) -> float:
    """Bare moment of inertia I = (2/3) m_b ∫ |x|² rho dx."""
    if profile.kind == "uniform-ball":
        second = 0.6 * profile.total_charge * profile.R_rho**2
    else:
        r, w, rho = radial_nodes(profile)
        second = 4.0 * math.pi * float(np.sum(w * rho * r**4))
    return 2.0 / 3.0 * profile.m_b * second


@dataclass(frozen=True)
class Kappa0Result:
    value: float
    k_cut: float
    tail_bound: float


def kappa0_details(profile: ChargeProfile, cutoff: float = 1e-14, max_k: float = 1e6) -> Kappa0Result:
    """kappa0 = (2π)^-3 ∫ |varrho_hat|²/k² dk = (2π²)^-1 ∫_0^∞ h(k)² dk.

    Integrated panel-wise (one panel per half oscillation of the
    transform) until the integrand drops below ``cutoff``; the omitted tail
    is bounded assuming h² <= C/k⁴ beyond the cut, C taken from the last panel.
    """
    R = profile.R_rho
    width = math.pi / R
    x, w = _gauss_legendre(24)
    total = 0.0
    k0 = 0.0
    below = 0
    C = 0.0
    while True:
        k = k0 + 0.5 * width * (x + 1.0)
        h2 = varrho_hat_rad(profile, k) ** 2
        total += 0.5 * width * float(np.dot(w, h2))
        k0 += width
        C = float(np.max(h2 * k**4))
        below = below + 1 if np.max(h2) < cutoff else 0
        # require several quiet panels so a zero of h is not mistaken for decay
        if below >= 4:
            break
        if k0 >= max_k:
            warnings.warn(
                f"kappa0 quadrature stopped at k={k0:g} with integrand {np.max(h2):.3g} > {cutoff:g}",
                QuadratureWarning,
                stacklevel=2,
            )
            break
    tail = C / (3.0 * k0**3)
    norm = 1.0 / (2.0 * math.pi**2)
    return Kappa0Result(value=norm * total, k_cut=k0, tail_bound=norm * tail)


@functools.lru_cache(maxsize=64)
def kappa0(profile: ChargeProfile) -> float:
    """Field-inertia constant kappa0 (strictly positive)."""
    return kappa0_details(profile).value


@dataclass(frozen=True)
class SpectralProfile:
    rho_hat_rad: Callable
    varrho_hat_rad: Callable
    kappa0: float
    I: float
    I_eff: float


def spectral_profile(profile: ChargeProfile) -> SpectralProfile:
    k0 = kappa0(profile)
    I = bare_moment(profile)
    return SpectralProfile(
        rho_hat_rad=functools.partial(rho_hat, profile),
        varrho_hat_rad=functools.partial(varrho_hat_rad, profile),
        kappa0=k0,
        I=I,
        I_eff=I + 2.0 / 3.0 * k0,
    )


def effective_moment(profile: ChargeProfile) -> float:
    return bare_moment(profile) + 2.0 / 3.0 * kappa0(profile)


def m_rho_ball(zeros: SpectralZeros) -> np.ndarray:
    """Exceptional bare masses 4π(mu_j² - 30)/mu_j⁴ of the uniform ball, one per stored mu_j > 0."""
    mu = np.asarray(zeros.mu, dtype=float)
    if mu.size == 0:
        raise ValueError("empty zero list")
    return 4.0 * math.pi * (mu**2 - 30.0) / mu**4


def in_m_rho(m_b: float, masses, tol: float = 1e-6) -> bool:
    return bool(np.any(np.abs(np.asarray(masses) - m_b) < tol))

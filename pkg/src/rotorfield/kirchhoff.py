"""Mesh-free point evaluation of free and retarded fields on all of R³.

Free fields use the Kirchhoff formula written as spherical means over the
unit sphere,

    A_K(x,t) = t M[Pi0](x,t) + M[A0](x,t) + t M[∇A0·z](x,t),
    M[f](x,t) = (1/4π) ∫_{|z|=1} f(x + t z) dz,

with the gradient and time derivative obtained by differentiating under
the integral.  Retarded fields of the source w(s) ∧ x rho(|x|) collapse to
a single time integral because the source is radial.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import lebedev_rule
from scipy.interpolate import CubicSpline

from .charge import ChargeProfile, QuadratureWarning, _gauss_legendre, rho_eval

_EPS = np.zeros((3, 3, 3))
_EPS[0, 1, 2] = _EPS[1, 2, 0] = _EPS[2, 0, 1] = 1.0
_EPS[0, 2, 1] = _EPS[2, 1, 0] = _EPS[1, 0, 2] = -1.0


# -- sphere rules ------------------------------------------------------------

@functools.lru_cache(maxsize=16)
def sphere_rule(order: int = 41):
    """Lebedev nodes (n, 3) and weights summing to 4π."""
    x, w = lebedev_rule(order)
    return np.ascontiguousarray(x.T), w


@functools.lru_cache(maxsize=16)
def product_sphere_rule(n: int = 38, axis=(0.0, 0.0, 1.0)):
    """Gauss-Legendre in cos(theta) times trapezoid in phi: n × 2n nodes."""
    u, wu = _gauss_legendre(n)
    phi = np.arange(2 * n) * (math.pi / n)
    s = np.sqrt(1 - u**2)
    z = np.stack([
        (s[:, None] * np.cos(phi)[None]).ravel(),
        (s[:, None] * np.sin(phi)[None]).ravel(),
        np.repeat(u, 2 * n),
    ], axis=1)
    w = np.repeat(wu, 2 * n) * (math.pi / n)
    a = np.asarray(axis, float)
    a = a / np.linalg.norm(a)
    if not np.allclose(a, [0, 0, 1]):
        # rotate e_z onto a (Rodrigues)
        v = np.cross([0.0, 0.0, 1.0], a)
        c = a[2]
        vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
        Rm = np.eye(3) + vx + vx @ vx / (1 + c) if c > -1 else np.diag([1.0, -1.0, -1.0])
        z = z @ Rm.T
    return z, w


# -- initial data --------------------------------------------------------------

def _radial_derivs_algebraic(amp: float, p: float):
    """psi = amp (1+s)^p, s = r²; returns psi', psi'', psi''' in s."""
    def d(s):
        b = 1.0 + s
        return (amp * p * b ** (p - 1), amp * p * (p - 1) * b ** (p - 2), amp * p * (p - 1) * (p - 2) * b ** (p - 3))
    return d


def _radial_derivs_gaussian(amp: float, width: float):
    def d(s):
        e = amp * np.exp(-s / width**2)
        c = -1.0 / width**2
        return c * e, c**2 * e, c**3 * e
    return d


class _CurlOfRadial:
    """V = curl(psi(|x|²) e) = ∇psi ∧ e with its first and second gradients."""

    def __init__(self, derivs: Callable, e):
        self.d = derivs
        self.e = np.asarray(e, float)
        # (∇psi ∧ e)_i = eps_ijk d_j psi e_k = C_ij d_j psi
        self.C = np.einsum("ijk,k->ij", _EPS, self.e)

    def value(self, x):
        d1, _, _ = self.d(np.sum(x * x, axis=-1))
        return 2.0 * d1[..., None] * (x @ self.C.T)

    def grad(self, x):
        """[..., i, l] = d_l V_i."""
        d1, d2, _ = self.d(np.sum(x * x, axis=-1))
        hess = 2.0 * d1[..., None, None] * np.eye(3) + 4.0 * d2[..., None, None] * x[..., :, None] * x[..., None, :]
        return np.einsum("ij,...jl->...il", self.C, hess)

    def hess(self, x):
        """[..., i, l, m] = d_m d_l V_i."""
        d1, d2, d3 = self.d(np.sum(x * x, axis=-1))
        eye = np.eye(3)
        xx = x
        t3 = (eye[:, :, None] * xx[..., None, None, :] + eye[:, None, :] * xx[..., None, :, None]
              + eye[None, :, :] * xx[..., :, None, None])
        third = 4.0 * d2[..., None, None, None] * t3 + 8.0 * d3[..., None, None, None] * (
            xx[..., :, None, None] * xx[..., None, :, None] * xx[..., None, None, :])
        return np.einsum("ij,...jlm->...ilm", self.C, third)


@dataclass(frozen=True)
class InitialFieldSpec:
    """Divergence-free initial data A0 = curl(psi e_A), Pi0 = curl(chi e_Pi).

    ``algebraic``: psi = a (1+r²)^((1-sigma)/2), chi = b (1+r²)^(-sigma/2),
    so that |A0| ~ r^-sigma, |∇A0|, |Pi0| ~ r^(-sigma-1) and so on.
    ``gaussian``: psi = a exp(-r²/w²), chi = b exp(-r²/w²) (localised).
    """

    family: str = "algebraic"
    sigma: float = 0.75
    amp_A: float = 1.0
    amp_Pi: float = 1.0
    width: float = 1.5
    e_A: tuple = (0.0, 0.0, 1.0)
    e_Pi: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.family not in ("algebraic", "gaussian"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "algebraic" and not self.sigma > 0.5:
            raise ValueError("sigma must exceed 1/2")
        if not self.width > 0:
            raise ValueError("width must be positive")

    @functools.cached_property
    def _parts(self):
        if self.family == "algebraic":
            dA = _radial_derivs_algebraic(self.amp_A, 0.5 * (1 - self.sigma))
            dP = _radial_derivs_algebraic(self.amp_Pi, -0.5 * self.sigma)
        else:
            dA = _radial_derivs_gaussian(self.amp_A, self.width)
            dP = _radial_derivs_gaussian(self.amp_Pi, self.width)
        return _CurlOfRadial(dA, self.e_A), _CurlOfRadial(dP, self.e_Pi)

    def A(self, x):
        return self._parts[0].value(np.asarray(x, float))

    def grad_A(self, x):
        return self._parts[0].grad(np.asarray(x, float))

    def hess_A(self, x):
        return self._parts[0].hess(np.asarray(x, float))

    def Pi(self, x):
        return self._parts[1].value(np.asarray(x, float))

    def grad_Pi(self, x):
        return self._parts[1].grad(np.asarray(x, float))

    @property
    def is_zero(self) -> bool:
        return self.amp_A == 0 and self.amp_Pi == 0


# -- free field ------------------------------------------------------------------

@dataclass
class KirchhoffValue:
    A: np.ndarray       # (..., 3)
    Pi: np.ndarray      # (..., 3)
    grad_A: np.ndarray  # (..., 3, 3), [i, l] = d_l A_i


def _kirchhoff_raw(x, t, init, z, w, chunk=65536):
    x = np.atleast_2d(x)
    n = x.shape[0]
    A = np.empty((n, 3))
    Pi = np.empty((n, 3))
    G = np.empty((n, 3, 3))
    wn = w / (4 * math.pi)
    for lo in range(0, n, max(1, chunk // len(w))):
        xs = x[lo:lo + max(1, chunk // len(w))]
        y = xs[:, None, :] + t * z[None]
        a0, p0 = init.A(y), init.Pi(y)
        ga, gp = init.grad_A(y), init.grad_Pi(y)
        ha = init.hess_A(y)
        ga_z = np.einsum("pnil,nl->pni", ga, z)
        gp_z = np.einsum("pnil,nl->pni", gp, z)
        ha_z = np.einsum("pnilm,nm->pnil", ha, z)
        ha_zz = np.einsum("pnil,nl->pni", ha_z, z)
        M = lambda f: np.tensordot(f, wn, axes=([1], [0]))
        A[lo:lo + len(xs)] = t * M(p0) + M(a0) + t * M(ga_z)
        Pi[lo:lo + len(xs)] = M(p0) + t * M(gp_z) + 2.0 * M(ga_z) + t * M(ha_zz)
        G[lo:lo + len(xs)] = t * M(gp) + M(ga) + t * M(ha_z)
    return A, Pi, G


def kirchhoff_free(x, t: float, init: InitialFieldSpec, order: int = 41, check: bool = False) -> KirchhoffValue:
    """Free-wave fields (A_K, Pi_K, ∇A_K) at points x (shape (3,) or (n, 3)).

    With ``check`` the result is recomputed with the next lower Lebedev
    order and a QuadratureWarning is issued if the two differ by more
    than 1e-6 relative.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    x = np.asarray(x, float)
    single = x.ndim == 1
    xa = np.atleast_2d(x)
    z, w = sphere_rule(order)
    A, Pi, G = _kirchhoff_raw(xa, t, init, z, w)
    if check and t > 0:
        lower = {17: None}.get(order, order - 6)
        if lower is not None:
            z2, w2 = sphere_rule(lower)
            A2, Pi2, G2 = _kirchhoff_raw(xa, t, init, z2, w2)
            scale = max(np.max(np.abs(A)), np.max(np.abs(Pi)), np.max(np.abs(G)), 1e-300)
            diff = max(np.max(np.abs(A - A2)), np.max(np.abs(Pi - Pi2)), np.max(np.abs(G - G2)))
            if diff > 1e-6 * scale:
                warnings.warn(
                    f"sphere quadrature order {order} unresolved at t={t:g} (change vs order {lower}: {diff / scale:.2e})",
                    QuadratureWarning, stacklevel=2)
    if single:
        return KirchhoffValue(A[0], Pi[0], G[0])
    return KirchhoffValue(A, Pi, G)


# -- sphere-integral identity --------------------------------------------------------

def sphere_integral_identity(alpha: float, x_norm: float, t: float) -> float:
    """∫_{|z|=1} |x + t z|^-alpha dz in closed form (alpha != 2, t > |x| >= 0)."""
    if alpha == 2:
        raise ValueError("alpha = 2 is excluded (logarithmic case)")
    if not t > x_norm >= 0:
        raise ValueError("need t > |x| >= 0")
    if x_norm == 0:
        return 4 * math.pi * t ** (-alpha)
    return 2 * math.pi / ((alpha - 2) * x_norm * t) * ((t - x_norm) ** (2 - alpha) - (t + x_norm) ** (2 - alpha))


def sphere_integral_quadrature(alpha: float, x_norm: float, t: float, n: int = 38,
                               direction=(1.0, 2.0, 3.0)) -> float:
    """The same integral by a product rule with n × 2n nodes (2888 for n=38).

    The rule's pole is kept away from ``direction`` so the integrand
    depends on both angles.
    """
    d = np.asarray(direction, float)
    x = x_norm * d / np.linalg.norm(d)
    z, w = product_sphere_rule(n)
    return float(np.sum(w * np.linalg.norm(x + t * z, axis=1) ** (-alpha)))


# -- rotor histories and retarded fields ------------------------------------------------

class OmegaHistory:
    """w(s) on (-inf, t_end]: constant ``omega_bar`` for s <= t_a, then ``func``."""

    def __init__(self, omega_bar, t_a: float = 0.0, func: Callable | None = None,
                 dfunc: Callable | None = None, t_end: float = math.inf):
        self.omega_bar = np.asarray(omega_bar, float).reshape(3)
        self.t_a = float(t_a)
        self.t_end = float(t_end)
        if (func is None) != (dfunc is None):
            raise ValueError("func and dfunc must be given together")
        self._f = func
        self._df = dfunc
        if func is not None:
            gap = np.max(np.abs(np.asarray(func(np.array([self.t_a])), float).reshape(3) - self.omega_bar))
            if gap > 1e-9 * max(1.0, float(np.max(np.abs(self.omega_bar)))):
                raise ValueError(f"history is discontinuous at t_a (jump {gap:.3g})")

    @classmethod
    def constant(cls, omega_bar) -> "OmegaHistory":
        return cls(omega_bar)

    @classmethod
    def from_samples(cls, times, omegas) -> "OmegaHistory":
        """Cubic-spline history through samples, constant before the first one."""
        times = np.asarray(times, float)
        omegas = np.asarray(omegas, float)
        spl = CubicSpline(times, omegas, axis=0, bc_type="clamped")
        d = spl.derivative()
        return cls(omegas[0], times[0], lambda s: spl(s), lambda s: d(s), t_end=times[-1])

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        out = np.broadcast_to(self.omega_bar, s.shape + (3,)).copy()
        if self._f is not None:
            late = s > self.t_a
            if np.any(late):
                out[late] = self._f(s[late])
        return out

    def derivative(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        out = np.zeros(s.shape + (3,))
        if self._df is not None:
            late = s > self.t_a
            if np.any(late):
                out[late] = self._df(s[late])
        return out


def _shell_weight(profile: ChargeProfile, r: float, tau: np.ndarray, n_r: int = 48) -> np.ndarray:
    """g(r, tau) = (1/(4 r²)) ∫ rho(s) s (s² + r² - tau²) ds over s ∈ [|r-tau|, min(r+tau, R)]."""
    R = profile.R_rho
    lo = np.abs(r - tau)
    hi = np.minimum(r + tau, R)
    ok = hi > lo
    out = np.zeros_like(tau)
    if profile.kind == "uniform-ball":
        rho0 = 3.0 * profile.total_charge / (4.0 * math.pi * R**3)
        F = lambda s, c: s**4 / 4.0 + c * s**2 / 2.0
        c = r**2 - tau[ok] ** 2
        out[ok] = rho0 * (F(hi[ok], c) - F(lo[ok], c))
    else:
        xg, wg = _gauss_legendre(n_r)
        a, b = lo[ok][:, None], hi[ok][:, None]
        s = a + 0.5 * (b - a) * (xg + 1.0)
        c = (r**2 - tau[ok] ** 2)[:, None]
        out[ok] = 0.5 * (b - a)[:, 0] * np.sum(wg * rho_eval(profile, s) * s * (s**2 + c), axis=1)
    return out / (4.0 * r**2)


def _tau_nodes(r: float, R: float, extra=(), n: int = 32):
    brk = {max(0.0, r - R), abs(R - r), r, r + R}
    brk |= {b for b in extra if max(0.0, r - R) < b < r + R}
    brk = sorted(brk)
    xg, wg = _gauss_legendre(n)
    taus, ws = [], []
    for a, b in zip(brk[:-1], brk[1:]):
        if b - a <= 0:
            continue
        taus.append(a + 0.5 * (b - a) * (xg + 1.0))
        ws.append(0.5 * (b - a) * wg)
    return np.concatenate(taus), np.concatenate(ws)


def retarded_field(x, t: float, hist: OmegaHistory, profile: ChargeProfile, n: int = 32):
    """Retarded (A_r, Pi_r) at a point x driven by w(s) ∧ x rho for s in (-inf, t].

    Only retarded times with |x - y| = t - s for some |y| <= R_rho contribute,
    i.e. t - s in [max(0, |x| - R_rho), |x| + R_rho].  The time nodes depend on
    (x, t) and on the history only through the kink t - t_a when it lies inside
    that window, so outside the light cone of t_a they are those of the frozen
    history.
    """
    x = np.asarray(x, float).reshape(3)
    if t > hist.t_end:
        raise ValueError(f"history ends at {hist.t_end:g} < t = {t:g}")
    r = float(np.linalg.norm(x))
    if r < 1e-14:
        return np.zeros(3), np.zeros(3)
    xh = x / r
    tau, wt = _tau_nodes(r, profile.R_rho, extra=(t - hist.t_a,) if hist._f is not None else (), n=n)
    g = _shell_weight(profile, r, tau) * wt
    s = t - tau
    A = np.cross(g @ hist(s), xh)
    Pi = np.cross(g @ hist.derivative(s), xh)
    return A, Pi


# -- f(t) and drift --------------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def ball_rule(profile: ChargeProfile, n_r: int = 12, order: int = 17):
    """Nodes y (m, 3) and weights including rho(|y|) for ∫_{B_R} F(y) rho(|y|) dy."""
    xg, wg = _gauss_legendre(n_r)
    R = profile.R_rho
    r = 0.5 * R * (xg + 1.0)
    wr = 0.5 * R * wg * r**2 * rho_eval(profile, r)
    z, wz = sphere_rule(order)
    y = (r[:, None, None] * z[None]).reshape(-1, 3)
    w = (wr[:, None] * wz[None]).ravel()
    return y, w


def f_eval(t: float, init: InitialFieldSpec, omega_t, profile: ChargeProfile,
           order: int = 17, ball=(12, 17)) -> np.ndarray:
    """f(t) = <Pi_K ∧ varrho> + w(t) ∧ <varrho ∧ A_K> with varrho = x rho."""
    if init.is_zero:
        return np.zeros(3)
    y, w = ball_rule(profile, *ball)
    kv = kirchhoff_free(y, t, init, order=order)
    Pi_var = np.sum(w[:, None] * np.cross(kv.Pi, y), axis=0)
    var_A = np.sum(w[:, None] * np.cross(y, kv.A), axis=0)
    return Pi_var + np.cross(np.asarray(omega_t, float), var_A)


def sobolev_sides(t: float, init: InitialFieldSpec, profile: ChargeProfile, order: int = 17, ball=(12, 17)):
    """(|<varrho ∧ A_K>|, ||∇A_K||_{B_R}) for the Sobolev-type bound check."""
    y, w = ball_rule(profile, *ball)
    kv = kirchhoff_free(y, t, init, order=order)
    lhs = float(np.linalg.norm(np.sum(w[:, None] * np.cross(y, kv.A), axis=0)))
    # plain volume weights: divide rho back out
    rho = rho_eval(profile, np.linalg.norm(y, axis=1))
    vol_w = np.where(rho > 0, w / np.where(rho > 0, rho, 1.0), 0.0)
    grad = math.sqrt(float(np.sum(vol_w * np.sum(kv.grad_A**2, axis=(1, 2)))))
    return lhs, grad


@dataclass
class DecayFit:
    exponent: float
    prefactor: float
    t_range: tuple

    def to_dict(self):
        return {"exponent": self.exponent, "prefactor": self.prefactor, "t_range": list(self.t_range)}


def fit_power_law(t, y) -> DecayFit:
    """Least-squares fit of log y = log C + p log t."""
    t = np.asarray(t, float)
    y = np.abs(np.asarray(y, float))
    if t.size < 2 or np.any(y <= 0) or np.any(t <= 0):
        raise ValueError("need at least two positive samples")
    p, c = np.polyfit(np.log(t), np.log(y), 1)
    return DecayFit(float(p), float(math.exp(c)), (float(t[0]), float(t[-1])))


def kirchhoff_decay(init: InitialFieldSpec, t_range=(50.0, 400.0), n_t: int = 16, order: int = 41) -> DecayFit:
    """Fit |∇A_K(0,t)| + |Pi_K(0,t)| against t on a log grid."""
    ts = np.geomspace(*t_range, n_t)
    vals = []
    for t in ts:
        kv = kirchhoff_free(np.zeros(3), t, init, order=order)
        vals.append(np.linalg.norm(kv.grad_A) + np.linalg.norm(kv.Pi))
    return fit_power_law(ts, vals)


def f_decay(init: InitialFieldSpec, omega, profile: ChargeProfile, t_range=(50.0, 400.0), n_t: int = 12) -> DecayFit:
    ts = np.geomspace(*t_range, n_t)
    vals = [np.linalg.norm(f_eval(t, init, omega, profile)) for t in ts]
    return fit_power_law(ts, vals)


@dataclass
class DriftSeries:
    """Minimal series accepted by drift_check: times with H and |pi| values."""
    t: np.ndarray
    H: np.ndarray
    pi_norm: np.ndarray


def kirchhoff_drift_series(init: InitialFieldSpec, omega, profile: ChargeProfile, I: float,
                           t_grid, H0: float = 0.0) -> DriftSeries:
    """Modified-trajectory functionals driven only by f(t), with w held fixed.

    dH/dt = w·f and dpi/dt = w ∧ pi + f (so d|pi|/dt = pi·f/|pi|); both are
    integrated with the trapezoid rule on ``t_grid``, starting from
    pi = I w.
    """
    t_grid = np.asarray(t_grid, float)
    w = np.asarray(omega, float)
    f = np.array([f_eval(t, init, w, profile) for t in t_grid])
    H = H0 + np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t_grid) * (f[1:] @ w + f[:-1] @ w))])
    pi = I * w.copy()
    pis = [np.linalg.norm(pi)]
    for i in range(len(t_grid) - 1):
        dt = t_grid[i + 1] - t_grid[i]
        # rotation w∧pi preserves |pi|; only f changes the norm
        pi = pi + 0.5 * dt * (f[i] + f[i + 1])
        pis.append(np.linalg.norm(pi))
    return DriftSeries(t_grid, H, np.array(pis))


@dataclass
class DriftReport:
    passed: bool
    sigma: float
    H_exponent: float
    pi_exponent: float
    H_constant: float
    pi_constant: float
    n_T: int

    def to_dict(self):
        return dict(self.__dict__)


def drift_check(series, T: float, sigma: float, n_T: int = 8, slack: float = 0.2) -> DriftReport:
    """Check |X(t) - X(T')| <= C T'^-sigma for t >= T' >= T, X = H, |pi|.

    For a ladder of start times T' in [T, t_max/2] the worst drift after T'
    is fitted against T'; the report holds the fitted decay exponents
    and the smallest C consistent with the bound.
    """
    t = np.asarray(series.t, float)
    late = t >= T
    if np.count_nonzero(late) < 4:
        raise ValueError("insufficient samples after T")
    t_hi = t[late][-1]
    Ts = np.geomspace(T, max(T * 1.01, 0.5 * t_hi), n_T)
    out = {}
    for name in ("H", "pi_norm"):
        x = np.asarray(getattr(series, name), float)
        D = []
        for Tp in Ts:
            i0 = int(np.searchsorted(t, Tp))
            D.append(float(np.max(np.abs(x[i0:] - x[i0]))))
        D = np.maximum(np.array(D), 1e-300)
        if np.all(D < 1e-13 * max(1.0, float(np.max(np.abs(x))))):
            out[name] = (math.inf, 0.0)
            continue
        fit = fit_power_law(Ts, D)
        out[name] = (-fit.exponent, float(np.max(D * Ts**sigma)))
    ok = all(e >= sigma - slack for e, _ in out.values())
    return DriftReport(ok, sigma, out["H"][0], out["pi_norm"][0], out["H"][1], out["pi_norm"][1], n_T)

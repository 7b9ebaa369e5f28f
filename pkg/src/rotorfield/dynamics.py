"""Time integration of the rotor-field system on the periodic spectral grid.

    dA/dt  = Pi
    dPi/dt = ΔA + w ∧ varrho
    I dw/dt = <Pi ∧ varrho> - w ∧ <A ∧ varrho>

The default ``strang`` scheme splits the rotor from the field: each field
mode is advanced exactly as a driven harmonic oscillator with w frozen,
and w is advanced with the field frozen (one RK4 step per half step).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .coupling import GridModel
from .grid import (
    FieldState,
    SpectralGrid,
    SystemState,
    cross,
    gradient_physical,
    mode_mask,
    positions,
    to_physical,
    wavenumber,
)
from .soliton import Soliton, _grid_soliton, hamiltonian, pi_invariant

SCHEMES = ("strang", "rk4-monolithic")


class IntegrationError(FloatingPointError):
    """The state became non-finite during a step."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    t_max: float = 10.0
    scheme: str = "strang"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.t_max >= 0:
            raise ValueError("t_max must be non-negative")


def rhs_omega(state: SystemState, model: GridModel) -> np.ndarray:
    """dw/dt = (<Pi ∧ varrho> - w ∧ <A ∧ varrho>)/I."""
    P = model.bracket(state.field.Pi_hat)
    Q = model.bracket(state.field.A_hat)
    return (P - np.cross(state.omega, Q)) / model.I


def _rk4_omega(omega, P, Q, I, tau):
    f = lambda w: (P - np.cross(w, Q)) / I
    k1 = f(omega)
    k2 = f(omega + 0.5 * tau * k1)
    k3 = f(omega + 0.5 * tau * k2)
    k4 = f(omega + tau * k3)
    return omega + tau / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


@numba.njit(cache=True)
def _bracket_pair(A, Pi, hk):
    """Unnormalised <A ∧ varrho>, <Pi ∧ varrho> sums over flattened modes."""
    Q = np.zeros(3)
    P = np.zeros(3)
    for i in range(A.shape[1]):
        h0, h1, h2 = hk[0, i], hk[1, i], hk[2, i]
        a0, a1, a2 = A[0, i].imag, A[1, i].imag, A[2, i].imag
        p0, p1, p2 = Pi[0, i].imag, Pi[1, i].imag, Pi[2, i].imag
        Q[0] += a1 * h2 - a2 * h1
        Q[1] += a2 * h0 - a0 * h2
        Q[2] += a0 * h1 - a1 * h0
        P[0] += p1 * h2 - p2 * h1
        P[1] += p2 * h0 - p0 * h2
        P[2] += p0 * h1 - p1 * h0
    return Q, P


@numba.njit(cache=True)
def _rotate_modes(A, Pi, W, hk, cs, sk, ks, w, A_out, Pi_out):
    """Exact driven-oscillator update of every mode with w frozen; returns new brackets."""
    Q = np.zeros(3)
    P = np.zeros(3)
    w0, w1, w2 = w[0], w[1], w[2]
    for i in range(A.shape[1]):
        W0, W1, W2 = W[0, i], W[1, i], W[2, i]
        ap0 = w1 * W2 - w2 * W1
        ap1 = w2 * W0 - w0 * W2
        ap2 = w0 * W1 - w1 * W0
        c, s_k, k_s = cs[i], sk[i], ks[i]
        d0 = A[0, i] - 1j * ap0
        d1 = A[1, i] - 1j * ap1
        d2 = A[2, i] - 1j * ap2
        a0 = 1j * ap0 + d0 * c + Pi[0, i] * s_k
        a1 = 1j * ap1 + d1 * c + Pi[1, i] * s_k
        a2 = 1j * ap2 + d2 * c + Pi[2, i] * s_k
        p0 = Pi[0, i] * c - d0 * k_s
        p1 = Pi[1, i] * c - d1 * k_s
        p2 = Pi[2, i] * c - d2 * k_s
        A_out[0, i] = a0
        A_out[1, i] = a1
        A_out[2, i] = a2
        Pi_out[0, i] = p0
        Pi_out[1, i] = p1
        Pi_out[2, i] = p2
        h0, h1, h2 = hk[0, i], hk[1, i], hk[2, i]
        Q[0] += a1.imag * h2 - a2.imag * h1
        Q[1] += a2.imag * h0 - a0.imag * h2
        Q[2] += a0.imag * h1 - a1.imag * h0
        P[0] += p1.imag * h2 - p2.imag * h1
        P[1] += p2.imag * h0 - p0.imag * h2
        P[2] += p0.imag * h1 - p1.imag * h0
    return Q, P


class Stepper:
    """Advances SystemState by one time step of a fixed scheme."""

    def __init__(self, model: GridModel, cfg: IntegratorConfig):
        self.model = model
        self.cfg = cfg
        grid = model.grid
        mask = mode_mask(grid)
        kn = np.where(mask, wavenumber(grid), 0.0)
        dt = cfg.dt
        if cfg.scheme == "strang":
            M = grid.N**3
            self._cos = np.cos(kn * dt).reshape(M)
            with np.errstate(invalid="ignore", divide="ignore"):
                self._sin_over_k = np.where(kn > 0, np.sin(kn * dt) / np.where(kn > 0, kn, 1.0), dt).reshape(M)
            self._k_sin = (kn * np.sin(kn * dt)).reshape(M)
            self._W = np.ascontiguousarray(model.W.reshape(3, M))
            self._hk = np.ascontiguousarray((model.khat * model.h).reshape(3, M))
        else:
            if dt * float(kn.max()) >= 2.0:
                raise ValueError(f"rk4-monolithic needs dt*k_max < 2 (got {dt * float(kn.max()):.3g})")
            self._k2 = kn**2
            self._src = model.khat * model.h  # varrho_hat = i * this

    def step(self, state: SystemState) -> SystemState:
        out = self._strang(state) if self.cfg.scheme == "strang" else self._rk4(state)
        if not np.all(np.isfinite(out.omega)):
            raise IntegrationError(f"non-finite omega at t={out.t:.6g}: {out.omega}")
        return out

    def _strang(self, state: SystemState) -> SystemState:
        model, dt = self.model, self.cfg.dt
        shape = state.field.A_hat.shape
        M = self._cos.shape[0]
        A = np.ascontiguousarray(state.field.A_hat).reshape(3, M)
        Pi = np.ascontiguousarray(state.field.Pi_hat).reshape(3, M)
        vol = model.grid.volume
        Q, P = _bracket_pair(A, Pi, self._hk)
        w = _rk4_omega(state.omega, P / vol, Q / vol, model.I, 0.5 * dt)
        A_new = np.empty_like(A)
        Pi_new = np.empty_like(Pi)
        Q, P = _rotate_modes(A, Pi, self._W, self._hk, self._cos, self._sin_over_k, self._k_sin, w, A_new, Pi_new)
        w = _rk4_omega(w, P / vol, Q / vol, model.I, 0.5 * dt)
        return SystemState(FieldState(A_new.reshape(shape), Pi_new.reshape(shape)), w, state.t + dt)

    def _rk4(self, state: SystemState) -> SystemState:
        model, dt = self.model, self.cfg.dt

        def f(A, Pi, w):
            dPi = -self._k2 * A + 1j * cross(w, self._src)
            dw = (model.bracket(Pi) - np.cross(w, model.bracket(A))) / model.I
            return Pi, dPi, dw

        A, Pi, w = state.field.A_hat, state.field.Pi_hat, state.omega
        k1 = f(A, Pi, w)
        k2 = f(A + 0.5 * dt * k1[0], Pi + 0.5 * dt * k1[1], w + 0.5 * dt * k1[2])
        k3 = f(A + 0.5 * dt * k2[0], Pi + 0.5 * dt * k2[1], w + 0.5 * dt * k2[2])
        k4 = f(A + dt * k3[0], Pi + dt * k3[1], w + dt * k3[2])
        c = dt / 6.0
        A_new = A + c * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        Pi_new = Pi + c * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        w_new = w + c * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        return SystemState(FieldState(A_new, Pi_new), w_new, state.t + dt)


def step(state: SystemState, cfg: IntegratorConfig, model: GridModel) -> SystemState:
    """One step; builds a fresh Stepper, so prefer Stepper for loops."""
    return Stepper(model, cfg).step(state)


def free_evolve(grid: SpectralGrid, field: FieldState, t: float) -> FieldState:
    """Exact source-free evolution of every mode over time t."""
    kn = np.where(mode_mask(grid), wavenumber(grid), 0.0)
    c = np.cos(kn * t)
    with np.errstate(invalid="ignore", divide="ignore"):
        s_k = np.where(kn > 0, np.sin(kn * t) / np.where(kn > 0, kn, 1.0), t)
    A = field.A_hat * c + field.Pi_hat * s_k
    Pi = field.Pi_hat * c - field.A_hat * kn * np.sin(kn * t)
    return FieldState(A, Pi)


# -- local energy seminorms ---------------------------------------------------

def local_seminorm(state: SystemState, reference: Soliton, R: float) -> float:
    """||Y - S||_R = ||∇(A - A_ref)||_{B_R} + ||Pi||_{B_R} + |w - w_ref|.

    Balls with R >= L/2 are taken to be the whole periodic cell.
    """
    grid = reference.grid
    if R <= 0:
        raise ValueError("R must be positive")
    dA = state.field.A_hat - reference.A_hat
    if R >= grid.L / 2:
        k2 = wavenumber(grid) ** 2
        grad = math.sqrt(float(np.sum(k2 * (dA.real**2 + dA.imag**2))) / grid.volume)
        pi = math.sqrt(float(np.sum(np.abs(state.field.Pi_hat) ** 2)) / grid.volume)
    else:
        inside = np.linalg.norm(positions(grid), axis=0) < R
        g = gradient_physical(grid, dA)
        grad = math.sqrt(float(np.sum(g[:, :, inside] ** 2)) * grid.cell_volume)
        p = to_physical(grid, state.field.Pi_hat)
        pi = math.sqrt(float(np.sum(p[:, inside] ** 2)) * grid.cell_volume)
    return grad + pi + float(np.linalg.norm(state.omega - reference.omega))


class LocalProbe:
    """Keeps ∇A and Pi on the grid points of the largest ball, so that
    seminorm distances to any soliton can be evaluated after a run."""

    def __init__(self, model: GridModel, R_list: Sequence[float]):
        grid = model.grid
        self.model = model
        self.R_list = [float(R) for R in R_list]
        for R in self.R_list:
            if not 0 < R < grid.L / 2:
                raise ValueError(f"seminorm radius {R} must lie in (0, L/2)")
        R_max = max(self.R_list) if self.R_list else 0.0
        r = np.linalg.norm(positions(grid), axis=0)
        self._sel = r < R_max
        self.r = r[self._sel]
        unit = []
        for c in range(3):
            e = np.zeros(3)
            e[c] = 1.0
            s = _grid_soliton(e, model)
            unit.append(gradient_physical(grid, s.A_hat)[:, :, self._sel])
        self._unit_grad = np.stack(unit)  # (3 omega comps, 3, 3, npts)

    def sample(self, state: SystemState):
        g = gradient_physical(self.model.grid, state.field.A_hat)[:, :, self._sel]
        p = to_physical(self.model.grid, state.field.Pi_hat)[:, self._sel]
        return g, p, state.omega.copy()

    def distance(self, sample, omega_ref, R: float) -> float:
        g, p, w = sample
        inside = self.r < R
        dV = self.model.grid.cell_volume
        dg = g - np.tensordot(np.asarray(omega_ref, float), self._unit_grad, axes=1)
        grad = math.sqrt(float(np.sum(dg[:, :, inside] ** 2)) * dV)
        pi = math.sqrt(float(np.sum(p[:, inside] ** 2)) * dV)
        return grad + pi + float(np.linalg.norm(w - np.asarray(omega_ref, float)))


# -- runs ------------------------------------------------------------------------

CSV_BASE = [
    "t", "omega_x", "omega_y", "omega_z", "omega_dot_norm", "H", "pi_norm",
    "omega_tilde_x", "omega_tilde_y", "omega_tilde_z",
]


def _fmt_R(R: float) -> str:
    return f"{R:g}"


@dataclass
class DiagnosticsSeries:
    t: np.ndarray
    omega: np.ndarray
    omega_dot_norm: np.ndarray
    H: np.ndarray
    pi_norm: np.ndarray
    omega_tilde: np.ndarray
    dist: dict = field(default_factory=dict)  # R -> distance to S_{omega_tilde(t)}
    samples: list = field(default_factory=list)  # LocalProbe samples, one per time
    probe: LocalProbe | None = None
    meta: dict = field(default_factory=dict)
    final_state: SystemState | None = None
    extra: dict = field(default_factory=dict)  # optional per-sample series (not in the CSV)

    def __len__(self):
        return len(self.t)

    def columns(self) -> list:
        return CSV_BASE + [f"dist_R_{_fmt_R(R)}" for R in self.dist]

    def rows(self):
        for i in range(len(self.t)):
            row = [self.t[i], *self.omega[i], self.omega_dot_norm[i], self.H[i], self.pi_norm[i], *self.omega_tilde[i]]
            row += [self.dist[R][i] for R in self.dist]
            yield row

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for row in self.rows():
                w.writerow([format(float(v), ".17g") for v in row])

    def distances_to(self, omega_ref, R: float) -> np.ndarray:
        """||Y(t) - S_{omega_ref}||_R at every sample (needs a probe covering R)."""
        if self.probe is None or not self.samples:
            raise ValueError("series was recorded without local samples")
        return np.array([self.probe.distance(s, omega_ref, R) for s in self.samples])


def sample_grid(t_max: float, samples: int) -> np.ndarray:
    return np.linspace(0.0, t_max, int(samples))


def run(state: SystemState, cfg: IntegratorConfig, model: GridModel, sample_times,
        R_list: Sequence[float] = (), keep_samples: bool = True, callback=None,
        free_field: FieldState | None = None) -> DiagnosticsSeries:
    """Integrate from ``state`` and record diagnostics at ``sample_times``.

    Sample times are rounded to whole steps.  ``callback(state)`` is called
    after every step when given.  With ``free_field`` the functionals of the
    modified state Y - (free evolution of free_field) are recorded as
    ``extra["H_mod"]`` and ``extra["pi_mod"]``.
    """
    grid = model.grid
    times = np.sort(np.asarray(sample_times, dtype=float))
    if times.size == 0:
        raise ValueError("need at least one sample time")
    if times[0] < state.t - 1e-12 or times[-1] > state.t + cfg.t_max + 1e-9:
        raise ValueError("sample times must lie within [t0, t0 + t_max]")
    stepper = Stepper(model, cfg)
    probe = LocalProbe(model, R_list) if R_list else None

    H0 = hamiltonian(state, model)
    omega_bar = math.sqrt(2.0 * H0 / model.I)
    wrap = grid.wrap_time(model.profile.R_rho)
    meta = {
        "wrap_time": wrap,
        "wrap_contaminated": bool(times[-1] - times[0] > wrap),
        "omega_bar": omega_bar,
        "omega_bound_violations": 0,
        "I": model.I,
        "I_eff": model.I_eff,
        "kappa0_grid": model.kappa0,
        "steps": 0,
    }

    rec = {k: [] for k in ("t", "omega", "wdot", "H", "pi", "wt", "H_mod", "pi_mod")}
    dist = {R: [] for R in R_list}
    samples = []
    n_done = 0
    t0 = state.t
    for ts in times:
        target = int(round((ts - t0) / cfg.dt))
        while n_done < target:
            state = stepper.step(state)
            n_done += 1
            if float(np.linalg.norm(state.omega)) > omega_bar * (1 + 1e-9):
                meta["omega_bound_violations"] += 1
            if callback is not None:
                callback(state)
        pi = pi_invariant(state, model)
        wt = pi / model.I_eff
        rec["t"].append(state.t)
        rec["omega"].append(state.omega.copy())
        rec["wdot"].append(float(np.linalg.norm(rhs_omega(state, model))))
        rec["H"].append(hamiltonian(state, model))
        rec["pi"].append(float(np.linalg.norm(pi)))
        rec["wt"].append(wt)
        if free_field is not None:
            Fk = free_evolve(grid, free_field, state.t - t0)
            Ym = SystemState(state.field - Fk, state.omega, state.t)
            rec["H_mod"].append(hamiltonian(Ym, model))
            rec["pi_mod"].append(float(np.linalg.norm(pi_invariant(Ym, model))))
        if probe is not None:
            s = probe.sample(state)
            for R in R_list:
                dist[R].append(probe.distance(s, wt, R))
            if keep_samples:
                samples.append(s)
    meta["steps"] = n_done
    if not np.all(np.isfinite(state.field.A_hat)) or not np.all(np.isfinite(state.field.Pi_hat)):
        raise IntegrationError(f"non-finite field at t={state.t:.6g}")
    return DiagnosticsSeries(
        t=np.array(rec["t"]),
        omega=np.array(rec["omega"]),
        omega_dot_norm=np.array(rec["wdot"]),
        H=np.array(rec["H"]),
        pi_norm=np.array(rec["pi"]),
        omega_tilde=np.array(rec["wt"]),
        dist={R: np.array(v) for R, v in dist.items()},
        samples=samples,
        probe=probe,
        meta=meta,
        final_state=state,
        extra={k: np.array(rec[k]) for k in ("H_mod", "pi_mod")} if free_field is not None else {},
    )

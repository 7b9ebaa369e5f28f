"""Acceptance criteria, one test per criterion; each records a PASS/FAIL line
that is printed in the terminal summary."""
import math
import warnings

import numpy as np
import pytest

from rotorfield import charge
from rotorfield.charge import ChargeProfile
from rotorfield.coupling import GridModel
from rotorfield.diagnostics import attraction_report, conservation_drifts
from rotorfield.dynamics import IntegratorConfig, Stepper, free_evolve, local_seminorm, run, sample_grid
from rotorfield.grid import FieldState, SpectralGrid, SystemState, positions, project_transverse, to_physical, to_spectral
from rotorfield.kirchhoff import (
    InitialFieldSpec,
    OmegaHistory,
    f_decay,
    kirchhoff_decay,
    kirchhoff_free,
    retarded_field,
    sphere_integral_identity,
    sphere_integral_quadrature,
)
from rotorfield.soliton import _grid_soliton, random_perturbation, soliton_A, soliton_A_pointwise, stability_gap, y_norm

from oracles import brute_force_zeros, kappa0_kspace_3d

BALL = ChargeProfile("uniform-ball", 1.0)
GRID = SpectralGrid(48, 24.0)
W0 = np.array([0.0, 0.0, 1.0])
W1 = np.array([0.0, 0.0, 1.2])
T_WRAP = GRID.wrap_time(BALL.R_rho)  # (L - 2 R_rho)/2 = 11


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def kick_run(dt):
    model = GridModel.get(GRID, BALL)
    S = _grid_soliton(W0, model).state()
    Y0 = SystemState(S.field, W1)
    return run(Y0, IntegratorConfig(dt, T_WRAP), model, sample_grid(T_WRAP, 111), R_list=[2.0, 4.0])


@pytest.fixture(scope="module")
def kick():
    return {dt: kick_run(dt) for dt in (1e-3, 5e-4)}


@pytest.mark.slow
def test_c01_soliton_stationarity(acceptance):
    model = GridModel.get(GRID, BALL)
    S = soliton_A(W0, BALL, GRID)
    cfg = IntegratorConfig(1e-3, 10.0)
    stepper = Stepper(model, cfg)
    Y = S.state()
    step_max = dist_max = 0.0
    for n in range(1, 10001):
        Yn = stepper.step(Y)
        step_max = max(step_max, y_norm(Yn - Y, GRID))
        Y = Yn
        if n % 100 == 0:
            dist_max = max(dist_max, local_seminorm(Y, S, GRID.L / 2))
    ok = step_max <= 1e-10 and dist_max <= 1e-8
    acceptance(1, ok, f"soliton stationarity: max step change {step_max:.2e} (<=1e-10), "
                      f"max ||Y-S||_L/2 {dist_max:.2e} (<=1e-8) over t in [0,10]")
    assert ok


@pytest.mark.slow
def test_c02_conservation(acceptance, kick):
    d1, d2 = conservation_drifts(kick[1e-3]), conservation_drifts(kick[5e-4])
    rH, rp = d1["H"] / d2["H"], d1["pi_norm"] / d2["pi_norm"]
    ok = d1["H"] <= 1e-6 and d1["pi_norm"] <= 1e-8 and 3.5 <= rH <= 4.5 and 3.5 <= rp <= 4.5
    acceptance(2, ok, f"conservation to t={T_WRAP:g}: H drift {d1['H']:.2e} (<=1e-6), |pi| drift "
                      f"{d1['pi_norm']:.2e} (<=1e-8); halving dt shrinks them x{rH:.2f}, x{rp:.2f} (~4)")
    assert ok


@pytest.mark.slow
def test_c03_attraction(acceptance, kick):
    s = kick[1e-3]
    rep = attraction_report(s, [2.0, 4.0])
    red = {"w": rep.omega_dist["to_omega_tilde"]["reduction"]}
    for R in (2.0, 4.0):
        red[f"R={R:g}"] = rep.seminorm[R]["to_omega_tilde"]["reduction"]
    ok = (rep.attraction and rep.consistency <= 1e-3 and rep.omega_dot_ratio <= 0.1
          and all(v >= 10 for v in red.values()))
    acceptance(3, ok, "attraction: reductions " + ", ".join(f"{k} x{v:.0f}" for k, v in red.items())
               + f" (>=10); |dw/dt| ratio {rep.omega_dot_ratio:.1e} (<=0.1); "
               f"|w+ - w~(t_max)| {rep.consistency:.1e} (<=1e-3); status {rep.status}")
    assert ok


def test_c04_kirchhoff_decay(acceptance):
    fit = kirchhoff_decay(InitialFieldSpec("algebraic", 0.75), (50.0, 400.0))
    ok = abs(fit.exponent + 1.75) <= 0.15
    acceptance(4, ok, f"free-field decay exponent {fit.exponent:.4f} (target -1.75 +- 0.15)")
    assert ok


def test_c05_sphere_identity(acceptance):
    worst = 0.0
    for a in (1.5, 2.5, 3.0):
        for xn in (0.3, 0.7, 1.0):
            for t in (2.0, 5.0, 10.0):
                exact = sphere_integral_identity(a, xn, t)
                worst = max(worst, abs(sphere_integral_quadrature(a, xn, t) - exact) / exact)
    ok = worst <= 1e-8
    acceptance(5, ok, f"sphere identity vs quadrature: worst relative error {worst:.1e} (<=1e-8) over 27 cases")
    assert ok


def test_c06_retarded_soliton(acceptance):
    w = np.array([0.3, -0.2, 1.0])
    rng = np.random.default_rng(6)
    probes = rng.uniform(-3, 3, size=(20, 3))
    ref = soliton_A_pointwise(w, BALL, probes)
    const = OmegaHistory.constant(w)
    err = max(np.linalg.norm(retarded_field(x, 5.0, const, BALL)[0] - a) / np.linalg.norm(a)
              for x, a in zip(probes, ref))
    # history moves after t_a = 0; probe at t = 1 outside |x| >= t + R_rho
    f = lambda s: w + np.outer(s**2, [0.2, 0.1, 0.0])
    df = lambda s: np.outer(2 * s, [0.2, 0.1, 0.0])
    moving = OmegaHistory(w, 0.0, f, df)
    out = [p for p in probes if np.linalg.norm(p) >= 2.0]
    exact = all(np.array_equal(retarded_field(x, 1.0, moving, BALL)[0], retarded_field(x, 1.0, const, BALL)[0])
                for x in out)
    ok = err <= 1e-4 and exact and len(out) >= 5
    acceptance(6, ok, f"retarded soliton: worst relative error {err:.1e} at 20 probes (<=1e-4); "
                      f"{len(out)} probes outside the light cone exactly soliton: {exact}")
    assert ok


def test_c07_f_decay(acceptance):
    fit = f_decay(InitialFieldSpec("algebraic", 0.75), [0.3, -0.2, 1.0], BALL, (50.0, 400.0))
    ok = abs(fit.exponent + 1.75) <= 0.2
    acceptance(7, ok, f"f(t) decay exponent {fit.exponent:.4f} (target -1.75 +- 0.2)")
    assert ok


def test_c08_stability_gap(acceptance):
    model = GridModel.get(GRID, BALL)
    rng = np.random.default_rng(8)
    gaps, ratios = [], []
    for _ in range(100):
        dY = random_perturbation(GRID, rng, 1e-2)
        g1 = stability_gap(W0, dY, model)
        g2 = stability_gap(W0, dY.scaled(0.1), model)
        gaps += [g1, g2]
        ratios.append((g1 / 1e-4) / (g2 / 1e-6))
    spread = max(abs(r - 1) for r in ratios)
    ok = min(gaps) >= 0 and spread <= 0.1
    acceptance(8, ok, f"stability gap: min over 100 perturbations {min(gaps):.2e} (>=0); "
                      f"gap/s^2 varies by {spread:.1e} between s=1e-2 and 1e-3 (<=0.1)")
    assert ok


def test_c09_cross_solver(acceptance):
    spec = InitialFieldSpec("gaussian", width=1.5)
    x = np.moveaxis(positions(GRID), 0, -1)
    A0, Pi0 = spec.A(x), spec.Pi(x)
    F = FieldState(project_transverse(GRID, to_spectral(GRID, np.moveaxis(A0, -1, 0))),
                   project_transverse(GRID, to_spectral(GRID, np.moveaxis(Pi0, -1, 0))))
    scale = max(np.abs(A0).max(), np.abs(Pi0).max())
    rng = np.random.default_rng(9)
    inside = np.argwhere(np.linalg.norm(x, axis=-1) <= 3.0)
    pick = inside[rng.choice(len(inside), 10, replace=False)]
    pts = x[tuple(pick.T)]
    worst = 0.0
    for t in (3.0, 6.0, 9.0, 10.5):
        Ft = free_evolve(GRID, F, t)
        Ag = to_physical(GRID, Ft.A_hat)[(slice(None),) + tuple(pick.T)].T
        Pg = to_physical(GRID, Ft.Pi_hat)[(slice(None),) + tuple(pick.T)].T
        kv = kirchhoff_free(pts, t, spec)
        worst = max(worst, np.abs(Ag - kv.A).max() / scale, np.abs(Pg - kv.Pi).max() / scale)
    ok = worst <= 1e-3 and 10.5 < T_WRAP
    acceptance(9, ok, f"spectral vs Kirchhoff free evolution: worst error {worst:.1e} of field scale "
                      f"(<=1e-3) at 10 points, t up to 10.5 < {T_WRAP:g}")
    assert ok


def test_c10_spectral_constants(acceptance):
    model = GridModel.get(GRID, BALL)
    w = np.array([0.3, -0.2, 1.0])
    S = _grid_soliton(w, model).state()
    from rotorfield.soliton import pi_invariant
    e_pi = np.linalg.norm(pi_invariant(S, model) - model.I_eff * w) / np.linalg.norm(model.I_eff * w)
    target = 2 / 3 * model.kappa0 * w
    e_br = np.linalg.norm(-model.bracket(S.field.A_hat) - target) / np.linalg.norm(target)
    e_k0 = max(abs(kappa0_kspace_3d(p, K=K) / charge.kappa0(p) - 1)
               for p, K in ((BALL, 2000.0), (ChargeProfile("smooth-bump", 1.0), 200.0)))
    z = charge.g_zeros(BALL, 20.0)
    fine = brute_force_zeros(BALL, 20.0, 40960)
    e_z = float(np.max(np.abs(z.mu - fine))) if len(z) == len(fine) else math.inf
    m = charge.m_rho_ball(z)
    exact = np.array_equal(m, np.array([4 * math.pi * (mu**2 - 30) / mu**4 for mu in z.mu]))
    ok = e_pi <= 1e-8 and e_br <= 1e-6 and e_k0 <= 1e-6 and e_z <= 1e-10 and exact
    acceptance(10, ok, f"spectral constants: pi(S)=I_eff w rel {e_pi:.1e} (<=1e-8); <varrho^A>=(2/3)kappa0 w "
                       f"rel {e_br:.1e} (<=1e-6); kappa0 radial vs 3D rel {e_k0:.1e} (<=1e-6); "
                       f"{len(z)} zeros vs 10x scan {e_z:.1e}; M_rho exact: {exact}")
    assert ok

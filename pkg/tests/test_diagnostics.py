import numpy as np
import pytest

from rotorfield.coupling import GridModel
from rotorfield.diagnostics import (
    WrapWarning,
    attraction_report,
    conservation_drifts,
    omega_tilde,
    oscillation,
    oscillation_profile,
)
from rotorfield.dynamics import DiagnosticsSeries, IntegratorConfig, run, sample_grid
from rotorfield.soliton import random_perturbation, soliton_A


def synthetic(t, omega, omega_tilde=None, wdot=None, meta=None):
    omega = np.asarray(omega, float)
    n = len(t)
    return DiagnosticsSeries(
        t=np.asarray(t, float),
        omega=omega,
        omega_dot_norm=np.asarray(wdot if wdot is not None else np.zeros(n), float),
        H=np.ones(n),
        pi_norm=np.ones(n),
        omega_tilde=np.asarray(omega_tilde if omega_tilde is not None else omega, float),
        meta=meta or {},
    )


def test_oscillation_exact_diameter():
    t = np.arange(4.0)
    w = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]], float)
    s = synthetic(t, w)
    assert oscillation(s, 0.0) == pytest.approx(np.sqrt(2))
    assert oscillation(s, 2.0) == pytest.approx(1.0)
    prof = oscillation_profile(s, [0.0, 1.0, 2.0])
    assert np.all(np.diff(prof) <= 0)
    with pytest.raises(ValueError):
        oscillation(s, 3.5)


def test_oscillation_blocked_matches_direct():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(2500, 3))
    s = synthetic(np.arange(2500.0), w)
    from scipy.spatial.distance import pdist
    assert oscillation(s, 0.0) == pytest.approx(pdist(w).max(), rel=1e-15)


def test_attraction_report_converging_series():
    t = np.linspace(0, 10, 101)
    w_inf = np.array([0, 0, 1.1])
    w = w_inf + np.outer(np.exp(-t), [0.1, 0.0, 0.1])
    s = synthetic(t, w, omega_tilde=np.tile(w_inf, (101, 1)), wdot=np.exp(-t))
    rep = attraction_report(s, R_list=[])
    assert rep.status == "attracted" and rep.attraction
    assert rep.consistency < 1e-3
    d = rep.to_dict()
    assert d["omega_dist"]["to_omega_tilde"]["reduction"] >= 10


def test_attraction_report_inconclusive_and_not_attracted():
    t = np.linspace(0, 10, 101)
    w = np.tile([0, 0, 1.0], (101, 1))
    rep = attraction_report(synthetic(t, w, omega_tilde=w + [0, 0, 0.1]), R_list=[])
    assert rep.status == "inconclusive" and not rep.attraction
    wo = np.stack([0.1 * np.sin(t), 0.1 * np.cos(t), np.ones_like(t)], axis=1)
    rep = attraction_report(synthetic(t, wo, omega_tilde=np.tile(wo[-1], (101, 1)), wdot=0.1 + 0 * t), R_list=[])
    assert rep.status == "not-attracted"
    assert any("relaxed" in n for n in rep.warnings)


def test_attraction_report_stationary_and_wrap_warning():
    t = np.linspace(0, 10, 11)
    w = np.tile([0, 0, 1.0], (11, 1))
    rep = attraction_report(synthetic(t, w), R_list=[])
    assert rep.status == "stationary" and rep.attraction
    with pytest.warns(WrapWarning):
        attraction_report(synthetic(t, w, meta={"wrap_contaminated": True}), R_list=[])


def test_conservation_drifts():
    s = synthetic(np.arange(3.0), np.tile([0, 0, 1.0], (3, 1)))
    s.H = np.array([2.0, 2.0002, 1.999])
    d = conservation_drifts(s)
    assert d["H"] == pytest.approx(5e-4)
    assert d["pi_norm"] == 0 and d["omega_tilde_norm"] == 0


def test_omega_tilde_on_soliton_and_run(small_grid, ball, rng):
    m = GridModel.get(small_grid, ball)
    w = np.array([0.0, 0.2, 0.9])
    S = soliton_A(w, ball, small_grid).state()
    assert np.allclose(omega_tilde(S, m), w, rtol=1e-12)
    Y = S + random_perturbation(small_grid, rng, 1e-2)
    s = run(Y, IntegratorConfig(0.01, 1.0), m, sample_grid(1.0, 11), R_list=[1.0, 2.0])
    rep = attraction_report(s)
    assert set(rep.seminorm) == {1.0, 2.0}
    assert rep.status in ("attracted", "not-attracted", "inconclusive")

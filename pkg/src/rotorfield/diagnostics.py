"""Attraction diagnostics on recorded runs: w~, oscillation and the limit soliton."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .coupling import GridModel
from .dynamics import DiagnosticsSeries
from .grid import SystemState
from .soliton import pi_invariant


class WrapWarning(UserWarning):
    """Radiation may have re-entered through the periodic boundary."""


def omega_tilde(state: SystemState, model: GridModel) -> np.ndarray:
    """pi(Y)/I_eff: the soliton parameter whose invariant matches the state's."""
    return pi_invariant(state, model) / model.I_eff


def _diameter(points: np.ndarray, block: int = 1024) -> float:
    n = len(points)
    if n < 2:
        return 0.0
    if n <= block:
        return float(np.max(pdist(points)))
    best = 0.0
    for i in range(0, n, block):
        for j in range(i, n, block):
            best = max(best, float(np.max(cdist(points[i:i + block], points[j:j + block]))))
    return best


def oscillation(series: DiagnosticsSeries, T: float) -> float:
    """sup over sampled t1, t2 >= T of |w(t1) - w(t2)| (exact diameter of the samples)."""
    sel = np.asarray(series.t) >= T - 1e-12
    if np.count_nonzero(sel) < 2:
        raise ValueError(f"fewer than 2 samples at or after T={T:g}")
    return _diameter(np.asarray(series.omega)[sel])


def oscillation_profile(series: DiagnosticsSeries, Ts) -> np.ndarray:
    return np.array([oscillation(series, T) for T in Ts])


def _reduction(x: np.ndarray) -> float:
    peak = float(np.max(x))
    last = float(x[-1])
    if peak == 0.0:
        return math.inf
    return peak / last if last > 0 else math.inf


@dataclass
class AttractionReport:
    omega_plus: np.ndarray
    omega_tilde_end: np.ndarray
    consistency: float
    status: str  # "attracted", "not-attracted", "inconclusive" or "stationary"
    attraction: bool
    omega_dot_ratio: float
    omega_dist: dict = field(default_factory=dict)
    seminorm: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "omega_plus": self.omega_plus.tolist(),
            "omega_tilde_end": self.omega_tilde_end.tolist(),
            "consistency": self.consistency,
            "status": self.status,
            "attraction": self.attraction,
            "omega_dot_ratio": self.omega_dot_ratio,
            "omega_dist": self.omega_dist,
            "seminorm": {str(k): v for k, v in self.seminorm.items()},
            "warnings": list(self.warnings),
        }


def attraction_report(series: DiagnosticsSeries, R_list=None, factor: float = 10.0,
                      tol: float = 1e-3, zero_tol: float = 1e-9) -> AttractionReport:
    """Estimate the limit soliton and test convergence towards it.

    w+ is the last sampled w; w~(t_max) = pi/I_eff must agree with it to
    ``tol``, otherwise the report is "inconclusive".  Distances are measured
    against both estimates: with w+ = w(t_max) the final |w - w+| vanishes
    by construction, so the reduction against w~(t_max) is the informative
    one and is the one that decides the flag.
    """
    R_list = list(series.dist) if R_list is None else list(R_list)
    w = np.asarray(series.omega)
    w_plus = w[-1].copy()
    w_t = np.asarray(series.omega_tilde)[-1].copy()
    consistency = float(np.linalg.norm(w_plus - w_t))
    notes = []
    if series.meta.get("wrap_contaminated"):
        msg = "run extends past the wrap time; late samples may contain re-entered radiation"
        warnings.warn(msg, WrapWarning, stacklevel=2)
        notes.append(msg)

    d_plus = np.linalg.norm(w - w_plus, axis=1)
    d_tilde = np.linalg.norm(w - w_t, axis=1)
    omega_dist = {
        "to_omega_plus": {"max": float(d_plus.max()), "final": float(d_plus[-1])},
        "to_omega_tilde": {"max": float(d_tilde.max()), "final": float(d_tilde[-1]), "reduction": _reduction(d_tilde)},
    }
    semi = {}
    ok_semi = True
    for R in R_list:
        entry = {}
        for name, ref in (("to_omega_plus", w_plus), ("to_omega_tilde", w_t)):
            if series.probe is not None and series.samples:
                d = series.distances_to(ref, R)
                entry[name] = {"max": float(d.max()), "final": float(d[-1]), "reduction": _reduction(d)}
        if "to_omega_tilde" in entry:
            ok_semi &= entry["to_omega_tilde"]["reduction"] >= factor or entry["to_omega_tilde"]["max"] < zero_tol
        semi[R] = entry

    wd = np.asarray(series.omega_dot_norm)
    peak = float(wd.max())
    wd_ratio = float(wd[-1] / peak) if peak > 0 else 0.0

    stationary = omega_dist["to_omega_tilde"]["max"] < zero_tol and peak < zero_tol
    relaxed = peak < zero_tol or wd_ratio <= 0.1
    ok_w = omega_dist["to_omega_tilde"]["reduction"] >= factor or omega_dist["to_omega_tilde"]["max"] < zero_tol
    if consistency > tol:
        status, flag = "inconclusive", False
    elif stationary:
        status, flag = "stationary", True
    elif ok_w and ok_semi and relaxed:
        status, flag = "attracted", True
    else:
        status, flag = "not-attracted", False
    if not relaxed:
        notes.append("|dw/dt| has not relaxed from its maximum; attraction flag withheld")
    return AttractionReport(w_plus, w_t, consistency, status, flag, wd_ratio, omega_dist, semi, notes)


def conservation_drifts(series: DiagnosticsSeries) -> dict:
    H = np.asarray(series.H)
    p = np.asarray(series.pi_norm)
    w_t = np.linalg.norm(np.asarray(series.omega_tilde), axis=1)
    rel = lambda x: float(np.max(np.abs(x - x[0])) / abs(x[0])) if x[0] != 0 else float(np.max(np.abs(x)))
    return {"H": rel(H), "pi_norm": rel(p), "omega_tilde_norm": rel(w_t)}

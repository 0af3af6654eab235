"""The energy hierarchy: norms, energies and functionals of the state.

Every spatial derivative below is the spectral multiplier |xi|^kappa, so
"grad^kappa" means the homogeneous seminorm of that order and "Lap grad^kappa"
is plain order kappa+2; integration by parts is exact and the discrete
energies satisfy the same identities as the continuous ones to roundoff.

Level-kappa functionals (kappa = 0, 1, ... applied to the space-differentiated
system):

* E1 - the quadratic energy of (psi, v, w, eta) built on grad^(kappa+1),
  dissipated at rate (b - tau c^2)||grad^(kappa+1) v||^2 + memory terms.
* E2 - the same energy one Laplacian up; with multiplier derivatives it
  coincides exactly with E1 at kappa+1.
* F1, F2 - the cross functionals whose time derivatives control the
  non-coercive terms ||Lap grad^kappa (psi+tau v)||^2 and
  ||grad^(kappa+1)(v+tau w)||^2.
* script_e / script_d - the full energy and dissipation-rate bundles whose
  sup/time-integral make up the bootstrap norms.
* lyapunov - L1*(E1 + E2 + eps*tau*||grad^kappa w||^2) + F1 + L2*F2.
* lambda_inst - the sup-norm/Sobolev bundle controlling the nonlinearity.

History ("eta") terms integrate the kernel weights g, -g', g'' against the
resolved Dafermos history. In closure mode only the moment int g eta ds
exists: cross terms with v stay exact, but pure history norms are undefined
and the functionals that need them return NaN (for the zero kernel they are
identically zero and stay exact). Trajectory writers keep the NaN so output
never silently fakes a value.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional

import numpy as np

from .dynamics import nonlinearity
from .spectral import (
    Field,
    grad_max_norm,
    hinner,
    hnorm,
    l2_norm,
    max_norm,
    sobolev_norm,
)
from .state import (
    ClosureMoment,
    State,
    SystemParams,
    g_moment,
    history_weighted_pair,
)


def _eta_quadratics(state: State, params: SystemParams, order: int):
    """(||grad^order eta||^2_{-g'}, ||grad^order eta||^2_g, int g <grad^order eta, grad^order v>)."""
    if params.kernel.is_zero:
        return 0.0, 0.0, 0.0
    h = state.history
    if isinstance(h, ClosureMoment):
        cross = hinner(h.moment, state.v, order)
        return math.nan, math.nan, cross
    return (
        history_weighted_pair(h, h, "-g'", order),
        history_weighted_pair(h, h, "g", order),
        hinner(g_moment(h), state.v, order),
    )


# ---------------------------------------------------------------------------
# the state-space inner product and norms
# ---------------------------------------------------------------------------

def problem_inner(s1: State, s2: State, params: SystemParams, m: int = 1) -> float:
    """The problem-adapted inner product of two states at regularity m.

    Sum over kappa = 0..m-1 of

      c_g^2 <grad^(kappa+1)(psi+tau v), .>
      + tau (b - tau c_g^2) [ <grad^(kappa+1) v, .> + <grad^kappa v, .> ]
      + <grad^kappa (v + tau w), .>
      + tau <grad^(kappa+1) eta, .>_{-g'} + <grad^(kappa+1) eta, .>_g
      + tau [ <grad^(kappa+1) eta_1, grad^(kappa+1) v_2>_g + (1 <-> 2) ]

    Positive definite on the admissible range b > tau c_g^2 (the cross term
    is absorbed by the -g' and v terms). Needs resolved histories unless the
    kernel is zero.
    """
    if m < 1:
        raise ValueError(f"regularity index m must be >= 1, got {m}")
    tau, cg2 = params.tau, params.cg2
    bg = params.b - tau * cg2
    zero_kernel = params.kernel.is_zero
    for s in (s1, s2):
        if s.is_closure and not zero_kernel:
            raise ValueError("problem inner product needs a resolved history")

    pv1, pv2 = s1.psi + tau * s1.v, s2.psi + tau * s2.v
    vw1, vw2 = s1.v + tau * s1.w, s2.v + tau * s2.w
    if not zero_kernel:
        gm1, gm2 = g_moment(s1.history), g_moment(s2.history)

    total = 0.0
    for kappa in range(m):
        total += cg2 * hinner(pv1, pv2, kappa + 1)
        total += tau * bg * (hinner(s1.v, s2.v, kappa + 1)
                             + hinner(s1.v, s2.v, kappa))
        total += hinner(vw1, vw2, kappa)
        if not zero_kernel:
            total += tau * history_weighted_pair(s1.history, s2.history,
                                                 "-g'", kappa + 1)
            total += history_weighted_pair(s1.history, s2.history,
                                           "g", kappa + 1)
            total += tau * (hinner(gm1, s2.v, kappa + 1)
                            + hinner(gm2, s1.v, kappa + 1))
    return total


def problem_norm(state: State, params: SystemParams, m: int = 1) -> float:
    """Norm induced by `problem_inner` (clipped at zero against roundoff)."""
    return math.sqrt(max(problem_inner(state, state, params, m), 0.0))


def standard_norm(state: State, params: SystemParams, m: int = 1) -> float:
    """The reference product norm on the state space at regularity m:

    ||grad psi||_{H^(m-1)}^2 + ||v||_{H^m}^2 + ||w||_{H^(m-1)}^2
      + sum_{kappa<m} ||grad^(kappa+1) eta||^2_{-g'}.
    """
    if m < 1:
        raise ValueError(f"regularity index m must be >= 1, got {m}")
    total = 0.0
    for kappa in range(m):
        total += hinner(state.psi, state.psi, kappa + 1)
        total += hinner(state.v, state.v, kappa)
        total += hinner(state.w, state.w, kappa)
        total += _eta_quadratics(state, params, kappa + 1)[0]
    total += hinner(state.v, state.v, m)
    return math.sqrt(max(total, 0.0)) if not math.isnan(total) else math.nan


# ---------------------------------------------------------------------------
# level-kappa energies and cross functionals
# ---------------------------------------------------------------------------

def energy_e1(state: State, params: SystemParams, kappa: int = 0) -> float:
    """E1 at level kappa:

    (1/2)[ c_g^2 ||grad^(kappa+1)(psi+tau v)||^2
           + tau (b - tau c_g^2) ||grad^(kappa+1) v||^2
           + ||grad^kappa (v + tau w)||^2
           + tau ||grad^(kappa+1) eta||^2_{-g'} + ||grad^(kappa+1) eta||^2_g
           + 2 tau int g <grad^(kappa+1) eta, grad^(kappa+1) v> ds ]
    """
    tau = params.tau
    pv = state.psi + tau * state.v
    vw = state.v + tau * state.w
    mgp, gq, cross = _eta_quadratics(state, params, kappa + 1)
    return 0.5 * (
        params.cg2 * hinner(pv, pv, kappa + 1)
        + tau * (params.b - tau * params.cg2) * hinner(state.v, state.v, kappa + 1)
        + hinner(vw, vw, kappa)
        + tau * mgp + gq + 2.0 * tau * cross
    )


def energy_e2(state: State, params: SystemParams, kappa: int = 0) -> float:
    """E2 at level kappa: E1 with every field one Laplacian up.

    With multiplier derivatives, Lap grad^kappa carries exactly the weight
    |xi|^(kappa+2), so E2 at level kappa IS E1 at level kappa+1; the identity
    is structural, not approximate.
    """
    return energy_e1(state, params, kappa + 1)


def cross_f1(state: State, params: SystemParams, kappa: int = 0) -> float:
    """F1 = int grad^(kappa+1)(psi + tau v) . grad^(kappa+1)(v + tau w)."""
    tau = params.tau
    return hinner(state.psi + tau * state.v, state.v + tau * state.w, kappa + 1)


def cross_f2(state: State, params: SystemParams, kappa: int = 0) -> float:
    """F2 = -tau int grad^(kappa+1) v . grad^(kappa+1)(v + tau w)."""
    tau = params.tau
    return -tau * hinner(state.v, state.v + tau * state.w, kappa + 1)


# ---------------------------------------------------------------------------
# bootstrap energy/dissipation bundles
# ---------------------------------------------------------------------------

def script_e1(state: State, params: SystemParams, kappa: int = 0) -> float:
    """First half of the energy bundle (the E1-coercive part)."""
    tau = params.tau
    pv = state.psi + tau * state.v
    vw = state.v + tau * state.w
    return (
        hinner(pv, pv, kappa + 1)
        + hinner(vw, vw, kappa)
        + hinner(state.v, state.v, kappa + 1)
        + _eta_quadratics(state, params, kappa + 1)[0]
    )


def script_e2(state: State, params: SystemParams, kappa: int = 0) -> float:
    """Second half of the energy bundle (the E2-coercive part)."""
    tau = params.tau
    pv = state.psi + tau * state.v
    vw = state.v + tau * state.w
    return (
        hinner(pv, pv, kappa + 2)
        + hinner(vw, vw, kappa + 1)
        + hinner(state.v, state.v, kappa + 2)
        + _eta_quadratics(state, params, kappa + 2)[0]
    )


def script_e(state: State, params: SystemParams, kappa: int = 0) -> float:
    """The full level-kappa energy bundle (nine terms)."""
    return (
        script_e1(state, params, kappa)
        + script_e2(state, params, kappa)
        + hinner(state.w, state.w, kappa)
    )


def script_d(state: State, params: SystemParams, kappa: int = 0) -> float:
    """The level-kappa dissipation rate bundle (seven terms):

    ||grad^(kappa+1) v||^2 + ||grad^(kappa+1) eta||^2_{-g'} + ||grad^kappa w||^2
    + ||Lap grad^kappa (psi+tau v)||^2 + ||grad^(kappa+1)(v+tau w)||^2
    + ||Lap grad^kappa v||^2 + ||Lap grad^kappa eta||^2_{-g'}
    """
    tau = params.tau
    pv = state.psi + tau * state.v
    vw = state.v + tau * state.w
    return (
        hinner(state.v, state.v, kappa + 1)
        + _eta_quadratics(state, params, kappa + 1)[0]
        + hinner(state.w, state.w, kappa)
        + hinner(pv, pv, kappa + 2)
        + hinner(vw, vw, kappa + 1)
        + hinner(state.v, state.v, kappa + 2)
        + _eta_quadratics(state, params, kappa + 2)[0]
    )


@dataclasses.dataclass
class LyapunovWeights:
    """Weights of the combined functional; fitted per run by the verifier."""

    L1: float = 32.0
    L2: float = 2.0
    eps: float = 0.1

    def __post_init__(self):
        if not (self.L1 > 0 and self.L2 > 0 and self.eps > 0):
            raise ValueError("Lyapunov weights must be positive")


def lyapunov(state: State, params: SystemParams, kappa: int = 0,
             weights: Optional[LyapunovWeights] = None) -> float:
    """L1 (E1 + E2 + eps tau ||grad^kappa w||^2) + F1 + L2 F2 at level kappa."""
    wts = weights or LyapunovWeights()
    return (
        wts.L1 * (energy_e1(state, params, kappa)
                  + energy_e2(state, params, kappa)
                  + wts.eps * params.tau * hinner(state.w, state.w, kappa))
        + cross_f1(state, params, kappa)
        + wts.L2 * cross_f2(state, params, kappa)
    )


# ---------------------------------------------------------------------------
# nonlinearity functionals and the Lambda bundle
# ---------------------------------------------------------------------------

def forcing_functionals(state: State, params: SystemParams, kappa: int = 0) -> dict:
    """The five |F-pairings| appearing on the right of the level-kappa estimates.

    With multiplier derivatives, grad^kappa of the nonlinearity paired with
    grad^kappa of a field chi reduces to the order-kappa pairing of the
    level-0 nonlinearity with chi (and order kappa+1 for the gradient
    pairing), so a single evaluation of f = 2k v w + 2 grad psi . grad v
    serves every level.
    """
    f0 = nonlinearity(state, params)
    tau = params.tau
    pv = state.psi + tau * state.v
    vw = state.v + tau * state.w
    return {
        "F0_vw": hinner(f0, vw, kappa),
        "F1_vw": hinner(f0, vw, kappa + 1),
        "F0_w": hinner(f0, state.w, kappa),
        "F1_pv": hinner(f0, pv, kappa + 1),
        "F1_v": tau * hinner(f0, state.v, kappa + 1),
    }


def lambda_inst(state: State) -> float:
    """Instantaneous value of the sup-norm bundle controlling the nonlinearity:

    ||v||_{W^{1,inf}} + ||w||_{L^inf} + ||grad psi||_{L^inf}
      + ||grad psi||_{H^s} + ||grad^2 psi||_{H^s} + ||v||_{H^s}
      + ||grad v||_{H^s} + ||w||_{H^s},  s = (n-2)/2.

    The trajectory quantity is the running sup of this over time.
    """
    s = (state.grid.dim - 2) / 2.0
    return (
        max_norm(state.v) + grad_max_norm(state.v)
        + max_norm(state.w)
        + grad_max_norm(state.psi)
        + sobolev_norm(state.psi, s, 1)
        + sobolev_norm(state.psi, s, 2)
        + sobolev_norm(state.v, s, 0)
        + sobolev_norm(state.v, s, 1)
        + sobolev_norm(state.w, s, 0)
    )


# ---------------------------------------------------------------------------
# one row of every functional, and the trajectory report
# ---------------------------------------------------------------------------

def functional_row(
    state: State,
    params: SystemParams,
    p: int = 1,
    weights: Optional[LyapunovWeights] = None,
    include_forcing: bool = True,
) -> dict[str, float]:
    """Evaluate every tracked functional at one instant.

    Returns a flat name -> value map: per level kappa = 0..p the energies
    (E1, E2, F1, F2, Lyap), the bundles (scriptE, scriptE1, scriptE2,
    scriptD_rate) and the dissipation quadratics; plus Lambda_inst and plain
    L2 norms. The same rows feed the CSV writer and every verification pass.
    """
    tau = params.tau
    row: dict[str, float] = {
        "Lambda_inst": lambda_inst(state),
        "L2_psi": l2_norm(state.psi),
        "L2_v": l2_norm(state.v),
        "L2_w": l2_norm(state.w),
    }
    pv = state.psi + tau * state.v
    vw = state.v + tau * state.w
    for k in range(p + 1):
        row[f"E1_{k}"] = energy_e1(state, params, k)
        row[f"E2_{k}"] = energy_e2(state, params, k)
        row[f"F1_{k}"] = cross_f1(state, params, k)
        row[f"F2_{k}"] = cross_f2(state, params, k)
        row[f"Lyap_{k}"] = lyapunov(state, params, k, weights)
        row[f"scriptE_{k}"] = script_e(state, params, k)
        row[f"scriptE1_{k}"] = script_e1(state, params, k)
        row[f"scriptE2_{k}"] = script_e2(state, params, k)
        row[f"scriptD_rate_{k}"] = script_d(state, params, k)
        # dissipation quadratics used by the inequality checks
        row[f"sq_grad_v_{k}"] = hinner(state.v, state.v, k + 1)
        row[f"sq_lap_v_{k}"] = hinner(state.v, state.v, k + 2)
        row[f"sq_w_{k}"] = hinner(state.w, state.w, k)
        row[f"sq_lap_pv_{k}"] = hinner(pv, pv, k + 2)
        row[f"sq_grad_vw_{k}"] = hinner(vw, vw, k + 1)
        mgp1, g1, _ = _eta_quadratics(state, params, k + 1)
        mgp2, g2, _ = _eta_quadratics(state, params, k + 2)
        row[f"sq_eta_mgp_{k}"] = mgp1
        row[f"sq_eta_g_{k}"] = g1
        row[f"sq_lap_eta_mgp_{k}"] = mgp2
        row[f"sq_lap_eta_g_{k}"] = g2
        if include_forcing:
            for name, val in forcing_functionals(state, params, k).items():
                row[f"{name}_{k}"] = val
    return row


@dataclasses.dataclass
class EnergyReport:
    """Time series of every tracked functional along one trajectory."""

    times: np.ndarray
    columns: dict[str, np.ndarray]
    meta: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def from_rows(cls, times, rows: list[dict[str, float]],
                  meta: Optional[dict] = None) -> "EnergyReport":
        times = np.asarray(times, dtype=float)
        if not rows:
            raise ValueError("empty trajectory")
        if len(rows) != times.size:
            raise ValueError("row count does not match time count")
        names = rows[0].keys()
        cols = {n: np.array([r[n] for r in rows]) for n in names}
        if "Lambda_inst" in cols:
            cols["Lambda"] = np.maximum.accumulate(cols["Lambda_inst"])
        return cls(times, cols, meta or {})

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(
                f"no functional named {name!r}; have {sorted(self.columns)[:12]}..."
            ) from None

    def sup_energy(self, p: int) -> np.ndarray:
        """Running sup of sum_{kappa<=p} scriptE^kappa (the bootstrap E-norm^2)."""
        total = sum(self.column(f"scriptE_{k}") for k in range(p + 1))
        return np.maximum.accumulate(total)

    def integrated_dissipation(self, p: int) -> np.ndarray:
        """Cumulative time integral of sum_{kappa<=p} scriptD rates (trapezoid)."""
        total = sum(self.column(f"scriptD_rate_{k}") for k in range(p + 1))
        out = np.zeros_like(total)
        if total.size > 1:
            dt = np.diff(self.times)
            out[1:] = np.cumsum(0.5 * dt * (total[1:] + total[:-1]))
        return out

    def triple_norm(self, p: int) -> np.ndarray:
        """sqrt(sup energy) + sqrt(integrated dissipation), the bootstrap norm."""
        return np.sqrt(self.sup_energy(p)) + np.sqrt(self.integrated_dissipation(p))

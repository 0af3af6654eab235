"""Functional-layer tests: frozen single-mode oracles and structure checks.

The reference state family lives on the 1D torus of length 2*pi where
||cos x||^2 = ||sin x||^2 = pi, so every oracle below is a closed-form
multiple of pi.  Reference parameters: tau=1, b=1.5, c2=1 with the
exponential kernel of mass 0.2, hence cg2 = 0.8 and b - tau*cg2 = 0.7.
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jmgt.kernels import ExponentialKernel, ZeroKernel
from jmgt.spectral import Field, Grid, hinner
from jmgt.state import HistoryConfig, State, SystemParams, init_state, random_state
from jmgt import energy

PI = np.pi
GRID = Grid((64,), (2 * PI,))
X = GRID.coords[0]
KERNEL = ExponentialKernel(0.2, 1.0, 1.0)
PARAMS = SystemParams(tau=1.0, b=1.5, c2=1.0, k=1.0, kernel=KERNEL)
HC = HistoryConfig(s_max=30.0, n_intervals=256)


def make_state(psi=None, v=None, w=None, history=None):
    """State with the given component values and an identically-zero history."""
    z = Field.zeros(GRID)
    st = init_state(PARAMS,
                    Field(GRID, psi) if psi is not None else z,
                    Field(GRID, v) if v is not None else z,
                    Field(GRID, w) if w is not None else z,
                    HC)
    st.history.values[:] = 0.0 if history is None else history
    st.history.s0_limit = None
    return st


def rand_state(seed, params=PARAMS):
    return random_state(GRID, params, np.random.default_rng(seed),
                        HistoryConfig(s_max=10.0, n_intervals=100))


# ---------------------------------------------------------------------------
# problem inner product / norms
# ---------------------------------------------------------------------------

def test_problem_norm_zero_state():
    assert energy.problem_norm(make_state(), PARAMS, m=1) == 0.0


def test_problem_norm_single_mode():
    # v = cos x only: cg2*tau^2*||grad v||^2 + tau*(b-tau*cg2)*(||grad v||^2
    # + ||v||^2) + ||v||^2 = 0.8pi + 0.7*2pi + pi = 3.2pi
    st_ = make_state(v=np.cos(X))
    assert energy.problem_norm(st_, PARAMS, m=1) ** 2 == pytest.approx(
        3.2 * PI, rel=1e-12)


def test_problem_inner_symmetric():
    s1, s2 = rand_state(0), rand_state(1)
    a = energy.problem_inner(s1, s2, PARAMS, m=2)
    b = energy.problem_inner(s2, s1, PARAMS, m=2)
    assert a == pytest.approx(b, rel=1e-12)


def test_problem_inner_cauchy_schwarz():
    for seed in range(6):
        s1, s2 = rand_state(2 * seed), rand_state(2 * seed + 1)
        lhs = abs(energy.problem_inner(s1, s2, PARAMS, m=1))
        rhs = (energy.problem_norm(s1, PARAMS, 1)
               * energy.problem_norm(s2, PARAMS, 1))
        assert lhs <= rhs * (1 + 1e-10)


def test_problem_inner_rejects_m_zero():
    with pytest.raises(ValueError):
        energy.problem_inner(rand_state(0), rand_state(1), PARAMS, m=0)


def test_problem_inner_rejects_closure_history():
    stc = init_state(PARAMS, Field.zeros(GRID), Field.zeros(GRID),
                     Field.zeros(GRID), HistoryConfig(mode="closure"))
    with pytest.raises(ValueError):
        energy.problem_inner(stc, stc, PARAMS, m=1)


def test_standard_norm_gauge_and_single_mode():
    const = make_state(psi=np.ones(GRID.shape))
    assert energy.standard_norm(const, PARAMS, m=1) == pytest.approx(0.0, abs=1e-13)
    sv = make_state(v=np.cos(X))
    # ||v||^2 + ||grad v||^2 = 2pi
    assert energy.standard_norm(sv, PARAMS, m=1) == pytest.approx(
        np.sqrt(2 * PI), rel=1e-12)


def test_norm_equivalence_bracket():
    ratios = [energy.problem_norm(rand_state(s), PARAMS, 1)
              / energy.standard_norm(rand_state(s), PARAMS, 1)
              for s in range(16)]
    assert 0.4 < min(ratios) and max(ratios) < 2.5


# ---------------------------------------------------------------------------
# E1 / E2 / F1 / F2
# ---------------------------------------------------------------------------

def test_e1_single_mode():
    # 0.5*(cg2*tau^2 + tau*(b - tau*cg2) + 1)*pi = 0.5*(0.8 + 0.7 + 1)*pi
    st_ = make_state(v=np.cos(X))
    assert energy.energy_e1(st_, PARAMS, 0) == pytest.approx(1.25 * PI, rel=1e-12)


def test_e1_zero_kernel_closure_value():
    pz = SystemParams(tau=1.0, b=1.5, c2=1.0, k=0.0, kernel=ZeroKernel())
    stz = init_state(pz, Field(GRID, np.cos(X)), Field(GRID, np.cos(X)),
                     Field.zeros(GRID), HistoryConfig(mode="closure"))
    # 0.5*(1*||grad 2cos||^2 + 0.5*||grad cos||^2 + ||cos||^2) = 2.75*pi
    assert energy.energy_e1(stz, pz, 0) == pytest.approx(2.75 * PI, rel=1e-12)


def test_e1_nonnegative_on_random_states():
    for seed in range(12):
        assert energy.energy_e1(rand_state(seed), PARAMS, 0) >= 0.0


def test_e2_is_e1_shifted_one_order():
    st_ = rand_state(5)
    for kappa in (0, 1):
        assert energy.energy_e2(st_, PARAMS, kappa) == pytest.approx(
            energy.energy_e1(st_, PARAMS, kappa + 1), rel=1e-12)


def test_e2_single_mode_equals_e1():
    # |xi| = 1 modes make the extra derivative a no-op
    st_ = make_state(v=np.cos(X))
    assert energy.energy_e2(st_, PARAMS, 0) == pytest.approx(
        energy.energy_e1(st_, PARAMS, 0), rel=1e-12)


def test_cross_functionals_single_mode():
    st_ = make_state(psi=np.cos(X), v=np.cos(X))
    assert energy.cross_f1(st_, PARAMS, 0) == pytest.approx(2 * PI, rel=1e-12)
    assert energy.cross_f2(st_, PARAMS, 0) == pytest.approx(-PI, rel=1e-12)


def test_cross_f1_orthogonal_modes():
    # psi + tau*v on mode 1, v + tau*w on mode 2 and mode-1 v cancelled by w
    st_ = make_state(psi=np.cos(X), v=np.zeros(GRID.shape), w=np.cos(2 * X))
    assert energy.cross_f1(st_, PARAMS, 0) == pytest.approx(0.0, abs=1e-12)


def test_cross_functionals_flip_sign_with_negated_slot():
    st_ = rand_state(9)
    tau = PARAMS.tau
    flipped = State(psi=st_.psi, v=st_.v,
                    w=Field(GRID, -st_.w.values - 2.0 * st_.v.values / tau),
                    history=st_.history, time=0.0)
    for fn in (energy.cross_f1, energy.cross_f2):
        assert fn(flipped, PARAMS, 0) == pytest.approx(-fn(st_, PARAMS, 0),
                                                       rel=1e-10)


# ---------------------------------------------------------------------------
# script functionals, Lyapunov, Lambda
# ---------------------------------------------------------------------------

def test_script_functionals_single_mode():
    st_ = make_state(v=np.cos(X))
    assert energy.script_e(st_, PARAMS, 0) == pytest.approx(6 * PI, rel=1e-12)
    assert energy.script_d(st_, PARAMS, 0) == pytest.approx(4 * PI, rel=1e-12)


def test_script_e_double_entry():
    st_ = rand_state(4)
    total = (energy.script_e1(st_, PARAMS, 0) + energy.script_e2(st_, PARAMS, 0)
             + hinner(st_.w, st_.w, 0))
    assert energy.script_e(st_, PARAMS, 0) == pytest.approx(total, rel=1e-12)


def test_e1_script_e1_equivalence_bracket():
    ratios = [energy.energy_e1(rand_state(s), PARAMS, 0)
              / energy.script_e1(rand_state(s), PARAMS, 0)
              for s in range(12)]
    assert 0.1 < min(ratios) and max(ratios) < 10.0


def test_lyapunov_composition():
    st_ = make_state(psi=np.cos(X), v=np.cos(X))
    weights = energy.LyapunovWeights(L1=10.0, L2=1.0, eps=0.1)
    expect = (10.0 * (energy.energy_e1(st_, PARAMS, 0)
                      + energy.energy_e2(st_, PARAMS, 0))
              + 2 * PI - PI)
    assert energy.lyapunov(st_, PARAMS, 0, weights) == pytest.approx(
        expect, rel=1e-12)


def test_lyapunov_weights_validated():
    with pytest.raises(ValueError):
        energy.LyapunovWeights(L1=-1.0)
    with pytest.raises(ValueError):
        energy.LyapunovWeights(eps=0.0)


def test_lambda_zero_and_2d_single_mode():
    assert energy.lambda_inst(make_state()) == 0.0
    g2 = Grid((16, 16), (2 * PI, 2 * PI))
    vx = np.cos(np.broadcast_to(g2.coords[0], g2.shape)).copy()
    st2 = init_state(PARAMS, Field.zeros(g2), Field(g2, vx), Field.zeros(g2),
                     HistoryConfig(s_max=5.0, n_intervals=16))
    st2.history.values[:] = 0.0
    st2.history.s0_limit = None
    # W^{1,inf} part: max|v| + max|grad v| = 2; H^0 parts: ||v|| + ||grad v||
    assert energy.lambda_inst(st2) == pytest.approx(2 + 2 * np.sqrt(2) * PI,
                                                    rel=1e-12)


# ---------------------------------------------------------------------------
# forcing functionals
# ---------------------------------------------------------------------------

def test_forcing_functionals_oracles():
    # psi = sin x, v = sin x, w = cos 2x, k = 1:
    # F0 = 2 sin x cos 2x + 1 + cos 2x, so <F0, w> = pi and
    # <grad F0, grad v> = -pi (mode bookkeeping by hand).
    st_ = make_state(psi=np.sin(X), v=np.sin(X), w=np.cos(2 * X))
    ff = energy.forcing_functionals(st_, PARAMS, 0)
    assert set(ff) == {"F0_vw", "F1_vw", "F0_w", "F1_pv", "F1_v"}
    assert ff["F0_w"] == pytest.approx(PI, rel=1e-12)
    assert ff["F1_v"] == pytest.approx(-PI, rel=1e-12)


def test_forcing_functionals_zero_for_zero_state():
    assert all(val == 0.0
               for val in energy.forcing_functionals(make_state(), PARAMS, 0).values())


# ---------------------------------------------------------------------------
# closure-mode semantics
# ---------------------------------------------------------------------------

def test_closure_history_norms_are_nan_not_fake():
    stc = init_state(PARAMS, Field(GRID, np.cos(X)), Field(GRID, np.cos(X)),
                     Field.zeros(GRID), HistoryConfig(mode="closure"))
    assert np.isnan(energy.energy_e1(stc, PARAMS, 0))
    assert np.isnan(energy.script_e(stc, PARAMS, 0))


def test_closure_zero_kernel_is_exact():
    pz = SystemParams(tau=1.0, b=1.5, c2=1.0, k=0.0, kernel=ZeroKernel())
    stz = init_state(pz, Field(GRID, np.cos(X)), Field(GRID, np.cos(X)),
                     Field.zeros(GRID), HistoryConfig(mode="closure"))
    assert np.isfinite(energy.script_e(stz, pz, 0))
    assert np.isfinite(energy.script_d(stz, pz, 0))


# ---------------------------------------------------------------------------
# homogeneity / bilinearity properties
# ---------------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(lam=st.floats(min_value=0.1, max_value=10.0))
def test_quadratic_homogeneity(lam):
    base = rand_state(7)
    scaled = State(psi=base.psi * lam, v=base.v * lam, w=base.w * lam,
                   history=type(base.history)(
                       base.history.grid, base.history.quad,
                       lam * base.history.values),
                   time=0.0)
    for fn in (lambda s: energy.energy_e1(s, PARAMS, 0),
               lambda s: energy.script_e(s, PARAMS, 0),
               lambda s: energy.script_d(s, PARAMS, 0),
               lambda s: energy.cross_f1(s, PARAMS, 0),
               lambda s: energy.problem_norm(s, PARAMS, 1) ** 2):
        assert fn(scaled) == pytest.approx(lam * lam * fn(base), rel=1e-9)


# ---------------------------------------------------------------------------
# EnergyReport mechanics
# ---------------------------------------------------------------------------

def _synthetic_report():
    rows = [{"scriptE_0": 4.0, "scriptE_1": 1.0, "scriptD_rate_0": 3.0,
             "scriptD_rate_1": 1.0, "Lambda_inst": 2.0 - 0.5 * i}
            for i in range(3)]
    return energy.EnergyReport.from_rows([0.0, 1.0, 2.0], rows)


def test_report_lambda_is_running_max():
    rep = _synthetic_report()
    assert rep.column("Lambda").tolist() == [2.0, 2.0, 2.0]


def test_report_constant_dissipation_integral():
    # constant integrand over [0, 2] integrates exactly to 2 * sum(D)
    rep = _synthetic_report()
    assert rep.integrated_dissipation(1).tolist() == [0.0, 4.0, 8.0]


def test_report_sup_energy_and_triple_norm():
    rep = _synthetic_report()
    assert rep.sup_energy(1).tolist() == [5.0, 5.0, 5.0]
    expect = np.sqrt(5.0) + np.sqrt(np.array([0.0, 4.0, 8.0]))
    assert np.allclose(rep.triple_norm(1), expect)


def test_report_unknown_column():
    with pytest.raises(KeyError):
        _synthetic_report().column("nope")


def test_report_requires_samples():
    with pytest.raises(ValueError):
        energy.EnergyReport.from_rows([], [])

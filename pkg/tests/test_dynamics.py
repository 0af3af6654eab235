"""Stepping-layer tests: right-hand-side oracles, the two history transports,
convergence orders, conservation/dissipation invariants and blow-up handling.
"""
import numpy as np
import pytest

from jmgt.kernels import ExponentialKernel, TabulatedKernel, ZeroKernel
from jmgt.spectral import Field, Grid, l2_norm, partials, random_field
from jmgt.state import (ClosureMoment, HistoryConfig, State, SystemParams,
                        init_state, random_state)
from jmgt.dynamics import (BlowUpError, ManufacturedSolution, RhsConfig,
                           commutator, manufactured_residual, memory_term,
                           nonlinearity, nonlinearity_kappa, rhs, simulate,
                           stable_dt, step)

PI = np.pi
GRID = Grid((32,), (2 * PI,))
X = GRID.coords[0]
KERNEL = ExponentialKernel(0.2, 1.0, 1.0)
PARAMS = SystemParams(tau=1.0, b=1.5, c2=1.0, k=1.0, kernel=KERNEL)
LINEAR = RhsConfig(nonlinear=False)
HC = HistoryConfig(s_max=10.0, n_intervals=100)
# fine s-grid for quadrature-level oracles (trapezoid error ~ ds^2/12)
HC_FINE = HistoryConfig(s_max=30.0, n_intervals=100_000)


def make_state(psi=None, v=None, w=None, hc=HC, params=PARAMS, zero_history=True):
    z = Field.zeros(GRID)
    st = init_state(params,
                    Field(GRID, psi) if psi is not None else z,
                    Field(GRID, v) if v is not None else z,
                    Field(GRID, w) if w is not None else z, hc)
    if zero_history:
        st.history.values[:] = 0.0
        st.history.s0_limit = None
    return st


# ---------------------------------------------------------------------------
# rhs and memory term
# ---------------------------------------------------------------------------

def test_rhs_zero_state():
    d = rhs(make_state(), PARAMS, RhsConfig())
    for f in (d.psi, d.v, d.w):
        assert np.all(f.values == 0.0)
    assert np.all(d.history.values == 0.0)


def test_rhs_linear_oracle():
    # psi = cos x, everything else zero: tau*w_t = cg2*lap(psi) = -0.8 cos x
    d = rhs(make_state(psi=np.cos(X)), PARAMS, RhsConfig())
    assert np.allclose(d.w.values, -0.8 * np.cos(X), atol=1e-12)
    assert np.all(d.psi.values == 0.0)
    assert np.all(d.v.values == 0.0)


def test_rhs_nonlinear_contribution():
    # v = w = cos x, psi = 0, k = 1: the quadratic term adds 2 cos^2 x
    st = make_state(v=np.cos(X), w=np.cos(X))
    dn = rhs(st, PARAMS, RhsConfig(nonlinear=True))
    dl = rhs(st, PARAMS, RhsConfig(nonlinear=False))
    contrib = PARAMS.tau * (dn.w.values - dl.w.values)
    assert np.allclose(contrib, 2 * np.cos(X) ** 2, atol=1e-12)


def test_rhs_advects_history():
    st = make_state(v=np.cos(X))
    st.history.values[1:] = np.sin(X)  # constant in s beyond the inflow node
    d = rhs(st, PARAMS, RhsConfig(transport="upwind"))
    # interior nodes: eta_t = v - (eta_j - eta_{j-1})/ds; the j=1 node sees
    # the inflow zero at node 0
    ds = st.history.quad.ds
    assert np.allclose(d.history.values[2:], np.cos(X), atol=1e-12)
    assert np.allclose(d.history.values[1], np.cos(X) - np.sin(X) / ds)
    assert np.all(d.history.values[0] == 0.0)


def test_rhs_blowup_error_carries_time():
    st = make_state(psi=np.cos(X))
    st.psi.values[3] = np.inf
    st.time = 2.5
    with pytest.raises(BlowUpError) as err:
        rhs(st, PARAMS, RhsConfig())
    assert err.value.time == 2.5


def test_rhs_config_validation():
    with pytest.raises(ValueError):
        RhsConfig(memory_mode="magic")
    with pytest.raises(ValueError):
        RhsConfig(transport="spectral")
    stc = init_state(PARAMS, Field.zeros(GRID), Field.zeros(GRID),
                     Field.zeros(GRID), HistoryConfig(mode="closure"))
    with pytest.raises(ValueError):
        rhs(stc, PARAMS, RhsConfig(memory_mode="dafermos"))
    with pytest.raises(ValueError):
        rhs(make_state(), PARAMS, RhsConfig(memory_mode="closure"))


def test_rhs_closure_rejects_general_kernel():
    tab = TabulatedKernel(np.linspace(0.0, 8.0, 200),
                          0.2 * np.exp(-np.linspace(0.0, 8.0, 200)))
    params = SystemParams(tau=1.0, b=1.5, c2=1.0, kernel=tab)
    stc = State(psi=Field.zeros(GRID), v=Field.zeros(GRID), w=Field.zeros(GRID),
                history=ClosureMoment(Field.zeros(GRID)))
    with pytest.raises(ValueError):
        rhs(stc, params, RhsConfig(memory_mode="closure"))


def test_memory_term_constant_history():
    # eta == cos x in s: integral g * lap(eta) = -mass * cos x
    st = make_state(hc=HC_FINE)
    st.history.values[1:] = np.cos(X)
    st.history.s0_limit = np.cos(X)
    assert np.allclose(memory_term(st).values, -0.2 * np.cos(X), atol=1e-8)


def test_memory_term_closure_matches_moment():
    stc = init_state(PARAMS, Field(GRID, np.cos(X)), Field.zeros(GRID),
                     Field.zeros(GRID), HistoryConfig(mode="closure"))
    # M = mass * psi0 = 0.2 cos x, so lap(M) = -0.2 cos x
    assert np.allclose(memory_term(stc).values, -0.2 * np.cos(X), atol=1e-12)


def test_memory_term_zero_history():
    assert np.all(memory_term(make_state()).values == 0.0)


# ---------------------------------------------------------------------------
# differentiated nonlinearity
# ---------------------------------------------------------------------------

def test_nonlinearity_constant_fields():
    ones = np.ones(GRID.shape)
    st = make_state(v=ones, w=ones)
    assert np.allclose(nonlinearity(st, PARAMS).values, 2.0, atol=1e-14)


def test_commutator_vanishes_for_constant_multiplier():
    ones = Field(GRID, np.ones(GRID.shape))
    f = Field(GRID, np.sin(X))
    assert np.max(np.abs(commutator(ones, f, 1))) < 1e-13


def test_commutator_first_order_product_rule():
    # [d/dx, a] b = a' b in one dimension
    a = Field(GRID, np.sin(X))
    b = Field(GRID, np.cos(2 * X))
    expect = np.cos(X) * np.cos(2 * X)
    assert np.allclose(commutator(a, b, 1)[0], expect, atol=1e-10)


@pytest.mark.parametrize("kappa", [1, 2])
def test_nonlinearity_kappa_leibniz_consistent(kappa):
    st = random_state(GRID, PARAMS, np.random.default_rng(3), HC)
    fk = nonlinearity_kappa(st, PARAMS, kappa)
    dk = partials(nonlinearity(st, PARAMS), kappa)
    assert np.max(np.abs(fk - dk)) < 1e-8


def test_nonlinearity_kappa_2d():
    g2 = Grid((16, 16), (2 * PI, 2 * PI))
    p = SystemParams(tau=1.0, b=1.5, c2=1.0, k=1.0, kernel=KERNEL)
    st = random_state(g2, p, np.random.default_rng(5),
                      HistoryConfig(s_max=3.0, n_intervals=16))
    fk = nonlinearity_kappa(st, p, 1)
    assert fk.shape == (2, 16, 16)
    assert np.max(np.abs(fk - partials(nonlinearity(st, p), 1))) < 1e-8


def test_nonlinearity_kappa_rejects_large_order():
    with pytest.raises(ValueError):
        nonlinearity_kappa(make_state(), PARAMS, 3)


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------

def test_step_zero_state_stays_zero():
    out = step(make_state(), PARAMS, RhsConfig(), 1e-3)
    assert np.all(out.psi.values == 0.0)
    assert np.all(out.history.values == 0.0)
    assert out.time == pytest.approx(1e-3)


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step(make_state(), PARAMS, RhsConfig(), 0.0)
    with pytest.raises(ValueError):
        step(make_state(), PARAMS, RhsConfig(), -1e-3)


def test_step_rejects_dt_above_ds():
    st = make_state()  # ds = 0.1
    with pytest.raises(ValueError):
        step(st, PARAMS, RhsConfig(transport="upwind"), 0.2)


def test_characteristic_transport_needs_matching_dt():
    with pytest.raises(ValueError):
        step(make_state(), PARAMS, RhsConfig(transport="characteristic"), 0.05)


def test_step_deterministic():
    st = random_state(GRID, PARAMS, np.random.default_rng(0), HC)
    a = step(st, PARAMS, RhsConfig(), 1e-3)
    b = step(st, PARAMS, RhsConfig(), 1e-3)
    assert np.array_equal(a.psi.values, b.psi.values)
    assert np.array_equal(a.history.values, b.history.values)


def test_step_matches_simulate():
    st = random_state(GRID, PARAMS, np.random.default_rng(1), HC)
    two = step(step(st, PARAMS, LINEAR, 1e-3), PARAMS, LINEAR, 1e-3)
    res = simulate(st, PARAMS, LINEAR, 1e-3, 2e-3, record=False)
    assert np.allclose(two.psi.values, res.final_state.psi.values, atol=1e-15)


def test_step_order_four_richardson():
    """Halving dt quarters^2 the error against a dt/4 reference (same s-grid)."""
    st = random_state(GRID, PARAMS, np.random.default_rng(2), HC)
    cfg = RhsConfig(nonlinear=False, transport="upwind")

    def run(dt):
        return simulate(st, PARAMS, cfg, dt, 0.4, record=False).final_state

    ref = run(2.5e-3 / 4)
    e1 = l2_norm(run(5e-3).psi - ref.psi)
    e2 = l2_norm(run(2.5e-3).psi - ref.psi)
    assert 12.0 < e1 / e2 < 20.0


# ---------------------------------------------------------------------------
# simulate: transports, conservation, reversal, blow-up
# ---------------------------------------------------------------------------

def test_characteristic_matches_closure():
    """Exact-shift history stepping tracks the moment ODE to ~1e-8."""
    rng = np.random.default_rng(7)
    psi1 = random_field(GRID, rng, kmax_fraction=0.25)
    zero = Field.zeros(GRID)
    ds = 5e-3
    st_d = init_state(PARAMS, zero, psi1, zero,
                      HistoryConfig(s_max=15.0, n_intervals=3000))
    st_c = init_state(PARAMS, zero, psi1, zero, HistoryConfig(mode="closure"))
    r_d = simulate(st_d, PARAMS, RhsConfig(nonlinear=True), ds, 0.5, record=False)
    assert r_d.meta["transport"] == "characteristic"
    r_c = simulate(st_c, PARAMS, RhsConfig(memory_mode="closure"), ds, 0.5,
                   record=False)
    rel = (l2_norm(r_d.final_state.psi - r_c.final_state.psi)
           / l2_norm(r_c.final_state.psi))
    assert rel < 1e-7


def test_upwind_matches_closure_coarsely():
    rng = np.random.default_rng(7)
    psi1 = random_field(GRID, rng, kmax_fraction=0.25)
    zero = Field.zeros(GRID)
    st_d = init_state(PARAMS, zero, psi1, zero,
                      HistoryConfig(s_max=15.0, n_intervals=3000))
    st_c = init_state(PARAMS, zero, psi1, zero, HistoryConfig(mode="closure"))
    r_u = simulate(st_d, PARAMS, RhsConfig(transport="upwind"), 2.5e-3, 0.5,
                   record=False)
    r_c = simulate(st_c, PARAMS, RhsConfig(memory_mode="closure"), 2.5e-3, 0.5,
                   record=False)
    rel = (l2_norm(r_u.final_state.psi - r_c.final_state.psi)
           / l2_norm(r_c.final_state.psi))
    assert rel < 1e-4  # first-order transport; the exact shift is the tight one


def test_linear_subcritical_e1_nonincreasing():
    rng = np.random.default_rng(11)
    st = init_state(PARAMS, random_field(GRID, rng), random_field(GRID, rng),
                    Field.zeros(GRID), HistoryConfig(s_max=10.0, n_intervals=200))
    res = simulate(st, PARAMS, RhsConfig(nonlinear=False, transport="upwind"),
                   5e-3, 2.0, stride=1, p=0)
    e1 = res.report.column("E1_0")
    assert np.max(np.diff(e1)) <= 1e-9 * e1[0]


def test_critical_memoryless_conserves_e1():
    params = SystemParams(tau=1.0, b=1.0, c2=1.0, k=0.0, kernel=ZeroKernel())
    rng = np.random.default_rng(8)
    st = init_state(params, random_field(GRID, rng), random_field(GRID, rng),
                    Field.zeros(GRID), HistoryConfig(mode="closure"))
    res = simulate(st, params, RhsConfig(memory_mode="closure", nonlinear=False),
                   1e-3, 10.0, stride=200, p=0)
    e1 = res.report.column("E1_0")
    assert np.max(np.abs(e1 - e1[0])) <= 1e-8 * e1[0]


def test_time_reversal_memoryless():
    params = SystemParams(tau=1.0, b=1.5, c2=1.0, k=0.0, kernel=ZeroKernel())
    rng = np.random.default_rng(9)
    psi0, psi1 = random_field(GRID, rng), random_field(GRID, rng)
    st = init_state(params, psi0, psi1, Field.zeros(GRID),
                    HistoryConfig(mode="closure"))
    cfg = RhsConfig(memory_mode="closure", nonlinear=False)
    fw = simulate(st, params, cfg, 1e-3, 1.0, record=False)
    bw = simulate(fw.final_state, params, cfg, -1e-3, 1.0, record=False)
    assert bw.final_state.time == pytest.approx(0.0, abs=1e-12)
    assert l2_norm(bw.final_state.psi - psi0) / l2_norm(psi0) < 1e-9
    assert l2_norm(bw.final_state.v - psi1) / l2_norm(psi1) < 1e-9


def test_reverse_requires_memory_free_closure():
    st = make_state()
    with pytest.raises(ValueError):
        simulate(st, PARAMS, RhsConfig(), -1e-3, 0.1, record=False)


def test_blowup_detected_with_last_finite_rows():
    params = SystemParams(tau=1.0, b=1.5, c2=1.0, k=5.0, kernel=ZeroKernel())
    amp = 50.0 * np.cos(X)
    st = init_state(params, Field.zeros(GRID), Field(GRID, amp.copy()),
                    Field(GRID, amp.copy()), HistoryConfig(mode="closure"))
    res = simulate(st, params, RhsConfig(memory_mode="closure"), 1e-4, 0.5,
                   stride=10)
    assert res.status == "blowup"
    assert res.blowup_time is not None and 0.0 < res.blowup_time < 0.5
    assert len(res.rows) >= 1
    assert all(np.isfinite(list(row.values())).all() for row in res.rows)
    assert np.all(np.isfinite(res.final_state.psi.values))


def test_simulate_validates_inputs():
    st = make_state()
    with pytest.raises(ValueError):
        simulate(st, PARAMS, RhsConfig(), 0.0, 1.0)
    with pytest.raises(ValueError):
        simulate(st, PARAMS, RhsConfig(), 1e-3, 1.00037)  # not a step multiple
    with pytest.raises(ValueError):
        simulate(st, PARAMS, RhsConfig(), 1e-3, -1.0)


def test_simulate_enforces_stability_bound():
    st = make_state(hc=HistoryConfig(s_max=10.0, n_intervals=10))  # ds = 1
    dt_bad = 2.0 * stable_dt(GRID, PARAMS)
    with pytest.raises(ValueError):
        simulate(st, PARAMS, RhsConfig(transport="upwind"), dt_bad, 10 * dt_bad)
    # override runs (and, being unstable, is allowed to go non-finite)
    res = simulate(st, PARAMS, RhsConfig(transport="upwind"), dt_bad,
                   10 * dt_bad, enforce_cfl=False, record=False)
    assert res.status in ("ok", "blowup")


def test_simulate_records_observers():
    st = random_state(GRID, PARAMS, np.random.default_rng(4), HC)
    res = simulate(st, PARAMS, LINEAR, 1e-3, 0.02, stride=5,
                   observers={"max_psi": lambda s: float(np.max(s.psi.values))})
    assert "max_psi" in res.rows[0]
    assert len(res.times) == 1 + 4  # t=0 plus every 5th of 20 steps
    with pytest.raises(ValueError):
        simulate(st, PARAMS, LINEAR, 1e-3, 0.02, stride=5,
                 observers={"E1_0": lambda s: 0.0})


def test_simulate_zero_data_zero_energies():
    res = simulate(make_state(), PARAMS, RhsConfig(), 1e-3, 0.05, stride=10)
    for name in ("E1_0", "scriptE_0", "L2_psi"):
        assert np.all(res.report.column(name) == 0.0)


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------

def test_manufactured_zero_profile_zero_source():
    ms = ManufacturedSolution(PARAMS, Field.zeros(GRID), omega=1.0, phase=0.0)
    assert np.all(ms.source(0.7).values == 0.0)
    assert np.all(manufactured_residual(ms, 1.3).values == 0.0)


def test_manufactured_convolution_closed_form():
    # integral_0^t 0.2 e^{-s} cos(1.3(t-s)+0.4) ds against a fine quadrature
    ms = ManufacturedSolution(PARAMS, Field(GRID, np.cos(X)), omega=1.3, phase=0.4)
    t = 0.7
    s = np.linspace(0.0, t, 200_001)
    num = float(np.trapezoid(KERNEL(s) * np.cos(1.3 * (t - s) + 0.4), s))
    assert ms.memory_convolution(t) == pytest.approx(num, abs=1e-10)


def test_manufactured_quadrature_fallback():
    tab_s = np.linspace(0.0, 40.0, 4001)
    tab = TabulatedKernel(tab_s, 0.2 * np.exp(-tab_s))
    params = SystemParams(tau=1.0, b=1.5, c2=1.0, kernel=tab)
    ms_tab = ManufacturedSolution(params, Field(GRID, np.cos(X)), omega=1.3,
                                  phase=0.4)
    ms_exp = ManufacturedSolution(PARAMS, Field(GRID, np.cos(X)), omega=1.3,
                                  phase=0.4)
    assert ms_tab.memory_convolution(0.7) == pytest.approx(
        ms_exp.memory_convolution(0.7), abs=1e-6)


def test_manufactured_closure_temporal_order():
    g = Grid((16,), (2 * PI,))
    ms = ManufacturedSolution(PARAMS, Field(g, np.cos(g.coords[0])),
                              omega=1.3, phase=0.4)
    cfg = RhsConfig(memory_mode="closure", nonlinear=True)
    errs = []
    for dt in (8e-3, 4e-3):
        st = ms.initial_state(HistoryConfig(mode="closure"))
        res = simulate(st, PARAMS, cfg, dt, 0.512, source=ms.source, record=False)
        errs.append(ms.psi_error(res.final_state))
    assert 12.0 < errs[0] / errs[1] < 20.0


def test_manufactured_dafermos_characteristic_tracks_exactly():
    """With psi(0) = 0 the shifted history stays smooth and the exact-shift
    run reproduces the forced solution to quadrature accuracy."""
    ms = ManufacturedSolution(PARAMS, Field(GRID, np.cos(X)),
                              omega=1.3, phase=PI / 2)
    ds = 5e-3
    st = ms.initial_state(HistoryConfig(s_max=15.0, n_intervals=3000))
    res = simulate(st, PARAMS, RhsConfig(nonlinear=True), ds, 0.5,
                   source=ms.source, record=False)
    assert ms.psi_error(res.final_state) < 1e-7


def test_manufactured_time_factor_derivatives():
    ms = ManufacturedSolution(PARAMS, Field(GRID, np.cos(X)), omega=0.9, phase=0.2)
    h = 1e-5
    for d in (1, 2, 3):
        fd = (ms.time_factor(0.4 + h, d - 1) - ms.time_factor(0.4 - h, d - 1)) / (2 * h)
        assert ms.time_factor(0.4, d) == pytest.approx(fd, abs=1e-8)
    with pytest.raises(ValueError):
        ms.time_factor(0.0, 4)


def test_stable_dt_scaling():
    # bound scales like 1/sqrt(b) and 1/|xi_max|
    a = stable_dt(GRID, PARAMS)
    b = stable_dt(Grid((64,), (2 * PI,)), PARAMS)
    assert a == pytest.approx(2 * b, rel=1e-12)

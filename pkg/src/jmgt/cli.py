"""Command-line experiment runner: configuration in, artifacts out.

Subcommands
-----------
simulate     advance the configured run -> timeseries.csv + summary.json
verify       dissipation checks, decay fit and operator probes -> verify.json
resolvent    stationary-equation residual batch -> resolvent.json
picard       mild-solution iteration vs the direct stepper -> picard.json
scan         (b / tau c^2, kernel mass) grid of fitted decay rates -> scan.csv
convergence  error-vs-dt and error-vs-N tables -> convergence_*.csv

Exit codes: 0 success (a blow-up is a successful run reported with verdict
"growth"), 2 configuration error, 3 I/O error.  Every artifact embeds the
config hash, and identical config + seed reproduces every file bit for bit.
PNG figures are rendered alongside the delimited output unless --no-figures
is given.
"""
import argparse
import math
import pathlib
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .config import ConfigError, RunConfig, load_config
from .dynamics import (ManufacturedSolution, RhsConfig, simulate, stable_dt,
                       step)
from .kernels import ExponentialKernel, ZeroKernel
from .report import (render_convergence, render_scan, render_timeseries,
                     write_json, write_table, write_timeseries)
from .spectral import Field, Grid, l2_norm
from .state import HistoryConfig, SystemParams, init_state, random_state


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _run(cfg: RunConfig, p: Optional[int] = None):
    return simulate(cfg.initial_state(), cfg.params, cfg.rhs_config(),
                    cfg.dt, cfg.t_final, stride=cfg.stride,
                    p=cfg.p if p is None else p)


def _cmd_simulate(cfg: RunConfig, out: pathlib.Path, args) -> int:
    result = _run(cfg)
    rep = result.report
    write_timeseries(out / "timeseries.csv", rep, cfg.hash, cfg.p)
    payload = {
        "regime": cfg.params.regime,
        "cg2": cfg.params.cg2,
        "delta": cfg.params.delta,
        "status": result.status,
        "verdict": "growth" if result.status == "blowup" else "bounded",
        "blowup_time": result.blowup_time,
        "steps": result.steps,
        "wall_time": result.wall_time,
        "E1_initial": float(rep.column("E1_0")[0]),
        "E1_final": float(rep.column("E1_0")[-1]),
        "triple_norm_final": float(rep.triple_norm(cfg.p)[-1]),
        "seed": cfg.seed,
        "config_echo": cfg.raw,
    }
    write_json(out / "summary.json", payload, cfg.hash)
    if not args.no_figures:
        render_timeseries(out / "timeseries.png", rep, cfg.p)
    _say(args, cfg.describe())
    _say(args, f"verdict: {payload['verdict']} (status {result.status})")
    return 0


_CHECK_NAMES = ("E1", "E2", "W", "Lyapunov")


def _cmd_verify(cfg: RunConfig, out: pathlib.Path, args) -> int:
    result = _run(cfg)
    rep = result.report
    checks: dict = {}
    all_passed = True
    for which in _CHECK_NAMES:
        try:
            v = analysis.verify_dissipation(rep, which, cfg.params)
        except ValueError as exc:
            checks[which] = {"skipped": str(exc)}
            _say(args, f"{which}: skipped ({exc})")
            continue
        checks[which] = {"passed": v.passed, "violation": v.violation,
                         "tol": v.tol, "worst_time": v.worst_time,
                         "detail": v.detail}
        all_passed = all_passed and v.passed
        _say(args, f"{which}: {'pass' if v.passed else 'FAIL'} "
                   f"(violation {v.violation:.3e}, tol {v.tol:.3e})")
    try:
        fd = analysis.fit_decay(rep.times, rep.column("E1_0"))
        decay = {"rate": fd.rate, "r_squared": fd.r_squared,
                 "window": list(fd.window)}
        _say(args, f"decay: rate {fd.rate:.4e}, R^2 {fd.r_squared:.6f}")
    except ValueError as exc:
        decay = {"error": str(exc)}
    payload = {"regime": cfg.params.regime, "status": result.status,
               "checks": checks, "all_passed": all_passed, "decay": decay,
               "seed": cfg.seed}
    if cfg.history.mode == "dafermos":
        ne = analysis.norm_equivalence(cfg.grid, cfg.params, cfg.history,
                                       n_samples=200, seed=cfg.seed)
        payload["norm_equivalence"] = {"c_lower": ne.c_lower,
                                       "c_upper": ne.c_upper,
                                       "n_samples": ne.n_samples}
        gp = analysis.generator_dissipativity(cfg.grid, cfg.params,
                                              cfg.history, n_samples=100,
                                              seed=cfg.seed)
        payload["generator"] = {"worst": gp.worst,
                                "worst_scaled": gp.worst_scaled,
                                "n_samples": gp.n_samples}
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        for _ in range(20):
            data = random_state(cfg.grid, cfg.params, rng, cfg.history)
            sol = analysis.resolvent_solve(cfg.params, data)
            worst = max(worst, analysis.resolvent_residual(sol, data,
                                                           cfg.params))
        payload["resolvent"] = {"worst_residual": worst, "n_samples": 20}
    write_json(out / "verify.json", payload, cfg.hash)
    _say(args, "all checks passed" if all_passed else "some checks FAILED")
    return 0


def _cmd_resolvent(cfg: RunConfig, out: pathlib.Path, args) -> int:
    if cfg.history.mode != "dafermos":
        raise ConfigError("memory.mode: the stationary solve needs the "
                          "resolved history ('dafermos')")
    rng = np.random.default_rng(cfg.seed)
    residuals = []
    for _ in range(100):
        data = random_state(cfg.grid, cfg.params, rng, cfg.history)
        sol = analysis.resolvent_solve(cfg.params, data)
        residuals.append(analysis.resolvent_residual(sol, data, cfg.params))
    # first-mode closed form: -nu*lap(v) + sigma*v = q with q a product of
    # unit-wavenumber cosines solves to q / (nu*|xi|^2 + sigma)
    vals = np.ones(())
    xi2 = 0.0
    for x, length in zip(cfg.grid.coords, cfg.grid.lengths):
        vals = vals * np.cos(2.0 * math.pi * x / length)
        xi2 += (2.0 * math.pi / length) ** 2
    q = Field(cfg.grid, np.broadcast_to(vals, cfg.grid.shape).copy())
    v = analysis.helmholtz_solve(q, 2.0, 3.0)
    mode_err = float(np.max(np.abs(v.values - q.values / (2.0 * xi2 + 3.0))))
    payload = {"n_samples": len(residuals),
               "worst_residual": max(residuals),
               "mean_residual": float(np.mean(residuals)),
               "helmholtz_mode_error": mode_err,
               "seed": cfg.seed}
    write_json(out / "resolvent.json", payload, cfg.hash)
    _say(args, f"worst residual {max(residuals):.3e} over "
               f"{len(residuals)} samples; mode error {mode_err:.3e}")
    return 0


def _cmd_picard(cfg: RunConfig, out: pathlib.Path, args) -> int:
    state0 = cfg.initial_state()
    pr = analysis.picard_solve(state0, cfg.params, cfg.dt, cfg.t_final)
    direct_cfg = RhsConfig(memory_mode=cfg.history.mode, nonlinear=True)
    st = state0
    sup = {"psi": 0.0, "v": 0.0, "w": 0.0}
    for i in range(pr.times.size - 1):
        st = step(st, cfg.params, direct_cfg, cfg.dt)
        sup["psi"] = max(sup["psi"],
                         l2_norm(Field(cfg.grid, pr.psi[i + 1] - st.psi.values)))
        sup["v"] = max(sup["v"],
                       l2_norm(Field(cfg.grid, pr.v[i + 1] - st.v.values)))
        sup["w"] = max(sup["w"],
                       l2_norm(Field(cfg.grid, pr.w[i + 1] - st.w.values)))
    payload = {"converged": pr.converged, "iterations": pr.iterations,
               "q": pr.q, "diffs": list(pr.diffs),
               "sup_l2_mismatch": sup, "t_final": cfg.t_final,
               "seed": cfg.seed}
    write_json(out / "picard.json", payload, cfg.hash)
    _say(args, f"converged={pr.converged} after {pr.iterations} iterations, "
               f"q = {pr.q:.3e}")
    _say(args, f"sup-L2 mismatch vs direct stepping: "
               f"{max(sup.values()):.3e}")
    return 0


_SCAN_RATIOS = (0.5, 1.0, 1.5)
_SCAN_COLUMNS = ("b_ratio", "kernel_mass", "b", "decay_rate", "r_squared",
                 "E1_initial", "E1_final", "max_relative_increase", "dt",
                 "status")


def _scan_row(cfg: RunConfig, ratio: float, mass: float):
    base = cfg.params
    tau_r = base.kernel.tau_r if isinstance(base.kernel, ExponentialKernel) else 1.0
    if mass == 0.0:
        kernel = ZeroKernel()
    else:
        kernel = ExponentialKernel(mass / (base.c2 * tau_r), base.c2, tau_r)
    params = SystemParams(tau=base.tau, b=ratio * base.tau * base.c2,
                          c2=base.c2, k=base.k, kernel=kernel)
    psi0, v0, w0 = cfg.initial_fields()
    state = init_state(params, psi0, v0, w0, cfg.history)
    dt = cfg.dt
    cap = 0.9 * stable_dt(cfg.grid, params)
    if dt > cap:
        dt = cfg.t_final / math.ceil(cfg.t_final / cap)
    res = simulate(state, params, cfg.rhs_config(), dt, cfg.t_final,
                   stride=cfg.stride, p=0)
    e1 = res.report.column("E1_0")
    rise = float(np.max(np.diff(e1), initial=0.0))
    rel_rise = rise / e1[0] if e1[0] > 0 else rise
    try:
        fd = analysis.fit_decay(res.report.times, e1)
        rate, r2 = fd.rate, fd.r_squared
    except ValueError:
        rate, r2 = math.nan, math.nan
    return (ratio, mass, params.b, rate, r2, float(e1[0]), float(e1[-1]),
            rel_rise, dt, res.status)


def _cmd_scan(cfg: RunConfig, out: pathlib.Path, args) -> int:
    masses = sorted({0.0, cfg.params.mass})
    jobs = [(r, m) for r in _SCAN_RATIOS for m in masses]
    with ThreadPoolExecutor(max_workers=min(4, len(jobs))) as pool:
        rows = list(pool.map(lambda job: _scan_row(cfg, *job), jobs))
    rows.sort(key=lambda row: (row[0], row[1]))
    write_table(out / "scan.csv", _SCAN_COLUMNS, rows, cfg.hash)
    if not args.no_figures:
        render_scan(out / "scan.png", rows)
    for row in rows:
        _say(args, f"b/(tau c^2) = {row[0]:g}, mass = {row[1]:g}: "
                   f"rate = {row[3]:.4e} ({row[9]})")
    return 0


def convergence_in_time(params: SystemParams, *, n: int = 16,
                        dts: Sequence[float] = (8e-3, 4e-3, 2e-3),
                        t_final: float = 0.512, omega: float = 1.3,
                        phase: float = 0.4):
    """Forced-solution error at T for halved steps (closure stepping).

    Returns (dt, error, ratio, observed order) rows; the one-step method is
    fourth order, so the ratios sit near 16.
    """
    grid = Grid((n,), (2.0 * math.pi,))
    ms = ManufacturedSolution(params, Field(grid, np.cos(grid.coords[0])),
                              omega=omega, phase=phase)
    run_cfg = RhsConfig(memory_mode="closure", nonlinear=True)
    rows = []
    prev = None
    for dt in dts:
        st = ms.initial_state(HistoryConfig(mode="closure"))
        res = simulate(st, params, run_cfg, dt, t_final, source=ms.source,
                       record=False)
        err = ms.psi_error(res.final_state)
        ratio = math.nan if prev is None else prev / err
        order = math.nan if prev is None else math.log2(ratio)
        rows.append((dt, err, ratio, order))
        prev = err
    return rows


def _band_profile(grid: Grid, amplitude: float, phase_rate: float) -> Field:
    x = grid.coords[0]
    vals = np.zeros(grid.shape)
    for k in range(1, 7):
        vals += amplitude * math.exp(-((k / 3.0) ** 2)) * np.cos(
            k * x + phase_rate * k)
    return Field(grid, vals)


def convergence_in_space(params: SystemParams, *,
                         n_values: Sequence[int] = (16, 32, 64),
                         n_ref: int = 128, dt: float = 1e-3,
                         t_final: float = 0.1):
    """Low-band spectral distance to a resolved reference run.

    The data are exactly band-limited (six modes), so every grid that holds
    the band resolves the nonlinear cascade down to roundoff and the error
    collapses spectrally rather than algebraically.
    """
    run_cfg = RhsConfig(memory_mode="closure", nonlinear=True)

    def final_psi(n: int) -> np.ndarray:
        grid = Grid((n,), (2.0 * math.pi,))
        st = init_state(params, _band_profile(grid, 0.5, 0.3),
                        _band_profile(grid, 0.2, 1.1), Field.zeros(grid),
                        HistoryConfig(mode="closure"))
        res = simulate(st, params, run_cfg, dt, t_final, stride=10 ** 9,
                       record=False)
        return res.final_state.psi.values

    ref_hat = np.fft.rfft(final_psi(n_ref)) / n_ref
    rows = []
    for n in n_values:
        hat = np.fft.rfft(final_psi(n)) / n
        m = n // 2
        rows.append((n, float(np.linalg.norm(hat[:m] - ref_hat[:m]))))
    return rows


def _cmd_convergence(cfg: RunConfig, out: pathlib.Path, args) -> int:
    kernel = cfg.params.kernel
    if not (kernel.is_zero or isinstance(kernel, ExponentialKernel)):
        raise ConfigError("kernel.type: the convergence study uses closure "
                          "stepping, which needs an exponential or zero kernel")
    dt_rows = convergence_in_time(cfg.params)
    n_rows = convergence_in_space(cfg.params)
    write_table(out / "convergence_dt.csv", ("dt", "error", "ratio", "order"),
                dt_rows, cfg.hash)
    write_table(out / "convergence_N.csv", ("N", "error"), n_rows, cfg.hash)
    if not args.no_figures:
        render_convergence(out / "convergence.png", dt_rows, n_rows)
    for dt, err, _, order in dt_rows:
        tail = "" if math.isnan(order) else f", observed order {order:.2f}"
        _say(args, f"dt = {dt:g}: error {err:.3e}{tail}")
    for n, err in n_rows:
        _say(args, f"N = {n}: low-band error {err:.3e}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "resolvent": _cmd_resolvent,
    "picard": _cmd_picard,
    "scan": _cmd_scan,
    "convergence": _cmd_convergence,
}

_HELP = {
    "simulate": "advance the configured run and write the time series",
    "verify": "run the dissipation checks and operator probes",
    "resolvent": "stationary-equation residuals on random data",
    "picard": "mild-solution iteration against the direct stepper",
    "scan": "decay-rate grid over damping ratio and kernel mass",
    "convergence": "error-vs-dt and error-vs-N tables",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jmgt",
        description="experiment runner for the third-order damped wave "
                    "model with fading memory")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="subcommand")
    for name, text in _HELP.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="TOML run configuration; omitted "
                                        "means the reference configuration")
        p.add_argument("--out-dir", default=".",
                       help="directory for artifacts (created if missing)")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="config override (repeatable)")
        p.add_argument("--quiet", action="store_true",
                       help="suppress progress output")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override, args.seed)
        out = pathlib.Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

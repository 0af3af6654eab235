"""Artifact writers: delimited time series, JSON summaries, rendered figures.

Every file embeds the artifact version and the config hash, and every float
is written with round-trip precision, so identical config + seed reproduces
the artifacts bit for bit.  Figures are rendered headlessly from the same
in-memory series the delimited files are written from; they are a
convenience view, the CSV/JSON files remain the interface.
"""
import json
import math
from typing import Sequence

import numpy as np

from .energy import EnergyReport

ARTIFACT = "jmgt-artifact v1"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _header(cfg_hash: str) -> str:
    return f"# {ARTIFACT} config={cfg_hash}\n"


def timeseries_columns(p: int) -> list[str]:
    cols = []
    for k in range(p + 1):
        cols += [f"E1_{k}", f"E2_{k}", f"F1_{k}", f"F2_{k}", f"Lyap_{k}",
                 f"scriptE_{k}", f"scriptD_rate_{k}"]
    return cols + ["Lambda", "L2_psi", "L2_v", "L2_w"]


def write_timeseries(path, report: EnergyReport, cfg_hash: str, p: int) -> None:
    """Time-series CSV in the pinned column order (t first)."""
    names = [n for n in timeseries_columns(p) if n in report.columns]
    with open(path, "w") as fh:
        fh.write(_header(cfg_hash))
        fh.write(",".join(["t"] + names) + "\n")
        for i in range(report.times.size):
            row = [_fmt(report.times[i])]
            row += [_fmt(report.columns[n][i]) for n in names]
            fh.write(",".join(row) + "\n")


def write_table(path, names: Sequence[str], rows: Sequence[Sequence],
                cfg_hash: str) -> None:
    """Generic small-table CSV (scan grids, convergence tables)."""
    with open(path, "w") as fh:
        fh.write(_header(cfg_hash))
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)  # strict JSON has no inf
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict, cfg_hash: str) -> None:
    body = {"artifact": ARTIFACT, "config": cfg_hash}
    body.update(_sanitize(payload))
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# figures (matplotlib imported lazily so the library stays importable without
# a rendering stack)
# ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_timeseries(path, report: EnergyReport, p: int) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    names = [f"scriptE_{k}" for k in range(p + 1)] + ["E1_0"]
    positive = all(np.min(report.columns[n]) > 0 for n in names
                   if n in report.columns)
    for name in names:
        if name not in report.columns:
            continue
        if positive:
            ax.semilogy(report.times, report.columns[name], label=name)
        else:
            ax.plot(report.times, report.columns[name], label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("energy functionals")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_scan(path, rows: Sequence[Sequence]) -> None:
    """rows: (b_ratio, mass, rate, ...) tuples from the regime scan."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    masses = sorted({row[1] for row in rows})
    for mass in masses:
        pts = sorted((row[0], row[2]) for row in rows if row[1] == mass)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-",
                label=f"kernel mass {mass:g}")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.axvline(1.0, color="k", lw=0.8, ls=":")
    ax.set_xlabel("b / (tau c^2)")
    ax.set_ylabel("fitted decay rate")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_convergence(path, dt_rows: Sequence[Sequence],
                       n_rows: Sequence[Sequence]) -> None:
    """dt_rows: (dt, error, ...); n_rows: (N, error)."""
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    dts = np.array([row[0] for row in dt_rows], dtype=float)
    errs = np.array([row[1] for row in dt_rows], dtype=float)
    keep = errs > 0
    ax1.loglog(dts[keep], errs[keep], "o-", label="measured")
    if np.any(keep):
        ref = errs[keep][0] * (dts[keep] / dts[keep][0]) ** 4
        ax1.loglog(dts[keep], ref, "k--", lw=0.8, label="order 4")
    ax1.set_xlabel("dt")
    ax1.set_ylabel("error at T")
    ax1.legend(frameon=False)
    ns = [row[0] for row in n_rows]
    es = np.array([row[1] for row in n_rows], dtype=float)
    ax2.semilogy(ns, np.maximum(es, 1e-17), "s-")
    ax2.set_xlabel("N")
    ax2.set_ylabel("error vs resolved reference")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

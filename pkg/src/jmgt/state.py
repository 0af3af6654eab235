"""First-order state (psi, v, w, eta) and the discretized memory history.

The third-order-in-time model is evolved as a first-order system in
Psi = (psi, v, w, eta) where v = psi_t, w = psi_tt and eta(t, s) is the
past-history variable eta(t, s) = psi(t) - psi(t - s), transported by
eta_t + eta_s = v with inflow eta(s=0) = 0.

Two representations of the memory are supported:

* `HistoryField` - eta resolved on a uniform s-grid 0 = s_0 < ... < s_Ns =
  S_max (Ns counts intervals). Quadrature in s is trapezoidal; the weighted
  norms used by the energy functionals integrate g, -g' or g'' against
  squared spatial seminorms of eta(s).
* `ClosureMoment` - only the moment M = int_0^inf g(s) eta(s) ds is stored.
  For the exponential kernel M satisfies the exact ODE
  dM/dt = mass*v - M/tau_r, so no s-grid is needed at all.

Initial data enter as (psi, v, w, eta)|_{t=0} = (psi0, psi1, psi2, psi0).
The history then has a corner: eta(0, s) = psi0 for every s > 0 but the
domain condition forces eta(s=0) = 0. The node array puts zero at s_0 and
psi0 elsewhere; the one-sided limit at s -> 0+ is kept in `s0_limit` and
used only in the first trapezoid panel, which restores the quadrature of
int g(s) eta(0, s) ds = mass * psi0 to quadrature accuracy. The corner
leaves the s-grid boundary after one step and `s0_limit` is dropped.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .kernels import (
    ExponentialKernel,
    MemoryKernel,
    TabulatedKernel,
    ZeroKernel,
    effective_speed_squared,
    total_mass,
)
from .spectral import Field, Grid, hmult, laplacian, random_field

_WEIGHT_NAMES = ("g", "-g'", "g''")


@dataclasses.dataclass
class SystemParams:
    """Physical parameters of the model.

    tau > 0 is the relaxation time, b > 0 the damping coefficient, c2 > 0 the
    squared sound speed, k the nonlinearity constant and `kernel` the memory
    kernel. The friction coefficient in front of psi_tt is normalized to 1.
    """

    tau: float
    b: float
    c2: float
    k: float = 0.0
    kernel: MemoryKernel = dataclasses.field(default_factory=ZeroKernel)

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if not self.c2 > 0:
            raise ValueError(f"c2 must be > 0, got {self.c2}")
        # raises when the kernel mass reaches c^2 (effective speed loss)
        self._cg2 = (
            self.c2 if self.kernel.is_zero
            else effective_speed_squared(self.c2, self.kernel)
        )

    @property
    def mass(self) -> float:
        """Total kernel mass int_0^inf g ds."""
        return self.c2 - self._cg2

    @property
    def cg2(self) -> float:
        """Effective squared speed c_g^2 = c^2 - int g ds."""
        return self._cg2

    @property
    def delta(self) -> float:
        """Damping margin b - tau*c^2 (subcritical when positive)."""
        return self.b - self.tau * self.c2

    @property
    def regime(self) -> str:
        return classify_regime(self)


def classify_regime(params: SystemParams, tol: float = 1e-12) -> str:
    """Sign of b - tau*c^2: 'subcritical', 'critical' or 'supercritical'."""
    d = params.delta
    if abs(d) <= tol:
        return "critical"
    return "subcritical" if d > 0 else "supercritical"


# ---------------------------------------------------------------------------
# history representations
# ---------------------------------------------------------------------------

class HistoryQuadrature:
    """Fixed s-grid data shared by every history snapshot of a run.

    Holds the uniform nodes, the trapezoid weights and the kernel samples
    g, -g', g'' (so weighted norms never re-evaluate the kernel).
    """

    def __init__(self, kernel: MemoryKernel, s_max: float, n_intervals: int):
        if n_intervals < 1:
            raise ValueError("history grid needs at least one interval")
        if not s_max > 0:
            raise ValueError(f"s_max must be > 0, got {s_max}")
        self.kernel = kernel
        self.s_max = float(s_max)
        self.n_intervals = int(n_intervals)
        self.s = np.linspace(0.0, self.s_max, self.n_intervals + 1)
        self.ds = self.s_max / self.n_intervals
        w = np.full(self.n_intervals + 1, self.ds)
        w[0] = w[-1] = 0.5 * self.ds
        self.trap_weights = w
        self.g = np.asarray(kernel(self.s), dtype=float)
        self.minus_gp = -np.asarray(kernel.derivative(self.s), dtype=float)
        self.gpp = np.asarray(kernel.second_derivative(self.s), dtype=float)

    @property
    def n_nodes(self) -> int:
        return self.n_intervals + 1

    def weight_values(self, weight: str) -> np.ndarray:
        """Kernel weight samples for one of 'g', \"-g'\", \"g''\"."""
        try:
            return {"g": self.g, "-g'": self.minus_gp, "g''": self.gpp}[weight]
        except KeyError:
            raise ValueError(
                f"weight must be one of {_WEIGHT_NAMES}, got {weight!r}"
            ) from None


@dataclasses.dataclass
class HistoryField:
    """Resolved history eta(s_j) as a stacked array of shape (n_nodes, *grid).

    Node s_0 = 0 is pinned to zero (domain condition). `s0_limit`, when
    present, is the one-sided limit eta(s -> 0+) used only in the first
    quadrature panel; see the module docstring for why it exists.
    """

    grid: Grid
    quad: HistoryQuadrature
    values: np.ndarray
    s0_limit: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        expected = (self.quad.n_nodes, *self.grid.shape)
        if self.values.shape != expected:
            raise ValueError(
                f"history values shape {self.values.shape}, expected {expected}"
            )
        if np.any(self.values[0] != 0.0):
            raise ValueError("history must vanish at s = 0")
        if self.s0_limit is not None:
            self.s0_limit = np.ascontiguousarray(self.s0_limit, dtype=np.float64)
            if self.s0_limit.shape != self.grid.shape:
                raise ValueError("s0_limit shape does not match grid")

    @classmethod
    def zeros(cls, grid: Grid, quad: HistoryQuadrature) -> "HistoryField":
        return cls(grid, quad, np.zeros((quad.n_nodes, *grid.shape)))

    def copy(self) -> "HistoryField":
        lim = None if self.s0_limit is None else self.s0_limit.copy()
        return HistoryField(self.grid, self.quad, self.values.copy(), lim)

    def node(self, j: int) -> Field:
        return Field(self.grid, self.values[j])

    def effective_values(self) -> np.ndarray:
        """Node values with the s=0 node replaced by the one-sided limit."""
        if self.s0_limit is None:
            return self.values
        out = self.values.copy()
        out[0] = self.s0_limit
        return out

    @cached_property
    def _spectra(self) -> np.ndarray:
        """FFTs of all nodes at once (invalidated by copy-on-write usage)."""
        vals = self.effective_values()
        axes = tuple(range(1, vals.ndim))
        return np.fft.fftn(vals, axes=axes)


@dataclasses.dataclass
class ClosureMoment:
    """Memory closed into the single moment field M = int g(s) eta(s) ds."""

    moment: Field

    def copy(self) -> "ClosureMoment":
        return ClosureMoment(self.moment.copy())


History = Union[HistoryField, ClosureMoment]


def g_moment(history: HistoryField) -> Field:
    """The moment int_0^inf g(s) eta(s) ds by trapezoidal quadrature."""
    wg = history.quad.trap_weights * history.quad.g
    vals = history.effective_values()
    return Field(history.grid, np.tensordot(wg, vals, axes=(0, 0)))


def memory_moment(history: History) -> Field:
    """int g eta ds for either representation."""
    if isinstance(history, ClosureMoment):
        return history.moment
    return g_moment(history)


def history_weighted_pair(
    h1: HistoryField, h2: HistoryField, weight, kappa: int
) -> float:
    """s-integral of weight(s) * <grad^kappa eta1(s), grad^kappa eta2(s)>.

    `weight` is one of the named kernel weights (combined with the trapezoid
    rule) or a per-node array of prebuilt quadrature-times-kernel products,
    for callers that need a different rule in s.

    All node transforms are batched into a single FFT per history, then
    contracted against the quadrature weights in one einsum.
    """
    if h1.quad is not h2.quad and not np.array_equal(h1.quad.s, h2.quad.s):
        raise ValueError("histories live on different s-grids")
    if h1.grid.shape != h2.grid.shape:
        raise ValueError("histories live on different spatial grids")
    if isinstance(weight, str):
        wv = h1.quad.trap_weights * h1.quad.weight_values(weight)
    else:
        wv = np.asarray(weight, dtype=float)
        if wv.shape != (h1.quad.n_nodes,):
            raise ValueError("weight array must have one entry per s-node")
    mult = (hmult(h1.grid, kappa) * h1.grid.spectral_weight).ravel()
    a = h1._spectra.reshape(h1.quad.n_nodes, -1)
    b = a if h2 is h1 else h2._spectra.reshape(h2.quad.n_nodes, -1)
    # sum_j wv_j * sum_xi mult(xi) Re(a_j conj(b_j))
    per_node = np.einsum("jk,jk->j", a, b.conj() * mult).real
    return float(wv @ per_node)


def history_weighted_norm(history: HistoryField, weight: str, kappa: int) -> float:
    """Weighted history seminorm squared root: ||grad^kappa eta||_{L2, weight}."""
    val = history_weighted_pair(history, history, weight, kappa)
    return float(np.sqrt(max(val, 0.0)))


# ---------------------------------------------------------------------------
# the assembled state
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class State:
    """Psi = (psi, v, w, history) at one instant."""

    psi: Field
    v: Field
    w: Field
    history: History
    time: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.psi.grid

    @property
    def is_closure(self) -> bool:
        return isinstance(self.history, ClosureMoment)

    def copy(self) -> "State":
        return State(self.psi.copy(), self.v.copy(), self.w.copy(),
                     self.history.copy(), self.time)

    def assert_finite(self):
        for name, f in (("psi", self.psi), ("v", self.v), ("w", self.w)):
            if not np.all(np.isfinite(f.values)):
                raise FloatingPointError(f"non-finite values in {name}")
        vals = (self.history.moment.values if self.is_closure
                else self.history.values)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("non-finite values in history")


@dataclasses.dataclass
class HistoryConfig:
    """How the memory is discretized: representation, truncation, resolution."""

    mode: str = "dafermos"
    s_max: float = 30.0
    n_intervals: int = 256

    def __post_init__(self):
        if self.mode not in ("dafermos", "closure"):
            raise ValueError(f"mode must be 'dafermos' or 'closure', got {self.mode!r}")


def init_state(
    params: SystemParams,
    psi0: Field,
    psi1: Field,
    psi2: Field,
    history_config: Optional[HistoryConfig] = None,
) -> State:
    """Assemble the initial state (psi0, psi1, psi2, eta0) with eta0 = psi0.

    Dafermos mode resolves eta on the s-grid (zero at s=0, psi0 at s_j>0,
    one-sided limit psi0 kept for the first quadrature panel); closure mode
    stores M(0) = mass * psi0 and needs a kernel with closed-form moment
    dynamics (exponential or zero).
    """
    if history_config is None:
        history_config = HistoryConfig()
    grid = psi0.grid
    for name, f in (("psi1", psi1), ("psi2", psi2)):
        if f.grid.shape != grid.shape or f.grid.lengths != grid.lengths:
            raise ValueError(f"{name} lives on a different grid than psi0")

    if history_config.mode == "closure":
        if not isinstance(params.kernel, (ExponentialKernel, ZeroKernel)):
            raise ValueError(
                "closure mode requires an exponential (or zero) kernel; "
                "resolved history is needed for general kernels"
            )
        moment = Field(grid, params.mass * psi0.values)
        return State(psi0.copy(), psi1.copy(), psi2.copy(), ClosureMoment(moment))

    quad = HistoryQuadrature(params.kernel, history_config.s_max,
                             history_config.n_intervals)
    values = np.broadcast_to(psi0.values, (quad.n_nodes, *grid.shape)).copy()
    values[0] = 0.0
    history = HistoryField(grid, quad, values, s0_limit=psi0.values.copy())
    return State(psi0.copy(), psi1.copy(), psi2.copy(), history)


def random_state(
    grid: Grid,
    params: SystemParams,
    rng: np.random.Generator,
    history_config: Optional[HistoryConfig] = None,
    amplitude: float = 1.0,
    kmax_fraction: float = 1.0 / 3.0,
) -> State:
    """Random smooth state in the domain of the evolution operator.

    psi, v, w are independent band-limited fields; the history is a short
    sum of profiles p_q(s) (x) f_q with p_q(0) = 0, so the domain condition
    holds exactly and eta decays in s.
    """
    if history_config is None:
        history_config = HistoryConfig()
    if history_config.mode == "closure":
        raise ValueError("random probe states need a resolved history")
    quad = HistoryQuadrature(params.kernel, history_config.s_max,
                             history_config.n_intervals)
    psi = random_field(grid, rng, amplitude=amplitude, kmax_fraction=kmax_fraction)
    v = random_field(grid, rng, amplitude=amplitude, kmax_fraction=kmax_fraction)
    w = random_field(grid, rng, amplitude=amplitude, kmax_fraction=kmax_fraction)
    vals = np.zeros((quad.n_nodes, *grid.shape))
    s = quad.s.reshape((-1,) + (1,) * grid.dim)
    for _ in range(3):
        f = random_field(grid, rng, amplitude=amplitude, kmax_fraction=kmax_fraction)
        a, bdec = rng.uniform(0.3, 3.0, size=2)
        profile = (1.0 - np.exp(-s / a)) * np.exp(-s / bdec)
        vals += profile * f.values
    history = HistoryField(grid, quad, vals)
    return State(psi, v, w, history)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"JMGTCKP1"
_CHECKPOINT_VERSION = 1


def _kernel_to_header(kernel: MemoryKernel) -> dict:
    if isinstance(kernel, ZeroKernel):
        return {"type": "zero"}
    if isinstance(kernel, ExponentialKernel):
        return {"type": "exponential", "coupling": kernel.coupling,
                "c2": kernel.c2, "tau_r": kernel.tau_r}
    if isinstance(kernel, TabulatedKernel):
        return {"type": "tabulated", "s": kernel.s_samples.tolist(),
                "g": kernel.g_samples.tolist(), "decay_rate": kernel.decay_rate}
    raise ValueError(f"kernel {type(kernel).__name__} cannot be checkpointed")


def _kernel_from_header(d: dict) -> MemoryKernel:
    kind = d["type"]
    if kind == "zero":
        return ZeroKernel()
    if kind == "exponential":
        return ExponentialKernel(d["coupling"], d["c2"], d["tau_r"])
    if kind == "tabulated":
        return TabulatedKernel(np.asarray(d["s"]), np.asarray(d["g"]),
                               decay_rate=d.get("decay_rate"))
    raise ValueError(f"unknown kernel type {kind!r} in checkpoint")


def save_checkpoint(path, state: State, params: SystemParams) -> None:
    """Write state + params: magic, JSON header, little-endian float64 arrays.

    Layout: 8-byte magic "JMGTCKP1", uint32 header length, UTF-8 JSON header,
    then the raw C-order '<f8' arrays psi, v, w and the history (all eta
    nodes, plus the s0 limit when present) or the closure moment.
    """
    grid = state.grid
    header = {
        "version": _CHECKPOINT_VERSION,
        "dim": grid.dim,
        "shape": list(grid.shape),
        "lengths": list(grid.lengths),
        "time": state.time,
        "params": {"tau": params.tau, "b": params.b, "c2": params.c2,
                   "k": params.k, "kernel": _kernel_to_header(params.kernel)},
    }
    if state.is_closure:
        header["history"] = {"mode": "closure"}
        arrays = [state.psi.values, state.v.values, state.w.values,
                  state.history.moment.values]
    else:
        h = state.history
        header["history"] = {
            "mode": "dafermos", "s_max": h.quad.s_max,
            "n_intervals": h.quad.n_intervals,
            "has_s0_limit": h.s0_limit is not None,
        }
        arrays = [state.psi.values, state.v.values, state.w.values, h.values]
        if h.s0_limit is not None:
            arrays.append(h.s0_limit)
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[State, SystemParams]:
    """Inverse of `save_checkpoint`; validates magic, version and sizes."""
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["version"] != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        grid = Grid(tuple(header["shape"]), tuple(header["lengths"]))
        p = header["params"]
        params = SystemParams(p["tau"], p["b"], p["c2"], p["k"],
                              _kernel_from_header(p["kernel"]))

        def read_array(shape) -> np.ndarray:
            n = int(np.prod(shape))
            data = fh.read(8 * n)
            if len(data) != 8 * n:
                raise ValueError("checkpoint truncated")
            return np.frombuffer(data, dtype="<f8").reshape(shape).copy()

        psi = Field(grid, read_array(grid.shape))
        v = Field(grid, read_array(grid.shape))
        w = Field(grid, read_array(grid.shape))
        hinfo = header["history"]
        if hinfo["mode"] == "closure":
            history: History = ClosureMoment(Field(grid, read_array(grid.shape)))
        else:
            quad = HistoryQuadrature(params.kernel, hinfo["s_max"],
                                     hinfo["n_intervals"])
            vals = read_array((quad.n_nodes, *grid.shape))
            lim = read_array(grid.shape) if hinfo["has_s0_limit"] else None
            history = HistoryField(grid, quad, vals, s0_limit=lim)
        leftover = fh.read(1)
    if leftover:
        raise ValueError("checkpoint has trailing bytes")
    return State(psi, v, w, history, time=header["time"]), params


def memory_laplacian(history: History) -> Field:
    """The memory forcing int_0^inf g(s) Lap eta(s) ds (= Lap of the moment)."""
    return laplacian(memory_moment(history))

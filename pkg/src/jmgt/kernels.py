"""Memory kernels g(s) >= 0 and their admissibility checks.

The convolution term of the model is int_0^inf g(s) Lap psi(t-s) ds. A kernel
is admissible when

  * integrability:  g and g' are integrable on [0, inf),
  * sign/mass:      g >= 0 and 0 < int g ds < c^2,
  * domination:     g'(s) <= -zeta * g(s) for the claimed rate zeta > 0,
  * convexity:      g''(s) >= 0.

`check_assumptions` verifies all four numerically and reports the worst
violation of each; the solver itself only requires the first two (the others
drive the decay theory, and the verification tools are expected to *detect*
their failure, not to refuse to run).
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator


class MemoryKernel:
    """Base interface: a kernel evaluates g, g' and g'' vectorized over s."""

    #: claimed rate zeta with g' <= -zeta*g, or None when unknown/absent
    decay_rate: Optional[float] = None

    def __call__(self, s):
        raise NotImplementedError

    def derivative(self, s):
        raise NotImplementedError

    def second_derivative(self, s):
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    def suggested_cutoff(self, drop: float = 1e-12) -> float:
        """A truncation length S with g(S) <= drop * g(0)."""
        g0 = float(self(0.0))
        if g0 == 0.0:
            return 1.0
        s = 1.0
        while float(self(s)) > drop * g0 and s < 1e6:
            s *= 2.0
        return s


class ZeroKernel(MemoryKernel):
    """No memory: g identically zero (the purely damped limit)."""

    decay_rate = None

    def __call__(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def derivative(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def second_derivative(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))

    @property
    def is_zero(self) -> bool:
        return True

    def suggested_cutoff(self, drop: float = 1e-12) -> float:
        return 1.0


class ExponentialKernel(MemoryKernel):
    """g(s) = coupling * c2 * exp(-s / tau_r).

    `coupling` is the dimensionless strength; the total mass is
    coupling * c2 * tau_r, and coupling * tau_r < 1 keeps the effective
    propagation speed positive (mass < c2). Closed forms for the mass and
    the shifted moments exist, which the characteristic stepper exploits.

    The true decay rate is 1/tau_r; a different `decay_rate` may be claimed
    to probe how the admissibility checks respond.
    """

    def __init__(
        self,
        coupling: float,
        c2: float,
        tau_r: float,
        decay_rate: Optional[float] = None,
    ):
        if coupling < 0:
            raise ValueError(f"coupling must be >= 0, got {coupling}")
        if tau_r <= 0:
            raise ValueError(f"tau_r must be > 0, got {tau_r}")
        if c2 <= 0:
            raise ValueError(f"c2 must be > 0, got {c2}")
        if coupling * tau_r >= 1.0:
            raise ValueError(
                f"coupling*tau_r = {coupling * tau_r:g} >= 1: kernel mass would "
                "reach c^2 and the effective speed would vanish"
            )
        self.coupling = float(coupling)
        self.c2 = float(c2)
        self.tau_r = float(tau_r)
        self.amplitude = self.coupling * self.c2
        self.decay_rate = 1.0 / self.tau_r if decay_rate is None else float(decay_rate)

    def __call__(self, s):
        return self.amplitude * np.exp(-np.asarray(s, dtype=float) / self.tau_r)

    def derivative(self, s):
        return -self(s) / self.tau_r

    def second_derivative(self, s):
        return self(s) / self.tau_r**2

    @property
    def mass_exact(self) -> float:
        return self.amplitude * self.tau_r

    def suggested_cutoff(self, drop: float = 1e-12) -> float:
        return self.tau_r * float(np.log(1.0 / drop))

    def __repr__(self):
        return (
            f"ExponentialKernel(coupling={self.coupling}, c2={self.c2}, "
            f"tau_r={self.tau_r})"
        )


class CallableKernel(MemoryKernel):
    """Wrap analytic g (and optionally g', g'') given as callables.

    Missing derivatives fall back to central differences; used mainly for
    counterexample kernels in the verification suite.
    """

    def __init__(
        self,
        fn: Callable,
        dfn: Optional[Callable] = None,
        d2fn: Optional[Callable] = None,
        decay_rate: Optional[float] = None,
        cutoff_hint: Optional[float] = None,
    ):
        self._fn = fn
        self._dfn = dfn
        self._d2fn = d2fn
        self.decay_rate = decay_rate
        self._cutoff_hint = cutoff_hint

    def __call__(self, s):
        return np.asarray(self._fn(np.asarray(s, dtype=float)), dtype=float)

    def derivative(self, s, h: float = 1e-6):
        if self._dfn is not None:
            return np.asarray(self._dfn(np.asarray(s, dtype=float)), dtype=float)
        s = np.asarray(s, dtype=float)
        return (self(np.maximum(s + h, 0)) - self(np.maximum(s - h, 0))) / (2 * h)

    def second_derivative(self, s, h: float = 1e-5):
        if self._d2fn is not None:
            return np.asarray(self._d2fn(np.asarray(s, dtype=float)), dtype=float)
        s = np.asarray(s, dtype=float)
        return (self(s + h) - 2 * self(s) + self(np.maximum(s - h, 0))) / h**2

    def suggested_cutoff(self, drop: float = 1e-12) -> float:
        if self._cutoff_hint is not None:
            return self._cutoff_hint
        return super().suggested_cutoff(drop)


class TabulatedKernel(MemoryKernel):
    """Kernel defined by samples (s_j, g_j), monotone-cubic interpolated.

    PCHIP interpolation preserves positivity and monotonicity of the data;
    outside the last sample the kernel is taken to be zero, so tables should
    extend until g is negligible. When no decay rate is given, the largest
    rate the data supports (min over live samples of -g'/g, floored at 0)
    is fitted and stored.
    """

    def __init__(self, s: np.ndarray, g: np.ndarray, decay_rate: Optional[float] = None):
        s = np.asarray(s, dtype=float)
        g = np.asarray(g, dtype=float)
        if s.ndim != 1 or s.size < 4:
            raise ValueError("need at least 4 samples")
        if s[0] != 0.0:
            raise ValueError("first sample must be at s = 0")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sample points must be strictly increasing")
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(g)):
            raise ValueError("samples must be finite")
        if np.any(g < 0):
            raise ValueError("kernel samples must be nonnegative")
        self.s_samples = s
        self.g_samples = g
        self._interp = PchipInterpolator(s, g, extrapolate=False)
        self._dinterp = self._interp.derivative()
        self._d2interp = self._interp.derivative(2)
        if decay_rate is None:
            decay_rate = fit_decay_rate(self, s)
        self.decay_rate = decay_rate

    def _eval(self, interp, s):
        s = np.asarray(s, dtype=float)
        out = interp(np.clip(s, 0.0, self.s_samples[-1]))
        return np.where(s > self.s_samples[-1], 0.0, out)

    def __call__(self, s):
        return self._eval(self._interp, s)

    def derivative(self, s):
        return self._eval(self._dinterp, s)

    def second_derivative(self, s):
        return self._eval(self._d2interp, s)

    def suggested_cutoff(self, drop: float = 1e-12) -> float:
        return float(self.s_samples[-1])


def load_kernel_table(path, decay_rate: Optional[float] = None) -> TabulatedKernel:
    """Load a two-column (s, g) table; '#' comments, comma or whitespace delimited."""
    with open(path) as fh:
        text = fh.read()
    delim = "," if ("," in text.split("\n", 20)[0] or ",\n" in text or ", " in text) else None
    data = np.loadtxt(path, comments="#", delimiter=delim)
    data = np.atleast_2d(data)
    if data.shape[1] != 2:
        raise ValueError(f"kernel table must have two columns, got {data.shape[1]}")
    return TabulatedKernel(data[:, 0], data[:, 1], decay_rate=decay_rate)


def eval_kernel(kernel: MemoryKernel, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate (g, g', g'') at nonnegative lag(s) s; rejects negative s."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("kernel lag s must be nonnegative")
    return (
        np.asarray(kernel(s), dtype=float),
        np.asarray(kernel.derivative(s), dtype=float),
        np.asarray(kernel.second_derivative(s), dtype=float),
    )


def fit_decay_rate(kernel: MemoryKernel, s_grid: np.ndarray) -> float:
    """Largest zeta with g' <= -zeta*g on the grid: min of -g'/g where g lives."""
    g = np.asarray(kernel(s_grid), dtype=float)
    gp = np.asarray(kernel.derivative(s_grid), dtype=float)
    g0 = float(np.max(np.abs(g)))
    if g0 == 0.0:
        return 0.0
    live = g > 1e-10 * g0
    if not np.any(live):
        return 0.0
    return max(float(np.min(-gp[live] / g[live])), 0.0)


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------

def total_mass(kernel: MemoryKernel, s_max: Optional[float] = None, num: int = 200_001) -> float:
    """int_0^inf g ds by fine trapezoid quadrature (independent of run grids).

    The default resolution keeps the relative error ~1e-9 for smooth decaying
    kernels, well inside the 1e-8 invariant the tests pin.
    """
    if kernel.is_zero:
        return 0.0
    if s_max is None:
        s_max = kernel.suggested_cutoff(1e-14)
    s = np.linspace(0.0, float(s_max), int(num))
    return float(np.trapezoid(kernel(s), s))


def effective_speed_squared(c2: float, kernel: MemoryKernel) -> float:
    """c_g^2 = c^2 - int g ds; must stay positive for well-posedness.

    Kernels with a closed-form mass (`mass_exact`) use it; others are
    integrated numerically.
    """
    mass = getattr(kernel, "mass_exact", None)
    if mass is None:
        mass = total_mass(kernel)
    cg2 = float(c2) - mass
    if cg2 <= 0:
        raise ValueError(
            f"kernel mass {c2 - cg2:g} >= c^2 = {c2:g}: effective speed non-positive"
        )
    return cg2


# ---------------------------------------------------------------------------
# admissibility report
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class AssumptionCheck:
    """One admissibility condition: pass flag plus worst violation magnitude.

    `violation` is 0.0 for a clean pass and grows with the size of the worst
    pointwise breach, so reports stay quantitative rather than boolean.
    """

    name: str
    passed: bool
    violation: float
    detail: str = ""


@dataclasses.dataclass
class KernelReport:
    """Outcome of the admissibility checks, one entry per assumption."""

    mass: float
    effective_c2: Optional[float]
    decay_rate: Optional[float]
    tol: float
    checks: dict[str, AssumptionCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def worst_violation(self) -> float:
        return max((c.violation for c in self.checks.values()), default=0.0)

    def failures(self) -> list[AssumptionCheck]:
        return [c for c in self.checks.values() if not c.passed]

    def summary_lines(self) -> list[str]:
        lines = [f"mass = {self.mass:.8g}"]
        if self.effective_c2 is not None:
            lines.append(f"effective squared speed = {self.effective_c2:.8g}")
        if self.decay_rate is not None:
            lines.append(f"decay rate = {self.decay_rate:.8g}")
        for c in self.checks.values():
            status = "pass" if c.passed else "FAIL"
            line = f"{c.name}: {status} (worst violation {c.violation:.3e})"
            if c.detail:
                line += f" -- {c.detail}"
            lines.append(line)
        return lines


def check_assumptions(
    kernel: MemoryKernel,
    s_grid: Optional[np.ndarray] = None,
    tol: float = 1e-9,
    c2: Optional[float] = None,
    decay_rate: Optional[float] = None,
    num: int = 20_001,
) -> KernelReport:
    """Numerically verify the admissibility assumptions on an s-grid.

    The grid defaults to a fine uniform one reaching the kernel's suggested
    cutoff. The domination check uses the passed `decay_rate`, else the
    kernel's claimed one, else the best rate fitted from the data. Violations
    are reported in absolute size; pass thresholds scale `tol` by the natural
    magnitude of each expression so the equality case g' = -zeta*g passes
    with zero violation.
    """
    if c2 is None:
        c2 = getattr(kernel, "c2", None)

    if kernel.is_zero:
        checks = {
            "integrable": AssumptionCheck("integrable", True, 0.0),
            "nonnegative": AssumptionCheck("nonnegative", True, 0.0),
            "positive_mass": AssumptionCheck(
                "positive_mass", False, 0.0,
                "zero kernel: memoryless model, mass strictly zero"),
            "decay_dominated": AssumptionCheck(
                "decay_dominated", False, 0.0, "no positive decay rate exists"),
            "convex": AssumptionCheck("convex", True, 0.0),
        }
        if c2 is not None:
            checks["mass_below_c2"] = AssumptionCheck("mass_below_c2", True, 0.0)
        return KernelReport(mass=0.0, effective_c2=c2, decay_rate=None,
                            tol=tol, checks=checks)

    if s_grid is None:
        s_grid = np.linspace(0.0, kernel.suggested_cutoff(1e-12), int(num))
    s = np.asarray(s_grid, dtype=float)
    g, gp, gpp = eval_kernel(kernel, s)
    g0 = float(np.max(np.abs(g))) or 1.0
    checks: dict[str, AssumptionCheck] = {}

    finite = bool(np.all(np.isfinite(g)) and np.all(np.isfinite(gp)))
    int_g = float(np.trapezoid(np.abs(g), s)) if finite else np.inf
    int_gp = float(np.trapezoid(np.abs(gp), s)) if finite else np.inf
    ok = finite and np.isfinite(int_g) and np.isfinite(int_gp)
    checks["integrable"] = AssumptionCheck(
        "integrable", ok, 0.0 if ok else np.inf,
        "" if ok else "kernel or derivative not finite/integrable on the window")

    neg = max(0.0, -float(np.min(g)))
    checks["nonnegative"] = AssumptionCheck(
        "nonnegative", neg <= tol * g0, neg,
        "" if neg <= tol * g0 else f"min g = {np.min(g):.3e}")

    mass = total_mass(kernel, s_max=float(s[-1]))
    checks["positive_mass"] = AssumptionCheck(
        "positive_mass", mass > 0.0, max(0.0, -mass),
        "" if mass > 0.0 else "kernel mass is not positive")

    effective_c2 = None
    if c2 is not None:
        over = max(0.0, mass - float(c2))
        checks["mass_below_c2"] = AssumptionCheck(
            "mass_below_c2", mass < float(c2), over,
            "" if mass < float(c2) else f"mass {mass:g} >= squared speed {c2:g}")
        effective_c2 = float(c2) - mass

    zeta = decay_rate if decay_rate is not None else kernel.decay_rate
    if zeta is None:
        zeta = fit_decay_rate(kernel, s)
    live = g > 1e-10 * g0
    excess = gp[live] + zeta * g[live]
    worst = max(0.0, float(np.max(excess, initial=-np.inf)))
    scale = float(np.max(np.abs(gp)) + abs(zeta) * g0) or 1.0
    dominated = zeta > tol and worst <= tol * scale
    checks["decay_dominated"] = AssumptionCheck(
        "decay_dominated", dominated, worst,
        "" if dominated else
        f"g' <= -zeta*g fails for zeta = {zeta:.6g} (worst excess {worst:.3e})")

    dip = max(0.0, -float(np.min(gpp)))
    scale2 = float(np.max(np.abs(gpp))) or 1.0
    checks["convex"] = AssumptionCheck(
        "convex", dip <= tol * scale2, dip,
        "" if dip <= tol * scale2 else f"min g'' = {np.min(gpp):.3e}")

    return KernelReport(mass=mass, effective_c2=effective_c2,
                        decay_rate=float(zeta), tol=tol, checks=checks)

"""Fourier pseudo-spectral operators on a periodic box.

Everything downstream (energies, history quadratures, the discrete generator)
is built from the handful of primitives here: FFT round trips, derivative
multipliers, and Parseval-exact inner products.

Conventions
-----------
* Physical wavenumbers are xi_i = 2*pi*k_i / L_i with integer k_i on numpy's
  fft grid; the transform is numpy's unnormalized forward FFT.
* Quadrature of nodal values uses the cell volume prod(L_i/n_i); in spectral
  space the matching weight is prod(L_i) / N_total**2, which makes
  ``l2_norm(f) == hnorm(f, 0)`` exact to roundoff (Parseval).
* First-derivative multipliers zero the Nyquist row so real fields map to
  real fields; even multipliers (laplacian, |xi|^(2k), xi_i*xi_j) keep it.
  Band-limited fields (|k| <= n/3, what `random_field` produces) never see
  the difference.
"""

from __future__ import annotations

import dataclasses
from functools import cached_property
from typing import Callable, Sequence

import numpy as np


@dataclasses.dataclass
class Grid:
    """Uniform periodic grid on a box of the given side lengths.

    Treated as immutable; spectral arrays are cached on first use.
    """

    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        self.shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        self.lengths = tuple(float(L) for L in np.atleast_1d(self.lengths))
        if len(self.shape) != len(self.lengths):
            raise ValueError("shape and lengths must have the same dimension")
        if not 1 <= len(self.shape) <= 3:
            raise ValueError("only 1, 2 or 3 spatial dimensions are supported")
        for n in self.shape:
            if n < 8 or (n & (n - 1)):
                raise ValueError(f"grid size must be a power of two >= 8, got {n}")
        for L in self.lengths:
            if not L > 0:
                raise ValueError(f"box length must be positive, got {L}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([L / n for L, n in zip(self.lengths, self.shape)]))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def spectral_weight(self) -> float:
        # prod(L) / N^2: makes sum(w * |fhat|^2) == integral of f^2 exactly.
        return self.volume / self.npoints**2

    @cached_property
    def coords(self) -> list[np.ndarray]:
        """Node coordinates, one broadcastable array per axis (x in [0, L))."""
        axes = [
            np.arange(n) * (L / n) for n, L in zip(self.shape, self.lengths)
        ]
        return list(np.meshgrid(*axes, indexing="ij", sparse=True))

    @cached_property
    def wavenumbers(self) -> list[np.ndarray]:
        """Physical wavenumbers xi_i = 2 pi k_i / L_i, broadcastable per axis."""
        out = []
        for ax, (n, L) in enumerate(zip(self.shape, self.lengths)):
            xi = 2.0 * np.pi * np.fft.fftfreq(n, d=L / n)
            shape = [1] * self.dim
            shape[ax] = n
            out.append(xi.reshape(shape))
        return out

    @cached_property
    def wavenumbers_odd(self) -> list[np.ndarray]:
        """Like `wavenumbers` but with the Nyquist mode zeroed (for odd multipliers)."""
        out = []
        for ax, xi in enumerate(self.wavenumbers):
            xi = xi.copy()
            n = self.shape[ax]
            idx = [slice(None)] * self.dim
            idx[ax] = n // 2
            xi[tuple(idx)] = 0.0
            out.append(xi)
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        """|xi|^2 on the full spectral grid."""
        out = np.zeros(self.shape)
        for xi in self.wavenumbers:
            out = out + xi**2
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean 2/3-rule mask: True on modes kept after dealiasing."""
        mask = np.ones(self.shape, dtype=bool)
        for ax, n in enumerate(self.shape):
            k = np.fft.fftfreq(n, d=1.0 / n)
            keep = np.abs(k) <= n // 3
            shape = [1] * self.dim
            shape[ax] = n
            mask &= keep.reshape(shape)
        return mask


@dataclasses.dataclass
class Field:
    """Real scalar field sampled on a `Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "Field":
        """Sample fn(x) (or fn(x, y), ...) on the grid nodes."""
        return cls(grid, np.broadcast_to(fn(*grid.coords), grid.shape).astype(float))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    # Small arithmetic surface so stepper code reads like the equations.
    def __add__(self, other):
        return Field(self.grid, self.values + _values_of(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - _values_of(other))

    def __rsub__(self, other):
        return Field(self.grid, _values_of(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * _values_of(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


def _values_of(x) -> np.ndarray | float:
    return x.values if isinstance(x, Field) else x


# ---------------------------------------------------------------------------
# transforms and derivative operators
# ---------------------------------------------------------------------------

def to_spectrum(f: Field) -> np.ndarray:
    """Forward FFT of the nodal values (numpy unnormalized convention).

    Rejects non-finite input: a NaN poisons every mode, so catching it here
    (rather than in whatever norm is computed three calls later) keeps
    blow-up diagnostics attributable.
    """
    if not np.all(np.isfinite(f.values)):
        raise FloatingPointError("non-finite field values")
    return np.fft.fftn(f.values)


def from_spectrum(grid: Grid, fhat: np.ndarray) -> Field:
    """Inverse FFT; the (roundoff-level) imaginary part is discarded."""
    return Field(grid, np.fft.ifftn(fhat).real)


def apply_multiplier(f: Field, mult: np.ndarray) -> Field:
    """Apply a Fourier multiplier m(xi): f -> ifft(m * fft(f))."""
    return from_spectrum(f.grid, mult * to_spectrum(f))


def gradient(f: Field) -> list[Field]:
    """Spectral gradient, one component per axis (Nyquist zeroed)."""
    fhat = to_spectrum(f)
    return [
        from_spectrum(f.grid, 1j * xi * fhat) for xi in f.grid.wavenumbers_odd
    ]


def laplacian(f: Field) -> Field:
    return apply_multiplier(f, -f.grid.k2)


def partials(f: Field, order: int) -> np.ndarray:
    """Physical partial-derivative tensor of order 1 (gradient) or 2 (Hessian).

    Returns an array of shape (dim,)*order + grid.shape. Second derivatives
    use the even multiplier -xi_i*xi_j (Nyquist kept), so the pointwise
    Hessian is exactly consistent with hnorm(f, 2).
    """
    fhat = to_spectrum(f)
    g = f.grid
    if order == 1:
        comps = [np.fft.ifftn(1j * xi * fhat).real for xi in g.wavenumbers_odd]
        return np.stack(comps)
    if order == 2:
        rows = []
        for xi_i in g.wavenumbers:
            rows.append(
                [np.fft.ifftn(-xi_i * xi_j * fhat).real for xi_j in g.wavenumbers]
            )
        return np.array(rows)
    raise ValueError(f"order must be 1 or 2, got {order}")


def project(f: Field, mask: np.ndarray) -> Field:
    """Zero all spectral content outside the boolean mask."""
    return from_spectrum(f.grid, np.where(mask, to_spectrum(f), 0.0))


def zero_mean(f: Field) -> Field:
    """Remove the spatial mean (the k=0 mode)."""
    return Field(f.grid, f.values - f.values.mean())


# ---------------------------------------------------------------------------
# inner products and norms
# ---------------------------------------------------------------------------

def _require_same_grid(f: Field, g: Field) -> None:
    if f.grid is not g.grid and (
        f.grid.shape != g.grid.shape or f.grid.lengths != g.grid.lengths
    ):
        raise ValueError(
            f"grid mismatch: {f.grid.shape}/{f.grid.lengths} vs "
            f"{g.grid.shape}/{g.grid.lengths}"
        )


def l2_inner(f: Field, g: Field) -> float:
    """Nodal quadrature of the L2 pairing: sum(f*g) * cell_volume."""
    _require_same_grid(f, g)
    return float(np.sum(f.values * g.values) * f.grid.cell_volume)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(np.sum(f.values**2) * f.grid.cell_volume))


def max_norm(f: Field) -> float:
    return float(np.max(np.abs(f.values)))


def grad_max_norm(f: Field) -> float:
    """sup_x |grad f| (Euclidean length of the spectral gradient)."""
    comps = partials(f, 1)
    return float(np.sqrt((comps**2).sum(axis=0)).max())


def multiplier_inner(f: Field, g: Field, mult: np.ndarray) -> float:
    """Polarized spectral pairing Re sum(m(xi) fhat conj(ghat)) * w.

    With mult = |xi|^(2*kappa) this is the homogeneous pairing
    <grad^kappa f, grad^kappa g>; it is exact (Parseval), no nodal
    differentiation error.
    """
    _require_same_grid(f, g)
    fhat = to_spectrum(f)
    ghat = to_spectrum(g)
    return float(np.sum(mult * (fhat * ghat.conj()).real) * f.grid.spectral_weight)


def hmult(grid: Grid, order: float) -> np.ndarray:
    """Homogeneous multiplier |xi|^(2*order) (the order may be fractional)."""
    if order == 0:
        return np.ones(grid.shape)
    with np.errstate(divide="ignore"):
        m = grid.k2**order
    if order < 0:
        m[grid.k2 == 0.0] = 0.0  # homogeneous negative orders ignore the mean
    return m


def sobolev_mult(grid: Grid, frac_order: float, deriv_order: int = 0) -> np.ndarray:
    """Inhomogeneous multiplier (1+|xi|^2)^frac_order * |xi|^(2*deriv_order)."""
    return (1.0 + grid.k2) ** frac_order * hmult(grid, deriv_order)


def hinner(f: Field, g: Field, order: float) -> float:
    """Homogeneous pairing <grad^order f, grad^order g> (spectral, exact)."""
    return multiplier_inner(f, g, hmult(f.grid, order))


def hnorm(f: Field, order: float) -> float:
    """Homogeneous seminorm ||grad^order f||_{L2}; order 0 is the L2 norm."""
    return float(np.sqrt(max(hinner(f, f, order), 0.0)))


def sobolev_norm(f: Field, frac_order: float, deriv_order: int = 0) -> float:
    """Inhomogeneous norm ||(1-Lap)^(frac_order/2) grad^deriv_order f||."""
    m = sobolev_mult(f.grid, frac_order, deriv_order)
    fhat = to_spectrum(f)
    val = np.sum(m * np.abs(fhat) ** 2) * f.grid.spectral_weight
    return float(np.sqrt(max(val, 0.0)))


# ---------------------------------------------------------------------------
# random band-limited fields (probes, default experiments)
# ---------------------------------------------------------------------------

def random_field(
    grid: Grid,
    rng: np.random.Generator,
    decay: float = 3.0,
    amplitude: float = 1.0,
    kmax_fraction: float = 1.0 / 3.0,
) -> Field:
    """Smooth random real field, band-limited to |k_i| <= kmax_fraction*n_i.

    Spectral synthesis: white nodal noise shaped by (1+|k|^2)^(-decay/2)
    inside the band. Deterministic for a given generator state; normalized
    to the requested max amplitude.
    """
    noise = rng.standard_normal(grid.shape)
    nhat = np.fft.fftn(noise)
    kint2 = np.zeros(grid.shape)
    mask = np.ones(grid.shape, dtype=bool)
    for ax, n in enumerate(grid.shape):
        k = np.fft.fftfreq(n, d=1.0 / n)
        shape = [1] * grid.dim
        shape[ax] = n
        kint2 = kint2 + k.reshape(shape) ** 2
        mask &= (np.abs(k) <= max(1, int(kmax_fraction * n))).reshape(shape)
        nyq = [slice(None)] * grid.dim
        nyq[ax] = n // 2
        mask[tuple(nyq)] = False
    envelope = np.where(mask, (1.0 + kint2) ** (-decay / 2.0), 0.0)
    f = np.fft.ifftn(envelope * nhat).real
    f -= f.mean()
    peak = np.max(np.abs(f))
    if peak > 0:
        f *= amplitude / peak
    return Field(grid, f)


def gaussian_bump(
    grid: Grid,
    amplitude: float = 1.0,
    width: float | Sequence[float] | None = None,
    center: Sequence[float] | None = None,
) -> Field:
    """Periodized Gaussian bump (sum over nearest images), mean NOT removed."""
    widths = np.broadcast_to(
        np.atleast_1d(width if width is not None else [L / 16 for L in grid.lengths]),
        (grid.dim,),
    ).astype(float)
    centers = np.broadcast_to(
        np.atleast_1d(center if center is not None else [L / 2 for L in grid.lengths]),
        (grid.dim,),
    ).astype(float)
    r2 = np.zeros(grid.shape)
    for x, L, w, c in zip(grid.coords, grid.lengths, widths, centers):
        d = np.abs(x - c)
        d = np.minimum(d, L - d)  # nearest periodic image
        r2 = r2 + (d / w) ** 2
    return Field(grid, amplitude * np.exp(-0.5 * r2))

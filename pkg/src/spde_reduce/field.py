"""Grids, fields, quadrature and spectral transforms on a 1-D domain.

Everything else in the package measures things with :func:`inner_product`,
so the quadrature rule chosen here is the Hilbert-space pairing of the
whole library: composite trapezoid for bounded domains, rectangle rule
for periodic ones. Complex fields are paired with ``Re sum w f conj(g)``.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft

from .exceptions import GridMismatchError

BOUNDARY_CONDITIONS = ("dirichlet", "neumann", "periodic")


def fmt(value) -> str:
    """Shortest round-trip decimal representation of a float."""
    return repr(float(value))


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[x_min, x_max]`` tagged with a boundary condition.

    For periodic grids the right endpoint is not stored (it coincides with
    ``x_min``), so ``spacing = (x_max - x_min) / n_points``.
    """

    x_min: float
    x_max: float
    n_points: int
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if int(self.n_points) != self.n_points or self.n_points < 8:
            raise ValueError("n_points must be an integer >= 8")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def periodic(self) -> bool:
        return self.bc == "periodic"

    @cached_property
    def spacing(self) -> float:
        if self.periodic:
            return self.length / self.n_points
        return self.length / (self.n_points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        pts = self.x_min + self.spacing * np.arange(self.n_points)
        pts.setflags(write=False)
        return pts

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights: rectangle rule (periodic) or trapezoid."""
        w = np.full(self.n_points, self.spacing)
        if not self.periodic:
            w[0] = w[-1] = 0.5 * self.spacing
        w.setflags(write=False)
        return w

    def wavenumbers(self) -> np.ndarray:
        """Wavenumbers of the spectral transform used by :func:`laplacian`."""
        n = self.n_points
        if self.bc == "dirichlet":
            return np.pi * np.arange(1, n - 1) / self.length
        if self.bc == "neumann":
            return np.pi * np.arange(n) / self.length
        return 2 * np.pi * scipy.fft.fftfreq(n, d=1.0 / n) / self.length


@dataclass(frozen=True, eq=False)
class Field:
    """Real or complex samples of a function on a :class:`Grid1D`.

    ``values`` is stored read-only; arithmetic returns new fields.
    """

    grid: Grid1D
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, copy=True)
        if not np.iscomplexobj(vals):
            vals = vals.astype(float)
        if vals.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} values, got shape {vals.shape}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid1D, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return cls(grid, func(grid.x))

    @classmethod
    def zeros(cls, grid: Grid1D, complex_valued: bool = False) -> "Field":
        return cls(grid, np.zeros(grid.n_points, dtype=complex if complex_valued else float))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def _other(self, other):
        if isinstance(other, Field):
            _check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __len__(self):
        return self.grid.n_points


def _check_same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"fields live on different grids: {f.grid} vs {g.grid}")


def _values(f, grid: Grid1D | None = None) -> np.ndarray:
    if isinstance(f, Field):
        if grid is not None and f.grid != grid:
            raise GridMismatchError(f"field grid {f.grid} does not match {grid}")
        return f.values
    return np.asarray(f)


def pair(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Batched quadrature pairing ``Re sum_x w a conj(b)`` over the last axis."""
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        return np.real(np.sum(weights * a * np.conj(b), axis=-1))
    return np.sum(weights * a * b, axis=-1)


def inner_product(f: Field, g: Field) -> float:
    """Quadrature approximation of ``Re ∫ f conj(g) dx``."""
    if not (isinstance(f, Field) and isinstance(g, Field)):
        raise TypeError("inner_product expects two Field instances")
    _check_same_grid(f, g)
    return float(pair(f.values, g.values, f.grid.weights))


def l2_norm(f: Field) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def basis_modes(grid: Grid1D, count: int) -> list[Field]:
    """First ``count`` L2-orthonormal Laplacian eigenfunctions for ``grid.bc``.

    Dirichlet: ``sqrt(2/L) sin(k pi x / L)``; Neumann: constant then
    ``sqrt(2/L) cos(k pi x / L)``; periodic: constant, then cos/sin pairs
    of increasing frequency.
    """
    return [Field(grid, row) for row in mode_matrix(grid, count)]


def mode_matrix(grid: Grid1D, count: int) -> np.ndarray:
    """Array version of :func:`basis_modes` with shape ``(count, n_points)``."""
    count = int(count)
    if count < 1 or count > grid.n_points // 2:
        raise ValueError(f"count must lie in [1, {grid.n_points // 2}], got {count}")
    L = grid.length
    s = grid.x - grid.x_min
    out = np.empty((count, grid.n_points))
    if grid.bc == "dirichlet":
        for k in range(count):
            out[k] = np.sqrt(2 / L) * np.sin((k + 1) * np.pi * s / L)
    elif grid.bc == "neumann":
        out[0] = 1 / np.sqrt(L)
        for k in range(1, count):
            out[k] = np.sqrt(2 / L) * np.cos(k * np.pi * s / L)
    else:
        out[0] = 1 / np.sqrt(L)
        for k in range(1, count):
            freq = (k + 1) // 2
            trig = np.cos if k % 2 else np.sin
            out[k] = np.sqrt(2 / L) * trig(2 * np.pi * freq * s / L)
    return out


def mode_wavenumbers(grid: Grid1D, count: int) -> np.ndarray:
    """Wavenumber of each row of :func:`mode_matrix` (Laplacian eigenvalue is ``-k**2``)."""
    L = grid.length
    k = np.arange(count)
    if grid.bc == "dirichlet":
        return (k + 1) * np.pi / L
    if grid.bc == "neumann":
        return k * np.pi / L
    return 2 * np.pi * ((k + 1) // 2) / L


def gram_matrix(fields: Sequence[Field] | np.ndarray, grid: Grid1D | None = None) -> np.ndarray:
    if isinstance(fields, np.ndarray):
        rows, w = fields, grid.weights
    else:
        rows = np.array([f.values for f in fields])
        w = fields[0].grid.weights
    return pair(rows[:, None, :], rows[None, :, :], w)


def _spectral_apply(values: np.ndarray, grid: Grid1D, symbol: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a Fourier multiplier ``symbol(k)`` along the last axis."""
    k = grid.wavenumbers()
    if grid.bc == "periodic":
        return scipy.fft.ifft(scipy.fft.fft(values, axis=-1) * symbol(k), axis=-1)
    if grid.bc == "dirichlet":
        out = np.zeros_like(values)
        inner = values[..., 1:-1]
        out[..., 1:-1] = scipy.fft.idst(scipy.fft.dst(inner, type=1, axis=-1) * symbol(k), type=1, axis=-1)
        return out
    return scipy.fft.idct(scipy.fft.dct(values, type=1, axis=-1) * symbol(k), type=1, axis=-1)


def apply_symbol(values: np.ndarray, grid: Grid1D, symbol: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Spectral multiplier on batched arrays; real input gives real output."""
    out = _spectral_apply(values, grid, symbol)
    if not np.iscomplexobj(values) and grid.bc == "periodic":
        out = out.real
    return out


def laplacian(f, grid: Grid1D | None = None):
    """Spectral second derivative honouring the grid's boundary condition.

    Accepts a :class:`Field` (returns a Field) or a batched array with the
    grid passed explicitly (returns an array).
    """
    if isinstance(f, Field):
        return Field(f.grid, apply_symbol(f.values, f.grid, lambda k: -k**2))
    return apply_symbol(np.asarray(f), grid, lambda k: -k**2)


def neumann_laplacian(values: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Weak-form Neumann Laplacian of data whose boundary slopes need not vanish.

    With ``<phi, Lap u> = -<phi', u'>`` the operator is the classical
    ``u''`` plus point masses ``u'(0) delta_0 - u'(L) delta_L``. The slopes
    are estimated by one-sided fourth-order differences and lifted off with
    a quadratic, so the spectral part acts on data satisfying the boundary
    condition; the point masses are carried by the end quadrature weights.
    """
    if grid.bc != "neumann":
        raise ValueError("neumann_laplacian needs a Neumann grid")
    u = np.asarray(values)
    dx, L = grid.spacing, grid.length
    c = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12 * dx)
    d0 = u[..., :5] @ c
    dL = -(u[..., -1:-6:-1] @ c)
    s = grid.x - grid.x_min
    d0e, dLe = d0[..., None], dL[..., None]
    lift = d0e * (s - s**2 / (2 * L)) + dLe * s**2 / (2 * L)
    out = apply_symbol(u - lift, grid, lambda k: -k**2) + (dLe - d0e) / L
    w = grid.weights
    out[..., 0] += d0 / w[0]
    out[..., -1] -= dL / w[-1]
    return out


def derivative(f: Field) -> Field:
    """Second-order finite-difference first derivative (diagnostics only)."""
    vals = f.values
    if f.grid.periodic:
        d = (np.roll(vals, -1) - np.roll(vals, 1)) / (2 * f.grid.spacing)
    else:
        d = np.gradient(vals, f.grid.spacing, edge_order=2)
    return Field(f.grid, d)


def h1_seminorm(f: Field) -> float:
    """Diagnostic ``||f'||`` via finite differences."""
    return l2_norm(derivative(f))


# -- serialisation ----------------------------------------------------------

_HEADER = struct.Struct("<QB")


def field_to_bytes(f: Field) -> bytes:
    """Length-prefixed little-endian layout: ``uint64 n, uint8 is_complex, float64[...]``."""
    vals = f.values
    if f.is_complex:
        payload = np.ascontiguousarray(vals.astype("<c16")).tobytes()
    else:
        payload = np.ascontiguousarray(vals.astype("<f8")).tobytes()
    return _HEADER.pack(vals.size, int(f.is_complex)) + payload


def field_from_bytes(data: bytes, grid: Grid1D) -> Field:
    n, is_complex = _HEADER.unpack_from(data)
    dtype = "<c16" if is_complex else "<f8"
    vals = np.frombuffer(data, dtype=dtype, count=n, offset=_HEADER.size)
    return Field(grid, vals.astype(complex if is_complex else float))


def field_to_csv(f: Field, header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    if f.is_complex:
        writer.writerow(["x", "re", "im"])
        for x, v in zip(f.grid.x, f.values):
            writer.writerow([fmt(x), fmt(v.real), fmt(v.imag)])
    else:
        writer.writerow(["x", "value"])
        for x, v in zip(f.grid.x, f.values):
            writer.writerow([fmt(x), fmt(v)])
    return buf.getvalue()


def field_from_csv(text: str, grid: Grid1D) -> Field:
    rows = [r for r in csv.reader(line for line in text.splitlines() if not line.startswith("#"))]
    head, body = rows[0], rows[1:]
    if head == ["x", "re", "im"]:
        vals = np.array([float(r[1]) + 1j * float(r[2]) for r in body])
    else:
        vals = np.array([float(r[1]) for r in body])
    return Field(grid, vals)

"""Slow-manifold charts, tangent bases, the A-matrix and Fermi projection."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Optional

import numpy as np

from .exceptions import DegeneracyError, OutOfTubeError
from .field import Field, Grid1D, gram_matrix, pair, _values

ArrayFn = Callable[[np.ndarray], np.ndarray]

FD_STEP_D1 = 1e-4
FD_STEP_HIGHER = 1e-3
GRAM_COND_LIMIT = 1e12
SINGULAR_RATIO = 1e-10


def _central(fn: ArrayFn, h: np.ndarray, rel_step: float) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. every parameter; new axis before the last."""
    n = h.shape[-1]
    cols = []
    for j in range(n):
        step = rel_step * (1 + np.abs(h[..., j]))
        e = np.zeros(n)
        e[j] = 1.0
        hp = h + step[..., None] * e
        hm = h - step[..., None] * e
        diff = (fn(hp) - fn(hm)) / 2
        # broadcast step over the trailing axes of the output
        cols.append(diff / step.reshape(step.shape + (1,) * (diff.ndim - step.ndim)))
    # cols[j] has shape batch + trailing; insert j right after the batch axes
    out = np.stack(cols, axis=h.ndim - 1)
    return out


class Chart:
    """Parametrisation ``h -> u^h`` of an n-dimensional manifold of fields.

    ``func`` maps parameters of shape ``(..., n)`` to field values
    ``(..., N)``. Optional analytic derivatives follow the same batching:
    ``d1 -> (..., n, N)``, ``d2 -> (..., n, n, N)``, ``d3 -> (..., n, n, n, N)``.
    Missing derivatives are filled in with nested central differences.
    """

    def __init__(self, grid: Grid1D, dim: int, func: ArrayFn, d1: Optional[ArrayFn] = None,
                 d2: Optional[ArrayFn] = None, d3: Optional[ArrayFn] = None,
                 domain=None, name: str = "chart"):
        self.grid = grid
        self.dim = int(dim)
        self.name = name
        self._func = func
        self._d1 = d1
        self._d2 = d2
        self._d3 = d3
        if domain is None:
            domain = (np.full(self.dim, -np.inf), np.full(self.dim, np.inf))
        lo, hi = (np.asarray(b, dtype=float).reshape(self.dim) for b in domain)
        self.param_domain = (lo, hi)

    @property
    def derivative_mode(self) -> str:
        if self._d1 and self._d2 and self._d3:
            return "analytic"
        return "finite-difference"

    def _h(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        if h.ndim == 0:
            h = h[None]
        if h.shape[-1] != self.dim:
            raise ValueError(f"parameter must have trailing dimension {self.dim}")
        return h

    # array-level, batched -------------------------------------------------
    def values(self, h) -> np.ndarray:
        return self._func(self._h(h))

    def tangents(self, h) -> np.ndarray:
        h = self._h(h)
        if self._d1 is not None:
            return self._d1(h)
        return _central(self._func, h, FD_STEP_D1)

    def second(self, h) -> np.ndarray:
        h = self._h(h)
        if self._d2 is not None:
            return self._d2(h)
        d2 = _central(self.tangents, h, FD_STEP_HIGHER)
        return 0.5 * (d2 + np.swapaxes(d2, -2, -3))

    def third(self, h) -> np.ndarray:
        h = self._h(h)
        if self._d3 is not None:
            return self._d3(h)
        d3 = _central(self.second, h, FD_STEP_HIGHER)
        b = d3.ndim - 4
        sym = np.zeros_like(d3)
        for perm in permutations(range(3)):
            axes = list(range(b)) + [b + p for p in perm] + [d3.ndim - 1]
            sym += np.transpose(d3, axes)
        return sym / 6

    # Field-level accessors --------------------------------------------------
    def eval(self, h) -> Field:
        return Field(self.grid, self.values(h))

    def d1(self, h, j: int) -> Field:
        return Field(self.grid, self.tangents(h)[j])

    def d2(self, h, j: int, k: int) -> Field:
        return Field(self.grid, self.second(h)[j, k])

    def d3(self, h, j: int, k: int, l: int) -> Field:
        return Field(self.grid, self.third(h)[j, k, l])

    def clamp(self, h) -> np.ndarray:
        lo, hi = self.param_domain
        return np.clip(self._h(h), lo, hi)

    def contains(self, h) -> bool:
        lo, hi = self.param_domain
        h = self._h(h)
        return bool(np.all(h >= lo) and np.all(h <= hi))

    def __repr__(self):
        return f"Chart({self.name!r}, dim={self.dim}, mode={self.derivative_mode})"


@dataclass(frozen=True)
class FermiPair:
    """Fermi (tubular) coordinates ``u = u^h + v`` with ``<u_j^h, v> = 0``."""

    h: np.ndarray
    v: Field
    ortho_residuals: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.ortho_residuals)))


def ortho_residuals(chart: Chart, h, v) -> np.ndarray:
    """``<u_j^h, v>`` for every tangent direction (batched)."""
    vv = _values(v, chart.grid)
    return pair(chart.tangents(h), vv[..., None, :], chart.grid.weights)


def tangent_basis(chart: Chart, h) -> list[Field]:
    """Tangent vectors ``u_j^h``; raises if their Gram matrix is degenerate."""
    h = chart._h(h)
    if not chart.contains(h):
        raise ValueError(f"parameter {h} outside the chart domain")
    T = chart.tangents(h)
    gram = gram_matrix(T, chart.grid)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > GRAM_COND_LIMIT:
        raise DegeneracyError(f"degenerate tangent basis at h={h} (cond={cond:.3g})", h=h,
                              condition_number=cond)
    return [Field(chart.grid, row) for row in T]


def a_matrix(tangents: np.ndarray, second: np.ndarray, v: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Batched ``A_jk = <u_j, u_k> - <u_jk, v>`` from precomputed chart arrays."""
    gram = pair(tangents[..., :, None, :], tangents[..., None, :, :], weights)
    curv = pair(second, v[..., None, None, :], weights)
    return gram - curv


def assemble_A(chart: Chart, h, v) -> np.ndarray:
    """The matrix ``A(h, v)``; with ``v = 0`` it is the Gram matrix of the tangents."""
    vv = _values(v, chart.grid)
    return a_matrix(chart.tangents(h), chart.second(h), vv, chart.grid.weights)


@dataclass(frozen=True)
class InvertibilityReport:
    ok: bool
    condition_number: float


def check_invertible(A, h=None) -> InvertibilityReport:
    """Certify that ``A`` is safely invertible (smallest/largest singular value > 1e-10)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0 or s[-1] <= SINGULAR_RATIO * s[0]:
        cond = np.inf if s[-1] == 0 else s[0] / s[-1]
        raise DegeneracyError(f"A-matrix is singular near h={h} (cond={cond:.3g})", h=h,
                              condition_number=cond)
    return InvertibilityReport(True, float(s[0] / s[-1]))


def fermi_project(chart: Chart, u, h_guess, tol: float = 1e-8, max_iter: int = 100) -> FermiPair:
    """Nearest point ``u^h`` on the manifold, starting from ``h_guess``.

    Newton iteration on ``Phi(h) = ||u - u^h||^2 / 2`` whose Hessian is
    exactly ``A(h, u - u^h)``; the step is halved while ``Phi`` increases.
    Where ``A`` is not positive definite mid-iteration the Gauss-Newton
    matrix (the Gram matrix) is used instead.
    """
    uv = _values(u, chart.grid)
    w = chart.grid.weights
    h = chart.clamp(np.asarray(h_guess, dtype=float).reshape(chart.dim))

    def phi(hh):
        r = uv - chart.values(hh)
        return 0.5 * float(pair(r, r, w))

    for _ in range(max_iter):
        r = uv - chart.values(h)
        T = chart.tangents(h)
        res = pair(T, r[None, :], w)
        if np.max(np.abs(res)) <= tol:
            break
        A = a_matrix(T, chart.second(h), r, w)
        try:
            np.linalg.cholesky(A)
            H = A
        except np.linalg.LinAlgError:
            H = a_matrix(T, np.zeros_like(chart.second(h)), r, w)
        step = np.linalg.solve(H, res)
        f0 = phi(h)
        lam = 1.0
        for _ in range(40):
            trial = chart.clamp(h + lam * step)
            if phi(trial) <= f0 + 1e-15 * max(f0, 1.0):
                break
            lam *= 0.5
        h = trial
    else:
        r = uv - chart.values(h)
        res = pair(chart.tangents(h), r[None, :], w)
        if np.max(np.abs(res)) > tol:
            raise OutOfTubeError(f"Fermi projection did not converge (residual {np.max(np.abs(res)):.3g})",
                                 h=h)
    r = uv - chart.values(h)
    A = assemble_A(chart, h, r)
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError(f"Hessian not positive definite at h={h}", h=h) from exc
    res = ortho_residuals(chart, h, r)
    return FermiPair(h, Field(chart.grid, r), res)


def orthogonal_complement(chart: Chart, h, w) -> np.ndarray:
    """Remove the tangent-space component of ``w`` at ``h`` (Gram-Schmidt via the Gram matrix)."""
    wv = _values(w, chart.grid)
    T = chart.tangents(h)
    gram = gram_matrix(T, chart.grid)
    coeff = np.linalg.solve(gram, pair(T, wv[None, :], chart.grid.weights))
    return wv - coeff @ T

"""Spectral Galerkin integration of the full SPDE and of the coupled
``(h, v)`` system, plus the equivalence check between the two.

Both solvers are semi-implicit Euler-Maruyama schemes in Ito form: the
linear part acts diagonally on the Laplacian eigenbasis and is treated
implicitly, everything else (nonlinearity, Ito correction, noise and the
manifold terms of the ``v`` equation) is explicit. The linear symbol must
be even in the wavenumber so that it is diagonal on the real cos/sin basis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .exceptions import DegeneracyError, DivergenceError, OrthogonalityError, OutOfTubeError
from .field import Field, Grid1D, mode_matrix, mode_wavenumbers, pair, _values
from .integrators import DIVERGENCE_LIMIT
from .manifold import Chart, FermiPair, fermi_project, ortho_residuals
from .noise import NoiseIncrement, QWienerSpec, stream
from .reduction import SpdeProblem, reduction_terms

ORTHO_INIT_TOL = 1e-10


class GalerkinBasis:
    """First ``M`` orthonormal Laplacian eigenmodes with the problem's eigenvalues."""

    def __init__(self, problem: SpdeProblem, count: int):
        grid = problem.grid
        if count > grid.n_points // 2:
            raise ValueError(f"at most {grid.n_points // 2} modes on this grid")
        self.grid = grid
        self.matrix = mode_matrix(grid, count)
        self.wavenumbers = mode_wavenumbers(grid, count)
        self.eigenvalues = np.asarray(problem.linear_symbol(self.wavenumbers))
        self._wT = (self.matrix * grid.weights).T

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    def project(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values) @ self._wT

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs) @ self.matrix

    def implicit(self, dt: float) -> np.ndarray:
        return 1.0 / (1.0 - dt * self.eigenvalues)


@dataclass
class GalerkinState:
    """Mode coefficients ``(components, M)`` (one row per field component) at time ``t``."""

    coefficients: np.ndarray
    basis: list
    t: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coefficients)
        if c.ndim == 1:
            c = c[None, :]
        if c.shape[-1] != len(self.basis):
            raise ValueError("one coefficient per basis mode is required")
        grid = self.basis[0].grid
        if len(self.basis) > grid.n_points // 2:
            raise ValueError("at most n_points/2 modes")
        self.coefficients = c

    @classmethod
    def from_fields(cls, fields, basis, t: float = 0.0) -> "GalerkinState":
        fields = [fields] if isinstance(fields, Field) else list(fields)
        mat = np.array([b.values for b in basis])
        w = basis[0].grid.weights
        coeffs = np.array([(f.values * w) @ mat.T for f in fields])
        return cls(coeffs, list(basis), t)

    def field(self, component: int = 0) -> Field:
        mat = np.array([b.values for b in self.basis])
        return Field(self.basis[0].grid, self.coefficients[component] @ mat)


def _guard(u: np.ndarray, step=None):
    with np.errstate(invalid="ignore"):
        if not np.all(np.isfinite(u)) or np.any(np.abs(u) > DIVERGENCE_LIMIT):
            raise DivergenceError("SPDE state left the finite range", step=step)


def _full_step(problem: SpdeProblem, basis: GalerkinBasis, c: np.ndarray, dt: float, dW: np.ndarray):
    u = basis.synthesize(c)
    drift = problem.nonlinear(u)
    if problem.interpretation == "stratonovich":
        drift = drift + problem.stratonovich_correction(u)
    incr = drift * dt + problem.diffusion(u, dW)
    return (c + basis.project(incr)) * basis.implicit(dt)


def step_full_spde(problem: SpdeProblem, state: GalerkinState, dt: float, dW: NoiseIncrement) -> GalerkinState:
    """One semi-implicit Euler-Maruyama step of ``du = L(u) dt + G(u) dW``.

    For Stratonovich problems the K-mode truncated correction
    ``1/2 sum_k alpha_k^2 DG(u)[G(u) e_k] e_k`` is added to the drift.
    """
    basis = GalerkinBasis(problem, len(state.basis))
    c = _full_step(problem, basis, state.coefficients[0], dt, _values(dW.as_field, problem.grid))
    _guard(c)
    coeffs = state.coefficients.copy() if not np.iscomplexobj(c) else state.coefficients.astype(complex)
    coeffs[0] = c
    return GalerkinState(coeffs, state.basis, state.t + dt)


# -- damped wave as a first-order system -------------------------------------

def step_wave_system(state: GalerkinState, dt: float, dW: NoiseIncrement, gamma: float, eps: float,
                     cubic: float = 1.0) -> GalerkinState:
    """``du = w dt, dw = (-gamma w + u_xx - cubic u^3) dt + eps u o dW``.

    Rows of ``state.coefficients`` are ``(u, w)`` on a Dirichlet sine basis.
    The noise enters only the ``w`` equation with a coefficient depending
    on ``u``, so the Stratonovich and Ito forms coincide. The linear
    oscillator is advanced by backward Euler.
    """
    grid = state.basis[0].grid
    mat = np.array([b.values for b in state.basis])
    k = mode_wavenumbers(grid, len(state.basis))
    w_q = grid.weights
    cu, cw = state.coefficients
    u = cu @ mat
    force = ((-cubic * u**3) * dt + eps * u * _values(dW.as_field, grid)) * w_q @ mat.T
    cw_new = (cw - dt * k**2 * cu + force) / (1 + dt * gamma + dt**2 * k**2)
    cu_new = cu + dt * cw_new
    _guard(cu_new)
    return GalerkinState(np.array([cu_new, cw_new]), state.basis, state.t + dt)


def wave_energy(state: GalerkinState) -> float:
    """``1/2 ||w||^2 + 1/2 ||u_x||^2 + 1/4 int u^4``."""
    grid = state.basis[0].grid
    k = mode_wavenumbers(grid, len(state.basis))
    cu, cw = state.coefficients
    u = state.field(0).values
    return float(0.5 * np.sum(cw**2) + 0.5 * np.sum(k**2 * cu**2) + 0.25 * np.sum(grid.weights * u**4))


# -- coupled (h, v) system -----------------------------------------------------

def _coupled_step(problem: SpdeProblem, chart: Chart, basis: GalerkinBasis, h: np.ndarray, c: np.ndarray,
                  dt: float, dW: np.ndarray):
    w = problem.grid.weights
    v = basis.synthesize(c)
    terms = reduction_terms(problem, chart, h, v)
    dh = terms.drift * dt + pair(terms.sigma, dW[..., None, :], w)
    u = terms.base + v
    drift = problem.linear(terms.base) + problem.nonlinear(u)
    if problem.interpretation == "stratonovich":
        drift = drift + problem.stratonovich_correction(u)
    drift = drift - 0.5 * np.einsum("...kl,...klx->...x", terms.pairings, terms.second)
    incr = drift * dt + problem.diffusion(u, dW) - np.einsum("...k,...kx->...x", dh, terms.tangents)
    c_new = (c + basis.project(incr)) * basis.implicit(dt)
    return h + dh, c_new


def step_coupled(problem: SpdeProblem, chart: Chart, pair_: FermiPair, dt: float, dW: NoiseIncrement,
                 modes: Optional[int] = None) -> FermiPair:
    """One step of the coupled system with the same ``dW`` for ``h`` and ``v``.

    ``h`` takes an Ito Euler-Maruyama step of ``dh = b dt + <sigma, dW>``;
    ``v`` takes the matching semi-implicit step of
    ``dv = L(u) dt + G(u) dW - sum_k u_k dh_k - 1/2 sum_kl u_kl S_kl dt``
    in a Galerkin basis of ``modes`` modes. Orthogonality is reported, not
    re-imposed.
    """
    basis = GalerkinBasis(problem, modes or problem.grid.n_points // 3)
    c = basis.project(_values(pair_.v, problem.grid))
    h_new, c_new = _coupled_step(problem, chart, basis, np.asarray(pair_.h, dtype=float), c, dt,
                                 _values(dW.as_field, problem.grid))
    v_new = basis.synthesize(c_new)
    _guard(h_new)
    _guard(v_new)
    return FermiPair(h_new, Field(problem.grid, v_new), ortho_residuals(chart, h_new, v_new))


@dataclass
class CoupledTrajectory:
    times: np.ndarray
    h_path: np.ndarray
    v_snapshots: np.ndarray
    snapshot_times: np.ndarray
    ortho_residual_path: np.ndarray

    @property
    def max_ortho_residual(self) -> float:
        return float(np.max(self.ortho_residual_path))


def _noise_fields(spec: QWienerSpec, gens, dt: float, steps: int) -> np.ndarray:
    """``(steps, paths, N)`` increments; path ``p`` reads its own stream."""
    raw = np.stack([g.standard_normal((steps, spec.count)) for g in gens], axis=1)
    return spec.synthesize(spec.amplitudes * np.sqrt(dt) * raw)


def initial_pair(chart: Chart, u0, h0=None, h_guess=None) -> FermiPair:
    """Fermi pair for ``u0``; with ``h0`` given, orthogonality is checked instead of solved for."""
    uv = _values(u0, chart.grid)
    if h0 is None:
        guess = np.zeros(chart.dim) if h_guess is None else h_guess
        return fermi_project(chart, uv, guess)
    h0 = np.asarray(h0, dtype=float).reshape(chart.dim)
    v0 = uv - chart.values(h0)
    res = ortho_residuals(chart, h0, v0)
    scale = max(1.0, float(np.sqrt(pair(v0, v0, chart.grid.weights))))
    if np.max(np.abs(res)) > ORTHO_INIT_TOL * scale:
        raise OrthogonalityError(f"initial v is not orthogonal to the tangent space (residual {np.max(np.abs(res)):.3g})")
    return FermiPair(h0, Field(chart.grid, v0), res)


def run_coupled(problem: SpdeProblem, chart: Chart, start: FermiPair, T: float, dt: float, seed: int,
                n_paths: int = 1, modes: Optional[int] = None, snapshot_every: Optional[int] = None,
                reproject_every: Optional[int] = None) -> CoupledTrajectory:
    """Integrate the coupled system for ``n_paths`` noise realisations.

    ``ortho_residual_path[i]`` is ``max_{paths, j} |<u_j^h, v>|`` after
    step ``i``. With ``reproject_every`` the state is re-projected onto
    Fermi coordinates every that many steps.
    """
    basis = GalerkinBasis(problem, modes or problem.grid.n_points // 3)
    n_steps = int(round(T / dt))
    snapshot_every = snapshot_every or max(1, n_steps // 20)
    h = np.tile(np.asarray(start.h, dtype=float), (n_paths, 1))
    c = np.tile(basis.project(_values(start.v, problem.grid)), (n_paths, 1))
    gens = [stream(seed, p) for p in range(n_paths)]
    hs = [h.copy()]
    snaps = [basis.synthesize(c)]
    snap_t = [0.0]
    resid = [float(np.max(np.abs(ortho_residuals(chart, h, basis.synthesize(c)))))]
    step = 0
    while step < n_steps:
        chunk = min(500, n_steps - step)
        dW = _noise_fields(problem.noise, gens, dt, chunk)
        for i in range(chunk):
            h, c = _coupled_step(problem, chart, basis, h, c, dt, dW[i])
            step += 1
            v = basis.synthesize(c)
            _guard(h, step)
            _guard(v, step)
            if reproject_every and step % reproject_every == 0:
                for p in range(n_paths):
                    fp = fermi_project(chart, chart.values(h[p]) + v[p], h[p])
                    h[p] = fp.h
                    c[p] = basis.project(fp.v.values)
                v = basis.synthesize(c)
            resid.append(float(np.max(np.abs(ortho_residuals(chart, h, v)))))
            hs.append(h.copy())
            if step % snapshot_every == 0:
                snaps.append(v)
                snap_t.append(step * dt)
    return CoupledTrajectory(np.arange(n_steps + 1) * dt, np.array(hs), np.array(snaps), np.array(snap_t),
                             np.array(resid))


def run_full(problem: SpdeProblem, u0, T: float, dt: float, seed: int, n_paths: int = 1,
             modes: Optional[int] = None, record_every: Optional[int] = None):
    """Integrate the full SPDE for ``n_paths`` realisations; returns ``(times, fields)``."""
    basis = GalerkinBasis(problem, modes or problem.grid.n_points // 3)
    n_steps = int(round(T / dt))
    record_every = record_every or max(1, n_steps // 100)
    c = np.tile(basis.project(_values(u0, problem.grid)), (n_paths, 1))
    gens = [stream(seed, p) for p in range(n_paths)]
    times, fields = [0.0], [basis.synthesize(c)]
    step = 0
    while step < n_steps:
        chunk = min(500, n_steps - step)
        dW = _noise_fields(problem.noise, gens, dt, chunk)
        for i in range(chunk):
            c = _full_step(problem, basis, c, dt, dW[i])
            step += 1
            if step % record_every == 0 or step == n_steps:
                u = basis.synthesize(c)
                _guard(u, step)
                times.append(step * dt)
                fields.append(u)
    return np.array(times), np.array(fields)


# -- equivalence --------------------------------------------------------------

@dataclass
class EquivalenceReport:
    dt: float
    T: float
    n_paths: int
    seed: int
    sup_difference: np.ndarray
    h_full: np.ndarray
    h_coupled: np.ndarray
    max_ortho_residual: float
    tube_exits: list = dc_field(default_factory=list)

    @staticmethod
    def _moments(x):
        x = x[np.isfinite(x)]
        n = len(x)
        mean, var = float(x.mean()), float(x.var(ddof=1))
        m4 = float(np.mean((x - mean) ** 4))
        var_se = float(np.sqrt(max(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n))
        return mean, var, float(np.sqrt(var / n)), var_se

    def summary(self) -> dict:
        mf, vf, sf, vsf = self._moments(self.h_full)
        mc, vc, sc, vsc = self._moments(self.h_coupled)
        se_mean = float(np.hypot(sf, sc))
        se_var = float(np.hypot(vsf, vsc))
        return {
            "mean_full": mf, "mean_coupled": mc, "mean_stderr": se_mean,
            "var_full": vf, "var_coupled": vc, "var_stderr": se_var,
            "mean_agrees": abs(mf - mc) <= 4 * se_mean or abs(mf - mc) <= 1e-12,
            "var_agrees": abs(vf - vc) <= 4 * se_var or abs(vf - vc) <= 1e-12,
            "max_sup_difference": float(np.max(self.sup_difference)),
            "max_ortho_residual": self.max_ortho_residual,
            "n_tube_exits": len(self.tube_exits),
        }

    def to_json(self) -> str:
        payload = {
            "dt": self.dt, "T": self.T, "n_paths": self.n_paths, "seed": self.seed,
            "sup_difference": [float(x) for x in self.sup_difference],
            "summary": self.summary(),
            "tube_exits": self.tube_exits,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def equivalence_check(problem: SpdeProblem, chart: Chart, u0, T: float, dt: float, n_paths: int, seed: int,
                      h0=None, modes: Optional[int] = None) -> EquivalenceReport:
    """Run the full SPDE and the coupled system on identical noise and compare.

    ``sup_difference[p] = max_t ||u_full - (u^h + v)||`` for path ``p``.
    The Fermi coordinate of ``u_full(T)`` is compared with the coupled
    ``h(T)``; projection failures are recorded as tube exits.
    """
    start = initial_pair(chart, u0, h0)
    basis = GalerkinBasis(problem, modes or problem.grid.n_points // 3)
    w = problem.grid.weights
    n_steps = int(round(T / dt))
    u0v = chart.values(start.h) + start.v.values
    c_full = np.tile(basis.project(u0v), (n_paths, 1))
    h = np.tile(np.asarray(start.h, dtype=float), (n_paths, 1))
    c_v = np.tile(basis.project(start.v.values), (n_paths, 1))
    gens = [stream(seed, p) for p in range(n_paths)]
    sup = np.zeros(n_paths)
    max_res = 0.0
    exits = []
    alive = np.ones(n_paths, dtype=bool)
    step = 0
    while step < n_steps:
        chunk = min(500, n_steps - step)
        dW = _noise_fields(problem.noise, gens, dt, chunk)
        for i in range(chunk):
            step += 1
            c_full = _full_step(problem, basis, c_full, dt, dW[i])
            try:
                h, c_v = _coupled_step(problem, chart, basis, h, c_v, dt, dW[i])
            except DegeneracyError as exc:
                exits.append({"time": step * dt, "reason": str(exc)})
                alive[:] = False
                break
            u_full = basis.synthesize(c_full)
            v = basis.synthesize(c_v)
            _guard(u_full, step)
            _guard(v, step)
            diff = u_full - (chart.values(h) + v)
            sup = np.maximum(sup, np.sqrt(np.abs(pair(diff, diff, w))))
            max_res = max(max_res, float(np.max(np.abs(ortho_residuals(chart, h, v)))))
        if not alive.any():
            break
    u_full = basis.synthesize(c_full)
    h_full = np.full(n_paths, np.nan)
    for p in range(n_paths):
        try:
            h_full[p] = fermi_project(chart, u_full[p], h[p]).h[0]
        except (OutOfTubeError, DegeneracyError) as exc:
            exits.append({"path": p, "time": step * dt, "reason": str(exc)})
    return EquivalenceReport(dt, T, n_paths, seed, sup, h_full, h[:, 0].copy(), max_res, exits)

"""Reduced SDE coefficients on an approximate slow manifold.

Given ``du = L(u) dt + G(u) dW`` and a chart ``h -> u^h``, the Fermi
coordinate ``h`` of ``u = u^h + v`` obeys ``dh_j = b_j dt + <sigma_j, dW>``
where ``sigma`` and ``b`` solve linear systems with the matrix
``A_jk = <u_j, u_k> - <u_jk, v>``. All kernels here are batched: ``h`` may
carry leading axes ``(..., n)`` and ``v`` the matching ``(..., N)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .exceptions import DegeneracyError, UnsupportedError
from .field import Field, Grid1D, apply_symbol, pair, _values
from .manifold import Chart, a_matrix
from .noise import QWienerSpec

ArrayFn = Callable[[np.ndarray], np.ndarray]
INTERPRETATIONS = ("ito", "stratonovich")


def multiplicative(eps: float):
    """``G(u) f = eps * u * f`` and its adjoint for the real pairing ``Re <., .>``."""

    def G(u, f):
        return eps * u * f

    def G_adj(u, g):
        return eps * np.real(np.conj(u) * g)

    return G, G_adj


@dataclass(frozen=True)
class SpdeProblem:
    """``du = L(u) dt + G(u) dW`` on a grid, with ``L = linear + nonlinear``.

    ``linear_symbol`` maps wavenumbers to the eigenvalue of the linear part
    on the grid's spectral basis (used implicitly by the Galerkin solver);
    ``nonlinear`` is a pointwise map. ``diffusion(u, f)`` applies ``G(u)`` to
    a noise field and ``diffusion_adjoint(u, g)`` applies ``G(u)*``.
    ``diffusion_is_linear`` declares ``G`` linear in ``u``, which makes the
    Stratonovich-to-Ito correction exact. ``linear_operator`` optionally
    replaces the grid-spectral action of the symbol (the Galerkin solver
    always uses the symbol).
    """

    grid: Grid1D
    linear_symbol: Callable[[np.ndarray], np.ndarray]
    nonlinear: ArrayFn
    diffusion: Callable[[np.ndarray, np.ndarray], np.ndarray]
    diffusion_adjoint: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise: QWienerSpec
    interpretation: str = "stratonovich"
    diffusion_is_linear: bool = True
    complex_valued: bool = False
    name: str = "spde"
    params: dict = dc_field(default_factory=dict)
    linear_operator: Optional[ArrayFn] = None

    def __post_init__(self):
        if self.interpretation not in INTERPRETATIONS:
            raise ValueError(f"interpretation must be one of {INTERPRETATIONS}")
        if self.noise.grid != self.grid:
            raise ValueError("noise modes must live on the problem grid")

    def linear(self, u: np.ndarray) -> np.ndarray:
        if self.linear_operator is not None:
            return self.linear_operator(u)
        return apply_symbol(u, self.grid, self.linear_symbol)

    def L(self, u) -> np.ndarray:
        """The drift operator ``L(u)`` as written (Stratonovich drift if so declared)."""
        u = _values(u, self.grid)
        return self.linear(u) + self.nonlinear(u)

    def stratonovich_correction(self, u: np.ndarray) -> np.ndarray:
        """``1/2 sum_k alpha_k^2 DG(u)[G(u) e_k] e_k``."""
        u = np.asarray(u)
        e = self.noise.mode_array
        a2 = self.noise.amplitudes**2
        Ge = self.diffusion(u[..., None, :], e)
        if self.diffusion_is_linear:
            DG = self.diffusion(Ge, e)
        else:
            step = 1e-6 * (1 + np.max(np.abs(u)))
            DG = (self.diffusion(u[..., None, :] + step * Ge, e)
                  - self.diffusion(u[..., None, :] - step * Ge, e)) / (2 * step)
        return 0.5 * np.einsum("k,...kx->...x", a2, DG)

    def L_ito(self, u) -> np.ndarray:
        """Drift of the equivalent Ito equation."""
        u = _values(u, self.grid)
        out = self.L(u)
        if self.interpretation == "stratonovich":
            out = out + self.stratonovich_correction(u)
        return out

    def G(self, u, f) -> np.ndarray:
        return self.diffusion(_values(u, self.grid), _values(f, self.grid))

    def G_adjoint(self, u, g) -> np.ndarray:
        return self.diffusion_adjoint(_values(u, self.grid), _values(g, self.grid))


def adjoint_defect(problem: SpdeProblem, rng: np.random.Generator, trials: int = 10) -> float:
    """Largest ``|<G(u)f, g> - <f, G(u)* g>|`` over random real ``f`` and ``u``, ``g``."""
    w = problem.grid.weights
    n = problem.grid.n_points
    worst = 0.0
    for _ in range(trials):
        f = rng.standard_normal(n)
        u = rng.standard_normal(n)
        g = rng.standard_normal(n)
        if problem.complex_valued:
            u = u + 1j * rng.standard_normal(n)
            g = g + 1j * rng.standard_normal(n)
        lhs = pair(problem.diffusion(u, f), g, w)
        rhs = pair(f, problem.diffusion_adjoint(u, g), w)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return float(worst)


@dataclass(frozen=True)
class ReductionTerms:
    """All intermediate quantities of one coefficient evaluation (batched)."""

    A: np.ndarray
    sigma: np.ndarray
    pairings: np.ndarray
    F: np.ndarray
    rhs: np.ndarray
    drift: np.ndarray
    tangents: np.ndarray
    second: np.ndarray
    base: np.ndarray

    def noise_loadings(self, noise: QWienerSpec) -> np.ndarray:
        """``D_jk = alpha_k <sigma_j, e_k>`` so that ``<sigma_j, dW> = sum_k D_jk dB_k``."""
        return noise.coefficients(self.sigma) * noise.amplitudes


def _solve(A: np.ndarray, rhs: np.ndarray, h=None) -> np.ndarray:
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("A-matrix is singular", h=h) from exc


def reduction_terms(problem: SpdeProblem, chart: Chart, h, v=None, calculus: str = "ito") -> ReductionTerms:
    """Evaluate ``A``, ``sigma``, ``<sigma_k, Q sigma_l>``, ``F`` and ``b`` at ``(h, v)``.

    With ``calculus="ito"`` the drift carries every Ito correction; with
    ``calculus="stratonovich"`` the same balance is taken under the
    classical chain rule, so only ``<u_j, L(u)>`` remains on the right.
    """
    if calculus not in INTERPRETATIONS:
        raise ValueError(f"calculus must be one of {INTERPRETATIONS}")
    w = problem.grid.weights
    h = chart._h(h)
    base = chart.values(h)
    if v is None:
        v = np.zeros_like(base)
    v = _values(v, problem.grid)
    v = np.broadcast_to(v, np.broadcast_shapes(v.shape, base.shape))
    T = chart.tangents(h)
    U2 = chart.second(h)
    u = base + v
    A = a_matrix(T, U2, v, w)
    gstar = problem.diffusion_adjoint(u[..., None, :], T)
    sigma = _solve(A, gstar, h)
    c = problem.noise.coefficients(sigma)
    S = np.einsum("...kq,q,...lq->...kl", c, problem.noise.amplitudes**2, c)

    if calculus == "stratonovich":
        n = chart.dim
        zeros = np.zeros(S.shape[:-2] + (n,))
        rhs = pair(T, problem.L(u)[..., None, :], w)
        return ReductionTerms(A, sigma, S, zeros, rhs, _solve(A, rhs[..., None], h)[..., 0],
                              T, U2, base)

    U3 = chart.third(h)
    # F_j = sum_k <G(u)* u_jk, Q sigma_k> - sum_kl <u_jk, u_l> S_kl
    g2 = problem.diffusion_adjoint(u[..., None, None, :], U2)
    c2 = problem.noise.coefficients(g2)
    term1 = np.einsum("...jkq,q,...kq->...j", c2, problem.noise.amplitudes**2, c)
    curv_tan = pair(U2[..., :, :, None, :], T[..., None, None, :, :], w)
    term2 = np.einsum("...jkl,...kl->...j", curv_tan, S)
    F = term1 - term2

    Lu = problem.L_ito(u)
    proj = pair(T, Lu[..., None, :], w)
    third_v = pair(U3, v[..., None, None, None, :], w)
    tan_curv = pair(T[..., :, None, None, :], U2[..., None, :, :, :], w)
    ito = 0.5 * np.einsum("...jkl,...kl->...j", third_v - tan_curv, S)
    rhs = proj + ito + F
    b = _solve(A, rhs[..., None], h)[..., 0]
    return ReductionTerms(A, sigma, S, F, rhs, b, T, U2, base)


# -- single-point public API ------------------------------------------------

def compute_sigma(problem: SpdeProblem, chart: Chart, h, v) -> list[Field]:
    """Diffusion rows ``sigma_j`` solving ``sum_k A_jk sigma_k = G(u^h+v)* u_j^h``."""
    terms = reduction_terms(problem, chart, h, v, calculus="stratonovich")
    return [Field(problem.grid, row) for row in terms.sigma]


def compute_F(problem: SpdeProblem, chart: Chart, h, v, sigma=None) -> np.ndarray:
    """The Ito cross-variation term ``F_j(u^h, v)``.

    ``sigma`` defaults to the rows computed at the same ``(h, v)``.
    """
    terms = reduction_terms(problem, chart, h, v)
    if sigma is None:
        return terms.F
    sig = np.array([_values(s, problem.grid) for s in sigma])
    return _F_from_sigma(problem, chart, h, v, sig)


def _F_from_sigma(problem, chart, h, v, sig):
    w = problem.grid.weights
    h = chart._h(h)
    u = chart.values(h) + _values(v, problem.grid)
    U2 = chart.second(h)
    T = chart.tangents(h)
    S = problem.noise.pairing(sig[:, None, :], sig[None, :, :])
    qs = problem.noise.coefficients(sig) * problem.noise.amplitudes**2
    g2 = problem.diffusion_adjoint(u[None, None, :], U2)
    term1 = np.einsum("jkq,kq->j", problem.noise.coefficients(g2), qs)
    curv_tan = pair(U2[:, :, None, :], T[None, None, :, :], w)
    return term1 - np.einsum("jkl,kl->j", curv_tan, S)


def compute_drift(problem: SpdeProblem, chart: Chart, h, v, sigma=None, calculus: str = "ito") -> np.ndarray:
    """Drift ``b`` solving ``A b = rhs`` (see :func:`reduction_terms`)."""
    if sigma is not None:
        terms = reduction_terms(problem, chart, h, v, calculus=calculus)
        given = np.array([_values(s, problem.grid) for s in sigma])
        if not np.allclose(given, terms.sigma, rtol=1e-10, atol=1e-14):
            raise ValueError("sigma was not computed at the same (h, v)")
        return terms.drift
    return reduction_terms(problem, chart, h, v, calculus=calculus).drift


# -- reduced SDEs ------------------------------------------------------------

@dataclass(frozen=True)
class ScalarForm:
    """Closed-form scalar SDE ``dh = b(h) dt + s(h) dB``; ``ds`` optional."""

    b: Callable[[np.ndarray], np.ndarray]
    s: Callable[[np.ndarray], np.ndarray]
    ds: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def slope(self, h):
        if self.ds is not None:
            return self.ds(h)
        h = np.asarray(h, dtype=float)
        step = 1e-5 * (1 + np.abs(h))
        return (self.s(h + step) - self.s(h - step)) / (2 * step)


@dataclass(frozen=True)
class ReducedSDE:
    """Finite-dimensional SDE ``dh = b(h) dt + D(h) dB`` with ``D`` of shape ``(n, m)``.

    ``drift`` maps ``(..., n) -> (..., n)`` and ``diffusion`` maps
    ``(..., n) -> (..., n, m)``.
    """

    dim: int
    noise_dim: int
    drift: ArrayFn
    diffusion: ArrayFn
    interpretation: str
    scalar_form: Optional[ScalarForm] = None
    name: str = "sde"
    diffusion_rows: Optional[Callable[[np.ndarray], np.ndarray]] = None
    noise: Optional[QWienerSpec] = None

    def __post_init__(self):
        if self.interpretation not in INTERPRETATIONS:
            raise ValueError(f"interpretation must be one of {INTERPRETATIONS}")

    @classmethod
    def from_scalar(cls, b, s, interpretation: str, ds=None, name: str = "sde") -> "ReducedSDE":
        form = ScalarForm(b, s, ds)
        return cls(
            dim=1,
            noise_dim=1,
            drift=lambda h: np.asarray(b(h[..., 0]), dtype=float)[..., None] + 0 * h,
            diffusion=lambda h: (np.asarray(s(h[..., 0]), dtype=float) + 0 * h[..., 0])[..., None, None],
            interpretation=interpretation,
            scalar_form=form,
            name=name,
        )


def strat_to_ito(sde: ReducedSDE) -> ReducedSDE:
    """Ito form of a scalar Stratonovich SDE: drift ``b + s s' / 2``."""
    if sde.interpretation != "stratonovich":
        raise ValueError("SDE is already in Ito form")
    if sde.scalar_form is None or sde.dim != 1:
        raise UnsupportedError("conversion needs a registered scalar form (n = 1)")
    form = sde.scalar_form

    def b_ito(h):
        return form.b(h) + 0.5 * form.s(h) * form.slope(h)

    return ReducedSDE.from_scalar(b_ito, form.s, "ito", ds=form.ds, name=sde.name)


def pipeline_sde(problem: SpdeProblem, chart: Chart, calculus: str = "ito", name: str | None = None) -> ReducedSDE:
    """Reduced SDE obtained by evaluating the full coefficient pipeline at ``v = 0``.

    The noise of the result is ``B_k`` of the problem's Q-Wiener process, so
    ``noise_dim`` equals the number of noise modes.
    """

    def drift(h):
        return reduction_terms(problem, chart, h, calculus=calculus).drift

    def diffusion(h):
        return reduction_terms(problem, chart, h, calculus=calculus).noise_loadings(problem.noise)

    def rows(h):
        return reduction_terms(problem, chart, h, calculus=calculus).sigma

    return ReducedSDE(chart.dim, problem.noise.count, drift, diffusion, calculus,
                      name=name or f"{problem.name}-pipeline", diffusion_rows=rows, noise=problem.noise)


def scalar_coefficients(problem: SpdeProblem, chart: Chart, h, calculus: str = "ito"):
    """Pipeline drift and signed scalar diffusion at ``v = 0`` for 1-D charts.

    For rank-one noise the diffusion keeps its sign (``alpha <sigma, e>``);
    otherwise the magnitude ``sqrt(<sigma, Q sigma>)`` is returned.
    """
    h = np.asarray(h, dtype=float)
    terms = reduction_terms(problem, chart, h[..., None], calculus=calculus)
    if problem.noise.count == 1:
        s = terms.noise_loadings(problem.noise)[..., 0, 0]
    else:
        s = np.sqrt(terms.pairings[..., 0, 0])
    return terms.drift[..., 0], s

"""Ready-made presets: damped wave, Allen-Cahn front, NLS soliton and
Swift-Hohenberg stripes.

Each preset bundles a grid, a chart, the SPDE problem used for the
coefficient pipeline and the full/coupled solvers, and the closed-form
scalar SDE for the interface coordinate. Simulation defaults (initial
condition, horizon, time step) follow the published figure settings and
are listed in :data:`PROVENANCE`.

Conventions shared by all presets:

* Noise defaults to the spatially homogeneous process ``W(t, x) = B(t)``,
  the structure under which the projected diffusions reduce to the closed
  forms (e.g. ``sigma(h) = eps <psi_h, u^h> / ||psi_h||^2`` for the front).
  ``noise="white"`` switches to a K-mode truncation of space-time white noise.
* Charts are ``h * mode``; the closed-form cubic coefficients (``3/gamma``
  and ``3``) correspond to the amplitude convention ``u = 2 h * mode``, so
  the SPDE cubic term is scaled by ``cubic_scale = 4`` to keep the two
  consistent. Pass ``cubic_scale=1`` for the unscaled equation.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .field import Grid1D, inner_product, neumann_laplacian
from .manifold import Chart
from .noise import DEFAULT_NOISE_MODES, QWienerSpec
from .reduction import ReducedSDE, SpdeProblem, multiplicative, pipeline_sde, strat_to_ito

SQRT2 = np.sqrt(2.0)

PROVENANCE = {
    "damped_wave": {
        "figure": "Fig. 1",
        "params": {"gamma": 10.0, "eps": 0.5},
        "defaults": {"h0": 0.1, "T": 50.0, "dt": 0.01},
        "derived": {"a": "pi^2/gamma", "b": "3/gamma"},
    },
    "allen_cahn": {
        "figure": "Fig. 2",
        "params": {"L": 20.0, "eps": 0.1},
        "defaults": {"h0": "L/2", "T": 10000.0, "dt": 0.1},
    },
    "nls_soliton": {
        "figure": "Fig. 3",
        "params": {"eps": 0.1},
        "defaults": {"h0": 0.0, "T": 1000.0, "dt": 0.1},
    },
    "swift_hohenberg": {
        "figure": "Fig. 4",
        "params": {"delta": 0.1, "eps": 0.05},
        "defaults": {"h0": "sqrt(delta/3)", "T": 1000.0, "dt": 0.1},
        "derived": {"h_star": "sqrt((delta+eps^2/2)/3)"},
    },
}


@dataclass
class ModelPreset:
    name: str
    params: dict
    defaults: dict
    chart: Chart
    problem: SpdeProblem
    stratonovich: Optional[ReducedSDE]
    reduced: ReducedSDE
    derived: dict = dc_field(default_factory=dict)
    figure: str = ""
    galerkin_modes: int = 16
    initial_field: Optional[Callable[[float], np.ndarray]] = None

    def pipeline(self, calculus: str = "ito") -> ReducedSDE:
        """Reduced SDE from the coefficient pipeline at ``v = 0``."""
        return pipeline_sde(self.problem, self.chart, calculus=calculus, name=f"{self.name}-pipeline")


def _noise(grid: Grid1D, kind: str, modes: int) -> QWienerSpec:
    if kind == "homogeneous":
        return QWienerSpec.homogeneous(grid)
    if kind == "white":
        return QWienerSpec.white(grid, modes)
    raise ValueError(f"unknown noise kind {kind!r}")


def _check_positive(**kw):
    for key, val in kw.items():
        if not val > 0:
            raise ValueError(f"{key} must be positive, got {val}")


def _affine_chart(grid: Grid1D, mode: np.ndarray, name: str, domain=None) -> Chart:
    def values(h):
        return h[..., :1] * mode

    def d1(h):
        return np.broadcast_to(mode, h.shape[:-1] + (1, mode.size)).copy()

    def d2(h):
        return np.zeros(h.shape[:-1] + (1, 1, mode.size))

    def d3(h):
        return np.zeros(h.shape[:-1] + (1, 1, 1, mode.size))

    return Chart(grid, 1, values, d1, d2, d3, domain=domain, name=name)


def damped_wave(gamma: float = 10.0, eps: float = 0.5, n_points: int = 65, noise: str = "homogeneous",
                noise_modes: int = DEFAULT_NOISE_MODES, cubic_scale: float = 4.0) -> ModelPreset:
    """Damped wave equation near ``u^h = h sin(pi x)`` on Dirichlet ``[0, 1]``.

    The reduction acts on the overdamped first-order equation
    ``du = gamma^-1 (u_xx - cubic_scale u^3) dt + eps u o dW``; the
    second-order ``(u, w)`` system is available through
    :func:`spde_reduce.spde.step_wave_system`.
    """
    _check_positive(gamma=gamma)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    grid = Grid1D(0.0, 1.0, n_points, "dirichlet")
    mode = np.sin(np.pi * grid.x)
    chart = _affine_chart(grid, mode, "damped_wave")
    G, Gs = multiplicative(eps)
    problem = SpdeProblem(
        grid=grid,
        linear_symbol=lambda k: -k**2 / gamma,
        nonlinear=lambda u: -(cubic_scale / gamma) * u**3,
        diffusion=G,
        diffusion_adjoint=Gs,
        noise=_noise(grid, noise, noise_modes),
        interpretation="stratonovich",
        name="damped_wave",
        params={"gamma": gamma, "eps": eps, "cubic_scale": cubic_scale},
    )
    a, b = np.pi**2 / gamma, 3.0 / gamma
    strat = ReducedSDE.from_scalar(lambda h: -a * h - b * h**3, lambda h: eps * h, "stratonovich",
                                   ds=lambda h: eps + 0 * h, name="damped_wave")
    return ModelPreset(
        name="damped_wave",
        params={"gamma": gamma, "eps": eps},
        defaults={"h0": 0.1, "T": 50.0, "dt": 0.01},
        chart=chart,
        problem=problem,
        stratonovich=strat,
        reduced=strat_to_ito(strat),
        derived={"a": a, "b": b},
        figure="Fig. 1",
        galerkin_modes=n_points // 2 - 1,
        initial_field=lambda h0: h0 * mode,
    )


def _kink_parts(L: float):
    def z(x, h):
        return (x - h) / SQRT2

    def norm_sq(h):
        def prim(y):
            t = np.tanh(y)
            return t - t**3 / 3

        return (SQRT2 / 2) * (prim((L - h) / SQRT2) - prim(-h / SQRT2))

    return z, norm_sq


def kink_norm_sq(h, L: float):
    """``||psi_h||^2`` on ``[0, L]`` in closed form."""
    return _kink_parts(L)[1](np.asarray(h, dtype=float))


def kink_drift(h, L: float):
    """Projection of the Neumann Allen-Cahn operator on the Goldstone mode.

    The kink solves ``u'' + u - u^3 = 0`` in the interior, so only the
    boundary fluxes survive: ``b = (u_x(L)^2 - u_x(0)^2) / ||psi||^2``.
    """
    h = np.asarray(h, dtype=float)
    sech = lambda y: 1 / np.cosh(y)
    return 0.5 * (sech((L - h) / SQRT2) ** 4 - sech(h / SQRT2) ** 4) / kink_norm_sq(h, L)


def kink_diffusion(h, L: float, eps: float):
    """``eps <psi_h, u^h> / ||psi_h||^2`` with the integral in closed form."""
    h = np.asarray(h, dtype=float)
    sech = lambda y: 1 / np.cosh(y)
    integral = 0.5 * (sech((L - h) / SQRT2) ** 2 - sech(h / SQRT2) ** 2)
    return eps * integral / kink_norm_sq(h, L)


def kink_diffusion_slope(h, L: float, eps: float):
    """``d sigma / dh`` for :func:`kink_diffusion`, by the quotient rule."""
    h = np.asarray(h, dtype=float)
    a, c = (L - h) / SQRT2, h / SQRT2
    sa, sc = 1 / np.cosh(a) ** 2, 1 / np.cosh(c) ** 2
    integral = 0.5 * (sa - sc)
    d_integral = (sa * np.tanh(a) + sc * np.tanh(c)) / SQRT2
    norm = kink_norm_sq(h, L)
    d_norm = 0.5 * (sc**2 - sa**2)
    return eps * (d_integral * norm - integral * d_norm) / norm**2


def allen_cahn(L: float = 20.0, eps: float = 0.1, n_points: int = 801, noise: str = "homogeneous",
               noise_modes: int = DEFAULT_NOISE_MODES, diffusion_source: str = "closed-form") -> ModelPreset:
    """Allen-Cahn front ``u^h = tanh((x - h)/sqrt 2)`` on Neumann ``[0, L]``.

    The closed-form diffusion vanishes at ``h = L/2`` because ``psi_h u^h``
    is odd about the front. ``diffusion_source="pipeline"`` replaces the
    reduced SDE by the generic coefficient pipeline at ``v = 0`` (useful
    with ``noise="white"``, where the diffusion does not vanish).
    """
    if diffusion_source not in ("closed-form", "pipeline"):
        raise ValueError("diffusion_source must be 'closed-form' or 'pipeline'")
    if L < 10:
        raise ValueError("L must be at least 10 so the front is separated from the walls")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    grid = Grid1D(0.0, L, n_points, "neumann")
    x = grid.x

    def values(h):
        return np.tanh((x - h[..., :1]) / SQRT2)

    def d1(h):
        z = (x - h[..., :1]) / SQRT2
        return (-(1 / SQRT2) / np.cosh(z) ** 2)[..., None, :]

    def d2(h):
        z = (x - h[..., :1]) / SQRT2
        return (-np.tanh(z) / np.cosh(z) ** 2)[..., None, None, :]

    def d3(h):
        z = (x - h[..., :1]) / SQRT2
        s2 = 1 / np.cosh(z) ** 2
        return ((s2**2 - 2 * s2 * np.tanh(z) ** 2) / SQRT2)[..., None, None, None, :]

    chart = Chart(grid, 1, values, d1, d2, d3, domain=([0.0], [L]), name="allen_cahn")
    G, Gs = multiplicative(eps)
    problem = SpdeProblem(
        grid=grid,
        linear_symbol=lambda k: 1.0 - k**2,
        linear_operator=lambda u: u + neumann_laplacian(u, grid),
        nonlinear=lambda u: -(u**3),
        diffusion=G,
        diffusion_adjoint=Gs,
        noise=_noise(grid, noise, noise_modes),
        interpretation="stratonovich",
        name="allen_cahn",
        params={"L": L, "eps": eps},
    )
    strat = ReducedSDE.from_scalar(lambda h: kink_drift(h, L), lambda h: kink_diffusion(h, L, eps),
                                   "stratonovich", ds=lambda h: kink_diffusion_slope(h, L, eps),
                                   name="allen_cahn")
    h_mid = L / 2
    reduced = strat_to_ito(strat)
    if diffusion_source == "pipeline":
        strat = pipeline_sde(problem, chart, calculus="stratonovich", name="allen_cahn-pipeline")
        reduced = pipeline_sde(problem, chart, calculus="ito", name="allen_cahn-pipeline")
    return ModelPreset(
        name="allen_cahn",
        params={"L": L, "eps": eps},
        defaults={"h0": h_mid, "T": 1.0e4, "dt": 0.1},
        chart=chart,
        problem=problem,
        stratonovich=strat,
        reduced=reduced,
        derived={
            "drift_scale": float(np.exp(-SQRT2 * L)),
            "psi_norm_sq": float(kink_norm_sq(h_mid, L)),
            "sigma_mid": float(kink_diffusion(h_mid, L, eps)),
        },
        figure="Fig. 2",
        galerkin_modes=min(n_points // 3, 200),
        initial_field=lambda h0: np.tanh((x - h0) / SQRT2),
    )


def soliton_profile(x):
    return SQRT2 / np.cosh(x)


def nls_soliton(eps: float = 0.1, half_width: float = 20.0, n_points: int = 512, phase: float = 0.0,
                noise: str = "homogeneous", noise_modes: int = DEFAULT_NOISE_MODES) -> ModelPreset:
    """NLS soliton ``eta(x - h) e^{i phi}`` with ``eta = sqrt 2 sech`` and frozen phase.

    The closed-form reduced SDE is registered as given (Ito drift
    ``eps^2 <psi, psi> / 2``, diffusion ``eps sqrt(<psi, psi>)``) and is not
    derived from the coefficient pipeline.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    grid = Grid1D(-half_width, half_width, n_points, "periodic")
    x = grid.x
    rot = np.exp(1j * phase)

    def parts(h):
        y = x - h[..., :1]
        s = 1 / np.cosh(y)
        t = np.tanh(y)
        return s, t

    def values(h):
        s, _ = parts(h)
        return SQRT2 * s * rot

    def d1(h):
        s, t = parts(h)
        return (SQRT2 * s * t * rot)[..., None, :]  # -eta'(x - h)

    def d2(h):
        s, t = parts(h)
        return (SQRT2 * s * (t**2 - s**2) * rot)[..., None, None, :]  # eta''(x - h)

    def d3(h):
        s, t = parts(h)
        return (SQRT2 * (s * t**3 - 5 * s**3 * t) * rot)[..., None, None, None, :]  # -eta'''(x - h)

    chart = Chart(grid, 1, values, d1, d2, d3, domain=([-half_width / 2], [half_width / 2]),
                  name="nls_soliton")
    G, Gs = multiplicative(eps)
    problem = SpdeProblem(
        grid=grid,
        linear_symbol=lambda k: -1j * k**2,
        nonlinear=lambda u: 1j * np.abs(u) ** 2 * u,
        diffusion=G,
        diffusion_adjoint=Gs,
        noise=_noise(grid, noise, noise_modes),
        interpretation="stratonovich",
        complex_valued=True,
        name="nls_soliton",
        params={"eps": eps},
    )
    psi_sq = inner_product(chart.d1(0.0, 0), chart.d1(0.0, 0))
    c = 4.0 / 3.0
    strat = ReducedSDE.from_scalar(lambda h: 0 * h, lambda h: eps * np.sqrt(c) + 0 * h, "stratonovich",
                                   ds=lambda h: 0 * h, name="nls_soliton")
    ito = ReducedSDE.from_scalar(lambda h: 0.5 * eps**2 * c + 0 * h, lambda h: eps * np.sqrt(c) + 0 * h,
                                 "ito", ds=lambda h: 0 * h, name="nls_soliton")
    return ModelPreset(
        name="nls_soliton",
        params={"eps": eps},
        defaults={"h0": 0.0, "T": 1.0e3, "dt": 0.1},
        chart=chart,
        problem=problem,
        stratonovich=strat,
        reduced=ito,
        derived={"psi_norm_sq": psi_sq, "psi_norm_sq_exact": c},
        figure="Fig. 3",
        galerkin_modes=n_points // 3,
        initial_field=lambda h0: SQRT2 / np.cosh(x - h0) * rot,
    )


def swift_hohenberg_chart(grid: Grid1D, phase: float | None = 0.0) -> Chart:
    """Stripe chart ``h cos(x - phi)``.

    With ``phase`` given the chart is one-dimensional (frozen phase); with
    ``phase=None`` it is the two-parameter chart ``(h, phi)``.
    """
    x = grid.x
    if phase is not None:
        return _affine_chart(grid, np.cos(x - phase), "swift_hohenberg")

    def split(p):
        return p[..., :1], x - p[..., 1:2]

    def values(p):
        h, y = split(p)
        return h * np.cos(y)

    def d1(p):
        h, y = split(p)
        return np.stack([np.cos(y) + 0 * h, h * np.sin(y)], axis=-2)

    def d2(p):
        h, y = split(p)
        hh = np.zeros_like(y + h)
        hp = np.sin(y) + 0 * h
        pp = -h * np.cos(y)
        return np.stack([np.stack([hh, hp], -2), np.stack([hp, pp], -2)], -3)

    def d3(p):
        h, y = split(p)
        z = np.zeros_like(y + h)
        hpp = -np.cos(y) + 0 * h
        ppp = -h * np.sin(y)
        blocks = {(0, 0, 0): z, (0, 0, 1): z, (0, 1, 1): hpp, (1, 1, 1): ppp}
        out = np.empty(z.shape[:-1] + (2, 2, 2, z.shape[-1]))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    out[..., i, j, k, :] = blocks[tuple(sorted((i, j, k)))]
        return out

    return Chart(grid, 2, values, d1, d2, d3, name="swift_hohenberg_2d")


def sh_equilibrium(delta: float, eps: float) -> float:
    return float(np.sqrt((delta + eps**2 / 2) / 3))


def swift_hohenberg(delta: float = 0.1, eps: float = 0.05, periods: int = 1, n_points: int = 64,
                    phase: float = 0.0, noise: str = "homogeneous",
                    noise_modes: int = DEFAULT_NOISE_MODES, cubic_scale: float = 4.0) -> ModelPreset:
    """Swift-Hohenberg stripes ``h cos(x - phi)`` on a periodic domain of ``periods`` wavelengths."""
    _check_positive(delta=delta)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    grid = Grid1D(0.0, 2 * np.pi * periods, n_points, "periodic")
    chart = swift_hohenberg_chart(grid, phase)
    G, Gs = multiplicative(eps)
    problem = SpdeProblem(
        grid=grid,
        linear_symbol=lambda k: delta - (1 - k**2) ** 2,
        nonlinear=lambda u: -cubic_scale * u**3,
        diffusion=G,
        diffusion_adjoint=Gs,
        noise=_noise(grid, noise, noise_modes),
        interpretation="stratonovich",
        name="swift_hohenberg",
        params={"delta": delta, "eps": eps, "cubic_scale": cubic_scale},
    )
    strat = ReducedSDE.from_scalar(lambda h: delta * h - 3 * h**3, lambda h: eps * h, "stratonovich",
                                   ds=lambda h: eps + 0 * h, name="swift_hohenberg")
    ito = strat_to_ito(strat)
    h_star = sh_equilibrium(delta, eps)
    cos_mode = np.cos(grid.x - phase)
    return ModelPreset(
        name="swift_hohenberg",
        params={"delta": delta, "eps": eps},
        defaults={"h0": float(np.sqrt(delta / 3)), "T": 1.0e3, "dt": 0.1},
        chart=chart,
        problem=problem,
        stratonovich=strat,
        reduced=ito,
        derived={
            "h_star": h_star,
            "stability_rate": 2 * delta,
            "linearized_rate": 2 * (delta + eps**2 / 2),
        },
        figure="Fig. 4",
        galerkin_modes=n_points // 3,
        initial_field=lambda h0: h0 * cos_mode,
    )


PRESETS = {
    "damped_wave": damped_wave,
    "allen_cahn": allen_cahn,
    "nls_soliton": nls_soliton,
    "swift_hohenberg": swift_hohenberg,
}

PARAM_ALIASES = {"γ": "gamma", "ε": "eps", "δ": "delta"}


def get_preset(name: str, **overrides) -> ModelPreset:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**overrides)


def linearized_rate(sde: ReducedSDE, h: float, step: float = 1e-6) -> float:
    """``-b'(h)`` of a scalar SDE drift by central differences."""
    hp = np.array([[h + step]])
    hm = np.array([[h - step]])
    return float(-(sde.drift(hp) - sde.drift(hm))[0, 0] / (2 * step))

"""Q-Wiener noise: spectral sampling, the covariance operator, and a Monte
Carlo check of the quadratic-covariation rule ``<f,dW><g,dW> = <f,Qg> dt``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .field import Field, Grid1D, gram_matrix, mode_matrix, pair, _values

DEFAULT_NOISE_MODES = 32


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, index)``.

    Streams for different indices are independent and do not depend on the
    order in which they are created, so ensembles are reproducible no matter
    how paths are scheduled.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


class QWienerSpec:
    """``W(t) = sum_k alpha_k B_k(t) e_k`` with ``K`` orthonormal modes ``e_k``."""

    def __init__(self, modes: Sequence[Field] | np.ndarray, amplitudes, grid: Grid1D | None = None,
                 ortho_tol: float = 1e-8):
        if isinstance(modes, np.ndarray):
            if grid is None:
                raise ValueError("grid is required when modes are given as an array")
            mat = np.array(modes, dtype=float, ndmin=2)
        else:
            modes = list(modes)
            grid = modes[0].grid
            mat = np.array([_values(m, grid) for m in modes], dtype=float)
        amps = np.asarray(amplitudes, dtype=float).reshape(-1)
        if amps.shape[0] != mat.shape[0]:
            raise ValueError("need one amplitude per mode")
        if not np.all(np.isfinite(amps)) or np.any(amps < 0):
            raise ValueError("amplitudes must be finite and nonnegative")
        gram = gram_matrix(mat, grid)
        if np.max(np.abs(gram - np.eye(len(amps)))) > ortho_tol:
            raise ValueError("noise modes are not orthonormal")
        mat.setflags(write=False)
        amps.setflags(write=False)
        self.grid = grid
        self.mode_array = mat
        self.amplitudes = amps

    @classmethod
    def white(cls, grid: Grid1D, count: int = DEFAULT_NOISE_MODES, amplitude: float = 1.0) -> "QWienerSpec":
        """K-mode truncation of space-time white noise (``alpha_k = amplitude``)."""
        return cls(mode_matrix(grid, count), np.full(count, amplitude), grid=grid)

    @classmethod
    def homogeneous(cls, grid: Grid1D) -> "QWienerSpec":
        """Spatially constant noise ``W(t, x) = B(t)``: one constant mode with ``alpha = sqrt(L)``."""
        mode = np.full((1, grid.n_points), 1 / np.sqrt(grid.length))
        return cls(mode, [np.sqrt(grid.length)], grid=grid)

    @property
    def count(self) -> int:
        return self.mode_array.shape[0]

    @property
    def modes(self) -> list[Field]:
        return [Field(self.grid, row) for row in self.mode_array]

    def coefficients(self, f) -> np.ndarray:
        """``<f, e_k>`` along the last axis; batched input allowed."""
        f = _values(f, self.grid)
        return pair(f[..., None, :], self.mode_array, self.grid.weights)

    def pairing(self, f, g) -> np.ndarray:
        """``<f, Q g>`` with batching over leading axes."""
        return np.sum(self.amplitudes**2 * self.coefficients(f) * self.coefficients(g), axis=-1)

    def draw(self, rng: np.random.Generator, dt: float, size=()) -> np.ndarray:
        """Raw increments ``alpha_k dB_k`` of shape ``size + (K,)``."""
        size = (size,) if np.isscalar(size) else tuple(size)
        return self.amplitudes * np.sqrt(dt) * rng.standard_normal(size + (self.count,))

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Field values ``sum_k c_k e_k`` for coefficient arrays ``(..., K)``."""
        return np.asarray(coeffs) @ self.mode_array

    def trace_density(self) -> np.ndarray:
        """Pointwise ``sum_k alpha_k^2 e_k(x)^2`` (enters the Stratonovich correction)."""
        return np.sum(self.amplitudes[:, None] ** 2 * self.mode_array**2, axis=0)


@dataclass(frozen=True)
class NoiseIncrement:
    dt: float
    coefficients: np.ndarray
    as_field: Field


def sample_increment(spec: QWienerSpec, dt: float, rng: np.random.Generator) -> NoiseIncrement:
    """One increment ``dW = sum_k alpha_k dB_k e_k`` with ``dB_k ~ N(0, dt)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    coeffs = spec.draw(rng, dt)
    return NoiseIncrement(dt, coeffs, Field(spec.grid, spec.synthesize(coeffs)))


def apply_Q(spec: QWienerSpec, f: Field) -> Field:
    """``Q f = sum_k alpha_k^2 <e_k, f> e_k``."""
    vals = _values(f, spec.grid)
    if np.iscomplexobj(vals):
        re = spec.synthesize(spec.amplitudes**2 * spec.coefficients(vals.real))
        im = spec.synthesize(spec.amplitudes**2 * spec.coefficients(vals.imag))
        return Field(spec.grid, re + 1j * im)
    return Field(spec.grid, spec.synthesize(spec.amplitudes**2 * spec.coefficients(vals)))


@dataclass(frozen=True)
class CovarianceReport:
    empirical: float
    exact: float
    stderr: float

    @property
    def z_score(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.empirical == self.exact else np.inf
        return abs(self.empirical - self.exact) / self.stderr


def covariance_check(spec: QWienerSpec, f: Field, g: Field, dt: float, n_samples: int,
                     seed: int, batch: int = 20_000) -> CovarianceReport:
    """Monte Carlo estimate of ``E[<f,dW><g,dW>] / dt`` against ``<f, Q g>``.

    Increments are synthesised on the grid and paired by quadrature, so the
    check exercises the same path a simulation uses.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    fv, gv = _values(f, spec.grid), _values(g, spec.grid)
    wf = spec.grid.weights * fv
    wg = spec.grid.weights * gv
    rng = stream(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        dW = spec.synthesize(spec.draw(rng, dt, m))
        prod = np.real(dW @ np.conj(wf)) * np.real(dW @ np.conj(wg)) / dt
        total += prod.sum()
        total_sq += (prod**2).sum()
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean**2, 0.0)
    stderr = float(np.sqrt(var * n_samples / (n_samples - 1) / n_samples))
    exact = float(spec.pairing(fv, gv))
    return CovarianceReport(float(mean), exact, stderr)

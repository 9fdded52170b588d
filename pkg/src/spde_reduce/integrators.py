"""Time stepping and ensemble statistics for finite-dimensional SDEs.

Paths are simulated in blocks, vectorised across the paths of a block.
Every path draws its Brownian increments from its own counter-based stream
(:func:`spde_reduce.noise.stream`), so results do not depend on the block
size and blocks are merged in path-index order.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .exceptions import DivergenceError
from .noise import stream
from .reduction import ReducedSDE

DIVERGENCE_LIMIT = 1e6
SCHEMES = {"ito": "euler-maruyama", "stratonovich": "heun"}


def _apply(diff: np.ndarray, dB: np.ndarray) -> np.ndarray:
    return np.einsum("...nm,...m->...n", diff, dB)


def _em(drift, diffusion, x, dt, dB):
    return x + drift(x) * dt + _apply(diffusion(x), dB)


def _heun(drift, diffusion, x, dt, dB):
    b0 = drift(x)
    s0 = diffusion(x)
    pred = x + b0 * dt + _apply(s0, dB)
    return x + b0 * dt + 0.5 * _apply(s0 + diffusion(pred), dB)


def _heun_trapezoidal(drift, diffusion, x, dt, dB):
    b0 = drift(x)
    s0 = diffusion(x)
    pred = x + b0 * dt + _apply(s0, dB)
    return x + 0.5 * (b0 + drift(pred)) * dt + 0.5 * _apply(s0 + diffusion(pred), dB)


_KERNELS = {"euler-maruyama": _em, "heun": _heun, "heun-trapezoidal": _heun_trapezoidal}


def _checked(kernel, name, drift, diffusion, state, dt, dB, step):
    state = np.asarray(state, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = kernel(drift, diffusion, state, dt, np.asarray(dB, dtype=float))
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"{name} step produced non-finite values", step=step)
    return out


def euler_maruyama_step(drift: Callable, diffusion: Callable, state, dt: float, dB, step: int | None = None):
    """``x + b(x) dt + D(x) dB``; raises :class:`DivergenceError` on non-finite output."""
    return _checked(_em, "Euler-Maruyama", drift, diffusion, state, dt, dB, step)


def heun_step(drift: Callable, diffusion: Callable, state, dt: float, dB, step: int | None = None):
    """Stratonovich-consistent predictor-corrector with an explicit-Euler drift.

    The predictor is an Euler-Maruyama step; the corrector averages the
    diffusion at the start point and the predictor.
    """
    return _checked(_heun, "Heun", drift, diffusion, state, dt, dB, step)


def heun_ode_step(drift: Callable, diffusion: Callable, state, dt: float, dB, step: int | None = None):
    """Heun with the trapezoidal corrector applied to the drift as well."""
    return _checked(_heun_trapezoidal, "Heun", drift, diffusion, state, dt, dB, step)


@dataclass
class SdePath:
    times: np.ndarray
    states: np.ndarray
    seed: tuple

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


@dataclass
class EnsembleStats:
    n_paths: int
    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    final: np.ndarray
    quantiles: dict = dc_field(default_factory=dict)
    n_diverged: int = 0
    exit_times: Optional[np.ndarray] = None
    paths: Optional[np.ndarray] = None
    path_times: Optional[np.ndarray] = None

    def histogram(self, bins="fd", component: int = 0):
        """Histogram of the final state (Freedman-Diaconis bins by default)."""
        data = self.final[:, component]
        data = data[np.isfinite(data)]
        edges = np.histogram_bin_edges(data, bins=bins)
        counts, edges = np.histogram(data, bins=edges)
        return edges, counts

    @property
    def final_stderr(self) -> np.ndarray:
        return np.sqrt(self.variance[-1] / max(self.n_paths, 1))

    def final_variance_stderr(self) -> np.ndarray:
        x = self.final
        m = x.mean(axis=0)
        m4 = np.mean((x - m) ** 4, axis=0)
        var = x.var(axis=0, ddof=1)
        return np.sqrt(np.maximum(m4 - var**2 * (len(x) - 3) / (len(x) - 1), 0) / len(x))


class _Moments:
    """Mergeable (count, mean, M2) accumulator; merged in a fixed order it is deterministic."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add_block(self, x: np.ndarray):
        # x has paths on axis 0; Chan et al. pairwise update
        nb = x.shape[0]
        if nb == 0:
            return
        mb = x.mean(axis=0)
        m2b = ((x - mb) ** 2).sum(axis=0)
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * nb / n
        self.m2 = self.m2 + m2b + delta**2 * self.n * nb / n
        self.n = n

    @property
    def variance(self):
        if self.n < 2:
            return np.zeros_like(self.m2)
        return self.m2 / (self.n - 1)


def _draw_block(seed: int, first: int, count: int, steps: int, m: int, gens: list) -> np.ndarray:
    if not gens:
        gens.extend(stream(seed, first + i) for i in range(count))
    out = np.empty((steps, count, m))
    for i, g in enumerate(gens):
        out[:, i, :] = g.standard_normal((steps, m))
    return out


def run_ensemble(sde: ReducedSDE, h0, T: float, dt: float, n_paths: int, seed: int,
                 scheme: str | None = None, record_every: int | None = None,
                 store_paths: int | None = None, exit_region=None, block_size: int = 10_000,
                 chunk_steps: int = 1000, quantiles=(0.05, 0.5, 0.95),
                 stop_when_exited: bool = False) -> EnsembleStats:
    """Simulate ``n_paths`` independent paths of ``sde`` from ``h0`` up to ``T``.

    The scheme defaults to Euler-Maruyama for Ito SDEs and Heun for
    Stratonovich ones; pairing a scheme with the other interpretation is an
    error. Paths whose state exceeds ``1e6`` in magnitude or turns
    non-finite are dropped from the statistics and counted in
    ``n_diverged``. ``exit_region=(lo, hi)`` records the first time the
    first component leaves the interval (``inf`` when it never does).
    """
    if dt <= 0 or T < dt or n_paths < 1:
        raise ValueError("need dt > 0, T >= dt and n_paths >= 1")
    scheme = scheme or SCHEMES[sde.interpretation]
    expected = SCHEMES[sde.interpretation]
    if scheme == "heun-trapezoidal":
        scheme_ok = sde.interpretation == "stratonovich"
    else:
        scheme_ok = scheme == expected
    if not scheme_ok:
        raise ValueError(f"scheme {scheme!r} does not match the {sde.interpretation} interpretation")
    kernel = _KERNELS[scheme]
    n_steps = int(round(T / dt))
    record_every = record_every or max(1, n_steps // 500)
    rec_idx = np.arange(0, n_steps + 1, record_every)
    if rec_idx[-1] != n_steps:
        rec_idx = np.append(rec_idx, n_steps)
    times = rec_idx * dt
    n = sde.dim
    m = sde.noise_dim
    h0 = np.broadcast_to(np.asarray(h0, dtype=float).reshape(-1), (n,))

    moments = _Moments((len(rec_idx), n))
    snapshots = []
    finals = []
    exits = []
    stored = []
    n_div = 0
    store_idx = None
    if store_paths:
        store_idx = np.arange(0, n_steps + 1, int(store_paths))

    for first in range(0, n_paths, block_size):
        count = min(block_size, n_paths - first)
        x = np.tile(h0, (count, 1))
        alive = np.ones(count, dtype=bool)
        rec = np.empty((len(rec_idx), count, n))
        rec[0] = x
        ri = 1
        exit_t = np.full(count, np.inf)
        path_rec = [x.copy()] if store_idx is not None else None
        gens: list = []
        step = 0
        while step < n_steps:
            c = min(chunk_steps, n_steps - step)
            dB = np.sqrt(dt) * _draw_block(seed, first, count, c, m, gens)
            for i in range(c):
                with np.errstate(all="ignore"):
                    x = _step_masked(kernel, sde, x, dt, dB[i], alive)
                step += 1
                bad = alive & (~np.all(np.isfinite(x), axis=1) | np.any(np.abs(x) > DIVERGENCE_LIMIT, axis=1))
                if bad.any():
                    alive &= ~bad
                if exit_region is not None:
                    lo, hi = exit_region
                    out = alive & np.isinf(exit_t) & ((x[:, 0] < lo) | (x[:, 0] > hi))
                    exit_t[out] = step * dt
                if ri < len(rec_idx) and step == rec_idx[ri]:
                    rec[ri] = x
                    ri += 1
                if store_idx is not None and step % int(store_paths) == 0:
                    path_rec.append(x.copy())
            if stop_when_exited and exit_region is not None and not np.any(np.isinf(exit_t) & alive):
                rec[ri:] = np.nan
                break
        n_div += int((~alive).sum())
        good = rec[:, alive, :]
        moments.add_block(np.swapaxes(good, 0, 1))
        snapshots.append(good)
        finals.append(x[alive])
        exits.append(exit_t[alive])
        if path_rec is not None:
            stored.append(np.stack(path_rec, axis=1)[alive])

    snap = np.concatenate(snapshots, axis=1)
    qs = {q: np.quantile(snap, q, axis=1) for q in quantiles} if snap.shape[1] else {}
    stats = EnsembleStats(
        n_paths=moments.n,
        times=times,
        mean=moments.mean,
        variance=moments.variance,
        final=np.concatenate(finals, axis=0),
        quantiles=qs,
        n_diverged=n_div,
        exit_times=np.concatenate(exits) if exit_region is not None else None,
    )
    if stored:
        stats.paths = np.concatenate(stored, axis=0)
        stats.path_times = store_idx * dt
    return stats


def _step_masked(kernel, sde, x, dt, dB, alive):
    if alive.all():
        return kernel(sde.drift, sde.diffusion, x, dt, dB)
    out = x.copy()
    if alive.any():
        out[alive] = kernel(sde.drift, sde.diffusion, x[alive], dt, dB[alive])
    return out


@dataclass(frozen=True)
class ExitSummary:
    mean: float
    median: float
    count_escaped: int
    count_censored: int
    restricted_mean: float


def exit_time_stats(paths, region, times=None) -> ExitSummary:
    """First-exit times from ``region = (lo, hi)``.

    ``paths`` is either an array ``(n_paths, n_times)`` of scalar states
    (then ``times`` is required) or an array of precomputed exit times with
    ``inf`` marking paths that never left. Paths that never exit are
    right-censored: ``mean``/``median`` use escaped paths only, while
    ``restricted_mean`` averages ``min(tau, horizon)`` over all paths.
    """
    lo, hi = region
    paths = np.asarray(paths, dtype=float)
    if paths.ndim == 2:
        if times is None:
            raise ValueError("times are required when passing paths")
        times = np.asarray(times, dtype=float)
        if not np.all((paths[:, 0] >= lo) & (paths[:, 0] <= hi)):
            raise ValueError("region must contain the initial condition")
        outside = (paths < lo) | (paths > hi)
        hit = outside.any(axis=1)
        tau = np.where(hit, times[np.argmax(outside, axis=1)], np.inf)
        horizon = times[-1]
    else:
        tau = paths
        finite = tau[np.isfinite(tau)]
        horizon = np.inf if times is None else float(np.asarray(times).max())
        if not np.isfinite(horizon):
            horizon = finite.max() if finite.size else 0.0
    escaped = tau[np.isfinite(tau)]
    n_cens = int(np.sum(~np.isfinite(tau)))
    mean = float(escaped.mean()) if escaped.size else float("inf")
    median = float(np.median(escaped)) if escaped.size else float("inf")
    restricted = float(np.mean(np.minimum(tau, horizon))) if tau.size else float("nan")
    return ExitSummary(mean, median, int(escaped.size), n_cens, restricted)

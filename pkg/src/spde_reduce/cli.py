"""Command-line experiment runner.

    spde-reduce run --model swift_hohenberg --mode reduced
    spde-reduce list-models [--json]
    spde-reduce verify

Configuration comes from an optional flat ``key=value`` file with command
line flags taking precedence. Keys that are not run settings are passed to
the preset factory as model parameters.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import inspect
import io
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import DegeneracyError, DivergenceError, OutOfTubeError
from .field import fmt
from .integrators import run_ensemble
from .manifold import fermi_project
from .models import PARAM_ALIASES, PRESETS, PROVENANCE, get_preset
from .noise import QWienerSpec, covariance_check, stream

OUTPUT_ENV = "SPDE_REDUCE_OUTPUT"
MODES = ("reduced", "full-spde", "coupled", "equivalence", "covariance-test")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_TUBE, EXIT_VERIFY = 0, 2, 3, 4, 5

SYMBOLS = {"gamma": "γ", "eps": "ε", "delta": "δ"}


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class RunConfig:
    model: str = "swift_hohenberg"
    mode: str = "reduced"
    overrides: dict = dataclasses.field(default_factory=dict)
    n_paths: int = 1000
    T: Optional[float] = None
    dt: Optional[float] = None
    h0: Optional[float] = None
    seed: int = 0
    output_dir: Optional[str] = None
    store_paths: Optional[int] = None
    noise_modes: Optional[int] = None
    interpretation: str = "ito"
    reproject_every: Optional[int] = None
    n_samples: int = 100_000

    _INT = ("n_paths", "seed", "store_paths", "noise_modes", "reproject_every", "n_samples")
    _FLOAT = ("T", "dt", "h0")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs, overrides = {}, dict(data.get("overrides", {}))
        for key, val in data.items():
            if key in ("overrides", "figure"):
                continue
            if key in known:
                kwargs[key] = val
            else:
                overrides[PARAM_ALIASES.get(key, key)] = val
        cfg = cls(**kwargs)
        cfg.overrides = overrides
        cfg._coerce()
        cfg.validate()
        return cfg

    def _coerce(self):
        try:
            for key in self._INT:
                val = getattr(self, key)
                if val is not None and val != "off":
                    setattr(self, key, int(val))
                elif val == "off":
                    setattr(self, key, None)
            for key in self._FLOAT:
                val = getattr(self, key)
                if val is not None:
                    setattr(self, key, float(val))
            self.overrides = {k: _parse_scalar(v) for k, v in self.overrides.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value: {exc}") from None

    def validate(self):
        if self.model not in PRESETS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {sorted(PRESETS)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.interpretation not in ("ito", "stratonovich"):
            raise ConfigError("interpretation must be ito or stratonovich")
        factory = PRESETS[self.model]
        allowed = set(inspect.signature(factory).parameters)
        bad = sorted(set(self.overrides) - allowed)
        if bad:
            raise ConfigError(f"invalid override(s) {bad} for {self.model}; allowed: {sorted(allowed)}")
        T, dt = self.resolved("T"), self.resolved("dt")
        if not dt > 0:
            raise ConfigError("dt must be positive")
        if T < dt:
            raise ConfigError("T must be at least dt")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if self.noise_modes is not None and self.noise_modes < 1:
            raise ConfigError("noise_modes must be positive")

    def resolved(self, key):
        val = getattr(self, key)
        return PROVENANCE_DEFAULTS[self.model][key] if val is None else val

    def preset_kwargs(self) -> dict:
        kw = dict(self.overrides)
        if self.noise_modes is not None and "noise" not in kw:
            kw["noise"] = "white"
            kw["noise_modes"] = self.noise_modes
        return kw

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d["T"], d["dt"] = self.resolved("T"), self.resolved("dt")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_scalar(val):
    if isinstance(val, str):
        try:
            return int(val)
        except ValueError:
            pass
        try:
            return float(val)
        except ValueError:
            return val
    return val


def _numeric_defaults():
    out = {}
    for name, factory in PRESETS.items():
        out[name] = dict(factory().defaults)
    return out


PROVENANCE_DEFAULTS = _numeric_defaults()


def read_config_file(path) -> dict:
    data = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        data[key.replace("-", "_")] = val
    return data


# -- output ------------------------------------------------------------------

def _write_csv(path: Path, header: str, columns: list, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    path.write_text(buf.getvalue())


def _histogram_rows(data):
    data = np.asarray(data, dtype=float)
    data = data[np.isfinite(data)]
    if data.size == 0:
        return []
    if np.ptp(data) == 0:
        return [(float(data[0]), float(data[0]), int(data.size))]
    edges = np.histogram_bin_edges(data, bins="fd")
    if len(edges) > 1001:
        edges = np.histogram_bin_edges(data, bins=1000)
    counts, edges = np.histogram(data, bins=edges)
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def _series_rows(times, mean, var, quantiles):
    qs = sorted(quantiles)
    rows = []
    for i, t in enumerate(times):
        rows.append([float(t), float(mean[i]), float(var[i])] + [float(quantiles[q][i]) for q in qs])
    return rows, [f"q{q:g}" for q in qs]


def _stats_over_paths(times, h):
    """Mean/variance/quantile series for an array ``(times, paths)``."""
    qs = (0.05, 0.5, 0.95)
    var = h.var(axis=1, ddof=1) if h.shape[1] > 1 else np.zeros(len(times))
    return h.mean(axis=1), var, {q: np.quantile(h, q, axis=1) for q in qs}


def _run_reduced(cfg, preset, out, header):
    sde = preset.reduced if cfg.interpretation == "ito" else preset.stratonovich
    h0 = preset.defaults["h0"] if cfg.h0 is None else cfg.h0
    stats = run_ensemble(sde, h0, cfg.resolved("T"), cfg.resolved("dt"), cfg.n_paths, cfg.seed,
                         store_paths=cfg.store_paths)
    if stats.n_paths == 0:
        raise DivergenceError("every path diverged")
    rows, qcols = _series_rows(stats.times, stats.mean[:, 0], stats.variance[:, 0],
                               {q: v[:, 0] for q, v in stats.quantiles.items()})
    _write_csv(out / "series.csv", header, ["t", "mean", "var"] + qcols, rows)
    _write_csv(out / "histogram.csv", header, ["lo", "hi", "count"], _histogram_rows(stats.final[:, 0]))
    if stats.paths is not None:
        prow = [[float(t)] + [float(x) for x in stats.paths[:, i, 0]] for i, t in enumerate(stats.path_times)]
        _write_csv(out / "paths.csv", header, ["t"] + [f"path{p}" for p in range(stats.paths.shape[0])], prow)
    return {
        "final_mean": float(stats.mean[-1, 0]),
        "final_var": float(stats.variance[-1, 0]),
        "time_averaged_mean": float(np.mean(stats.mean[:, 0])),
        "n_diverged": stats.n_diverged,
        "n_paths_used": stats.n_paths,
    }


def _project_series(chart, fields, h0):
    hs = np.empty(fields.shape[:2])
    for p in range(fields.shape[1]):
        guess = np.atleast_1d(h0)
        for i in range(fields.shape[0]):
            fp = fermi_project(chart, fields[i, p], guess)
            hs[i, p] = fp.h[0]
            guess = fp.h
    return hs


def _run_full(cfg, preset, out, header):
    from .spde import run_full

    h0 = preset.defaults["h0"] if cfg.h0 is None else cfg.h0
    u0 = preset.initial_field(h0)
    times, fields = run_full(preset.problem, u0, cfg.resolved("T"), cfg.resolved("dt"), cfg.seed,
                             n_paths=cfg.n_paths, modes=preset.galerkin_modes)
    hs = _project_series(preset.chart, fields, h0)
    mean, var, qs = _stats_over_paths(times, hs)
    rows, qcols = _series_rows(times, mean, var, qs)
    _write_csv(out / "series.csv", header, ["t", "mean", "var"] + qcols, rows)
    _write_csv(out / "histogram.csv", header, ["lo", "hi", "count"], _histogram_rows(hs[-1]))
    return {"final_mean": float(mean[-1]), "final_var": float(var[-1]), "galerkin_modes": preset.galerkin_modes}


def _run_coupled(cfg, preset, out, header):
    from .spde import initial_pair, run_coupled

    h0 = preset.defaults["h0"] if cfg.h0 is None else cfg.h0
    start = initial_pair(preset.chart, preset.initial_field(h0), h0=[h0])
    traj = run_coupled(preset.problem, preset.chart, start, cfg.resolved("T"), cfg.resolved("dt"), cfg.seed,
                       n_paths=cfg.n_paths, modes=preset.galerkin_modes, reproject_every=cfg.reproject_every)
    stride = max(1, (len(traj.times) - 1) // 500)
    idx = np.arange(0, len(traj.times), stride)
    hs = traj.h_path[idx, :, 0]
    mean, var, qs = _stats_over_paths(traj.times[idx], hs)
    rows, qcols = _series_rows(traj.times[idx], mean, var, qs)
    rows = [r + [float(traj.ortho_residual_path[i])] for r, i in zip(rows, idx)]
    _write_csv(out / "series.csv", header, ["t", "mean", "var"] + qcols + ["ortho_residual"], rows)
    _write_csv(out / "histogram.csv", header, ["lo", "hi", "count"], _histogram_rows(traj.h_path[-1, :, 0]))
    return {"final_mean": float(mean[-1]), "final_var": float(var[-1]),
            "max_ortho_residual": traj.max_ortho_residual, "reproject_every": cfg.reproject_every}


def _run_equivalence(cfg, preset, out, header):
    from .spde import equivalence_check

    h0 = preset.defaults["h0"] if cfg.h0 is None else cfg.h0
    rep = equivalence_check(preset.problem, preset.chart, preset.initial_field(h0), cfg.resolved("T"),
                            cfg.resolved("dt"), cfg.n_paths, cfg.seed, h0=[h0], modes=preset.galerkin_modes)
    _write_csv(out / "series.csv", header, ["path", "sup_difference", "h_full", "h_coupled"],
               [[p, float(d), float(a), float(b)] for p, (d, a, b) in
                enumerate(zip(rep.sup_difference, rep.h_full, rep.h_coupled))])
    _write_csv(out / "histogram.csv", header, ["lo", "hi", "count"], _histogram_rows(rep.h_full))
    (out / "equivalence.json").write_text(rep.to_json() + "\n")
    if rep.tube_exits:
        raise OutOfTubeError(f"{len(rep.tube_exits)} tube exit(s); see equivalence.json",
                             time=rep.tube_exits[0]["time"])
    return rep.summary()


def probe_pairs(grid, count: int, seed: int):
    """Random smooth probe fields built from a few sines/cosines."""
    rng = stream(seed, 2**31)
    x = (grid.x - grid.x_min) / grid.length
    out = []
    for _ in range(count):
        pair_ = []
        for _ in range(2):
            a = rng.standard_normal(4)
            pair_.append(sum(a[j] * np.cos((j + 1) * np.pi * x + rng.uniform(0, np.pi)) for j in range(4)))
        out.append(tuple(pair_))
    return out


def _run_covariance(cfg, preset, out, header):
    grid = preset.problem.grid
    spec = QWienerSpec.white(grid, cfg.noise_modes or 8)
    rows, worst = [], 0.0
    for i, (f, g) in enumerate(probe_pairs(grid, 10, cfg.seed)):
        rep = covariance_check(spec, f, g, 1e-2, cfg.n_samples, seed=cfg.seed * 1000 + i)
        rows.append([i, rep.empirical, rep.exact, rep.stderr, rep.z_score])
        worst = max(worst, rep.z_score)
    _write_csv(out / "series.csv", header, ["probe", "empirical", "exact", "stderr", "z"], rows)
    _write_csv(out / "histogram.csv", header, ["lo", "hi", "count"], _histogram_rows([r[4] for r in rows]))
    return {"noise_modes": spec.count, "max_z": worst, "passed": worst <= 5.0}


RUNNERS = {
    "reduced": _run_reduced,
    "full-spde": _run_full,
    "coupled": _run_coupled,
    "equivalence": _run_equivalence,
    "covariance-test": _run_covariance,
}


def run(cfg: RunConfig) -> int:
    try:
        preset = get_preset(cfg.model, **cfg.preset_kwargs())
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    out = Path(cfg.output_dir or os.environ.get(OUTPUT_ENV, "runs"))
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    chash = cfg.config_hash()
    header = f"config_hash={chash} seed={cfg.seed} model={cfg.model} mode={cfg.mode}"
    start = time.perf_counter()
    results = RUNNERS[cfg.mode](cfg, preset, out, header)
    summary = {
        "config_hash": chash,
        "seed": cfg.seed,
        "config": cfg.canonical(),
        "model": cfg.model,
        "params": preset.params,
        "provenance": {"figure": preset.figure, "defaults": preset.defaults},
        "derived": preset.derived,
        "results": results,
        "runtime_seconds": time.perf_counter() - start,
    }
    if "h_star" in preset.derived:
        summary["h_star"] = preset.derived["h_star"]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    if cfg.mode == "covariance-test" and not results["passed"]:
        return EXIT_VERIFY
    return EXIT_OK


# -- list-models / verify ---------------------------------------------------------

def model_table() -> dict:
    table = {}
    for name in PRESETS:
        prov = PROVENANCE[name]
        table[name] = {
            "model": name,
            "figure": prov["figure"],
            "overrides": dict(prov["params"]),
            "T": PROVENANCE_DEFAULTS[name]["T"],
            "dt": PROVENANCE_DEFAULTS[name]["dt"],
            "h0": PROVENANCE_DEFAULTS[name]["h0"],
        }
    return table


def list_models(as_json: bool = False) -> str:
    table = model_table()
    if as_json:
        return json.dumps(table, indent=2, sort_keys=True)
    lines = []
    for name, row in table.items():
        params = ", ".join(f"{SYMBOLS.get(k, k)}={v:g}" for k, v in row["overrides"].items())
        lines.append(f"{name}: {params} ({row['figure']})  h0={row['h0']:g} T={row['T']:g} dt={row['dt']:g}")
    return "\n".join(lines)


def verify(seed: int = 0) -> list:
    """Quick invariant suites; returns ``(name, passed, detail)`` tuples."""
    from .reduction import scalar_coefficients
    from .spde import initial_pair, run_coupled

    results = []

    spec_grid = get_preset("damped_wave").problem.grid
    spec = QWienerSpec.white(spec_grid, 8)
    worst = 0.0
    for i, (f, g) in enumerate(probe_pairs(spec_grid, 10, seed)):
        worst = max(worst, covariance_check(spec, f, g, 1e-2, 20_000, seed=seed * 1000 + i).z_score)
    results.append(("quadratic covariation", worst <= 5.0, f"max z = {worst:.3g}"))

    nls = get_preset("nls_soliton")
    err = abs(nls.derived["psi_norm_sq"] - 4 / 3)
    results.append(("soliton ||eta'||^2 = 4/3", err <= 1e-6, f"error {err:.3g}"))

    for name, hs in (("damped_wave", np.linspace(-1, 1, 50)), ("swift_hohenberg", np.linspace(-0.4, 0.4, 50))):
        p = get_preset(name)
        b, s = scalar_coefficients(p.problem, p.chart, hs, calculus="ito")
        rel = max(np.max(np.abs(b - p.reduced.scalar_form.b(hs))) / np.max(np.abs(p.reduced.scalar_form.b(hs))),
                  np.max(np.abs(s - p.reduced.scalar_form.s(hs))) / np.max(np.abs(p.reduced.scalar_form.s(hs))))
        results.append((f"{name} pipeline = closed form", rel <= 1e-6, f"rel error {rel:.3g}"))

    dw = get_preset("damped_wave", eps=0.1)
    x = dw.problem.grid.x
    start = initial_pair(dw.chart, 0.1 * np.sin(np.pi * x) + 0.05 * np.sin(2 * np.pi * x), h0=[0.1])
    traj = run_coupled(dw.problem, dw.chart, start, 1.0, 1e-2, seed, n_paths=4)
    results.append(("coupled orthogonality", traj.max_ortho_residual <= 1e-8,
                    f"max residual {traj.max_ortho_residual:.3g}"))
    return results


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spde-reduce", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a preset")
    r.add_argument("--config", help="key=value configuration file")
    r.add_argument("--model", choices=sorted(PRESETS))
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--n-paths", type=int, dest="n_paths")
    r.add_argument("--T", type=float, dest="T")
    r.add_argument("--dt", type=float)
    r.add_argument("--h0", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--output-dir", dest="output_dir")
    r.add_argument("--store-paths", dest="store_paths", help="stride for stored paths, or 'off'")
    r.add_argument("--noise-modes", type=int, dest="noise_modes")
    r.add_argument("--interpretation", choices=("ito", "stratonovich"))
    r.add_argument("--reproject-every", type=int, dest="reproject_every")
    r.add_argument("--n-samples", type=int, dest="n_samples")
    r.add_argument("--eps", type=float, help="noise intensity override")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="model parameter override")

    lm = sub.add_parser("list-models", help="print the preset table")
    lm.add_argument("--json", action="store_true")

    v = sub.add_parser("verify", help="run the quick invariant suites")
    v.add_argument("--seed", type=int, default=0)
    return parser


def _config_from_args(args) -> RunConfig:
    data = read_config_file(args.config) if args.config else {}
    for key in ("model", "mode", "n_paths", "T", "dt", "h0", "seed", "output_dir", "store_paths",
                "noise_modes", "interpretation", "reproject_every", "n_samples", "eps"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        data[key.strip()] = val.strip()
    return RunConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        print(list_models(args.json))
        return EXIT_OK
    if args.command == "verify":
        results = verify(args.seed)
        for name, ok, detail in results:
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_VERIFY
    try:
        cfg = _config_from_args(args)
        return run(cfg)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (OutOfTubeError, DegeneracyError) as exc:
        print(f"tube exit: {exc}", file=sys.stderr)
        return EXIT_TUBE


if __name__ == "__main__":
    sys.exit(main())

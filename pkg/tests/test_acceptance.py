"""Acceptance criteria, one test per criterion (criteria 3 and 8 are split per model).

Every test prints a single ``PASS``/``FAIL`` line with the measured values
before asserting, so ``pytest -s`` or the captured output shows the numbers.
"""
import time

import numpy as np
import pytest
from scipy.stats import skew

from spde_reduce.cli import main, probe_pairs
from spde_reduce.integrators import exit_time_stats, run_ensemble
from spde_reduce.models import allen_cahn, damped_wave, linearized_rate, nls_soliton, swift_hohenberg
from spde_reduce.noise import QWienerSpec, covariance_check
from spde_reduce.reduction import ReducedSDE, scalar_coefficients
from spde_reduce.spde import equivalence_check, initial_pair, run_coupled


def report(criterion, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
    assert ok, detail


def _moment_se(x):
    n = len(x)
    m = x.mean()
    var = x.var(ddof=1)
    m4 = np.mean((x - m) ** 4)
    return np.sqrt(var / n), np.sqrt(max(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n)


def test_1_quadratic_covariation():
    t0 = time.perf_counter()
    grid = damped_wave().problem.grid
    spec = QWienerSpec.white(grid, 8)
    zs = []
    for i, (f, g) in enumerate(probe_pairs(grid, 10, seed=11)):
        zs.append(covariance_check(spec, f, g, 1e-2, 100_000, seed=500 + i).z_score)
    elapsed = time.perf_counter() - t0
    ok = max(zs) <= 5 and elapsed < 10
    report(1, ok, f"max |emp - exact|/stderr = {max(zs):.3f} over 10 probes (K=8, n=1e5), {elapsed:.1f}s")


def test_2_closed_form_constants():
    nls = nls_soliton()
    psi = nls.derived["psi_norm_sq"]
    sh = swift_hohenberg(delta=0.1, eps=0.05)
    h_star = sh.derived["h_star"]
    rate = linearized_rate(swift_hohenberg(delta=0.1, eps=0.0).reduced, np.sqrt(0.1 / 3))
    ok = (abs(psi - 4 / 3) <= 1e-6 and abs(h_star - 0.18371) <= 5e-6 and round(h_star, 3) in (0.183, 0.184)
          and abs(rate - 0.2) <= 1e-6 and sh.derived["stability_rate"] == pytest.approx(0.2))
    report(2, ok, f"||eta'||^2 = {psi:.10f}, h* = {h_star:.6f}, stability rate at eps=0: {rate:.8f}")


def _normwise(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


CASES = {
    "damped_wave": (lambda: damped_wave(), np.linspace(-1.0, 1.0, 50), "ito"),
    "swift_hohenberg": (lambda: swift_hohenberg(), np.linspace(-0.4, 0.4, 50), "ito"),
    # the quadrature error of the boundary-driven front coefficients is O(dx^2)
    "allen_cahn": (lambda: allen_cahn(n_points=16001), np.linspace(5.0, 15.0, 50), "stratonovich"),
    "nls_soliton": (lambda: nls_soliton(), np.linspace(-5.0, 5.0, 50), "ito"),
}


@pytest.mark.parametrize("name", list(CASES))
def test_3_pipeline_matches_closed_form(name):
    factory, hs, calculus = CASES[name]
    preset = factory()
    target = preset.reduced if calculus == "ito" else preset.stratonovich
    t0 = time.perf_counter()
    b, s = scalar_coefficients(preset.problem, preset.chart, hs, calculus=calculus)
    elapsed = time.perf_counter() - t0
    eb = _normwise(b, target.scalar_form.b(hs) + 0 * hs)
    es = _normwise(s, target.scalar_form.s(hs) + 0 * hs)
    ok = eb <= 1e-6 and es <= 1e-6 and elapsed < 5
    report(f"3/{name}", ok, f"{calculus} drift rel err {eb:.3g}, diffusion rel err {es:.3g}, {elapsed:.2f}s")


def test_4_ito_vs_stratonovich_weak_agreement():
    p = damped_wave()
    d = p.defaults
    t0 = time.perf_counter()
    ito = run_ensemble(p.reduced, d["h0"], d["T"], d["dt"], 10_000, seed=101)
    strat = run_ensemble(p.stratonovich, d["h0"], d["T"], d["dt"], 10_000, seed=202)
    elapsed = time.perf_counter() - t0
    a, b = ito.final[:, 0], strat.final[:, 0]
    sa, va = _moment_se(a)
    sb, vb = _moment_se(b)
    dm, dv = abs(a.mean() - b.mean()), abs(a.var(ddof=1) - b.var(ddof=1))
    ok = dm <= 4 * np.hypot(sa, sb) and dv <= 4 * np.hypot(va, vb) and elapsed < 30
    report(4, ok, f"|dmean| = {dm:.3g} (4se {4 * np.hypot(sa, sb):.3g}), |dvar| = {dv:.3g} "
                  f"(4se {4 * np.hypot(va, vb):.3g}), {elapsed:.1f}s")


ROUNDOFF_FLOOR = 1e-12


def test_5_orthogonality_preservation():
    p = damped_wave(eps=0.1)
    x = p.problem.grid.x
    start = initial_pair(p.chart, 0.1 * np.sin(np.pi * x) + 0.05 * np.sin(2 * np.pi * x), h0=[0.1])
    t0 = time.perf_counter()
    dts = (1e-2, 5e-3, 2.5e-3)
    res = [run_coupled(p.problem, p.chart, start, 5.0, dt, seed=5, n_paths=10).max_ortho_residual for dt in dts]
    elapsed = time.perf_counter() - t0
    order = float(np.polyfit(np.log(dts), np.log(np.maximum(res, 1e-300)), 1)[0])
    at_floor = max(res) <= ROUNDOFF_FLOOR
    ok = (order >= 1 or at_floor) and elapsed < 60
    report(5, ok, f"max residuals {['%.2e' % r for r in res]}, fitted order {order:.2f}, "
                  f"roundoff floor {'reached' if at_floor else 'not reached'}, {elapsed:.1f}s")


def test_6_equivalence_full_vs_coupled():
    p = damped_wave(eps=0.1)
    x = p.problem.grid.x
    u0 = 0.1 * np.sin(np.pi * x) + 0.05 * np.sin(2 * np.pi * x)
    t0 = time.perf_counter()
    dts = (4e-3, 2e-3, 1e-3)
    reps = [equivalence_check(p.problem, p.chart, u0, 10.0, dt, 100, seed=6, h0=[0.1]) for dt in dts]
    elapsed = time.perf_counter() - t0
    summ = reps[-1].summary()
    sups = [float(np.max(r.sup_difference)) for r in reps]
    order = float(np.polyfit(np.log(dts), np.log(sups), 1)[0])
    ok = summ["mean_agrees"] and summ["var_agrees"] and order >= 0.5 and not reps[-1].tube_exits and elapsed < 300
    report(6, ok, f"mean {summ['mean_full']:.4g} vs {summ['mean_coupled']:.4g} (se {summ['mean_stderr']:.2g}), "
                  f"var {summ['var_full']:.3g} vs {summ['var_coupled']:.3g} (se {summ['var_stderr']:.2g}), "
                  f"sup diffs {['%.2e' % s for s in sups]}, order {order:.2f}, {elapsed:.1f}s")


def test_7_nls_moments():
    p = nls_soliton()
    d = p.defaults
    t0 = time.perf_counter()
    stats = run_ensemble(p.reduced, d["h0"], d["T"], d["dt"], 10_000, seed=7)
    elapsed = time.perf_counter() - t0
    eps, T = p.params["eps"], d["T"]
    mean_ref, var_ref = 2 / 3 * eps**2 * T, 4 / 3 * eps**2 * T
    m, v = stats.mean[-1, 0] - d["h0"], stats.variance[-1, 0]
    ok = abs(m / mean_ref - 1) <= 0.05 and abs(v / var_ref - 1) <= 0.05 and elapsed < 10
    report(7, ok, f"mean drift {m:.4f} (target {mean_ref:.4f}), variance {v:.3f} (target {var_ref:.3f}), "
                  f"{elapsed:.1f}s")


def test_8a_damped_wave_symmetry():
    p = damped_wave()
    d = p.defaults
    stats = run_ensemble(p.reduced, d["h0"], d["T"], d["dt"], 10_000, seed=81)
    g1 = float(skew(stats.final[:, 0]))
    frac_pos = float(np.mean(stats.final[:, 0] > 0))
    report("8/damped_wave", abs(g1) < 0.1, f"skewness of h(T) = {g1:.3g}, fraction h(T) > 0 = {frac_pos:.3f}")


def test_8b_allen_cahn_front_stays():
    p = allen_cahn()
    d = p.defaults
    stats = run_ensemble(p.reduced, d["h0"], d["T"], d["dt"], 1000, seed=82, store_paths=10)
    dev = np.max(np.abs(stats.paths[..., 0] - d["h0"]), axis=1)
    frac = float(np.mean(dev < 1))
    report("8/allen_cahn", frac >= 0.99, f"{frac:.3f} of paths within |h - h0| < 1 (max excursion {dev.max():.3g})")


def test_8c_swift_hohenberg_exit_times():
    T = 1.0e4
    means = []
    for eps in (0.1, 0.075, 0.05):
        p = swift_hohenberg(eps=eps)
        hs = p.derived["h_star"]
        region = (hs / 2, 1.5 * hs)
        stats = run_ensemble(p.reduced, hs, T, p.defaults["dt"], 1000, seed=83, exit_region=region)
        means.append(exit_time_stats(stats.exit_times, region, times=[T]).restricted_mean)
    ok = means[0] < means[1] < means[2]
    report("8/swift_hohenberg", ok, f"restricted mean exit times E[min(tau, {T:g})] for eps = 0.1, 0.075, 0.05: "
                                    f"{['%.1f' % m for m in means]}")


def test_9_integrator_oracles():
    t0 = time.perf_counter()
    eps, T, h0 = 0.5, 1.0, 1.0
    gbm = ReducedSDE.from_scalar(lambda h: 0 * h, lambda h: eps * h, "stratonovich", ds=lambda h: eps + 0 * h)
    heun = run_ensemble(gbm, h0, T, 0.01, 100_000, seed=91)
    ref = h0 * np.exp(eps**2 * T / 2)
    heun_ok = abs(heun.mean[-1, 0] - ref) <= 4 * heun.final_stderr[0]

    mu, sig = 1.0, 0.1
    em = ReducedSDE.from_scalar(lambda h: mu * h, lambda h: sig * h, "ito")
    dts = (0.1, 0.05, 0.025)
    errs = [abs(run_ensemble(em, 1.0, 1.0, dt, 100_000, seed=92).mean[-1, 0] - np.exp(mu)) for dt in dts]
    order = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = heun_ok and abs(order - 1) <= 0.2 and elapsed < 30
    report(9, ok, f"Heun E[h(T)] = {heun.mean[-1, 0]:.5f} vs {ref:.5f} (se {heun.final_stderr[0]:.2g}); "
                  f"EM weak errors {['%.4f' % e for e in errs]}, order {order:.2f}, {elapsed:.1f}s")


def test_10_cli_determinism(tmp_path):
    runs = [
        ["--model", "swift_hohenberg", "--n-paths", "300", "--T", "50", "--store-paths", "50"],
        ["--model", "damped_wave", "--mode", "coupled", "--n-paths", "3", "--T", "0.5", "--eps", "0.1"],
        ["--mode", "covariance-test", "--noise-modes", "8", "--n-samples", "5000"],
    ]
    same = True
    for i, args in enumerate(runs):
        outs = []
        for rep in range(2):
            d = tmp_path / f"run{i}-{rep}"
            assert main(["run", "--output-dir", str(d), "--seed", "10", *args]) == 0
            outs.append({f.name: f.read_bytes() for f in sorted(d.glob("*.csv"))})
        same &= outs[0] == outs[1] and len(outs[0]) >= 2
    report(10, same, "repeated runs with the same seed give byte-identical CSVs (reduced, coupled, covariance-test)")

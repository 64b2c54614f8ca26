"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import hashlib
import math
import time
from pathlib import Path

import numpy as np

from elastolattice.cli import main
from elastolattice.config import load_config
from elastolattice.experiments import (
    initial_state, integrator, run_convergence, run_entropy, run_trace, run_young, simulate,
)
from elastolattice.fields import interpolate, lp_distance, lp_norm
from elastolattice.lattice import TWO_PI, IntegratorConfig, LatticeState, Recorder, run
from elastolattice.potential import PowerPlusQuadratic

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def load(name):
    return load_config(CONFIGS / f"{name}.yaml")


def test_energy_conservation(verdict):
    cfg = load("simulate_energy")
    pot = cfg.build_potential()
    n = cfg.eps_list[0]
    start = time.perf_counter()
    res = simulate(initial_state(cfg, cfg.initial_data, n), pot, integrator(cfg, pot, n))
    elapsed = time.perf_counter() - start
    longer = simulate(initial_state(cfg, cfg.initial_data, n), pot, integrator(cfg, pot, n, t_end=2 * cfg.t_end))
    d5, d10 = res.energy_drift, longer.energy_drift
    ok = d5 < 1e-6 and d10 < 2 * d5 and elapsed < 5.0
    verdict(1, "energy conservation", ok,
            f"drift(T={cfg.t_end:g}) {d5:.3g}, drift(T={2 * cfg.t_end:g}) {d10:.3g}, {elapsed:.2f}s")


def test_interpolant_gap_bound(verdict):
    pot = PowerPlusQuadratic(4, 1.0, 1.0, (0.5, 1.5))
    worst = -math.inf
    for n in (64, 128, 256, 512, 1024):
        X = TWO_PI * np.arange(n) / n
        s = LatticeState(n, 1.0, 0.1 * np.sin(X), 0.1 * np.cos(2 * X))
        rec = Recorder()
        run(s, pot, IntegratorConfig.from_cfl(pot, n, 1.0, 1.0, sample_interval=0.125), rec)
        for st in rec.states:
            y, yt, pair = interpolate(st)
            for p in (2.0, 4.0):
                gap = lp_distance(yt, y, p)
                bound = st.eps * lp_norm(pair.u, p)
                worst = max(worst, gap / bound - 1.0)
    # round-off only
    verdict(2, "interpolant gap bound", worst <= 1e-12, f"max(gap/bound) - 1 = {worst:.3g}")


def test_continuum_convergence(verdict):
    start = time.perf_counter()
    lin, rlin = run_convergence(load("converge_linear"))
    non, rnon = run_convergence(load("converge_nonlinear"))
    elapsed = time.perf_counter() - start
    rl, rn = lin.ratios["err_v_L2"], non.ratios["err_v_L2"]
    ok = min(rl) >= 1.8 and min(rn) >= 1.5 and elapsed < 120 and rlin.passed and rnon.passed
    verdict(3, "continuum convergence", ok,
            f"linear ratios {[round(r, 3) for r in rl]}, nonlinear ratios {[round(r, 3) for r in rn]}, "
            f"{elapsed:.1f}s")


def test_gronwall_bound(verdict):
    rep = run_entropy(load("entropy_perturbed"))
    details = "; ".join(f"{c.name} {'ok' if c.passed else 'FAILED'} ({c.detail})" if c.detail else
                        f"{c.name} {'ok' if c.passed else 'FAILED'}" for c in rep.checks)
    C = rep.certificates["gronwall"]["C"]
    verdict(4, "Gronwall bound", rep.passed and math.isfinite(C), f"C={C:.4g}; {details}")


def test_no_concentration(verdict):
    cfg = load("young_reference")
    rep = run_young(cfg)
    summary = dict(rep.tables["young_summary.csv"][1])
    g, E = summary["gamma_total"], summary["energy_finest"]
    ok = g < 0.01 * E and rep.passed
    verdict(5, "no concentration", ok, f"gamma {g:.3g} vs 1% of energy {0.01 * E:.3g}")


def test_oscillation_concentration_separation(verdict):
    osc = run_young(load("young_oscillatory"))
    con = run_young(load("young_concentrated"))
    so, sc = dict(osc.tables["young_summary.csv"][1]), dict(con.tables["young_summary.csv"][1])
    ok = (abs(so["sigma_total"] - math.pi) <= 0.05 * math.pi and so["gamma_total"] < 0.02 * so["sigma_total"]
          and abs(sc["gamma_total"] - 1.0) <= 0.05 and osc.passed and con.passed)
    failed = [c.name for c in osc.checks + con.checks if not c.passed]
    verdict(6, "oscillation/concentration separation", ok,
            f"sigma {so['sigma_total']:.5f}, gamma_osc {so['gamma_total']:.3g}, "
            f"gamma_conc {sc['gamma_total']:.5f} (cell share {sc['localized_fraction']:.4f})"
            + (f", failed {failed}" if failed else ""))


def test_initial_trace(verdict):
    rep = run_trace(load("trace"))
    errs = [r[2] for r in rep.tables["trace.csv"][1] if r[0] == max(r[0] for r in rep.tables["trace.csv"][1])]
    s = rep.certificates["trace_slope"]
    ok = rep.passed and all(a < b for a, b in zip(errs, errs[1:])) and 0.8 <= s["slope"] <= 1.2
    verdict(7, "initial trace", ok, f"slope {s['slope']:.4f} (R^2 {s['r2']:.4f}), errors {[f'{e:.3g}' for e in errs]}")


def _hashes(root: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.iterdir())}


def test_determinism(verdict, tmp_path):
    mismatched = []
    for exp, name in (("converge", "converge_linear"), ("entropy", "entropy_perturbed"),
                      ("young", "young_oscillatory")):
        outs = []
        for k, threads in enumerate((1, 1, 2)):
            out = tmp_path / f"{name}_{k}"
            assert main([exp, "--config", str(CONFIGS / f"{name}.yaml"), "--out", str(out),
                         "--threads", str(threads)]) == 0
            outs.append(_hashes(out))
        if not outs[0] == outs[1] == outs[2]:
            mismatched.append(name)
    n_files = sum(len(_hashes(p)) for p in tmp_path.iterdir() if p.name.endswith("_0"))
    verdict(8, "determinism", not mismatched,
            f"{n_files} files identical over 3 runs each" if not mismatched else f"mismatch in {mismatched}")

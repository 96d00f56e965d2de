"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py``; the criterion lines are printed
even when pytest captures output.
"""
import time

import numpy as np
import pytest

from g2lab.connection_lab import connection_suite, default_vectors
from g2lab.curvature import curvature_checks, ebin_checks
from g2lab.exterior7 import Form
from g2lab.flow_engine import (
    FlowSpec,
    GeodesicState,
    dirichlet_projected_step,
    dirichlet_second_variation_at_tf,
    dirichlet_split_step,
    energy_directional_fd,
    energy_gradient,
    geodesic_integrate,
    run_flow,
    vol_variation_forms,
)
from g2lab.g2point import identity_suite, project2, random_frame_batch, tau_spectrum
from g2lab.exterior7 import algebra_suite
from g2lab.hodge_green import SolverConfig
from g2lab.torus_field import Grid, flat_field, perturbed_field, random_exact_3form
from g2lab.variations import verify_variations

GRID16 = Grid((16, 16, 1, 1, 1, 1, 1))
GRID32 = Grid((32, 32, 1, 1, 1, 1, 1))
LINE_GRID = Grid((8, 1, 1, 1, 1, 1, 1))
TIGHT = SolverConfig(rel_tol=1e-12, max_iter=1000)


@pytest.fixture
def announce(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def _failed(rep):
    return [r.name for r in rep.results if not r.passed]


def test_criterion_01_pointwise_identities(announce):
    start = time.perf_counter()
    rep = algebra_suite(1000, 0)
    rep.extend(identity_suite(1000, 0, tol=1e-9))
    elapsed = time.perf_counter() - start
    worst = max(r.max_residual for r in rep.results)
    ok = rep.all_passed and elapsed <= 30.0 and min(r.trials for r in rep.results) >= 1000
    announce(1, ok, f"{len(rep.results)} checks, worst residual {worst:.2e}, {elapsed:.1f} s, failed {_failed(rep)}")
    assert ok


def test_criterion_02_torsion_spectrum(announce):
    rng = np.random.default_rng(2)
    fr, _ = random_frame_batch(rng, 1000)
    tau = project2(Form(2, rng.standard_normal((1000, 21))), fr).p14
    spec = tau_spectrum(tau, fr)
    ev = spec.eigenvalues  # eigenvalues of -j_tau tau = tau o tau, relative to g
    scale = spec.norm_sq
    semidef = float(np.max(np.maximum(ev.max(axis=1), 0.0) / scale))
    zero = float(np.max(np.abs(ev).min(axis=1) / scale))
    lower = float(np.max(np.maximum(-(2.0 / 3.0) * scale - ev.min(axis=1) - 1e-9, 0.0)))
    quartic_rel = np.abs(spec.quartic_contraction - 4.0 * scale**2) / (4.0 * scale**2)
    ratio = float(np.median(spec.quartic_contraction / scale**2))
    checks = {
        "negative semidefinite": semidef <= 1e-9,
        "zero eigenvalue": zero <= 1e-9,
        "lambda_min >= -(2/3)|tau|^2": lower == 0.0,
        "quartic = 4|tau|^4": float(quartic_rel.max()) <= 1e-9,
    }
    ok = all(checks.values())
    announce(2, ok, f"{checks}; measured quartic/|tau|^4 = {ratio:.12f}")
    assert ok


def test_criterion_03_variations(announce):
    start = time.perf_counter()
    phi = perturbed_field(GRID16, 1, 0.05)
    rep, rows = verify_variations(phi, random_exact_3form(GRID16, 5, 2), cfg=TIGHT)
    elapsed = time.perf_counter() - start
    needed = {"varMetric", "varVol", "varPsi", "varLaplacianClosed", "varGreen", "varPiD"}
    names = {r.operator for r in rows}
    covered = needed <= names and any(n.startswith("varStar") for n in names) and any(
        n.startswith("varDelta") for n in names)
    ok = rep.all_passed and covered and elapsed <= 300.0
    worst = max(r.mismatch for r in rows)
    ratios = [r.order_ratio for r in rows if np.isfinite(r.order_ratio)]
    announce(3, ok, f"{len(rows)} operators, worst mismatch {worst:.2e}, order ratios "
                    f"[{min(ratios):.2f}, {max(ratios):.2f}], {elapsed:.1f} s, failed {_failed(rep)}")
    assert ok


def test_criterion_04_connections(announce):
    phi = perturbed_field(GRID16, 1, 0.05)
    rep, rows = connection_suite(phi, default_vectors(GRID16, seed=1), TIGHT)
    compat = max(r.rel_err for r in rows if r.connection != "Combo(0.5,0.5,0.5)"
                 and not (r.connection == "PA" and r.metric == "Laplacian"))
    announce(4, rep.all_passed, f"{len(rep.results)} checks, worst compatibility {compat:.2e}, failed {_failed(rep)}")
    assert rep.all_passed


def test_criterion_05_volume_variation(announce):
    phi = perturbed_field(GRID16, 1, 0.05)
    worst = 0.0
    for seed in range(3):
        vals = np.array(list(vol_variation_forms(phi, random_exact_3form(GRID16, 20 + seed, 2), TIGHT).values()))
        worst = max(worst, float((vals.max() - vals.min()) / np.abs(vals).max()))
    ok = worst <= 1e-7
    announce(5, ok, f"four expressions, worst mutual relative difference {worst:.2e}")
    assert ok


def test_criterion_06_energy_gradients(announce):
    phi = perturbed_field(GRID16, 1, 0.05)
    worst = {}
    for kind in ("EL", "ED", "EM"):
        grad = energy_gradient(kind, phi, TIGHT)
        errs = []
        for k in range(10):
            x = random_exact_3form(GRID16, 100 + k, 2).X
            fd = energy_directional_fd(kind, phi, x, 1e-4, TIGHT)
            pred = phi.inner(grad, x)
            errs.append(abs(fd - pred) / abs(pred))
        worst[kind] = max(errs)
    ok = max(worst.values()) <= 1e-5
    announce(6, ok, "worst relative error " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))
    assert ok


def test_criterion_07_flows(announce):
    start = time.perf_counter()
    cfg = SolverConfig(rel_tol=1e-13, max_iter=2000)
    phi = perturbed_field(GRID16, 1, 0.05, 2)
    lap = run_flow(FlowSpec("Laplacian", 2e-4, 200), phi, cfg, monitor_el=False)
    vol = lap.column("vol")
    vol_ok = bool(np.all(np.diff(vol) > 0))
    dirich = run_flow(FlowSpec("DirichletL", 2e-4, 200), phi, cfg, monitor_el=False)
    ed = dirich.column("ed")
    rises = np.diff(ed) / ed[:-1]
    ed_ok = bool(np.all(rises <= 1e-10))
    a = dirichlet_split_step(phi, 2e-4, cfg)
    b = dirichlet_projected_step(phi, 2e-4, cfg)
    split = (a.phi - b.phi).max_abs() / (b.phi - phi.phi).max_abs()
    closed = max(lap.column("closedness").max(), dirich.column("closedness").max())
    elapsed = time.perf_counter() - start
    ok = vol_ok and ed_ok and split <= 1e-7 and closed <= 1e-9 and elapsed <= 600.0
    announce(7, ok, f"Vol increasing {vol_ok} (min step {np.diff(vol).min():.2e}), E^D decreasing {ed_ok} "
                    f"(max relative rise {rises.max():.2e}), split vs projected {split:.2e}, "
                    f"closedness {closed:.2e}, {elapsed:.0f} s")
    assert ok


def test_criterion_08_geodesics(announce):
    phi = flat_field(LINE_GRID)
    velocity = random_exact_3form(LINE_GRID, 7, 2).X * 0.5
    cfg = SolverConfig(rel_tol=1e-13, max_iter=1000)
    drifts, ratios = {}, {}
    for conn in ("DD", "DL", "DM"):
        state = GeodesicState(phi, velocity, conn)
        drifts[conn] = geodesic_integrate(state, 1.0, 1e-3, cfg, record_every=50).relative_drift
        coarse = geodesic_integrate(state, 1.0, 0.05, cfg).relative_drift
        fine = geodesic_integrate(state, 1.0, 0.025, cfg).relative_drift
        ratios[conn] = coarse / fine
    ok = max(drifts.values()) <= 1e-6 and all(12.0 <= r <= 20.0 for r in ratios.values())
    announce(8, ok, "drift at dt=1e-3: " + ", ".join(f"{k} {v:.1e}" for k, v in drifts.items())
             + "; halving ratio at dt=0.05: " + ", ".join(f"{k} {v:.1f}" for k, v in ratios.items()))
    assert ok


def test_criterion_09_curvature(announce):
    worst = {}
    ok = True
    for seed in (1, 2):
        rep, _ = curvature_checks(perturbed_field(GRID32, seed, 0.05, 2))
        ok = ok and rep.all_passed
        for r in rep.results:
            worst[r.name] = max(worst.get(r.name, 0.0), r.max_residual)
    announce(9, ok, "; ".join(f"{k}: {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_10_ebin(announce):
    worst = {}
    ok = True
    for seed in (1, 2):
        rep = ebin_checks(perturbed_field(GRID16, seed, 0.05), seed=seed)
        ok = ok and rep.all_passed
        for r in rep.results:
            worst[r.name] = max(worst.get(r.name, 0.0), r.max_residual)
    announce(10, ok, "; ".join(f"{k}: {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_11_second_variation(announce):
    phi = flat_field(GRID16)
    errs, values = [], []
    for seed in range(5):
        fd, pred = dirichlet_second_variation_at_tf(phi, random_exact_3form(GRID16, 40 + seed, 2))
        errs.append(abs(fd - pred) / abs(pred))
        values.append(fd)
    ok = max(errs) <= 1e-4 and min(values) >= 0.0
    announce(11, ok, f"worst relative error {max(errs):.2e}, smallest second variation {min(values):.3e}")
    assert ok

"""End-to-end acceptance checks A1-A9; a summary line per criterion is printed at the end."""

import dataclasses
import time

import numpy as np
import pytest

from sourceshape.harness import get_example, symmetric_difference_area
from sourceshape.harness.studies import (convergence_study, fd_study, gradient_form_agreement,
                                         observed_rates, setup_geometry, shortcut_residuals,
                                         stability_sweep)
from sourceshape.levelset import (disk, element_gradients, extract_interface, init_from_expression,
                                  measure_perimeter, measure_volume, reinitialize)
from sourceshape.mesh import build_square_mesh
from sourceshape.shapeopt import optimize

# target intensity errors and the allowed factor
TARGETS = {"e1": (5.31e-2, 3), "e2": (1.60e-2, 3), "e3": (1.50e-1, 5), "e4": (5.31e-2, 3),
           "e5": (4.26e-2, 3), "e6": (3.11e-2, 3)}


@pytest.fixture(scope="module")
def e1_geometry():
    return setup_geometry(get_example("e1"))


def test_a1_fem_convergence(criterion):
    t0 = time.perf_counter()
    r2, r1 = observed_rates(convergence_study(8, 3))
    dt = time.perf_counter() - t0
    criterion("A1", r2.min() >= 1.8 and r1.min() >= 0.9 and dt < 10,
              f"L2 rates {np.round(r2, 3).tolist()}, H1 rates {np.round(r1, 3).tolist()}, {dt:.1f}s")


def test_a2_coupled_stability(criterion, e1_geometry):
    problem, phi = e1_geometry
    t0 = time.perf_counter()
    ratios = stability_sweep(problem, phi, (1e-2, 1e-4, 1e-6))
    dt = time.perf_counter() - t0
    C = 1.1 * ratios[0]  # constant fitted once, at the largest alpha
    criterion("A2", max(ratios) <= C and dt < 30,
              f"ratios {np.round(ratios, 4).tolist()} <= C={C:.4f}, {dt:.1f}s")


def test_a3_adjoint_shortcut(criterion, e1_geometry):
    problem, phi = e1_geometry
    t0 = time.perf_counter()
    dv, dw, pn = shortcut_residuals(problem, phi, 1e-2)
    dt = time.perf_counter() - t0
    criterion("A3", dv <= 1e-8 * pn and dw <= 1e-8 * max(pn, 1.0) and dt < 10,
              f"|v+p|_1={dv:.2e}, |w|_1={dw:.2e}, |p|_1={pn:.2e}, {dt:.1f}s")


def test_a4_gradient_consistency(criterion):
    spec = get_example("e1")
    t0 = time.perf_counter()
    # both checks on the h <= 0.03 mesh
    fine_problem, fine_phi = setup_geometry(spec, coarse_n=95)
    rows = fd_study(fine_problem, fine_phi, spec.config.alpha0, spec.config.beta0, n_fields=3, seed=0)
    gaps = gradient_form_agreement(fine_problem, fine_phi, spec.config.alpha0, spec.config.beta0, n_fields=3)
    dt = time.perf_counter() - t0
    fd = [r["rel_err"] for r in rows]
    criterion("A4", max(fd) <= 1e-2 and max(gaps) <= 0.05 and fine_problem.mesh.h <= 0.03 and dt < 120,
              f"FD rel errors {np.round(fd, 4).tolist()}, surface/distributed gaps "
              f"{[f'{g:.1e}' for g in gaps]} at h={fine_problem.mesh.h:.4f}, {dt:.1f}s")


def test_a5_descent_certificate(criterion, e1_geometry):
    problem, _ = e1_geometry
    spec = get_example("e1")
    cfg = dataclasses.replace(spec.config, max_iter=50, eps=0.0)
    t0 = time.perf_counter()
    res = optimize(problem, init_from_expression(problem.mesh, spec.omega_0), cfg)
    dt = time.perf_counter() - t0
    cert = max(r.descent_rel_err for r in res.history)
    frac = np.mean([r.J_next <= r.J for r in res.history])
    criterion("A5", len(res.history) == 50 and cert <= 1e-6 and frac >= 0.95 and dt < 300,
              f"{len(res.history)} steps, max certificate gap {cert:.1e}, "
              f"non-increasing in {100 * frac:.0f}% of steps, {dt:.1f}s")


@pytest.mark.slow
@pytest.mark.parametrize("name", ["e1", "e2", "e3", "e4", "e5", "e6"])
def test_a6_example_reproduction(criterion, full_run, name):
    out = full_run(name)
    s = out.summary
    target, factor = TARGETS[name]
    value = s["err_q_postprocessed"] if name == "e1" else s["err_q"]
    ok = target / factor <= value <= target * factor and s["wall_seconds"] < 900
    criterion(f"A6[{name}]", ok,
              f"err_q={s['err_q']:.3e}, post-processed={s['err_q_postprocessed']:.3e}, "
              f"target {target:.2e} (factor {factor}), {out.mesh.n_triangles} triangles, "
              f"{s['iterations']} iterations ({out.result.reason}), {s['wall_seconds']:.0f}s")


@pytest.mark.slow
def test_a7_topology(criterion, full_run):
    n5 = full_run("e5").summary["components"]
    n6 = full_run("e6").summary["components"]
    criterion("A7", n5 == 4 and n6 == 1, f"e5 components {n5} (want 4), e6 components {n6} (want 1)")


@pytest.mark.slow
def test_a8_noise_robustness(criterion, full_run):
    areas = []
    for seed in range(3):
        out = full_run("e1", seed=seed, sigma=0.01)
        ref = init_from_expression(out.mesh, out.spec.omega_e)
        areas.append(symmetric_difference_area(out.mesh, out.result.phi, ref))
    exact = measure_volume(out.mesh, ref)
    criterion("A8", np.mean(areas) <= 0.5 * exact,
              f"mean |rec xor exact| = {np.mean(areas):.4f} <= {0.5 * exact:.4f} "
              f"(seeds 0-2: {np.round(areas, 4).tolist()})")


def test_a9_geometry_oracles(criterion):
    mesh = build_square_mesh(71)
    h = mesh.h
    errs = []
    for cx, cy, r in ((0.0, 0.0, 0.2), (0.1, -0.05, 0.3), (-0.2, 0.15, 0.4)):
        phi = init_from_expression(mesh, disk(cx, cy, r))
        errs += [measure_volume(mesh, phi) / (np.pi * r * r) - 1, measure_perimeter(mesh, phi) / (2 * np.pi * r) - 1]
    rect = init_from_expression(mesh, get_example("e2").omega_e)
    errs += [measure_volume(mesh, rect) / 0.21 - 1, measure_perimeter(mesh, rect) / 2.0 - 1]
    geo = max(abs(e) for e in errs)
    exact = disk(0.1, -0.05, 0.3)
    phi = 3 * init_from_expression(mesh, exact)
    out = reinitialize(mesh, phi)
    band = np.min(np.abs(out[mesh.triangles]), axis=1) <= 2 * h
    med = float(np.median(np.linalg.norm(element_gradients(mesh, out)[band], axis=1)))
    pts = extract_interface(mesh, out).points.reshape(-1, 2)
    moved = float(np.max(np.abs(exact(pts[:, 0], pts[:, 1]))))
    criterion("A9", abs(h - 0.04) < 0.005 and geo <= 0.02 and abs(med - 1) <= 0.1 and moved <= h,
              f"h={h:.4f}, max relative area/perimeter error {geo:.4f}, "
              f"median |grad phi| {med:.3f}, zero set moved {moved:.2e}")

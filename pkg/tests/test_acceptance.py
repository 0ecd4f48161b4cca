"""End-to-end acceptance gate.

Each test pins one headline guarantee of the package at its contract
tolerance: discretization convergence orders, solution uniqueness,
compatibility screening, the duality-pairing identity, the
punctured-domain flux anomaly, spectral lower bounds, minimizer
exactness and certification, regularity estimation, and bit-level
determinism of the sweep artifact.  Tolerances here are the product
contract; do not loosen them to make a regression pass.
"""

import json
import math

import numpy as np
import pytest

from singfem import (
    CompatibilityError,
    MixedProblem,
    NeumannProblem,
    PlapProblem,
    ScalarField,
    VectorField,
    build_cusp,
    build_rectangle,
    build_unit_square,
    convergence_study,
    counterexample_punctured,
    gradient,
    holder_exponent,
    ibp_residual,
    lp_norm,
    minimality_certificate,
    p_energy,
    p_stationarity,
    partition_by_tags,
    poincare_constant_2,
    refine,
    solve_mixed,
    solve_neumann,
    solve_p_laplace,
    vector_inner,
    w1p_norm,
    weak_divergence,
)
from singfem.cli import main as cli_main
from singfem.fem import flux_trace_from_function
from singfem.plaplace import solve_p_laplace as _solve  # noqa: F401  (re-export sanity)
from scipy.optimize import minimize_scalar


# -- manufactured Dirichlet problem: second-order accuracy --------------------------


def test_dirichlet_laplace_converges_at_second_order():
    report = convergence_study("manufactured_dirichlet", levels=4, base_n=8)
    assert report.fitted["rate"] == pytest.approx(2.0, abs=0.3)
    assert all(r <= 1e-10 for r in report.measurements["residual"])
    assert report.all_passed


# -- mixed problem: the solution does not depend on the iterative start --------------


def _mixed_suite():
    m8 = build_unit_square(8)
    m16 = build_unit_square(16)
    suite = []

    part = partition_by_tags(m8, dirichlet=("left", "right"),
                             neumann=("bottom", "top"))
    suite.append(MixedProblem(part, ScalarField.constant(m8, 0.0),
                              ScalarField.from_function(m8, lambda x, y: x)))

    part = partition_by_tags(m16, dirichlet=("bottom",),
                             neumann=("left", "right", "top"))
    g = ScalarField.from_function(m16, lambda x, y: np.sin(4.0 * x * y))
    f = ScalarField.from_function(m16, lambda x, y: x * (1.0 - x))
    theta = flux_trace_from_function(
        part, "neumann", lambda x, y, nx, ny: x * nx - y * ny)
    suite.append(MixedProblem(part, g, f, theta))

    part = partition_by_tags(m16, dirichlet=("left", "right", "bottom", "top"))
    exact = ScalarField.from_function(
        m16, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    suite.append(MixedProblem(
        part, ScalarField(m16, -2.0 * np.pi**2 * exact.values), exact))
    return suite


def test_mixed_solution_is_unique_across_solver_starts():
    rng = np.random.default_rng(2718)
    for problem in _mixed_suite():
        mesh = problem.partition.mesh
        base, _ = solve_mixed(problem)
        for _ in range(2):
            start = ScalarField(mesh, rng.standard_normal(mesh.num_vertices))
            other, info = solve_mixed(problem, x0=start)
            assert info["residual"] <= 1e-10
            assert w1p_norm(other - base, 2) <= 1e-9


# -- pure Neumann: compatibility screen, recovery order, gauge freedom ---------------


def test_neumann_rejects_incompatible_data_with_unit_defect():
    mesh = build_unit_square(8)
    part = partition_by_tags(mesh, neumann=("left", "right", "bottom", "top"))
    g = ScalarField.constant(mesh, 1.0)
    theta = flux_trace_from_function(part, "boundary",
                                     lambda x, y, nx, ny: 0.0)
    with pytest.raises(CompatibilityError) as err:
        solve_neumann(NeumannProblem(part, g, theta))
    assert err.value.defect == pytest.approx(1.0, abs=1e-10)


def test_neumann_recovers_harmonic_data_at_second_order():
    report = convergence_study("neumann_harmonic", levels=4, base_n=8)
    assert report.fitted["rate"] == pytest.approx(2.0, abs=0.3)
    assert report.all_passed


def test_neumann_gauges_differ_by_a_constant():
    mesh = build_unit_square(16)
    part = partition_by_tags(mesh, neumann=("left", "right", "bottom", "top"))
    g = ScalarField.constant(mesh, 0.0)
    theta = flux_trace_from_function(
        part, "boundary",
        lambda x, y, nx, ny: (3.0 * x**2 - 3.0 * y**2) * nx - 6.0 * x * y * ny)
    u_mean, _ = solve_neumann(NeumannProblem(part, g, theta), gauge="mean")
    u_vertex, _ = solve_neumann(NeumannProblem(part, g, theta), gauge="vertex")
    assert np.ptp(u_mean.values - u_vertex.values) <= 1e-9


# -- integration by parts: exact with the weak divergence, first order otherwise -----


def test_ibp_identity_closes_for_random_pairs():
    mesh = build_unit_square(8)
    part = partition_by_tags(mesh, neumann=("left", "right", "bottom", "top"))
    rng = np.random.default_rng(31415)
    for _ in range(50):
        u = ScalarField(mesh, rng.standard_normal(mesh.num_vertices))
        beta = VectorField(mesh, rng.standard_normal((len(mesh.triangles), 2)))
        div = weak_divergence(part, beta)
        resid = ibp_residual(part, u, beta, div, region="boundary")
        scale = (1.0 + abs(vector_inner(beta, gradient(u)))
                 + lp_norm(u, 2) * lp_norm(div, 2))
        assert abs(resid) / scale <= 1e-10


def test_ibp_residual_decays_at_first_order_with_analytic_divergence():
    report = convergence_study("ibp_smooth", levels=4, base_n=8)
    assert report.fitted["rate"] >= 0.999
    assert report.all_passed


# -- punctured domain: the pairing defect survives refinement ------------------------


def test_punctured_domain_flux_anomaly():
    report = counterexample_punctured(3.0)
    two_pi = 2.0 * math.pi
    for r_in in (1e-2, 1e-3):
        flux = report.fitted[f"abs_residual[r_in={r_in!r}]"]
        assert flux == pytest.approx(two_pi, rel=0.05)
        l2_sq = report.fitted[f"beta_l2_sq[r_in={r_in!r}]"]
        assert l2_sq == pytest.approx(two_pi * math.log(1.0 / r_in), rel=0.03)
    assert report.fitted["r_in_gap_rel"] <= 0.02
    # the conjugate-exponent mass stays bounded while the L^2 mass diverges
    bound = 1.1 * report.fitted["pprime_sup_analytic"]
    assert all(v <= bound for v in report.measurements["beta_pprime_pow"])
    assert report.all_passed


# -- mean-deviation inequality constants ----------------------------------------------


def test_poincare_wirtinger_constants_and_nested_monotonicity():
    coarse = build_unit_square(8)
    mid = refine(coarse)
    fine = refine(mid)
    c_coarse = poincare_constant_2(coarse)
    c_mid = poincare_constant_2(mid)
    c_fine = poincare_constant_2(fine)
    assert c_coarse <= c_mid <= c_fine  # exact, no tolerance
    assert c_fine == pytest.approx(1.0 / math.pi, rel=0.05)

    rect = build_rectangle(2.0, 1.0, 32, 16)
    assert poincare_constant_2(rect) == pytest.approx(2.0 / math.pi, rel=0.05)


# -- p-energy minimizer: exactness, uniqueness, certification -------------------------


def test_p_minimizer_reproduces_affine_data():
    mesh = build_unit_square(4)
    part = partition_by_tags(mesh, dirichlet=("left", "right", "bottom", "top"))
    constraint = frozenset(int(v) for v in part.region_vertices("dirichlet"))
    f = ScalarField.from_function(mesh, lambda x, y: 0.3 + x - 0.5 * y)
    for p in (2.0, 3.0, 4.0, 6.0, 10.0):
        u, report = solve_p_laplace(PlapProblem(mesh, constraint, f, p=p))
        assert float(np.max(np.abs(u.values - f.values))) <= 1e-6
        assert report.stationarity <= 1e-8


def test_p_minimizer_matches_single_node_brute_force():
    mesh = build_unit_square(2)
    center = int(np.argmin(
        np.hypot(mesh.vertices[:, 0] - 0.5, mesh.vertices[:, 1] - 0.5)))
    constraint = frozenset(range(mesh.num_vertices)) - {center}
    f = ScalarField.from_function(mesh, lambda x, y: x * x + 0.5 * y)
    p = 4.0
    u, _ = solve_p_laplace(PlapProblem(mesh, constraint, f, p))

    def energy_of(v):
        vals = f.values.copy()
        vals[center] = v
        return p_energy(ScalarField(mesh, vals), p)

    ref = minimize_scalar(energy_of, bounds=(-5.0, 5.0), method="bounded",
                          options={"xatol": 1e-13})
    assert abs(u.values[center] - ref.x) <= 1e-8


def _certificate_suite():
    m3 = build_unit_square(3)
    m4 = build_unit_square(4)
    every = ("left", "right", "bottom", "top")
    specs = [
        (m3, ("left", "right"), lambda x, y: 1.0 * x, 2.0),
        (m4, ("left", "right"), lambda x, y: x + 0.2 * y**2, 3.0),
        (m3, every, lambda x, y: x**2 - y**2, 4.0),
        (m4, ("bottom", "top"), lambda x, y: y - 0.1 * x, 2.5),
        (m3, every, lambda x, y: 0.3 + x - 0.5 * y, 6.0),
    ]
    for mesh, sides, fn, p in specs:
        rest = tuple(s for s in every if s not in sides)
        part = partition_by_tags(mesh, dirichlet=sides, neumann=rest)
        constraint = frozenset(int(v) for v in part.region_vertices("dirichlet"))
        yield mesh, constraint, ScalarField.from_function(mesh, fn), p


def test_stationarity_agrees_with_minimality_certificate():
    for mesh, constraint, f, p in _certificate_suite():
        u, report = solve_p_laplace(PlapProblem(mesh, constraint, f, p=p))
        assert report.stationarity <= 1e-8
        cert = minimality_certificate(u, p, constraint, trials=100, seed=11).certificate
        assert cert["passed"] and cert["violations"] == 0

        free = sorted(set(range(mesh.num_vertices)) - constraint)
        bumped = ScalarField(mesh, u.values.copy())
        bumped.values[free[len(free) // 2]] += 0.4
        assert p_stationarity(bumped, p, constraint) > 1e-8
        cert = minimality_certificate(bumped, p, constraint,
                                      trials=100, seed=11).certificate
        assert not cert["passed"] and cert["violations"] > 0


def test_p_minimizer_is_seed_invariant():
    mesh = build_unit_square(4)
    part = partition_by_tags(mesh, dirichlet=("left", "right"),
                             neumann=("bottom", "top"))
    constraint = frozenset(int(v) for v in part.region_vertices("dirichlet"))
    f = ScalarField.from_function(mesh, lambda x, y: x + 0.3 * np.sin(3.0 * y))
    u0, _ = solve_p_laplace(PlapProblem(mesh, constraint, f, p=4.0, seed=0))
    u1, _ = solve_p_laplace(PlapProblem(mesh, constraint, f, p=4.0, seed=20260815))
    assert float(np.max(np.abs(u0.values - u1.values))) <= 1e-6


# -- path-metric regularity estimates --------------------------------------------------


def test_holder_exponent_of_lipschitz_field():
    mesh = build_unit_square(32)
    u = ScalarField.from_function(mesh, lambda x, y: x)
    alpha, _ = holder_exponent(mesh, u, n_pairs=2000, seed=0)
    assert 0.9 <= alpha <= 1.1


def test_holder_exponent_of_square_root_field():
    mesh = build_unit_square(32)
    u = ScalarField.from_function(mesh, lambda x, y: np.sqrt(np.hypot(x, y)))
    alpha, _ = holder_exponent(mesh, u, n_pairs=2000, seed=0)
    assert 0.4 <= alpha <= 0.6


def test_cusp_solutions_carry_a_positive_holder_exponent(tmp_path):
    # The hard threshold is positivity of the exponent; the fit quality
    # is part of the shipped report, so assert it on the shipped
    # experiment (fixed substream seeds) rather than on ad-hoc seeds,
    # where the envelope fit wobbles around the 0.8 line.
    out = tmp_path / "run"
    assert cli_main(["verify", "holder_cusp", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] is True
    assert summary["params"]["p_values"] == [2.0, 8.0]
    assert summary["fitted_value"]["alpha_min"] > 0.0
    assert summary["fitted_value"]["fit_quality_min"] >= 0.8

    # positivity alone is seed-robust; check it directly as well
    mesh = build_cusp(3.0, 6)
    part = partition_by_tags(mesh, dirichlet=("right",),
                             neumann=("lower", "upper"))
    constraint = frozenset(int(v) for v in part.region_vertices("dirichlet"))
    f = ScalarField.from_function(mesh, lambda x, y: y)
    for p in (2.0, 8.0):
        u, _ = solve_p_laplace(PlapProblem(mesh, constraint, f, p=p))
        for seed in (0, 1, 2):
            alpha, _ = holder_exponent(mesh, u, n_pairs=4000, seed=seed)
            assert alpha > 0.0


# -- determinism of the sweep artifact -------------------------------------------------


def test_sweep_rerun_is_bit_identical(tmp_path):
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps({
        "domain": {"kind": "unit_square", "n": 3},
        "partition": {"dirichlet": ["left", "right"], "neumann": ["bottom", "top"]},
        "data": {"f": "x + 0.1 * y * y"},
        "p_values": [2.0, 3.5],
        "levels": [0, 1],
    }))
    out = tmp_path / "run"
    argv = ["sweep", "--config", str(cfg_path), "--out", str(out), "--seed", "42"]
    assert cli_main(argv) == 0
    first = (out / "sweep.csv").read_bytes()
    assert cli_main(argv) == 0
    assert (out / "sweep.csv").read_bytes() == first
    rows = first.decode().splitlines()
    assert rows[1] == "p,level,h,n_vertices,energy,stationarity,alpha,fit_r2,status"
    assert all(r.endswith(",ok") for r in rows[2:])

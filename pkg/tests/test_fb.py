"""Base iteration: region, recipe steps, steps, runner, Fejér, FBF."""

import numpy as np
import pytest

from pdsplit import linops, prox
from pdsplit.errors import (
    ConstraintViolation,
    DegenerateProblem,
    DimensionError,
    MissingHistory,
    NonFiniteIterate,
)
from pdsplit.fb import (
    FbParams,
    IterTrace,
    build_m_matrix,
    convergence_region,
    default_step_sizes,
    fb_step,
    fbf_default_step,
    fbf_step,
    fejer_check,
    m_norm,
    relaxation_cap,
    run_fb,
    run_fbf,
    validate_params,
)
from pdsplit.saddle import SaddleProblem, primal_objective, quadratic_loss

import oracles
from conftest import identity_lasso_problem, make_dense_problem


def test_region_reduces_to_two_inequalities_at_kappa_zero():
    l_f, k_norm = 2.0, 1.0
    rng = np.random.default_rng(40)
    for _ in range(200):
        tau = float(rng.uniform(0.05, 2.0))
        sigma = float(rng.uniform(0.05, 2.0))
        valid, _ = convergence_region(l_f, k_norm, 0.0, tau, sigma)
        expected = 1.0 / tau > l_f / 2.0 and 1.0 / (tau * sigma) > k_norm**2
        assert valid == expected


def test_region_reduces_to_ratio_inequality_at_unit_kappa():
    l_f, k_norm = 2.0, 1.5
    rng = np.random.default_rng(41)
    for kappa in (-1.0, 1.0):
        for _ in range(200):
            tau = float(rng.uniform(0.05, 2.0))
            sigma = float(rng.uniform(0.05, 2.0))
            valid, _ = convergence_region(l_f, k_norm, kappa, tau, sigma)
            expected = (
                1.0 / tau > l_f / 2.0
                and (1.0 / tau - l_f / 2.0) / sigma > k_norm**2
            )
            assert valid == expected


def test_region_rejects_overlong_primal_step():
    valid, margins = convergence_region(2.0, 1.0, 0.0, 3.0 / 2.0, 0.1)
    assert not valid
    assert margins["curvature"] < 0


def test_region_shrinks_with_continuum_position():
    valid0, _ = convergence_region(2.0, 1.0, 0.0, 0.9, 1.0)
    valid1, _ = convergence_region(2.0, 1.0, 1.0, 0.9, 1.0)
    assert valid0 and not valid1


def test_region_nests_across_continuum_positions():
    rng = np.random.default_rng(42)
    for _ in range(200):
        tau = float(rng.uniform(0.05, 1.5))
        sigma = float(rng.uniform(0.05, 1.5))
        k1, k2 = sorted(rng.uniform(0.0, 1.0, size=2))
        valid_hi, _ = convergence_region(2.0, 1.0, k2, tau, sigma)
        valid_lo, _ = convergence_region(2.0, 1.0, k1, tau, sigma)
        if valid_hi:
            assert valid_lo


def test_region_rejects_nonpositive_steps():
    with pytest.raises(ConstraintViolation):
        convergence_region(1.0, 1.0, 0.0, 0.0, 0.5)


def test_relaxation_cap_closed_forms():
    tau, sigma, l_f, k_norm = 0.5, 0.4, 2.0, 1.0
    s = tau * sigma * k_norm**2
    assert relaxation_cap(l_f, k_norm, 0.0, tau, sigma) == pytest.approx(
        2.0 - tau * l_f / 2.0
    )
    assert relaxation_cap(l_f, k_norm, 1.0, tau, sigma) == pytest.approx(
        2.0 - (tau * l_f / 2.0) / (1.0 - s)
    )
    assert relaxation_cap(l_f, k_norm, 0.0, 2.0, 2.0) == -np.inf


def test_default_step_sizes_arithmetic_at_unit_scales():
    problem = identity_lasso_problem(np.eye(2), np.zeros(2), 1.0)
    # L_f and ||K|| both carry the 1.01 estimate-safety factor, so compare
    # against the same closed form evaluated at the problem's own constants.
    l_f, k_norm = problem.L_f, problem.k_norm
    tau, sigma = default_step_sizes(problem, 0.0)
    assert tau == pytest.approx(0.9 * 2.0 / l_f)
    half = tau * l_f / 2.0
    assert sigma == pytest.approx(
        0.9 * (1.0 - half) / ((1.0 - half) * tau * k_norm**2)
    )
    assert tau == pytest.approx(1.8, rel=0.03)
    assert sigma == pytest.approx(0.5, rel=0.05)


def test_default_step_sizes_pass_validation_across_continuum(dense_problem):
    problem, _, _, _ = dense_problem
    for kappa in (-1.0, -0.5, 0.0, 0.5, 1.0):
        tau, sigma = default_step_sizes(problem, kappa)
        valid, _ = convergence_region(
            problem.L_f, problem.k_norm, kappa, tau, sigma
        )
        assert valid


def test_default_step_sizes_for_vanishing_loss():
    rng = np.random.default_rng(43)
    k = rng.standard_normal((3, 4))
    problem = SaddleProblem(
        quadratic_loss(np.zeros((1, 4)), np.zeros(1)), k, prox.BoxClip(1.0, 3)
    )
    assert problem.L_f == 0.0
    tau, sigma = default_step_sizes(problem, 0.0)
    assert tau == pytest.approx(1.0 / problem.k_norm)
    assert tau * sigma * problem.k_norm**2 == pytest.approx(0.9)


def test_default_step_sizes_need_some_coupling():
    problem = SaddleProblem(
        quadratic_loss(np.eye(2), np.zeros(2)),
        linops.ZeroOp((2, 2)),
        prox.BoxClip(1.0, 2),
    )
    with pytest.raises(DegenerateProblem):
        default_step_sizes(problem, 0.0)


def test_validate_params_rejects_bad_settings(dense_problem):
    problem, _, _, _ = dense_problem
    with pytest.raises(ConstraintViolation):
        validate_params(problem, FbParams(kappa=1.5))
    with pytest.raises(ConstraintViolation):
        validate_params(problem, FbParams(max_iters=-1))
    with pytest.raises(ConstraintViolation):
        validate_params(problem, FbParams(record_every=0))
    with pytest.raises(ConstraintViolation):
        validate_params(problem, FbParams(tau=3.0 / problem.L_f, sigma=0.01))
    with pytest.raises(ConstraintViolation):
        validate_params(problem, FbParams(relaxation=5.0))


def test_validate_params_recipe_relaxation(dense_problem):
    problem, _, _, _ = dense_problem
    info = validate_params(problem, FbParams())
    assert info["rho"] == pytest.approx(
        0.9 * relaxation_cap(problem.L_f, problem.k_norm, 0.0, info["tau"],
                             info["sigma"])
    )
    assert 0.0 < info["rho"] < info["delta"]


def _dense_pieces(a, b, k, lam):
    grad = lambda x: a.T @ (a @ x - b)
    prox_fn = lambda v, s: np.clip(v, -lam, lam)
    return grad, prox_fn


def test_fb_step_matches_half_extrapolated_form(dense_problem):
    problem, a, b, k = dense_problem
    grad, prox_fn = _dense_pieces(a, b, k, 1.0)
    rng = np.random.default_rng(44)
    x = rng.standard_normal(6)
    y = prox_fn(rng.standard_normal(4), 1.0)
    tau, sigma = 0.1, 0.2
    xt, yt = fb_step(problem, 0.0, tau, sigma, x, y)
    ox, oy = oracles.loris_verhoeven_step(grad, k, prox_fn, tau, sigma, x, y)
    np.testing.assert_allclose(xt, ox, atol=1e-12)
    np.testing.assert_allclose(yt, oy, atol=1e-12)


def test_fb_step_matches_primal_extrapolated_form(dense_problem):
    problem, a, b, k = dense_problem
    grad, prox_fn = _dense_pieces(a, b, k, 1.0)
    rng = np.random.default_rng(45)
    x = rng.standard_normal(6)
    y = prox_fn(rng.standard_normal(4), 1.0)
    tau, sigma = 0.08, 0.15
    xt, yt = fb_step(problem, -1.0, tau, sigma, x, y)
    ox, oy = oracles.condat_vu_step(grad, k, prox_fn, tau, sigma, x, y)
    np.testing.assert_allclose(xt, ox, atol=1e-12)
    np.testing.assert_allclose(yt, oy, atol=1e-12)


def test_fb_step_matches_dual_extrapolated_form(dense_problem):
    problem, a, b, k = dense_problem
    grad, prox_fn = _dense_pieces(a, b, k, 1.0)
    rng = np.random.default_rng(46)
    x = rng.standard_normal(6)
    y = prox_fn(rng.standard_normal(4), 1.0)
    tau, sigma = 0.08, 0.15
    xt, yt = fb_step(problem, 1.0, tau, sigma, x, y)
    ox, oy = oracles.dual_condat_vu_step(grad, k, prox_fn, tau, sigma, x, y)
    np.testing.assert_allclose(xt, ox, atol=1e-12)
    np.testing.assert_allclose(yt, oy, atol=1e-12)


def test_fb_step_collapses_to_gradient_descent_without_coupling():
    problem = SaddleProblem(
        quadratic_loss(np.eye(3), np.array([1.0, 2.0, 3.0])),
        linops.ZeroOp((2, 3)),
        prox.BoxClip(1.0, 2),
    )
    x = np.array([0.5, 0.0, -0.5])
    y = np.array([0.3, -0.3])
    xt, yt = fb_step(problem, 0.7, 0.4, 0.6, x, y)
    np.testing.assert_allclose(xt, x - 0.4 * (x - np.array([1.0, 2.0, 3.0])),
                               atol=1e-15)
    np.testing.assert_array_equal(yt, y)


def test_fb_step_is_stationary_at_closed_form_fixed_point():
    lam = 0.5
    b = np.array([3.0, 0.2, -2.0])
    problem = identity_lasso_problem(np.eye(3), b, lam)
    x_star = np.sign(b) * np.maximum(np.abs(b) - lam, 0.0)
    y_star = b - x_star
    for kappa in (-1.0, 0.0, 0.5, 1.0):
        xt, yt = fb_step(problem, kappa, 0.5, 0.5, x_star, y_star)
        np.testing.assert_allclose(xt, x_star, atol=1e-14)
        np.testing.assert_allclose(yt, y_star, atol=1e-14)


def test_m_matrix_matches_oracle_across_continuum(dense_problem):
    problem, _, _, k = dense_problem
    for kappa in (-1.0, -0.3, 0.0, 0.6, 1.0):
        built = build_m_matrix(problem, kappa, 0.2, 0.3)
        np.testing.assert_allclose(
            built, oracles.metric_matrix(k, kappa, 0.2, 0.3), atol=1e-12
        )
        np.testing.assert_allclose(built, built.T, atol=1e-12)


def test_m_matrix_refuses_oversized_problems():
    rng = np.random.default_rng(47)
    a = np.zeros((1, 1500))
    problem = SaddleProblem(
        quadratic_loss(a, np.zeros(1)),
        linops.matrix_operator(rng.standard_normal((600, 1500))),
        prox.BoxClip(1.0, 600),
    )
    with pytest.raises(DimensionError):
        build_m_matrix(problem, 0.0, 0.1, 0.1)


def test_m_norm_agrees_with_quadratic_form(dense_problem):
    problem, _, _, k = dense_problem
    m = build_m_matrix(problem, 0.4, 0.2, 0.3)
    rng = np.random.default_rng(48)
    d = rng.standard_normal(10)
    assert m_norm(m, d) == pytest.approx(np.sqrt(d @ m @ d))


def test_run_fb_zero_iterations_returns_start(tiny_lasso):
    x0 = np.ones(tiny_lasso.problem.dims[0])
    res = run_fb(tiny_lasso.problem, FbParams(max_iters=0), x0=x0)
    np.testing.assert_array_equal(res.x, x0)
    assert res.iterations == 0
    assert len(res.trace) == 0


def test_run_fb_trace_cadence_and_monotone_index(tiny_lasso):
    res = run_fb(tiny_lasso.problem, FbParams(max_iters=10, record_every=3))
    ks = res.trace.column("k")
    np.testing.assert_array_equal(ks, [3, 6, 9, 10])
    assert np.all(np.diff(ks) > 0)


def test_run_fb_stops_at_tolerance(tiny_lasso):
    res = run_fb(tiny_lasso.problem, FbParams(max_iters=50000), tol=1e-9)
    assert res.converged
    assert res.iterations < 50000
    assert res.trace.column("residual")[-1] <= 1e-9


def test_run_fb_ergodic_average_replays_step_mean(tiny_lasso):
    problem = tiny_lasso.problem
    params = FbParams(max_iters=5, relaxation=1.0)
    res = run_fb(problem, params)
    info = validate_params(problem, params)
    x = np.zeros(problem.dims[0])
    y = np.zeros(problem.dims[1])
    tilde_sum = np.zeros_like(x)
    for _ in range(5):
        xt, yt = fb_step(problem, 0.0, info["tau"], info["sigma"], x, y)
        tilde_sum += xt
        x, y = xt, yt
    expected = primal_objective(problem, tilde_sum / 5.0)
    assert res.trace.column("ergodic_objective")[-1] == pytest.approx(expected)


def test_run_fb_keeps_iterates_when_asked(tiny_lasso):
    res = run_fb(tiny_lasso.problem, FbParams(max_iters=7), keep_iterates=True)
    assert len(res.iterates) == 8
    np.testing.assert_array_equal(res.iterates[0][0],
                                  np.zeros(tiny_lasso.problem.dims[0]))
    np.testing.assert_array_equal(res.iterates[-1][0], res.x)


def test_run_fb_flags_divergence():
    problem = identity_lasso_problem(np.eye(2), np.array([3.0, -1.0]), 0.5)
    params = FbParams(tau=50.0, sigma=50.0, relaxation=1.0, max_iters=2000)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NonFiniteIterate):
            run_fb(problem, params, x0=np.ones(2), validate=False)


def test_run_fb_rejects_mismatched_start(tiny_lasso):
    with pytest.raises(DimensionError):
        run_fb(tiny_lasso.problem, FbParams(max_iters=1), x0=np.zeros(3))


def test_fejer_constant_sequence_at_fixed_point_passes(tiny_lasso,
                                                       tiny_lasso_reference):
    ref = tiny_lasso_reference
    z = (ref.x, ref.y)
    report = fejer_check(tiny_lasso.problem, FbParams(), [z, z, z], z)
    assert report["ok"]
    assert report["first_violation"] is None
    assert report["max_increase"] == pytest.approx(0.0, abs=1e-15)


def test_fejer_reports_first_violation_on_synthetic_sequence(tiny_lasso):
    problem = tiny_lasso.problem
    p, l = problem.dims
    z_star = (np.zeros(p), np.zeros(l))
    direction = np.ones(p)
    # Metric distances proportional to [3, 2, 2.5, 1]: one bump at index 2.
    iterates = [(c * direction, np.zeros(l)) for c in (3.0, 2.0, 2.5, 1.0)]
    report = fejer_check(problem, FbParams(), iterates, z_star)
    assert not report["ok"]
    assert report["first_violation"] == 2
    assert len(report["distances"]) == 4


def test_fejer_requires_history(tiny_lasso):
    with pytest.raises(MissingHistory):
        fejer_check(tiny_lasso.problem, FbParams(),
                    [(np.zeros(5), np.zeros(5))], (np.zeros(5), np.zeros(5)))


def test_fejer_passes_on_valid_run(tiny_lasso, tiny_lasso_reference):
    res = run_fb(tiny_lasso.problem, FbParams(max_iters=300),
                 keep_iterates=True)
    ref = tiny_lasso_reference
    report = fejer_check(tiny_lasso.problem, FbParams(), res.iterates,
                         (ref.x, ref.y))
    assert report["ok"]


def test_fbf_step_matches_oracle(dense_problem):
    problem, a, b, k = dense_problem
    grad, prox_fn = _dense_pieces(a, b, k, 1.0)
    rng = np.random.default_rng(49)
    x = rng.standard_normal(6)
    y = rng.standard_normal(4)
    x_prev = rng.standard_normal(6)
    y_prev = rng.standard_normal(4)
    for a1, a2 in ((0.0, 0.0), (0.3, 0.1)):
        got_x, got_y = fbf_step(problem, 0.05, x, y, x_prev, y_prev, a1, a2)
        exp_x, exp_y = oracles.fbf_inertial_step(
            grad, k, prox_fn, 0.05, x, y, x_prev, y_prev, a1, a2
        )
        np.testing.assert_allclose(got_x, exp_x, atol=1e-12)
        np.testing.assert_allclose(got_y, exp_y, atol=1e-12)


def test_fbf_zero_inertia_without_coupling_is_double_gradient_step():
    problem = SaddleProblem(
        quadratic_loss(np.eye(2), np.zeros(2)),
        linops.ZeroOp((1, 2)),
        prox.BoxClip(1.0, 1),
    )
    x = np.array([1.0, -2.0])
    y = np.zeros(1)
    xt, _ = fbf_step(problem, 0.3, x, y, x, y)
    np.testing.assert_allclose(xt, x - 0.3 * x, atol=1e-15)


def test_fbf_objective_decreases_on_tiny_lasso(tiny_lasso):
    res = run_fbf(tiny_lasso.problem, max_iters=100)
    obj = res.trace.column("objective")
    assert obj[-1] < obj[0]
    assert np.all(np.diff(obj) <= 1e-12)


def test_fbf_rejects_overlong_step(tiny_lasso):
    problem = tiny_lasso.problem
    cap = 1.0 / (problem.L_f + problem.k_norm)
    with pytest.raises(ConstraintViolation):
        run_fbf(problem, tau=cap)
    assert fbf_default_step(problem) == pytest.approx(0.99 * cap)


def test_trace_round_trips_through_csv(tmp_path, tiny_lasso):
    res = run_fb(tiny_lasso.problem, FbParams(max_iters=20, record_every=4))
    path = tmp_path / "trace.csv"
    res.trace.to_csv(path)
    loaded = IterTrace.from_csv(path)
    assert loaded.columns == res.trace.columns
    for col in res.trace.columns:
        got = loaded.column(col)
        want = res.trace.column(col)
        mask = ~np.isnan(want)
        np.testing.assert_array_equal(got[mask], want[mask])
        np.testing.assert_array_equal(np.isnan(got), np.isnan(want))


def test_trace_rejects_mismatched_row_keys():
    trace = IterTrace(["k", "objective"])
    with pytest.raises(DimensionError):
        trace.append(k=1.0, wrong=2.0)

import numpy as np
import pytest

from cascade_spe.lm import FitProblem, lm_minimize, numerical_jacobian

from oracles import five_point_jacobian


def two_exp(x, p):
    return p[0] * np.exp(-p[1] * x) + p[2] * np.exp(-p[3] * x)


def two_exp_jac(x, p):
    e1, e2 = np.exp(-p[1] * x), np.exp(-p[3] * x)
    return np.column_stack([e1, -p[0] * x * e1, e2, -p[2] * x * e2])


TRUE_2EXP = np.array([3.0, 0.5, 1.0, 4.0])
X_2EXP = np.linspace(0, 8, 120)


def test_linear_model_exact_in_two_iterations():
    x = np.arange(1.0, 11.0)
    prob = FitProblem(x, 2.5 * x, lambda x, p: p[0] * x, [1.0], jacobian=lambda x, p: x[:, None])
    res = lm_minimize(prob)
    assert res.converged
    assert res.n_iterations <= 2
    assert res.parameters[0] == 2.5
    assert res.chi2 == 0.0


def test_two_exponential_exact_init_is_fixed_point():
    prob = FitProblem(X_2EXP, two_exp(X_2EXP, TRUE_2EXP), two_exp, TRUE_2EXP, jacobian=two_exp_jac)
    res = lm_minimize(prob)
    assert res.converged and res.n_iterations == 0
    np.testing.assert_allclose(res.parameters, TRUE_2EXP, rtol=1e-8)


@pytest.mark.parametrize("scale", [0.98, 1.02])
def test_two_exponential_zero_residual_converges_quickly(scale):
    prob = FitProblem(X_2EXP, two_exp(X_2EXP, TRUE_2EXP), two_exp, TRUE_2EXP * scale, jacobian=two_exp_jac)
    res = lm_minimize(prob)
    assert res.converged and res.n_iterations <= 5
    np.testing.assert_allclose(res.parameters, TRUE_2EXP, rtol=1e-8)


def test_two_exponential_far_start_recovers():
    prob = FitProblem(X_2EXP, two_exp(X_2EXP, TRUE_2EXP), two_exp, [1.0, 0.2, 2.0, 2.0], jacobian=two_exp_jac)
    res = lm_minimize(prob)
    assert res.converged
    np.testing.assert_allclose(res.parameters, TRUE_2EXP, rtol=1e-8)


def test_numerical_jacobian_fallback_agrees():
    y = two_exp(X_2EXP, TRUE_2EXP)
    a = lm_minimize(FitProblem(X_2EXP, y, two_exp, TRUE_2EXP * 1.05, jacobian=two_exp_jac))
    b = lm_minimize(FitProblem(X_2EXP, y, two_exp, TRUE_2EXP * 1.05))
    np.testing.assert_allclose(a.parameters, b.parameters, rtol=1e-7)


def test_analytic_jacobian_matches_stencil_at_random_points():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = TRUE_2EXP * rng.uniform(0.3, 3.0, 4)
        ref = five_point_jacobian(lambda q: two_exp(X_2EXP, q), p)
        np.testing.assert_allclose(two_exp_jac(X_2EXP, p), ref, rtol=1e-6, atol=1e-9 * np.abs(ref).max())
    ref = five_point_jacobian(lambda q: two_exp(X_2EXP, q), TRUE_2EXP)
    np.testing.assert_allclose(numerical_jacobian(two_exp, X_2EXP, TRUE_2EXP), ref, rtol=1e-6, atol=1e-9)


def test_upper_bound_is_respected_and_gradient_projected():
    x = np.linspace(0, 1, 20)
    prob = FitProblem(x, 3.0 * x + 1.0, lambda x, p: p[0] * x + p[1], [1.0, 0.0],
                      jacobian=lambda x, p: np.column_stack([x, np.ones_like(x)]),
                      upper=[2.0, np.inf])
    res = lm_minimize(prob)
    assert res.converged
    assert res.parameters[0] == 2.0
    # with the slope pinned the best intercept is the mean misfit
    assert res.parameters[1] == pytest.approx(1.0 + 0.5, rel=1e-9)


def test_lower_bound_at_start():
    x = np.linspace(0, 1, 20)
    prob = FitProblem(x, -x, lambda x, p: p[0] * x, [0.0], jacobian=lambda x, p: x[:, None], lower=[0.0])
    res = lm_minimize(prob)
    assert res.converged and res.parameters[0] == 0.0


def test_fixed_parameter_stays():
    y = two_exp(X_2EXP, TRUE_2EXP)
    start = TRUE_2EXP * np.array([1.1, 1.0, 0.9, 1.1])
    res = lm_minimize(FitProblem(X_2EXP, y, two_exp, start, jacobian=two_exp_jac,
                                 fixed=[False, True, False, False]))
    assert res.converged
    np.testing.assert_allclose(res.parameters, TRUE_2EXP, rtol=1e-8)
    assert res.covariance[1, 1] == 0.0 and np.all(res.covariance[1] == 0)


def test_singular_normal_matrix_reported():
    x = np.linspace(0, 1, 10)
    # a and b only enter as a + b
    prob = FitProblem(x, 2 * x, lambda x, p: (p[0] + p[1]) * x, [0.5, 0.5],
                      jacobian=lambda x, p: np.column_stack([x, x]))
    res = lm_minimize(prob)
    assert res.singular
    assert "singular" in res.message and "condition number" in res.message
    assert res.parameters.sum() == pytest.approx(2.0, rel=1e-12)
    assert np.all(np.isinf(res.errors))


def test_non_convergence_flagged_with_best_point():
    y = two_exp(X_2EXP, TRUE_2EXP)
    start = np.array([1.0, 0.2, 2.0, 2.0])
    res = lm_minimize(FitProblem(X_2EXP, y, two_exp, start, jacobian=two_exp_jac), max_iter=2)
    assert not res.converged and res.n_iterations == 2
    assert "maximum iterations" in res.message
    start_cost = float(np.sum((two_exp(X_2EXP, start) - y) ** 2))
    assert res.chi2 < start_cost


def test_converged_results_meet_gradient_criterion():
    rng = np.random.default_rng(5)
    y = two_exp(X_2EXP, TRUE_2EXP) + rng.normal(0, 0.01, X_2EXP.size)
    res = lm_minimize(FitProblem(X_2EXP, y, two_exp, TRUE_2EXP * 1.3, jacobian=two_exp_jac))
    assert res.converged and res.gradient_norm <= 1e-8
    c = res.covariance
    np.testing.assert_array_equal(c, c.T)
    assert np.all(np.linalg.eigvalsh(c) >= 0)


def test_covariance_calibration():
    # the scatter of fitted values over noise draws matches the reported errors
    rng = np.random.default_rng(8)
    x = np.linspace(0, 5, 60)
    truth = np.array([2.0, 0.7])
    f = lambda x, p: p[0] * np.exp(-p[1] * x)
    fits, errs = [], []
    for _ in range(300):
        y = f(x, truth) + rng.normal(0, 0.05, x.size)
        res = lm_minimize(FitProblem(x, y, f, truth))
        fits.append(res.parameters)
        errs.append(res.errors)
    spread = np.std(fits, axis=0)
    np.testing.assert_allclose(np.mean(errs, axis=0), spread, rtol=0.15)
    # absolute weights: covariance is the unscaled inverse normal matrix
    y = f(x, truth) + rng.normal(0, 0.05, x.size)
    w = np.full(x.size, 1 / 0.05**2)
    a = lm_minimize(FitProblem(x, y, f, truth, weights=w), absolute_weights=True)
    b = lm_minimize(FitProblem(x, y, f, truth, weights=w))
    np.testing.assert_allclose(b.covariance, a.covariance * b.reduced_chi2, rtol=1e-12)


@pytest.mark.parametrize("kwargs, match", [
    (dict(weights=[-1.0] * 5), "non-negative"),
    (dict(lower=[2.0], upper=[1.0]), "lower bound"),
    (dict(lower=[2.0]), "outside the bounds"),
    (dict(weights=[1.0, 0, 0, 0, 0], initial=[1.0, 1.0]), "weighted observations"),
])
def test_problem_validation(kwargs, match):
    base = dict(x=np.arange(5.0), y=np.arange(5.0), model=lambda x, p: p[0] * x, initial=[1.0])
    base.update(kwargs)
    with pytest.raises(ValueError, match=match):
        FitProblem(**base)

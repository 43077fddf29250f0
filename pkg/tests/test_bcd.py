import numpy as np
import pytest

from conftest import crandn
from polarblind.bcd import (
    BcdConfig,
    RefinementState,
    backtracking_step,
    default_r_bounds,
    effective_dictionary,
    grad_reduced_inv_distance,
    grad_reduced_theta,
    init_from_support,
    objective_f,
    project_onto_channel,
    reduced_objective,
    run_bcd,
    update_delta,
    update_gamma,
)
from polarblind.errors import (
    ConfigError,
    DegenerateChannelError,
    DegenerateDataError,
    DimensionMismatchError,
    RankDeficientError,
)
from polarblind.geometry import fraunhofer_distance, steering_matrix


def _random_point(rng, n_paths, r_lo=0.2, r_hi=1.4):
    # pairwise-separated angles keep the steering columns well conditioned
    while True:
        theta = np.sort(rng.uniform(-0.7, 0.7, n_paths))
        if n_paths == 1 or np.min(np.diff(theta)) > 0.05:
            break
    r = rng.uniform(r_lo, r_hi, n_paths)
    return theta, r


def test_config_validation():
    with pytest.raises(ConfigError):
        BcdConfig(max_iters=-1)
    with pytest.raises(ConfigError):
        BcdConfig(beta=1.0)
    with pytest.raises(ConfigError):
        BcdConfig(c_armijo=0.0)
    with pytest.raises(ConfigError):
        BcdConfig(eps2_rel=-1e-9)


def test_effective_dictionary(geom32):
    theta, r = np.array([0.1, -0.3]), np.array([0.5, 0.9])
    np.testing.assert_allclose(
        effective_dictionary(geom32, theta, r), steering_matrix(geom32, theta, r)
    )
    with pytest.raises(DimensionMismatchError):
        effective_dictionary(geom32, theta, r[:1])


def test_objective_f_hand_value():
    y = np.array([[1.0 + 0j, 0.0], [0.0, 1.0]])
    w = np.array([[1.0 + 0j], [0.0]])
    gamma = np.array([1.0 + 0j])
    delta = np.array([1.0 + 0j, 0.0])
    # residual = [[0,0],[0,1]] -> F = 1
    assert objective_f(y, w, gamma, delta) == pytest.approx(1.0)


def test_reduced_objective_matches_least_squares(geom32):
    # Phi equals the best block-fit residual energy minus ||Y||^2
    rng = np.random.default_rng(0)
    for _ in range(20):
        n_paths = int(rng.integers(1, 4))
        theta, r = _random_point(rng, n_paths)
        y = crandn(rng, 32, 6)
        w = steering_matrix(geom32, theta, r)
        coef, *_ = np.linalg.lstsq(w, y, rcond=None)
        resid = y - w @ coef
        expected = float(np.real(np.vdot(resid, resid)) - np.real(np.vdot(y, y)))
        np.testing.assert_allclose(
            reduced_objective(y, geom32, theta, r), expected, rtol=1e-9, atol=1e-9
        )


def test_reduced_objective_rank_deficient(geom32):
    y = crandn(np.random.default_rng(1), 32, 4)
    with pytest.raises(RankDeficientError):
        reduced_objective(y, geom32, [0.2, 0.2], [0.7, 0.7])


def test_reduced_gradients_match_finite_differences(geom32):
    rng = np.random.default_rng(2)
    for _ in range(30):
        n_paths = int(rng.integers(1, 4))
        theta, r = _random_point(rng, n_paths)
        y = crandn(rng, 32, 6)

        g_th = grad_reduced_theta(y, geom32, theta, r)
        h = 1e-6
        fd = np.empty(n_paths)
        for l in range(n_paths):
            tp, tm = theta.copy(), theta.copy()
            tp[l] += h
            tm[l] -= h
            fd[l] = (reduced_objective(y, geom32, tp, r) - reduced_objective(y, geom32, tm, r)) / (2 * h)
        assert np.linalg.norm(g_th - fd) <= 1e-5 * max(np.linalg.norm(g_th), 1e-9)

        g_u = grad_reduced_inv_distance(y, geom32, theta, r)
        u = 1.0 / r
        h = 1e-4
        for l in range(n_paths):
            up, um = u.copy(), u.copy()
            up[l] += h
            um[l] -= h
            fd[l] = (
                reduced_objective(y, geom32, theta, 1.0 / up)
                - reduced_objective(y, geom32, theta, 1.0 / um)
            ) / (2 * h)
        assert np.linalg.norm(g_u - fd) <= 1e-5 * max(np.linalg.norm(g_u), 1e-9)


def test_backtracking_step_quadratic():
    target = np.array([2.0, -1.0])
    f = lambda x: float(np.sum((x - target) ** 2))
    cfg = BcdConfig()
    rng = np.random.default_rng(0)
    for _ in range(30):
        x0 = rng.normal(0.0, 3.0, 2)
        g = 2.0 * (x0 - target)
        x_new, step = backtracking_step(f, x0, g, cfg)
        assert step > 0  # a descent direction on a smooth f must be accepted
        assert f(x_new) <= f(x0) - cfg.c_armijo * step * float(g @ g) + 1e-12
    # fixed step that overshoots every trial: declared null
    x0 = np.array([2.0 + 1e-3, -1.0])
    x_new, step = backtracking_step(
        f, x0, 2.0 * (x0 - target), BcdConfig(eta0=1e9, max_backtracks=0)
    )
    np.testing.assert_array_equal(x_new, x0)
    assert step == 0.0
    # zero gradient: no move, step reported
    x_new, step = backtracking_step(f, x0, np.zeros(2), cfg)
    np.testing.assert_array_equal(x_new, x0)
    assert step > 0


def test_update_gamma_matches_lstsq_oracle(geom32):
    rng = np.random.default_rng(3)
    for _ in range(15):
        n_paths = int(rng.integers(1, 4))
        theta, r = _random_point(rng, n_paths)
        w = steering_matrix(geom32, theta, r)
        y = crandn(rng, 32, 5)
        delta = crandn(rng, 5)
        gamma = update_gamma(y, w, delta)
        # vec(Y) = (delta kron W) gamma in column-major stacking
        a = np.kron(delta.reshape(-1, 1), w)
        ref, *_ = np.linalg.lstsq(a, y.flatten(order="F"), rcond=None)
        np.testing.assert_allclose(gamma, ref, atol=1e-9)
    with pytest.raises(DegenerateDataError):
        update_gamma(y, w, np.zeros(5, dtype=complex))


def test_update_delta_matches_per_column_lstsq(geom32):
    rng = np.random.default_rng(4)
    theta, r = _random_point(rng, 2)
    w = steering_matrix(geom32, theta, r)
    gamma = crandn(rng, 2)
    y = crandn(rng, 32, 5)
    delta = update_delta(y, w, gamma)
    c = (w @ gamma).reshape(-1, 1)
    for s in range(5):
        ref, *_ = np.linalg.lstsq(c, y[:, s], rcond=None)
        np.testing.assert_allclose(delta[s], ref[0], atol=1e-9)
    with pytest.raises(DegenerateChannelError):
        update_delta(y, w, np.zeros(2, dtype=complex))


def test_project_onto_channel_hand_value():
    y = np.array([[2.0 + 0j, 0.0], [0.0, 4.0]])
    h = np.array([1.0 + 0j, 1.0])
    np.testing.assert_allclose(project_onto_channel(y, h), np.array([1.0, 2.0]), atol=1e-12)


def test_init_from_support(dict32):
    rf = fraunhofer_distance(dict32.geometry)
    bounds = (rf / 20.0, 10.0 * rf)
    gamma0 = np.array([1.0 + 1j, -2.0])
    delta0 = np.array([0.5, 0.25, 1j])
    # atom 0 is the far-field sample of the first angle; its infinite range
    # must be pulled onto the far clamp
    state = init_from_support(dict32, [0, 8], gamma0, delta0, bounds)
    assert state.theta[0] == dict32.angles[0]
    assert state.r[0] == bounds[1]
    np.testing.assert_allclose(state.r[1], dict32.distances[8])
    state.gamma[0] = 0.0
    assert gamma0[0] != 0.0  # inputs are copied, not aliased


def test_default_r_bounds(geom32):
    rf = fraunhofer_distance(geom32)
    np.testing.assert_allclose(default_r_bounds(geom32), (rf / 20.0, 10.0 * rf))


def _model_instance(rng, geom, n_paths=2, s_len=6, noise=0.1):
    theta, r = _random_point(rng, n_paths)
    gamma = crandn(rng, n_paths) / np.sqrt(2)
    delta = crandn(rng, s_len) / np.sqrt(2)
    y = np.outer(steering_matrix(geom, theta, r) @ gamma, delta)
    y += noise * crandn(rng, *y.shape)
    init = RefinementState(
        theta=theta + rng.normal(0.0, 0.01, n_paths),
        r=r * (1.0 + rng.normal(0.0, 0.05, n_paths)),
        gamma=gamma.copy(),
        delta=delta.copy(),
    )
    return y, init, (theta, r)


def test_run_bcd_objective_nonincreasing(geom32):
    rng = np.random.default_rng(5)
    cfg = BcdConfig(max_iters=8, eps2_rel=0.0, max_backtracks=20)
    for _ in range(30):
        y, init, _ = _model_instance(rng, geom32, n_paths=int(rng.integers(1, 4)))
        state = run_bcd(y, geom32, init, cfg, collect_trace=True)
        f_vals = [row[2] for row in state.trace]
        assert len(f_vals) > 0
        for a, b in zip(f_vals, f_vals[1:]):
            assert b <= a + 1e-12 * max(1.0, abs(a))
        assert state.objective == pytest.approx(f_vals[-1])


def test_run_bcd_improves_fit(geom32):
    rng = np.random.default_rng(6)
    cfg = BcdConfig(max_iters=10, eps2_rel=0.0)
    y, init, _ = _model_instance(rng, geom32, noise=0.02)
    f0 = objective_f(
        y, steering_matrix(geom32, init.theta, init.r), init.gamma, init.delta
    )
    state = run_bcd(y, geom32, init, cfg)
    assert state.objective < f0
    lo, hi = default_r_bounds(geom32)
    assert np.all(state.r >= lo - 1e-12) and np.all(state.r <= hi + 1e-12)
    assert np.all(np.abs(state.theta) < np.pi / 2)


def test_run_bcd_stops_below_tolerance(geom32):
    # init exactly at a noiseless optimum: the fit is already below the
    # relative tolerance, so no sweep runs and the state passes through
    rng = np.random.default_rng(7)
    y, init, truth = _model_instance(rng, geom32, noise=0.0)
    init = RefinementState(theta=truth[0], r=truth[1], gamma=init.gamma, delta=init.delta)
    state = run_bcd(y, geom32, init, BcdConfig(max_iters=10, eps2_rel=1e-6))
    assert state.n_iters == 0
    np.testing.assert_array_equal(state.theta, truth[0])
    assert state.objective <= 1e-6 * float(np.real(np.vdot(y, y)))


def test_run_bcd_flags_alternation_fixed_point(geom32):
    # pre-converge the closed-form blocks, then force both line searches to
    # reject their single oversized trial step: sweep 1 moves nothing and the
    # run must stop with the fixed point flagged
    rng = np.random.default_rng(8)
    y, init, truth = _model_instance(rng, geom32, noise=0.05)
    theta, r = truth
    w = steering_matrix(geom32, theta, r)
    gamma, delta = init.gamma, init.delta
    for _ in range(200):
        g_new = update_gamma(y, w, delta)
        d_new = update_delta(y, w, g_new)
        if np.allclose(g_new, gamma, rtol=0.0, atol=1e-13) and np.allclose(
            d_new, delta, rtol=0.0, atol=1e-13
        ):
            gamma, delta = g_new, d_new
            break
        gamma, delta = g_new, d_new
    init = RefinementState(theta=theta, r=r, gamma=gamma, delta=delta)
    cfg = BcdConfig(max_iters=10, eps2_rel=0.0, eta0=1e6, max_backtracks=0)
    state = run_bcd(y, geom32, init, cfg)
    assert state.stationary
    assert state.n_iters == 1
    np.testing.assert_array_equal(state.theta, theta)


def test_run_bcd_input_validation(geom32):
    rng = np.random.default_rng(9)
    y, init, _ = _model_instance(rng, geom32)
    with pytest.raises(DimensionMismatchError):
        run_bcd(y[:, 0], geom32, init)
    empty = RefinementState(
        theta=np.array([]), r=np.array([]), gamma=np.array([]), delta=init.delta
    )
    with pytest.raises(ConfigError):
        run_bcd(y, geom32, empty)
    short = RefinementState(
        theta=init.theta, r=init.r, gamma=init.gamma, delta=init.delta[:-1]
    )
    with pytest.raises(DimensionMismatchError):
        run_bcd(y, geom32, short)


def test_channel_estimate(geom32):
    rng = np.random.default_rng(10)
    theta, r = _random_point(rng, 2)
    gamma = crandn(rng, 2)
    state = RefinementState(theta=theta, r=r, gamma=gamma, delta=crandn(rng, 4))
    np.testing.assert_allclose(
        state.channel_estimate(geom32), steering_matrix(geom32, theta, r) @ gamma
    )

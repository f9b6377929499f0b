import numpy as np
import pytest

from bcmac import (
    ChannelSet,
    LinearConstraint,
    SinrTargets,
    SolverSettings,
    kkt_residual_wsr,
    mac_rates,
    mac_sinr,
    solve_power_min_mac,
    solve_sinr_balance_mac,
    solve_wsr_mac,
)
from bcmac import linalg, macsolver
from bcmac.errors import InfeasibleTargets, InvalidInput, SingularConstraintMatrix
from bcmac.model import CovarianceSet
from bcmac.oracles import GridSpec, brute_sinr_balance, brute_wsr, finite_diff_gradient

from conftest import rand_channels, rand_pd, random_mac_cov


TIGHT = SolverSettings(tol=1e-8)


def test_wsr_scalar_closed_form():
    ch = ChannelSet([[[2.0]]])
    sol = solve_wsr_mac(ch, [[0.5]], 3.0, [1.5], TIGHT)
    assert sol.objective == pytest.approx(1.5 * np.log(1 + 3 * 4 / 0.5), rel=1e-10)
    assert sol.converged


def test_wsr_zero_budget(rng):
    ch = ChannelSet(rand_channels(rng, 2, 2, 2))
    sol = solve_wsr_mac(ch, np.eye(2), 0.0, [1, 1])
    assert sol.objective == 0.0
    assert all(np.allclose(Q, 0) for Q in sol.cov.Q)


def test_wsr_budget_tight_and_kkt(rng):
    for _ in range(5):
        ch = ChannelSet(rand_channels(rng, 2, 2, 2))
        A = rand_pd(rng, 2)
        sol = solve_wsr_mac(ch, A, 2.0, [2.0, 1.0], TIGHT)
        used = sum(np.trace(Q).real for Q in sol.cov.Q)
        assert used == pytest.approx(2.0, abs=1e-8)
        assert sol.kkt_residual <= 10 * TIGHT.tol
        assert sol.converged


def test_wsr_matches_grid_oracle(rng):
    for _ in range(3):
        ch = ChannelSet(rand_channels(rng, 2, 2, 2, real=True))
        X = rng.normal(size=(2, 2))
        A = X @ X.T + 0.3 * np.eye(2)
        w = np.sort(rng.uniform(0.5, 2.0, 2))[::-1]
        sol = solve_wsr_mac(ch, A, 2.0, w, TIGHT)
        ref = brute_wsr(ch, [LinearConstraint(A, 2.0)], w,
                        GridSpec(resolution=15, rounds=6, shrink=0.45))
        assert sol.objective == pytest.approx(ref, abs=1e-3)


def test_wsr_whitened_equivalence(rng):
    ch = ChannelSet(rand_channels(rng, 2, 2, 2))
    A = rand_pd(rng, 2)
    W = linalg.inv_sqrt(A)
    ch_wh = ChannelSet([Hi @ W for Hi in ch.H])
    s1 = solve_wsr_mac(ch, A, 2.0, [1, 1], TIGHT)
    s2 = solve_wsr_mac(ch_wh, np.eye(2), 2.0, [1, 1], TIGHT)
    assert s1.objective == pytest.approx(s2.objective, abs=1e-7)


def test_wsr_objective_equals_rates(rng):
    ch = ChannelSet(rand_channels(rng, 3, 2, 2), encoding_order=[1, 2, 0])
    A = rand_pd(rng, 2)
    w = [3.0, 2.0, 1.0]
    sol = solve_wsr_mac(ch, A, 1.5, w, TIGHT)
    r = mac_rates(ch, sol.cov, A)
    order_w = np.array(w)
    assert sol.objective == pytest.approx(float(order_w @ r), abs=1e-10)


def test_wsr_rejects_singular_noise(rng):
    ch = ChannelSet(rand_channels(rng, 2, 2, 2))
    with pytest.raises(SingularConstraintMatrix):
        solve_wsr_mac(ch, np.diag([1.0, 0.0]), 1.0, [1, 1])


def test_wsr_monotone_iterates(rng):
    """Armijo-accepted steps never decrease the objective."""
    ch = ChannelSet(rand_channels(rng, 2, 2, 2))
    Ghat = macsolver._whitened(ch, np.eye(2), 1e-8)
    coeffs = macsolver._rate_coeffs(ch, [1.5, 1.0])
    Z = [np.zeros((2, 2), dtype=complex) for _ in range(2)]
    obj = macsolver._objective(ch, Ghat, coeffs, Z)
    for _ in range(25):
        grads = macsolver._gradient(ch, Ghat, coeffs, Z)
        Z = macsolver._project_blocks(
            [Z[i] + 0.2 * grads[i] for i in range(2)], 2.0)
        new_obj = macsolver._objective(ch, Ghat, coeffs, Z)
        assert new_obj >= obj - 1e-12
        obj = new_obj


def test_gradient_matches_finite_differences(rng):
    for _ in range(10):
        K = int(rng.integers(1, 3))
        ch = ChannelSet(rand_channels(rng, K, 2, 2))
        A = rand_pd(rng, 2)
        Ghat = macsolver._whitened(ch, A, 1e-8)
        w = rng.uniform(0.5, 2.0, K)
        coeffs = macsolver._rate_coeffs(ch, w)
        Z = [rand_pd(rng, 2, 0.5) for _ in range(K)]
        grads = macsolver._gradient(ch, Ghat, coeffs, Z)
        for i in range(K):
            def f(Qi, i=i):
                Zi = [Qi if j == i else Z[j] for j in range(K)]
                return macsolver._objective(ch, Ghat, coeffs, Zi)

            G_fd = finite_diff_gradient(f, Z[i], 1e-5)
            scale = max(1.0, np.max(np.abs(grads[i])))
            assert np.max(np.abs(G_fd - grads[i])) <= 1e-5 * scale


def test_kkt_residual_scalar_optimum():
    # single-user scalar water-filling: optimum puts all power on the channel
    ch = ChannelSet([[[1.0]]])
    cov = CovarianceSet("mac", [[[2.0]]])
    res = kkt_residual_wsr(ch, [[1.0]], 2.0, [1.0], cov)
    assert res < 1e-10


def test_kkt_residual_detects_suboptimal(rng):
    ch = ChannelSet(rand_channels(rng, 2, 2, 2))
    cov = random_mac_cov(rng, 2, 2, 2.0)
    res = kkt_residual_wsr(ch, np.eye(2), 2.0, [1, 1], cov)
    assert res > 1e-3


def test_kkt_residual_after_solve(rng):
    ch = ChannelSet(rand_channels(rng, 2, 2, 2))
    A = rand_pd(rng, 2)
    sol = solve_wsr_mac(ch, A, 2.0, [1.0, 1.0], TIGHT)
    res = kkt_residual_wsr(ch, A, 2.0, [1.0, 1.0], sol.cov)
    assert res <= 10 * TIGHT.tol


def test_balance_scalar_closed_form():
    ch = ChannelSet([[[1.5]]])
    alpha, bf = solve_sinr_balance_mac(ch, [[0.7]], 2.0, SinrTargets([2.0]), TIGHT)
    assert alpha == pytest.approx(2.0 * 1.5 ** 2 / (0.7 * 2.0), rel=1e-9)


def test_balance_orthogonal_split():
    ch = ChannelSet([[[1.0, 0.0]], [[0.0, 2.0]]])
    gam = SinrTargets([1.0, 1.0])
    alpha, bf = solve_sinr_balance_mac(ch, np.eye(2), 3.0, gam, TIGHT)
    # independent water-level: q_i |h_i|^2 = alpha, sum q = budget
    assert alpha == pytest.approx(3.0 / (1.0 + 0.25), rel=1e-9)


def test_balance_equal_ratio_and_budget(rng):
    for _ in range(5):
        K = int(rng.integers(1, 4))
        ch = ChannelSet(rand_channels(rng, K, 1, 3), sigma2=rng.uniform(0.5, 2, K))
        A = rand_pd(rng, 3)
        gam = SinrTargets(rng.uniform(0.5, 2.0, K))
        alpha, bf = solve_sinr_balance_mac(ch, A, 2.0, gam, TIGHT)
        s = mac_sinr(ch, bf, A)
        ratios = np.array([s[i][0] / gam.gamma[i] for i in range(K)])
        assert np.max(np.abs(ratios - alpha)) <= 1e-6 * alpha
        used = sum(ch.sigma2[i] * bf.q[i][0] for i in range(K))
        assert used == pytest.approx(2.0, abs=1e-8)


def test_balance_scenario_channels_vs_grid():
    H1 = [[1.0, 0.0], [0.5, 0.6]]
    H2 = [[0.4, 0.0], [0.5, 1.5]]
    ch = ChannelSet([H1, H2])
    gam = SinrTargets([1.0, 1.0])
    alpha, bf = solve_sinr_balance_mac(ch, np.eye(2), 10.0, gam,
                                       SolverSettings(tol=1e-10))
    ref = brute_sinr_balance(ch, [LinearConstraint(np.eye(2), 10.0)], gam,
                             GridSpec(resolution=40, rounds=7, shrink=0.35))
    assert alpha == pytest.approx(ref, abs=1e-3)


def test_power_min_scalar():
    ch = ChannelSet([[[1.5]]])
    tot, bf = solve_power_min_mac(ch, [[0.7]], SinrTargets([2.0]))
    assert tot == pytest.approx(0.7 * 2.0 / 1.5 ** 2, rel=1e-12)


def test_power_min_small_targets(rng):
    ch = ChannelSet(rand_channels(rng, 2, 1, 2))
    tots = []
    for g in (1e-3, 1e-6, 1e-9):
        tot, _ = solve_power_min_mac(ch, np.eye(2), SinrTargets([g, g]))
        tots.append(tot)
    assert tots[0] > tots[1] > tots[2]
    assert tots[2] < 1e-8


def test_power_min_meets_targets_exactly(rng):
    for _ in range(5):
        K = int(rng.integers(1, 4))
        ch = ChannelSet(rand_channels(rng, K, 1, 3), sigma2=rng.uniform(0.5, 2, K))
        A = rand_pd(rng, 3)
        gam = SinrTargets(rng.uniform(0.5, 3.0, K))
        tot, bf = solve_power_min_mac(ch, A, gam)
        s = mac_sinr(ch, bf, A)
        for i in range(K):
            assert s[i][0] == pytest.approx(gam.gamma[i], rel=1e-8)


def test_power_min_infeasible_zero_channel():
    ch = ChannelSet([[[0.0, 0.0]]])
    with pytest.raises(InfeasibleTargets):
        solve_power_min_mac(ch, np.eye(2), SinrTargets([1.0]))


def test_settings_validation():
    with pytest.raises(InvalidInput):
        SolverSettings(tol=0.0)
    with pytest.raises(InvalidInput):
        SolverSettings(armijo_beta=1.5)

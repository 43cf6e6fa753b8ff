import itertools
import math

import numpy as np
import pytest

from oracles.compute_oracles import brute_force_alpha_beta
from zerorate import JointDistribution, ResourceCapError, ValidationError
from zerorate.exact import ExactEvaluator, exact_tradeoff, monte_carlo_tradeoff, ppv_beta_bound, ppv_moments
from zerorate.geometry import entropy_from_marginals, projection_of
from zerorate.schemes import SchemeSpec, oracle_tradeoff


@pytest.fixture(scope="module")
def ev20(P, Q, solver):
    return ExactEvaluator(P, Q, 20, solver=solver)


def test_threshold_above_statistic_range(P, Q, solver, ev20):
    llr = solver.solve(0.0).llr
    pt = ev20.evaluate(SchemeSpec.np_like(lam=0.0, tau=float(llr.table.max()) + 1.0))
    assert (pt.alpha, pt.beta) == (1.0, 0.0)


def test_completeness(ev20):
    s = SchemeSpec.np_like(tau=0.03)
    pt = ev20.evaluate(s)
    acc_p, _ = ev20.acceptance_mass(s)
    assert pt.alpha + acc_p == pytest.approx(1.0, abs=1e-10)


def test_log_errors_consistent(ev20):
    pt = ev20.evaluate(SchemeSpec.hk(0.1))
    assert math.exp(pt.log_alpha) == pytest.approx(pt.alpha, rel=1e-12)
    assert math.exp(pt.log_beta) == pytest.approx(pt.beta, rel=1e-12)


@pytest.mark.parametrize("n", [3, 6, 8])
def test_np_like_matches_outcome_brute_force(P, Q, solver, n):
    llr = solver.solve(0.02).llr
    pt = exact_tradeoff(SchemeSpec.np_like(lam=0.02), P, Q, n, solver=solver)
    accept = lambda kx, ky: llr.marginal_statistic([n - kx, kx], [n - ky, ky]) / n > 0.02 + 1e-12
    alpha, beta = brute_force_alpha_beta(n, accept)
    assert pt.alpha == pytest.approx(alpha, abs=1e-10) and pt.beta == pytest.approx(beta, abs=1e-10)


@pytest.mark.parametrize("n", [4, 7])
def test_hk_matches_outcome_brute_force(P, Q, n):
    r = 0.08
    pt = exact_tradeoff(SchemeSpec.hk(r), P, Q, n)
    accept = lambda kx, ky: entropy_from_marginals([1 - kx / n, kx / n], [1 - ky / n, ky / n], P) < r - 1e-12
    alpha, beta = brute_force_alpha_beta(n, accept)
    assert pt.alpha == pytest.approx(alpha, abs=1e-10) and pt.beta == pytest.approx(beta, abs=1e-10)


def test_np_like_threshold_monotonicity(ev20, solver):
    llr = solver.solve(0.0).llr
    pts = [ev20.evaluate(SchemeSpec("np_like", lam=0.0, tau=t, llr=llr)) for t in np.linspace(-0.3, 0.3, 13)]
    assert np.all(np.diff([p.alpha for p in pts]) >= 0)
    assert np.all(np.diff([p.beta for p in pts]) <= 0)


def test_hk_threshold_monotonicity(ev20):
    pts = [ev20.evaluate(SchemeSpec.hk(r)) for r in np.linspace(0.01, 0.3, 12)]
    assert np.all(np.diff([p.alpha for p in pts]) <= 0)
    assert np.all(np.diff([p.beta for p in pts]) >= 0)


def test_general_alphabet_brute_force():
    P = JointDistribution([[0.2, 0.1, 0.15], [0.1, 0.3, 0.15]])
    Q = JointDistribution([[0.1, 0.2, 0.2], [0.2, 0.1, 0.2]])
    n = 4
    r = 0.05
    pt = exact_tradeoff(SchemeSpec.hk(r), P, Q, n)
    alpha = beta = 0.0
    for seq in itertools.product(range(6), repeat=n):
        xs = [s // 3 for s in seq]
        ys = [s % 3 for s in seq]
        mx = np.bincount(xs, minlength=2) / n
        my = np.bincount(ys, minlength=3) / n
        pp = math.prod(P.p.ravel()[s] for s in seq)
        qq = math.prod(Q.p.ravel()[s] for s in seq)
        if entropy_from_marginals(mx, my, P) < r - 1e-12:
            beta += qq
        else:
            alpha += pp
    assert pt.alpha == pytest.approx(alpha, abs=1e-10) and pt.beta == pytest.approx(beta, abs=1e-10)


def test_resource_cap(P, Q):
    with pytest.raises(ResourceCapError):
        ExactEvaluator(P, Q, 100, max_types=10_000)


def test_monte_carlo_identical_hypotheses(P, solver):
    est = monte_carlo_tradeoff(SchemeSpec.np_like(tau=0.01, llr=solver.solve(0.0).llr), P, P, 30, 20_000, 3)
    assert abs(est.alpha_hat + est.beta_hat - 1) <= 3 * (est.half_width_alpha + est.half_width_beta)


def test_monte_carlo_is_deterministic(P, Q, solver):
    s = SchemeSpec.hk(0.05)
    a = monte_carlo_tradeoff(s, P, Q, 25, 30_000, 123, chunk=7_000)
    b = monte_carlo_tradeoff(s, P, Q, 25, 30_000, 123, chunk=7_000)
    c = monte_carlo_tradeoff(s, P, Q, 25, 30_000, 124, chunk=7_000)
    assert a == b and a != c


def test_monte_carlo_oracle_scheme(P, Q):
    env = oracle_tradeoff(P, Q, 10)
    tau = env[len(env) // 2].params["tau"]
    exact = exact_tradeoff(SchemeSpec.oracle(tau), P, Q, 10)
    est = monte_carlo_tradeoff(SchemeSpec.oracle(tau), P, Q, 10, 50_000, 9)
    assert abs(est.alpha_hat - exact.alpha) <= 3 * est.half_width_alpha + 1e-12
    assert abs(est.beta_hat - exact.beta) <= 3 * est.half_width_beta + 1e-12


def test_monte_carlo_rejects_zero_trials(P, Q):
    with pytest.raises(ValidationError):
        monte_carlo_tradeoff(SchemeSpec.hk(0.1), P, Q, 5, 0, 1)


def test_ppv_moments_direct(P, Q):
    star = projection_of(P, Q, tol=1e-14).p
    j = np.log(star / Q.p)
    m = float(np.sum(star * j))
    m2 = sum(star.ravel()[k] * (j.ravel()[k] - m) ** 2 for k in range(4))
    m3 = sum(star.ravel()[k] * abs(j.ravel()[k] - m) ** 3 for k in range(4))
    mom = ppv_moments(P, Q)
    assert mom.sigma == pytest.approx(math.sqrt(m2), abs=1e-12)
    assert mom.third == pytest.approx(m3, abs=1e-12)


def test_ppv_bound_scaling(P, Q, solver):
    tau, n = solver.upper, 10
    ratio = ppv_beta_bound(P, Q, 4 * n, tau) / ppv_beta_bound(P, Q, n, tau)
    assert ratio == pytest.approx(math.exp(-3 * tau * n) / 2, rel=1e-12)


def test_ppv_bound_degenerate():
    d = JointDistribution.uniform(2, 2)
    with pytest.raises(ValidationError):
        ppv_beta_bound(d, d, 10, 0.1)

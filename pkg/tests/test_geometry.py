import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E_STAR, random_table, table_pairs
from zerorate import ConvergenceError, JointDistribution, JointType, ValidationError
from zerorate.distributions import kl_divergence, marginals, to_natural
from zerorate.geometry import (
    binary_eta_xy,
    binary_projected_entropy,
    entropy_from_marginals,
    ipf,
    project_onto_marginals,
    projected_relative_entropy,
    projected_relative_entropy_over_types,
    projection_of,
    pythagorean_residual,
    type_restriction_gap,
)


def test_reference_value_matches_scan_oracle(P, Q):
    assert projected_relative_entropy(P, Q) == pytest.approx(E_STAR, abs=1e-10)
    assert projected_relative_entropy(Q, P) == pytest.approx(E_STAR, abs=1e-10)


def test_same_marginals_give_zero(Q):
    d = JointDistribution([[0.2, 0.175], [0.425, 0.2]])
    assert projected_relative_entropy(d, Q) == pytest.approx(0.0, abs=1e-12)
    assert projected_relative_entropy(Q, Q) == 0.0


def test_ipf_history_decreases(P, Q):
    res = project_onto_marginals(Q, *marginals(P), record_history=True)
    h = np.array(res.history)
    assert res.residual < 1e-12
    assert np.all(np.diff(h) <= 1e-15)


def test_ipf_reports_non_convergence(P, Q):
    with pytest.raises(ConvergenceError):
        project_onto_marginals(Q, *marginals(P), tol=1e-300, max_iter=3)


def test_marginals_must_be_valid(Q):
    with pytest.raises(ValidationError):
        project_onto_marginals(Q, [0.5, 0.6], [0.5, 0.5])
    with pytest.raises(ValidationError):
        project_onto_marginals(Q, [1.0, 0.0], [0.5, 0.5])


@settings(max_examples=60, deadline=None)
@given(table_pairs())
def test_projection_keeps_interaction_and_matches_marginals(pair):
    p, q = pair
    star = projection_of(p, q)
    px, py = marginals(p)
    sx, sy = marginals(star)
    assert np.allclose(sx, px, atol=1e-11) and np.allclose(sy, py, atol=1e-11)
    assert np.allclose(to_natural(star).theta_xy, to_natural(q).theta_xy, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(table_pairs())
def test_pythagorean_identity(pair):
    assert pythagorean_residual(*pair) < 1e-10


@settings(max_examples=40, deadline=None)
@given(table_pairs(shape=(2, 2)), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_closed_form_matches_ipf_including_boundaries(pair, u, v):
    _, q = pair
    mx, my = np.array([1 - u, u]), np.array([1 - v, v])
    table, *_ = ipf(q.p, mx, my, tol=1e-14)
    assert binary_projected_entropy(u, v, q) == pytest.approx(kl_divergence(table, q.p), abs=1e-10)


def test_closed_form_independent_branch():
    # theta_xy = 0: projection is the product of the marginals
    assert binary_eta_xy(0.3, 0.6, 0.0) == pytest.approx(0.18, abs=1e-15)
    assert binary_eta_xy(0.3, 0.6, 1e-13) == pytest.approx(0.18, abs=1e-12)


def test_closed_form_extreme_interaction_stays_in_bounds():
    assert binary_eta_xy(0.3, 0.6, 50.0) == pytest.approx(0.3, abs=1e-12)
    assert binary_eta_xy(0.3, 0.6, -50.0) == pytest.approx(0.0, abs=1e-12)


def test_entropy_from_boundary_marginals(Q):
    # marginals (1,0),(1,0) force the point mass on (0,0)
    assert entropy_from_marginals([1, 0], [1, 0], Q) == pytest.approx(-math.log(0.125))
    q3 = random_table(np.random.default_rng(1), (3, 3))
    assert entropy_from_marginals([1, 0, 0], [0, 1, 0], q3) == pytest.approx(-math.log(q3.p[0, 1]))


def test_type_restricted_bound(Q):
    rng = np.random.default_rng(11)
    for _ in range(30):
        counts = rng.multinomial(20, [0.25] * 4).reshape(2, 2)
        t = JointType(20, counts)
        e = entropy_from_marginals(t.x_counts / 20, t.y_counts / 20, Q)
        en = projected_relative_entropy_over_types(t, Q)
        assert e - 1e-12 <= en <= e + type_restriction_gap(20, Q)


def test_type_restricted_general_alphabet():
    q = random_table(np.random.default_rng(2), (2, 3))
    t = JointType(6, np.array([[1, 2, 0], [0, 1, 2]]))
    e = entropy_from_marginals(t.x_counts / 6, t.y_counts / 6, q)
    en = projected_relative_entropy_over_types(t, q)
    assert e - 1e-12 <= en <= e + type_restriction_gap(6, q)


@settings(max_examples=40, deadline=None)
@given(table_pairs(), st.floats(0.0, 1.0))
def test_projected_entropy_is_convex(pair, w):
    a, b = pair
    q = JointDistribution.normalized(a.p[::-1] + b.p)
    mix = JointDistribution(w * a.p + (1 - w) * b.p)
    lhs = projected_relative_entropy(mix, q)
    rhs = w * projected_relative_entropy(a, q) + (1 - w) * projected_relative_entropy(b, q)
    assert lhs <= rhs + 1e-10

"""Exponent curves and second-order quantities.

The projected relative entropy density is ``j = log(P*/Q)`` where ``P*``
attains ``E(P||Q)``. Its mean, variance and absolute third central moment
under ``P`` drive the Berry-Esseen threshold and the second-order
approximation of the type-II error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal, Optional

import numpy as np

from .distributions import (
    ExpectationCoords,
    JointDistribution,
    as_table,
    from_expectation,
    to_expectation,
)
from .errors import DomainError, ValidationError
from .geometry import projected_relative_entropy, projection_of
from .lambda_solver import LambdaSolver, TiltedFamily

GRADIENT_IPF_TOL = 1e-14
DEGENERATE_VARIANCE = 1e-14


# ---------------------------------------------------------------------------
# standard normal
# ---------------------------------------------------------------------------

_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf`: rational approximation plus one Halley step."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal quantile needs 0 < p < 1, got {p!r}")
    if p > 0.5:
        # 1 - p is exact here; refining in the lower tail avoids cancellation
        return -normal_quantile(1.0 - p)
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    # refine against the erfc-based cdf
    e = normal_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


# ---------------------------------------------------------------------------
# exponent curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentPoint:
    type1_exponent: float
    type2_exponent: float
    lam: float
    tau: float

    def __post_init__(self):
        if self.type1_exponent < 0 or self.type2_exponent < 0:
            raise ValidationError("exponents must be non-negative")


def optimal_exponent_curve(P, Q, lams: Iterable[float], solver: Optional[LambdaSolver] = None) -> list[ExponentPoint]:
    """``(D(P^lam||P), D(Q^lam||Q))`` along a grid of ``lam`` (threshold ``tau = lam``)."""
    solver = solver or LambdaSolver(P, Q)
    out = []
    for lam in lams:
        sol = solver.solve(float(lam))
        out.append(ExponentPoint(sol.type1_exponent, sol.type2_exponent, sol.lam, sol.lam))
    return out


def fixed_lambda_range(P, Q, which: Literal["upper", "lower"], solver: Optional[LambdaSolver] = None):
    """Admissible threshold interval for a fixed-endpoint curve."""
    solver = solver or LambdaSolver(P, Q)
    llr = solver.endpoint(which).llr
    if which == "upper":
        return llr.expectation(Q), solver.upper
    return solver.lower, llr.expectation(P)


def fixed_lambda_curve(
    P,
    Q,
    which: Literal["upper", "lower"],
    taus: Iterable[float],
    solver: Optional[LambdaSolver] = None,
    slack: float = 1e-12,
) -> list[ExponentPoint]:
    """Exponent pairs with ``lam`` frozen at an endpoint while ``tau`` varies."""
    if which not in ("upper", "lower"):
        raise ValidationError(f"which must be 'upper' or 'lower', got {which!r}")
    P = P if isinstance(P, JointDistribution) else JointDistribution(P)
    Q = Q if isinstance(Q, JointDistribution) else JointDistribution(Q)
    solver = solver or LambdaSolver(P, Q)
    sol = solver.endpoint(which)
    lo, hi = fixed_lambda_range(P, Q, which, solver)
    p_side = TiltedFamily(P, sol.llr, "P")
    q_side = TiltedFamily(Q, sol.llr, "Q")
    out = []
    for tau in taus:
        tau = float(tau)
        if not lo - slack <= tau <= hi + slack:
            raise DomainError(f"tau={tau!r} outside [{lo!r}, {hi!r}] for the {which} endpoint")
        tau = min(max(tau, lo), hi)
        out.append(ExponentPoint(p_side.divergence(tau), q_side.divergence(tau), sol.lam, tau))
    return out


# ---------------------------------------------------------------------------
# second order
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SecondOrderStats:
    e: float
    v: float
    t3: float
    density: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.v <= DEGENERATE_VARIANCE


def projected_density(P, Q, tol: float = GRADIENT_IPF_TOL) -> np.ndarray:
    return np.log(projection_of(P, Q, tol).p / as_table(Q))


def second_order_stats(P, Q, tol: float = GRADIENT_IPF_TOL) -> SecondOrderStats:
    pa = as_table(P)
    j = projected_density(P, Q, tol)
    e = math.fsum((pa * j).ravel())
    c = j - e
    v = math.fsum((pa * c * c).ravel())
    t3 = math.fsum((pa * np.abs(c) ** 3).ravel())
    j.setflags(write=False)
    return SecondOrderStats(e, max(v, 0.0), t3, j)


def np_threshold_for_eps(P, Q, n: int, eps: float, stats: Optional[SecondOrderStats] = None) -> float:
    """Berry-Esseen threshold ``E + sqrt(V/n) Phi^{-1}(eps - 6T/(sqrt(n) V^{3/2}))``."""
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps!r}")
    if n < 1:
        raise ValidationError("n must be >= 1")
    s = stats or second_order_stats(P, Q)
    if s.degenerate:
        raise DomainError("V(P||Q) = 0: the projected density is constant")
    arg = eps - 6.0 * s.t3 / (math.sqrt(n) * s.v**1.5)
    if not 0.0 < arg < 1.0:
        raise DomainError(f"n={n} too small for eps={eps}: Berry-Esseen argument {arg:.6g} is outside (0, 1)")
    return s.e + math.sqrt(s.v / n) * normal_quantile(arg)


def second_order_beta_approx(P, Q, n: int, eps: float, stats: Optional[SecondOrderStats] = None) -> float:
    """``nE + sqrt(nV) Phi^{-1}(eps) + log(n)/2``; the O(1) term is omitted."""
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps!r}")
    s = stats or second_order_stats(P, Q)
    return n * s.e + math.sqrt(n * s.v) * normal_quantile(eps) + 0.5 * math.log(n)


# ---------------------------------------------------------------------------
# derivative diagnostics
# ---------------------------------------------------------------------------


def _eta_vector(c: ExpectationCoords) -> np.ndarray:
    return np.concatenate([c.eta_x, c.eta_y, c.eta_xy.ravel()])


def _eta_coords(v: np.ndarray, nx: int, ny: int) -> ExpectationCoords:
    a, b = nx - 1, ny - 1
    return ExpectationCoords(v[:a], v[a : a + b], v[a + b :].reshape(a, b))


def projected_entropy_gradient(P, Q, step: float = 1e-5, tol: float = GRADIENT_IPF_TOL):
    """Central-difference and analytic gradients of ``eta -> E(P_eta||Q)`` at ``eta(P)``."""
    pa = as_table(P)
    nx, ny = pa.shape
    eta = _eta_vector(to_expectation(P))
    numeric = np.empty_like(eta)
    for k in range(eta.size):
        up, dn = eta.copy(), eta.copy()
        up[k] += step
        dn[k] -= step
        e_up = projected_relative_entropy(from_expectation(_eta_coords(up, nx, ny)), Q, tol)
        e_dn = projected_relative_entropy(from_expectation(_eta_coords(dn, nx, ny)), Q, tol)
        numeric[k] = (e_up - e_dn) / (2.0 * step)
    j = projected_density(P, Q, tol)
    analytic = np.concatenate([j[1:, 0] - j[0, 0], j[0, 1:] - j[0, 0], np.zeros((nx - 1) * (ny - 1))])
    return numeric, analytic


def projected_entropy_gradient_check(P, Q, step: float = 1e-5, tol: float = GRADIENT_IPF_TOL) -> float:
    numeric, analytic = projected_entropy_gradient(P, Q, step, tol)
    return float(np.max(np.abs(numeric - analytic)))


def taylor_residual(P, Q, Pbar, tol: float = GRADIENT_IPF_TOL) -> float:
    """``|E(Pbar||Q) - sum Pbar j|`` with ``j`` the density of ``E(P||Q)``."""
    j = projected_density(P, Q, tol)
    first_order = math.fsum((as_table(Pbar) * j).ravel())
    return abs(projected_relative_entropy(Pbar, Q, tol) - first_order)


def taylor_ratios(P, Q, direction, delta: float, halvings: int = 4, tol: float = GRADIENT_IPF_TOL) -> list[float]:
    """``taylor_residual / ||Pbar - P||_1`` for ``Pbar = P + d * direction`` with d halving."""
    pa = as_table(P)
    d = np.asarray(direction, dtype=float)
    if abs(d.sum()) > 1e-12:
        raise ValidationError("perturbation direction must sum to zero")
    out = []
    for k in range(halvings):
        step = delta / 2**k
        pbar = pa + step * d
        if np.any(pbar <= 0):
            raise ValidationError("perturbation leaves the simplex interior")
        out.append(taylor_residual(pa, Q, pbar, tol) / np.abs(step * d).sum())
    return out

"""Exact finite-blocklength error probabilities and Monte Carlo estimates.

Exact evaluation enumerates every joint type at blocklength ``n``; the
decision of each symmetric scheme depends only on the marginal types, and
the type-class masses under ``P^n`` and ``Q^n`` are summed with
``math.fsum`` after a max-log shift.

Monte Carlo sampling uses numpy's Philox-4x64 counter-based generator keyed
directly by the seed. Chunk ``c`` of the type-I (type-II) stream is the
base generator jumped ``2c`` (``2c + 1``) times, so results are reproducible
across platforms and independent of how many chunks run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distributions import JointDistribution, as_table, joint_type_counts, log_type_probabilities
from .errors import ValidationError
from .geometry import projection_of
from .lambda_solver import LambdaSolver
from .schemes import (
    TIE_TOL,
    ErrorPoint,
    MarginalTypeMasses,
    SchemeSpec,
    accept_h0,
    hk_statistics,
    marginal_type_masses,
)

MC_CHUNK = 20_000
Z95 = 1.959963984540054


def _shifted_sum(logs: np.ndarray) -> tuple[float, float]:
    """``(sum exp(logs), log of it)`` with compensated summation."""
    if logs.size == 0:
        return 0.0, -math.inf
    peak = float(logs.max())
    s = math.fsum(np.exp(logs - peak))
    return math.exp(peak) * s, peak + math.log(s)


class ExactEvaluator:
    """Joint-type enumeration at fixed ``(P, Q, n)``, reusable across schemes."""

    def __init__(self, P, Q, n: int, max_types: int | None = None, solver: Optional[LambdaSolver] = None):
        self.P = P if isinstance(P, JointDistribution) else JointDistribution(P)
        self.Q = Q if isinstance(Q, JointDistribution) else JointDistribution(Q)
        if self.P.shape != self.Q.shape:
            raise ValidationError(f"dimension mismatch: {self.P.shape} vs {self.Q.shape}")
        self.n = n
        counts = joint_type_counts(n, *self.P.shape, max_types=max_types)
        self.x_counts = counts.sum(axis=2)
        self.y_counts = counts.sum(axis=1)
        self.log_p = log_type_probabilities(counts, self.P)
        self.log_q = log_type_probabilities(counts, self.Q)
        self.solver = solver
        self._oracle: Optional[MarginalTypeMasses] = None
        self._hk: Optional[np.ndarray] = None

    def _solver(self) -> LambdaSolver:
        if self.solver is None:
            self.solver = LambdaSolver(self.P, self.Q)
        return self.solver

    def oracle(self) -> MarginalTypeMasses:
        if self._oracle is None:
            self._oracle = marginal_type_masses(self.P, self.Q, self.n, max_n=max(self.n, 1))
        return self._oracle

    def hk_statistics(self) -> np.ndarray:
        if self._hk is None:
            self._hk = hk_statistics(self.x_counts, self.y_counts, self.P)
        return self._hk

    def accept_mask(self, scheme: SchemeSpec) -> np.ndarray:
        if scheme.kind == "hk":
            return self.hk_statistics() < scheme.r - TIE_TOL
        scheme = scheme.resolve(self.P, self.Q, self._solver() if scheme.kind == "np_like" else None)
        oracle = self.oracle() if scheme.kind == "oracle" else None
        return accept_h0(scheme, self.x_counts, self.y_counts, self.P, self.Q, oracle)

    def evaluate(self, scheme: SchemeSpec) -> ErrorPoint:
        acc = self.accept_mask(scheme)
        alpha, log_alpha = _shifted_sum(self.log_p[~acc])
        beta, log_beta = _shifted_sum(self.log_q[acc])
        return ErrorPoint(
            min(alpha, 1.0), min(beta, 1.0), log_alpha, log_beta, scheme.kind, self.n, scheme.params()
        )

    def acceptance_mass(self, scheme: SchemeSpec) -> tuple[float, float]:
        """Probability of deciding H0 under ``P^n`` and under ``Q^n``."""
        acc = self.accept_mask(scheme)
        return _shifted_sum(self.log_p[acc])[0], _shifted_sum(self.log_q[acc])[0]


def exact_tradeoff(
    scheme: SchemeSpec, P, Q, n: int, max_types: int | None = None, solver: Optional[LambdaSolver] = None
) -> ErrorPoint:
    return ExactEvaluator(P, Q, n, max_types, solver).evaluate(scheme)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McEstimate:
    alpha_hat: float
    beta_hat: float
    trials: int
    seed: int
    half_width_alpha: float
    half_width_beta: float

    @property
    def half_width_95(self) -> float:
        return max(self.half_width_alpha, self.half_width_beta)


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed).jumped(index))


def _sample_marginal_counts(rng: np.random.Generator, table: np.ndarray, n: int, trials: int):
    nx, ny = table.shape
    cdf = np.cumsum(table.ravel())
    cdf[-1] = 1.0
    cells = np.searchsorted(cdf, rng.random((trials, n)), side="right")
    cells = np.minimum(cells, nx * ny - 1)
    flat = np.bincount((np.arange(trials)[:, None] * (nx * ny) + cells).ravel(), minlength=trials * nx * ny)
    joint = flat.reshape(trials, nx, ny)
    return joint.sum(axis=2), joint.sum(axis=1)


def monte_carlo_tradeoff(
    scheme: SchemeSpec,
    P,
    Q,
    n: int,
    trials: int,
    seed: int,
    solver: Optional[LambdaSolver] = None,
    chunk: int = MC_CHUNK,
) -> McEstimate:
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    P = P if isinstance(P, JointDistribution) else JointDistribution(P)
    Q = Q if isinstance(Q, JointDistribution) else JointDistribution(Q)
    if scheme.kind == "np_like":
        scheme = scheme.resolve(P, Q, solver)
    oracle = marginal_type_masses(P, Q, n) if scheme.kind == "oracle" else None
    errors_p = errors_q = 0
    for c, start in enumerate(range(0, trials, chunk)):
        m = min(chunk, trials - start)
        xc, yc = _sample_marginal_counts(_stream(seed, 2 * c), P.p, n, m)
        errors_p += int(np.count_nonzero(~accept_h0(scheme, xc, yc, P, Q, oracle)))
        xc, yc = _sample_marginal_counts(_stream(seed, 2 * c + 1), Q.p, n, m)
        errors_q += int(np.count_nonzero(accept_h0(scheme, xc, yc, P, Q, oracle)))
    a, b = errors_p / trials, errors_q / trials
    return McEstimate(
        a,
        b,
        trials,
        seed,
        Z95 * math.sqrt(a * (1 - a) / trials),
        Z95 * math.sqrt(b * (1 - b) / trials),
    )


# ---------------------------------------------------------------------------
# finite-n beta bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PPVMoments:
    sigma: float
    third: float


def ppv_moments(P, Q) -> PPVMoments:
    """Std. deviation and absolute third central moment of the projected
    density ``log(P*/Q)`` under ``P*``."""
    star = projection_of(P, Q, tol=1e-14)
    j = np.log(star.p / as_table(Q))
    w = star.p
    mean = float(np.sum(w * j))
    var = float(np.sum(w * (j - mean) ** 2))
    third = float(np.sum(w * np.abs(j - mean) ** 3))
    return PPVMoments(math.sqrt(max(var, 0.0)), third)


def ppv_beta_bound(P, Q, n: int, tau: float) -> float:
    """Upper bound on beta of the NP-like test at the upper endpoint and threshold ``tau``."""
    m = ppv_moments(P, Q)
    if m.sigma <= 1e-12:
        raise ValidationError("projected density is constant (sigma = 0); bound undefined")
    lead = 2.0 * (math.log(2.0) / math.sqrt(2.0 * math.pi) + 12.0 * m.third / m.sigma**2)
    return lead * math.exp(-tau * n) / (m.sigma * math.sqrt(n))

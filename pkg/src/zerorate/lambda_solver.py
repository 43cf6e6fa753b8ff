"""The lambda-indexed pair (Q^lam, P^lam) behind the Neyman-Pearson-like test.

For ``-E(Q||P) < lam < E(P||Q)`` the pair is the unique couple with

* ``Q^lam`` sharing Q's interaction coordinates and ``P^lam`` sharing P's,
* identical marginals,
* ``log(P^lam / P) = a log(Q^lam / Q) + b`` for constants ``a, b``,
* ``D(Q^lam||Q) - D(P^lam||P) = lam``.

The solver works on the shared marginals plus a direction angle ``phi``
with ``a = tan(phi)``. Given marginals, both members are obtained by
projecting P and Q onto them, so only the alignment condition (written on
the row/column natural coordinates) and the ``lam`` condition remain; they
are driven to zero by damped Newton with a forward-difference Jacobian,
continued from the closed-form endpoints.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .distributions import JointDistribution, as_table, kl_divergence, marginals, to_natural
from .errors import ConvergenceError, DomainError, ValidationError
from .geometry import binary_eta_xy, binary_table, ipf, project_onto_marginals

DECOMPOSITION_TOL = 1e-6


# ---------------------------------------------------------------------------
# proxy log-likelihood ratio
# ---------------------------------------------------------------------------


def additive_decomposition(table, ref: tuple[int, int] = (0, 0)) -> tuple[np.ndarray, np.ndarray]:
    """Split ``table(x, y) = a1(x) + a2(y)`` around reference cell ``ref``.

    ``a1(x) = table(x, j)`` and ``a2(y) = table(i, y) - table(i, j)``.
    Raises :class:`ValidationError` when the table is not additive.
    """
    t = np.asarray(table, dtype=float)
    i, j = ref
    a1 = t[:, j].copy()
    a2 = t[i, :] - t[i, j]
    residual = float(np.max(np.abs(a1[:, None] + a2[None, :] - t)))
    if residual > DECOMPOSITION_TOL:
        raise ValidationError(f"table is not additively separable (residual {residual:.3e})")
    return a1, a2


def decomposition_residual(table, ref: tuple[int, int] = (0, 0)) -> float:
    t = np.asarray(table, dtype=float)
    i, j = ref
    return float(np.max(np.abs(t[:, j][:, None] + (t[i, :] - t[i, j])[None, :] - t)))


@dataclass(frozen=True, eq=False)
class ProxyLLR:
    """Additively separable statistic ``table(x, y) = a1(x) + a2(y)``."""

    table: np.ndarray
    a1: np.ndarray
    a2: np.ndarray

    @classmethod
    def from_table(cls, raw) -> "ProxyLLR":
        a1, a2 = additive_decomposition(raw)
        table = a1[:, None] + a2[None, :]
        for arr in (table, a1, a2):
            arr.setflags(write=False)
        return cls(table, a1, a2)

    @classmethod
    def constant(cls, value: float, x_size: int, y_size: int) -> "ProxyLLR":
        return cls.from_table(np.full((x_size, y_size), float(value)))

    def expectation(self, d) -> float:
        return float(np.sum(as_table(d) * self.table))

    def marginal_statistic(self, px, py) -> float:
        """``sum_x px(x) a1(x) + sum_y py(y) a2(y)``."""
        return float(np.dot(px, self.a1) + np.dot(py, self.a2))


def _llr_table(llr) -> np.ndarray:
    return llr.table if isinstance(llr, ProxyLLR) else np.asarray(llr, dtype=float)


# ---------------------------------------------------------------------------
# tilted exponential families
# ---------------------------------------------------------------------------


def tilted_psi(base, llr, param: float) -> float:
    """``log sum base * exp(param * llr)`` with a max shift."""
    w = as_table(base).ravel()
    z = param * _llr_table(llr).ravel()
    m = z.max()
    return float(m + math.log(math.fsum(w * np.exp(z - m))))


def tilted_member(base, llr, param: float) -> JointDistribution:
    w = as_table(base)
    z = param * _llr_table(llr)
    p = w * np.exp(z - z.max())
    return JointDistribution(p / p.sum())


def _tilt_moments(w: np.ndarray, lam: np.ndarray, s: float) -> tuple[float, float]:
    z = s * lam
    v = w * np.exp(z - z.max())
    v /= v.sum()
    mean = float(np.dot(v, lam))
    return mean, float(np.dot(v, (lam - mean) ** 2))


def inverse_tilt(base, llr, tau: float, tol: float = 1e-13) -> float:
    """Parameter ``s`` with ``psi'(s) = tau`` (mean of llr under the tilt)."""
    w = as_table(base).ravel()
    lam = _llr_table(llr).ravel()
    lo_val, hi_val = lam.min(), lam.max()
    if not lo_val < tau < hi_val:
        raise DomainError(f"tau={tau!r} outside the open range ({lo_val!r}, {hi_val!r}) of the statistic")
    lo, hi = -1.0, 1.0
    while _tilt_moments(w, lam, lo)[0] > tau:
        lo *= 2.0
    while _tilt_moments(w, lam, hi)[0] < tau:
        hi *= 2.0
    s = 0.0 if lo < 0.0 < hi else 0.5 * (lo + hi)
    for _ in range(200):
        mean, var = _tilt_moments(w, lam, s)
        gap = mean - tau
        if abs(gap) < tol:
            break
        if gap > 0:
            hi = s
        else:
            lo = s
        s_new = s - gap / var if var > 0 else 0.5 * (lo + hi)
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, abs(s)):
            s = s_new
            break
        s = s_new
    return s


@dataclass(frozen=True, eq=False)
class TiltedFamily:
    """``base * exp(param * llr - psi(param))``; ``side`` is ``"P"`` or ``"Q"``."""

    base: JointDistribution
    direction: ProxyLLR
    side: Literal["P", "Q"] = "Q"

    def psi(self, param: float) -> float:
        return tilted_psi(self.base, self.direction, param)

    def psi_prime(self, param: float) -> float:
        return _tilt_moments(self.base.p.ravel(), self.direction.table.ravel(), param)[0]

    def member(self, param: float) -> JointDistribution:
        return tilted_member(self.base, self.direction, param)

    def inverse(self, tau: float) -> float:
        return inverse_tilt(self.base, self.direction, tau)

    def divergence(self, tau: float) -> float:
        """``D(member(inverse(tau)) || base) = param * tau - psi(param)``."""
        s = self.inverse(tau)
        return max(0.0, s * tau - self.psi(s))


# ---------------------------------------------------------------------------
# the pair solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LambdaSolution:
    lam: float
    p_lambda: JointDistribution
    q_lambda: JointDistribution
    a: float
    b: float
    llr: ProxyLLR
    angle: float = 0.0
    residual: float = 0.0

    @property
    def type1_exponent(self) -> float:
        """``D(P^lam || P)``."""
        return self._d1

    @property
    def type2_exponent(self) -> float:
        """``D(Q^lam || Q)``."""
        return self._d2

    def _set_exponents(self, P, Q) -> "LambdaSolution":
        object.__setattr__(self, "_d1", kl_divergence(self.p_lambda, P))
        object.__setattr__(self, "_d2", kl_divergence(self.q_lambda, Q))
        return self


class LambdaSolver:
    """Solve for ``(Q^lam, P^lam)`` with caching and continuation in ``lam``.

    Solved states are cached so later requests start from the nearest one;
    reuse one instance for sweeps over ``lam`` or bisection in ``r``.
    """

    def __init__(
        self,
        P,
        Q,
        tol: float = 1e-11,
        max_newton: int = 60,
        continuation_step: float = 0.05,
        fd_step: float = 1e-7,
        ipf_tol: float = 1e-14,
    ):
        self.P = P if isinstance(P, JointDistribution) else JointDistribution(P)
        self.Q = Q if isinstance(Q, JointDistribution) else JointDistribution(Q)
        if self.P.shape != self.Q.shape:
            raise ValidationError(f"dimension mismatch: {self.P.shape} vs {self.Q.shape}")
        self.tol = tol
        self.max_newton = max_newton
        self.continuation_step = continuation_step
        self.fd_step = fd_step
        self.ipf_tol = ipf_tol
        self._binary = self.P.shape == (2, 2)
        self._theta_p = to_natural(self.P)
        self._theta_q = to_natural(self.Q)
        self._logP = np.log(self.P.p)
        self._logQ = np.log(self.Q.p)
        px, py = marginals(self.P)
        qx, qy = marginals(self.Q)
        up = project_onto_marginals(self.Q, px, py, tol=ipf_tol)
        lo = project_onto_marginals(self.P, qx, qy, tol=ipf_tol)
        self.p_star, self.upper = up.projection, up.value
        self.q_star, self.lower = lo.projection, -lo.value
        # cache of (lam, state); endpoints seed the continuation
        self._lams: list[float] = []
        self._states: list[np.ndarray] = []
        if self.upper > self.lower:
            self._remember(self.upper, np.concatenate([px[1:], py[1:], [0.0]]))
            self._remember(self.lower, np.concatenate([qx[1:], qy[1:], [-math.pi / 2]]))

    # -- state handling ----------------------------------------------------

    def _remember(self, lam: float, state: np.ndarray) -> None:
        k = bisect.bisect_left(self._lams, lam)
        if k < len(self._lams) and self._lams[k] == lam:
            self._states[k] = state
            return
        self._lams.insert(k, lam)
        self._states.insert(k, state)

    def _split(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        dx = self.P.x_size - 1
        dy = self.P.y_size - 1
        ex, ey, phi = u[:dx], u[dx:dx + dy], u[-1]
        mx = np.concatenate([[1.0 - ex.sum()], ex])
        my = np.concatenate([[1.0 - ey.sum()], ey])
        return mx, my, phi

    def _admissible(self, u: np.ndarray) -> bool:
        mx, my, _ = self._split(u)
        return bool(np.all(mx > 0) and np.all(my > 0))

    def _project(self, base: JointDistribution, theta, mx, my) -> np.ndarray:
        if self._binary:
            return binary_table(mx[1], my[1], binary_eta_xy(mx[1], my[1], theta.theta_xy[0, 0]))
        table, *_ = ipf(base.p, mx, my, tol=self.ipf_tol)
        return table / table.sum()

    def _members(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mx, my, _ = self._split(u)
        ph = self._project(self.P, self._theta_p, mx, my)
        qh = self._project(self.Q, self._theta_q, mx, my)
        return ph, qh

    @staticmethod
    def _row_col_theta(table: np.ndarray) -> np.ndarray:
        lt = np.log(table)
        return np.concatenate([lt[1:, 0] - lt[0, 0], lt[0, 1:] - lt[0, 0]])

    def _residual(self, u: np.ndarray, lam: float) -> np.ndarray:
        ph, qh = self._members(u)
        phi = u[-1]
        dp = self._row_col_theta(ph) - self._row_col_theta(self.P.p)
        dq = self._row_col_theta(qh) - self._row_col_theta(self.Q.p)
        gap = kl_divergence(qh, self.Q) - kl_divergence(ph, self.P) - lam
        return np.concatenate([math.cos(phi) * dp - math.sin(phi) * dq, [gap]])

    def _newton(self, u0: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
        u = u0.copy()
        r = self._residual(u, lam)
        norm = float(np.linalg.norm(r))
        for _ in range(self.max_newton):
            if norm < self.tol:
                break
            jac = np.empty((r.size, u.size))
            for k in range(u.size):
                v = u.copy()
                v[k] += self.fd_step
                if not self._admissible(v):
                    v[k] = u[k] - self.fd_step
                    jac[:, k] = (r - self._residual(v, lam)) / self.fd_step
                else:
                    jac[:, k] = (self._residual(v, lam) - r) / self.fd_step
            try:
                delta = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
            t = 1.0
            for _ in range(30):
                cand = u + t * delta
                if self._admissible(cand):
                    rc = self._residual(cand, lam)
                    nc = float(np.linalg.norm(rc))
                    if nc < norm:
                        u, r, norm = cand, rc, nc
                        break
                t *= 0.5
            else:
                break
        return u, norm

    def _march(self, start: int, lam: float) -> tuple[np.ndarray, float]:
        lam0, u = self._lams[start], self._states[start]
        steps = max(1, math.ceil(abs(lam - lam0) / self.continuation_step))
        norm = 0.0
        for k in range(1, steps + 1):
            target = lam0 + (lam - lam0) * k / steps
            u, norm = self._newton(u, target)
            if norm > self.tol:
                return u, norm
            if k < steps:
                self._remember(target, u)
        return u, norm

    # -- public API ----------------------------------------------------------

    def endpoint(self, which: Literal["upper", "lower"]) -> LambdaSolution:
        if which == "upper":
            raw = np.log(self.p_star.p) - self._logQ
            sol = LambdaSolution(self.upper, self.P, self.p_star, 0.0, 0.0, ProxyLLR.from_table(raw), 0.0)
        elif which == "lower":
            raw = -(np.log(self.q_star.p) - self._logP)
            sol = LambdaSolution(
                self.lower, self.q_star, self.Q, -math.inf, math.nan, ProxyLLR.from_table(raw), -math.pi / 2
            )
        else:
            raise ValidationError(f"which must be 'upper' or 'lower', got {which!r}")
        return sol._set_exponents(self.P, self.Q)

    def solve(self, lam: float) -> LambdaSolution:
        lam = float(lam)
        if lam == self.upper:
            return self.endpoint("upper")
        if lam == self.lower:
            return self.endpoint("lower")
        if not self.lower < lam < self.upper:
            raise DomainError(
                f"lambda={lam!r} outside the open interval ({self.lower!r}, {self.upper!r})"
            )
        k = bisect.bisect_left(self._lams, lam)
        if k < len(self._lams) and self._lams[k] == lam:
            u, norm = self._states[k], 0.0
            u, norm = self._newton(u, lam)
        else:
            # nearest cached neighbour first, the other side as fallback
            below, above = k - 1, k
            order = sorted((below, above), key=lambda i: abs(self._lams[i] - lam))
            u, norm = self._march(order[0], lam)
            sol = self._build(lam, u, norm) if norm <= self.tol else None
            if sol is None or not self._ordered(sol):
                u2, norm2 = self._march(order[1], lam)
                if norm2 < norm or sol is None:
                    u, norm = u2, norm2
        if norm > self.tol:
            raise ConvergenceError(f"lambda-pair solver failed at lambda={lam!r}", norm, self.max_newton)
        self._remember(lam, u)
        return self._build(lam, u, norm)

    def sweep(self, lams) -> list[LambdaSolution]:
        """Solve on a grid, walking from the upper endpoint downward."""
        return [self.solve(l) for l in sorted(lams, reverse=True)][::-1] if len(lams) else []

    def _build(self, lam: float, u: np.ndarray, norm: float) -> LambdaSolution:
        ph, qh = self._members(u)
        ph, qh = ph / ph.sum(), qh / qh.sum()
        phi = float(u[-1])
        a = math.tan(phi)
        raw = (np.log(qh) - self._logQ) - (np.log(ph) - self._logP)
        b = float(np.mean((np.log(ph) - self._logP) - a * (np.log(qh) - self._logQ)))
        sol = LambdaSolution(
            lam, JointDistribution(ph), JointDistribution(qh), a, b, ProxyLLR.from_table(raw), phi, norm
        )
        return sol._set_exponents(self.P, self.Q)

    def _ordered(self, sol: LambdaSolution) -> bool:
        return sol.llr.expectation(self.Q) < sol.lam < sol.llr.expectation(self.P)

    # -- exponent function ---------------------------------------------------

    def exponent_F(self, r: float, tol: float = 1e-12) -> float:
        """Best type-II exponent subject to type-I exponent ``>= r``."""
        top = -self.lower
        if not -1e-12 <= r <= top + 1e-12:
            raise DomainError(f"r={r!r} outside [0, E(Q||P)={top!r}]")
        if r <= 0.0:
            return self.upper
        if r >= top:
            return 0.0
        return self.solve(self.lambda_for_type1(r, tol)).type2_exponent

    def lambda_for_type1(self, r: float, tol: float = 1e-12) -> float:
        """``lam`` with ``D(P^lam||P) = r`` by bisection (decreasing in ``lam``)."""
        lo, hi = self.lower, self.upper
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.solve(mid).type1_exponent > r:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def lambda_of_r(self, r: float) -> float:
        return -r + self.exponent_F(r)


def alignment_residual(sol: LambdaSolution, P, Q) -> float:
    """Spread (max - min) of ``log(P^lam/P) - a log(Q^lam/Q)``; 0 when aligned."""
    if not math.isfinite(sol.a):
        spread = np.log(sol.q_lambda.p / as_table(Q))
    else:
        spread = np.log(sol.p_lambda.p / as_table(P)) - sol.a * np.log(sol.q_lambda.p / as_table(Q))
    return float(spread.max() - spread.min())


def parallel_residual(sol: LambdaSolution, P, Q) -> float:
    """Max violation of the row/column natural-coordinate displacement alignment."""
    rc = LambdaSolver._row_col_theta
    dp = rc(sol.p_lambda.p) - rc(as_table(P))
    dq = rc(sol.q_lambda.p) - rc(as_table(Q))
    return float(np.max(np.abs(math.cos(sol.angle) * dp - math.sin(sol.angle) * dq)))


def solve_lambda_pair(P, Q, lam: float, tol: float = 1e-11) -> LambdaSolution:
    return LambdaSolver(P, Q, tol=tol).solve(lam)


def endpoint_solution(P, Q, which: Literal["upper", "lower"]) -> LambdaSolution:
    return LambdaSolver(P, Q).endpoint(which)


def exponent_F(P, Q, r: float) -> float:
    return LambdaSolver(P, Q).exponent_F(r)


def lambda_of_r(P, Q, r: float) -> float:
    return LambdaSolver(P, Q).lambda_of_r(r)

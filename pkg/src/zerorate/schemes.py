"""Decision rules on marginal types.

Three symmetric schemes share one interface: each maps a pair of marginal
type count vectors ``(tx, ty)`` at blocklength ``n`` to a hypothesis.

* ``np_like``: accept H0 iff the average proxy LLR under ``tx x ty``
  exceeds ``tau``.
* ``hk``: accept H0 iff ``E(tx x ty || P) < r``.
* ``oracle``: accept H0 iff the exact log-likelihood ratio of the marginal
  type pair exceeds ``tau``.

Statistics within ``TIE_TOL`` of the threshold count as ties and go to H1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from .distributions import JointDistribution, as_table, joint_type_counts, log_type_probabilities
from .errors import DomainError, ResourceCapError, ValidationError
from .geometry import binary_projected_entropy, entropy_from_marginals
from .lambda_solver import LambdaSolver, ProxyLLR

TIE_TOL = 1e-12
ORACLE_MAX_N = 60


class Hypothesis(enum.Enum):
    H0 = "H0"
    H1 = "H1"


@dataclass(frozen=True)
class ErrorPoint:
    alpha: float
    beta: float
    log_alpha: float = math.nan
    log_beta: float = math.nan
    scheme: str = ""
    n: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-12:
                raise ValidationError(f"{name}={v!r} is not a probability")

    def dominates(self, other: "ErrorPoint") -> bool:
        return self.alpha <= other.alpha and self.beta <= other.beta


@dataclass(frozen=True, eq=False)
class SchemeSpec:
    kind: Literal["np_like", "hk", "oracle"]
    lam: Optional[float] = None
    tau: Optional[float] = None
    r: Optional[float] = None
    llr: Optional[ProxyLLR] = None

    def __post_init__(self):
        if self.kind == "np_like":
            if self.lam is None and self.tau is None:
                raise ValidationError("np_like needs lam and/or tau")
            # rule of thumb: threshold equal to lambda
            if self.lam is None:
                object.__setattr__(self, "lam", self.tau)
            if self.tau is None:
                object.__setattr__(self, "tau", self.lam)
        elif self.kind == "hk":
            if self.r is None or not self.r > 0:
                raise ValidationError(f"hk needs r > 0, got {self.r!r}")
        elif self.kind == "oracle":
            if self.tau is None:
                raise ValidationError("oracle needs tau")
        else:
            raise ValidationError(f"unknown scheme kind {self.kind!r}")

    @classmethod
    def np_like(cls, lam=None, tau=None, llr=None) -> "SchemeSpec":
        return cls("np_like", lam=lam, tau=tau, llr=llr)

    @classmethod
    def hk(cls, r: float) -> "SchemeSpec":
        return cls("hk", r=r)

    @classmethod
    def oracle(cls, tau: float) -> "SchemeSpec":
        return cls("oracle", tau=tau)

    @property
    def param(self) -> float:
        return self.r if self.kind == "hk" else self.tau

    def params(self) -> dict:
        if self.kind == "np_like":
            return {"lambda": self.lam, "tau": self.tau}
        if self.kind == "hk":
            return {"r": self.r}
        return {"tau": self.tau}

    def resolve(self, P, Q, solver: Optional[LambdaSolver] = None) -> "SchemeSpec":
        """Attach the proxy LLR for ``np_like`` schemes (no-op otherwise)."""
        if self.kind != "np_like" or self.llr is not None:
            return self
        solver = solver or LambdaSolver(P, Q)
        if not solver.lower - 1e-15 <= self.lam <= solver.upper + 1e-15:
            raise DomainError(f"lambda={self.lam!r} outside [{solver.lower!r}, {solver.upper!r}]")
        lam = min(max(self.lam, solver.lower), solver.upper)
        return replace(self, llr=solver.solve(lam).llr)


def _as_counts(t) -> np.ndarray:
    return np.asarray(t, dtype=float).ravel()


def np_like_decide(tx, ty, llr: ProxyLLR, tau: float) -> Hypothesis:
    """NP-like decision from marginal type counts ``tx``, ``ty``."""
    tx, ty = _as_counts(tx), _as_counts(ty)
    if tx.size != llr.a1.size or ty.size != llr.a2.size:
        raise ValidationError("type dimensions do not match the statistic")
    n = tx.sum()
    if abs(n - ty.sum()) > 0.5:
        raise ValidationError("marginal types have different blocklengths")
    stat = llr.marginal_statistic(tx / n, ty / n)
    return Hypothesis.H0 if stat > tau + TIE_TOL else Hypothesis.H1


def hk_decide(tx, ty, P, r: float) -> Hypothesis:
    """Hoeffding-like decision: H0 iff ``E(tx x ty || P) < r``."""
    if not r > 0:
        raise ValidationError(f"r must be positive, got {r!r}")
    tx, ty = _as_counts(tx), _as_counts(ty)
    n = tx.sum()
    if abs(n - ty.sum()) > 0.5:
        raise ValidationError("marginal types have different blocklengths")
    e = entropy_from_marginals(tx / n, ty / n, P)
    return Hypothesis.H0 if e < r - TIE_TOL else Hypothesis.H1


def hk_statistics(x_counts: np.ndarray, y_counts: np.ndarray, P) -> np.ndarray:
    """``E(tx x ty || P)`` for rows of marginal count arrays, memoized per pair."""
    keys = np.concatenate([x_counts, y_counts], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    nx = x_counts.shape[1]
    n = uniq[0, :nx].sum()
    pa = as_table(P)
    if pa.shape == (2, 2):
        vals = binary_projected_entropy(uniq[:, 1] / n, uniq[:, nx + 1] / n, pa)
    else:
        vals = np.array([entropy_from_marginals(u[:nx] / n, u[nx:] / n, pa) for u in uniq])
    return np.asarray(vals)[inverse.ravel()]


# ---------------------------------------------------------------------------
# most powerful symmetric oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MarginalTypeMasses:
    """Exact log-probabilities of every marginal type pair under P^n and Q^n."""

    n: int
    x_counts: np.ndarray
    y_counts: np.ndarray
    log_p: np.ndarray
    log_q: np.ndarray

    @property
    def llr(self) -> np.ndarray:
        return self.log_p - self.log_q

    def lookup(self, x_counts: np.ndarray, y_counts: np.ndarray) -> np.ndarray:
        """Row indices of the given marginal pairs."""
        table = {k: i for i, k in enumerate(map(bytes, self._keys()))}
        keys = np.concatenate([x_counts, y_counts], axis=1).astype(np.int64)
        return np.array([table[bytes(k)] for k in keys])

    def _keys(self) -> np.ndarray:
        return np.ascontiguousarray(np.concatenate([self.x_counts, self.y_counts], axis=1).astype(np.int64))


def _grouped_logsumexp(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    peak = np.full(n_groups, -np.inf)
    np.maximum.at(peak, groups, values)
    acc = np.zeros(n_groups)
    np.add.at(acc, groups, np.exp(values - peak[groups]))
    return peak + np.log(acc)


def marginal_type_masses(P, Q, n: int, max_n: int = ORACLE_MAX_N, max_types: int | None = None) -> MarginalTypeMasses:
    if n > max_n:
        raise ResourceCapError("most-powerful symmetric oracle blocklength", n, max_n)
    pa, qa = as_table(P), as_table(Q)
    counts = joint_type_counts(n, *pa.shape, max_types=max_types)
    xc, yc = counts.sum(axis=2), counts.sum(axis=1)
    keys = np.concatenate([xc, yc], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    lp = _grouped_logsumexp(log_type_probabilities(counts, pa), inverse, len(uniq))
    lq = _grouped_logsumexp(log_type_probabilities(counts, qa), inverse, len(uniq))
    nx = pa.shape[0]
    return MarginalTypeMasses(n, uniq[:, :nx], uniq[:, nx:], lp, lq)


def oracle_marginal_type_llr(P, Q, n: int, max_n: int = ORACLE_MAX_N) -> dict:
    """Map ``(tx, ty)`` count tuples to ``log P^n(pair) / Q^n(pair)``."""
    m = marginal_type_masses(P, Q, n, max_n)
    return {
        (tuple(int(v) for v in tx), tuple(int(v) for v in ty)): float(l)
        for tx, ty, l in zip(m.x_counts, m.y_counts, m.llr)
    }


def oracle_tradeoff(P, Q, n: int, max_n: int = ORACLE_MAX_N) -> list[ErrorPoint]:
    """Deterministic threshold points of the marginal-type NP test, by increasing alpha.

    Between consecutive points the optimal (randomized) trade-off is the
    straight segment; see :func:`envelope_beta`.
    """
    m = marginal_type_masses(P, Q, n, max_n)
    llr = m.llr
    order = np.argsort(llr, kind="stable")
    llr_sorted = llr[order]
    mp = np.exp(m.log_p[order])
    mq = np.exp(m.log_q[order])
    # cut only between distinct llr values; ties are rejected together
    cuts = np.flatnonzero(np.diff(llr_sorted) > TIE_TOL) + 1
    cuts = np.concatenate([[0], cuts, [len(llr_sorted)]])
    points = []
    for k in cuts:
        alpha = math.fsum(mp[:k])
        beta = math.fsum(mq[k:])
        tau = -math.inf if k == 0 else float(llr_sorted[k - 1])
        points.append(
            ErrorPoint(
                min(alpha, 1.0),
                min(beta, 1.0),
                math.log(alpha) if alpha > 0 else -math.inf,
                math.log(beta) if beta > 0 else -math.inf,
                "oracle",
                n,
                {"tau": tau},
            )
        )
    return points


def envelope_beta(envelope: list[ErrorPoint], alpha: float) -> float:
    """Smallest type-II error achievable at type-I error ``alpha`` (with randomization)."""
    a = np.array([p.alpha for p in envelope])
    b = np.array([p.beta for p in envelope])
    return float(np.interp(alpha, a, b))


def envelope_dominates(envelope: list[ErrorPoint], point: ErrorPoint, slack: float = 1e-12) -> bool:
    return envelope_beta(envelope, point.alpha) <= point.beta + slack


# ---------------------------------------------------------------------------
# vectorized decisions
# ---------------------------------------------------------------------------


def accept_h0(
    scheme: SchemeSpec,
    x_counts: np.ndarray,
    y_counts: np.ndarray,
    P,
    Q=None,
    oracle: Optional[MarginalTypeMasses] = None,
) -> np.ndarray:
    """Boolean mask of H0 decisions for rows of marginal count arrays."""
    n = float(x_counts[0].sum())
    if scheme.kind == "np_like":
        if scheme.llr is None:
            raise ValidationError("np_like scheme must be resolved before use")
        stat = (x_counts @ scheme.llr.a1 + y_counts @ scheme.llr.a2) / n
        return stat > scheme.tau + TIE_TOL
    if scheme.kind == "hk":
        return hk_statistics(x_counts, y_counts, P) < scheme.r - TIE_TOL
    if oracle is None:
        oracle = marginal_type_masses(P, Q, int(round(n)))
    idx = oracle.lookup(x_counts, y_counts)
    return oracle.llr[idx] > scheme.tau + TIE_TOL

"""Finite joint distributions, joint types, and their coordinate systems.

Cells are indexed ``p[x, y]`` with ``x`` in ``0..|X|-1`` and ``y`` in
``0..|Y|-1``. Cell ``(0, 0)`` is the reference cell of both coordinate
systems:

* natural coordinates ``theta`` -- log-odds against the reference cell,
  split into row (``theta_x``), column (``theta_y``) and interaction
  (``theta_xy``) parts;
* expectation coordinates ``eta`` -- marginal probabilities of the
  non-reference rows/columns plus the joint cells with ``x, y >= 1``.

Everything is in nats.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Union

import numpy as np

from .errors import ResourceCapError, ValidationError

POSITIVITY_FLOOR = 1e-12
NORMALIZATION_TOL = 1e-12
DEFAULT_MAX_TYPES = 50_000_000

ArrayLike = Union[np.ndarray, list, tuple]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Strictly positive probability table over ``X x Y``."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2 or min(p.shape) < 1:
            raise ValidationError(f"expected a 2-D probability table, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValidationError("probability table contains non-finite entries")
        if p.min() < POSITIVITY_FLOOR:
            raise ValidationError(
                f"all cells must be >= {POSITIVITY_FLOOR:g} (full support); min cell is {p.min():.3e}"
            )
        total = math.fsum(p.ravel())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"cells sum to {total!r}, not 1")
        object.__setattr__(self, "p", _frozen(p))

    @classmethod
    def normalized(cls, weights: ArrayLike) -> "JointDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, x_size: int, y_size: int) -> "JointDistribution":
        return cls(np.full((x_size, y_size), 1.0 / (x_size * y_size)))

    @classmethod
    def product(cls, px: ArrayLike, py: ArrayLike) -> "JointDistribution":
        return cls(np.outer(np.asarray(px, float), np.asarray(py, float)))

    @property
    def x_size(self) -> int:
        return self.p.shape[0]

    @property
    def y_size(self) -> int:
        return self.p.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.p.shape

    def __repr__(self) -> str:
        return f"JointDistribution({np.array2string(self.p, precision=6)})"


def as_table(d: Union[JointDistribution, ArrayLike]) -> np.ndarray:
    """Return the raw probability array behind ``d``."""
    if isinstance(d, JointDistribution):
        return d.p
    return np.asarray(d, dtype=float)


@dataclass(frozen=True, eq=False)
class NaturalCoords:
    theta_x: np.ndarray
    theta_y: np.ndarray
    theta_xy: np.ndarray

    def __post_init__(self):
        tx = np.atleast_1d(np.asarray(self.theta_x, float))
        ty = np.atleast_1d(np.asarray(self.theta_y, float))
        txy = np.asarray(self.theta_xy, float).reshape(tx.size, ty.size)
        object.__setattr__(self, "theta_x", _frozen(tx))
        object.__setattr__(self, "theta_y", _frozen(ty))
        object.__setattr__(self, "theta_xy", _frozen(txy))


@dataclass(frozen=True, eq=False)
class ExpectationCoords:
    eta_x: np.ndarray
    eta_y: np.ndarray
    eta_xy: np.ndarray

    def __post_init__(self):
        ex = np.atleast_1d(np.asarray(self.eta_x, float))
        ey = np.atleast_1d(np.asarray(self.eta_y, float))
        exy = np.asarray(self.eta_xy, float).reshape(ex.size, ey.size)
        for name, arr in (("eta_x", ex), ("eta_y", ey), ("eta_xy", exy)):
            if np.any(arr < 0) or np.any(arr > 1):
                raise ValidationError(f"{name} entries must lie in [0, 1]")
        object.__setattr__(self, "eta_x", _frozen(ex))
        object.__setattr__(self, "eta_y", _frozen(ey))
        object.__setattr__(self, "eta_xy", _frozen(exy))


@dataclass(frozen=True, eq=False)
class JointType:
    """Empirical joint distribution with denominator ``n`` (integer counts)."""

    n: int
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise ValidationError("joint type counts must be a 2-D array")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.round(c)):
                raise ValidationError("joint type counts must be integers")
            c = np.round(c).astype(np.int64)
        if np.any(c < 0):
            raise ValidationError("joint type counts must be non-negative")
        if int(c.sum()) != int(self.n) or self.n < 1:
            raise ValidationError(f"counts sum to {int(c.sum())}, expected n={self.n}")
        c = np.array(c, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def x_counts(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def y_counts(self) -> np.ndarray:
        return self.counts.sum(axis=0)


# ---------------------------------------------------------------------------
# divergences and marginals
# ---------------------------------------------------------------------------


def kl_divergence(p, q) -> float:
    """Relative entropy ``D(p||q)`` in nats, with ``0 log 0 = 0``."""
    pa, qa = as_table(p), as_table(q)
    if pa.shape != qa.shape:
        raise ValidationError(f"dimension mismatch: {pa.shape} vs {qa.shape}")
    if np.any(qa <= 0):
        raise ValidationError("reference distribution must be strictly positive")
    mask = pa > 0
    terms = pa[mask] * (np.log(pa[mask]) - np.log(qa[mask]))
    return max(math.fsum(terms), 0.0)


def marginals(d) -> tuple[np.ndarray, np.ndarray]:
    p = as_table(d)
    return p.sum(axis=1), p.sum(axis=0)


# ---------------------------------------------------------------------------
# coordinate systems
# ---------------------------------------------------------------------------


def to_natural(d) -> NaturalCoords:
    logp = np.log(as_table(d))
    ref = logp[0, 0]
    theta_x = logp[1:, 0] - ref
    theta_y = logp[0, 1:] - ref
    theta_xy = logp[1:, 1:] + ref - logp[1:, :1] - logp[:1, 1:]
    return NaturalCoords(theta_x, theta_y, theta_xy)


def _log_unnormalized(c: NaturalCoords) -> np.ndarray:
    dx, dy = c.theta_x.size, c.theta_y.size
    table = np.zeros((dx + 1, dy + 1))
    table[1:, 0] = c.theta_x
    table[0, 1:] = c.theta_y
    table[1:, 1:] = c.theta_x[:, None] + c.theta_y[None, :] + c.theta_xy
    return table


def potential(c: NaturalCoords) -> float:
    """Log-partition function ``psi(theta) = -log p(0, 0)``."""
    table = _log_unnormalized(c)
    m = table.max()
    return float(m + np.log(np.exp(table - m).sum()))


def from_natural(c: NaturalCoords) -> JointDistribution:
    table = _log_unnormalized(c)
    p = np.exp(table - potential(c))
    return JointDistribution(p / p.sum())


def to_expectation(d) -> ExpectationCoords:
    p = as_table(d)
    px, py = marginals(p)
    return ExpectationCoords(px[1:], py[1:], p[1:, 1:])


def from_expectation(c: ExpectationCoords) -> JointDistribution:
    return JointDistribution(expectation_table(c.eta_x, c.eta_y, c.eta_xy))


def expectation_table(eta_x, eta_y, eta_xy) -> np.ndarray:
    """Probability table implied by expectation coordinates (raw array).

    Raises :class:`ValidationError` if a cell comes out negative.
    """
    ex = np.atleast_1d(np.asarray(eta_x, float))
    ey = np.atleast_1d(np.asarray(eta_y, float))
    exy = np.asarray(eta_xy, float).reshape(ex.size, ey.size)
    p = np.empty((ex.size + 1, ey.size + 1))
    p[1:, 1:] = exy
    p[1:, 0] = ex - exy.sum(axis=1)
    p[0, 1:] = ey - exy.sum(axis=0)
    p[0, 0] = 1.0 - ex.sum() - ey.sum() + exy.sum()
    if p.min() < -1e-15:
        raise ValidationError("expectation coordinates imply a negative cell")
    return np.clip(p, 0.0, None)


# ---------------------------------------------------------------------------
# joint types
# ---------------------------------------------------------------------------


def count_joint_types(n: int, x_size: int, y_size: int) -> int:
    k = x_size * y_size
    return math.comb(n + k - 1, k - 1)


def _check_cap(required: int, max_types: int | None) -> None:
    cap = DEFAULT_MAX_TYPES if max_types is None else max_types
    if required > cap:
        raise ResourceCapError("joint-type enumeration", required, cap)


@lru_cache(maxsize=16)
def _compositions(n: int, k: int) -> np.ndarray:
    # stars and bars: bar positions b_1 < ... < b_{k-1} in range(n + k - 1)
    total = math.comb(n + k - 1, k - 1)
    if k == 1:
        out = np.array([[n]], dtype=np.int64)
    else:
        bars = np.fromiter(
            itertools.chain.from_iterable(itertools.combinations(range(n + k - 1), k - 1)),
            dtype=np.int64,
            count=total * (k - 1),
        ).reshape(total, k - 1)
        edges = np.empty((total, k + 1), dtype=np.int64)
        edges[:, 0] = -1
        edges[:, 1:-1] = bars
        edges[:, -1] = n + k - 1
        out = np.diff(edges, axis=1) - 1
    out.setflags(write=False)
    return out


def joint_type_counts(
    n: int,
    x_size: int,
    y_size: int,
    max_types: int | None = None,
    chunk: tuple[int, int] | None = None,
) -> np.ndarray:
    """All joint types at blocklength ``n`` as a ``(N, |X|, |Y|)`` count array.

    The order is deterministic (lexicographic in the bar positions), so
    ``chunk=(i, m)`` selects the ``i``-th of ``m`` contiguous slices and the
    slices partition the full enumeration.
    """
    if n < 1:
        raise ValidationError("blocklength n must be >= 1")
    _check_cap(count_joint_types(n, x_size, y_size), max_types)
    flat = _compositions(n, x_size * y_size)
    if chunk is not None:
        lo, hi = chunk_bounds(flat.shape[0], chunk[1])[chunk[0]]
        flat = flat[lo:hi]
    return flat.reshape(-1, x_size, y_size)


def chunk_bounds(total: int, n_chunks: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, total, n_chunks + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def enumerate_joint_types(
    n: int, x_size: int, y_size: int, max_types: int | None = None
) -> Iterator[JointType]:
    """Yield every joint type with denominator ``n`` exactly once."""
    for counts in joint_type_counts(n, x_size, y_size, max_types):
        yield JointType(n, counts)


@lru_cache(maxsize=64)
def log_factorials(n: int) -> np.ndarray:
    out = np.array([math.lgamma(k + 1) for k in range(n + 1)])
    out.setflags(write=False)
    return out


def log_type_probability(t: JointType, d) -> float:
    """Log of the ``d^n`` mass of the type class of ``t``."""
    p = as_table(d)
    if t.counts.shape != p.shape:
        raise ValidationError(f"dimension mismatch: {t.counts.shape} vs {p.shape}")
    return float(log_type_probabilities(t.counts[None], p)[0])


def log_type_probabilities(counts: np.ndarray, d) -> np.ndarray:
    """Vectorized :func:`log_type_probability` over a ``(N, |X|, |Y|)`` array."""
    p = as_table(d)
    c = counts.reshape(counts.shape[0], -1)
    n = int(c[0].sum())
    lf = log_factorials(n)
    logp = np.log(p).ravel()
    return lf[n] - lf[c].sum(axis=1) + c @ logp


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------


def parse_distribution(text: str, source: str = "<string>") -> JointDistribution:
    """Parse ``{"x_size": int, "y_size": int, "p": [[...], ...]}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or not {"x_size", "y_size", "p"} <= doc.keys():
        raise ValidationError(f"{source}: expected keys x_size, y_size, p")
    xs, ys, rows = doc["x_size"], doc["y_size"], doc["p"]
    where = f"{source}:{_key_line(text, 'p')}"
    if not (isinstance(xs, int) and isinstance(ys, int) and xs >= 1 and ys >= 1):
        raise ValidationError(f"{source}: x_size and y_size must be positive integers")
    if not isinstance(rows, list) or len(rows) != xs:
        raise ValidationError(f"{where}: p must have x_size={xs} rows")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != ys:
            raise ValidationError(f"{where}: row {i} of p must have y_size={ys} entries")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValidationError(f"{where}: p[{i}][{j}] is not a number")
    try:
        return JointDistribution(np.array(rows, dtype=float))
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _key_line(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def load_distribution(path: Union[str, Path]) -> JointDistribution:
    path = Path(path)
    return parse_distribution(path.read_text(), source=str(path))


def dump_distribution(d: JointDistribution) -> str:
    return json.dumps({"x_size": d.x_size, "y_size": d.y_size, "p": d.p.tolist()})

"""I-projection onto fixed-marginal families and the projected relative entropy.

The projection of ``q`` onto the set of distributions with marginals
``(mx, my)`` is computed by iterative proportional fitting: alternately
rescale rows and columns. Each half-step is the exact I-projection onto a
single marginal constraint, and the iterates stay in the exponential family
through ``q`` generated by row and column indicators, so the interaction
coordinates ``theta_xy`` of ``q`` are preserved throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    JointDistribution,
    JointType,
    as_table,
    joint_type_counts,
    kl_divergence,
    marginals,
    to_natural,
)
from .errors import ConvergenceError, ValidationError

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000
MARGINAL_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    projection: JointDistribution
    value: float
    iterations: int
    residual: float
    history: tuple = field(default=(), repr=False)


def _check_marginal(m, size: int, name: str, allow_zero: bool = False) -> np.ndarray:
    m = np.asarray(m, dtype=float).ravel()
    if m.size != size:
        raise ValidationError(f"{name} has {m.size} entries, expected {size}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} contains non-finite entries")
    if allow_zero:
        if np.any(m < 0):
            raise ValidationError(f"{name} has negative entries")
    elif np.any(m <= 0):
        raise ValidationError(f"{name} must be strictly positive")
    if abs(m.sum() - 1.0) > MARGINAL_SUM_TOL:
        raise ValidationError(f"{name} sums to {m.sum()!r}, not 1")
    return m


def ipf(q, mx, my, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, record: bool = False):
    """Raw iterative proportional fitting on arrays.

    Zero entries in the target marginals are allowed here (rows/columns are
    zeroed). Returns ``(table, iterations, residual, history)``.
    """
    r = np.array(as_table(q), dtype=float)
    mx = np.asarray(mx, float)
    my = np.asarray(my, float)
    history = []
    residual = math.inf
    for it in range(1, max_iter + 1):
        rows = r.sum(axis=1)
        r *= np.divide(mx, rows, out=np.zeros_like(mx), where=rows > 0)[:, None]
        cols = r.sum(axis=0)
        r *= np.divide(my, cols, out=np.zeros_like(my), where=cols > 0)[None, :]
        # columns are exact after the column step; rows carry the mismatch
        residual = 0.5 * (np.abs(r.sum(axis=1) - mx).sum() + np.abs(r.sum(axis=0) - my).sum())
        if record:
            history.append(residual)
        if residual < tol:
            return r, it, residual, tuple(history)
    raise ConvergenceError("iterative proportional fitting did not converge", residual, max_iter)


def project_onto_marginals(
    q, mx, my, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, record_history: bool = False
) -> ProjectionResult:
    """Minimize ``D(.||q)`` over distributions with marginals ``(mx, my)``."""
    qa = as_table(q)
    if not isinstance(q, JointDistribution):
        q = JointDistribution(qa)
    mx = _check_marginal(mx, qa.shape[0], "mx")
    my = _check_marginal(my, qa.shape[1], "my")
    table, iterations, residual, history = ipf(qa, mx, my, tol, max_iter, record_history)
    proj = JointDistribution(table / table.sum())
    return ProjectionResult(proj, kl_divergence(proj, q), iterations, residual, history)


def projected_relative_entropy(p, q, tol: float = DEFAULT_TOL) -> float:
    """``E(p||q)``: smallest ``D(.||q)`` among distributions sharing p's marginals."""
    px, py = marginals(p)
    return project_onto_marginals(q, px, py, tol=tol).value


def projection_of(p, q, tol: float = DEFAULT_TOL) -> JointDistribution:
    """The optimizer ``p*`` of ``E(p||q)``."""
    px, py = marginals(p)
    return project_onto_marginals(q, px, py, tol=tol).projection


def entropy_from_marginals(mx, my, q, tol: float = DEFAULT_TOL) -> float:
    """``E(mx x my || q)`` for possibly boundary marginals (types)."""
    qa = as_table(q)
    mx = _check_marginal(mx, qa.shape[0], "mx", allow_zero=True)
    my = _check_marginal(my, qa.shape[1], "my", allow_zero=True)
    if qa.shape == (2, 2):
        return float(binary_projected_entropy(mx[1], my[1], qa))
    table, *_ = ipf(qa, mx, my, tol)
    return kl_divergence(table, qa)


# ---------------------------------------------------------------------------
# binary closed form
# ---------------------------------------------------------------------------


def binary_eta_xy(eta_x, eta_y, theta_xy):
    """Joint cell ``(1, 1)`` of the 2x2 distribution with ``P_X(1) = eta_x``,
    ``P_Y(1) = eta_y`` and interaction coordinate ``theta_xy``.

    Solves ``k h^2 - [(eta_x + eta_y) k + 1] h + (k + 1) eta_x eta_y = 0``
    with ``k = exp(theta_xy) - 1`` for the root inside the Frechet bounds.
    Vectorized; boundary marginals (0 or 1) are accepted.
    """
    ex = np.asarray(eta_x, dtype=float)
    ey = np.asarray(eta_y, dtype=float)
    k = np.expm1(np.asarray(theta_xy, dtype=float))
    b = (ex + ey) * k + 1.0
    c = (k + 1.0) * ex * ey
    root = np.sqrt(np.maximum(b * b - 4.0 * k * c, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # pick the cancellation-free form of the smaller root
        small = np.where(b >= 0, 2.0 * c / (b + root), (b - root) / (2.0 * k))
    small = np.where((b >= 0) & (b + root == 0), 0.0, small)
    lo = np.maximum(0.0, ex + ey - 1.0)
    hi = np.minimum(ex, ey)
    out = np.clip(small, lo, hi)
    return float(out) if out.ndim == 0 else out


def binary_table(eta_x, eta_y, eta_xy) -> np.ndarray:
    """Stack 2x2 tables ``[[p00, p01], [p10, p11]]`` along the last two axes."""
    ex, ey, exy = np.broadcast_arrays(*(np.asarray(v, float) for v in (eta_x, eta_y, eta_xy)))
    out = np.empty(ex.shape + (2, 2))
    out[..., 1, 1] = exy
    out[..., 1, 0] = np.maximum(ex - exy, 0.0)
    out[..., 0, 1] = np.maximum(ey - exy, 0.0)
    out[..., 0, 0] = np.maximum(1.0 - ex - ey + exy, 0.0)
    return out


def binary_projection(eta_x, eta_y, q) -> np.ndarray:
    """Closed-form projection of a 2x2 ``q`` onto marginals ``(eta_x, eta_y)``."""
    theta_xy = float(to_natural(q).theta_xy[0, 0])
    return binary_table(eta_x, eta_y, binary_eta_xy(eta_x, eta_y, theta_xy))


def binary_projected_entropy(eta_x, eta_y, q):
    """Vectorized ``E`` for 2x2 ``q`` as a function of the target marginals."""
    qa = as_table(q)
    t = binary_projection(eta_x, eta_y, qa)
    logq = np.log(qa)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(t > 0, t * (np.log(t) - logq), 0.0)
    out = np.maximum(terms.sum(axis=(-2, -1)), 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# identities and diagnostics
# ---------------------------------------------------------------------------


def pythagorean_residual(p, q, tol: float = DEFAULT_TOL) -> float:
    """``|D(p||q) - D(p||p*) - D(p*||q)|`` with ``p*`` the optimizer of ``E(p||q)``."""
    star = projection_of(p, q, tol)
    return abs(kl_divergence(p, q) - kl_divergence(p, star) - kl_divergence(star, q))


def projected_relative_entropy_over_types(t: JointType, q, max_types: int | None = None) -> float:
    """``E_n(t||q)``: minimum of ``D(.||q)`` over joint types sharing t's marginals.

    Exhaustive; only meant for small ``n``.
    """
    qa = as_table(q)
    if t.counts.shape != qa.shape:
        raise ValidationError(f"dimension mismatch: {t.counts.shape} vs {qa.shape}")
    if qa.shape == (2, 2):
        kx, ky = int(t.x_counts[1]), int(t.y_counts[1])
        c11 = np.arange(max(0, kx + ky - t.n), min(kx, ky) + 1)
        cands = np.stack([t.n - kx - ky + c11, ky - c11, kx - c11, c11], -1).reshape(-1, 2, 2)
    else:
        allc = joint_type_counts(t.n, *qa.shape, max_types=max_types)
        keep = np.all(allc.sum(axis=2) == t.x_counts, axis=1) & np.all(allc.sum(axis=1) == t.y_counts, axis=1)
        cands = allc[keep]
    freqs = cands / t.n
    logq = np.log(qa)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(freqs > 0, freqs * (np.log(freqs) - logq), 0.0).sum(axis=(1, 2))
    return float(max(vals.min(), 0.0))


def type_restriction_gap(n: int, q) -> float:
    """Upper bound ``Delta_n`` on ``E_n - E`` for joint types at blocklength ``n``."""
    qa = as_table(q)
    nx, ny = qa.shape
    nu = 4.0 * (nx - 1) * (ny - 1) / n
    if nu == 0.0:
        return 0.0
    return nu * math.log(nx * ny / nu) + nu * float(np.max(-np.log(qa)))

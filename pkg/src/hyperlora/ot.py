"""Entropic optimal transport between weighted point clouds.

Implements the entropy-regularized transport cost

    W_eps(a, b) = min_pi <pi, C> + eps * KL(pi | a (x) b)

solved with log-domain Sinkhorn iterations (epsilon-annealed warm start for
small targets), the debiased divergence

    S_eps(a, b) = W_eps(a, b) - W_eps(a, a)/2 - W_eps(b, b)/2,

and an exact unregularized solver for small instances used as a validation
oracle.  The ground cost is the squared Euclidean distance.

A separate fixed-iteration evaluation (:func:`sinkhorn_divergence_unrolled`)
exists for the differentiation path: it runs exactly ``unroll_iters``
updates at the target epsilon with no annealing and no stopping test, so a
reverse-mode tape can replay it step for step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog

from .errors import ArgumentError, NumericError
from .mathx import numpy_ops

_ANNEAL_RATIO = 0.5   # epsilon halves per annealing level
_ANNEAL_INNER = 5     # update pairs per annealing level


class CostKind(Enum):
    SQUARED_EUCLIDEAN = "sqeuclidean"


@dataclass(frozen=True)
class PointCloud:
    """N points in R^D with simplex weights (uniform by default)."""

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ArgumentError(f"points must be (N, D) with N >= 1, "
                                f"got shape {pts.shape}")
        if self.weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (pts.shape[0],):
            raise ArgumentError("weights must have one entry per point")
        if np.any(w < 0):
            raise ArgumentError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ArgumentError(f"weights sum to {w.sum()!r}, not 1")
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def sorted(self) -> "PointCloud":
        """Canonical point order (lexicographic on coordinates)."""
        order = np.lexsort(self.points.T[::-1])
        return PointCloud(self.points[order], self.weights[order])


@dataclass(frozen=True)
class OTConfig:
    epsilon: float = 0.05
    max_iters: int = 500
    unroll_iters: int = 50
    tol: float = 1e-9
    cost: CostKind = CostKind.SQUARED_EUCLIDEAN

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ArgumentError("epsilon must be > 0")
        if self.unroll_iters > self.max_iters:
            raise ArgumentError("unroll_iters must not exceed max_iters")
        if self.tol <= 0:
            raise ArgumentError("tol must be > 0")


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    potentials_f: np.ndarray
    potentials_g: np.ndarray
    plan: np.ndarray
    iterations: int
    converged: bool


def cost_matrix(a: PointCloud, b: PointCloud,
                cfg: OTConfig = OTConfig()) -> np.ndarray:
    """Pairwise squared Euclidean distances, C[i, j] = ||a_i - b_j||^2."""
    if a.dim != b.dim:
        raise ArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return _cost_matrix_ops(a.points, b.points, numpy_ops)


def _cost_matrix_ops(a_pts, b_pts, ops):
    # ||x - y||^2 = ||x||^2 + ||y||^2 - 2 x.y ; generic over ndarray/tape
    sq_a = (a_pts * a_pts).sum(axis=1)
    sq_b = (b_pts * b_pts).sum(axis=1)
    cross = a_pts @ b_pts.T
    n = ops.value_of(sq_a).shape[0]
    m = ops.value_of(sq_b).shape[0]
    return sq_a.reshape((n, 1)) + sq_b.reshape((1, m)) - 2.0 * cross


def _log_weights(cloud: PointCloud) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(cloud.weights)


def _plan_from_potentials(f, g, cost, loga, logb, eps):
    logpi = loga[:, None] + logb[None, :] + (f[:, None] + g[None, :] - cost) / eps
    return np.exp(logpi), logpi


def _primal_value(f, g, cost, loga, logb, eps):
    pi, logpi = _plan_from_potentials(f, g, cost, loga, logb, eps)
    kl = np.sum(pi * (logpi - loga[:, None] - logb[None, :]))
    return float(np.sum(pi * cost) + eps * kl), pi


def sinkhorn_w(a: PointCloud, b: PointCloud,
               cfg: OTConfig = OTConfig()) -> SinkhornResult:
    """Entropy-regularized transport cost via log-domain Sinkhorn.

    Runs an epsilon-annealed warm start (halving from half the cost range
    down to ``cfg.epsilon``), then iterates at the target epsilon until the
    row-marginal violation drops below ``cfg.tol`` in the infinity norm or
    the total update budget ``cfg.max_iters`` is exhausted.  The returned
    value is the primal objective ``<pi, C> + eps * KL(pi | a (x) b)``
    evaluated at the final plan; ``converged`` reports whether the tolerance
    was met (a non-converged result is still returned, the caller decides).
    """
    cost = cost_matrix(a, b, cfg)
    if not np.all(np.isfinite(cost)):
        raise NumericError("cost matrix contains non-finite entries")
    loga, logb = _log_weights(a), _log_weights(b)
    eps = cfg.epsilon
    f = np.zeros(a.n)
    g = np.zeros(b.n)

    schedule = []
    top = max(eps, 0.5 * float(cost.max()))
    cur = top
    while cur > eps * (1.0 + 1e-12):
        schedule.append(cur)
        cur *= _ANNEAL_RATIO
    iters = 0

    def update_pair(e):
        nonlocal f, g
        f = -e * numpy_ops.logsumexp(logb[None, :] + (g[None, :] - cost) / e,
                                     axis=1)
        g = -e * numpy_ops.logsumexp(loga[:, None] + (f[:, None] - cost) / e,
                                     axis=0)

    for e in schedule:
        for _ in range(_ANNEAL_INNER):
            if iters >= cfg.max_iters:
                break
            update_pair(e)
            iters += 1

    converged = False
    while iters < cfg.max_iters:
        update_pair(eps)
        iters += 1
        pi, _ = _plan_from_potentials(f, g, cost, loga, logb, eps)
        if np.max(np.abs(pi.sum(axis=1) - a.weights)) < cfg.tol:
            converged = True
            break

    value, pi = _primal_value(f, g, cost, loga, logb, eps)
    if not np.isfinite(value):
        raise NumericError("sinkhorn value is non-finite")
    return SinkhornResult(value=value, potentials_f=f.copy(),
                          potentials_g=g.copy(), plan=pi,
                          iterations=iters, converged=converged)


def sinkhorn_divergence(a: PointCloud, b: PointCloud,
                        cfg: OTConfig = OTConfig()) -> float:
    """Debiased Sinkhorn divergence between two clouds.

    Both clouds are put in canonical point order and a canonical argument
    orientation before solving, so the result is exactly symmetric in
    (a, b), invariant to point permutations, and exactly zero for equal
    clouds.
    """
    x, y = a.sorted(), b.sorted()
    if _cloud_key(y) < _cloud_key(x):
        x, y = y, x
    w_xy = sinkhorn_w(x, y, cfg).value
    w_xx = sinkhorn_w(x, x, cfg).value
    w_yy = sinkhorn_w(y, y, cfg).value
    return w_xy - 0.5 * w_xx - 0.5 * w_yy


def _cloud_key(c: PointCloud):
    return (c.n, c.dim, c.points.tobytes(), c.weights.tobytes())


def _unrolled_w(cost, loga, logb, eps, n_iters, ops):
    """W_eps evaluated after exactly ``n_iters`` update pairs at fixed eps.

    Generic over the ops backend: with plain arrays this is the fixed-graph
    reference value, with tape variables it is the differentiable forward
    pass.  No stopping test, no annealing; the final potentials feed the
    primal objective directly (they are not detached).
    """
    n = ops.value_of(cost).shape[0]
    m = ops.value_of(cost).shape[1]
    f = np.zeros(n)
    g = np.zeros(m)
    inv_eps = 1.0 / eps
    for _ in range(n_iters):
        f = (-eps) * ops.logsumexp((g.reshape((1, m)) - cost) * inv_eps
                                   + logb.reshape((1, m)), axis=1)
        g = (-eps) * ops.logsumexp((f.reshape((n, 1)) - cost) * inv_eps
                                   + loga.reshape((n, 1)), axis=0)
    logab = loga[:, None] + logb[None, :]
    logpi = (f.reshape((n, 1)) + g.reshape((1, m)) - cost) * inv_eps + logab
    pi = ops.exp(logpi)
    return (pi * cost).sum() + eps * (pi * (logpi - logab)).sum()


def sinkhorn_divergence_unrolled(a: PointCloud, b: PointCloud,
                                 cfg: OTConfig = OTConfig()) -> float:
    """Fixed-iteration Sinkhorn divergence (the training-loss definition).

    Equals the value the differentiation path computes: each W term uses
    exactly ``cfg.unroll_iters`` update pairs at ``cfg.epsilon``.
    """
    if a.dim != b.dim:
        raise ArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")
    loga, logb = _log_weights(a), _log_weights(b)
    c_ab = _cost_matrix_ops(a.points, b.points, numpy_ops)
    c_aa = _cost_matrix_ops(a.points, a.points, numpy_ops)
    c_bb = _cost_matrix_ops(b.points, b.points, numpy_ops)
    w_ab = _unrolled_w(c_ab, loga, logb, cfg.epsilon, cfg.unroll_iters,
                       numpy_ops)
    w_aa = _unrolled_w(c_aa, loga, loga, cfg.epsilon, cfg.unroll_iters,
                       numpy_ops)
    w_bb = _unrolled_w(c_bb, logb, logb, cfg.epsilon, cfg.unroll_iters,
                       numpy_ops)
    return float(w_ab - 0.5 * w_aa - 0.5 * w_bb)


def exact_ot(a: PointCloud, b: PointCloud) -> float:
    """Exact unregularized transport cost for small instances.

    Solves the transport linear program (assignment problem when both clouds
    are uniform with equal size).  Restricted to N*M <= 10000; meant as the
    oracle for validating the entropic solver as epsilon shrinks.
    """
    if a.n * b.n > 10_000:
        raise ArgumentError(f"instance too large for the exact solver: "
                            f"{a.n} x {b.n}")
    cost = cost_matrix(a, b)
    uniform = (a.n == b.n
               and np.allclose(a.weights, 1.0 / a.n, rtol=0, atol=1e-15)
               and np.allclose(b.weights, 1.0 / b.n, rtol=0, atol=1e-15))
    if uniform:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum()) / a.n
    # generic LP over the transport polytope; last column constraint is
    # redundant and dropped for conditioning
    n, m = a.n, b.n
    a_eq = []
    b_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m:(i + 1) * m] = 1.0
        a_eq.append(row)
        b_eq.append(a.weights[i])
    for j in range(m - 1):
        col = np.zeros(n * m)
        col[j::m] = 1.0
        a_eq.append(col)
        b_eq.append(b.weights[j])
    res = linprog(cost.ravel(), A_eq=np.array(a_eq), b_eq=np.array(b_eq),
                  bounds=(0, None), method="highs")
    if not res.success:
        raise NumericError(f"transport LP failed: {res.message}")
    return float(res.fun)

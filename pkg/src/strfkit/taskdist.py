"""Entropically regularized transport distances between filter populations.

Each filter is a 4-vector (sigma_t_s, sigma_f_oct, omega, Omega); the
populations under comparison are jointly z-scored per axis, costs are
Euclidean, and the Sinkhorn plan is solved in the log domain whenever the
Gibbs kernel exp(-M/lambda) would underflow (it always does at the
default lambda = 1e-3). A hand-rolled average-linkage clustering turns
the pairwise distance matrix into a dendrogram with deterministic ties.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .defaults import SINKHORN_LAMBDA, SINKHORN_MAX_ITER, SINKHORN_TOL
from .errors import ConvergenceWarning, DegenerateAxis, InvalidInput
from .gaborkit import ModulationPoint
from .parallel import n_threads

AXIS_NAMES = ("sigma_t_s", "sigma_f_oct", "omega", "Omega")


@dataclass(frozen=True)
class TaskPopulation:
    """A named filter population with (by default uniform) weights."""

    task_name: str
    points: tuple
    weights: np.ndarray | None = None

    def __post_init__(self):
        points = tuple(self.points)
        if not points:
            raise InvalidInput(f"population {self.task_name!r} is empty")
        object.__setattr__(self, "points", points)
        w = self.weights
        if w is None:
            w = np.full(len(points), 1.0 / len(points))
        else:
            w = np.asarray(w, dtype=float)
            if w.shape != (len(points),):
                raise InvalidInput("weights length must match point count")
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
                raise InvalidInput("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)

    def matrix(self) -> np.ndarray:
        """[n, 4] coordinate matrix ordered like AXIS_NAMES."""
        return np.stack([m.as_vector() for m in self.points])


@dataclass(frozen=True)
class NormalizationFrame:
    """Pooled moments used to z-score a set of populations."""

    means: np.ndarray
    stds: np.ndarray
    degenerate_axes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "axes": list(AXIS_NAMES),
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "degenerate_axes": [AXIS_NAMES[i] for i in self.degenerate_axes],
        }


def normalize_populations(
    pops: Sequence[TaskPopulation],
) -> tuple[list[TaskPopulation], NormalizationFrame]:
    """Jointly z-score every coordinate over the union of all populations.

    Axes with zero pooled spread stay unscaled and are flagged (a
    DegenerateAxis warning is emitted); weights are untouched.
    """
    if not pops:
        raise InvalidInput("need at least one population")
    pooled = np.concatenate([p.matrix() for p in pops], axis=0)
    means = pooled.mean(axis=0)
    stds = pooled.std(axis=0)
    degenerate = tuple(int(i) for i in np.nonzero(stds == 0)[0])
    for i in degenerate:
        warnings.warn(
            f"axis {AXIS_NAMES[i]} has zero pooled variance; left unscaled",
            DegenerateAxis,
        )
    scale = np.where(stds == 0, 1.0, stds)
    out = []
    for p in pops:
        z = (p.matrix() - means) / scale
        points = tuple(
            ModulationPoint(
                sigma_t_s=row[0], sigma_f_oct=row[1], omega=row[2], Omega=row[3]
            )
            for row in z
        )
        out.append(replace(p, points=points))
    return out, NormalizationFrame(means, stds, degenerate)


def cost_matrix(a: TaskPopulation, b: TaskPopulation) -> np.ndarray:
    """Pairwise Euclidean distances between the two populations' filters."""
    return cdist(a.matrix(), b.matrix())


@dataclass
class TransportResult:
    cost_matrix: np.ndarray
    plan: np.ndarray
    distance: float
    regularized_objective: float
    reg_lambda: float
    iterations_used: int
    marginal_error: float
    converged: bool


def _marginal_error(P, w_a, w_b) -> float:
    return float(
        max(
            np.abs(P.sum(axis=1) - w_a).max(),
            np.abs(P.sum(axis=0) - w_b).max(),
        )
    )


def _sinkhorn_linear(K, w_a, w_b, max_iter, tol):
    u = np.ones_like(w_a)
    v = np.ones_like(w_b)
    for it in range(1, max_iter + 1):
        Kv = K @ v
        KTu = K.T @ u
        if (Kv <= 0).any() or (KTu <= 0).any():
            return None  # underflow; caller retries in log domain
        u = w_a / Kv
        v = w_b / (K.T @ u)
        P = u[:, None] * K * v[None, :]
        err = _marginal_error(P, w_a, w_b)
        if not np.isfinite(err):
            return None
        if err < tol:
            return P, it, err
    return P, max_iter, err


def _sinkhorn_log(M, w_a, w_b, lam, max_iter, tol):
    """Log-domain scaling with two standard accelerations for tiny lambda:
    the regularizer anneals down from the cost scale (warm-started
    potentials), and stalls are polished with guarded Newton steps on the
    smooth entropic dual. Both target the same unique optimizer and the
    same stopping rule; bare scaling at lambda=1e-3 mixes too slowly to
    reach practical tolerances."""
    log_a = np.log(w_a)
    log_b = np.log(w_b)
    u = np.zeros_like(w_a)
    v = np.zeros_like(w_b)
    ladder = []
    current = max(M.max(), lam)
    while current > lam:
        ladder.append(current)
        current /= 2.0
    total = 0

    def scale_once(Mr):
        nonlocal u, v, total
        v = log_b - logsumexp(Mr + u[:, None], axis=0)
        u = log_a - logsumexp(Mr + v[None, :], axis=1)
        total += 1

    for stage_lam in ladder:
        Mr = -M / stage_lam
        for _ in range(20):
            if total >= max_iter:
                break
            scale_once(Mr)

    Mr = -M / lam
    P = np.exp(Mr + u[:, None] + v[None, :])
    err = _marginal_error(P, w_a, w_b)
    while err >= tol and total < max_iter:
        for _ in range(min(50, max_iter - total)):
            scale_once(Mr)
            P = np.exp(Mr + u[:, None] + v[None, :])
            err = _marginal_error(P, w_a, w_b)
            if err < tol:
                return P, total, err
        u, v, P, err, total = _newton_polish(
            Mr, log_a, log_b, u, v, P, err, w_a, w_b, tol, total, max_iter
        )
    return P, total, err


def _newton_polish(Mr, log_a, log_b, u, v, P, err, w_a, w_b, tol, total, max_iter):
    """Newton steps on the dual potentials, accepted only when they shrink
    the marginal violation; backs off to plain scaling otherwise."""
    n, m = Mr.shape
    for _ in range(25):
        if err < tol or total >= max_iter:
            break
        r = P.sum(axis=1)
        c = P.sum(axis=0)
        grad = np.concatenate([w_a - r, w_b - c])
        H = np.zeros((n + m, n + m))
        H[:n, :n] = np.diag(r)
        H[:n, n:] = P
        H[n:, :n] = P.T
        H[n:, n:] = np.diag(c)
        step, *_ = np.linalg.lstsq(H, grad, rcond=None)
        improved = False
        scale = 1.0
        for _ in range(40):
            u_try = u + scale * step[:n]
            v_try = v + scale * step[n:]
            with np.errstate(over="ignore"):
                P_try = np.exp(Mr + u_try[:, None] + v_try[None, :])
            if np.isfinite(P_try).all():
                err_try = _marginal_error(P_try, w_a, w_b)
                if err_try < err:
                    u, v, P, err = u_try, v_try, P_try, err_try
                    improved = True
                    break
            scale /= 2.0
        total += 1
        if not improved:
            break
    return u, v, P, err, total


def sinkhorn(
    M: np.ndarray,
    w_a: np.ndarray,
    w_b: np.ndarray,
    lam: float = SINKHORN_LAMBDA,
    max_iter: int = SINKHORN_MAX_ITER,
    tol: float = SINKHORN_TOL,
) -> TransportResult:
    """Entropic OT between two weighted point clouds given their cost matrix.

    The reported distance is the transport cost <P, M> at the entropic
    optimizer; the regularized objective <P, M> - lambda*h(P) rides
    along. Non-convergence attaches a ConvergenceWarning instead of
    raising; check `converged` / `marginal_error` on the result.
    """
    M = np.asarray(M, dtype=float)
    w_a = np.asarray(w_a, dtype=float)
    w_b = np.asarray(w_b, dtype=float)
    if M.ndim != 2 or M.shape != (w_a.size, w_b.size):
        raise InvalidInput("cost matrix shape does not match the weights")
    if (M < 0).any():
        raise InvalidInput("cost matrix must be nonnegative")
    if lam <= 0:
        raise InvalidInput("lambda must be positive")

    result = None
    if M.max() / lam < 500.0:  # Gibbs kernel safely representable
        K = np.exp(-M / lam)
        result = _sinkhorn_linear(K, w_a, w_b, max_iter, tol)
    if result is None:
        result = _sinkhorn_log(M, w_a, w_b, lam, max_iter, tol)
    P, iterations, err = result
    converged = err < tol
    if not converged:
        warnings.warn(
            f"Sinkhorn stopped at max_iter={max_iter} with marginal "
            f"violation {err:.3e}",
            ConvergenceWarning,
        )
    cost = float((P * M).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        logP = np.where(P > 0, np.log(np.where(P > 0, P, 1.0)), 0.0)
    entropy = float(-(P * logP).sum())
    return TransportResult(
        cost_matrix=M,
        plan=P,
        distance=cost,
        regularized_objective=cost - lam * entropy,
        reg_lambda=lam,
        iterations_used=iterations,
        marginal_error=err,
        converged=converged,
    )


def population_distance(
    a: TaskPopulation,
    b: TaskPopulation,
    lam: float = SINKHORN_LAMBDA,
    max_iter: int = SINKHORN_MAX_ITER,
    tol: float = SINKHORN_TOL,
) -> TransportResult:
    """Sinkhorn distance between two populations already in a common frame."""
    return sinkhorn(cost_matrix(a, b), a.weights, b.weights, lam, max_iter, tol)


def pairwise_distances(
    pops: Sequence[TaskPopulation],
    lam: float = SINKHORN_LAMBDA,
    max_iter: int = SINKHORN_MAX_ITER,
    tol: float = SINKHORN_TOL,
) -> np.ndarray:
    """Symmetric matrix of Sinkhorn distances; expects jointly normalized
    populations. Cells are independent solves and may run in parallel
    (STRFKIT_THREADS); the diagonal is computed, not forced to zero."""
    if len(pops) < 2:
        raise InvalidInput("need at least two populations")
    n = len(pops)
    cells = [(i, j) for i in range(n) for j in range(i, n)]

    def solve(cell):
        i, j = cell
        return population_distance(pops[i], pops[j], lam, max_iter, tol).distance

    workers = n_threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(solve, cells))
    else:
        values = [solve(c) for c in cells]
    D = np.zeros((n, n))
    for (i, j), d in zip(cells, values):
        D[i, j] = D[j, i] = d
    return D


@dataclass(frozen=True)
class DendrogramNode:
    """Binary merge tree; leaves carry task names, merges carry heights."""

    name: str | None = None
    children: tuple | None = None
    merge_height: float = 0.0
    size: int = 1

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def leaf_names(self) -> list[str]:
        if self.is_leaf:
            return [self.name]
        return [n for c in self.children for n in c.leaf_names()]

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"name": self.name}
        return {
            "merge_height": self.merge_height,
            "size": self.size,
            "children": [c.to_dict() for c in self.children],
        }


def linkage_with_table(
    D: np.ndarray, names: Sequence[str]
) -> tuple[DendrogramNode, np.ndarray]:
    """Average-linkage agglomeration with lexicographic (i, j) tie-breaks.

    Returns the merge tree and a scipy-style [n-1, 4] linkage table
    (child ids, height, cluster size) for rendering.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.shape != (n, n) or n != len(names):
        raise InvalidInput("distance matrix and names disagree in size")
    if n < 1:
        raise InvalidInput("no tasks to cluster")
    if not np.allclose(D, D.T, atol=1e-8):
        raise InvalidInput("distance matrix must be symmetric")
    nodes = {i: DendrogramNode(name=str(names[i])) for i in range(n)}
    sizes = {i: 1 for i in range(n)}
    dist = {}
    for i in range(n):
        for j in range(i + 1, n):
            dist[(i, j)] = D[i, j]
    table = np.zeros((max(n - 1, 0), 4))
    next_id = n
    for step in range(n - 1):
        (i, j) = min(dist, key=lambda ij: (dist[ij], ij))
        h = dist[(i, j)]
        merged = DendrogramNode(
            children=(nodes[i], nodes[j]),
            merge_height=h,
            size=sizes[i] + sizes[j],
        )
        table[step] = (i, j, h, merged.size)
        active = [k for k in nodes if k not in (i, j)]
        for k in active:
            d_ik = dist[tuple(sorted((i, k)))]
            d_jk = dist[tuple(sorted((j, k)))]
            new_d = (sizes[i] * d_ik + sizes[j] * d_jk) / (sizes[i] + sizes[j])
            dist[tuple(sorted((next_id, k)))] = new_d
        for key in [key for key in dist if i in key or j in key]:
            del dist[key]
        del nodes[i], nodes[j], sizes[i], sizes[j]
        nodes[next_id] = merged
        sizes[next_id] = merged.size
        next_id += 1
    root = nodes[max(nodes)] if nodes else DendrogramNode(name=str(names[0]))
    return root, table


def linkage(D: np.ndarray, names: Sequence[str]) -> DendrogramNode:
    """Average-linkage cluster tree over a symmetric distance matrix."""
    return linkage_with_table(D, names)[0]

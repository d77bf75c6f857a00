"""Generalized Procrustes alignment by alternating least squares.

Given k configurations on a shared index set, find rigid motions g_i and a
mean configuration Z minimizing

    E = (1/k) * sum_i || (g_i . X_i - Z) restricted to the domain of X_i ||_F^2

with Z eliminated as the per-index masked mean of the transformed inputs.
Three sweep strategies are provided:

* ``basic``   - each sweep solves every rotation against the frozen mean,
  then recomputes the mean.  Can stall on unstable critical points (the
  classic antipodal two-configuration failure); kept for tests.
* ``refined`` - solves each rotation against the mean with the
  configuration's own contribution removed, updating the mean after every
  single rotation.  Exact for two configurations.
* ``missing_points`` - the refined sweep generalized to partial domains
  with per-index averaging counts and per-configuration translations.
  With full domains it reproduces ``refined`` exactly; it is the default.

The module also houses the post-hoc diagnostics: symmetry residuals of the
mean/input cross-covariances (zero at critical points), the second-derivative
quadratic form along one-parameter rotation subgroups, and essential
dimensionality of a configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core_types import Configuration, RigidMotion, centroid
from .errors import (
    DimensionMismatch,
    DroppedAllIndices,
    NonFinite,
    NotAntisymmetric,
)
from .procrustes_pair import deterministic_svd

__all__ = [
    "AlsOptions",
    "GpaProblem",
    "AlignmentResult",
    "gpa_loss",
    "als_align",
    "normalize_first_fixed",
    "symmetry_residual",
    "gradient_form",
    "hessian_form",
    "hessian_matrix",
    "essential_dimension",
]

_VARIANTS = ("basic", "refined", "missing_points")


@dataclass(frozen=True)
class AlsOptions:
    """Termination and variant controls for the ALS sweeps.

    ``tol`` is in loss-change units: a sweep that changes the loss by less
    than ``tol`` terminates the iteration, but only after ``min_iter``
    sweeps have run (guards against stopping at unstable critical points).
    ``literal_missing_update`` switches the missing-points rotation update
    to a compatibility form that applies the current rotation inside the
    second SVD factor instead of the first; the default form reduces
    exactly to the ``refined`` sweep on full domains.
    """

    variant: str = "missing_points"
    tol: float = 1e-10
    max_iter: int = 500
    min_iter: int = 3
    literal_missing_update: bool = False

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected {_VARIANTS}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not (self.max_iter >= self.min_iter >= 0):
            raise ValueError("need max_iter >= min_iter >= 0")


@dataclass(frozen=True)
class GpaProblem:
    """k configurations sharing ambient dimension and global index set."""

    configs: tuple
    options: AlsOptions = field(default_factory=AlsOptions)

    def __post_init__(self):
        configs = tuple(self.configs)
        if not configs:
            raise ValueError("need at least one configuration")
        d, n = configs[0].dim, configs[0].n_global
        for c in configs[1:]:
            if c.dim != d or c.n_global != n:
                raise DimensionMismatch("configurations disagree on (dim, n_global)")
        object.__setattr__(self, "configs", configs)

    @property
    def k(self):
        return len(self.configs)

    @property
    def dim(self):
        return self.configs[0].dim

    @property
    def n_global(self):
        return self.configs[0].n_global

    def masks(self):
        """Stacked presence masks, shape (k, n)."""
        return np.stack([c.mask for c in self.configs])


@dataclass(frozen=True)
class AlignmentResult:
    """Motions, masked mean, and convergence record of one ALS run.

    ``mean`` is defined exactly on the indices covered by at least one
    input; its column at index j averages only the transformed
    configurations whose domain contains j.  ``loss_trace`` holds the loss
    after initialization and after each sweep.
    """

    motions: tuple
    mean: Configuration
    loss: float
    loss_trace: np.ndarray
    iterations: int
    converged: bool
    symmetry_residuals: np.ndarray
    variant: str


def _masked_mean(problem, transformed):
    """Mean of per-config (d, n_i) blocks over the union domain.

    Returns (mean matrix (d, n), union mask, per-index counts).
    """
    d, n = problem.dim, problem.n_global
    counts = np.zeros(n)
    total = np.zeros((d, n))
    for cfg, block in zip(problem.configs, transformed):
        idx = cfg.present_indices()
        total[:, idx] += block
        counts[idx] += 1.0
    active = counts > 0
    if not active.any():
        raise DroppedAllIndices("no index is present in any configuration")
    mean = np.zeros((d, n))
    mean[:, active] = total[:, active] / counts[active]
    return mean, active, counts


def gpa_loss(problem, motions):
    """Loss E for explicit motions, with the mean recomputed internally."""
    if len(motions) != problem.k:
        raise DimensionMismatch("need one motion per configuration")
    transformed = []
    for cfg, g in zip(problem.configs, motions):
        if g.dim != problem.dim:
            raise DimensionMismatch("motion dimension mismatch")
        transformed.append(g.apply(cfg.present_matrix()))
    mean, _, _ = _masked_mean(problem, transformed)
    total = 0.0
    for cfg, block in zip(problem.configs, transformed):
        total += float(np.sum((block - mean[:, cfg.present_indices()]) ** 2))
    return total / problem.k


def als_align(problem):
    """Run the selected ALS variant to termination.

    Terminates when the loss changes by less than ``tol`` after at least
    ``min_iter`` sweeps, or at ``max_iter`` sweeps.  Raises NonFinite if
    the loss leaves the reals (degenerate input data).
    """
    variant = problem.options.variant
    if variant in ("basic", "refined"):
        return _als_full(problem)
    return _als_missing(problem)


def _full_domain_stack(problem):
    masks = problem.masks()
    if not masks.all():
        raise ValueError(
            f"variant {problem.options.variant!r} requires full-domain configurations"
        )
    return np.stack([c.coords for c in problem.configs])


def _check_finite_loss(value):
    if not np.isfinite(value):
        raise NonFinite("ALS loss became non-finite")


def _als_full(problem):
    """Basic and refined sweeps in the centered full-domain formulation."""
    opts = problem.options
    k, d = problem.k, problem.dim
    raw = _full_domain_stack(problem)
    centroids = raw.mean(axis=2)
    x = raw - centroids[:, :, None]
    sq_const = float(np.sum(x**2)) / k

    rotations = np.tile(np.eye(d), (k, 1, 1))
    y = x.copy()
    mean = y.mean(axis=0)

    def current_loss():
        # E = (1/k) sum ||X_i||^2 - ||Z||^2, valid because Z is the mean.
        return sq_const - float(np.sum(mean**2))

    trace = [current_loss()]
    _check_finite_loss(trace[-1])
    iterations = 0
    converged = False
    for sweep in range(opts.max_iter):
        if opts.variant == "basic":
            cross = np.einsum("dn,kcn->kdc", mean, x)
            for i in range(k):
                u, _, vt = deterministic_svd(cross[i])
                rotations[i] = u @ vt
            y = rotations @ x
            mean = y.mean(axis=0)
        else:
            for i in range(k):
                u, _, vt = deterministic_svd((mean - y[i] / k) @ x[i].T)
                rotations[i] = u @ vt
                y_new = rotations[i] @ x[i]
                mean = mean + (y_new - y[i]) / k
                y[i] = y_new
            mean = y.mean(axis=0)
        iterations = sweep + 1
        trace.append(current_loss())
        _check_finite_loss(trace[-1])
        if iterations >= opts.min_iter and abs(trace[-2] - trace[-1]) < opts.tol:
            converged = True
            break

    motions = tuple(
        RigidMotion(rotations[i], -rotations[i] @ centroids[i]) for i in range(k)
    )
    mean_cfg = Configuration(mean, np.ones(problem.n_global, dtype=bool))
    residuals = np.array(
        [_symmetry_residual_matrices(mean, y[i]) for i in range(k)]
    )
    return AlignmentResult(
        motions=motions,
        mean=mean_cfg,
        loss=trace[-1],
        loss_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        symmetry_residuals=residuals,
        variant=opts.variant,
    )


def _als_missing(problem):
    """Refined-style sweep with partial domains and translations."""
    opts = problem.options
    k, d, n = problem.k, problem.dim, problem.n_global

    idx = [c.present_indices() for c in problem.configs]
    counts = np.zeros(n)
    for ix in idx:
        counts[ix] += 1.0
    active = counts > 0
    if not active.any():
        raise DroppedAllIndices("no index is present in any configuration")
    inv_counts = np.zeros(n)
    inv_counts[active] = 1.0 / counts[active]

    # Pre-center each configuration (the translations are re-estimated every
    # sweep, so this only changes the starting point); with full masks the
    # trace then coincides with the refined variant's exactly.
    offsets = [centroid(c) for c in problem.configs]
    xc = [c.present_matrix() - a[:, None] for c, a in zip(problem.configs, offsets)]

    rotations = [np.eye(d) for _ in range(k)]
    shifts = [np.zeros(d) for _ in range(k)]
    blocks = [block.copy() for block in xc]

    total = np.zeros((d, n))
    for ix, block in zip(idx, blocks):
        total[:, ix] += block
    mean = total * inv_counts

    def current_loss():
        acc = 0.0
        for ix, block in zip(idx, blocks):
            acc += float(np.sum((block - mean[:, ix]) ** 2))
        return acc / k

    trace = [current_loss()]
    _check_finite_loss(trace[-1])
    iterations = 0
    converged = False
    for sweep in range(opts.max_iter):
        for i in range(k):
            ix = idx[i]
            shifts[i] = mean[:, ix].mean(axis=1)
            gap = mean[:, ix] - shifts[i][:, None]
            w = inv_counts[ix]
            rotated = rotations[i] @ xc[i]
            if opts.literal_missing_update:
                cross = (gap - xc[i] * w) @ rotated.T
            else:
                cross = (gap - rotated * w) @ xc[i].T
            u, _, vt = deterministic_svd(cross)
            rotations[i] = u @ vt
            new_block = rotations[i] @ xc[i] + shifts[i][:, None]
            total[:, ix] += new_block - blocks[i]
            blocks[i] = new_block
            mean[:, ix] = total[:, ix] * w
        # Exact recompute once per sweep to shed incremental round-off.
        total[:] = 0.0
        for ix, block in zip(idx, blocks):
            total[:, ix] += block
        mean = total * inv_counts
        iterations = sweep + 1
        trace.append(current_loss())
        _check_finite_loss(trace[-1])
        if iterations >= opts.min_iter and abs(trace[-2] - trace[-1]) < opts.tol:
            converged = True
            break

    motions = tuple(
        RigidMotion(rotations[i], shifts[i] - rotations[i] @ offsets[i])
        for i in range(k)
    )
    mean_cfg = Configuration(mean, active)
    residuals = np.array(
        [
            _symmetry_residual_matrices(mean[:, idx[i]], blocks[i])
            for i in range(k)
        ]
    )
    return AlignmentResult(
        motions=motions,
        mean=mean_cfg,
        loss=trace[-1],
        loss_trace=np.asarray(trace),
        iterations=iterations,
        converged=converged,
        symmetry_residuals=residuals,
        variant=opts.variant,
    )


def normalize_first_fixed(result):
    """Rotate the whole solution so the first motion's rotation is Id.

    Applies the inverse of the first rotation to every motion and to the
    mean; the loss and all pairwise relations are unchanged.
    """
    q1 = result.motions[0].rotation
    if np.allclose(q1, np.eye(q1.shape[0]), atol=1e-15):
        return result
    head = RigidMotion(q1.T, np.zeros(q1.shape[0]))
    motions = tuple(head.compose(g) for g in result.motions)
    mean = result.mean.transformed(head)
    return replace(result, motions=motions, mean=mean)


def _symmetry_residual_matrices(mean_block, transformed_block):
    m = mean_block @ transformed_block.T
    return float(np.linalg.norm(m - m.T) / max(1.0, np.linalg.norm(m)))


def symmetry_residual(problem, result, i):
    """Relative asymmetry of Z (transformed X_i)^T over the shared indices.

    Vanishes at critical points of the alignment loss; large values flag a
    run that terminated away from criticality.
    """
    cfg = problem.configs[i]
    block = result.motions[i].apply(cfg.present_matrix())
    return _symmetry_residual_matrices(
        result.mean.coords[:, cfg.present_indices()], block
    )


def _transformed_stack(problem, result):
    stack = _full_domain_stack(problem)
    out = np.empty_like(stack)
    for i, g in enumerate(result.motions):
        out[i] = g.apply(stack[i])
    return out


def _validate_directions(directions, k, d, require_first_zero=True):
    a = np.asarray(directions, dtype=float)
    if a.shape != (k, d, d):
        raise DimensionMismatch(f"need {k} direction matrices of shape ({d},{d})")
    if np.abs(a + a.transpose(0, 2, 1)).max() > 1e-12:
        raise NotAntisymmetric("direction matrices must be antisymmetric")
    if require_first_zero and np.abs(a[0]).max() != 0.0:
        raise ValueError("the first direction matrix must be zero")
    return a


def gradient_form(problem, result, directions):
    """First derivative of the loss along rotations Q_i(t) = exp(A_i t).

    Full-domain case.  Vanishes (for every antisymmetric choice) exactly at
    critical points of the constrained loss.
    """
    a = _validate_directions(directions, problem.k, problem.dim)
    y = _transformed_stack(problem, result)
    z = result.mean.coords
    velocity = np.einsum("kde,ken->dn", a, y)
    return float(-(2.0 / problem.k) * np.sum(z * velocity))


def hessian_form(problem, result, directions):
    """Second derivative of the loss along rotations Q_i(t) = exp(A_i t).

    Full-domain case.  ``directions`` is a length-k sequence of
    antisymmetric d x d matrices whose first entry is zero (the first
    configuration's frame is pinned).  Positive values in every direction
    certify an isolated local minimum.
    """
    a = _validate_directions(directions, problem.k, problem.dim)
    y = _transformed_stack(problem, result)
    z = result.mean.coords
    k = problem.k
    velocity = np.einsum("kde,ken->dn", a, y)
    curvature = np.einsum("kde,ken->dn", a @ a, y)
    return float(
        -(2.0 / k) * (np.sum(velocity**2) / k + np.sum(z * curvature))
    )


def _antisym_basis(d):
    basis = []
    for u in range(d):
        for v in range(u + 1, d):
            e = np.zeros((d, d))
            e[u, v] = 1.0
            e[v, u] = -1.0
            basis.append(e)
    return basis


def hessian_matrix(problem, result):
    """Assemble the Hessian in the standard antisymmetric basis.

    Coordinates run over configurations i = 2..k (the first is pinned) and
    basis elements E_uv - E_vu with u < v in lexicographic order, giving a
    symmetric matrix of size (k-1) * d*(d-1)/2.  Returns (H, eigenvalues).
    """
    k, d = problem.k, problem.dim
    basis = _antisym_basis(d)
    m = (k - 1) * len(basis)
    units = []
    for i in range(1, k):
        for e in basis:
            a = np.zeros((k, d, d))
            a[i] = e
            units.append(a)

    def q(a):
        return hessian_form(problem, result, a)

    q_single = [q(a) for a in units]
    h = np.empty((m, m))
    for p in range(m):
        h[p, p] = q_single[p]
        for r in range(p + 1, m):
            q_pair = q(units[p] + units[r])
            h[p, r] = h[r, p] = 0.5 * (q_pair - q_single[p] - q_single[r])
    return h, np.linalg.eigvalsh(h)


def essential_dimension(x, rel_tol):
    """Number of singular values of the centered matrix above rel_tol * max.

    Returns 0 for a configuration whose centered matrix vanishes.
    """
    m = x.present_matrix()
    m = m - m.mean(axis=1, keepdims=True)
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s >= rel_tol * s[0]))

import numpy as np
import pytest
from scipy.linalg import expm

from robust_coords.core_types import Configuration, RigidMotion
from robust_coords.errors import NotAntisymmetric
from robust_coords.gpa_als import (
    AlsOptions,
    GpaProblem,
    als_align,
    essential_dimension,
    gpa_loss,
    gradient_form,
    hessian_form,
    hessian_matrix,
    normalize_first_fixed,
    symmetry_residual,
)
from robust_coords.procrustes_pair import affine_procrustes, procrustes_distance

from conftest import random_config, random_motion


def full_problem(rng, k=4, d=2, n=20, variant="refined", **opts):
    cfgs = tuple(random_config(rng, d=d, n=n) for _ in range(k))
    return GpaProblem(cfgs, AlsOptions(variant=variant, **opts))


def masked_problem(rng, k=4, d=2, n=30, prob=0.7, **opts):
    cfgs = tuple(random_config(rng, d=d, n=n, mask_prob=prob) for _ in range(k))
    return GpaProblem(cfgs, AlsOptions(variant="missing_points", **opts))


def random_antisym_directions(rng, k, d, scale=1.0):
    a = np.zeros((k, d, d))
    for i in range(1, k):
        m = rng.normal(size=(d, d)) * scale
        a[i] = 0.5 * (m - m.T)
    return a


# ----------------------------------------------------------------- gpa_loss


def test_loss_zero_for_identical_configs(rng):
    base = random_config(rng, n=15)
    problem = GpaProblem((base, base, base))
    motions = [RigidMotion.identity(2)] * 3
    assert gpa_loss(problem, motions) <= 1e-30


def test_loss_zero_for_single_config(rng):
    cfg = random_config(rng, n=10)
    problem = GpaProblem((cfg,))
    assert gpa_loss(problem, [random_motion(rng, 2)]) <= 1e-25


def test_loss_antipodal_pair(rng):
    x = random_config(rng, n=12)
    centered = Configuration(x.coords - x.coords.mean(axis=1, keepdims=True))
    negated = Configuration(-centered.coords)
    problem = GpaProblem((centered, negated))
    motions = [RigidMotion.identity(2)] * 2
    # mean is zero, so the loss is the average squared norm of the inputs
    expected = float(np.sum(centered.coords**2))
    assert np.isclose(gpa_loss(problem, motions), expected, rtol=1e-12)


def test_loss_forms_agree(rng):
    # direct definition vs the norm-difference shortcut used in the sweeps
    for _ in range(10):
        problem = full_problem(rng, k=3, n=15)
        res = als_align(problem)
        direct = gpa_loss(problem, res.motions)
        assert abs(direct - res.loss) <= 1e-10 * max(1.0, direct)


# ---------------------------------------------------------------- als_align


def test_two_config_loss_matches_closed_form(rng):
    for _ in range(50):
        x = random_config(rng, n=15)
        y = random_config(rng, n=15)
        dist = affine_procrustes(x, y).distance
        res = als_align(GpaProblem((x, y), AlsOptions(variant="refined")))
        # with two inputs the aligned halves sit symmetrically around the
        # mean, so the optimal loss is (distance/2)^2 * 2 / 2
        assert abs(res.loss - dist * dist / 4.0) <= 1e-8


def test_exact_alignability(rng):
    base = random_config(rng, d=3, n=25)
    cfgs = tuple(base.transformed(random_motion(rng, 3)) for _ in range(3))
    res = als_align(GpaProblem(cfgs, AlsOptions(tol=1e-17, max_iter=5000)))
    scale = float(np.sum(base.coords**2))
    assert res.loss <= 1e-16 * scale
    assert procrustes_distance(res.mean, base) <= 1e-6


def test_basic_variant_stalls_at_antipodal_saddle(rng):
    x = random_config(rng, n=12)
    centered = Configuration(x.coords - x.coords.mean(axis=1, keepdims=True))
    negated = Configuration(-centered.coords)
    opts = AlsOptions(variant="basic", min_iter=0)
    res = als_align(GpaProblem((centered, negated), opts))
    assert res.iterations == 1
    for motion in res.motions:
        assert np.allclose(motion.rotation, np.eye(2))
    assert res.loss > 1.0  # nowhere near the achievable optimum


def test_loss_trace_nonincreasing_all_variants(rng):
    for variant in ("basic", "refined", "missing_points"):
        for _ in range(40):
            k = int(rng.integers(2, 6))
            if variant == "missing_points":
                problem = masked_problem(rng, k=k)
            else:
                problem = full_problem(rng, k=k, variant=variant)
            trace = als_align(problem).loss_trace
            assert (np.diff(trace) <= 1e-12).all()


def test_missing_variant_reduces_to_refined_on_full_masks(rng):
    for _ in range(20):
        k = int(rng.integers(2, 6))
        cfgs = tuple(random_config(rng, n=18) for _ in range(k))
        refined = als_align(GpaProblem(cfgs, AlsOptions(variant="refined")))
        missing = als_align(GpaProblem(cfgs, AlsOptions(variant="missing_points")))
        n = min(len(refined.loss_trace), len(missing.loss_trace))
        assert np.abs(refined.loss_trace[:n] - missing.loss_trace[:n]).max() <= 1e-10


def test_literal_update_mode_agrees_on_first_sweep(rng):
    # the compatibility mode applies the current rotation inside the second
    # SVD factor; starting from identity rotations the two readings coincide
    # for one full sweep, diverging only afterwards (and losing the descent
    # guarantee, which is why it is not the default)
    for _ in range(10):
        cfgs = tuple(random_config(rng, n=25, mask_prob=0.7) for _ in range(4))
        lit = als_align(
            GpaProblem(cfgs, AlsOptions(literal_missing_update=True, max_iter=1, min_iter=0))
        )
        cor = als_align(GpaProblem(cfgs, AlsOptions(max_iter=1, min_iter=0)))
        assert np.allclose(lit.loss_trace, cor.loss_trace, atol=1e-12)
        full = als_align(GpaProblem(cfgs, AlsOptions(literal_missing_update=True)))
        assert np.isfinite(full.loss)


def test_mean_is_masked_average_of_members(rng):
    problem = masked_problem(rng, k=5, n=25)
    res = als_align(problem)
    counts = np.zeros(25)
    total = np.zeros((2, 25))
    for cfg, motion in zip(problem.configs, res.motions):
        idx = cfg.present_indices()
        total[:, idx] += motion.apply(cfg.present_matrix())
        counts[idx] += 1
    active = counts > 0
    expected = total[:, active] / counts[active]
    assert np.allclose(res.mean.coords[:, active], expected, atol=1e-9)
    assert np.array_equal(res.mean.mask, active)


def test_mean_perturbation_increases_loss(rng):
    # the masked mean is the unique optimal Z for fixed motions
    problem = full_problem(rng, k=4, n=15)
    res = als_align(problem)
    base = gpa_loss(problem, res.motions)
    blocks = [g.apply(c.present_matrix()) for c, g in zip(problem.configs, res.motions)]
    mean = np.mean(blocks, axis=0)
    k = problem.k
    for _ in range(5):
        bump = np.zeros_like(mean)
        j = rng.integers(0, mean.shape[1])
        bump[:, j] = rng.normal(size=2) * 0.1
        perturbed = mean + bump
        loss = sum(float(np.sum((b - perturbed) ** 2)) for b in blocks) / k
        assert loss > base + 1e-12


def test_first_derivative_vanishes_at_termination(rng):
    for _ in range(10):
        problem = full_problem(rng, k=4, n=20, tol=1e-13, max_iter=3000)
        res = als_align(problem)
        scale = max(1.0, abs(res.loss))
        a = random_antisym_directions(rng, problem.k, problem.dim)
        assert abs(gradient_form(problem, res, a)) <= 1e-6 * scale


# --------------------------------------------------------- normalizations


def test_normalize_first_fixed(rng):
    problem = full_problem(rng, k=4)
    res = als_align(problem)
    fixed = normalize_first_fixed(res)
    assert np.allclose(fixed.motions[0].rotation, np.eye(2), atol=1e-12)
    assert abs(fixed.loss - res.loss) <= 1e-12
    again = normalize_first_fixed(fixed)
    assert np.allclose(again.mean.coords, fixed.mean.coords)
    # pairwise relations preserved: transformed configs only rotate globally
    before = res.motions[1].apply(problem.configs[1].coords)
    after = fixed.motions[1].apply(problem.configs[1].coords)
    q1 = res.motions[0].rotation
    assert np.allclose(q1.T @ before, after, atol=1e-9)


# ------------------------------------------------------------- diagnostics


def test_symmetry_residual_small_at_termination(rng):
    for _ in range(10):
        problem = full_problem(rng, k=4, n=20, tol=1e-12, max_iter=3000)
        res = als_align(problem)
        assert res.symmetry_residuals.max() <= 1e-6
        assert abs(symmetry_residual(problem, res, 2) - res.symmetry_residuals[2]) <= 1e-12


def test_symmetry_residual_zero_for_identical_aligned(rng):
    base = random_config(rng, n=15)
    problem = GpaProblem((base, base, base), AlsOptions(variant="refined"))
    res = als_align(problem)
    assert res.symmetry_residuals.max() <= 1e-12


def test_symmetry_residual_discriminative_before_alignment(rng):
    # the residual of a random un-aligned input is typically large
    hits = 0
    for _ in range(100):
        problem = full_problem(rng, k=3, n=20)
        motions = tuple(RigidMotion.identity(2) for _ in range(3))
        blocks = [c.coords - c.coords.mean(1, keepdims=True) for c in problem.configs]
        mean = np.mean(blocks, axis=0)
        m = mean @ blocks[1].T
        resid = np.linalg.norm(m - m.T) / max(1.0, np.linalg.norm(m))
        if resid > 1e-2:
            hits += 1
    assert hits >= 90


def test_hessian_form_zero_direction(rng):
    problem = full_problem(rng, k=3)
    res = als_align(problem)
    a = np.zeros((3, 2, 2))
    assert hessian_form(problem, res, a) == 0.0


def test_hessian_form_rejects_bad_directions(rng):
    problem = full_problem(rng, k=3)
    res = als_align(problem)
    bad = np.zeros((3, 2, 2))
    bad[1] = np.array([[0.0, 1.0], [1.0, 0.0]])  # symmetric, not antisymmetric
    with pytest.raises(NotAntisymmetric):
        hessian_form(problem, res, bad)
    nonzero_first = np.zeros((3, 2, 2))
    nonzero_first[0] = np.array([[0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(ValueError):
        hessian_form(problem, res, nonzero_first)


def loss_along_path(problem, res, directions, t):
    motions = []
    for i, motion in enumerate(res.motions):
        r = expm(directions[i] * t)
        motions.append(RigidMotion(r @ motion.rotation, r @ motion.translation))
    return gpa_loss(problem, motions)


def test_hessian_matches_finite_differences(rng):
    h = 1e-4
    for _ in range(10):
        k = int(rng.integers(3, 6))
        d = int(rng.choice([2, 3]))
        problem = full_problem(rng, k=k, d=d, n=20, tol=1e-13, max_iter=3000)
        res = als_align(problem)
        a = random_antisym_directions(rng, k, d)
        q = hessian_form(problem, res, a)
        l0 = loss_along_path(problem, res, a, 0.0)
        lp = loss_along_path(problem, res, a, h)
        lm = loss_along_path(problem, res, a, -h)
        fd = (lp - 2.0 * l0 + lm) / (h * h)
        assert abs(q - fd) <= 1e-4 * max(1.0, abs(fd))


def test_hessian_matrix_positive_definite_at_minima(rng):
    for _ in range(5):
        problem = full_problem(rng, k=4, d=2, n=25, tol=1e-13, max_iter=3000)
        res = als_align(problem)
        h, eig = hessian_matrix(problem, res)
        assert h.shape == (3, 3)
        assert np.allclose(h, h.T, atol=1e-9)
        # empirical observation on generic data, not a guarantee
        assert eig.min() > 0


# ---------------------------------------------------- essential dimension


def test_essential_dimension_cases(rng):
    line = Configuration(np.vstack([np.arange(10.0), 2.0 * np.arange(10.0)]))
    assert essential_dimension(line, 0.05) == 1
    square = Configuration(rng.uniform(size=(2, 50)))
    assert essential_dimension(square, 0.05) == 2
    zero = Configuration(np.zeros((2, 5)))
    assert essential_dimension(zero, 0.05) == 0
    point = Configuration(np.ones((3, 4)))
    assert essential_dimension(point, 0.05) == 0

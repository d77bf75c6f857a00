"""The ensemble pipeline: subsample, embed, compare, cluster, select, average.

Stages, in order:

1. draw index subsamples of the input and embed each one under every
   parameter setting in the mesh (failures are logged and skipped);
2. fill the pairwise dissimilarity matrix with overlap-normalized
   Procrustes distances (residual / sqrt(#shared indices), so pairs with
   different overlap sizes are comparable);
3. cut the single-linkage dendrogram at a fraction of the median
   dissimilarity;
4. among dense clusters, sample representatives and score them by
   essential dimensionality and the largest finite bar of degree-1
   persistent homology; the good cluster minimizes that bar;
5. align the good cluster's members by missing-points ALS, pin the first
   rotation, and average per index;
6. report the averaged embedding plus the indices it never covered.

Every random choice derives from the pipeline seed, so a fixed
(input, config) pair reproduces bit-identical results.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist, squareform

from .core_types import Configuration
from .dimred import EmbeddingParams, classical_mds, embed
from .errors import EmptyOverlap, NoGoodCluster, RobustCoordsError, SizeTooLarge
from .gpa_als import AlsOptions, GpaProblem, als_align, essential_dimension, normalize_first_fixed
from .procrustes_pair import affine_procrustes
from .tda import max_bar_length, rips_persistence

__all__ = [
    "PipelineConfig",
    "ClusterReport",
    "PipelineReport",
    "generate_subsamples",
    "build_ensemble",
    "dissimilarity_matrix",
    "cluster_ensemble",
    "select_good_cluster",
    "average_cluster",
    "run_pipeline",
]

logger = logging.getLogger(__name__)

VERDICT_GOOD = "good"
VERDICT_SPARSE = "rejected_sparse"
VERDICT_DIM = "rejected_dim"
VERDICT_PH = "rejected_ph"

# Representative scoring runs the Rips filtration out to the full point-set
# diameter so every 1-cycle dies inside the filtration (a loop truncated at
# the cap would otherwise be dropped as an infinite bar and score zero);
# 100 maxmin landmarks keep that affordable while preserving loop scale.
_PH_LANDMARKS = 100
_PH_RADIUS_MARGIN = 1.01


@dataclass(frozen=True)
class PipelineConfig:
    """All knobs of one pipeline run.

    Thresholds are fractions of data-derived scales: the dendrogram is cut
    at ``cluster_link_fraction`` times the median dissimilarity, a cluster
    is dense when its median internal dissimilarity is below
    ``dense_median_fraction`` times the overall median, and the winning
    cluster's largest degree-1 bar must stay below ``ph_bar_fraction``
    times the representatives' diameter.
    """

    n_subsamples: int
    subsample_size: int
    dimred: tuple
    seed: int = 0
    cluster_link_fraction: float = 0.5
    min_cluster_size: int = 5
    dense_median_fraction: float = 0.25
    ph_representatives: int = 5
    ph_bar_fraction: float = 0.1
    essdim_rel_tol: float = 0.05
    als: AlsOptions = field(default_factory=AlsOptions)

    def __post_init__(self):
        dimred = tuple(self.dimred)
        if not dimred:
            raise ValueError("need at least one embedding parameter setting")
        if not all(isinstance(p, EmbeddingParams) for p in dimred):
            raise ValueError("dimred entries must be EmbeddingParams")
        dims = {p.target_dim for p in dimred}
        if len(dims) != 1:
            raise ValueError("all parameter settings must share target_dim")
        object.__setattr__(self, "dimred", dimred)
        if self.n_subsamples < 1:
            raise ValueError("n_subsamples must be >= 1")
        if self.subsample_size < self.target_dim + 2:
            raise ValueError("subsample_size must be >= target_dim + 2")
        for name in ("cluster_link_fraction", "dense_median_fraction", "ph_bar_fraction"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not 0 < self.essdim_rel_tol <= 1:
            raise ValueError("essdim_rel_tol must lie in (0, 1]")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")
        if self.ph_representatives < 1:
            raise ValueError("ph_representatives must be >= 1")

    @property
    def target_dim(self):
        return self.dimred[0].target_dim


@dataclass
class ClusterReport:
    """One cluster of ensemble members plus its selection diagnostics."""

    members: np.ndarray
    median_intra_distance: float
    dense: bool = False
    representatives: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    ph1_max_bars: tuple = ()
    essential_dims: tuple = ()
    rep_diameter: float = float("nan")
    ph_bar_threshold: float = float("nan")
    verdict: str | None = None

    @property
    def size(self):
        return len(self.members)


@dataclass
class PipelineReport:
    """Everything one run produced; ``embedding`` is None on failure."""

    embedding: Configuration | None
    outliers: np.ndarray
    clusters: list
    good_cluster: int | None
    alignment: object
    mds_view: Configuration | None
    dissimilarity: np.ndarray
    members: list
    link_cutoff: float
    dense_cutoff: float
    median_dissimilarity: float
    config: PipelineConfig


def generate_subsamples(n, size, count, seed):
    """`count` sorted index sets of cardinality `size`, without replacement."""
    if not 1 <= size <= n:
        raise SizeTooLarge(f"subsample size {size} invalid for {n} points")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return [np.sort(rng.choice(n, size=size, replace=False)) for _ in range(count)]


def build_ensemble(x, config, loader=None):
    """Embed every (subsample, parameter) pair.

    Items whose embedding fails (fragmented graph, too few points, ...)
    are logged and skipped rather than aborting the run.
    """
    present = x.present_indices()
    subsamples = generate_subsamples(
        present.size, config.subsample_size, config.n_subsamples, config.seed
    )
    outputs = []
    for a, subset in enumerate(subsamples):
        keep = np.zeros(x.n_global, dtype=bool)
        keep[present[subset]] = True
        sub_cfg = x.restrict(keep)
        for b, params in enumerate(config.dimred):
            try:
                out = embed(sub_cfg, params, loader=loader)
            except RobustCoordsError as exc:
                logger.warning(
                    "embedding failed for subsample %d, params %d: %s", a, b, exc
                )
                continue
            out.subsample_index = a
            out.params_index = b
            outputs.append(out)
    return outputs


def dissimilarity_matrix(ensemble):
    """Pairwise overlap-normalized Procrustes distances.

    Entry (i, j) is the alignment residual divided by sqrt(overlap size).
    Pairs with no shared index get a sentinel of twice the largest finite
    entry (and a log line); the diagonal is zero.
    """
    k = len(ensemble)
    if k < 2:
        raise ValueError("need at least two ensemble members")
    d = np.zeros((k, k))
    missing = []
    for i in range(k):
        for j in range(i + 1, k):
            try:
                pa = affine_procrustes(ensemble[i].config, ensemble[j].config)
                d[i, j] = d[j, i] = pa.distance / np.sqrt(pa.overlap_size)
            except EmptyOverlap:
                missing.append((i, j))
    if missing:
        sentinel = 2.0 * d.max()
        logger.warning(
            "%d member pairs share no index; using sentinel %.6g",
            len(missing),
            sentinel,
        )
        for i, j in missing:
            d[i, j] = d[j, i] = sentinel
    return d


def _median_offdiag(d):
    iu = np.triu_indices(d.shape[0], 1)
    return float(np.median(d[iu]))


def _median_intra(d, members):
    if len(members) < 2:
        return 0.0
    block = d[np.ix_(members, members)]
    iu = np.triu_indices(len(members), 1)
    return float(np.median(block[iu]))


def cluster_ensemble(d, config):
    """Single-linkage clusters cut at link_fraction * median dissimilarity.

    Clusters smaller than ``min_cluster_size`` are verdicted
    ``rejected_sparse`` immediately; all other verdicts stay unset for
    ``select_good_cluster``.  Clusters are ordered by decreasing size, then
    lowest member index.
    """
    cutoff = config.cluster_link_fraction * _median_offdiag(d)
    merge_tree = linkage(squareform(d, checks=False), method="single")
    labels = fcluster(merge_tree, t=cutoff, criterion="distance")
    reports = []
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        report = ClusterReport(
            members=members,
            median_intra_distance=_median_intra(d, members),
        )
        if report.size < config.min_cluster_size:
            report.verdict = VERDICT_SPARSE
        reports.append(report)
    reports.sort(key=lambda r: (-r.size, int(r.members[0])))
    return reports


def _cluster_diameter(config_points):
    pts = config_points.present_matrix().T
    if pts.shape[0] < 2:
        return 0.0
    return float(pdist(pts).max())


def select_good_cluster(clusters, ensemble, config, dissimilarity):
    """Pick the dense, full-dimensional cluster with the smallest PH1 bar.

    Density compares each cluster's median internal dissimilarity against
    ``dense_median_fraction`` times the overall median.  For each dense
    cluster a seeded sample of representatives is checked: every one must
    have essential dimensionality >= the embedding dimension, and the
    cluster score is the largest degree-1 bar among representatives.  The
    minimizer wins if its score is at most ``ph_bar_fraction`` times the
    representatives' diameter; ties break to the larger, then tighter,
    cluster.  Raises NoGoodCluster (verdicts filled in) otherwise.
    """
    med_all = _median_offdiag(dissimilarity)
    dense_cutoff = config.dense_median_fraction * med_all
    d_target = config.target_dim

    survivors = []
    for pos, cluster in enumerate(clusters):
        if cluster.verdict is not None:
            continue
        cluster.dense = cluster.median_intra_distance <= dense_cutoff
        if not cluster.dense:
            cluster.verdict = VERDICT_SPARSE
            continue
        rng = np.random.default_rng([config.seed, 101, pos])
        n_rep = min(config.ph_representatives, cluster.size)
        reps = np.sort(rng.choice(cluster.members, size=n_rep, replace=False))
        cluster.representatives = reps

        ess = tuple(
            essential_dimension(ensemble[r].config, config.essdim_rel_tol)
            for r in reps
        )
        cluster.essential_dims = ess
        bars = []
        diam = 0.0
        for r in reps:
            cfg = ensemble[r].config
            rep_diam = _cluster_diameter(cfg)
            diam = max(diam, rep_diam)
            diagram = rips_persistence(
                cfg,
                max_dim=1,
                p=2,
                max_radius=_PH_RADIUS_MARGIN * max(rep_diam, 1e-300),
                landmark_budget=_PH_LANDMARKS,
            )
            bars.append(max_bar_length(diagram, 1))
        cluster.ph1_max_bars = tuple(bars)
        cluster.rep_diameter = diam
        cluster.ph_bar_threshold = config.ph_bar_fraction * diam
        if any(e < d_target for e in ess):
            cluster.verdict = VERDICT_DIM
            continue
        survivors.append(pos)

    if not survivors:
        raise NoGoodCluster("no dense cluster with full-dimensional members")

    def score(pos):
        c = clusters[pos]
        return (max(c.ph1_max_bars), -c.size, c.median_intra_distance, pos)

    best = min(survivors, key=score)
    for pos in survivors:
        clusters[pos].verdict = VERDICT_PH
    winner = clusters[best]
    if max(winner.ph1_max_bars) > winner.ph_bar_threshold:
        raise NoGoodCluster(
            "smallest degree-1 bar "
            f"{max(winner.ph1_max_bars):.6g} exceeds threshold "
            f"{winner.ph_bar_threshold:.6g}"
        )
    winner.verdict = VERDICT_GOOD
    return winner


def average_cluster(ensemble, cluster, config):
    """Align the cluster's members and average them per index.

    Returns (averaged configuration, indices covered by no member, the
    alignment result).  The average at index j uses exactly the members
    whose domain contains j.
    """
    configs = tuple(ensemble[i].config for i in cluster.members)
    problem = GpaProblem(configs, config.als)
    result = normalize_first_fixed(als_align(problem))
    mean = result.mean
    outliers = np.flatnonzero(~mean.mask)
    return mean, outliers, result


def run_pipeline(x, config, loader=None):
    """Execute the whole pipeline and assemble the report.

    Raises NoGoodCluster when selection fails; the exception carries the
    partial report (clusters, verdicts, dissimilarity view) for writing
    diagnostics.
    """
    ensemble = build_ensemble(x, config, loader=loader)
    members = [
        (out.subsample_index, out.params_index, out.config.n_present, len(out.dropped))
        for out in ensemble
    ]
    if len(ensemble) < 2:
        raise NoGoodCluster(
            f"only {len(ensemble)} embeddings succeeded; nothing to compare",
            report=None,
        )
    d = dissimilarity_matrix(ensemble)
    mds_view = classical_mds(d, 2)
    clusters = cluster_ensemble(d, config)
    med = _median_offdiag(d)

    def report_with(embedding, outliers, good, alignment):
        return PipelineReport(
            embedding=embedding,
            outliers=outliers,
            clusters=clusters,
            good_cluster=good,
            alignment=alignment,
            mds_view=mds_view,
            dissimilarity=d,
            members=members,
            link_cutoff=config.cluster_link_fraction * med,
            dense_cutoff=config.dense_median_fraction * med,
            median_dissimilarity=med,
            config=config,
        )

    try:
        winner = select_good_cluster(clusters, ensemble, config, d)
    except NoGoodCluster as exc:
        exc.report = report_with(None, np.empty(0, dtype=int), None, None)
        raise
    embedding, outliers, alignment = average_cluster(ensemble, winner, config)
    winner_pos = next(i for i, c in enumerate(clusters) if c is winner)
    return report_with(embedding, outliers, winner_pos, alignment)

"""Hierarchical clustering by average dot product, with simulation and evaluation tools."""

from .affinity import (
    AffinityMatrix,
    affinity_cosine,
    affinity_data,
    affinity_pca,
    cosine_distance,
    max_affinity_error,
    pairwise_distance,
    subtract_from_max,
)
from .agglomerate import MergeTrace, cluster_dot, cluster_generic, flat_cut
from .dendrogram import (
    Dendrogram,
    DendrogramError,
    augment,
    isomorphic,
    merge_distortion,
    merge_height,
    mrca,
    validate,
)
from .evaluation import (
    LabelHierarchy,
    TiedRanking,
    convergence_experiment,
    kendall_tau_b,
    mean_tau_b,
    rank_from_dendrogram,
    rank_from_labels,
)
from .genmodel import TreeSpec, builtin_tree_e1, sample_additive, sample_multiplicative
from .spectral import pc_scores, select_rank_wasserstein, wasserstein_distance

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

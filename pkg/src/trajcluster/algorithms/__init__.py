"""Clustering backends; importing this package registers them."""

from trajcluster.algorithms.distance import distance_matrix, dtw_distance, euclidean_distance
from trajcluster.algorithms.kmeans import KMeansResult, kmeans, lloyd
from trajcluster.algorithms.methods import (
    kmeans_clusterer,
    mean_representation,
    ols_representation,
    standardize_columns,
    threshold_clusterer,
    trajectory_coefficients,
)
from trajcluster.algorithms.mixture import RegressionMixture, trajectory_logdensity
from trajcluster.algorithms.pam import pam, total_cost
from trajcluster.algorithms.rules import cut, evaluate_rule

__all__ = [
    "KMeansResult",
    "RegressionMixture",
    "cut",
    "distance_matrix",
    "dtw_distance",
    "euclidean_distance",
    "evaluate_rule",
    "kmeans",
    "kmeans_clusterer",
    "lloyd",
    "mean_representation",
    "ols_representation",
    "pam",
    "standardize_columns",
    "threshold_clusterer",
    "total_cost",
    "trajectory_coefficients",
    "trajectory_logdensity",
]

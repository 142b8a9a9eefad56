"""Clustering backends registered with the estimation pipeline.

Registered names: ``kml``, ``lmkm``, ``gbtm``, ``gmm``, ``kmedoids``,
``stratify``, ``random`` and ``feature``.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from trajcluster.algorithms.distance import MAX_MATRIX_SIZE, distance_matrix
from trajcluster.algorithms.kmeans import kmeans
from trajcluster.algorithms.mixture import RegressionMixture
from trajcluster.algorithms.pam import pam
from trajcluster.algorithms.rules import evaluate_rule
from trajcluster.dataset import Dataset, to_aligned_matrix
from trajcluster.errors import ContractError, DegenerateTrajectoryError, SpecValidationError
from trajcluster.method import FitResult, Method, MethodSpec, register_method
from trajcluster.model import CenterPredictor, PolynomialPredictor, partition_centers, polynomial_design


def _hard(labels: np.ndarray, k: int) -> np.ndarray:
    pp = np.zeros((labels.size, k))
    pp[np.arange(labels.size), labels] = 1.0
    return pp


def _duplicate_rows(C: np.ndarray) -> bool:
    return np.unique(np.round(C, 12), axis=0).shape[0] < C.shape[0]


def trajectory_coefficients(ds: Dataset, degree: int = 1) -> np.ndarray:
    """Per-trajectory OLS coefficients of the response on ``1, t, ..., t**degree``."""
    B = degree + 1
    out = np.empty((ds.n_trajectories, B))
    for i, (tid, t, y) in enumerate(ds.iter_trajectories()):
        if np.unique(t).size < B:
            raise DegenerateTrajectoryError(
                f"trajectory {tid!r} has {np.unique(t).size} distinct times; need {B}", trajectory=tid
            )
        X = polynomial_design(t, degree)
        coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < B:
            raise DegenerateTrajectoryError(f"trajectory {tid!r} has a rank-deficient design", trajectory=tid)
        out[i] = coef
    return out


def standardize_columns(Z: np.ndarray) -> np.ndarray:
    """Column z-scores (sample SD); constant columns are only centered."""
    sd = Z.std(axis=0, ddof=1) if Z.shape[0] > 1 else np.zeros(Z.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return (Z - Z.mean(axis=0)) / sd


# ---------------------------------------------------------------------------
@register_method
class KmlMethod(Method):
    """k-means on the time-aligned observation matrix."""

    name = "kml"
    label = "longitudinal k-means (KmL)"
    defaults = {"nstart": 20, "maxIter": 200, "imputation": "copy_mean"}

    def prepare_data(self, spec, ds):
        return to_aligned_matrix(ds, impute=spec.get("imputation", "copy_mean"))

    def fit(self, spec, ds, data, state, rng):
        k = spec.n_clusters
        res = kmeans(data.values, k, nstart=spec["nstart"], max_iter=spec["maxIter"], rng=rng)
        return FitResult(
            postprob=_hard(res.labels, k),
            predictor=CenterPredictor(data.times, res.centers),
            converged=res.converged,
            diagnostics={"within_ss": res.within_ss},
        )


@register_method
class LmkmMethod(Method):
    """k-means on per-trajectory linear-model coefficients."""

    name = "lmkm"
    label = "feature-based clustering using linear regression and k-means"
    defaults = {"degree": 1, "standardize": True, "nstart": 20, "maxIter": 100}

    def prepare_data(self, spec, ds):
        return trajectory_coefficients(ds, int(spec.get("degree", 1)))

    def fit(self, spec, ds, data, state, rng):
        k = spec.n_clusters
        Z = standardize_columns(data) if spec["standardize"] else data
        res = kmeans(Z, k, nstart=spec["nstart"], max_iter=spec["maxIter"], rng=rng)
        coef = np.vstack([data[res.labels == j].mean(axis=0) for j in range(k)])
        return FitResult(
            postprob=_hard(res.labels, k),
            predictor=PolynomialPredictor(coef),
            converged=res.converged,
            diagnostics={"within_ss": res.within_ss, "duplicate_clusters": _duplicate_rows(coef)},
        )


class _MixtureMethod(Method):
    random_intercept = False

    def prepare_data(self, spec, ds):
        return polynomial_design(ds.time, int(spec.get("degree", 1)))

    def validate(self, spec, ds, data):
        super().validate(spec, ds, data)
        if np.linalg.matrix_rank(data) < data.shape[1]:
            raise SpecValidationError("pooled design matrix is rank deficient; lower the degree")

    def _mixture(self, spec, ds, X) -> RegressionMixture:
        raise NotImplementedError

    def fit(self, spec, ds, data, state, rng):
        k = spec.n_clusters
        mix = self._mixture(spec, ds, data)
        res = mix.fit(rng, nstart=spec["nstart"])
        if res is None:
            coef = np.linalg.lstsq(data, ds.value, rcond=None)[0]
            return FitResult(
                postprob=np.full((ds.n_trajectories, k), 1.0 / k),
                predictor=PolynomialPredictor(np.tile(coef, (k, 1))),
                converged=False,
                n_params=mix.n_params,
                diagnostics={"n_failed_starts": int(spec["nstart"])},
            )
        return FitResult(
            postprob=res.postprob,
            predictor=PolynomialPredictor(res.beta),
            converged=res.converged,
            log_likelihood=res.log_likelihood,
            n_params=res.n_params,
            diagnostics={
                "loglik_trace": list(res.trace),
                "sigma2": res.sigma2.tolist(),
                "sigma2_u": res.sigma2_u,
                "n_iter": res.n_iter,
                "n_failed_starts": res.n_failed_starts,
            },
        )


@register_method
class GbtmMethod(_MixtureMethod):
    """Mixture of polynomial regressions fitted by EM."""

    name = "gbtm"
    label = "group-based trajectory model (EM)"
    defaults = {
        "degree": 1,
        "nstart": 10,
        "maxIter": 500,
        "tol": 1e-8,
        "cluster_variances": False,
        "idiag": True,
    }

    def _mixture(self, spec, ds, X):
        return RegressionMixture(
            X,
            ds.value,
            ds.offsets,
            spec.n_clusters,
            cluster_variances=bool(spec["cluster_variances"]),
            max_iter=spec["maxIter"],
            tol=spec["tol"],
        )


@register_method
class GmmMethod(_MixtureMethod):
    """Growth mixture model with a random intercept, fitted by marginal EM."""

    name = "gmm"
    label = "growth mixture model with random intercept (EM)"
    defaults = {
        "degree": 1,
        "nstart": 10,
        "maxIter": 500,
        "tol": 1e-8,
        "idiag": True,
        "sigma2_u": None,
    }

    def _mixture(self, spec, ds, X):
        return RegressionMixture(
            X,
            ds.value,
            ds.offsets,
            spec.n_clusters,
            random_intercept=True,
            max_iter=spec["maxIter"],
            tol=spec["tol"],
            fixed_sigma2_u=spec.get("sigma2_u"),
        )


@register_method
class KmedoidsMethod(Method):
    """PAM on a Euclidean or DTW distance matrix."""

    name = "kmedoids"
    label = "k-medoids (PAM)"
    defaults = {"distance": "euclidean", "window": None, "max_n": MAX_MATRIX_SIZE}

    def prepare_data(self, spec, ds):
        if spec.get("distance", "euclidean") == "euclidean":
            return to_aligned_matrix(ds, impute="copy_mean")
        m = to_aligned_matrix(ds, impute=None)
        if not np.isnan(m.values).any():
            return m
        return [y for _, _, y in ds.iter_trajectories()]

    def validate(self, spec, ds, data):
        super().validate(spec, ds, data)
        if spec["distance"] not in ("euclidean", "dtw"):
            raise SpecValidationError(f"unknown distance {spec['distance']!r}")

    def fit(self, spec, ds, data, state, rng):
        k = spec.n_clusters
        rows = data.values if hasattr(data, "values") else data
        D = distance_matrix(rows, spec["distance"], window=spec["window"], max_size=spec["max_n"])
        res = pam(D, k)
        if hasattr(data, "values"):
            predictor = CenterPredictor(data.times, data.values[res.medoids])
        else:
            grid = ds.grid()
            centers = np.full((k, grid.size), np.nan)
            for j, med in enumerate(res.medoids):
                t, y = ds.trajectory(int(med))
                centers[j, np.searchsorted(grid, t)] = y
            predictor = CenterPredictor(grid, centers)
        return FitResult(
            postprob=_hard(res.labels, k),
            predictor=predictor,
            diagnostics={
                "medoids": [ds.ids[m] for m in res.medoids],
                "cost": res.cost,
            },
        )


@register_method
class StratifyMethod(Method):
    """Clusters given by a per-trajectory rule."""

    name = "stratify"
    label = "stratification"
    defaults = {"stratify": None, "center": "mean"}

    def compose(self, spec, ds):
        if spec.get("stratify") is None:
            raise SpecValidationError("stratify needs a rule")
        _, levels, _ = evaluate_rule(spec["stratify"], ds)
        return spec.update(nClusters=len(levels))

    def fit(self, spec, ds, data, state, rng):
        vals, levels, labels = evaluate_rule(spec["stratify"], ds)
        pos = {v: j for j, v in enumerate(levels)}
        idx = np.array([pos[v.item() if hasattr(v, "item") else v] for v in vals])
        k = len(levels)
        strata = labels if labels is not None else [str(v) for v in levels]
        return FitResult(
            postprob=_hard(idx, k),
            predictor=partition_centers(ds, idx, k, spec["center"]),
            order_by_size=False,
            diagnostics={"strata": strata},
        )


@register_method
class RandomMethod(Method):
    """Uniform random partition; a null baseline."""

    name = "random"
    label = "random partitioning"
    defaults = {"center": "mean"}

    def fit(self, spec, ds, data, state, rng):
        k = spec.n_clusters
        idx = rng.integers(0, k, size=ds.n_trajectories)
        return FitResult(postprob=_hard(idx, k), predictor=partition_centers(ds, idx, k, spec["center"]))


# ---------------------------------------------------------------------------
# feature-based building blocks
# ---------------------------------------------------------------------------
def ols_representation(degree: int = 1) -> Callable[[Dataset], np.ndarray]:
    def representation(ds: Dataset) -> np.ndarray:
        return trajectory_coefficients(ds, degree)

    representation.__name__ = f"ols_representation_deg{degree}"
    return representation


def mean_representation(ds: Dataset) -> np.ndarray:
    return np.array([[y.mean()] for _, _, y in ds.iter_trajectories()])


def kmeans_clusterer(nstart: int = 20, max_iter: int = 100):
    def clusterer(R: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        return kmeans(R, k, nstart=nstart, max_iter=max_iter, rng=rng).labels

    clusterer.__name__ = "kmeans_clusterer"
    return clusterer


def threshold_clusterer(threshold: float):
    """Label 1 where the first representation column exceeds ``threshold``."""

    def clusterer(R: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        return (np.asarray(R)[:, 0] > threshold).astype(int)

    clusterer.__name__ = f"threshold_clusterer_{threshold:g}"
    return clusterer


@register_method
class FeatureMethod(Method):
    """Cluster an arbitrary per-trajectory representation.

    ``representation(ds) -> (N, P) array`` and
    ``clusterer(matrix, nClusters, rng) -> N labels``.
    """

    name = "feature"
    label = "feature-based clustering"
    defaults = {"representation": None, "clusterer": None, "center": "mean"}

    def validate(self, spec, ds, data):
        super().validate(spec, ds, data)
        for key in ("representation", "clusterer"):
            if not callable(spec.get(key)):
                raise SpecValidationError(f"feature method needs a callable {key!r}")

    def fit(self, spec, ds, data, state, rng):
        R = np.asarray(spec["representation"](ds), dtype=float)
        if R.ndim == 1:
            R = R[:, None]
        if R.shape[0] != ds.n_trajectories:
            raise ContractError(
                f"representation returned {R.shape[0]} rows for {ds.n_trajectories} trajectories"
            )
        labels = np.asarray(spec["clusterer"](R, spec.n_clusters, rng))
        if labels.shape != (ds.n_trajectories,):
            raise ContractError("clusterer must return one label per trajectory")
        levels = sorted(set(labels.tolist()))
        pos = {v: j for j, v in enumerate(levels)}
        idx = np.array([pos[v] for v in labels.tolist()], dtype=int)
        k = len(levels)
        constant = bool(np.all(np.ptp(R, axis=0) == 0))
        return FitResult(
            postprob=_hard(idx, k),
            predictor=partition_centers(ds, idx, k, spec["center"]),
            diagnostics={"degenerate_representation": constant},
        )

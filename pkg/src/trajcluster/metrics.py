"""Internal (one-model) and external (two-model) evaluation metrics.

Metrics live in two registries keyed by name. Every metric returns a float;
``NaN`` is the NA sentinel (e.g. Dunn for a one-cluster solution).
"""

from __future__ import annotations

import weakref
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from trajcluster.algorithms.distance import distance_matrix
from trajcluster.dataset import Dataset, to_aligned_matrix
from trajcluster.errors import IncompatiblePartitionError, NotFoundError, TrajclusterError, UnknownMetricError
from trajcluster.model import ClusterModel, FailedFit, ModelList

NA = float("nan")
WMMAE_GRID_SIZE = 100

InternalFn = Callable[[ClusterModel], float]
ExternalFn = Callable[[ClusterModel, ClusterModel], float]

_INTERNAL: Dict[str, InternalFn] = {}
_EXTERNAL: Dict[str, ExternalFn] = {}


def define_internal_metric(name: str, fn: InternalFn) -> None:
    """Register (or replace) an internal metric."""
    _INTERNAL[str(name)] = fn


def define_external_metric(name: str, fn: ExternalFn) -> None:
    _EXTERNAL[str(name)] = fn


def list_metric_names(kind: str = "internal") -> List[str]:
    if kind == "internal":
        return sorted(_INTERNAL)
    if kind == "external":
        return sorted(_EXTERNAL)
    raise ValueError("kind must be 'internal' or 'external'")


def internal_metric(model: Union[ClusterModel, FailedFit], names: Union[str, Sequence[str]]) -> Dict[str, float]:
    if isinstance(names, str):
        names = [names]
    unknown = [n for n in names if n not in _INTERNAL]
    if unknown:
        raise UnknownMetricError(f"unknown internal metric(s) {unknown}")
    if isinstance(model, FailedFit):
        return {n: (0.0 if n == "converged" else NA) for n in names}
    out = {}
    for n in names:
        v = _INTERNAL[n](model)
        out[n] = NA if v is None else float(v)
    return out


def external_metric(a: ClusterModel, b: ClusterModel, name: str) -> float:
    if name not in _EXTERNAL:
        raise UnknownMetricError(f"unknown external metric {name!r}")
    if isinstance(a, FailedFit) or isinstance(b, FailedFit):
        return NA
    v = _EXTERNAL[name](a, b)
    return NA if v is None else float(v)


class PairwiseTable:
    """Lower-triangular table of an external metric over named models."""

    def __init__(self, names: Sequence[str], matrix: np.ndarray, metric: str):
        self.names = list(names)
        self.matrix = matrix
        self.metric = metric

    @property
    def values(self) -> np.ndarray:
        """Condensed entries (row-major lower triangle)."""
        i, j = np.tril_indices(len(self.names), k=-1)
        return self.matrix[i, j]

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, pair):
        a, b = pair
        ia = self.names.index(a) if isinstance(a, str) else a
        ib = self.names.index(b) if isinstance(b, str) else b
        return self.matrix[max(ia, ib), min(ia, ib)]

    def to_csv_text(self) -> str:
        rows = ["," + ",".join(self.names[:-1])]
        for i in range(1, len(self.names)):
            cells = [_csv_num(self.matrix[i, j]) for j in range(i)]
            cells += [""] * (len(self.names) - 1 - i)
            rows.append(",".join([self.names[i]] + cells))
        return "\n".join(rows) + "\n"

    def __repr__(self) -> str:
        return self.to_csv_text()


def _csv_num(v: float) -> str:
    return "" if v is None or np.isnan(v) else repr(float(v))


def pairwise_external(models: Union[ModelList, Sequence[ClusterModel]], name: str, on_error: str = "raise") -> PairwiseTable:
    """Evaluate ``name`` on every unordered pair (``a`` = later model)."""
    if not isinstance(models, ModelList):
        models = ModelList(list(models))
    if len(models) < 2:
        raise ValueError("need at least two models")
    n = len(models)
    M = np.full((n, n), NA)
    names = models.names
    for i in range(1, n):
        for j in range(i):
            try:
                M[i, j] = external_metric(models[i], models[j], name)
            except TrajclusterError as e:
                if on_error == "na":
                    continue
                raise type(e)(f"{names[i]} vs {names[j]}: {e}") from e
    return PairwiseTable(names, M, name)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
_DIST_CACHE: Dict[int, tuple] = {}


def trajectory_distances(ds: Dataset) -> np.ndarray:
    """Euclidean distances between imputed, aligned trajectories (cached per dataset)."""
    key = id(ds)
    hit = _DIST_CACHE.get(key)
    if hit is not None and hit[0]() is ds:
        return hit[1]
    D = distance_matrix(to_aligned_matrix(ds, impute="copy_mean").values, "euclidean")
    D.setflags(write=False)
    _DIST_CACHE[key] = (weakref.ref(ds, lambda _: _DIST_CACHE.pop(key, None)), D)
    return D


def _labels(model: ClusterModel) -> np.ndarray:
    return model.assignment_indices()


def _require_data(model: ClusterModel) -> Optional[Dataset]:
    return model.data


def _abs_and_weights(model: ClusterModel):
    ds = model.data
    pred = model.cluster_predictions(ds)
    resid = ds.value[:, None] - pred
    return ds, resid, model.postprob[ds.index]


# ---------------------------------------------------------------------------
# internal metrics
# ---------------------------------------------------------------------------
def mae(model: ClusterModel) -> float:
    if model.data is None:
        return NA
    r = np.abs(model.residuals())
    return float(np.sum(r) / r.size)


def rmse(model: ClusterModel) -> float:
    if model.data is None:
        return NA
    r = model.residuals()
    return float(np.sqrt(np.sum(r**2) / r.size))


def wmae(model: ClusterModel) -> float:
    """Posterior-weighted mean absolute error over all observations."""
    if model.data is None:
        return NA
    ds, resid, w = _abs_and_weights(model)
    per_obs = (w * np.abs(resid)).sum(axis=1)
    return float(np.sum(per_obs) / ds.n_obs)


def wrmse(model: ClusterModel) -> float:
    if model.data is None:
        return NA
    ds, resid, w = _abs_and_weights(model)
    per_obs = (w * resid**2).sum(axis=1)
    return float(np.sqrt(np.sum(per_obs) / ds.n_obs))


def dunn_index(D: np.ndarray, labels: np.ndarray) -> float:
    """Smallest between-cluster distance over the largest cluster diameter."""
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        return NA
    same = labels[:, None] == labels[None, :]
    inter = D[~same].min()
    intra = D[same].max()
    if intra == 0:
        return NA
    return float(inter / intra)


def average_silhouette(D: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette width; singletons score 0."""
    labels = np.asarray(labels)
    present, idx = np.unique(labels, return_inverse=True)
    if present.size < 2:
        return NA
    n = labels.size
    onehot = np.zeros((n, present.size))
    onehot[np.arange(n), idx] = 1.0
    sums = D @ onehot
    counts = onehot.sum(axis=0)
    own = counts[idx]
    a = np.where(own > 1, sums[np.arange(n), idx] / np.maximum(own - 1, 1), 0.0)
    means = sums / counts[None, :]
    means[np.arange(n), idx] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def _dunn(model: ClusterModel) -> float:
    if model.data is None or model.K < 2:
        return NA
    return dunn_index(trajectory_distances(model.data), _labels(model))


def _asw(model: ClusterModel) -> float:
    if model.data is None or model.K < 2:
        return NA
    return average_silhouette(trajectory_distances(model.data), _labels(model))


def _bic(model: ClusterModel) -> float:
    if model.log_likelihood is None or model.n_params is None:
        return NA
    return -2.0 * model.log_likelihood + model.n_params * np.log(len(model.ids))


def _aic(model: ClusterModel) -> float:
    if model.log_likelihood is None or model.n_params is None:
        return NA
    return -2.0 * model.log_likelihood + 2.0 * model.n_params


def _loglik(model: ClusterModel) -> float:
    return NA if model.log_likelihood is None else model.log_likelihood


# ---------------------------------------------------------------------------
# external metrics
# ---------------------------------------------------------------------------
def _aligned_labels(a: ClusterModel, b: ClusterModel):
    ida, idb = list(a.ids), list(b.ids)
    if set(ida) != set(idb):
        # ids read from CSV are strings; fall back to comparing text forms
        ida, idb = [str(i) for i in ida], [str(i) for i in idb]
    if set(ida) != set(idb) or len(ida) != len(idb) or len(set(ida)) != len(ida):
        raise IncompatiblePartitionError("models cover different trajectory ids")
    la = _labels(a)
    lb = _labels(b)
    if ida != idb:
        pos = {tid: k for k, tid in enumerate(idb)}
        lb = lb[[pos[t] for t in ida]]
    return la, lb


def contingency(la, lb) -> np.ndarray:
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    T = np.zeros((ia.max() + 1 if ia.size else 0, ib.max() + 1 if ib.size else 0), dtype=np.int64)
    np.add.at(T, (ia, ib), 1)
    return T


def adjusted_rand_index(la, lb) -> float:
    """Hubert-Arabie adjusted Rand index, computed in exact rational arithmetic."""
    T = contingency(la, lb)
    n = int(T.sum())
    if n < 2:
        return 1.0

    def c2(x):
        return x * (x - 1) // 2

    index = sum(c2(int(v)) for v in T.ravel())
    sa = sum(c2(int(v)) for v in T.sum(axis=1))
    sb = sum(c2(int(v)) for v in T.sum(axis=0))
    total = c2(n)
    expected = Fraction(sa * sb, total)
    maximum = Fraction(sa + sb, 2)
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def split_join(la, lb) -> int:
    T = contingency(la, lb)
    n = int(T.sum())
    return int(2 * n - T.max(axis=1).sum() - T.max(axis=0).sum())


def split_join_ref(la, lref) -> int:
    """One-way split-join: moves needed to make each cluster of ``la`` fit inside a reference cluster."""
    T = contingency(la, lref)
    return int(T.sum() - T.max(axis=1).sum())


def wmmae(a: ClusterModel, b: ClusterModel, n_points: int = WMMAE_GRID_SIZE) -> float:
    """Proportion-weighted mean absolute distance of each cluster trajectory of
    ``a`` to its closest cluster trajectory of ``b``, on a shared grid."""
    if a.time_range is None or b.time_range is None:
        return NA
    lo = max(a.time_range[0], b.time_range[0])
    hi = min(a.time_range[1], b.time_range[1])
    if hi < lo:
        return NA
    grid = np.linspace(lo, hi, n_points)
    ya = a.predictor(grid)
    yb = b.predictor(grid)
    cost = np.abs(ya[:, None, :] - yb[None, :, :]).sum(axis=2)
    return float(np.sum(a.proportions * cost.min(axis=1)) / n_points)


def _ari(a, b):
    return adjusted_rand_index(*_aligned_labels(a, b))


def _sj(a, b):
    return float(split_join(*_aligned_labels(a, b)))


def _sj_ref(a, b):
    return float(split_join_ref(*_aligned_labels(a, b)))


def _register_builtins():
    define_internal_metric("MAE", mae)
    define_internal_metric("RMSE", rmse)
    define_internal_metric("WMAE", wmae)
    define_internal_metric("WRMSE", wrmse)
    define_internal_metric("Dunn", _dunn)
    define_internal_metric("ASW", _asw)
    define_internal_metric("BIC", _bic)
    define_internal_metric("AIC", _aic)
    define_internal_metric("logLik", _loglik)
    define_internal_metric("converged", lambda m: float(bool(m.converged)))
    define_internal_metric("estimationTime", lambda m: float(m.estimation_seconds))
    define_external_metric("adjustedRand", _ari)
    define_external_metric("splitJoin", _sj)
    define_external_metric("splitJoin.ref", _sj_ref)
    define_external_metric("WMMAE", wmmae)


_register_builtins()


def metric_table(models: Union[ModelList, Sequence[ClusterModel]], names: Sequence[str]) -> Dict[str, np.ndarray]:
    if not isinstance(models, ModelList):
        models = ModelList(list(models))
    return models.metric(names)


__all__ = [
    "NA",
    "PairwiseTable",
    "adjusted_rand_index",
    "average_silhouette",
    "contingency",
    "define_external_metric",
    "define_internal_metric",
    "dunn_index",
    "external_metric",
    "internal_metric",
    "list_metric_names",
    "metric_table",
    "pairwise_external",
    "split_join",
    "split_join_ref",
    "trajectory_distances",
    "wmmae",
]

"""Fitted cluster models, cluster-trajectory predictors and model lists."""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Hashable, Iterator, List, Mapping, Optional, Sequence, Union

import numpy as np

from trajcluster.dataset import Dataset, _jsonable, id_sort_key
from trajcluster.errors import NotFoundError, PartialAssignmentError, ShapeError

POSTPROB_TOL = 1e-9


def polynomial_design(times, degree: int) -> np.ndarray:
    """Design matrix with columns ``1, t, ..., t**degree``."""
    return np.vander(np.asarray(times, dtype=float), int(degree) + 1, increasing=True)


def default_cluster_names(k: int) -> List[str]:
    """``A, B, ..., Z, AA, AB, ...``"""
    letters = string.ascii_uppercase
    out = []
    for i in range(k):
        name, n = "", i
        while True:
            name = letters[n % 26] + name
            n = n // 26 - 1
            if n < 0:
                break
        out.append(name)
    return out


# ---------------------------------------------------------------------------
# predictors
# ---------------------------------------------------------------------------
class CenterPredictor:
    """Cluster trajectories given as values on a time grid.

    Queries between grid points are linearly interpolated; queries outside
    the grid take the nearest endpoint value. NaN cells (a cluster never
    observed at that time) are skipped when interpolating.
    """

    kind = "centers"

    def __init__(self, times, centers):
        self.times = np.asarray(times, dtype=float)
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if self.centers.shape[1] != self.times.size:
            raise ShapeError("centers must have one column per grid time")

    @property
    def n_clusters(self) -> int:
        return self.centers.shape[0]

    def __call__(self, times) -> np.ndarray:
        t = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.empty((self.n_clusters, t.size))
        for k, row in enumerate(self.centers):
            ok = np.isfinite(row)
            if ok.all():
                out[k] = np.interp(t, self.times, row)
            elif ok.any():
                out[k] = np.interp(t, self.times[ok], row[ok])
            else:
                out[k] = np.nan
        return out

    def take(self, order: Sequence[int]) -> "CenterPredictor":
        return CenterPredictor(self.times, self.centers[list(order)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": self.kind,
            "times": self.times.tolist(),
            "centers": [[None if np.isnan(v) else float(v) for v in row] for row in self.centers],
        }


class PolynomialPredictor:
    """Cluster trajectories ``x(t) @ coef[k]`` with a polynomial time design."""

    kind = "polynomial"

    def __init__(self, coef):
        self.coef = np.atleast_2d(np.asarray(coef, dtype=float))

    @property
    def n_clusters(self) -> int:
        return self.coef.shape[0]

    @property
    def degree(self) -> int:
        return self.coef.shape[1] - 1

    def __call__(self, times) -> np.ndarray:
        X = polynomial_design(np.atleast_1d(times), self.degree)
        return (X @ self.coef.T).T

    def take(self, order: Sequence[int]) -> "PolynomialPredictor":
        return PolynomialPredictor(self.coef[list(order)])

    def to_dict(self) -> Dict[str, Any]:
        return {"type": self.kind, "coef": self.coef.tolist()}


def predictor_from_dict(d: Mapping[str, Any]):
    if d["type"] == "centers":
        centers = np.array([[np.nan if v is None else v for v in row] for row in d["centers"]], dtype=float)
        return CenterPredictor(d["times"], centers)
    if d["type"] == "polynomial":
        return PolynomialPredictor(d["coef"])
    raise ValueError(f"unknown predictor type {d['type']!r}")


# ---------------------------------------------------------------------------
# fitted model
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ClusterModel:
    """A fitted longitudinal cluster solution.

    ``postprob`` is the N x K posterior probability matrix with rows in the
    order of ``ids``; cluster ``k`` is described by ``cluster_names[k]`` and
    the k-th output row of ``predictor``. The training :class:`Dataset` is
    kept by reference (``data``) for residual-based metrics; it is never
    serialized.
    """

    spec: Any
    ids: tuple
    postprob: np.ndarray
    cluster_names: tuple
    predictor: Any
    seed: Optional[int] = None
    converged: bool = True
    estimation_seconds: float = 0.0
    log_likelihood: Optional[float] = None
    n_params: Optional[int] = None
    time_range: Optional[tuple] = None
    grid: Optional[np.ndarray] = field(default=None, repr=False)
    data: Optional[Dataset] = field(default=None, repr=False)
    recipe: Any = None
    tag: Mapping[str, Any] = field(default_factory=dict)
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        pp = np.array(self.postprob, dtype=float, order="C")
        if pp.ndim != 2 or pp.shape[0] != len(self.ids):
            raise ShapeError("postprob must be N x K with one row per trajectory")
        if len(self.cluster_names) != pp.shape[1]:
            raise ShapeError("need one cluster name per postprob column")
        pp.setflags(write=False)
        object.__setattr__(self, "postprob", pp)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "cluster_names", tuple(str(n) for n in self.cluster_names))
        if self.data is not None:
            if self.time_range is None:
                object.__setattr__(self, "time_range", self.data.time_range())
            if self.grid is None:
                object.__setattr__(self, "grid", self.data.grid())

    # -- descriptors -------------------------------------------------------
    @property
    def K(self) -> int:
        return self.postprob.shape[1]

    @property
    def n_clusters(self) -> int:
        return self.K

    @property
    def method_name(self) -> str:
        return self.spec.method_name

    @property
    def proportions(self) -> np.ndarray:
        if self.postprob.shape[0] == 0:
            return np.full(self.K, np.nan)
        return self.postprob.mean(axis=0)

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment_indices(), minlength=self.K)

    @property
    def empty_clusters(self) -> List[str]:
        sizes = self.cluster_sizes
        return [n for n, s in zip(self.cluster_names, sizes) if s == 0]

    def with_cluster_names(self, names: Sequence[str]) -> "ClusterModel":
        if len(names) != self.K:
            raise ShapeError(f"expected {self.K} names")
        return replace(self, cluster_names=tuple(names))

    def with_tag(self, **tag) -> "ClusterModel":
        return replace(self, tag={**self.tag, **tag})

    def with_recipe(self, recipe) -> "ClusterModel":
        return replace(self, recipe=recipe)

    # -- assignments -------------------------------------------------------
    def assignment_indices(self, strategy: str = "modal", seed: Optional[int] = None) -> np.ndarray:
        return assign_rows(self.postprob, strategy, self.seed if seed is None else seed)

    def assignments(self, strategy: str = "modal", seed: Optional[int] = None) -> Dict[Hashable, int]:
        """Map trajectory id to cluster index."""
        idx = self.assignment_indices(strategy, seed)
        return {tid: int(k) for tid, k in zip(self.ids, idx)}

    def named_assignments(self, strategy: str = "modal", seed: Optional[int] = None) -> Dict[Hashable, str]:
        idx = self.assignment_indices(strategy, seed)
        return {tid: self.cluster_names[k] for tid, k in zip(self.ids, idx)}

    # -- cluster trajectories ----------------------------------------------
    def cluster_trajectories(self, times=None) -> np.ndarray:
        """K x T matrix of cluster trajectory values (default: training grid)."""
        if times is None:
            times = self.grid
        return self.predictor(times)

    def cluster_predictions(self, ds: Optional[Dataset] = None) -> np.ndarray:
        """n_obs x K matrix: every observation's prediction under every cluster."""
        ds = self._data(ds)
        grid, inv = np.unique(ds.time, return_inverse=True)
        return self.predictor(grid)[:, inv].T

    def predict_for_cluster(self, ds_new: Dataset, k: Union[int, str]) -> np.ndarray:
        k = self._cluster_index(k)
        return self.predictor(ds_new.time)[k]

    def fitted(self, ds: Optional[Dataset] = None) -> np.ndarray:
        """Per-observation predictions under each trajectory's modal cluster."""
        ds = self._data(ds)
        pred = self.cluster_predictions(ds)
        modal = self._modal_for(ds)
        return pred[np.arange(ds.n_obs), modal[ds.index]]

    def residuals(self, ds: Optional[Dataset] = None) -> np.ndarray:
        ds = self._data(ds)
        return ds.value - self.fitted(ds)

    def _modal_for(self, ds: Dataset) -> np.ndarray:
        modal = self.assignment_indices()
        if ds is self.data or ds.ids == self.ids:
            return modal
        pos = {tid: k for k, tid in enumerate(self.ids)}
        try:
            return modal[[pos[t] for t in ds.ids]]
        except KeyError as e:
            raise PartialAssignmentError(f"trajectory {e.args[0]!r} is not part of the model") from None

    def _cluster_index(self, k) -> int:
        if isinstance(k, str):
            if k not in self.cluster_names:
                raise IndexError(f"unknown cluster {k!r}")
            return self.cluster_names.index(k)
        k = int(k)
        if not 0 <= k < self.K:
            raise IndexError(f"cluster index {k} out of range for K={self.K}")
        return k

    def _data(self, ds: Optional[Dataset]) -> Dataset:
        if ds is not None:
            return ds
        if self.data is None:
            raise NotFoundError("model carries no training data; pass a dataset")
        return self.data

    # -- reporting ---------------------------------------------------------
    def to_dict(self, timing: bool = False) -> Dict[str, Any]:
        """JSON-ready export.

        ``estimation_seconds`` is wall-clock and therefore only written when
        ``timing`` is true; otherwise it is ``null`` so that exports of the
        same fit are byte-identical.
        """
        grid = self.grid if self.grid is not None else np.linspace(*self.time_range, 2)
        out: Dict[str, Any] = {
            "method": self.spec.method_name,
            "args": self.spec.to_dict()["args"],
            "seed": self.seed,
            "converged": bool(self.converged),
            "estimation_seconds": float(self.estimation_seconds) if timing else None,
            "cluster_names": list(self.cluster_names),
            "proportions": self.proportions.tolist(),
            "ids": [_jsonable(i) for i in self.ids],
            "postprob": self.postprob.tolist(),
            "predictor_samples": {
                "times": [float(t) for t in grid],
                "values": self.predictor(grid).tolist(),
            },
            "predictor": self.predictor.to_dict(),
            "time_range": list(self.time_range) if self.time_range is not None else None,
        }
        if self.log_likelihood is not None:
            out["log_likelihood"] = float(self.log_likelihood)
        if self.n_params is not None:
            out["n_params"] = int(self.n_params)
        if self.recipe is not None:
            out["recipe"] = self.recipe.to_dict()
        return out

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing=timing), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], data: Optional[Dataset] = None) -> "ClusterModel":
        from trajcluster.method import MethodSpec

        spec = MethodSpec(d["method"], d.get("args", {}), provenance="loaded")
        if "predictor" in d:
            predictor = predictor_from_dict(d["predictor"])
        else:
            s = d["predictor_samples"]
            predictor = CenterPredictor(s["times"], s["values"])
        samples = d.get("predictor_samples") or {}
        recipe = None
        if d.get("recipe"):
            from trajcluster.harness import BootRecipe

            recipe = BootRecipe.from_dict(d["recipe"])
        ids = d.get("ids") or list(range(1, len(d["postprob"]) + 1))
        return cls(
            spec=spec,
            ids=tuple(ids),
            postprob=np.asarray(d["postprob"], dtype=float).reshape(len(ids), -1),
            cluster_names=tuple(d["cluster_names"]),
            predictor=predictor,
            seed=d.get("seed"),
            converged=bool(d.get("converged", True)),
            estimation_seconds=float(d.get("estimation_seconds") or 0.0),
            log_likelihood=d.get("log_likelihood"),
            n_params=d.get("n_params"),
            time_range=tuple(d["time_range"]) if d.get("time_range") else None,
            grid=np.asarray(samples["times"], dtype=float) if samples.get("times") else None,
            data=data,
            recipe=recipe,
        )

    def summary(self) -> str:
        """Human-readable summary: arguments, cluster sizes, scaled residuals."""
        lines = [f"Longitudinal cluster model using {self.method_name}"]
        for k, v in self.spec.to_dict()["args"].items():
            lines.append(f" {k + ':':<16}{v!r}")
        lines.append("")
        lines.append(f"Cluster sizes (K={self.K}):")
        sizes = self.cluster_sizes
        n = max(len(self.ids), 1)
        width = max([len(c) for c in self.cluster_names] + [10])
        lines.append("  ".join(f"{c:>{width}}" for c in self.cluster_names))
        lines.append(
            "  ".join(f"{f'{s} ({100 * s / n:.1f}%)':>{width}}" for s in sizes)
        )
        if self.data is not None:
            ds = self.data
            lines.append("")
            lines.append(f"Number of obs: {ds.n_obs}, strata ({ds.id_col}): {ds.n_trajectories}")
            r = self.residuals()
            if r.size > 1 and np.std(r) > 0:
                z = (r - r.mean()) / r.std(ddof=1)
                q = np.quantile(z, [0, 0.25, 0.5, 0.75, 1])
                lines.append("")
                lines.append("Scaled residuals:")
                heads = ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."]
                vals = [q[0], q[1], q[2], 0.0, q[3], q[4]]
                lines.append(" ".join(f"{h:>9}" for h in heads))
                lines.append(" ".join(f"{v:>9.5f}" for v in vals))
        return "\n".join(lines) + "\n"

    def __repr__(self) -> str:
        props = ", ".join(f"{n}={p:.3f}" for n, p in zip(self.cluster_names, self.proportions))
        return f"<ClusterModel {self.method_name} K={self.K} ({props}) seed={self.seed}>"


def assign_rows(postprob: np.ndarray, strategy: str = "modal", seed: Optional[int] = 0) -> np.ndarray:
    """Cluster index per row of a posterior probability matrix.

    ``modal`` takes the row argmax, breaking exact ties uniformly at random;
    ``weighted_random`` samples each row's cluster with the row as the
    probability vector. Both are reproducible for a given ``seed``.
    """
    P = np.asarray(postprob, dtype=float)
    n = P.shape[0]
    rng = np.random.default_rng(0 if seed is None else seed)
    if n == 0:
        return np.zeros(0, dtype=int)
    if strategy == "modal":
        rowmax = P.max(axis=1, keepdims=True)
        ties = P == rowmax
        idx = P.argmax(axis=1)
        multi = np.flatnonzero(ties.sum(axis=1) > 1)
        for r in multi:
            options = np.flatnonzero(ties[r])
            idx[r] = options[rng.integers(options.size)]
        return idx
    if strategy == "weighted_random":
        cum = np.cumsum(P, axis=1)
        cum[:, -1] = np.maximum(cum[:, -1], 1.0)
        u = rng.random(n)[:, None]
        return (u >= cum).sum(axis=1)
    raise ValueError(f"unknown assignment strategy {strategy!r}")


# ---------------------------------------------------------------------------
# partition models
# ---------------------------------------------------------------------------
def _center_fn(center):
    if callable(center):
        return center
    if center == "mean":
        return np.mean
    if center == "median":
        return np.median
    raise ValueError(f"unknown center {center!r}")


def partition_centers(ds: Dataset, labels: np.ndarray, k: int, center="mean") -> CenterPredictor:
    """Pointwise center of each cluster's observations at every grid time."""
    grid = ds.grid()
    col = np.searchsorted(grid, ds.time)
    obs_cluster = labels[ds.index]
    centers = np.full((k, grid.size), np.nan)
    if center == "mean":
        cells = obs_cluster * grid.size + col
        s = np.bincount(cells, weights=ds.value, minlength=k * grid.size)
        c = np.bincount(cells, minlength=k * grid.size)
        with np.errstate(invalid="ignore", divide="ignore"):
            centers = np.where(c > 0, s / np.maximum(c, 1), np.nan).reshape(k, grid.size)
        grand_s = np.bincount(col, weights=ds.value, minlength=grid.size)
        grand = grand_s / np.maximum(np.bincount(col, minlength=grid.size), 1)
    else:
        fn = _center_fn(center)
        for kk in range(k):
            for j in range(grid.size):
                v = ds.value[(obs_cluster == kk) & (col == j)]
                if v.size:
                    centers[kk, j] = fn(v)
        grand = np.array([fn(ds.value[col == j]) for j in range(grid.size)])
    empty = np.bincount(labels, minlength=k) == 0
    centers[empty] = grand
    return CenterPredictor(grid, centers)


def partition_model(
    ds: Dataset,
    assignments: Union[Mapping[Hashable, Hashable], Sequence[Hashable]],
    center="mean",
    clusters: Optional[Sequence[Hashable]] = None,
    names: Optional[Sequence[str]] = None,
    spec=None,
    seed: Optional[int] = None,
) -> ClusterModel:
    """Hard-partition model from a trajectory -> label assignment.

    Parameters
    ----------
    assignments : mapping or sequence
        Label per trajectory id (a sequence is matched to ``ds.ids``).
    center : {"mean", "median"} or callable
        Pointwise aggregate used for the cluster trajectories.
    clusters : sequence, optional
        Cluster label order, which may include labels without members.
        Defaults to the sorted distinct labels.
    names : sequence of str, optional
        Cluster names; defaults to the labels as strings.
    """
    if isinstance(assignments, Mapping):
        missing = [i for i in ds.ids if i not in assignments]
        if missing:
            raise PartialAssignmentError(f"no assignment for trajectories {missing[:5]}")
        labels = [assignments[i] for i in ds.ids]
    else:
        labels = list(assignments)
        if len(labels) != ds.n_trajectories:
            raise PartialAssignmentError(
                f"{len(labels)} assignments for {ds.n_trajectories} trajectories"
            )
    if clusters is None:
        clusters = sorted(set(labels), key=id_sort_key)
    clusters = list(clusters)
    pos = {c: k for k, c in enumerate(clusters)}
    try:
        idx = np.array([pos[l] for l in labels], dtype=int)
    except KeyError as e:
        raise PartialAssignmentError(f"label {e.args[0]!r} not among the clusters") from None
    k = len(clusters)
    postprob = np.zeros((ds.n_trajectories, k))
    postprob[np.arange(ds.n_trajectories), idx] = 1.0
    if names is None:
        names = [str(c) for c in clusters]
    if spec is None:
        from trajcluster.method import MethodSpec

        spec = MethodSpec(
            "partition",
            {
                "id": ds.id_col,
                "time": ds.time_col,
                "response": ds.response_col,
                "nClusters": k,
                "center": center if isinstance(center, str) else getattr(center, "__name__", "custom"),
            },
        )
    predictor = partition_centers(ds, idx, k, center)
    sizes = np.bincount(idx, minlength=k)
    return ClusterModel(
        spec=spec,
        ids=ds.ids,
        postprob=postprob,
        cluster_names=tuple(names),
        predictor=predictor,
        seed=seed,
        data=ds,
        diagnostics={"empty_clusters": [n for n, s in zip(names, sizes) if s == 0]},
    )


# ---------------------------------------------------------------------------
# model lists
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FailedFit:
    """Placeholder for a fit that raised; metrics on it evaluate to NA."""

    spec: Any
    seed: Optional[int]
    error: str
    error_type: str = "Error"
    recipe: Any = None
    converged: bool = False

    @property
    def method_name(self) -> str:
        return self.spec.method_name


Entry = Union[ClusterModel, FailedFit]


class ModelList:
    """Ordered, named collection of fitted models (failed fits included)."""

    def __init__(self, entries: Sequence[Entry] = (), names: Optional[Sequence[str]] = None):
        self._entries = list(entries)
        if names is None:
            names = [str(i + 1) for i in range(len(self._entries))]
        if len(names) != len(self._entries):
            raise ShapeError("need one name per entry")
        self._names = [str(n) for n in names]

    @property
    def names(self) -> List[str]:
        return list(self._names)

    @property
    def entries(self) -> List[Entry]:
        return list(self._entries)

    def models(self) -> List[ClusterModel]:
        """Successfully fitted entries only."""
        return [e for e in self._entries if isinstance(e, ClusterModel)]

    @property
    def failures(self) -> List[FailedFit]:
        return [e for e in self._entries if isinstance(e, FailedFit)]

    def items(self):
        return list(zip(self._names, self._entries))

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Entry]:
        return iter(self._entries)

    def __getitem__(self, key):
        if isinstance(key, str):
            return self._entries[self._names.index(key)]
        if isinstance(key, slice):
            return ModelList(self._entries[key], self._names[key])
        return self._entries[key]

    def __add__(self, other: "ModelList") -> "ModelList":
        return ModelList(self._entries + other._entries, self._names + other._names)

    def __repr__(self) -> str:
        rows = [f"List of {len(self)} models"]
        for name, e in self.items():
            status = "" if isinstance(e, ClusterModel) else f" FAILED: {e.error}"
            rows.append(f"  {name}: {e.method_name} seed={e.seed} nClusters={e.spec.get('nClusters')}{status}")
        return "\n".join(rows)

    def subset(self, predicate: Optional[Callable[[Mapping[str, Any]], bool]] = None, drop: bool = False, **equals):
        """Entries whose spec arguments satisfy ``predicate`` and ``equals``.

        With ``drop=True`` a single match is returned as the model itself and
        an empty match raises :class:`NotFoundError`.
        """
        keep = []
        for name, e in self.items():
            args = dict(e.spec.args)
            args.setdefault(".method", e.spec.method_name)
            if predicate is not None and not predicate(args):
                continue
            if any(args.get(k) != v for k, v in equals.items()):
                continue
            keep.append((name, e))
        if drop:
            if not keep:
                raise NotFoundError("no model matches the subset condition")
            if len(keep) == 1:
                return keep[0][1]
        return ModelList([e for _, e in keep], [n for n, _ in keep])

    def metric(self, names: Sequence[str]) -> Dict[str, np.ndarray]:
        from trajcluster.metrics import internal_metric

        if isinstance(names, str):
            names = [names]
        out = {n: np.full(len(self), np.nan) for n in names}
        for i, e in enumerate(self._entries):
            if isinstance(e, FailedFit):
                if "converged" in out:
                    out["converged"][i] = 0.0
                continue
            vals = internal_metric(e, names)
            for n in names:
                out[n][i] = vals[n]
        return out

    def max_by(self, name: str) -> ClusterModel:
        return self._extreme_by(name, np.argmax)

    def min_by(self, name: str) -> ClusterModel:
        return self._extreme_by(name, np.argmin)

    def _extreme_by(self, name, pick) -> ClusterModel:
        if not self._entries:
            raise NotFoundError("empty model list")
        vals = self.metric([name])[name]
        ok = np.flatnonzero(~np.isnan(vals))
        if ok.size == 0:
            raise NotFoundError(f"metric {name!r} is NA for every model")
        return self._entries[ok[pick(vals[ok])]]


def model_list(*models: Union[Entry, ModelList], **named: Entry) -> ModelList:
    """Concatenate models and model lists into one :class:`ModelList`."""
    entries, names = [], []
    for m in models:
        if isinstance(m, ModelList):
            entries.extend(m.entries)
            names.extend(m.names)
        else:
            entries.append(m)
            names.append(str(len(names) + 1))
    for n, m in named.items():
        entries.append(m)
        names.append(n)
    return ModelList(entries, names)

"""Method specifications, the method registry and the estimation pipeline.

A :class:`MethodSpec` is an immutable bundle of named arguments for a
registered :class:`Method`. :func:`estimate` runs a method's six steps in a
fixed order::

    prepare_data -> compose -> validate -> pre_fit -> fit -> post_fit

and wraps the outcome in a :class:`~trajcluster.model.ClusterModel`.
New methods subclass :class:`Method`, override :meth:`Method.fit` (and any
optional step), and register with :func:`register_method`.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Type

import numpy as np

from trajcluster._seeding import fresh_seed, make_rng
from trajcluster.dataset import Dataset
from trajcluster.errors import (
    EmptyDatasetError,
    InfeasibleError,
    SpecValidationError,
    UnknownMethodError,
)
from trajcluster.model import ClusterModel, default_cluster_names

ENV_ID = "TRAJCLUSTER_ID"
ENV_TIME = "TRAJCLUSTER_TIME"
STEPS = ("prepare", "compose", "validate", "pre_fit", "fit", "post_fit")


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, np.ndarray):
        return tuple(value.tolist())
    return value


def _describe(value) -> Any:
    if callable(value):
        return getattr(value, "__name__", repr(value))
    if isinstance(value, tuple):
        return [_describe(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


@dataclass(frozen=True, eq=False)
class MethodSpec:
    """Immutable method specification.

    Arguments are read with ``spec["nClusters"]`` or ``spec.get(...)``;
    :meth:`update` returns a new spec and never touches the original.
    """

    method_name: str
    args: Mapping[str, Any] = field(default_factory=dict)
    provenance: str = ""

    def __post_init__(self):
        frozen = {str(k): _freeze(v) for k, v in dict(self.args).items()}
        object.__setattr__(self, "args", MappingProxyType(frozen))
        if not self.provenance:
            object.__setattr__(self, "provenance", self._render())

    def _render(self) -> str:
        inner = ", ".join(f"{k}={_describe(v)!r}" for k, v in self.args.items())
        return f"{self.method_name}({inner})"

    def __getitem__(self, key: str):
        return self.args[key]

    def __contains__(self, key: str) -> bool:
        return key in self.args

    def get(self, key: str, default=None):
        return self.args.get(key, default)

    @property
    def n_clusters(self) -> int:
        return int(self.args["nClusters"])

    def update(self, **overrides) -> "MethodSpec":
        return spec_update(self, overrides)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MethodSpec):
            return NotImplemented
        return self.method_name == other.method_name and dict(self.args) == dict(other.args)

    def __hash__(self):
        return hash((self.method_name, tuple(sorted((k, repr(v)) for k, v in self.args.items()))))

    def to_dict(self) -> Dict[str, Any]:
        return {"method": self.method_name, "args": {k: _describe(v) for k, v in self.args.items()}}

    def __repr__(self) -> str:
        head = f"MethodSpec {self.method_name!r}"
        body = "\n".join(f" {k + ':':<16}{_describe(v)!r}" for k, v in self.args.items())
        return f"{head}\n{body}" if body else head


# ---------------------------------------------------------------------------
# methods and registry
# ---------------------------------------------------------------------------
@dataclass
class FitResult:
    """What a method's ``fit`` step hands back to the pipeline.

    ``order_by_size`` asks the pipeline to order clusters by decreasing
    proportion before naming them ``A, B, ...``; leave it off when the
    cluster order is meaningful (e.g. strata sorted by value).
    """

    postprob: np.ndarray
    predictor: Any
    converged: bool = True
    log_likelihood: Optional[float] = None
    n_params: Optional[int] = None
    cluster_names: Optional[Sequence[str]] = None
    order_by_size: bool = True
    diagnostics: Dict[str, Any] = field(default_factory=dict)


class Method:
    """Base class for clustering methods.

    Subclasses set ``name``, ``label`` and ``defaults`` and implement
    :meth:`fit`. The other steps have pass-through defaults.
    """

    name: str = ""
    label: str = ""
    defaults: Mapping[str, Any] = {}
    # arguments accepted on top of ``defaults`` and the common keys
    extra_args: Sequence[str] = ()

    def prepare_data(self, spec: MethodSpec, ds: Dataset):
        return ds

    def compose(self, spec: MethodSpec, ds: Dataset) -> MethodSpec:
        return spec

    def validate(self, spec: MethodSpec, ds: Dataset, data) -> None:
        allowed = set(COMMON_ARGS) | set(self.defaults) | set(self.extra_args)
        unknown = sorted(set(spec.args) - allowed)
        if unknown:
            raise SpecValidationError(f"unknown argument(s) for {self.name!r}: {unknown}")
        for key, col in (("id", ds.id_col), ("time", ds.time_col), ("response", ds.response_col)):
            if spec[key] != col:
                raise SpecValidationError(
                    f"spec {key}={spec[key]!r} does not match dataset column {col!r}"
                )
        k = spec["nClusters"]
        if not isinstance(k, (int, np.integer)) or k < 1:
            raise SpecValidationError(f"nClusters must be a positive integer, got {k!r}")
        if k > ds.n_trajectories:
            raise InfeasibleError(f"nClusters={k} exceeds the {ds.n_trajectories} trajectories")

    def pre_fit(self, spec: MethodSpec, ds: Dataset, data, rng: np.random.Generator):
        return None

    def fit(self, spec: MethodSpec, ds: Dataset, data, state, rng: np.random.Generator) -> FitResult:
        raise NotImplementedError

    def post_fit(self, spec: MethodSpec, ds: Dataset, result: FitResult) -> FitResult:
        return result


COMMON_ARGS = ("id", "time", "response", "nClusters")
_REGISTRY: Dict[str, Method] = {}


def register_method(cls: Type[Method]) -> Type[Method]:
    """Class decorator adding a method to the registry (replacing any same-named one)."""
    if not cls.name:
        raise ValueError("method class needs a name")
    _REGISTRY[cls.name] = cls()
    return cls


def get_method(name: str) -> Method:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownMethodError(
            f"unknown method {name!r}; registered: {sorted(_REGISTRY)}"
        ) from None


def list_methods() -> list:
    return sorted(_REGISTRY)


def common_defaults() -> Dict[str, Any]:
    return {
        "id": os.environ.get(ENV_ID, "id"),
        "time": os.environ.get(ENV_TIME, "time"),
        "response": "value",
        "nClusters": 2,
    }


# ---------------------------------------------------------------------------
# spec construction
# ---------------------------------------------------------------------------
def spec_new(method_name: str, overrides: Optional[Mapping[str, Any]] = None, **kwargs) -> MethodSpec:
    """Specification for a registered method with defaults filled in.

    Default ``id``/``time`` column names come from the ``TRAJCLUSTER_ID``
    and ``TRAJCLUSTER_TIME`` environment variables when set.
    """
    method = get_method(method_name)
    args = common_defaults()
    args.update(method.defaults)
    args.update(overrides or {})
    args.update(kwargs)
    return MethodSpec(method_name, args)


def spec_update(spec: MethodSpec, overrides: Optional[Mapping[str, Any]] = None, **kwargs) -> MethodSpec:
    merged = dict(spec.args)
    merged.update(overrides or {})
    merged.update(kwargs)
    if merged == dict(spec.args):
        return spec
    return MethodSpec(spec.method_name, merged)


def spec_permute(spec: MethodSpec, arg_name: str, values: Sequence[Any]) -> list:
    """One updated spec per value, in order."""
    values = list(values)
    if not values:
        raise ValueError("values must be non-empty")
    return [spec_update(spec, {arg_name: v}) for v in values]


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------
def estimate(
    spec: MethodSpec,
    ds: Dataset,
    seed: Optional[int] = None,
    trace: Optional[Callable[[str], None]] = None,
    **overrides,
) -> ClusterModel:
    """Fit ``spec`` on ``ds`` and return the fitted model.

    The result is a pure function of ``(spec, ds, seed)``; when no seed is
    given a fresh one is drawn and recorded on the model. ``trace`` is
    called with each step name as the step starts.
    """
    if overrides:
        spec = spec_update(spec, overrides)
    method = get_method(spec.method_name)
    if ds.n_trajectories == 0:
        raise EmptyDatasetError("empty dataset: no trajectories to cluster")
    if seed is None:
        seed = fresh_seed()
    note = trace or (lambda step: None)
    rng = make_rng(seed)

    note("prepare")
    data = method.prepare_data(spec, ds)
    note("compose")
    spec = method.compose(spec, ds)
    note("validate")
    method.validate(spec, ds, data)
    note("pre_fit")
    state = method.pre_fit(spec, ds, data, rng)
    note("fit")
    start = time.perf_counter()
    result = method.fit(spec, ds, data, state, rng)
    elapsed = time.perf_counter() - start
    note("post_fit")
    result = method.post_fit(spec, ds, result)
    return _build_model(spec, ds, seed, result, elapsed)


def _build_model(spec, ds, seed, result: FitResult, elapsed: float) -> ClusterModel:
    pp = np.asarray(result.postprob, dtype=float)
    pp = np.clip(pp, 0.0, 1.0)
    pp = pp / pp.sum(axis=1, keepdims=True)
    predictor = result.predictor
    names = result.cluster_names
    if result.order_by_size and pp.shape[1] > 1:
        order = np.argsort(-pp.mean(axis=0), kind="stable")
        pp = pp[:, order]
        predictor = predictor.take(order)
    if names is None:
        names = default_cluster_names(pp.shape[1])
    diagnostics = dict(result.diagnostics)
    modal = np.bincount(pp.argmax(axis=1), minlength=pp.shape[1])
    diagnostics["empty_clusters"] = [n for n, c in zip(names, modal) if c == 0]
    return ClusterModel(
        spec=spec,
        ids=ds.ids,
        postprob=pp,
        cluster_names=tuple(names),
        predictor=predictor,
        seed=int(seed),
        converged=bool(result.converged),
        estimation_seconds=elapsed,
        log_likelihood=result.log_likelihood,
        n_params=result.n_params,
        data=ds,
        diagnostics=diagnostics,
    )

"""Batch, repeated and bootstrap estimation.

All three drivers derive one child seed per task from the master seed, so
results do not depend on whether fits run serially or on a thread pool.
Fits that raise are kept as :class:`~trajcluster.model.FailedFit` entries.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from trajcluster._seeding import derive_seed, make_rng
from trajcluster.dataset import Dataset, _jsonable
from trajcluster.errors import ContractError, EmptyDatasetError, TrajclusterError
from trajcluster.method import MethodSpec, estimate
from trajcluster.model import ClusterModel, FailedFit, ModelList

DEFAULT_BOOT_SAMPLES = 10


def dataset_digest(ds: Dataset) -> str:
    """Short content hash identifying a dataset."""
    h = hashlib.sha256()
    h.update(json.dumps([_jsonable(i) for i in ds.ids]).encode())
    h.update(np.ascontiguousarray(ds.index).tobytes())
    h.update(np.ascontiguousarray(ds.time, dtype=float).tobytes())
    h.update(np.ascontiguousarray(ds.value, dtype=float).tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class BootRecipe:
    """How a bootstrap sample was drawn from its source dataset.

    Attributes
    ----------
    source : str
        Digest of the source dataset (see :func:`dataset_digest`).
    sample_seed : int
    drawn_ids : tuple
        Source ids in draw order, with multiplicity.
    """

    source: str
    sample_seed: int
    drawn_ids: Tuple[Hashable, ...]

    def reconstruct(self, ds: Dataset) -> Dataset:
        """Rebuild the sample from its source; checks the draw is reproduced."""
        if dataset_digest(ds) != self.source:
            raise ContractError("dataset does not match the recipe's source")
        sample, recipe = boot_sample(ds, self.sample_seed)
        if recipe.drawn_ids != self.drawn_ids:
            raise ContractError("recipe draw could not be reproduced")
        return sample

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.source,
            "sample_seed": int(self.sample_seed),
            "drawn_ids": [_jsonable(i) for i in self.drawn_ids],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BootRecipe":
        return cls(d["source"], int(d["sample_seed"]), tuple(d["drawn_ids"]))


def _suffixed(drawn: Sequence[Hashable]) -> List[Hashable]:
    # first copy keeps its id, later copies become "id#2", "id#3", ...
    seen: Dict[Hashable, int] = {}
    out = []
    for tid in drawn:
        n = seen.get(tid, 0) + 1
        seen[tid] = n
        out.append(tid if n == 1 else f"{tid}#{n}")
    return out


def boot_sample(ds: Dataset, sample_seed: int) -> Tuple[Dataset, BootRecipe]:
    """Draw ``N`` whole trajectories with replacement."""
    n = ds.n_trajectories
    if n < 1:
        raise EmptyDatasetError("cannot bootstrap an empty dataset")
    rng = make_rng(sample_seed)
    idx = rng.integers(0, n, size=n)
    drawn = tuple(ds.ids[i] for i in idx)
    sample = ds.select(drawn, _suffixed(drawn))
    return sample, BootRecipe(dataset_digest(ds), int(sample_seed), drawn)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------
def _safe_fit(spec: MethodSpec, ds: Dataset, seed: int, recipe: Optional[BootRecipe] = None):
    try:
        model = estimate(spec, ds, seed=seed)
    except (TrajclusterError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        return FailedFit(spec, seed, str(e), type(e).__name__, recipe=recipe)
    if recipe is not None:
        model = model.with_recipe(recipe)
    return model


def _run_tasks(tasks: Sequence[Callable[[], Any]], parallel: bool, workers: Optional[int]) -> List[Any]:
    if not parallel or len(tasks) < 2:
        return [t() for t in tasks]
    workers = workers or min(len(tasks), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def run_batch(
    specs: Sequence[MethodSpec],
    ds: Dataset,
    seed: int,
    parallel: bool = False,
    workers: Optional[int] = None,
    names: Optional[Sequence[str]] = None,
) -> ModelList:
    """Estimate every spec on ``ds``; entry ``i`` uses ``derive_seed(seed, "batch", i)``."""
    specs = list(specs)
    if not specs:
        raise ValueError("run_batch needs at least one spec")
    tasks = [
        (lambda s=s, i=i: _safe_fit(s, ds, derive_seed(seed, "batch", i))) for i, s in enumerate(specs)
    ]
    return ModelList(_run_tasks(tasks, parallel, workers), names=names)


def run_rep(
    spec: MethodSpec, ds: Dataset, reps: int, seed: int, parallel: bool = False, workers: Optional[int] = None
) -> ModelList:
    """``reps`` fits of one spec, differing only in their child seed."""
    if int(reps) < 1:
        raise ValueError("reps must be at least 1")
    tasks = [(lambda i=i: _safe_fit(spec, ds, derive_seed(seed, "rep", i))) for i in range(int(reps))]
    return ModelList(_run_tasks(tasks, parallel, workers))


def run_boot(
    spec: MethodSpec,
    ds: Dataset,
    samples: int = DEFAULT_BOOT_SAMPLES,
    seed: int = 1,
    parallel: bool = False,
    workers: Optional[int] = None,
) -> ModelList:
    """Fit ``spec`` on ``samples`` bootstrap samples of ``ds``.

    Sample ``i`` is drawn with ``derive_seed(seed, "boot-sample", i)`` and
    fitted with ``derive_seed(seed, "boot-fit", i)``; each model carries its
    :class:`BootRecipe`.
    """
    if int(samples) < 1:
        raise ValueError("samples must be at least 1")

    def task(i):
        sample, recipe = boot_sample(ds, derive_seed(seed, "boot-sample", i))
        return _safe_fit(spec, sample, derive_seed(seed, "boot-fit", i), recipe)

    tasks = [(lambda i=i: task(i)) for i in range(int(samples))]
    return ModelList(_run_tasks(tasks, parallel, workers))


def reestimate(model: ClusterModel, ds: Dataset) -> ClusterModel:
    """Refit a model from its spec and seed, rebuilding the boot sample if any."""
    data = model.recipe.reconstruct(ds) if model.recipe is not None else ds
    refit = estimate(model.spec, data, seed=model.seed)
    return refit.with_recipe(model.recipe) if model.recipe is not None else refit


def convergence_rate(models: ModelList) -> float:
    return float(np.mean([bool(e.converged) for e in models]))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------
def save_batch(models: ModelList, directory, timing: bool = False) -> List[Dict[str, Any]]:
    """Write one JSON file per model plus ``manifest.json``; returns the manifest."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for k, (name, entry) in enumerate(models.items()):
        item: Dict[str, Any] = {
            "name": name,
            "spec": entry.spec.to_dict(),
            "seed": entry.seed,
        }
        if isinstance(entry, FailedFit):
            item.update(status="failed", error=entry.error, error_type=entry.error_type, model_path=None)
        else:
            path = f"model_{k + 1:03d}.json"
            (out / path).write_text(entry.to_json(timing=timing) + "\n")
            item.update(status="ok", model_path=path)
        if entry.recipe is not None:
            item["recipe"] = entry.recipe.to_dict()
        manifest.append(item)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


__all__ = [
    "BootRecipe",
    "DEFAULT_BOOT_SAMPLES",
    "boot_sample",
    "convergence_rate",
    "dataset_digest",
    "reestimate",
    "run_batch",
    "run_boot",
    "run_rep",
    "save_batch",
]

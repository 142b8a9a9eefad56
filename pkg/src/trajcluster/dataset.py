"""Longitudinal datasets: ingestion, alignment, imputation and simulation.

A :class:`Dataset` holds long-format observations (trajectory id, time,
response) in a canonical order: trajectories sorted by id (numeric ids
sort numerically), observations sorted by time within each trajectory.
Two datasets built from the same rows in any order are therefore equal,
which is what makes every downstream fit independent of input order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Hashable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from trajcluster.errors import (
    AlignmentError,
    DuplicateObservationError,
    ImputationError,
    MissingDataError,
    ParseError,
    SchemaError,
    ShapeError,
)

MISSING_MARKERS = ("", "NA")


def id_sort_key(value: Hashable) -> tuple:
    """Sort key placing numeric-looking ids first, in numeric order."""
    if isinstance(value, (bool, np.bool_)):
        return (1, 0.0, str(value))
    if isinstance(value, (int, float, np.integer, np.floating)):
        return (0, float(value), str(value))
    text = str(value)
    try:
        return (0, float(text), text)
    except ValueError:
        return (1, 0.0, text)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GroundTruth:
    """Reference partition of a dataset's trajectories."""

    assignments: Mapping[Hashable, str]
    group_names: Tuple[str, ...]

    def labels(self, ids: Sequence[Hashable]) -> List[str]:
        return [self.assignments[i] for i in ids]

    def counts(self) -> Dict[str, int]:
        out = {g: 0 for g in self.group_names}
        for g in self.assignments.values():
            out[g] += 1
        return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable long-format longitudinal dataset.

    Use :meth:`from_observations` (or the loaders) rather than the raw
    constructor; it canonicalizes the ordering and checks invariants.

    Attributes
    ----------
    ids : tuple
        Distinct trajectory identifiers in canonical order.
    index : ndarray of int
        For every observation, the position of its trajectory in ``ids``.
    time, value : ndarray of float
        Observation times and responses, grouped by trajectory and sorted
        by time within a trajectory.
    truth : dict, optional
        Ground-truth group label per trajectory id.
    """

    ids: Tuple[Hashable, ...]
    index: np.ndarray
    time: np.ndarray
    value: np.ndarray
    truth: Optional[Mapping[Hashable, str]] = None
    id_col: str = "id"
    time_col: str = "time"
    response_col: str = "value"
    _offsets: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_observations(
        cls,
        ids: Sequence[Hashable],
        times: Sequence[float],
        values: Sequence[float],
        truth: Optional[Mapping[Hashable, str]] = None,
        id_col: str = "id",
        time_col: str = "time",
        response_col: str = "value",
    ) -> "Dataset":
        ids = list(ids)
        times = np.asarray(times, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(-1)
        if not (len(ids) == times.size == values.size):
            raise ShapeError("ids, times and values must have equal length")
        if not np.all(np.isfinite(times)):
            raise ParseError("observation times must be finite")
        distinct = sorted(set(ids), key=id_sort_key)
        pos = {v: k for k, v in enumerate(distinct)}
        index = np.fromiter((pos[v] for v in ids), dtype=np.int64, count=len(ids))
        order = np.lexsort((times, index))
        index, times, values = index[order], times[order], values[order]
        dup = (np.diff(index) == 0) & (np.diff(times) == 0)
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DuplicateObservationError(
                f"duplicate observation for trajectory {distinct[index[k]]!r} at time {times[k]:g}"
            )
        if truth is not None:
            missing = [i for i in distinct if i not in truth]
            if missing:
                raise SchemaError(f"ground truth missing for trajectories {missing[:5]}")
            truth = {i: str(truth[i]) for i in distinct}
        offsets = np.searchsorted(index, np.arange(len(distinct) + 1))
        return cls(
            ids=tuple(distinct),
            index=_readonly(index),
            time=_readonly(times),
            value=_readonly(values),
            truth=truth,
            id_col=id_col,
            time_col=time_col,
            response_col=response_col,
            _offsets=_readonly(offsets),
        )

    # -- basic shape -------------------------------------------------------
    @property
    def n_trajectories(self) -> int:
        return len(self.ids)

    @property
    def n_obs(self) -> int:
        return int(self.value.size)

    @property
    def counts(self) -> np.ndarray:
        """Observation count per trajectory (J_i)."""
        return np.diff(self._offsets)

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets

    def __len__(self) -> int:
        return self.n_trajectories

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.index, other.index)
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.value, other.value)
            and self.truth == other.truth
            and (self.id_col, self.time_col, self.response_col)
            == (other.id_col, other.time_col, other.response_col)
        )

    __hash__ = None

    def trajectory(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Times and values of the i-th trajectory (by position)."""
        a, b = self._offsets[i], self._offsets[i + 1]
        return self.time[a:b], self.value[a:b]

    def iter_trajectories(self) -> Iterator[Tuple[Hashable, np.ndarray, np.ndarray]]:
        for i, tid in enumerate(self.ids):
            t, y = self.trajectory(i)
            yield tid, t, y

    def grid(self) -> np.ndarray:
        """Sorted union of all observation times."""
        return np.unique(self.time)

    def time_range(self) -> Tuple[float, float]:
        return float(self.time.min()), float(self.time.max())

    def ground_truth(self) -> Optional[GroundTruth]:
        if self.truth is None:
            return None
        names = tuple(sorted(set(self.truth.values())))
        return GroundTruth(dict(self.truth), names)

    def select(self, ids: Sequence[Hashable], new_ids: Optional[Sequence[Hashable]] = None) -> "Dataset":
        """Dataset made of the given trajectories (repeats allowed with ``new_ids``)."""
        pos = {v: k for k, v in enumerate(self.ids)}
        new_ids = list(ids) if new_ids is None else list(new_ids)
        if len(new_ids) != len(ids):
            raise ShapeError("new_ids must match ids in length")
        src = np.fromiter((pos[v] for v in ids), dtype=np.int64, count=len(new_ids))
        counts = self.counts[src]
        starts = self.offsets[src]
        # observation rows of every selected trajectory, in selection order
        rows = np.repeat(starts - np.cumsum(counts) + counts, counts) + np.arange(counts.sum())
        labels = np.empty(len(new_ids), dtype=object)
        labels[:] = new_ids
        obs_id = labels[np.repeat(np.arange(len(new_ids)), counts)].tolist()
        t, y = self.time[rows], self.value[rows]
        truth = None
        if self.truth is not None:
            truth = {dst: self.truth[s] for s, dst in zip(ids, new_ids)}
        return Dataset.from_observations(
            obs_id,
            t,
            y,
            truth=truth,
            id_col=self.id_col,
            time_col=self.time_col,
            response_col=self.response_col,
        )

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "ids": [_jsonable(i) for i in self.ids],
            "observations": [
                {"id": _jsonable(self.ids[k]), "time": float(t), "value": float(v)}
                for k, t, v in zip(self.index, self.time, self.value)
            ],
        }
        if self.truth is not None:
            out["truth"] = {str(k): v for k, v in self.truth.items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], **names) -> "Dataset":
        obs = d["observations"]
        truth = d.get("truth")
        ids = [o["id"] for o in obs]
        if truth is not None:
            lookup = {str(k): v for k, v in truth.items()}
            truth = {i: lookup[str(i)] for i in set(ids)}
        return cls.from_observations(
            ids, [o["time"] for o in obs], [o["value"] for o in obs], truth=truth, **names
        )

    def to_csv(self, path, group_col: Optional[str] = "Group") -> None:
        """Write long-format CSV with a header row."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv_text(group_col))

    def to_csv_text(self, group_col: Optional[str] = "Group") -> str:
        header = [self.id_col, self.time_col, self.response_col]
        with_truth = self.truth is not None and group_col is not None
        if with_truth:
            header.append(group_col)
        lines = [",".join(header)]
        for k, t, v in zip(self.index, self.time, self.value):
            tid = self.ids[k]
            row = [str(tid), _fmt(t), _fmt(v)]
            if with_truth:
                row.append(self.truth[tid])
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


@dataclass(frozen=True, eq=False)
class TrajectoryMatrix:
    """Time-aligned wide representation: rows are trajectories."""

    values: np.ndarray
    times: np.ndarray
    ids: Tuple[Hashable, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if values.ndim != 2 or values.shape != (len(self.ids), times.size):
            raise ShapeError(
                f"values shape {values.shape} does not match {len(self.ids)} ids x {times.size} times"
            )
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ShapeError("times must be strictly increasing")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryMatrix):
            return NotImplemented
        return (
            self.ids == other.ids
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------
def load_long_csv(
    path,
    id_col: str = "id",
    time_col: str = "time",
    response_col: str = "value",
    group_col: Optional[str] = None,
) -> Dataset:
    """Read a long-format CSV file into a :class:`Dataset`.

    Rows whose response is empty or ``NA`` are treated as unobserved and
    dropped. Row numbers in error messages count data rows from 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = [id_col, time_col, response_col] + ([group_col] if group_col else [])
        absent = [c for c in wanted if c not in header]
        if absent:
            raise SchemaError(f"missing column(s) {absent}; header is {header}")
        ids, times, values = [], [], []
        groups: Dict[str, str] = {}
        for row_no, row in enumerate(reader, start=1):
            tid = row[id_col]
            if tid is None or tid.strip() in MISSING_MARKERS:
                raise ParseError(f"row {row_no}: missing trajectory id", row=row_no)
            tid = tid.strip()
            raw_t = (row[time_col] or "").strip()
            try:
                t = float(raw_t)
            except ValueError:
                raise ParseError(f"row {row_no}: time {raw_t!r} is not numeric", row=row_no) from None
            if group_col:
                g = (row[group_col] or "").strip()
                if groups.setdefault(tid, g) != g:
                    raise SchemaError(f"row {row_no}: trajectory {tid!r} changes group")
            raw_y = (row[response_col] or "").strip()
            if raw_y in MISSING_MARKERS:
                continue
            try:
                y = float(raw_y)
            except ValueError:
                raise ParseError(
                    f"row {row_no}: response {raw_y!r} is not numeric", row=row_no
                ) from None
            ids.append(tid)
            times.append(t)
            values.append(y)
    truth = None
    if group_col:
        truth = {k: v for k, v in groups.items() if k in set(ids)}
    return Dataset.from_observations(
        ids, times, values, truth=truth, id_col=id_col, time_col=time_col, response_col=response_col
    )


def from_matrix(
    values,
    times: Sequence[float],
    ids: Optional[Sequence[Hashable]] = None,
    truth: Optional[Mapping[Hashable, str]] = None,
    **names,
) -> Dataset:
    """Long-format dataset from an N x J matrix; NaN cells are skipped."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.ndim != 2:
        raise ShapeError("values must be a 2-d matrix")
    n, j = values.shape
    if times.shape != (j,):
        raise ShapeError(f"expected {j} times, got {times.size}")
    if j > 1 and np.any(np.diff(times) <= 0):
        raise ShapeError("times must be strictly increasing")
    if ids is None:
        ids = list(range(1, n + 1))
    if len(ids) != n:
        raise ShapeError(f"expected {n} ids, got {len(ids)}")
    rows, cols = np.nonzero(~np.isnan(values))
    return Dataset.from_observations(
        [ids[r] for r in rows], times[cols], values[rows, cols], truth=truth, **names
    )


def to_aligned_matrix(
    ds: Dataset, impute: Optional[str] = "copy_mean", times: Optional[Sequence[float]] = None
) -> TrajectoryMatrix:
    """Wide matrix over the shared time grid.

    Parameters
    ----------
    impute : {"copy_mean", "fail", None}
        How to handle trajectories lacking an observation at some grid time.
        ``None`` leaves NaN markers in place.
    times : sequence, optional
        Explicit grid. Defaults to the union of observed times; any
        observation off the grid raises :class:`AlignmentError`.
    """
    grid = ds.grid() if times is None else np.asarray(times, dtype=float)
    col = np.searchsorted(grid, ds.time)
    col_clipped = np.minimum(col, max(grid.size - 1, 0))
    if ds.n_obs and (grid.size == 0 or np.any(grid[col_clipped] != ds.time)):
        bad = int(np.flatnonzero((grid.size == 0) | (grid[col_clipped] != ds.time))[0])
        raise AlignmentError(
            f"trajectory {ds.ids[ds.index[bad]]!r} has time {ds.time[bad]:g} off the grid"
        )
    values = np.full((ds.n_trajectories, grid.size), np.nan)
    values[ds.index, col] = ds.value
    m = TrajectoryMatrix(values, grid, ds.ids)
    if impute is None or not np.isnan(values).any():
        return m
    if impute == "fail":
        r = int(np.flatnonzero(np.isnan(values).any(axis=1))[0])
        raise MissingDataError(f"trajectory {ds.ids[r]!r} has missing grid times")
    if impute == "copy_mean":
        return impute_copy_mean(m)
    raise ValueError(f"unknown imputation policy {impute!r}")


def impute_copy_mean(m: TrajectoryMatrix) -> TrajectoryMatrix:
    """Fill gaps by copying the shape of the column-mean trajectory.

    Each trajectory's deviation from the column means is linearly
    interpolated (by column index) across interior gaps and carried from
    the nearest observed column across leading or trailing gaps; the
    filled value is the column mean plus that deviation.
    """
    y = np.array(m.values, dtype=float)
    miss = np.isnan(y)
    if not miss.any():
        return m
    empty_rows = np.flatnonzero(miss.all(axis=1))
    if empty_rows.size:
        raise ImputationError(f"trajectory {m.ids[empty_rows[0]]!r} has no observations")
    observed_per_col = (~miss).sum(axis=0)
    if np.any(observed_per_col == 0):
        c = int(np.flatnonzero(observed_per_col == 0)[0])
        raise ImputationError(f"no trajectory is observed at time {m.times[c]:g}")
    col_mean = np.nanmean(y, axis=0)
    cols = np.arange(y.shape[1])
    for r in np.flatnonzero(miss.any(axis=1)):
        obs = ~miss[r]
        dev = y[r, obs] - col_mean[obs]
        # np.interp holds the end values constant outside the observed span
        y[r, ~obs] = col_mean[~obs] + np.interp(cols[~obs], cols[obs], dev)
    return TrajectoryMatrix(y, m.times, m.ids)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PapConfig:
    """Generator settings for PAP-adherence-like data.

    Each group has a linear mean trajectory ``intercept + slope * (week - 1)``.
    Trajectories add a normal random intercept, a normal random slope, a
    normal random curvature on the centered quadratic
    ``(week - mean)**2 - mean((week - mean)**2)`` and normal measurement
    noise, then get clipped to ``[lower, upper]``.

    ``subtypes`` adds shape subtypes on top of the groups. Each entry is
    ``(rate, curvature, groups)``: a patient from one of ``groups`` (all
    groups when empty) joins the subtype with probability ``rate`` and has
    its curvature shifted by ``curvature``. Positive curvature is a
    mid-therapy slump, negative a mid-therapy peak. One uniform draw per
    patient decides the subtype, so subtypes are exclusive.

    The curvature term is orthogonal to intercept and slope, so it changes
    the shape of individual trajectories without moving their linear trend.
    """

    groups: Tuple[str, ...] = ("Adherent", "Non-adherent", "Improvers")
    weights: Tuple[float, ...] = (0.538, 0.300, 0.162)
    intercepts: Tuple[float, ...] = (6.0, 2.0, 2.2)
    slopes: Tuple[float, ...] = (0.0, -0.02, 0.38)
    intercept_sd: float = 0.5
    slope_sd: float = 0.0
    curvature_sd: float = 0.0
    subtypes: Tuple[Tuple[float, float, Tuple[str, ...]], ...] = ((0.14, 0.22, ()),)
    noise_sd: float = 0.7
    lower: float = 0.0
    upper: float = 9.5


def _group_sizes(n: int, weights: Sequence[float]) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    raw = n * w
    sizes = np.floor(raw).astype(int)
    remainder = n - sizes.sum()
    # largest remainder; ties go to the earlier group
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:remainder]] += 1
    return sizes


def simulate_pap(
    n: int = 301, weeks: int = 13, seed: int = 1, config: PapConfig = PapConfig()
) -> Tuple[Dataset, GroundTruth]:
    """Simulate weekly therapy-usage trajectories from three adherence groups.

    Group sizes are the largest-remainder rounding of ``n * weights``, so
    the Adherent share is 162/301 at the default size. Trajectory ids are
    ``1..n`` with groups randomly interleaved.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    if weeks < 2:
        raise ValueError("weeks must be at least 2")
    rng = np.random.default_rng(seed)
    sizes = _group_sizes(n, config.weights)
    group = np.repeat(np.arange(len(config.groups)), sizes)
    rng.shuffle(group)
    week = np.arange(1, weeks + 1, dtype=float)
    b0 = np.asarray(config.intercepts)[group] + rng.normal(0.0, config.intercept_sd, n)
    b1 = np.asarray(config.slopes)[group] + rng.normal(0.0, config.slope_sd, n)
    b2 = rng.normal(0.0, config.curvature_sd, n)
    u = rng.random(n)
    lo = np.zeros(n)
    for rate, curvature, members in config.subtypes:
        eligible = np.isin(group, [config.groups.index(g) for g in members]) if members else np.ones(n, bool)
        rate = np.where(eligible, rate, 0.0)
        b2 = b2 + curvature * ((u >= lo) & (u < lo + rate))
        lo = lo + rate
    q = (week - week.mean()) ** 2
    q = q - q.mean()
    y = b0[:, None] + b1[:, None] * (week - 1.0)[None, :] + b2[:, None] * q[None, :]
    y = y + rng.normal(0.0, config.noise_sd, (n, weeks))
    y = np.clip(y, config.lower, config.upper)
    ids = list(range(1, n + 1))
    truth = {i: config.groups[g] for i, g in zip(ids, group)}
    ds = from_matrix(
        y, week, ids, truth=truth, id_col="Patient", time_col="Week", response_col="UsageHours"
    )
    return ds, GroundTruth(truth, tuple(config.groups))

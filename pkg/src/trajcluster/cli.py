"""Command-line interface.

Subcommands mirror the exploratory workflow: ``simulate`` a dataset,
``validate`` a configuration, ``fit`` one model, ``sweep`` methods over a
range of cluster counts, ``compare`` fitted models, ``plot`` data or
cluster trajectories, and ``rep`` / ``boot`` for stability analysis.

Settings can come from a flat ``key = value`` config file (``--config``);
command-line flags override it. Exit codes: 0 success, 1 usage or
configuration error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from trajcluster import harness
from trajcluster.dataset import Dataset, load_long_csv, simulate_pap
from trajcluster.errors import (
    ConfigError,
    DataError,
    EmptyDatasetError,
    IncompatiblePartitionError,
    TrajclusterError,
)
from trajcluster.method import ENV_ID, ENV_TIME, estimate, get_method, spec_new
from trajcluster.metrics import (
    external_metric,
    internal_metric,
    list_metric_names,
)
from trajcluster.model import ClusterModel, FailedFit, ModelList, partition_model
from trajcluster.svg import plot_cluster_trajectories, plot_metric, plot_trajectories

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_METRICS = ("WMAE", "Dunn", "ASW", "BIC")
RUN_KEYS = {
    "data",
    "id",
    "time",
    "response",
    "group",
    "method",
    "clusters",
    "seed",
    "parallel",
    "workers",
    "out",
    "metrics",
    "samples",
    "reps",
}


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def parse_value(text: str) -> Any:
    """Interpret a config or ``--arg`` value: JSON literal, else plain string."""
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return json.loads(s)
    except ValueError:
        return s


def read_config(path) -> Dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out: Dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}") from None
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def parse_clusters(text) -> List[int]:
    """``"3"``, ``"1-6"`` or ``"2,3,5"`` -> ascending list of cluster counts."""
    if isinstance(text, int):
        ks = [text]
    else:
        ks = []
        for part in str(text).split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part:
                a, b = part.split("-", 1)
                try:
                    ks.extend(range(int(a), int(b) + 1))
                except ValueError:
                    raise UsageError(f"bad cluster range {part!r}") from None
            else:
                try:
                    ks.append(int(part))
                except ValueError:
                    raise UsageError(f"bad cluster count {part!r}") from None
    if not ks:
        raise UsageError("cluster range is empty")
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise UsageError("cluster range must be ascending")
    if ks[0] < 1:
        raise UsageError("cluster counts must be positive")
    return ks


def _split_list(value) -> List[str]:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        items = []
        for v in value:
            items.extend(_split_list(v))
        return items
    return [v.strip() for v in str(value).split(",") if v.strip()]


def resolve(args: argparse.Namespace) -> Dict[str, Any]:
    """Merge config file, environment defaults and flags into one run config."""
    conf: Dict[str, Any] = {}
    method_args: Dict[str, Any] = {}
    if getattr(args, "config", None):
        for k, v in read_config(args.config).items():
            if k in RUN_KEYS:
                conf[k] = v
            else:
                method_args[k] = parse_value(v)
    conf.setdefault("id", os.environ.get(ENV_ID, "id"))
    conf.setdefault("time", os.environ.get(ENV_TIME, "time"))
    conf.setdefault("response", "value")
    for key in RUN_KEYS:
        v = getattr(args, key, None)
        if v is not None and v != []:
            conf[key] = v
    for item in getattr(args, "arg", None) or []:
        if "=" not in item:
            raise UsageError(f"--arg expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        method_args[k.strip()] = parse_value(v)
    conf["method_args"] = method_args
    conf["seed"] = int(conf.get("seed", 1))
    if isinstance(conf.get("parallel"), str):
        conf["parallel"] = bool(parse_value(conf["parallel"]))
    return conf


def _load_data(conf) -> Dataset:
    path = conf.get("data")
    if not path:
        raise UsageError("no input data given (--data)")
    if not Path(path).is_file():
        raise DataError(f"data file not found: {path}")
    if not Path(path).read_text(encoding="utf-8").strip():
        raise EmptyDatasetError(f"{path} has no rows")
    return load_long_csv(path, conf["id"], conf["time"], conf["response"], conf.get("group"))


def _spec(conf, method: str, k: Optional[int] = None):
    kw = dict(conf["method_args"])
    kw.update(id=conf["id"], time=conf["time"], response=conf["response"])
    if k is not None:
        kw["nClusters"] = k
    return spec_new(method, kw)


def _out_dir(conf, default: str) -> Path:
    out = Path(conf.get("out") or default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory {out}: {e.strerror}") from None
    return out


def _csv_num(v) -> str:
    if v is None:
        return "NA"
    v = float(v)
    return "NA" if np.isnan(v) else repr(v)


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_simulate(args) -> int:
    ds, _ = simulate_pap(n=args.n, weeks=args.weeks, seed=args.seed)
    text = ds.to_csv_text(group_col="Group")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    conf = resolve(args)
    ds = _load_data(conf)
    method = get_method(conf.get("method", "kml"))
    for k in parse_clusters(conf.get("clusters", 2)):
        spec = _spec(conf, method.name, k)
        data = method.prepare_data(spec, ds)
        spec = method.compose(spec, ds)
        method.validate(spec, ds, data)
    print(f"ok: {ds.n_trajectories} trajectories, {ds.n_obs} observations")
    return EXIT_OK


def cmd_fit(args) -> int:
    conf = resolve(args)
    ks = parse_clusters(conf.get("clusters", 2))
    if len(ks) != 1:
        raise UsageError("fit takes a single cluster count; use sweep for a range")
    ds = _load_data(conf)
    model = estimate(_spec(conf, conf.get("method", "kml"), ks[0]), ds, seed=conf["seed"])
    out = _out_dir(conf, ".")
    (out / "model.json").write_text(model.to_json() + "\n", encoding="utf-8")
    summary = model.summary()
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    sys.stdout.write(summary)
    return EXIT_OK


def _metric_names(conf) -> List[str]:
    names = _split_list(conf.get("metrics")) or list(DEFAULT_METRICS)
    known = set(list_metric_names("internal"))
    bad = [n for n in names if n not in known]
    if bad:
        raise UsageError(f"unknown metric(s) {bad}; choose from {sorted(known)}")
    return names


def _write_metric_table(path: Path, models: ModelList, names: Sequence[str]) -> List[List[Any]]:
    rows = []
    for entry in models:
        status = "failed" if isinstance(entry, FailedFit) else "ok"
        vals = internal_metric(entry, names)
        rows.append([entry.spec.method_name, entry.spec.n_clusters, entry.seed, status] + [vals[n] for n in names])
    lines = [",".join(["method", "nClusters", "seed", "status"] + list(names))]
    for r in rows:
        lines.append(",".join([str(r[0]), str(r[1]), str(r[2]), r[3]] + [_csv_num(v) for v in r[4:]]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows


def cmd_sweep(args) -> int:
    conf = resolve(args)
    methods = _split_list(conf.get("method")) or ["kml"]
    ks = parse_clusters(conf.get("clusters", "1-6"))
    names = _metric_names(conf)
    ds = _load_data(conf)
    specs = [_spec(conf, m, k) for m in methods for k in ks]
    models = harness.run_batch(specs, ds, seed=conf["seed"], parallel=bool(conf.get("parallel")))
    out = _out_dir(conf, "sweep")
    harness.save_batch(models, out / "models")
    rows = _write_metric_table(out / "metrics.csv", models, names)
    for j, n in enumerate(names):
        pts = [(r[0], r[1], r[4 + j]) for r in rows]
        (out / f"metric_{n}.svg").write_text(plot_metric(pts, n), encoding="utf-8")
    for f in models.failures:
        _warn(f"{f.spec.method_name} K={f.spec.n_clusters}: {f.error}")
    print(f"{len(rows)} fits, {len(models.failures)} failed; table written to {out / 'metrics.csv'}")
    return EXIT_OK


def _load_model(path) -> ClusterModel:
    try:
        return ClusterModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as e:
        raise DataError(f"cannot read model {path}: {e.strerror}") from None
    except (ValueError, KeyError) as e:
        raise DataError(f"{path} is not a model file: {e}") from None


def _model_names(paths: Sequence[str]) -> List[str]:
    stems = [Path(p).stem for p in paths]
    # "fit" always writes model.json, so a bare stem says nothing
    for candidates in (
        [] if "model" in stems else stems,
        [Path(p).resolve().parent.name for p in paths],
        [f"{Path(p).resolve().parent.name}/{Path(p).stem}" for p in paths],
    ):
        if candidates and len(set(candidates)) == len(candidates):
            return candidates
    return [str(p) for p in paths]


def _safe_external(a, b, metric, label) -> Tuple[float, int]:
    try:
        return external_metric(a, b, metric), 0
    except IncompatiblePartitionError as e:
        _warn(f"{label}: {e}")
        return float("nan"), 1


def cmd_compare(args) -> int:
    conf = resolve(args)
    metrics = _split_list(args.metrics) or ["adjustedRand"]
    known = set(list_metric_names("external"))
    bad = [m for m in metrics if m not in known]
    if bad:
        raise UsageError(f"unknown external metric(s) {bad}; choose from {sorted(known)}")
    models = [_load_model(p) for p in args.models]
    names = args.names.split(",") if args.names else _model_names(args.models)
    if len(names) != len(models):
        raise UsageError("--names must give one name per model")
    reference = None
    if args.reference:
        reference = _load_model(args.reference)
    elif args.truth:
        conf["data"] = args.truth
        group = conf.get("group") or "Group"
        ds = load_long_csv(args.truth, conf["id"], conf["time"], conf["response"], group)
        reference = partition_model(ds, ds.truth)
    if len(models) < 2 and reference is None:
        raise UsageError("compare needs at least two models, or one model and a reference")
    out = _out_dir(conf, "compare")
    warnings = 0
    if len(models) >= 2:
        for metric in metrics:
            lines = ["," + ",".join(names[:-1])]
            for i in range(1, len(models)):
                cells = []
                for j in range(i):
                    v, w = _safe_external(models[i], models[j], metric, f"{names[i]} vs {names[j]}")
                    warnings += w
                    cells.append(_csv_num(v))
                cells += [""] * (len(models) - 1 - i)
                lines.append(",".join([names[i]] + cells))
            (out / f"pairwise_{metric}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
            print(f"# {metric}")
            print("\n".join(lines))
    if reference is not None:
        lines = [",".join(["model"] + metrics)]
        for name, m in zip(names, models):
            cells = []
            for metric in metrics:
                v, w = _safe_external(m, reference, metric, f"{name} vs reference")
                warnings += w
                cells.append(_csv_num(v))
            lines.append(",".join([name] + cells))
        (out / "reference.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        print("# reference")
        print("\n".join(lines))
    if warnings:
        _warn(f"{warnings} comparison(s) reported as NA")
    return EXIT_OK


def cmd_plot(args) -> int:
    conf = resolve(args)
    if args.model:
        model = _load_model(args.model)
        if args.mode == "cluster-trajectories":
            svg = plot_cluster_trajectories(
                model, xlabel=model.spec.get("time", "time"), ylabel=model.spec.get("response", "value")
            )
        else:
            ds = _load_data(conf)
            svg = plot_trajectories(ds, model.named_assignments())
    else:
        if args.mode == "cluster-trajectories":
            raise UsageError("cluster-trajectories mode needs --model")
        ds = _load_data(conf)
        svg = plot_trajectories(ds, ds.truth)
    out = Path(args.out or "plot.svg")
    out.write_text(svg, encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def _summaries(path: Path, models: ModelList, names: Sequence[str]) -> None:
    table = models.metric(names)
    lines = ["metric,min,median,mean,max,n_na"]
    for n in names:
        v = np.asarray(table[n], dtype=float)
        ok = v[~np.isnan(v)]
        stats = [ok.min(), np.median(ok), ok.mean(), ok.max()] if ok.size else [np.nan] * 4
        lines.append(",".join([n] + [_csv_num(s) for s in stats] + [str(int(np.isnan(v).sum()))]))
    text = "\n".join(lines) + "\n"
    path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _stability(args, kind: str) -> int:
    conf = resolve(args)
    ks = parse_clusters(conf.get("clusters", 2))
    if len(ks) != 1:
        raise UsageError(f"{kind} takes a single cluster count")
    names = _metric_names(conf)
    ds = _load_data(conf)
    spec = _spec(conf, conf.get("method", "kml"), ks[0])
    parallel = bool(conf.get("parallel"))
    if kind == "boot":
        models = harness.run_boot(spec, ds, int(conf.get("samples", harness.DEFAULT_BOOT_SAMPLES)), conf["seed"], parallel)
    else:
        models = harness.run_rep(spec, ds, int(conf.get("reps", 5)), conf["seed"], parallel)
    out = _out_dir(conf, kind)
    harness.save_batch(models, out)
    print(f"converged: {harness.convergence_rate(models)!r}")
    _summaries(out / "summary.csv", models, names)
    for f in models.failures:
        _warn(f"{kind} fit failed: {f.error}")
    return EXIT_OK


def cmd_boot(args) -> int:
    return _stability(args, "boot")


def cmd_rep(args) -> int:
    return _stability(args, "rep")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="flat key = value config file")
    if data:
        p.add_argument("--data", help="long-format CSV file")
    p.add_argument("--id", help=f"trajectory id column (default ${ENV_ID} or 'id')")
    p.add_argument("--time", help=f"time column (default ${ENV_TIME} or 'time')")
    p.add_argument("--response", help="response column (default 'value')")
    p.add_argument("--group", help="column with reference group labels")
    p.add_argument("--out", help="output path")


def _method_opts(p: argparse.ArgumentParser, many: bool = False) -> None:
    p.add_argument("--method", action="append" if many else "store", help="method name" + (" (repeatable)" if many else ""))
    p.add_argument("--clusters", help="cluster count, range 1-6 or list 2,3,5")
    p.add_argument("--seed", type=int, help="master seed (default 1)")
    p.add_argument("--arg", action="append", default=[], metavar="KEY=VALUE", help="method argument override")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trajcluster", description="Cluster longitudinal trajectories.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a simulated PAP-adherence dataset")
    p.add_argument("--n", type=int, default=301)
    p.add_argument("--weeks", type=int, default=13)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check data and method settings without fitting")
    _common(p)
    _method_opts(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit", help="fit one model; writes model.json and summary.txt")
    _common(p)
    _method_opts(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="fit methods over a range of cluster counts")
    _common(p)
    _method_opts(p, many=True)
    p.add_argument("--metrics", help="comma-separated internal metrics")
    p.add_argument("--parallel", action="store_true", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="external metrics between fitted models")
    _common(p, data=False)
    p.add_argument("models", nargs="+", help="model JSON files")
    p.add_argument("--metrics", help="comma-separated external metrics")
    p.add_argument("--names", help="comma-separated model names")
    p.add_argument("--reference", help="reference model JSON")
    p.add_argument("--truth", help="CSV with a reference group column (see --group)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="SVG of trajectories or cluster trajectories")
    _common(p)
    p.add_argument("--model", help="model JSON")
    p.add_argument("--mode", choices=("trajectories", "cluster-trajectories"), default="trajectories")
    p.set_defaults(func=cmd_plot)

    for name, func, count in (("boot", cmd_boot, "--samples"), ("rep", cmd_rep, "--reps")):
        p = sub.add_parser(name, help=f"{'bootstrap' if name == 'boot' else 'repeated'} estimation")
        _common(p)
        _method_opts(p)
        p.add_argument(count, type=int)
        p.add_argument("--metrics", help="comma-separated internal metrics")
        p.add_argument("--parallel", action="store_true", default=None)
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("missing command; see --help")
        return args.func(args)
    except EmptyDatasetError as e:
        print(f"error: empty dataset: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, TrajclusterError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # pragma: no cover - safety net
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

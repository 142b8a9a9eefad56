"""Per-trajectory stratification rules.

A rule is a small expression evaluated once per trajectory, e.g.
``"mean > 4"``, ``"mean(UsageHours) > 4"``, ``"cut(slope, 3)"`` or
``"cut(mean, [0, 3, 6, 10])"``. Supported terms:

* trajectory summaries ``mean``, ``median``, ``min``, ``max``, ``sd``,
  ``first``, ``last``, ``slope`` (OLS slope on time) and ``n``, written
  bare or applied to the response column name;
* numbers, arithmetic, comparisons, ``and`` / ``or`` / ``not``;
* ``cut(x, bins)`` with an integer number of equal-width bins over the
  observed range or an explicit list of edges.

Parsing uses :mod:`ast`; nothing is passed to ``eval``.
"""

from __future__ import annotations

import ast
import operator
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from trajcluster.dataset import Dataset
from trajcluster.errors import RuleError


def _slope(t, y):
    if t.size < 2 or np.ptp(t) == 0:
        return 0.0
    tc = t - t.mean()
    return float(tc @ (y - y.mean()) / (tc @ tc))


SUMMARIES = {
    "mean": lambda t, y: float(np.mean(y)),
    "median": lambda t, y: float(np.median(y)),
    "min": lambda t, y: float(np.min(y)),
    "max": lambda t, y: float(np.max(y)),
    "sd": lambda t, y: float(np.std(y, ddof=1)) if y.size > 1 else 0.0,
    "first": lambda t, y: float(y[0]),
    "last": lambda t, y: float(y[-1]),
    "slope": _slope,
    "n": lambda t, y: float(y.size),
}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}
_CMPOPS = {
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
}


def cut(x: np.ndarray, bins: Union[int, List[float]]) -> Tuple[np.ndarray, List[str]]:
    """Interval codes for ``x``, plus one label per interval.

    Intervals are right-closed ``(a, b]`` except the first, which also
    includes its left edge.
    """
    x = np.asarray(x, dtype=float)
    if np.isscalar(bins) or isinstance(bins, (int, np.integer)):
        n = int(bins)
        if n < 1:
            raise RuleError("cut() needs at least one bin")
        lo, hi = float(np.min(x)), float(np.max(x))
        if hi == lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, n + 1)
    else:
        edges = np.asarray(bins, dtype=float)
        if edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise RuleError("cut() edges must be increasing")
    codes = np.searchsorted(edges, x, side="left") - 1
    codes[x == edges[0]] = 0
    if np.any((codes < 0) | (codes >= edges.size - 1)):
        raise RuleError("cut() edges do not cover every value")
    labels = [
        f"{'[' if i == 0 else '('}{edges[i]:.4g},{edges[i + 1]:.4g}]" for i in range(edges.size - 1)
    ]
    return codes, labels


class _Evaluator:
    def __init__(self, ds: Dataset):
        self.ds = ds
        self.levels: Optional[List] = None
        self._cache = {}

    def summary(self, name: str) -> np.ndarray:
        if name not in self._cache:
            fn = SUMMARIES[name]
            self._cache[name] = np.array([fn(t, y) for _, t, y in self.ds.iter_trajectories()])
        return self._cache[name]

    def visit(self, node):
        if isinstance(node, ast.Expression):
            return self.visit(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in SUMMARIES:
                return self.summary(node.id)
            raise RuleError(f"unknown variable {node.id!r} in rule")
        if isinstance(node, ast.UnaryOp):
            v = self.visit(node.operand)
            if isinstance(node.op, ast.USub):
                return -v
            if isinstance(node.op, ast.Not):
                return np.logical_not(v)
            raise RuleError("unsupported unary operator")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](self.visit(node.left), self.visit(node.right))
        if isinstance(node, ast.BoolOp):
            vals = [np.asarray(self.visit(v), dtype=bool) for v in node.values]
            fn = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
            out = vals[0]
            for v in vals[1:]:
                out = fn(out, v)
            return out
        if isinstance(node, ast.Compare):
            left = self.visit(node.left)
            out = None
            for op, comp in zip(node.ops, node.comparators):
                if type(op) not in _CMPOPS:
                    raise RuleError("unsupported comparison")
                right = self.visit(comp)
                r = _CMPOPS[type(op)](left, right)
                out = r if out is None else np.logical_and(out, r)
                left = right
            return out
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            fname = node.func.id
            if fname == "cut":
                if len(node.args) != 2:
                    raise RuleError("cut() takes a value and a bin specification")
                x = self.visit(node.args[0])
                spec = node.args[1]
                if isinstance(spec, (ast.List, ast.Tuple)):
                    bins = [self.visit(e) for e in spec.elts]
                else:
                    bins = self.visit(spec)
                    if float(bins) != int(bins):
                        raise RuleError("cut() bin count must be an integer")
                    bins = int(bins)
                codes, labels = cut(x, bins)
                self.levels = list(range(len(labels)))
                self.level_labels = labels
                return codes
            if fname in SUMMARIES:
                if len(node.args) != 1 or not isinstance(node.args[0], ast.Name):
                    raise RuleError(f"{fname}() takes the response column name")
                col = node.args[0].id
                if col != self.ds.response_col:
                    raise RuleError(f"unknown variable {col!r} in rule")
                return self.summary(fname)
            raise RuleError(f"unknown function {fname!r} in rule")
        raise RuleError(f"unsupported expression: {ast.dump(node)[:60]}")


def evaluate_rule(
    rule: Union[str, Callable], ds: Dataset
) -> Tuple[np.ndarray, List, Optional[List[str]]]:
    """Stratum value per trajectory, the ordered stratum levels, and labels.

    ``rule`` may also be a callable ``f(times, values) -> scalar``.
    """
    labels = None
    if callable(rule):
        vals = np.array([rule(t, y) for _, t, y in ds.iter_trajectories()])
        levels = None
    else:
        try:
            tree = ast.parse(str(rule), mode="eval")
        except SyntaxError as e:
            raise RuleError(f"cannot parse rule {rule!r}: {e.msg}") from None
        ev = _Evaluator(ds)
        vals = ev.visit(tree)
        levels = ev.levels
        labels = getattr(ev, "level_labels", None)
        if np.ndim(vals) == 0:
            vals = np.full(ds.n_trajectories, vals)
    vals = np.asarray(vals)
    if vals.shape != (ds.n_trajectories,):
        raise RuleError("rule must give one value per trajectory")
    if levels is None:
        uniq = np.unique(vals)
        levels = [v.item() if hasattr(v, "item") else v for v in uniq]
    return vals, levels, labels

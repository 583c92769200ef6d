"""Isolation forest over indicator feature vectors and the asset-health index.

Implemented from scratch: each tree isolates a uniform subsample of size
psi by recursive random axis-aligned splits.  The anomaly score of a point
is s = 2^(-E[h]/c(psi)) where h is the traversal depth plus c(size) at the
reached external node, E averages over trees, and c(n) is the expected
unsuccessful-search path length of a random binary search tree.

Training is deterministic for a fixed seed: tree t draws from an RNG
seeded with (seed, t), so serial and parallel construction produce
identical models.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError

try:                                   # optional JIT for month-scale scoring
    import numba
except ImportError:                    # pragma: no cover - numpy path below
    numba = None

EULER_GAMMA = 0.5772156649

DEFAULT_FEATURES = tuple(f"{s}.{d}.{ind}" for s in ("G", "Q", "T")
                         for d in ("x", "y", "z") for ind in ("eri", "eci"))


def avg_path_length(n: int) -> float:
    """c(n): expected unsuccessful-search depth in a BST of n points."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1.0) + EULER_GAMMA) - 2.0 * (n - 1.0) / n


def _c_values(sizes: np.ndarray) -> np.ndarray:
    """Vectorised avg_path_length over an array of node sizes."""
    n = np.asarray(sizes, dtype=float)
    out = np.zeros_like(n)
    out[n == 2] = 1.0
    big = n > 2
    nb = n[big]
    out[big] = 2.0 * (np.log(nb - 1.0) + EULER_GAMMA) - 2.0 * (nb - 1.0) / nb
    return out


@dataclass
class IsolationTree:
    """Flat array tree: node i is a leaf when feature[i] < 0."""

    feature: np.ndarray      # int32, -1 for external nodes
    threshold: np.ndarray    # float64 split values (0.0 at leaves)
    left: np.ndarray         # int32 child index (-1 at leaves)
    right: np.ndarray
    size: np.ndarray         # int32 training points that reached the node
    _leaf_c: np.ndarray | None = None   # cached c(size) per node

    def n_nodes(self) -> int:
        return len(self.feature)

    def path_lengths(self, x: np.ndarray) -> np.ndarray:
        """Vectorised traversal depth + c(size) for each row of x."""
        if self._leaf_c is None:
            self._leaf_c = _c_values(self.size)
        n = len(x)
        node = np.zeros(n, dtype=np.int32)
        depth = np.zeros(n, dtype=np.float64)
        active = np.arange(n)
        while active.size:
            nd = node[active]
            at_leaf = self.feature[nd] < 0
            if at_leaf.any():
                leaves = active[at_leaf]
                depth[leaves] += self._leaf_c[node[leaves]]
                keep = ~at_leaf
                active = active[keep]
                nd = nd[keep]
            if not active.size:
                break
            go_left = x[active, self.feature[nd]] < self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            depth[active] += 1.0
        return depth


@dataclass
class IsolationForestModel:
    trees: list[IsolationTree]
    psi: int
    n_trees: int
    seed: int
    feature_names: tuple[str, ...]
    score_threshold: float | None = None
    training_daily_mean: float | None = None

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_json(self) -> str:
        payload = {
            "version": 1,
            "psi": self.psi,
            "n_trees": self.n_trees,
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "score_threshold": self.score_threshold,
            "training_daily_mean": self.training_daily_mean,
            "trees": [{
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "size": t.size.tolist(),
            } for t in self.trees],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @staticmethod
    def from_json(text: str) -> "IsolationForestModel":
        p = json.loads(text)
        if p.get("version") != 1:
            raise ConfigError(f"unsupported model version {p.get('version')}")
        trees = [IsolationTree(np.asarray(t["feature"], dtype=np.int32),
                               np.asarray(t["threshold"], dtype=np.float64),
                               np.asarray(t["left"], dtype=np.int32),
                               np.asarray(t["right"], dtype=np.int32),
                               np.asarray(t["size"], dtype=np.int32))
                 for t in p["trees"]]
        return IsolationForestModel(trees, int(p["psi"]), int(p["n_trees"]),
                                    int(p["seed"]), tuple(p["feature_names"]),
                                    p.get("score_threshold"),
                                    p.get("training_daily_mean"))

    @staticmethod
    def load(path: str | Path) -> "IsolationForestModel":
        return IsolationForestModel.from_json(Path(path).read_text())


def _build_tree(x: np.ndarray, rng: np.random.Generator, height_limit: int) -> IsolationTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    size: list[int] = []

    def add_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(0)
        return len(feature) - 1

    def grow(rows: np.ndarray, depth: int) -> int:
        node = add_node()
        size[node] = len(rows)
        if len(rows) <= 1 or depth >= height_limit:
            return node
        sub = x[rows]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if candidates.size == 0:       # all duplicates: nothing to isolate
            return node
        q = int(candidates[rng.integers(candidates.size)])
        while True:
            p = rng.uniform(lo[q], hi[q])
            if lo[q] < p < hi[q]:      # strictly inside, both sides non-empty
                break
        go_left = sub[:, q] < p
        feature[node] = q
        threshold[node] = float(p)
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(np.arange(len(x)), 0)
    return IsolationTree(np.asarray(feature, dtype=np.int32),
                         np.asarray(threshold, dtype=np.float64),
                         np.asarray(left, dtype=np.int32),
                         np.asarray(right, dtype=np.int32),
                         np.asarray(size, dtype=np.int32))


def train(features: np.ndarray, psi: int = 256, n_trees: int = 100, seed: int = 0,
          feature_names: Sequence[str] | None = None) -> IsolationForestModel:
    """Fit an isolation forest on (n, d) feature rows."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.size == 0:
        raise InsufficientDataError("no feature vectors to train on")
    if not np.all(np.isfinite(x)):
        raise ConfigError("non-finite feature value in training set")
    n = len(x)
    if n < psi:
        psi = n
    height_limit = max(1, int(math.ceil(math.log2(psi)))) if psi > 1 else 1
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"f{i}" for i in range(x.shape[1]))
    if len(names) != x.shape[1]:
        raise ConfigError("feature_names arity does not match the data")

    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        rows = rng.choice(n, size=psi, replace=False) if psi < n else np.arange(n)
        trees.append(_build_tree(x[rows], rng, height_limit))
    return IsolationForestModel(trees, psi, n_trees, seed, names)


class _PackedForest:
    """All trees concatenated into flat arrays for batch traversal."""

    def __init__(self, model: "IsolationForestModel"):
        feats, thrs, lefts, rights, leafc, roots = [], [], [], [], [], []
        offset = 0
        for t in model.trees:
            roots.append(offset)
            feats.append(t.feature)
            thrs.append(t.threshold)
            shift = np.where(t.left >= 0, t.left + offset, -1)
            lefts.append(shift)
            rights.append(np.where(t.right >= 0, t.right + offset, -1))
            leafc.append(_c_values(t.size))
            offset += t.n_nodes()
        self.feature = np.concatenate(feats).astype(np.int32)
        self.threshold = np.concatenate(thrs).astype(np.float64)
        self.left = np.concatenate(lefts).astype(np.int32)
        self.right = np.concatenate(rights).astype(np.int32)
        self.leaf_c = np.concatenate(leafc).astype(np.float64)
        self.roots = np.asarray(roots, dtype=np.int32)


if numba is not None:
    @numba.njit(parallel=True, cache=False)
    def _total_ratio_jit(x, feature, threshold, left, right, leaf_c, roots, cpsi):  # pragma: no cover
        n = x.shape[0]
        out = np.empty(n)
        for i in numba.prange(n):
            total = 0.0
            for t in range(roots.shape[0]):
                node = roots[t]
                depth = 0.0
                while feature[node] >= 0:
                    if x[i, feature[node]] < threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                    depth += 1.0
                total += (depth + leaf_c[node]) / cpsi
            out[i] = total
        return out


def _total_path_ratios(model: "IsolationForestModel", x: np.ndarray) -> np.ndarray:
    """Sum over trees of h(x)/c(psi).

    Normalising per tree keeps the h = c(psi) anchor exact in floats: each
    ratio is then exactly 1.0 and the mean stays exactly 1.0.
    """
    cpsi = avg_path_length(model.psi)
    if numba is not None and len(x) * len(model.trees) >= 2_000_000:
        packed = getattr(model, "_packed", None)
        if packed is None:
            packed = _PackedForest(model)
            model._packed = packed
        return _total_ratio_jit(np.ascontiguousarray(x), packed.feature, packed.threshold,
                                packed.left, packed.right, packed.leaf_c, packed.roots,
                                cpsi)
    total = np.zeros(len(x))
    for tree in model.trees:
        total += tree.path_lengths(x) / cpsi
    return total


def score(model: IsolationForestModel, x: np.ndarray) -> np.ndarray:
    """Anomaly scores in (0, 1) for (n, d) rows; 0.5 when E[h] equals c(psi)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.n_features:
        raise ConfigError(
            f"feature arity {x.shape[1]} does not match model ({model.n_features})")
    s = np.power(2.0, -_total_path_ratios(model, x) / len(model.trees))
    return s[0] if single else s


def calibrate_score_threshold(model: IsolationForestModel, training_scores: np.ndarray,
                              percentile: float = 0.9999) -> float:
    """Nearest-rank percentile of training scores becomes the flag cutoff."""
    v = np.asarray(training_scores, dtype=float)
    if len(v) == 0:
        raise InsufficientDataError("no training scores")
    k = min(max(int(math.ceil(percentile * len(v))), 1), len(v))
    tau = float(np.partition(v, k - 1)[k - 1])
    model.score_threshold = tau
    return tau


@dataclass(frozen=True)
class AnomalyFlag:
    time: int
    score: float

    def to_json(self) -> str:
        return json.dumps({"t": self.time, "score": self.score})


def score_stream(model: IsolationForestModel, times: np.ndarray,
                 features: np.ndarray) -> list[AnomalyFlag]:
    """Flag the seconds whose score reaches the calibrated threshold."""
    if model.score_threshold is None:
        raise ConfigError("model has no calibrated score threshold")
    s = score(model, features)
    hits = np.flatnonzero(s >= model.score_threshold)
    return [AnomalyFlag(int(times[i]), float(s[i])) for i in hits]


# ---------------------------------------------------------------------------
# Asset health

@dataclass(frozen=True)
class AssetHealthPoint:
    day: int          # epoch day (UTC)
    value: float      # percent of the training-period daily average

    @property
    def date(self) -> str:
        import datetime as dt
        return dt.datetime.fromtimestamp(self.day * 86400, dt.timezone.utc).strftime("%Y-%m-%d")


def daily_log_sum(flags: Sequence[AnomalyFlag]) -> dict[int, float]:
    """Per-day sum of |ln score| over flagged seconds."""
    out: dict[int, float] = {}
    for f in flags:
        day = f.time // 86400
        out[day] = out.get(day, 0.0) + abs(math.log(max(f.score, 1e-300)))
    return out


def training_daily_mean(flags: Sequence[AnomalyFlag], day0: int, day1: int) -> float:
    """Mean daily |ln s| sum over the training period [day0, day1) epoch days.

    Days without flags count as zero; the mean over the whole period is the
    100% reference of the asset-health index.
    """
    if day1 <= day0:
        raise ConfigError("empty training period")
    sums = daily_log_sum(flags)
    total = sum(v for d, v in sums.items() if day0 <= d < day1)
    return total / (day1 - day0)


def asset_health(flags: Sequence[AnomalyFlag], mean_daily: float,
                 day0: int, day1: int) -> list[AssetHealthPoint]:
    """Daily |ln score| sums as a percentage of the training average."""
    if mean_daily is None or mean_daily <= 0.0:
        raise ConfigError("training_daily_mean must be positive")
    sums = daily_log_sum(flags)
    return [AssetHealthPoint(d, 100.0 * sums.get(d, 0.0) / mean_daily)
            for d in range(day0, day1)]


def health_rows(points: Sequence[AssetHealthPoint]) -> list[str]:
    return [f"{p.date},{float(p.value)!r}" for p in points]

"""Gradient boosting for binary log loss over regression trees.

Each stage fits a depth-limited regression tree to the residual y - p with
plain squared-error split gain; leaf values take one Newton step
sum(residual) / sum(p*(1-p)) with a floored denominator. Split thresholds are
midpoints between consecutive distinct sorted feature values, so fitting is
exact and deterministic at this data scale. Training rows are brought into a
canonical order first, which makes the fit invariant to input row order.

Routing rule everywhere: x[feature] <= threshold goes left.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError

NEWTON_DENOM_FLOOR = 1e-12
MIN_SPLIT_GAIN = 1e-12


@dataclass
class GbmConfig:
    n_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise DataError("n_trees must be >= 0")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")
        if self.max_depth <= 0 or self.min_samples_leaf <= 0:
            raise DataError("max_depth and min_samples_leaf must be positive")


@dataclass
class DecisionTree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.size

    def predict(self, X):
        """Leaf value reached by each row of X."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if self.feature[node] < 0:
                out[idx] = self.value[node]
                continue
            go_left = X[idx, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], idx[go_left]))
            stack.append((self.right[node], idx[~go_left]))
        return out


@dataclass
class TreeEnsemble:
    base_margin: float
    trees: list[DecisionTree]
    learning_rate: float
    n_features: int
    stage_losses: list[float] | None = field(default=None, repr=False)

    @property
    def n_trees(self):
        return len(self.trees)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _log_loss(y, margins):
    # mean binary cross-entropy from margins, numerically stable
    return float(np.mean(np.logaddexp(0.0, margins) - y * margins))


class _TreeBuilder:
    def __init__(self, X, max_depth, min_samples_leaf):
        self.X = X
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        # presorted row order per feature; node searches filter it by membership
        self.order = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]

    def build(self, residual, hessian):
        self.residual = residual
        self.hessian = hessian
        self.nodes = []  # dicts, frozen to arrays at the end
        self._grow(np.arange(self.X.shape[0]), depth=0)
        return DecisionTree(
            feature=np.asarray([nd["feature"] for nd in self.nodes], dtype=np.int32),
            threshold=np.asarray([nd["threshold"] for nd in self.nodes], dtype=np.float64),
            left=np.asarray([nd["left"] for nd in self.nodes], dtype=np.int32),
            right=np.asarray([nd["right"] for nd in self.nodes], dtype=np.int32),
            value=np.asarray([nd["value"] for nd in self.nodes], dtype=np.float64),
            n_samples=np.asarray([nd["n_samples"] for nd in self.nodes], dtype=np.int32),
            cover=np.asarray([nd["cover"] for nd in self.nodes], dtype=np.float64),
        )

    def _leaf_value(self, rows):
        denom = max(float(self.hessian[rows].sum()), NEWTON_DENOM_FLOOR)
        return float(self.residual[rows].sum()) / denom

    def _grow(self, rows, depth):
        node_id = len(self.nodes)
        node = {
            "feature": -1,
            "threshold": 0.0,
            "left": -1,
            "right": -1,
            "value": self._leaf_value(rows),
            "n_samples": rows.size,
            "cover": float(self.hessian[rows].sum()),
        }
        self.nodes.append(node)
        if depth >= self.max_depth or rows.size < 2 * self.min_leaf or rows.size < 2:
            return node_id
        split = self._best_split(rows)
        if split is None:
            return node_id
        feat, thr = split
        go_left = self.X[rows, feat] <= thr
        node["feature"] = feat
        node["threshold"] = thr
        node["value"] = 0.0
        node["left"] = self._grow(rows[go_left], depth + 1)
        node["right"] = self._grow(rows[~go_left], depth + 1)
        return node_id

    def _best_split(self, rows):
        member = np.zeros(self.X.shape[0], dtype=bool)
        member[rows] = True
        n = rows.size
        r_total = float(self.residual[rows].sum())
        parent_score = r_total * r_total / n
        best = None  # (gain, feature, threshold)
        for j in range(self.X.shape[1]):
            idx = self.order[j][member[self.order[j]]]
            v = self.X[idx, j]
            if v[0] == v[-1]:
                continue
            r = self.residual[idx]
            prefix = np.cumsum(r)
            # candidate boundaries between distinct consecutive values
            cut = np.flatnonzero(v[1:] != v[:-1]) + 1  # left part size
            cut = cut[(cut >= self.min_leaf) & (cut <= n - self.min_leaf)]
            if cut.size == 0:
                continue
            sl = prefix[cut - 1]
            gains = sl * sl / cut + (r_total - sl) ** 2 / (n - cut) - parent_score
            k = int(np.argmax(gains))
            if gains[k] > MIN_SPLIT_GAIN and (best is None or gains[k] > best[0]):
                thr = 0.5 * (v[cut[k] - 1] + v[cut[k]])
                best = (float(gains[k]), j, float(thr))
        if best is None:
            return None
        return best[1], best[2]


def fit(X, y, config, record_loss=False):
    """Fit a boosted ensemble on feature matrix X (n, p) and 0/1 labels y."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DataError(f"incompatible shapes X {X.shape}, y {y.shape}")
    if y.min() == y.max():
        raise DataError("training labels are single-class")

    # canonical row order: fit becomes invariant to the caller's row order
    canon = np.lexsort(tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1)) + (y,))
    X = np.ascontiguousarray(X[canon])
    y = y[canon]

    p_bar = float(y.mean())
    base_margin = float(np.log(p_bar / (1.0 - p_bar)))
    margins = np.full(y.size, base_margin)
    builder = _TreeBuilder(X, config.max_depth, config.min_samples_leaf)
    trees = []
    losses = [_log_loss(y, margins)] if record_loss else None
    for _ in range(config.n_trees):
        p = _sigmoid(margins)
        tree = builder.build(residual=y - p, hessian=p * (1.0 - p))
        trees.append(tree)
        margins = margins + config.learning_rate * tree.predict(X)
        if record_loss:
            losses.append(_log_loss(y, margins))
    return TreeEnsemble(
        base_margin=base_margin,
        trees=trees,
        learning_rate=config.learning_rate,
        n_features=X.shape[1],
        stage_losses=losses,
    )


def _check_vector(ensemble, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != ensemble.n_features:
        raise DataError(f"expected a feature vector of length {ensemble.n_features}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite feature value")
    return x


def predict_margin(ensemble, x):
    """Additive margin (log-odds) for one feature vector."""
    x = _check_vector(ensemble, x)
    return float(predict_margin_batch(ensemble, x[None, :])[0])


def predict_margin_batch(ensemble, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != ensemble.n_features:
        raise DataError(f"expected (n, {ensemble.n_features}) matrix, got shape {X.shape}")
    margins = np.full(X.shape[0], ensemble.base_margin)
    for tree in ensemble.trees:
        margins += ensemble.learning_rate * tree.predict(X)
    return margins


def predict_proba(ensemble, x):
    return float(_sigmoid(np.asarray(predict_margin(ensemble, x))))


def predict_proba_batch(ensemble, X):
    return _sigmoid(predict_margin_batch(ensemble, X))


# -------------------------------------------------------- text serialization
# One ensemble per file. Header lines, then one line per node:
#   tree <t>
#   <node_id> <feature> <threshold> <left> <right> <value> <n_samples> <cover>
# feature -1 marks a leaf. Documented in README.md.

def to_text(ensemble):
    lines = [
        f"base_margin {ensemble.base_margin!r}",
        f"learning_rate {ensemble.learning_rate!r}",
        f"n_features {ensemble.n_features}",
        f"n_trees {ensemble.n_trees}",
    ]
    for t, tree in enumerate(ensemble.trees):
        lines.append(f"tree {t}")
        for i in range(tree.n_nodes):
            lines.append(
                f"{i} {tree.feature[i]} {float(tree.threshold[i])!r} {tree.left[i]} "
                f"{tree.right[i]} {float(tree.value[i])!r} {tree.n_samples[i]} "
                f"{float(tree.cover[i])!r}"
            )
    return "\n".join(lines) + "\n"


def from_text(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        base_margin = float(lines[0].split()[1])
        learning_rate = float(lines[1].split()[1])
        n_features = int(lines[2].split()[1])
        n_trees = int(lines[3].split()[1])
    except (IndexError, ValueError) as e:
        raise DataError(f"malformed ensemble header: {e}") from e
    trees = []
    pos = 4
    for _ in range(n_trees):
        if pos >= len(lines) or not lines[pos].startswith("tree "):
            raise DataError("malformed ensemble body: missing tree marker")
        pos += 1
        rows = []
        while pos < len(lines) and not lines[pos].startswith("tree "):
            parts = lines[pos].split()
            if len(parts) != 8:
                raise DataError(f"malformed node line: {lines[pos]!r}")
            rows.append(parts)
            pos += 1
        rows.sort(key=lambda pr: int(pr[0]))
        trees.append(
            DecisionTree(
                feature=np.asarray([int(r[1]) for r in rows], dtype=np.int32),
                threshold=np.asarray([float(r[2]) for r in rows], dtype=np.float64),
                left=np.asarray([int(r[3]) for r in rows], dtype=np.int32),
                right=np.asarray([int(r[4]) for r in rows], dtype=np.int32),
                value=np.asarray([float(r[5]) for r in rows], dtype=np.float64),
                n_samples=np.asarray([int(r[6]) for r in rows], dtype=np.int32),
                cover=np.asarray([float(r[7]) for r in rows], dtype=np.float64),
            )
        )
    return TreeEnsemble(
        base_margin=base_margin,
        trees=trees,
        learning_rate=learning_rate,
        n_features=n_features,
    )

"""Random forest for binary labels, written from scratch.

Each tree is grown on a bootstrap sample of the training rows. One third of
the drawn sample is set aside as out-of-bag and the tree is fitted on the
remaining in-bag draws (duplicates enter as integer weights). Splits
consider a random subset of features at every node and are chosen by Gini
or entropy impurity over histogram bins: each feature is cut at most
``max_bins - 1`` candidate thresholds taken from training-set quantiles,
which is exact whenever a feature has at most ``max_bins`` distinct values.

Trees are grown breadth-first and tree ``i`` draws its randomness only from
``(seed, i)``. Consequently a forest of ``n`` trees is a prefix of any larger
forest with the same seed, and a tree grown to depth ``d`` truncated at
``d' < d`` is exactly the tree grown to depth ``d'``. Grid search relies on
both facts.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

GINI = 0
ENTROPY = 1
_CRITERIA = {"gini": GINI, "entropy": ENTROPY}


def resolve_max_features(strategy, n_features: int) -> int:
    if strategy in ("all", "auto", None):
        return n_features
    if strategy == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if strategy == "log2":
        return max(1, int(math.log2(n_features)))
    if isinstance(strategy, int) and 1 <= strategy <= n_features:
        return strategy
    raise ValueError(f"bad max_features {strategy!r}")


def bin_thresholds(X, max_bins=64):
    """Candidate split thresholds per feature, as a padded (F, max_bins-1) array."""
    n, F = X.shape
    thr = np.full((F, max_bins - 1), np.inf)
    n_thr = np.zeros(F, dtype=np.int64)
    levels = np.linspace(0, 1, max_bins + 1)[1:-1]
    for f in range(F):
        u = np.unique(X[:, f])
        if u.size <= max_bins:
            t = (u[:-1] + u[1:]) / 2.0
        else:
            q = np.unique(np.quantile(X[:, f], levels, method="lower"))
            t = q[q < u[-1]]
        thr[f, : t.size] = t
        n_thr[f] = t.size
    return thr, n_thr


def bin_codes(X, thr, n_thr):
    """Code of each value: number of thresholds strictly below it (uint8)."""
    n, F = X.shape
    codes = np.empty((n, F), dtype=np.uint8)
    for f in range(F):
        codes[:, f] = np.searchsorted(thr[f, : n_thr[f]], X[:, f], side="left")
    return codes


@nb.njit(cache=True)
def _impurity(c0, c1, criterion, xlogx):
    # weighted impurity n * H; entropy in nats via a table of k * log(k)
    n = c0 + c1
    if n <= 0.0:
        return 0.0
    if criterion == 0:
        return n - (c0 * c0 + c1 * c1) / n
    return xlogx[int(n)] - xlogx[int(c0)] - xlogx[int(c1)]


@nb.njit(cache=True)
def _grow_tree(codes, y, w, n_thr, thr, max_depth, n_sub, criterion, seed):
    np.random.seed(seed)
    n, F = codes.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes)
    depth = np.zeros(max_nodes, dtype=np.int32)
    start = np.zeros(max_nodes, dtype=np.int64)
    end = np.zeros(max_nodes, dtype=np.int64)

    m = 0
    for r in range(n):
        if w[r] > 0:
            m += 1
    rows = np.empty(m, dtype=np.int64)
    k = 0
    for r in range(n):
        if w[r] > 0:
            rows[k] = r
            k += 1

    total_w = 0.0
    for r in range(n):
        total_w += w[r]
    xlogx = np.zeros(int(total_w) + 2)
    for k in range(1, xlogx.shape[0]):
        xlogx[k] = k * math.log(k)
    perm = np.arange(F)
    max_b = thr.shape[1] + 1
    hist = np.zeros((F, max_b, 2))
    n_nodes = 1
    start[0] = 0
    end[0] = m
    node = 0
    while node < n_nodes:
        s, e = start[node], end[node]
        c0 = 0.0
        c1 = 0.0
        for i in range(s, e):
            r = rows[i]
            if y[r] == 1:
                c1 += w[r]
            else:
                c0 += w[r]
        tot = c0 + c1
        value[node] = c1 / tot if tot > 0 else 0.0
        if depth[node] >= max_depth or c0 == 0.0 or c1 == 0.0 or tot < 2.0:
            node += 1
            continue
        parent = _impurity(c0, c1, criterion, xlogx)
        for i in range(n_sub):
            j = np.random.randint(i, F)
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
        best = parent - 1e-12 * tot
        best_f = -1
        best_k = -1
        for ii in range(n_sub):
            f = perm[ii]
            for b in range(n_thr[f] + 1):
                hist[ii, b, 0] = 0.0
                hist[ii, b, 1] = 0.0
        # one pass over the node's rows fills every candidate feature's histogram
        for i in range(s, e):
            r = rows[i]
            yr = y[r]
            wr = w[r]
            for ii in range(n_sub):
                hist[ii, codes[r, perm[ii]], yr] += wr
        for ii in range(n_sub):
            f = perm[ii]
            nb_f = n_thr[f] + 1
            l0 = 0.0
            l1 = 0.0
            for b in range(nb_f - 1):
                h0 = hist[ii, b, 0]
                h1 = hist[ii, b, 1]
                if h0 + h1 == 0.0:
                    continue  # same partition as the previous cut
                l0 += h0
                l1 += h1
                r0 = c0 - l0
                r1 = c1 - l1
                if r0 + r1 == 0.0:
                    break
                imp = _impurity(l0, l1, criterion, xlogx) + _impurity(r0, r1, criterion, xlogx)
                if imp < best:
                    best = imp
                    best_f = f
                    best_k = b
        if best_f < 0:
            node += 1
            continue
        # partition rows[s:e] so codes <= best_k come first
        i = s
        j = e - 1
        while i <= j:
            if codes[rows[i], best_f] <= best_k:
                i += 1
            else:
                tmp2 = rows[i]
                rows[i] = rows[j]
                rows[j] = tmp2
                j -= 1
        feature[node] = best_f
        threshold[node] = thr[best_f, best_k]
        lc = n_nodes
        rc = n_nodes + 1
        left[node] = lc
        right[node] = rc
        start[lc], end[lc], depth[lc] = s, i, depth[node] + 1
        start[rc], end[rc], depth[rc] = i, e, depth[node] + 1
        n_nodes += 2
        node += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), depth[:n_nodes].copy())


@nb.njit(cache=True)
def _predict(X, offsets, feature, threshold, left, right, value, depth, n_trees, depth_limit):
    n = X.shape[0]
    out = np.zeros(n)
    for r in range(n):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0 and depth[base + node] < depth_limit:
                f = feature[base + node]
                if X[r, f] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[r] = acc / n_trees
    return out


@nb.njit(cache=True)
def _predict_grid(X, offsets, feature, threshold, left, right, value, depth,
                  depth_limits, checkpoints):
    """Mean probability for every (depth limit, tree-count checkpoint) pair."""
    n = X.shape[0]
    nd = depth_limits.shape[0]
    nc = checkpoints.shape[0]
    out = np.zeros((nd, nc, n))
    acc = np.zeros((nd, n))
    max_d = 0
    for d in range(nd):
        if depth_limits[d] > max_d:
            max_d = depth_limits[d]
    path = np.zeros(max_d + 1, dtype=np.int64)
    c = 0
    for t in range(checkpoints[nc - 1]):
        base = offsets[t]
        for r in range(n):
            node = 0
            lvl = 0
            path[0] = 0
            while feature[base + node] >= 0 and lvl < max_d:
                f = feature[base + node]
                if X[r, f] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
                lvl += 1
                path[lvl] = node
            for d in range(nd):
                lim = depth_limits[d] if depth_limits[d] < lvl else lvl
                acc[d, r] += value[base + path[lim]]
        while c < nc and checkpoints[c] == t + 1:
            for d in range(nd):
                for r in range(n):
                    out[d, c, r] = acc[d, r] / (t + 1)
            c += 1
    return out


class RandomForest:
    """Bagged CART ensemble predicting the mean leaf probability of class 1."""

    def __init__(self, n_estimators=100, max_features="sqrt", max_depth=8, criterion="gini",
                 seed=0, max_bins=64, oob_fraction=1 / 3, oob_score=False):
        if criterion not in _CRITERIA:
            raise ValueError(f"unknown criterion {criterion!r}")
        if max_bins < 2 or max_bins > 256:
            raise ValueError("max_bins must lie in [2, 256]")
        self.n_estimators = int(n_estimators)
        self.max_features = max_features
        self.max_depth = int(max_depth)
        self.criterion = criterion
        self.seed = int(seed)
        self.max_bins = int(max_bins)
        self.oob_fraction = oob_fraction
        self.oob_score = oob_score
        self.constant_ = None

    def _tree_sample(self, t, n):
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(t,)))
        draw = rng.integers(0, n, n)
        held = rng.permutation(n)[: int(n * self.oob_fraction)]
        in_bag = np.ones(n, dtype=bool)
        in_bag[held] = False
        w = np.bincount(draw[in_bag], minlength=n).astype(np.float64)
        oob = np.zeros(n, dtype=bool)
        oob[draw[held]] = True
        oob &= w == 0
        return w, oob, int(rng.integers(0, 2**31 - 1))

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y).astype(np.int64)
        if X.shape[0] < 2:
            raise ValueError("need at least 2 rows")
        classes = np.unique(y)
        self.n_features_ = X.shape[1]
        if classes.size < 2:
            self.constant_ = float(classes[0]) if classes.size else 0.0
            self.degenerate_ = True
            return self
        self.degenerate_ = False
        self.constant_ = None
        n = X.shape[0]
        thr, n_thr = bin_thresholds(X, self.max_bins)
        codes = bin_codes(X, thr, n_thr)
        n_sub = resolve_max_features(self.max_features, self.n_features_)
        crit = _CRITERIA[self.criterion]
        trees = []
        oob_sum = np.zeros(n)
        oob_cnt = np.zeros(n)
        for t in range(self.n_estimators):
            w, oob, tree_seed = self._tree_sample(t, n)
            tree = _grow_tree(codes, y, w, n_thr, thr, self.max_depth, n_sub, crit, tree_seed)
            trees.append(tree)
            if self.oob_score and oob.any():
                rows = np.flatnonzero(oob)
                p = self._predict_trees(X[rows], [tree], self.max_depth)
                oob_sum[rows] += p
                oob_cnt[rows] += 1
        self._pack(trees)
        if self.oob_score:
            from ..metrics import auc

            seen = oob_cnt > 0
            self.oob_auc_ = auc(y[seen], oob_sum[seen] / oob_cnt[seen])
        return self

    def _pack(self, trees):
        sizes = np.array([t[0].size for t in trees], dtype=np.int64)
        self.offsets_ = np.r_[0, np.cumsum(sizes)[:-1]].astype(np.int64)
        names = ("feature", "threshold", "left", "right", "value", "depth")
        for i, name in enumerate(names):
            setattr(self, name + "_", np.concatenate([t[i] for t in trees]))

    @staticmethod
    def _predict_trees(X, trees, depth_limit):
        sizes = np.array([t[0].size for t in trees], dtype=np.int64)
        offsets = np.r_[0, np.cumsum(sizes)[:-1]].astype(np.int64)
        arrays = [np.concatenate([t[i] for t in trees]) for i in range(6)]
        return _predict(np.ascontiguousarray(X, dtype=np.float64), offsets, *arrays,
                        len(trees), depth_limit)

    @property
    def n_trees_(self):
        return 0 if self.constant_ is not None else self.offsets_.size

    def predict_proba(self, X, n_trees=None, depth_limit=None):
        """Probability of class 1 per row (mean over trees of the leaf class-1 fraction)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        if self.constant_ is not None:
            return np.full(X.shape[0], self.constant_)
        n_trees = self.n_trees_ if n_trees is None else int(n_trees)
        depth_limit = self.max_depth if depth_limit is None else int(depth_limit)
        return _predict(X, self.offsets_, self.feature_, self.threshold_, self.left_, self.right_,
                        self.value_, self.depth_, n_trees, depth_limit)

    def predict_grid(self, X, depth_limits, checkpoints):
        """``out[d, c]`` = probabilities of the first ``checkpoints[c]`` trees truncated at ``depth_limits[d]``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        depth_limits = np.asarray(depth_limits, dtype=np.int64)
        checkpoints = np.asarray(sorted(checkpoints), dtype=np.int64)
        if self.constant_ is not None:
            return np.full((depth_limits.size, checkpoints.size, X.shape[0]), self.constant_)
        if checkpoints[-1] > self.n_trees_ or depth_limits.max() > self.max_depth:
            raise ValueError("grid exceeds the fitted forest")
        return _predict_grid(X, self.offsets_, self.feature_, self.threshold_, self.left_,
                             self.right_, self.value_, self.depth_, depth_limits, checkpoints)

    def tree_probas(self, X):
        """(n_trees, n_rows) per-tree probabilities."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return np.stack([
            _predict(X, self.offsets_[t:t + 1], self.feature_, self.threshold_, self.left_,
                     self.right_, self.value_, self.depth_, 1, self.max_depth)
            for t in range(self.n_trees_)
        ])

    def get_state(self) -> dict:
        state = {
            "n_estimators": self.n_estimators, "max_features": self.max_features,
            "max_depth": self.max_depth, "criterion": self.criterion, "seed": self.seed,
            "max_bins": self.max_bins, "oob_fraction": self.oob_fraction,
            "n_features": self.n_features_, "constant": self.constant_,
        }
        arrays = {}
        if self.constant_ is None:
            for name in ("offsets", "feature", "threshold", "left", "right", "value", "depth"):
                arrays[name] = getattr(self, name + "_")
        return state, arrays

    @classmethod
    def from_state(cls, state, arrays):
        rf = cls(state["n_estimators"], state["max_features"], state["max_depth"],
                 state["criterion"], state["seed"], state["max_bins"], state["oob_fraction"])
        rf.n_features_ = state["n_features"]
        rf.constant_ = state["constant"]
        rf.degenerate_ = rf.constant_ is not None
        for name, arr in arrays.items():
            setattr(rf, name + "_", arr)
        return rf

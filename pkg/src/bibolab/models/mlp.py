"""Multi-layer perceptron for binary labels in plain numpy.

ReLU hidden layers, a single sigmoid output unit and mean binary
cross-entropy loss. Training uses mini-batches and Adam moment estimates;
inputs are z-scored with training-set statistics stored in the model.
"""

from __future__ import annotations

import numpy as np


class TrainingDiverged(RuntimeError):
    pass


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_params(sizes, rng):
    """Glorot-uniform weights and zero biases for layer widths ``sizes``."""
    W, b = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        W.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        b.append(np.zeros(fan_out))
    return W, b


def forward(W, b, X):
    """Pre-activation logits of the output unit and the hidden activations."""
    acts = [X]
    h = X
    for k in range(len(W) - 1):
        h = np.maximum(h @ W[k] + b[k], 0.0)
        acts.append(h)
    z = (h @ W[-1] + b[-1])[:, 0]
    return z, acts


def loss_and_grads(W, b, X, y):
    """Mean cross-entropy and its gradients w.r.t. every weight and bias."""
    z, acts = forward(W, b, X)
    m = X.shape[0]
    loss = float(np.mean(_softplus(z) - y * z))
    delta = ((_sigmoid(z) - y) / m)[:, None]
    gW = [None] * len(W)
    gb = [None] * len(b)
    for k in range(len(W) - 1, -1, -1):
        gW[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ W[k].T) * (acts[k] > 0)
    return loss, gW, gb


class MLP:
    def __init__(self, hidden=(50,), lr_schedule="constant", lr=1e-3, max_epochs=500,
                 batch_size=32, patience=20, tol=1e-4, seed=0):
        if lr_schedule not in ("constant", "invscaling"):
            raise ValueError(f"unknown learning-rate schedule {lr_schedule!r}")
        self.hidden = tuple(int(h) for h in hidden)
        self.lr_schedule = lr_schedule
        self.lr = float(lr)
        self.max_epochs = int(max_epochs)
        self.batch_size = int(batch_size)
        self.patience = int(patience)
        self.tol = float(tol)
        self.seed = int(seed)

    @property
    def n_params(self) -> int:
        return n_params(self.hidden, getattr(self, "n_features_", 0))

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.n_features_ = X.shape[1]
        self.mu_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd_ = np.where(sd > 0, sd, 1.0)
        Z = (X - self.mu_) / self.sd_
        rng = np.random.default_rng(self.seed)
        W, b = init_params((X.shape[1], *self.hidden, 1), rng)
        params = W + b
        m1 = [np.zeros_like(p) for p in params]
        m2 = [np.zeros_like(p) for p in params]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        best = np.inf
        stale = 0
        self.loss_curve_ = []
        n = Z.shape[0]
        for epoch in range(1, self.max_epochs + 1):
            lr = self.lr if self.lr_schedule == "constant" else self.lr / epoch ** 0.5
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, self.batch_size):
                idx = order[s:s + self.batch_size]
                loss, gW, gb = loss_and_grads(W, b, Z[idx], y[idx])
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} (learning rate {lr:g})")
                total += loss * idx.size
                step += 1
                c1 = 1.0 - beta1 ** step
                c2 = 1.0 - beta2 ** step
                for p, g, a, v in zip(params, gW + gb, m1, m2):
                    a *= beta1
                    a += (1 - beta1) * g
                    v *= beta2
                    v += (1 - beta2) * g * g
                    p -= lr * (a / c1) / (np.sqrt(v / c2) + eps)
            epoch_loss = total / n
            self.loss_curve_.append(epoch_loss)
            if epoch_loss < best - self.tol:
                best = epoch_loss
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        self.W_, self.b_ = W, b
        self.n_epochs_ = len(self.loss_curve_)
        return self

    def decision_function(self, X):
        Z = (np.asarray(X, dtype=np.float64) - self.mu_) / self.sd_
        return forward(self.W_, self.b_, Z)[0]

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))

    def get_state(self):
        state = {"hidden": list(self.hidden), "lr_schedule": self.lr_schedule, "lr": self.lr,
                 "max_epochs": self.max_epochs, "batch_size": self.batch_size,
                 "patience": self.patience, "tol": self.tol, "seed": self.seed,
                 "n_layers": len(self.W_)}
        arrays = {"mu": self.mu_, "sd": self.sd_}
        for k, (w, bb) in enumerate(zip(self.W_, self.b_)):
            arrays[f"W{k}"] = w
            arrays[f"b{k}"] = bb
        return state, arrays

    @classmethod
    def from_state(cls, state, arrays):
        m = cls(state["hidden"], state["lr_schedule"], state["lr"], state["max_epochs"],
                state["batch_size"], state["patience"], state["tol"], state["seed"])
        m.mu_, m.sd_ = arrays["mu"], arrays["sd"]
        m.W_ = [arrays[f"W{k}"] for k in range(state["n_layers"])]
        m.b_ = [arrays[f"b{k}"] for k in range(state["n_layers"])]
        m.n_features_ = m.W_[0].shape[0]
        return m


def n_params(hidden, n_features) -> int:
    sizes = (n_features, *hidden, 1)
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

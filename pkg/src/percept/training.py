"""Losses, the Adam optimizer, dataset splitting, early stopping and the training loop."""

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .layers import NON_TRAINABLE
from .tensor import Prng

log = logging.getLogger(__name__)

CLAMP = 1e-7

# ---------------------------------------------------------------- losses


def binary_cross_entropy(p, y):
    """Mean binary cross-entropy and its gradient with respect to ``p``."""
    p = np.clip(np.asarray(p, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    y = np.asarray(y, dtype=np.float64)
    n = p.shape[0] if p.ndim else 1
    loss = -np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)) / n
    grad = (-y / p + (1.0 - y) / (1.0 - p)) / n
    return float(loss), grad


def categorical_cross_entropy(p, y):
    """Mean cross-entropy of row-stochastic ``p`` [N,K] against one-hot ``y``.

    The returned gradient is with respect to the logits of the softmax that
    produced ``p``: ``(p - y) / N``.
    """
    p = np.asarray(p)
    y = np.asarray(y)
    if p.ndim != 2 or p.shape != y.shape:
        raise ValueError(f"expected matching [N,K] arrays, got {p.shape} and {y.shape}")
    p64 = p.astype(np.float64)
    if np.abs(p64.sum(axis=1) - 1.0).max() > 1e-5:
        raise ValueError("probability rows must sum to 1 within 1e-5")
    n = p.shape[0]
    loss = -np.sum(y * np.log(np.clip(p64, CLAMP, 1.0))) / n
    grad = (p64 - y) / n
    return float(loss), grad


def one_hot_rows(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"class index outside 0..{n_classes - 1}")
    return np.eye(n_classes)[labels]


def sparse_categorical_cross_entropy(p, labels):
    """Cross-entropy with integer class targets; same value as the one-hot form."""
    p = np.asarray(p)
    return categorical_cross_entropy(p, one_hot_rows(labels, p.shape[-1]))


LOSSES = {
    # the eye task keeps a 2-way softmax, so its binary objective goes through the fused categorical path
    "binary": lambda p, labels: categorical_cross_entropy(p, one_hot_rows(labels, p.shape[-1])),
    "categorical": lambda p, labels: categorical_cross_entropy(p, one_hot_rows(labels, p.shape[-1])),
    "sparse": sparse_categorical_cross_entropy,
}


# ---------------------------------------------------------------- Adam


class Adam:
    """Adam with bias-corrected moments, one state slot per parameter tensor."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        """Update ``params`` (list of name->array dicts) in place from matching ``grads``."""
        if len(params) != len(grads):
            raise ValueError("params and grads must have one entry per layer")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, (layer, layer_grads) in enumerate(zip(params, grads)):
            for name, p in layer.items():
                if name in NON_TRAINABLE or name not in layer_grads:
                    continue
                g = np.asarray(layer_grads[name], dtype=np.float64)
                if g.shape != p.shape:
                    raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
                key = (i, name)
                if key not in self.m:
                    self.m[key] = np.zeros(p.shape)
                    self.v[key] = np.zeros(p.shape)
                m = self.m[key]
                v = self.v[key]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
                layer[name] = (p.astype(np.float64) - update).astype(p.dtype)


# ---------------------------------------------------------------- splitting


def split_dataset(labels, fractions=(0.7, 0.15, 0.15), seed=0, n_classes=None):
    """Stratified deterministic split into sorted (train, val, test) index arrays.

    Each class is shuffled on its own stream. Validation and test receive
    ``floor(f * N)`` items overall, spread over classes by largest remainder so
    every class keeps its share within one item; train takes what is left.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    classes = np.unique(labels)
    if n_classes is not None and n < n_classes:
        raise ValueError(f"{n} items cannot cover {n_classes} classes")
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    members = [np.flatnonzero(labels == c) for c in classes]
    counts = np.array([m.size for m in members])

    def allocate(frac, available):
        target = math.floor(frac * n + 1e-9)
        exact = frac * counts
        take = np.minimum(np.floor(exact + 1e-9).astype(np.int64), available)
        short = target - int(take.sum())
        order = sorted(range(len(counts)), key=lambda k: (-(exact[k] - take[k]), k))
        for k in order:
            if short <= 0:
                break
            if take[k] < available[k]:
                take[k] += 1
                short -= 1
        return take

    n_val = allocate(fractions[1], counts)
    n_test = allocate(fractions[2], counts - n_val)
    prng = Prng(seed)
    train, val, test = [], [], []
    for idx, nv, nt in zip(members, n_val, n_test):
        shuffled = idx[prng.spawn().permutation(idx.size)]
        val.append(shuffled[:nv])
        test.append(shuffled[nv:nv + nt])
        train.append(shuffled[nv + nt:])
    return tuple(np.sort(np.concatenate(part)) for part in (train, val, test))


# ---------------------------------------------------------------- early stopping


def snapshot(params):
    return [{k: v.copy() for k, v in layer.items()} for layer in params]


class EarlyStopper:
    """Halts training once validation loss stops improving.

    An epoch improves when ``loss < best_loss - min_delta``; every other epoch
    is a strike and training stops when strikes exceed ``patience``. A
    non-finite loss stops immediately. ``best_params`` always holds the
    snapshot to restore.
    """

    def __init__(self, patience=5, min_delta=0.0, initial_params=None):
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = math.inf
        self.best_epoch = 0
        self.best_params = snapshot(initial_params) if initial_params is not None else None
        self.strikes = 0
        self.epoch = 0
        self.diagnostic = None

    def update(self, val_loss, params):
        """Record one epoch; returns True when training should stop."""
        self.epoch += 1
        if not math.isfinite(val_loss):
            self.diagnostic = f"non-finite validation loss {val_loss} at epoch {self.epoch}"
            return True
        if val_loss < self.best_loss - self.min_delta:
            self.best_loss = val_loss
            self.best_epoch = self.epoch
            self.best_params = snapshot(params)
            self.strikes = 0
            return False
        self.strikes += 1
        return self.strikes > self.patience


# ---------------------------------------------------------------- fit


@dataclass
class FitResult:
    history: list = field(default_factory=list)
    stopped_early: bool = False
    nan_stop: bool = False
    best_epoch: int = 0
    diagnostic: str = None


HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def evaluate(network, x, y, loss_kind, batch_size=256):
    """Loss and accuracy of ``network`` in inference mode."""
    if len(x) == 0:
        return math.nan, math.nan
    p = network.predict(x, batch_size)
    loss, _ = LOSSES[loss_kind](p, y)
    return loss, float(np.mean(np.argmax(p, axis=1) == y))


def fit(network, train, val, loss_kind, optimizer, epochs, batch_size, prng, stopper=None, augment=None):
    """Mini-batch training with a full validation pass after each epoch.

    ``train`` and ``val`` are ``(x, labels)`` pairs. ``augment(batch, prng)``,
    when given, transforms each training batch. ``network.params`` ends as the
    stopper's best snapshot if stopping triggered, the last epoch's otherwise.
    """
    x_train, y_train = train
    x_val, y_val = val
    n = len(x_train)
    if n == 0:
        raise ValueError("training set is empty")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if stopper is not None and len(x_val) == 0:
        raise ValueError("early stopping needs a validation set")
    y_train = np.asarray(y_train, dtype=np.int64)
    y_val = np.asarray(y_val, dtype=np.int64)
    result = FitResult()
    for epoch in range(1, epochs + 1):
        order = prng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb = x_train[idx]
            if augment is not None:
                xb = augment(xb, prng)
            out, caches = network.forward(xb, train=True, prng=prng)
            loss, dlogits = LOSSES[loss_kind](out, y_train[idx])
            if not math.isfinite(loss):
                result.nan_stop = True
                result.diagnostic = f"non-finite training loss at epoch {epoch}"
                break
            _, grads = network.backward(caches, dlogits, fused_softmax=True)
            optimizer.step(network.params, grads)
            total_loss += loss * len(idx)
            correct += int(np.sum(np.argmax(out, axis=1) == y_train[idx]))
        if result.nan_stop:
            warnings.warn(result.diagnostic, RuntimeWarning)
            if stopper is not None and stopper.best_params is not None:
                network.params = snapshot(stopper.best_params)
            break
        val_loss, val_acc = evaluate(network, x_val, y_val, loss_kind)
        row = {
            "epoch": epoch,
            "train_loss": total_loss / n,
            "train_acc": correct / n,
            "val_loss": val_loss,
            "val_acc": val_acc,
        }
        result.history.append(row)
        log.info("epoch %d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f", *row.values())
        if stopper is not None and stopper.update(val_loss, network.params):
            result.stopped_early = True
            if stopper.diagnostic:
                result.nan_stop = True
                result.diagnostic = stopper.diagnostic
                warnings.warn(stopper.diagnostic, RuntimeWarning)
            if stopper.best_params is not None:
                network.params = snapshot(stopper.best_params)
            break
    if stopper is not None:
        result.best_epoch = stopper.best_epoch
    return result


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for row in history:
            writer.writerow([row["epoch"]] + [f"{row[k]:.6f}" for k in HISTORY_FIELDS[1:]])

"""Downstream evaluation: frozen linear probes and label-limited fine-tuning.

Tap points select how much of the projection head feeds the probe:
P1 keeps all head layers but the last, P2 keeps only the first, and P3
reads the backbone feature vector directly.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .data import ImageDataset, stratified_indices
from .layers import Dense
from .optim import AdamState, adam_step
from .seeds import derive_seed
from .tensor import Tensor, gradients, no_grad


class TapPoint(enum.Enum):
    P1 = "P1"   # backbone + head minus its final layer
    P2 = "P2"   # backbone + head minus its final two layers
    P3 = "P3"   # backbone only


# Reference accuracies from full-scale runs (ResNet backbones, complete
# datasets); desk-scale runs report deltas next to these for context.
FULL_SCALE_REFERENCE = {
    "cifar10": {
        "supervised-reference": 73.62,
        "random-baseline": {"P1": 37.69, "P2": 39.4, "P3": 39.92, "finetune": 42.21},
        "guided": {"P1": 38.15, "P2": 41.01, "P3": 40.5, "finetune": 43.1},
    },
    "imagenet-subset": {
        "supervised-reference": 67.6,
        "random-baseline": {"P1": 52.8, "P2": 48.4, "P3": 52.4, "finetune": 49.2},
        "guided": {"P1": 56.4, "P2": 56.8, "P3": 60.0, "finetune": 56.0},
    },
}


@dataclass
class EvalReport:
    method: str          # guided | random-baseline | supervised-reference
    eval_name: str       # P1 | P2 | P3 | finetune | supervised
    accuracy: float      # validation accuracy, percent
    seed: int
    config_hash: str = ""

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 100]")


def tap(encoder, head, point: TapPoint):
    """Frozen feature extractor reading at the requested tap point."""
    if point is TapPoint.P3:
        head_layers = []
    elif point is TapPoint.P2:
        head_layers = head.layers[:1]
    else:
        head_layers = head.layers[:2]

    def extract(images, batch_size=256):
        rows = []
        with no_grad():
            for start in range(0, len(images), batch_size):
                feat = encoder(Tensor(images[start:start + batch_size]))
                for layer in head_layers:
                    feat = layer(feat)
                rows.append(feat.data)
        return np.concatenate(rows, axis=0)

    return extract


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros(logits.shape, dtype=logits.data.dtype)
    onehot[np.arange(len(labels)), labels] = 1.0
    picked = (logits * Tensor(onehot)).sum(axis=1)
    return (logits.logsumexp(axis=1) - picked).mean()


def _accuracy_percent(logits, labels):
    return 100.0 * float((logits.argmax(axis=1) == labels).mean())


def _check_labels(labels, num_classes):
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels outside [0, {num_classes})")


def fit_softmax_classifier(forward, params, train_inputs, train_labels,
                           val_inputs, val_labels, epochs=50, patience=5,
                           batch_size=128, seed=0, lr=1e-3):
    """Adam + cross-entropy with early stopping on validation loss.

    `forward` maps an input batch (numpy) to logits (Tensor); `params`
    are whatever should be trained through it. Restores the best-epoch
    weights and returns the validation accuracy there.
    """
    state = AdamState.init(params, lr=lr)
    best_val, best_params, since = float("inf"), None, 0
    n = len(train_inputs)
    for epoch in range(1, epochs + 1):
        order = np.random.default_rng(derive_seed(seed, "clf-shuffle", epoch)).permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            loss = softmax_cross_entropy(forward(train_inputs[batch]), train_labels[batch])
            adam_step(params, gradients(loss, params), state)
        with no_grad():
            val_losses, counts = [], []
            for start in range(0, len(val_inputs), batch_size):
                chunk = slice(start, start + batch_size)
                loss = softmax_cross_entropy(forward(val_inputs[chunk]), val_labels[chunk])
                val_losses.append(loss.item())
                counts.append(len(val_labels[chunk]))
            val_loss = float(np.average(val_losses, weights=counts))
        if val_loss < best_val:
            best_val, best_params, since = val_loss, [p.data.copy() for p in params], 0
        else:
            since += 1
            if since >= patience:
                break
    if best_params is not None:
        for p, stored in zip(params, best_params):
            p.data = stored
    with no_grad():
        chunks = [forward(val_inputs[start:start + batch_size]).data
                  for start in range(0, len(val_inputs), batch_size)]
    return _accuracy_percent(np.concatenate(chunks, axis=0), val_labels)


def linear_probe(extractor, train_ds: ImageDataset, val_ds: ImageDataset,
                 epochs=50, patience=5, seed=0, method="guided",
                 eval_name="P3") -> EvalReport:
    """Single dense layer on frozen features; the extractor never trains."""
    _check_labels(train_ds.labels, train_ds.num_classes)
    _check_labels(val_ds.labels, train_ds.num_classes)
    train_x = extractor(train_ds.images).astype(np.float32)
    val_x = extractor(val_ds.images).astype(np.float32)
    rng = np.random.default_rng(derive_seed(seed, "probe-init", eval_name))
    clf = Dense(rng, train_x.shape[1], train_ds.num_classes, activation="linear")
    accuracy = fit_softmax_classifier(
        lambda xb: clf(Tensor(xb)), clf.params(),
        train_x, train_ds.labels, val_x, val_ds.labels,
        epochs=epochs, patience=patience, seed=seed)
    return EvalReport(method=method, eval_name=eval_name, accuracy=accuracy, seed=seed)


def fine_tune_10pct(encoder, feature_dim, train_ds: ImageDataset, val_ds: ImageDataset,
                    fraction=0.10, epochs=50, patience=5, seed=0,
                    method="guided") -> EvalReport:
    """Encoder + fresh linear classifier trained end to end on a small
    stratified labeled subset; no projection head layers are used.

    The encoder object is trained in place; pass a dedicated copy.
    """
    _check_labels(train_ds.labels, train_ds.num_classes)
    chosen = stratified_indices(train_ds.labels, fraction, derive_seed(seed, "finetune-subset"))
    sub_x = train_ds.images[chosen]
    sub_y = train_ds.labels[chosen]
    rng = np.random.default_rng(derive_seed(seed, "finetune-init"))
    clf = Dense(rng, feature_dim, train_ds.num_classes, activation="linear")
    params = encoder.params() + clf.params()
    accuracy = fit_softmax_classifier(
        lambda xb: clf(encoder(Tensor(xb))), params,
        sub_x, sub_y, val_ds.images, val_ds.labels,
        epochs=epochs, patience=patience, batch_size=64, seed=seed)
    return EvalReport(method=method, eval_name="finetune", accuracy=accuracy, seed=seed)


def supervised_reference(encoder, feature_dim, train_ds: ImageDataset,
                         val_ds: ImageDataset, epochs=50, patience=5,
                         seed=0) -> EvalReport:
    """Ceiling reference: the same encoder trained fully supervised."""
    _check_labels(train_ds.labels, train_ds.num_classes)
    rng = np.random.default_rng(derive_seed(seed, "supervised-init"))
    clf = Dense(rng, feature_dim, train_ds.num_classes, activation="linear")
    params = encoder.params() + clf.params()
    accuracy = fit_softmax_classifier(
        lambda xb: clf(encoder(Tensor(xb))), params,
        train_ds.images, train_ds.labels, val_ds.images, val_ds.labels,
        epochs=epochs, patience=patience, batch_size=64, seed=seed)
    return EvalReport(method="supervised-reference", eval_name="supervised",
                      accuracy=accuracy, seed=seed)

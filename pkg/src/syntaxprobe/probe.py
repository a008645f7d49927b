"""The diagnostic classifier: softmax(W2 relu(W1 x + b1) + b2).

One hidden layer (300 units by default), trained with Adam on frozen
representation vectors. Biases can be switched off to get the bare
two-matrix form. Training is fully deterministic given the seed:
initialization, the train/holdout split, and batch order all derive
from it. The binary arc task reuses the same architecture with two
labels; its input is [child; other; child*other].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .optim import Adam
from .tasks import LabelVocabulary

CHECKPOINT_MAGIC = b"PROBE1\n"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    holdout_fraction: float = 0.1
    hidden_dim: int = 300
    use_bias: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.max_epochs <= 0:
            raise ValueError("learning_rate, batch_size, max_epochs must be positive")
        if self.patience <= 0:
            raise ValueError("patience must be positive")
        if not (0.0 < self.holdout_fraction <= 0.5):
            raise ValueError("holdout_fraction must be in (0, 0.5]")


@dataclass
class ProbeModel:
    W1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (labels, hidden)
    b2: np.ndarray  # (labels,)
    vocab: LabelVocabulary
    use_bias: bool = True

    @property
    def input_dim(self):
        return self.W1.shape[1]

    @property
    def hidden_dim(self):
        return self.W1.shape[0]

    @property
    def num_labels(self):
        return self.W2.shape[0]

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


def _glorot(rng, rows, cols):
    a = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, size=(rows, cols))


def init_probe(input_dim, vocab, hidden_dim=300, seed=0, use_bias=True):
    if hidden_dim <= 0:
        raise ValueError("hidden_dim must be positive")
    rng = np.random.default_rng(seed)
    num_labels = len(vocab)
    return ProbeModel(
        W1=_glorot(rng, hidden_dim, input_dim),
        b1=np.zeros(hidden_dim),
        W2=_glorot(rng, num_labels, hidden_dim),
        b2=np.zeros(num_labels),
        vocab=vocab,
        use_bias=use_bias,
    )


def _logits(model, X):
    pre = X @ model.W1.T
    if model.use_bias:
        pre = pre + model.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ model.W2.T
    if model.use_bias:
        logits = logits + model.b2
    return pre, hidden, logits


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model, x):
    """Class probability vector for a single input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({model.input_dim},)")
    _, _, logits = _logits(model, x[None, :])
    return _softmax(logits)[0]


def loss_and_gradient(model, X, y):
    """Mean cross-entropy over a batch plus analytic parameter gradients."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty batch")
    if np.any(y >= model.num_labels):
        raise ValueError("out-of-vocabulary gold label in training batch")
    n = len(X)
    pre, hidden, logits = _logits(model, X)
    probs = _softmax(logits)
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    grads = {
        "W2": dlogits.T @ hidden,
        "b2": dlogits.sum(axis=0) if model.use_bias else np.zeros_like(model.b2),
    }
    dhidden = (dlogits @ model.W2) * (pre > 0.0)
    grads["W1"] = dhidden.T @ X
    grads["b1"] = dhidden.sum(axis=0) if model.use_bias else np.zeros_like(model.b1)
    return loss, grads


def evaluate(model, data):
    """Fraction of examples whose argmax matches gold; unknown gold is wrong."""
    if len(data) == 0:
        raise ValueError("empty evaluation set")
    X = np.asarray(data.features, dtype=np.float64)
    _, _, logits = _logits(model, X)
    pred = logits.argmax(axis=1)
    gold = data.label_indices
    correct = (pred == gold) & (gold < model.num_labels)
    return float(correct.mean())


def train(data, vocab, config, log_path=None):
    """Train a probe on an aligned dataset, early-stopping on a holdout split.

    Returns the snapshot with the best holdout accuracy. The per-epoch
    `epoch,loss,holdout_acc` log is written to log_path when given.
    """
    n = len(data)
    if n == 0:
        raise ValueError("empty training set")
    if np.any(data.label_indices >= len(vocab)):
        raise ValueError("training data contains labels outside the vocabulary")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    n_holdout = max(1, int(round(n * config.holdout_fraction)))
    if n_holdout >= n:
        raise ValueError("holdout would consume the whole training set")
    holdout_idx = order[:n_holdout]
    train_idx = order[n_holdout:]
    X = np.asarray(data.features, dtype=np.float64)
    y = data.label_indices

    model = init_probe(
        X.shape[1], vocab, hidden_dim=config.hidden_dim, seed=config.seed,
        use_bias=config.use_bias,
    )
    opt = Adam(model.params(), learning_rate=config.learning_rate)

    from .repstore import AlignedDataset

    holdout = AlignedDataset(
        features=X[holdout_idx], label_indices=y[holdout_idx],
        layer=data.layer, task_name=data.task_name,
    )
    best = {k: v.copy() for k, v in model.params().items()}
    best_acc = -1.0
    since_best = 0
    log_lines = ["epoch,loss,holdout_acc"]
    for epoch in range(config.max_epochs):
        perm = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(perm), config.batch_size):
            idx = train_idx[perm[start : start + config.batch_size]]
            loss, grads = loss_and_gradient(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batches} "
                    f"(task {data.task_name}, layer {data.layer})"
                )
            opt.step(grads)
            epoch_loss += loss
            batches += 1
        acc = evaluate(model, holdout)
        log_lines.append(f"{epoch},{epoch_loss / batches:.6f},{acc:.6f}")
        if acc > best_acc:
            best_acc = acc
            best = {k: v.copy() for k, v in model.params().items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as f:
            f.write("\n".join(log_lines) + "\n")
    return ProbeModel(
        W1=best["W1"], b1=best["b1"], W2=best["W2"], b2=best["b2"],
        vocab=vocab, use_bias=config.use_bias,
    ), best_acc


def make_arc_features(child_vec, other_vec):
    """[child; other; child*other] pair features for arc prediction."""
    child_vec = np.asarray(child_vec)
    other_vec = np.asarray(other_vec)
    if child_vec.shape != other_vec.shape:
        raise ValueError(f"vector shapes differ: {child_vec.shape} vs {other_vec.shape}")
    return np.concatenate([child_vec, other_vec, child_vec * other_vec])


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(model, path):
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<III", model.input_dim, model.hidden_dim, model.num_labels))
        f.write(struct.pack("<B", 1 if model.use_bias else 0))
        f.write(struct.pack("<I", len(model.vocab.labels)))
        for label in model.vocab.labels:
            raw = label.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        for name in ("W1", "b1", "W2", "b2"):
            f.write(np.ascontiguousarray(getattr(model, name), dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a probe checkpoint")
    off = len(CHECKPOINT_MAGIC)
    input_dim, hidden_dim, num_labels = struct.unpack_from("<III", data, off)
    off += 12
    use_bias = bool(data[off])
    off += 1
    (vocab_size,) = struct.unpack_from("<I", data, off)
    off += 4
    labels = []
    for _ in range(vocab_size):
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        labels.append(data[off : off + n].decode("utf-8"))
        off += n
    vocab = LabelVocabulary(labels=tuple(labels), index={l: i for i, l in enumerate(labels)})

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        return arr.astype(np.float64)

    return ProbeModel(
        W1=take((hidden_dim, input_dim)),
        b1=take((hidden_dim,)),
        W2=take((num_labels, hidden_dim)),
        b2=take((num_labels,)),
        vocab=vocab,
        use_bias=use_bias,
    )

"""Attention-gated feedforward classifier trained on binary cross-entropy.

The gate reweights each feature as a_i = sigmoid(w_i) * x_i where the gate
weight for an observation is its attribution vector plus a trainable
per-feature offset delta (attention_mode="shap"), a fixed seeded noise vector
plus delta ("random"), or absent entirely ("off", which reduces the model to
a plain MLP on x, bit for bit). An optional cluster one-hot block is
concatenated after the gate. Two ReLU layers (50, 30) feed one sigmoid unit.

Training is mini-batch gradient descent with adaptive moment estimates and
early stopping on validation loss; the best-validation parameters are
restored. All arithmetic is float64 numpy; gradients are hand-derived and
checked against central finite differences in the tests.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError, TrainingDivergedError

HIDDEN_SIZES = (50, 30)
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class NetConfig:
    attention_mode: str = "shap"  # shap | random | off
    cluster_feature: bool = True
    step_size: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    hidden_sizes: tuple = HIDDEN_SIZES

    def __post_init__(self):
        if self.attention_mode not in ("shap", "random", "off"):
            raise DataError(f"unknown attention_mode {self.attention_mode!r}")
        if self.step_size <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise DataError("step_size, batch_size, max_epochs must be positive")
        if self.patience < 0:
            raise DataError("patience must be >= 0")
        if len(self.hidden_sizes) != 2:
            raise DataError("exactly two hidden layers are supported")


@dataclass
class NetParams:
    delta: np.ndarray  # (p,) gate offset
    gate_noise: np.ndarray | None  # (p,) fixed vector for attention_mode=random
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def copy(self):
        return NetParams(
            delta=self.delta.copy(),
            gate_noise=None if self.gate_noise is None else self.gate_noise.copy(),
            W1=self.W1.copy(), b1=self.b1.copy(),
            W2=self.W2.copy(), b2=self.b2.copy(),
            W3=self.W3.copy(), b3=self.b3.copy(),
        )

    def trainable(self):
        return ("delta", "W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class NetBatch:
    x: np.ndarray  # (n, p) gated-feature source
    shap: np.ndarray | None = None  # (n, p) attribution rows
    onehot: np.ndarray | None = None  # (n, k) cluster one-hot

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        if self.shap is not None:
            self.shap = np.atleast_2d(np.asarray(self.shap, dtype=np.float64))
            if self.shap.shape != self.x.shape:
                raise DataError(f"shap shape {self.shap.shape} != x shape {self.x.shape}")
        if self.onehot is not None:
            self.onehot = np.atleast_2d(np.asarray(self.onehot, dtype=np.float64))
            if self.onehot.shape[0] != self.x.shape[0]:
                raise DataError("cluster one-hot row count differs from x")

    @property
    def n(self):
        return self.x.shape[0]

    def take(self, idx):
        return NetBatch(
            x=self.x[idx],
            shap=None if self.shap is None else self.shap[idx],
            onehot=None if self.onehot is None else self.onehot[idx],
        )


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def attention_gate(w, x):
    """a_i = sigmoid(w_i) * x_i."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.shape != x.shape:
        raise DataError(f"gate shapes differ: {w.shape} vs {x.shape}")
    return _sigmoid(w) * x


def init_params(p, config, n_clusters=0):
    """Seeded uniform fan-in initialization; gate offset starts at zero."""
    rng = np.random.default_rng([config.seed, 0xA7])
    width = p + (n_clusters if config.cluster_feature else 0)
    h1, h2 = config.hidden_sizes

    def dense(rng, fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        return W, b

    W1, b1 = dense(rng, width, h1)
    W2, b2 = dense(rng, h1, h2)
    W3, b3 = dense(rng, h2, 1)
    noise = None
    if config.attention_mode == "random":
        noise = np.random.default_rng([config.seed, 0xA7, 99]).standard_normal(p)
    return NetParams(delta=np.zeros(p), gate_noise=noise,
                     W1=W1, b1=b1, W2=W2, b2=b2, W3=W3, b3=b3)


def _gate_weights(params, batch, config):
    if config.attention_mode == "shap":
        if batch.shap is None:
            raise DataError("attention_mode=shap requires shap rows in the batch")
        return batch.shap + params.delta
    if config.attention_mode == "random":
        return np.broadcast_to(params.gate_noise + params.delta, batch.x.shape)
    return None


def _forward_full(params, batch, config):
    """Forward pass keeping intermediates for backprop."""
    if config.attention_mode == "off":
        gated = batch.x
        gate_sig = None
    else:
        w = _gate_weights(params, batch, config)
        gate_sig = _sigmoid(w)
        gated = gate_sig * batch.x
    if config.cluster_feature:
        if batch.onehot is None:
            raise DataError("cluster_feature=True requires cluster one-hot rows")
        h0 = np.hstack([gated, batch.onehot])
    else:
        h0 = gated
    z1 = h0 @ params.W1 + params.b1
    r1 = np.maximum(z1, 0.0)
    z2 = r1 @ params.W2 + params.b2
    r2 = np.maximum(z2, 0.0)
    logit = (r2 @ params.W3 + params.b3)[:, 0]
    if not np.all(np.isfinite(logit)):
        raise NumericalError("non-finite activation in forward pass")
    return logit, (gate_sig, h0, z1, r1, z2, r2)


def forward(params, batch, config):
    """Probability in (0,1) for each row."""
    logit, _ = _forward_full(params, batch, config)
    return _sigmoid(logit)


def predict(params, batch, config):
    return forward(params, batch, config)


def bce_loss(logit, y):
    # softplus(z) - y*z, the stable form of -log p(y|z)
    return float(np.mean(np.logaddexp(0.0, logit) - y * logit))


def _backward(params, batch, config, logit, cache, y):
    gate_sig, h0, z1, r1, z2, r2 = cache
    n = batch.n
    p = batch.x.shape[1]
    dlogit = (_sigmoid(logit) - y)[:, None] / n
    gW3 = r2.T @ dlogit
    gb3 = dlogit.sum(axis=0)
    dz2 = (dlogit @ params.W3.T) * (z2 > 0)
    gW2 = r1.T @ dz2
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ params.W2.T) * (z1 > 0)
    gW1 = h0.T @ dz1
    gb1 = dz1.sum(axis=0)
    if config.attention_mode == "off":
        gdelta = np.zeros(p)
    else:
        dgated = (dz1 @ params.W1.T)[:, :p]
        gdelta = (dgated * batch.x * gate_sig * (1.0 - gate_sig)).sum(axis=0)
    return {"delta": gdelta, "W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2,
            "W3": gW3, "b3": gb3}


def loss_and_grads(params, batch, config, y):
    """Mean BCE and its gradient for every trainable parameter group."""
    y = np.asarray(y, dtype=np.float64)
    logit, cache = _forward_full(params, batch, config)
    return bce_loss(logit, y), _backward(params, batch, config, logit, cache, y)


@dataclass
class TrainResult:
    params: NetParams
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int


def train(train_batch, train_labels, val_batch, val_labels, config):
    """Fit from scratch; returns the best-validation parameters and history."""
    y_train = np.asarray(train_labels, dtype=np.float64)
    y_val = np.asarray(val_labels, dtype=np.float64)
    if y_train.min() == y_train.max():
        raise DataError("training labels are single-class")
    params = init_params(train_batch.x.shape[1], config,
                         n_clusters=0 if train_batch.onehot is None else train_batch.onehot.shape[1])
    names = params.trainable()
    moment1 = {k: np.zeros_like(getattr(params, k)) for k in names}
    moment2 = {k: np.zeros_like(getattr(params, k)) for k in names}
    step = 0
    best = params.copy()
    best_loss = np.inf
    best_epoch = -1
    since_best = 0
    train_losses = []
    val_losses = []
    for epoch in range(config.max_epochs):
        order = np.random.default_rng([config.seed, 0xE0, epoch]).permutation(train_batch.n)
        try:
            for lo in range(0, train_batch.n, config.batch_size):
                idx = order[lo : lo + config.batch_size]
                loss, grads = loss_and_grads(params, train_batch.take(idx), config, y_train[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                step += 1
                for k in names:
                    g = grads[k]
                    moment1[k] = ADAM_BETA1 * moment1[k] + (1 - ADAM_BETA1) * g
                    moment2[k] = ADAM_BETA2 * moment2[k] + (1 - ADAM_BETA2) * g * g
                    m_hat = moment1[k] / (1 - ADAM_BETA1**step)
                    v_hat = moment2[k] / (1 - ADAM_BETA2**step)
                    getattr(params, k)[...] -= config.step_size * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            epoch_train = bce_loss(_forward_full(params, train_batch, config)[0], y_train)
            epoch_val = bce_loss(_forward_full(params, val_batch, config)[0], y_val)
        except NumericalError as e:
            raise TrainingDivergedError(epoch) from e
        if not (np.isfinite(epoch_train) and np.isfinite(epoch_val)):
            raise TrainingDivergedError(epoch)
        train_losses.append(epoch_train)
        val_losses.append(epoch_val)
        if epoch_val < best_loss:
            best_loss = epoch_val
            best = params.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > config.patience:
                break
    return TrainResult(params=best, train_losses=train_losses,
                       val_losses=val_losses, best_epoch=best_epoch)


# -------------------------------------------------------- text serialization

def params_to_text(params):
    lines = []
    for name in ("delta", "gate_noise", "W1", "b1", "W2", "b2", "W3", "b3"):
        arr = getattr(params, name)
        if arr is None:
            lines.append(f"{name} none")
            continue
        shape = "x".join(str(d) for d in arr.shape)
        values = " ".join(repr(float(v)) for v in arr.ravel())
        lines.append(f"{name} {shape} {values}")
    return "\n".join(lines) + "\n"


def params_from_text(text):
    fields_out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        name = parts[0]
        if parts[1] == "none":
            fields_out[name] = None
            continue
        shape = tuple(int(d) for d in parts[1].split("x"))
        flat = np.array([float(v) for v in parts[2:]])
        if flat.size != int(np.prod(shape)):
            raise DataError(f"parameter block {name} has wrong element count")
        fields_out[name] = flat.reshape(shape)
    try:
        return NetParams(**fields_out)
    except TypeError as e:
        raise DataError(f"missing parameter block: {e}") from e

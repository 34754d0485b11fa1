"""Feed-forward network with backpropagation and Adam, written on numpy.

Dense layers map the last axis, so a (state_size, action_size) input matrix
passes through width-128 hidden layers as (state_size, 128) and is flattened
before the linear output layer. A leading batch axis is optional everywhere.
All parameters and activations are float64.
"""

import base64
import json

import numpy as np

from .errors import ShapeError


def relu(x):
    return np.maximum(0.0, x)


def dropout_apply(x, rate, training, rng):
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    Identity when not training. Returns (output, scaled mask or None).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    scale_mask = keep / (1.0 - rate)
    return x * scale_mask, scale_mask


def mse_loss(pred, target):
    """Mean squared error and its gradient 2*(pred - target)/N."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


class Dense:
    kind = "dense"

    def __init__(self, in_dim, out_dim, rng=None, name="dense"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.name = name
        if rng is not None:
            limit = np.sqrt(6.0 / (in_dim + out_dim))
            self.w = rng.uniform(-limit, limit, size=(in_dim, out_dim))
        else:
            self.w = np.zeros((in_dim, out_dim))
        self.b = np.zeros(out_dim)
        self._x = None

    def forward(self, x, training, rng):
        if x.shape[-1] != self.in_dim:
            raise ShapeError(
                f"{self.name}: expected last dimension {self.in_dim}, got {x.shape[-1]}"
            )
        self._x = x
        return x @ self.w + self.b

    def backward(self, grad, grads_out):
        x2 = self._x.reshape(-1, self.in_dim)
        g2 = grad.reshape(-1, self.out_dim)
        grads_out[f"{self.name}.w"] = x2.T @ g2
        grads_out[f"{self.name}.b"] = g2.sum(axis=0)
        return grad @ self.w.T

    def params(self):
        return {f"{self.name}.w": self.w, f"{self.name}.b": self.b}

    def descriptor(self):
        return {"kind": "dense", "name": self.name, "in_dim": self.in_dim, "out_dim": self.out_dim}


class ReLU:
    kind = "relu"

    def __init__(self):
        self._mask = None

    def forward(self, x, training, rng):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad, grads_out):
        return grad * self._mask

    def params(self):
        return {}

    def descriptor(self):
        return {"kind": "relu"}


class Dropout:
    kind = "dropout"

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._scale_mask = None

    def forward(self, x, training, rng):
        out, self._scale_mask = dropout_apply(x, self.rate, training, rng)
        return out

    def backward(self, grad, grads_out):
        if self._scale_mask is None:
            return grad
        return grad * self._scale_mask

    def params(self):
        return {}

    def descriptor(self):
        return {"kind": "dropout", "rate": self.rate}


class Flatten:
    kind = "flatten"

    def __init__(self):
        self._shape = None

    def forward(self, x, training, rng):
        self._shape = x.shape
        return x.reshape(x.shape[:-2] + (-1,))

    def backward(self, grad, grads_out):
        return grad.reshape(self._shape)

    def params(self):
        return {}

    def descriptor(self):
        return {"kind": "flatten"}


class MlpModel:
    """Ordered layer stack with cached activations for backpropagation."""

    def __init__(self, layers, seed=0, meta=None):
        self.layers = layers
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.meta = meta or {}
        self._cached = False

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            x = layer.forward(x, training, self.rng)
        self._cached = True
        return x

    def predict(self, x):
        return self.forward(x, training=False)

    def backward(self, loss_grad):
        """Gradients for every parameter given d(loss)/d(output)."""
        if not self._cached:
            raise RuntimeError("backward called before forward")
        grads = {}
        grad = np.asarray(loss_grad, dtype=np.float64)
        for layer in reversed(self.layers):
            grad = layer.backward(grad, grads)
        return grads

    def parameters(self):
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    @property
    def param_count(self):
        return sum(p.size for p in self.parameters().values())


class AdamState:
    """First/second moment accumulators with bias correction."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}


def adam_step(state, params, grads):
    """One Adam update, in place on ``params``; returns ``params``."""
    state.t += 1
    b1 = state.beta1
    b2 = state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for key, g in grads.items():
        m = state.m.get(key)
        if m is None:
            m = np.zeros_like(g)
            state.m[key] = m
            state.v[key] = np.zeros_like(g)
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        params[key] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def build_q_network(state_size, action_size, seed=0):
    """The Q-network: three width-128 ReLU layers with dropout, linear head.

    Input is a (state_size, action_size) feature matrix; output one Q-value
    per action slot. Construction is deterministic for a given seed.
    """
    if state_size < 1 or action_size < 2:
        raise ValueError("need state_size >= 1 and action_size >= 2")
    rng = np.random.default_rng(seed)
    layers = [
        Dense(action_size, 128, rng, name="dense1"),
        ReLU(),
        Dropout(0.5),
        Dense(128, 128, rng, name="dense2"),
        ReLU(),
        Dropout(0.5),
        Dense(128, 128, rng, name="dense3"),
        ReLU(),
        Flatten(),
        Dense(state_size * 128, action_size, rng, name="dense4"),
    ]
    model = MlpModel(layers, seed=seed, meta={"state_size": state_size, "action_size": action_size})
    return model


def train_on_batch(model, states, targets, adam):
    """One forward/backward/Adam step on a batch; returns the pre-update loss."""
    states = np.asarray(states, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if states.shape[0] == 0:
        raise ValueError("empty batch")
    pred = model.forward(states, training=True)
    loss, grad = mse_loss(pred, targets)
    grads = model.backward(grad)
    adam_step(adam, model.parameters(), grads)
    return loss


# --- checkpoint serialization ------------------------------------------------

_FORMAT = "dqcluster-model"
_VERSION = 1


def _encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(obj):
    data = base64.b64decode(obj["data"])
    return np.frombuffer(data, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def model_to_dict(model, adam=None):
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "seed": model.seed,
        "meta": model.meta,
        "rng_state": model.rng.bit_generator.state,
        "layers": [layer.descriptor() for layer in model.layers],
        "params": {k: _encode_array(v) for k, v in model.parameters().items()},
    }
    if adam is not None:
        doc["adam"] = {
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "t": adam.t,
            "m": {k: _encode_array(v) for k, v in adam.m.items()},
            "v": {k: _encode_array(v) for k, v in adam.v.items()},
        }
    return doc


def model_from_dict(doc):
    if doc.get("format") != _FORMAT:
        raise ValueError(f"not a model checkpoint (format={doc.get('format')!r})")
    if doc.get("version") != _VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    layers = []
    for desc in doc["layers"]:
        kind = desc["kind"]
        if kind == "dense":
            layers.append(Dense(desc["in_dim"], desc["out_dim"], rng=None, name=desc["name"]))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "dropout":
            layers.append(Dropout(desc["rate"]))
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    model = MlpModel(layers, seed=doc.get("seed", 0), meta=doc.get("meta", {}))
    model.rng.bit_generator.state = doc["rng_state"]
    params = model.parameters()
    saved = doc["params"]
    if set(params) != set(saved):
        raise ValueError("checkpoint parameters do not match the architecture")
    for key, arr in params.items():
        loaded = _decode_array(saved[key])
        if loaded.shape != arr.shape:
            raise ValueError(
                f"parameter {key}: expected shape {arr.shape}, found {loaded.shape}"
            )
        arr[...] = loaded
    adam = None
    if "adam" in doc:
        a = doc["adam"]
        adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"])
        adam.t = a["t"]
        adam.m = {k: _decode_array(v) for k, v in a["m"].items()}
        adam.v = {k: _decode_array(v) for k, v in a["v"].items()}
    return model, adam


def save_model(model, path, adam=None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, adam), fh)
        fh.write("\n")


def load_model(path):
    """Load a checkpoint; returns (model, adam state or None)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"corrupted checkpoint {path}: {exc}") from None
    return model_from_dict(doc)

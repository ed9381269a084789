"""A small multilayer perceptron with hand-written backprop.

Weights follow the (fan_out, fan_in) convention, so a layer maps a batch
``x`` of shape (n, fan_in) to ``x @ W.T + b``. The last layer is affine
only: it emits logits.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputValidationError, ParameterError

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ParameterError(f"need at least 2 positive layer sizes, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"activation must be one of {ACTIVATIONS}")

    @property
    def n_params(self):
        s = self.layer_sizes
        return sum(o * i + o for i, o in zip(s[:-1], s[1:]))


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def copy(self):
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


def init(spec):
    """Glorot-uniform weights, zero biases, deterministic in ``spec.init_seed``."""
    rng = np.random.default_rng(spec.init_seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(spec, weights, biases)


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, a):
    return (z > 0).astype(z.dtype) if name == "relu" else 1.0 - a * a


def _as_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.spec.layer_sizes[0]:
        raise InputValidationError(
            f"input has {x.shape[-1]} features, network expects {params.spec.layer_sizes[0]}"
        )
    return x


def forward(params, x, return_cache=False):
    x = _as_input(params, x)
    act = params.spec.activation
    h = x
    cache = [(None, x)]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        h = z if i == last else _act(act, z)
        cache.append((z, h))
    return (h, cache) if return_cache else h


def backward(params, x, dL_dlogits, cache=None):
    """Reverse-mode gradients given the loss gradient w.r.t. the logits.

    Returns ``(weight_grads, bias_grads)`` matching the parameter shapes. For a
    batch the per-sample contributions are summed; scale ``dL_dlogits`` to get
    a mean.
    """
    if cache is None:
        _, cache = forward(params, x, return_cache=True)
    g = np.asarray(dL_dlogits, dtype=np.float64)
    if g.shape != cache[-1][1].shape:
        raise InputValidationError(f"logit gradient shape {g.shape} != logits {cache[-1][1].shape}")
    if not np.all(np.isfinite(g)):
        raise InputValidationError("logit gradient contains non-finite entries")
    act = params.spec.activation
    n_layers = len(params.weights)
    w_grads, b_grads = [None] * n_layers, [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        h_in = cache[i][1]
        if g.ndim == 1:
            w_grads[i] = np.outer(g, h_in)
            b_grads[i] = g.copy()
        else:
            w_grads[i] = g.T @ h_in
            b_grads[i] = g.sum(axis=0)
        if i > 0:
            g = g @ params.weights[i]
            z, a = cache[i]
            g = g * _act_grad(act, z, a)
    return w_grads, b_grads


def sgd_update(params, grads, eta, momentum=0.0, weight_decay=0.0, velocity=None):
    """Return ``params - eta * grads`` as a new MlpParams.

    With ``momentum > 0`` pass the ``velocity`` returned by the previous call;
    the return value is then ``(params, velocity)``.
    """
    if eta < 0:
        raise ParameterError("learning rate must be non-negative")
    w_grads, b_grads = grads
    if weight_decay:
        w_grads = [g + weight_decay * w for g, w in zip(w_grads, params.weights)]
    if momentum:
        if velocity is None:
            velocity = ([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])
        vw = [momentum * v + g for v, g in zip(velocity[0], w_grads)]
        vb = [momentum * v + g for v, g in zip(velocity[1], b_grads)]
        new = MlpParams(
            params.spec,
            [w - eta * v for w, v in zip(params.weights, vw)],
            [b - eta * v for b, v in zip(params.biases, vb)],
        )
        return new, (vw, vb)
    return MlpParams(
        params.spec,
        [w - eta * g for w, g in zip(params.weights, w_grads)],
        [b - eta * g for b, g in zip(params.biases, b_grads)],
    )


def save(params, path):
    """Write a JSON checkpoint; floats go through repr, so the round trip is exact."""
    doc = {
        "format": "abkd-mlp/1",
        "layer_sizes": list(params.spec.layer_sizes),
        "activation": params.spec.activation,
        "init_seed": params.spec.init_seed,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "abkd-mlp/1":
        raise InputValidationError(f"{path}: not an abkd-mlp/1 checkpoint")
    spec = MlpSpec(tuple(doc["layer_sizes"]), doc["activation"], doc["init_seed"])
    params = MlpParams(
        spec,
        [np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        [np.asarray(b, dtype=np.float64) for b in doc["biases"]],
    )
    if len(params.weights) != len(spec.layer_sizes) - 1 or len(params.biases) != len(params.weights):
        raise InputValidationError("checkpoint layer count does not match its header")
    for i, (fi, fo) in enumerate(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])):
        if params.weights[i].shape != (fo, fi) or params.biases[i].shape != (fo,):
            raise InputValidationError(f"checkpoint layer {i} does not match its header")
    return params

"""Multilayer perceptron with hand-rolled backpropagation.

The update rule is the textbook pattern-sequential scheme: output deltas
are (target - output) scaled by the activation slope, hidden deltas chain
those back through the weights, and every correction term carries the
learning rate, so an update is a plain elementwise addition. A
weight-decay variant penalizes the squared weights for regularized
training on small data sets.

Epoch error is tracked as the mean squared error over all patterns and
output components (so a 34-output network and a scalar regressor report
on the same scale).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("sigmoid", "linear")


class MlpError(ValueError):
    """Shape mismatch or training contract violation."""


class DivergenceError(RuntimeError):
    """Epoch error exceeded the runaway guard."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(x: np.ndarray, kind: str) -> np.ndarray:
    return sigmoid(x) if kind == "sigmoid" else x


def _slope_from_output(activated: np.ndarray, kind: str) -> np.ndarray:
    # sigmoid' expressed through its own output: s (1 - s)
    if kind == "sigmoid":
        return activated * (1.0 - activated)
    return np.ones_like(activated)


@dataclass
class Layer:
    weights: np.ndarray   # (n_in, n_out)
    bias: np.ndarray      # (n_out,)
    activation: str

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise MlpError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise MlpError("layer weight/bias shapes inconsistent")


@dataclass
class MlpNetwork:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise MlpError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weights.shape[1] != b.weights.shape[0]:
                raise MlpError("adjacent layer dimensions do not chain")
        for layer in self.layers:
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
                raise MlpError("non-finite weights")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.layers[0].weights.shape[0],) + tuple(
            layer.weights.shape[1] for layer in self.layers)

    def copy(self) -> "MlpNetwork":
        return MlpNetwork([Layer(l.weights.copy(), l.bias.copy(), l.activation)
                           for l in self.layers])


def init_network(sizes, activations=None, seed: int = 0,
                 init_scale: float | None = None) -> MlpNetwork:
    """Small random starting weights, uniform in +-scale per layer.

    The default scale is 1/sqrt(fan_in) per layer; activations default to
    sigmoid everywhere.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise MlpError(f"bad layer sizes {sizes}")
    if activations is None:
        activations = ["sigmoid"] * (len(sizes) - 1)
    if len(activations) != len(sizes) - 1:
        raise MlpError("need one activation per weight layer")
    rng = np.random.Generator(np.random.PCG64(seed))
    layers = []
    for n_in, n_out, act in zip(sizes, sizes[1:], activations):
        scale = init_scale if init_scale is not None else 1.0 / np.sqrt(n_in)
        layers.append(Layer(weights=rng.uniform(-scale, scale, (n_in, n_out)),
                            bias=rng.uniform(-scale, scale, n_out),
                            activation=act))
    return MlpNetwork(layers)


@dataclass(frozen=True)
class TrainingSet:
    """Paired input/target patterns with uniform dimensions."""
    inputs: np.ndarray    # (p, n_in)
    targets: np.ndarray   # (p, n_out)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        d = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", d)
        if x.shape[0] != d.shape[0] or x.shape[0] < 1:
            raise MlpError("need >= 1 pattern with matching input/target counts")

    @property
    def n_patterns(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class TrainParams:
    alpha: float = 0.05          # learning rate
    max_epochs: int = 1000
    target_mse: float = 0.0
    l2_lambda: float = 0.0
    shuffle_seed: int = 0
    init_seed: int = 0
    init_scale: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise MlpError(f"alpha must be positive, got {self.alpha}")
        if self.max_epochs < 1:
            raise MlpError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.l2_lambda < 0:
            raise MlpError(f"l2_lambda must be >= 0, got {self.l2_lambda}")


@dataclass
class Gradients:
    """Per-layer correction terms, learning rate included."""
    delta_w: list[np.ndarray]
    delta_b: list[np.ndarray]


def forward(net: MlpNetwork, h: np.ndarray):
    """Evaluate the network; returns (output, cache for backward).

    Each layer sums its weighted inputs plus bias, then applies its
    activation. The cache keeps the input and every layer's activation.
    """
    x = np.asarray(h, dtype=np.float64)
    if x.shape[-1] != net.layers[0].weights.shape[0]:
        raise MlpError(
            f"input dimension {x.shape[-1]} does not match first layer "
            f"{net.layers[0].weights.shape[0]}")
    activations = [x]
    for layer in net.layers:
        x = _activate(x @ layer.weights + layer.bias, layer.activation)
        activations.append(x)
    return x, activations


def cost(outputs: np.ndarray, targets: np.ndarray) -> float:
    """Half the summed squared error over all patterns and components."""
    y = np.asarray(outputs, dtype=np.float64)
    d = np.asarray(targets, dtype=np.float64)
    if y.shape != d.shape:
        raise MlpError(f"output shape {y.shape} != target shape {d.shape}")
    return 0.5 * float(np.sum((y - d) ** 2))


def mse(net: MlpNetwork, data: TrainingSet) -> float:
    """Mean squared error per pattern and output component."""
    y, _ = forward(net, data.inputs)
    return float(np.mean((y - data.targets) ** 2))


def backward(net: MlpNetwork, cache: list[np.ndarray], target: np.ndarray,
             alpha: float) -> Gradients:
    """Correction terms for one pattern.

    Output delta: (d - y) times the activation slope; hidden deltas sum
    their downstream deltas through the weights before applying their own
    slope. Terms are scaled by alpha and are *added* in the update (they
    already descend the squared-error surface).
    """
    target = np.asarray(target, dtype=np.float64)
    if len(cache) != len(net.layers) + 1:
        raise MlpError("stale cache: layer count mismatch")
    y = cache[-1]
    if y.shape != target.shape:
        raise MlpError("target shape does not match cached output")
    delta = (target - y) * _slope_from_output(y, net.layers[-1].activation)
    delta_w: list[np.ndarray] = [None] * len(net.layers)
    delta_b: list[np.ndarray] = [None] * len(net.layers)
    for li in range(len(net.layers) - 1, -1, -1):
        z_prev = cache[li]
        delta_w[li] = alpha * np.outer(z_prev, delta)
        delta_b[li] = alpha * delta
        if li > 0:
            delta_in = net.layers[li].weights @ delta
            delta = delta_in * _slope_from_output(z_prev, net.layers[li - 1].activation)
    return Gradients(delta_w=delta_w, delta_b=delta_b)


def update(net: MlpNetwork, grads: Gradients) -> MlpNetwork:
    """New network with correction terms added elementwise."""
    if len(grads.delta_w) != len(net.layers):
        raise MlpError("gradient/layer count mismatch")
    layers = []
    for layer, dw, db in zip(net.layers, grads.delta_w, grads.delta_b):
        if dw.shape != layer.weights.shape or db.shape != layer.bias.shape:
            raise MlpError("gradient shapes do not mirror the network")
        layers.append(Layer(layer.weights + dw, layer.bias + db, layer.activation))
    return MlpNetwork(layers)


DIVERGENCE_LIMIT = 1e6


def _run_training(net: MlpNetwork, data: TrainingSet, params: TrainParams,
                  l2_lambda: float):
    if data.inputs.shape[1] != net.layers[0].weights.shape[0]:
        raise MlpError("training inputs do not match network input size")
    if data.targets.shape[1] != net.layers[-1].weights.shape[1]:
        raise MlpError("training targets do not match network output size")
    net = net.copy()
    rng = np.random.Generator(np.random.PCG64(params.shuffle_seed))
    history: list[tuple[float, float]] = []
    for _ in range(params.max_epochs):
        order = rng.permutation(data.n_patterns)
        for idx in order:
            y, cache = forward(net, data.inputs[idx])
            delta = (data.targets[idx] - y) * _slope_from_output(
                y, net.layers[-1].activation)
            for li in range(len(net.layers) - 1, -1, -1):
                z_prev = cache[li]
                if li > 0:
                    delta_next = (net.layers[li].weights @ delta) * _slope_from_output(
                        z_prev, net.layers[li - 1].activation)
                layer = net.layers[li]
                layer.weights += params.alpha * np.outer(z_prev, delta)
                layer.bias += params.alpha * delta
                if l2_lambda > 0.0:
                    layer.weights -= params.alpha * l2_lambda * layer.weights
                    layer.bias -= params.alpha * l2_lambda * layer.bias
                if li > 0:
                    delta = delta_next
        epoch_mse = mse(net, data)
        penalty = 0.0
        if l2_lambda > 0.0:
            penalty = 0.5 * l2_lambda * sum(
                float(np.sum(l.weights ** 2)) + float(np.sum(l.bias ** 2))
                for l in net.layers)
        history.append((epoch_mse, epoch_mse + penalty))
        if epoch_mse > DIVERGENCE_LIMIT or not np.isfinite(epoch_mse):
            raise DivergenceError(f"epoch error {epoch_mse} exceeded {DIVERGENCE_LIMIT}")
        if epoch_mse <= params.target_mse:
            break
    return net, history


def train(net: MlpNetwork, data: TrainingSet, params: TrainParams):
    """Pattern-sequential training in shuffled order.

    Stops at max_epochs or when the epoch MSE reaches target_mse; fully
    deterministic given (init state, shuffle_seed). Returns the trained
    network and the per-epoch MSE history.
    """
    trained, history = _run_training(net, data, params, l2_lambda=0.0)
    return trained, [h[0] for h in history]


def train_regularized(net: MlpNetwork, data: TrainingSet, params: TrainParams):
    """Training with L2 decay on all parameters (biases are constant-input
    weights and decay with the rest).

    Each pattern update subtracts alpha * l2_lambda * w after the
    correction terms, steering toward a squared-magnitude-penalized
    objective; with l2_lambda = 0 the trajectory is bitwise identical to
    :func:`train`. Returns (network, history of (mse, penalized objective)).
    """
    return _run_training(net, data, params, l2_lambda=params.l2_lambda)

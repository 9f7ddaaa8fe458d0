"""Trainable layers on plain numpy arrays, each with an exact backward pass.

Everything here works on a leading batch dimension; the recurrent pieces also
accept single vectors.  Training runs in float32 by default, gradient checks
rebuild the same layers in float64.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, StatisticsError

GATES = ("f", "i", "g", "o")  # forget, input, candidate, output

PROB_FLOOR = 1e-12


def sigmoid(z):
    # piecewise form avoids overflowing exp for large |z|
    z = np.asarray(z)
    out = np.empty_like(z, dtype=z.dtype)
    positive = z >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-z[positive]))
    ez = np.exp(z[~positive])
    out[~positive] = ez / (1.0 + ez)
    return out


def glorot_uniform(rng, rows, cols, dtype):
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(dtype)


class LstmLayerParams:
    """Per-gate weights of one recurrent layer.

    ``w_*`` project the step input, ``u_*`` the previous hidden state,
    ``b_*`` are biases.  Weights are Glorot-uniform, biases zero; pass no rng
    to get all-zero parameters (handy in tests).
    """

    def __init__(self, input_size, hidden_size, rng=None, dtype=np.float32):
        self.input_size = input_size
        self.hidden_size = hidden_size
        for gate in GATES:
            if rng is None:
                w = np.zeros((hidden_size, input_size), dtype)
                u = np.zeros((hidden_size, hidden_size), dtype)
            else:
                w = glorot_uniform(rng, hidden_size, input_size, dtype)
                u = glorot_uniform(rng, hidden_size, hidden_size, dtype)
            setattr(self, f"w_{gate}", w)
            setattr(self, f"u_{gate}", u)
            setattr(self, f"b_{gate}", np.zeros(hidden_size, dtype))

    def named_arrays(self):
        out = {}
        for gate in GATES:
            for kind in ("w", "u", "b"):
                name = f"{kind}_{gate}"
                out[name] = getattr(self, name)
        return out


def lstm_cell_forward(params, x, h_prev, c_prev):
    """One recurrent step; returns (h, c, cache) with the cache for backward."""
    if x.shape[-1] != params.input_size:
        raise ShapeError(
            f"input has {x.shape[-1]} features, layer expects {params.input_size}"
        )
    if h_prev.shape[-1] != params.hidden_size or h_prev.shape != c_prev.shape:
        raise ShapeError("hidden/cell state shapes do not match the layer")
    f = sigmoid(h_prev @ params.u_f.T + x @ params.w_f.T + params.b_f)
    i = sigmoid(h_prev @ params.u_i.T + x @ params.w_i.T + params.b_i)
    g = np.tanh(h_prev @ params.u_g.T + x @ params.w_g.T + params.b_g)
    c = f * c_prev + i * g
    o = sigmoid(h_prev @ params.u_o.T + x @ params.w_o.T + params.b_o)
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, (x, h_prev, c_prev, f, i, g, o, tanh_c)


def lstm_cell_backward(params, cache, dh, dc_in):
    """Backward of one step.

    ``dh`` is the gradient on h_t (from the layer above plus the next step),
    ``dc_in`` the gradient flowing into c_t from the next step.  Returns
    (dx, dh_prev, dc_prev, grads).
    """
    x, h_prev, c_prev, f, i, g, o, tanh_c = cache
    do = dh * tanh_c
    dc = dc_in + dh * o * (1.0 - tanh_c**2)
    dzf = dc * c_prev * f * (1.0 - f)
    dzi = dc * g * i * (1.0 - i)
    dzg = dc * i * (1.0 - g**2)
    dzo = do * o * (1.0 - o)
    at2 = np.atleast_2d
    grads = {}
    for gate, dz in zip(GATES, (dzf, dzi, dzg, dzo)):
        dz2 = at2(dz)
        grads[f"w_{gate}"] = dz2.T @ at2(x)
        grads[f"u_{gate}"] = dz2.T @ at2(h_prev)
        grads[f"b_{gate}"] = dz2.sum(axis=0)
    dx = dzf @ params.w_f + dzi @ params.w_i + dzg @ params.w_g + dzo @ params.w_o
    dh_prev = dzf @ params.u_f + dzi @ params.u_i + dzg @ params.u_g + dzo @ params.u_o
    dc_prev = dc * f
    return dx, dh_prev, dc_prev, grads


class LstmLayer:
    def __init__(self, input_size, hidden_size, rng=None, dtype=np.float32):
        self.params = LstmLayerParams(input_size, hidden_size, rng, dtype)
        self.dtype = dtype

    def forward_sequence(self, xs):
        """xs: (batch, steps, input) -> (hidden states (batch, steps, H), cache)."""
        batch, steps, _ = xs.shape
        hidden = self.params.hidden_size
        h = np.zeros((batch, hidden), self.dtype)
        c = np.zeros((batch, hidden), self.dtype)
        hs = np.empty((batch, steps, hidden), self.dtype)
        caches = []
        for t in range(steps):
            h, c, cache = lstm_cell_forward(self.params, xs[:, t, :], h, c)
            hs[:, t, :] = h
            caches.append(cache)
        return hs, caches

    def backward_sequence(self, caches, dhs):
        """dhs: per-step gradients on this layer's hidden states."""
        batch, steps, _ = dhs.shape
        dxs = np.empty((batch, steps, self.params.input_size), dhs.dtype)
        grads = {name: np.zeros_like(arr) for name, arr in self.params.named_arrays().items()}
        dh_next = np.zeros((batch, self.params.hidden_size), dhs.dtype)
        dc_next = np.zeros_like(dh_next)
        for t in reversed(range(steps)):
            dx, dh_next, dc_next, step_grads = lstm_cell_backward(
                self.params, caches[t], dhs[:, t, :] + dh_next, dc_next
            )
            dxs[:, t, :] = dx
            for name, value in step_grads.items():
                grads[name] += value
        return dxs, grads


class LstmStack:
    """Stacked recurrent layers; the classifier reads the top layer's last state."""

    def __init__(self, input_size, layer_sizes, rng=None, dtype=np.float32):
        if not layer_sizes:
            raise ValueError("at least one layer size is required")
        self.layers = []
        previous = input_size
        for size in layer_sizes:
            self.layers.append(LstmLayer(previous, size, rng, dtype))
            previous = size

    def forward(self, xs):
        caches = []
        for layer in self.layers:
            xs, cache = layer.forward_sequence(xs)
            caches.append(cache)
        return xs[:, -1, :], caches

    def backward(self, caches, d_final):
        """d_final: gradient on the top layer's final hidden state."""
        steps = len(caches[0])
        batch, hidden = d_final.shape
        dhs = np.zeros((batch, steps, hidden), d_final.dtype)
        dhs[:, -1, :] = d_final
        grads = {}
        for index in reversed(range(len(self.layers))):
            dhs, layer_grads = self.layers[index].backward_sequence(caches[index], dhs)
            for name, value in layer_grads.items():
                grads[f"{index}.{name}"] = value
        return dhs, grads

    def named_arrays(self):
        out = {}
        for index, layer in enumerate(self.layers):
            for name, arr in layer.params.named_arrays().items():
                out[f"{index}.{name}"] = arr
        return out


def lstm_stack_forward(layer_params, inputs):
    """Run a stack described by parameter objects over a step sequence.

    ``inputs`` is a sequence of step tensors (vectors or batches); returns the
    top layer's final hidden state.  Convenience entry point that shares the
    cell math with the training path.
    """
    if not layer_params:
        raise ValueError("at least one layer is required")
    sequence = [np.asarray(x) for x in inputs]
    for params in layer_params:
        shape = sequence[0].shape[:-1] + (params.hidden_size,)
        h = np.zeros(shape, sequence[0].dtype)
        c = np.zeros_like(h)
        outputs = []
        for x in sequence:
            h, c, _ = lstm_cell_forward(params, x, h, c)
            outputs.append(h)
        sequence = outputs
    return sequence[-1]


class Embedding:
    """Lookup table, uniform(-0.05, 0.05) initialized."""

    def __init__(self, size, dim, rng=None, dtype=np.float32):
        if rng is None:
            self.table = np.zeros((size, dim), dtype)
        else:
            self.table = rng.uniform(-0.05, 0.05, size=(size, dim)).astype(dtype)

    def forward(self, ids):
        return self.table[ids]

    def backward(self, ids, dout):
        """Scatter-add the output gradients back onto the looked-up rows."""
        dtable = np.zeros_like(self.table)
        np.add.at(dtable, np.asarray(ids).reshape(-1), dout.reshape(-1, self.table.shape[1]))
        return dtable


def dropout_forward(x, rate, training, rng=None):
    """Inverted dropout: kept units are rescaled by 1/(1-rate).

    Returns (output, mask); the mask is None when dropout is inactive and is
    what the backward pass needs.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    mask = mask.astype(x.dtype)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


class BatchNorm:
    """Feature-wise batch normalization with running inference statistics."""

    def __init__(self, dim, momentum=0.99, epsilon=1e-3, dtype=np.float32):
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = np.ones(dim, dtype)
        self.beta = np.zeros(dim, dtype)
        self.running_mean = np.zeros(dim, dtype)
        self.running_var = np.ones(dim, dtype)

    def forward(self, x, training):
        if training:
            if x.shape[0] < 2:
                raise StatisticsError(
                    "batch statistics need at least 2 rows in training mode"
                )
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            # in-place so checkpoint views of the running stats stay valid
            self.running_mean[...] = (
                self.momentum * self.running_mean + (1.0 - self.momentum) * mean
            )
            self.running_var[...] = (
                self.momentum * self.running_var + (1.0 - self.momentum) * var
            )
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = (x - mean) * inv_std
        out = self.gamma * x_hat + self.beta
        cache = (x_hat, inv_std) if training else None
        return out, cache

    def backward(self, cache, dout):
        """Training-mode backward; returns (dx, dgamma, dbeta)."""
        x_hat, inv_std = cache
        n = dout.shape[0]
        dgamma = (dout * x_hat).sum(axis=0)
        dbeta = dout.sum(axis=0)
        dx_hat = dout * self.gamma
        dx = (
            inv_std
            / n
            * (n * dx_hat - dx_hat.sum(axis=0) - x_hat * (dx_hat * x_hat).sum(axis=0))
        )
        return dx, dgamma, dbeta


class Dense:
    def __init__(self, input_size, output_size, rng=None, dtype=np.float32):
        if rng is None:
            self.weight = np.zeros((output_size, input_size), dtype)
        else:
            self.weight = glorot_uniform(rng, output_size, input_size, dtype)
        self.bias = np.zeros(output_size, dtype)

    def forward(self, x):
        return x @ self.weight.T + self.bias

    def backward(self, x, dout):
        dx = dout @ self.weight
        dweight = np.atleast_2d(dout).T @ np.atleast_2d(x)
        dbias = np.atleast_2d(dout).sum(axis=0)
        return dx, dweight, dbias


def softmax(logits):
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def dense_softmax(dense, x):
    return softmax(dense.forward(x))


def cross_entropy(probs, label):
    """Negative log-probability of the true label, floored to stay finite."""
    p = float(np.asarray(probs)[..., int(label)])
    return -float(np.log(max(p, PROB_FLOOR)))


def batch_cross_entropy(probs, labels):
    picked = probs[np.arange(probs.shape[0]), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def softmax_cross_entropy_grad(probs, labels):
    """d(mean cross-entropy)/dlogits for softmax outputs."""
    batch = probs.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    return dlogits / batch

"""Straight-line 64-bit re-evaluation of the classifier's inference forward.

Written directly against the layer equations with plain Python floats and
explicit loops (numpy appears only to convert parameters to nested lists),
so any disagreement with the vectorized implementation points at the
implementation, not at shared code.
"""

import math

import numpy as np

GATE_PARAMS = (
    "w_f", "u_f", "b_f",
    "w_i", "u_i", "b_i",
    "w_g", "u_g", "b_g",
    "w_o", "u_o", "b_o",
)

BATCH_NORM_EPSILON = 1e-3


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _matvec(matrix, vector):
    return [
        sum(matrix[i][j] * vector[j] for j in range(len(vector)))
        for i in range(len(matrix))
    ]


def _add(*vectors):
    return [sum(parts) for parts in zip(*vectors)]


def _lstm_branch(state, branch, n_layers, ids):
    """Embed the ids, run them through the stacked recurrence, return the
    final hidden vector of the top layer."""
    table = state[f"{branch}_embedding.table"]
    xs = [table[i] for i in ids]
    for layer in range(n_layers):
        p = {name: state[f"{branch}_stack.{layer}.{name}"] for name in GATE_PARAMS}
        hidden = len(p["b_f"])
        # fresh zero state per layer; each layer consumes the one below
        h = [0.0] * hidden
        c = [0.0] * hidden
        outputs = []
        for x in xs:
            ft = [_sigmoid(v) for v in _add(_matvec(p["u_f"], h), _matvec(p["w_f"], x), p["b_f"])]
            it = [_sigmoid(v) for v in _add(_matvec(p["u_i"], h), _matvec(p["w_i"], x), p["b_i"])]
            gt = [math.tanh(v) for v in _add(_matvec(p["u_g"], h), _matvec(p["w_g"], x), p["b_g"])]
            ot = [_sigmoid(v) for v in _add(_matvec(p["u_o"], h), _matvec(p["w_o"], x), p["b_o"])]
            c = [ft[j] * c[j] + it[j] * gt[j] for j in range(hidden)]
            h = [ot[j] * math.tanh(c[j]) for j in range(hidden)]
            outputs.append(h)
        xs = outputs
    return xs[-1]


def reference_forward(model, prefix_ids, suffix_ids, attribute_ids):
    """Inference probabilities for one sample, recomputed from first principles."""
    state = {
        name: np.asarray(array, dtype=np.float64).tolist()
        for name, array in model.state().items()
    }
    architecture = model.architecture
    n_layers = len(architecture.lstm_layer_sizes)
    features = []
    if architecture.use_prefix:
        features += _lstm_branch(state, "prefix", n_layers, prefix_ids)
    if architecture.use_suffix:
        features += _lstm_branch(state, "suffix", n_layers, suffix_ids)
    if architecture.use_attributes:
        for name in architecture.attribute_embedding_dims:
            column = model.vocab.attribute_names.index(name)
            features += state[f"attribute_embedding.{name}.table"][attribute_ids[column]]

    gamma = state["batch_norm.gamma"]
    beta = state["batch_norm.beta"]
    mean = state["batch_norm.running_mean"]
    var = state["batch_norm.running_var"]
    normed = [
        gamma[j] * (features[j] - mean[j]) / math.sqrt(var[j] + BATCH_NORM_EPSILON) + beta[j]
        for j in range(len(features))
    ]

    logits = _add(_matvec(state["classifier.weight"], normed), state["classifier.bias"])
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    total = sum(exps)
    return [v / total for v in exps]

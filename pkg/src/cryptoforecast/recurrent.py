"""LSTM and GRU regressors trained by backpropagation through time.

Inputs are sliding windows of standardized feature-coin prices; the final
hidden state of the top layer is projected to a standardized target price.
Everything is plain numpy so gradients can be checked against finite
differences.

Gate layout inside the stacked weight matrices (rows):
LSTM ``[input, forget, output, candidate]``; GRU ``[update, reset, candidate]``.
"""
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from cryptoforecast._io import atomic_write
from cryptoforecast.config import RnnConfig
from cryptoforecast.errors import DatasetError, ForecastError, ModelFormatError

logger = logging.getLogger(__name__)

GATES = {"lstm": 4, "gru": 3}
CLIP_NORM = 5.0
IMPROVEMENT_TOL = 1e-10
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8

MAGIC = b"CFRNN\x00\x00\x00"
FORMAT_VERSION = 1


def sigmoid(x):
    # split by sign so large |x| never overflows exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values, what="series"):
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        if np.any(std <= 0):
            raise DatasetError(f"cannot standardize {what}: zero standard deviation")
        return cls(np.atleast_1d(mean), np.atleast_1d(std))

    def transform(self, values):
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values):
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


@dataclass
class WindowSample:
    inputs: np.ndarray  # (window, features), standardized
    target: float  # standardized target on the window's last day


@dataclass
class RnnModel:
    cell: str
    layers: list  # per layer: {"W": (G*H, D), "U": (G*H, H), "b": (G*H,)}
    w_out: np.ndarray  # (H,)
    b_out: np.ndarray  # (1,)
    feature_scaler: Scaler
    target_scaler: Scaler
    features: list
    window: int
    meta: dict = field(default_factory=dict)

    @property
    def hidden(self):
        return self.w_out.shape[0]

    def parameters(self):
        """Trainable arrays in a fixed order (the order gradients use)."""
        out = []
        for layer in self.layers:
            out += [layer["W"], layer["U"], layer["b"]]
        return out + [self.w_out, self.b_out]


def init_model(cell, n_features, hidden, layers=1, rng=None, features=None,
               feature_scaler=None, target_scaler=None, window=7):
    """Fresh model with weights uniform in +-1/sqrt(hidden)."""
    if cell not in GATES:
        raise ValueError(f"unknown cell {cell!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    k = 1.0 / np.sqrt(hidden)
    g = GATES[cell]
    stack = []
    for level in range(layers):
        d = n_features if level == 0 else hidden
        stack.append({
            "W": rng.uniform(-k, k, (g * hidden, d)),
            "U": rng.uniform(-k, k, (g * hidden, hidden)),
            "b": rng.uniform(-k, k, g * hidden),
        })
    w_out = rng.uniform(-k, k, hidden)
    b_out = rng.uniform(-k, k, 1)
    if feature_scaler is None:
        feature_scaler = Scaler(np.zeros(n_features), np.ones(n_features))
    if target_scaler is None:
        target_scaler = Scaler(np.zeros(1), np.ones(1))
    features = list(features) if features is not None else [f"f{i}" for i in range(n_features)]
    return RnnModel(cell, stack, w_out, b_out, feature_scaler, target_scaler, features, window)


# -- single steps -------------------------------------------------------------


def _lstm_step(layer, x, h, c):
    H = h.shape[-1]
    z = x @ layer["W"].T + h @ layer["U"].T + layer["b"]
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    o = sigmoid(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (x, h, c, i, f, o, g, tc)


def _gru_step(layer, x, h):
    H = h.shape[-1]
    W, U, b = layer["W"], layer["U"], layer["b"]
    a = x @ W.T + b
    z = sigmoid(a[..., :H] + h @ U[:H].T)
    r = sigmoid(a[..., H:2 * H] + h @ U[H:2 * H].T)
    n = np.tanh(a[..., 2 * H:] + (r * h) @ U[2 * H:].T)
    return (1.0 - z) * h + z * n, (x, h, z, r, n)


def cell_forward(cell, layer, x, state):
    """One time step. LSTM state is ``(h, c)``, GRU state is ``h``.

    Returns ``(new_state, output)`` where output is the new hidden vector.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer["W"].shape[1]:
        raise ValueError(f"input width {x.shape[-1]} != layer input width {layer['W'].shape[1]}")
    if cell == "lstm":
        h, c = (np.asarray(s, dtype=np.float64) for s in state)
        h_new, c_new, _ = _lstm_step(layer, x, h, c)
        return (h_new, c_new), h_new
    if cell == "gru":
        h_new, _ = _gru_step(layer, x, np.asarray(state, dtype=np.float64))
        return h_new, h_new
    raise ValueError(f"unknown cell {cell!r}")


# -- sequences ----------------------------------------------------------------


def forward(model, X):
    """Standardized predictions for a batch ``X`` of shape (batch, window, features)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != model.layers[0]["W"].shape[1]:
        raise ValueError(f"expected (batch, window, {model.layers[0]['W'].shape[1]}) inputs, got {X.shape}")
    seq = X
    caches = []
    B, T, _ = X.shape
    H = model.hidden
    for layer in model.layers:
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        outs = np.empty((B, T, H))
        steps = []
        for t in range(T):
            if model.cell == "lstm":
                h, c, cache = _lstm_step(layer, seq[:, t], h, c)
            else:
                h, cache = _gru_step(layer, seq[:, t], h)
            outs[:, t] = h
            steps.append(cache)
        caches.append(steps)
        seq = outs
    y = seq[:, -1] @ model.w_out + model.b_out[0]
    return y, (caches, seq[:, -1])


def _lstm_backward(layer, steps, dhs):
    W, U = layer["W"], layer["U"]
    dW, dU, db = np.zeros_like(W), np.zeros_like(U), np.zeros_like(layer["b"])
    B, T, H = dhs.shape
    dxs = np.zeros((B, T, W.shape[1]))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        x, h_prev, c_prev, i, f, o, g, tc = steps[t]
        dh = dhs[:, t] + dh_next
        dc = dh * o * (1.0 - tc**2) + dc_next
        dz = np.concatenate(
            [dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f), dh * tc * o * (1.0 - o), dc * i * (1.0 - g**2)],
            axis=1,
        )
        dW += dz.T @ x
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dxs[:, t] = dz @ W
        dh_next = dz @ U
        dc_next = dc * f
    return {"W": dW, "U": dU, "b": db}, dxs


def _gru_backward(layer, steps, dhs):
    W, U = layer["W"], layer["U"]
    dW, dU, db = np.zeros_like(W), np.zeros_like(U), np.zeros_like(layer["b"])
    B, T, H = dhs.shape
    Uz, Ur, Un = U[:H], U[H:2 * H], U[2 * H:]
    dxs = np.zeros((B, T, W.shape[1]))
    dh_next = np.zeros((B, H))
    for t in reversed(range(T)):
        x, h_prev, z, r, n = steps[t]
        dh = dhs[:, t] + dh_next
        an = dh * z * (1.0 - n**2)
        az = dh * (n - h_prev) * z * (1.0 - z)
        drh = an @ Un
        ar = drh * h_prev * r * (1.0 - r)
        dU[:H] += az.T @ h_prev
        dU[H:2 * H] += ar.T @ h_prev
        dU[2 * H:] += an.T @ (r * h_prev)
        da = np.concatenate([az, ar, an], axis=1)
        dW += da.T @ x
        db += da.sum(axis=0)
        dxs[:, t] = da @ W
        dh_next = dh * (1.0 - z) + drh * r + az @ Uz + ar @ Ur
    return {"W": dW, "U": dU, "b": db}, dxs


def loss_and_gradients(model, X, y):
    """Batch-mean squared error and its gradient for every parameter.

    Gradients come back as a list aligned with ``model.parameters()``.
    """
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("empty batch")
    pred, (caches, h_last) = forward(model, X)
    if pred.shape != y.shape:
        raise ValueError(f"targets shape {y.shape} != predictions {pred.shape}")
    err = pred - y
    loss = float(np.mean(err**2))
    dy = 2.0 * err / len(y)
    d_w_out = h_last.T @ dy
    d_b_out = np.array([dy.sum()])
    B, T = X.shape[0], X.shape[1]
    dhs = np.zeros((B, T, model.hidden))
    dhs[:, -1] = np.outer(dy, model.w_out)
    backward = _lstm_backward if model.cell == "lstm" else _gru_backward
    layer_grads = [None] * len(model.layers)
    for k in reversed(range(len(model.layers))):
        layer_grads[k], dhs = backward(model.layers[k], caches[k], dhs)
    grads = []
    for g in layer_grads:
        grads += [g["W"], g["U"], g["b"]]
    return loss, grads + [d_w_out, d_b_out]


def bptt_gradients(model, X, y):
    return loss_and_gradients(model, X, y)[1]


# -- windows --------------------------------------------------------------------


def make_windows(matrix, target, features, window, feature_scaler, target_scaler):
    """One sample per day t >= window: features over t-window+1..t, target at t."""
    features = list(features)
    if target in features:
        raise DatasetError(f"target {target!r} is also listed as a feature")
    if window < 1:
        raise ValueError("window must be >= 1")
    n = len(matrix)
    if n < window:
        raise DatasetError(f"{n} rows cannot fill a window of {window}")
    if np.any(np.asarray(feature_scaler.std) <= 0) or np.any(np.asarray(target_scaler.std) <= 0):
        raise DatasetError("scaler standard deviations must be positive")
    inputs = feature_scaler.transform(matrix.select(features).values)
    targets = target_scaler.transform(matrix.column(target))
    return [WindowSample(inputs[t - window:t], float(targets[t - 1])) for t in range(window, n + 1)]


def stack_samples(samples):
    return np.stack([s.inputs for s in samples]), np.array([s.target for s in samples])


# -- training -------------------------------------------------------------------


def _clip(grads, max_norm=CLIP_NORM):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads


def _mse(model, X, y):
    pred, _ = forward(model, X)
    return float(np.mean((pred - y) ** 2))


def _snapshot(model):
    return [p.copy() for p in model.parameters()]


def _restore(model, snapshot):
    for p, saved in zip(model.parameters(), snapshot):
        p[...] = saved


def rnn_train(train, valid, target, features, config, history=None):
    """Fit with mini-batch Adam and patience-based early stopping.

    Scalers come from the training split only. The returned weights are the
    snapshot with the lowest validation MSE (the initial weights count as
    epoch 0).
    """
    if not isinstance(config, RnnConfig):
        raise TypeError("config must be an RnnConfig")
    features = list(features)
    for t in [target, *features]:
        if t not in train.coins or t not in valid.coins:
            raise DatasetError(f"ticker {t!r} missing from train or validation columns")
    fscale = Scaler.fit(train.select(features).values, "features")
    tscale = Scaler.fit(train.column(target), "target")
    train_samples = make_windows(train, target, features, config.window, fscale, tscale)
    valid_samples = make_windows(valid, target, features, config.window, fscale, tscale)
    X, y = stack_samples(train_samples)
    Xv, yv = stack_samples(valid_samples)

    rng = np.random.default_rng(config.seed)
    model = init_model(config.cell, len(features), config.hidden, config.layers, rng,
                       features, fscale, tscale, config.window)
    params = model.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0

    best_mse = _mse(model, Xv, yv)
    best = _snapshot(model)
    best_epoch, stale, epoch = 0, 0, 0
    if history is not None:
        history.append({"epoch": 0, "valid_mse": best_mse})
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(y))
        for batch_no, start in enumerate(range(0, len(y), config.batch_size), 1):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_gradients(model, X[idx], y[idx])
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise ForecastError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            grads = _clip(grads)
            step += 1
            lr_t = config.learning_rate * np.sqrt(1 - ADAM_BETA2**step) / (1 - ADAM_BETA1**step)
            for p, g, m_i, v_i in zip(params, grads, m, v):
                m_i *= ADAM_BETA1
                m_i += (1 - ADAM_BETA1) * g
                v_i *= ADAM_BETA2
                v_i += (1 - ADAM_BETA2) * g * g
                p -= lr_t * m_i / (np.sqrt(v_i) + ADAM_EPS)
        valid_mse = _mse(model, Xv, yv)
        if history is not None:
            history.append({"epoch": epoch, "valid_mse": valid_mse})
        if valid_mse < best_mse - IMPROVEMENT_TOL:
            best_mse, best, best_epoch, stale = valid_mse, _snapshot(model), epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("early stop after epoch %d, best epoch %d", epoch, best_epoch)
                break
    _restore(model, best)
    model.meta = {
        "target": target,
        "config": config.to_json(),
        "best_epoch": best_epoch,
        "best_valid_mse": best_mse,
        "epochs_run": epoch,
    }
    return model


def rnn_predict_array(model, inputs):
    """Price-unit predictions for raw (unstandardized) windows of shape (batch, window, features)."""
    X = model.feature_scaler.transform(inputs)
    pred, _ = forward(model, X)
    return model.target_scaler.inverse(pred)


def rnn_predict(model, recent):
    """Predict the target price on the last day of ``recent`` (exactly ``window`` rows)."""
    if len(recent) != model.window:
        raise DatasetError(f"expected {model.window} rows, got {len(recent)}")
    window = recent.select(model.features).values
    return float(rnn_predict_array(model, window[None])[0])


# -- portable binary format ----------------------------------------------------
#
# MAGIC (8 bytes) | version u32 LE | header length u32 LE | UTF-8 JSON header
# | float64 LE arrays, in the order and shapes the header lists.


def _named_arrays(model):
    arrays = [
        ("feature_mean", model.feature_scaler.mean), ("feature_std", model.feature_scaler.std),
        ("target_mean", model.target_scaler.mean), ("target_std", model.target_scaler.std),
    ]
    for k, layer in enumerate(model.layers):
        arrays += [(f"layer{k}.W", layer["W"]), (f"layer{k}.U", layer["U"]), (f"layer{k}.b", layer["b"])]
    return arrays + [("w_out", model.w_out), ("b_out", model.b_out)]


def rnn_dumps(model):
    arrays = _named_arrays(model)
    header = {
        "cell": model.cell,
        "layers": len(model.layers),
        "hidden": model.hidden,
        "window": model.window,
        "features": list(model.features),
        "meta": model.meta,
        "arrays": [[name, list(np.shape(a))] for name, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(blob)), blob]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays]
    return b"".join(parts)


def rnn_loads(data):
    if data[:8] != MAGIC:
        raise ModelFormatError("not a recurrent model file (bad magic)")
    if len(data) < 16:
        raise ModelFormatError("truncated model file header")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, ValueError):
        raise ModelFormatError("corrupt or truncated model header") from None
    offset = 16 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise ModelFormatError(f"truncated model file while reading {name}")
        arrays[name] = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(data):
        raise ModelFormatError(f"{len(data) - offset} trailing bytes after model arrays")
    layers = [
        {"W": arrays[f"layer{k}.W"], "U": arrays[f"layer{k}.U"], "b": arrays[f"layer{k}.b"]}
        for k in range(header["layers"])
    ]
    model = RnnModel(
        header["cell"], layers, arrays["w_out"], arrays["b_out"],
        Scaler(arrays["feature_mean"], arrays["feature_std"]),
        Scaler(arrays["target_mean"], arrays["target_std"]),
        header["features"], header["window"], header["meta"],
    )
    _check_shapes(model)
    return model


def _check_shapes(model):
    g, H, F = GATES.get(model.cell), model.hidden, len(model.features)
    if g is None:
        raise ModelFormatError(f"unknown cell {model.cell!r}")
    for k, layer in enumerate(model.layers):
        d = F if k == 0 else H
        expect = {"W": (g * H, d), "U": (g * H, H), "b": (g * H,)}
        for key, shape in expect.items():
            if layer[key].shape != shape:
                raise ModelFormatError(f"layer {k} {key} has shape {layer[key].shape}, expected {shape}")
    if model.feature_scaler.mean.shape != (F,) or np.any(model.feature_scaler.std <= 0):
        raise ModelFormatError("bad feature scaler")
    if np.any(model.target_scaler.std <= 0):
        raise ModelFormatError("bad target scaler")


def rnn_serialize(model, path):
    with atomic_write(path, "wb") as fh:
        fh.write(rnn_dumps(model))


def rnn_deserialize(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    return rnn_loads(data)

"""Six-block convolutional classifier, implemented directly on numpy.

Each block is a same-padded 3x3 convolution, batch normalization, then
ReLU; 2x2 max pooling (floor) follows the blocks listed in ``pools``.
A global average pool and a dense layer with softmax produce class
probabilities. Training runs in float64 with reverse-mode gradients
written out by hand; finished models are quantized to float32 so the
serialized form reproduces predictions bit-exactly.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, NumericError, ParameterError
from .data import TrainConfig, stratified_split

BN_EPS = 1e-5
RUNNING_MOMENTUM = 0.9  # running = m*running + (1-m)*batch

DEFAULT_CHANNELS = (8, 16, 32, 32, 64, 64)
DEFAULT_POOLS = (2, 4)
DEFAULT_INPUT_SHAPE = (64, 7)


@dataclass
class ConvBlock:
    w: np.ndarray  # (out_ch, in_ch, 3, 3)
    b: np.ndarray  # (out_ch,)
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class CnnModel:
    blocks: list[ConvBlock]
    dense_w: np.ndarray  # (n_classes, channels[-1])
    dense_b: np.ndarray
    classes: tuple[str, ...]
    task: str
    channels: tuple[int, ...]
    pools: tuple[int, ...]
    input_shape: tuple[int, int]
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def spatial_trace(
    input_shape: tuple[int, int], n_blocks: int, pools: tuple[int, ...]
) -> list[tuple[int, int]]:
    """Spatial size after each block; pooling floors odd extents."""
    h, w = input_shape
    trace = [(h, w)]
    for i in range(1, n_blocks + 1):
        if i in pools:
            h, w = h // 2, w // 2
        trace.append((h, w))
    return trace


def new_cnn(
    classes: tuple[str, ...],
    task: str,
    seed: int = 0,
    channels: tuple[int, ...] = DEFAULT_CHANNELS,
    pools: tuple[int, ...] = DEFAULT_POOLS,
    input_shape: tuple[int, int] = DEFAULT_INPUT_SHAPE,
) -> CnnModel:
    """He-normal initialized model; batchnorm starts at identity."""
    trace = spatial_trace(input_shape, len(channels), pools)
    if any(h < 1 or w < 1 for h, w in trace):
        raise ParameterError(f"pooling collapses the input: spatial trace {trace}")
    rng = np.random.default_rng(seed)
    blocks = []
    in_ch = 1
    for out_ch in channels:
        fan_in = in_ch * 9
        blocks.append(
            ConvBlock(
                w=rng.standard_normal((out_ch, in_ch, 3, 3)) * np.sqrt(2.0 / fan_in),
                b=np.zeros(out_ch),
                gamma=np.ones(out_ch),
                beta=np.zeros(out_ch),
                running_mean=np.zeros(out_ch),
                running_var=np.ones(out_ch),
            )
        )
        in_ch = out_ch
    dense_w = rng.standard_normal((len(classes), channels[-1])) * np.sqrt(2.0 / channels[-1])
    return CnnModel(
        blocks=blocks,
        dense_w=dense_w,
        dense_b=np.zeros(len(classes)),
        classes=tuple(classes),
        task=task,
        channels=tuple(channels),
        pools=tuple(pools),
        input_shape=tuple(input_shape),
    )


# --- Layer primitives ---------------------------------------------------------


def _im2col(x: np.ndarray) -> np.ndarray:
    """Gather 3x3 same-padded patches: (N, C, H, W) -> (C*9, N*H*W)."""
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    s = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(c, 3, 3, n, h, w), strides=(s[1], s[2], s[3], s[0], s[2], s[3])
    )
    return view.reshape(c * 9, n * h * w)


def _conv_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n, _, h, wd = x.shape
    f = w.shape[0]
    cols = _im2col(x)
    out = (w.reshape(f, -1) @ cols).reshape(f, n, h, wd)
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3)) + b[None, :, None, None], cols


def conv2d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _conv_forward(x, w, b)[0]


def _conv_backward(
    cols: np.ndarray, in_shape: tuple, w: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, c, h, wd = in_shape
    f = w.shape[0]
    dout_f = np.ascontiguousarray(dout.transpose(1, 0, 2, 3)).reshape(f, n * h * wd)
    dw = (dout_f @ cols.T).reshape(w.shape)
    dcols = (w.reshape(f, -1).T @ dout_f).reshape(c, 3, 3, n, h, wd)
    dxp = np.zeros((c, n, h + 2, wd + 2), dtype=dout.dtype)
    for dy in range(3):
        for dx in range(3):
            dxp[:, :, dy : dy + h, dx : dx + wd] += dcols[:, dy, dx]
    dx = dxp[:, :, 1:-1, 1:-1].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(dx), dw, dout.sum(axis=(0, 2, 3))


def conv2d_same_backward(
    x: np.ndarray, w: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return _conv_backward(_im2col(x), x.shape, w, dout)


def batchnorm_train(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray
) -> tuple[np.ndarray, dict]:
    mu = x.mean(axis=(0, 2, 3), keepdims=True)
    var = x.var(axis=(0, 2, 3), keepdims=True)  # population variance
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu) * inv
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = {"xhat": xhat, "inv": inv, "gamma": gamma, "mean": mu.ravel(), "var": var.ravel()}
    return out, cache


def batchnorm_train_backward(dout: np.ndarray, cache: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, gamma = cache["xhat"], cache["inv"], cache["gamma"]
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    mean_dxhat = dxhat.mean(axis=(0, 2, 3), keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
    dx = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dgamma, dbeta


def batchnorm_infer(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray, var: np.ndarray
) -> np.ndarray:
    inv = 1.0 / np.sqrt(var[None, :, None, None] + BN_EPS)
    return gamma[None, :, None, None] * (x - mean[None, :, None, None]) * inv + beta[
        None, :, None, None
    ]


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    r = (
        x[:, :, : 2 * h2, : 2 * w2]
        .reshape(n, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2, w2, 4)
    )
    idx = r.argmax(axis=-1)  # first maximum wins on ties
    out = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(dout: np.ndarray, cache: tuple) -> np.ndarray:
    idx, in_shape = cache
    n, c, h, w = in_shape
    h2, w2 = h // 2, w // 2
    dr = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(dr, idx[..., None], dout[..., None], axis=-1)
    dcrop = (
        dr.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    )
    dx = np.zeros(in_shape, dtype=dout.dtype)
    dx[:, :, : 2 * h2, : 2 * w2] = dcrop
    return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


# --- Forward / backward -------------------------------------------------------


def _as_batch(mels: np.ndarray, input_shape: tuple[int, int]) -> np.ndarray:
    x = np.asarray(mels, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != tuple(input_shape):
        raise ParameterError(
            f"expected input shaped (N, {input_shape[0]}, {input_shape[1]}), got {x.shape}"
        )
    return x[:, None]  # add the channel axis


def cnn_forward(model: CnnModel, mels: np.ndarray, mode: str = "infer"):
    """Class probabilities for a batch of (or a single) mel matrix.

    In ``train`` mode batch statistics are used for normalization and a
    cache of intermediate activations is returned alongside the output.
    Inference uses running statistics and is a pure function.
    """
    if mode not in ("train", "infer"):
        raise ParameterError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = _as_batch(mels, model.input_shape)
    if mode == "train" and x.shape[0] < 2:
        raise ParameterError("train mode needs a batch of at least 2 (batch statistics)")
    cache: list[dict] = []
    for i, blk in enumerate(model.blocks, start=1):
        in_shape = x.shape
        if mode == "train":
            x, cols = _conv_forward(x, blk.w, blk.b)
            bn_out, bn_cache = batchnorm_train(x, blk.gamma, blk.beta)
        else:
            x = conv2d_same(x, blk.w, blk.b)
            bn_out = batchnorm_infer(x, blk.gamma, blk.beta, blk.running_mean, blk.running_var)
            bn_cache = None
            cols = None
        relu_mask = bn_out > 0
        y = bn_out * relu_mask
        pool_cache = None
        if i in model.pools:
            y, pool_cache = maxpool2(y)
        if mode == "train":
            cache.append(
                {
                    "in_shape": in_shape,
                    "cols": cols,
                    "conv": x,
                    "bn": bn_cache,
                    "relu": relu_mask,
                    "pool": pool_cache,
                }
            )
        x = y
    gap = x.mean(axis=(2, 3))
    logits = gap @ model.dense_w.T + model.dense_b
    probs = softmax(logits)
    if mode == "train":
        cache_out = {"blocks": cache, "gap": gap, "gap_shape": x.shape, "probs": probs}
        return probs, cache_out
    return probs


def cnn_loss_and_grad(
    model: CnnModel, mels: np.ndarray, labels: np.ndarray
) -> tuple[float, dict, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean categorical cross-entropy and gradients for every parameter.

    Also returns the per-block batch statistics so the training loop can
    commit them into the running estimates; this function itself never
    mutates the model.
    """
    labels = np.asarray(labels)
    probs, cache = cnn_forward(model, mels, mode="train")
    for i, blk_cache in enumerate(cache["blocks"], start=1):
        if not np.all(np.isfinite(blk_cache["conv"])):
            raise NumericError(f"non-finite activations in block {i}")
    n = len(labels)
    if labels.min() < 0 or labels.max() >= model.n_classes:
        raise ParameterError("labels out of range for the model's class table")
    loss = cross_entropy(probs, labels)

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads: dict = {"blocks": [None] * len(model.blocks)}
    grads["dense_w"] = dlogits.T @ cache["gap"]
    grads["dense_b"] = dlogits.sum(axis=0)
    dgap = dlogits @ model.dense_w
    _, _, h, w = cache["gap_shape"]
    dx = np.broadcast_to(dgap[:, :, None, None], cache["gap_shape"]) / (h * w)
    dx = np.ascontiguousarray(dx)
    for i in range(len(model.blocks) - 1, -1, -1):
        blk, blk_cache = model.blocks[i], cache["blocks"][i]
        if blk_cache["pool"] is not None:
            dx = maxpool2_backward(dx, blk_cache["pool"])
        dx = dx * blk_cache["relu"]
        dx, dgamma, dbeta = batchnorm_train_backward(dx, blk_cache["bn"])
        dx, dw, db = _conv_backward(blk_cache["cols"], blk_cache["in_shape"], blk.w, dx)
        grads["blocks"][i] = {"w": dw, "b": db, "gamma": dgamma, "beta": dbeta}
    batch_stats = [(c["bn"]["mean"], c["bn"]["var"]) for c in cache["blocks"]]
    return loss, grads, batch_stats


# --- Training -----------------------------------------------------------------


def _param_refs(model: CnnModel) -> list[tuple[str, np.ndarray]]:
    refs = []
    for i, blk in enumerate(model.blocks, start=1):
        refs += [
            (f"block{i}.conv_w", blk.w),
            (f"block{i}.conv_b", blk.b),
            (f"block{i}.bn_gamma", blk.gamma),
            (f"block{i}.bn_beta", blk.beta),
        ]
    refs += [("dense_w", model.dense_w), ("dense_b", model.dense_b)]
    return refs


def _grad_refs(grads: dict) -> list[np.ndarray]:
    out = []
    for g in grads["blocks"]:
        out += [g["w"], g["b"], g["gamma"], g["beta"]]
    out += [grads["dense_w"], grads["dense_b"]]
    return out


class AdamState:
    def __init__(self, model: CnnModel, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for _, p in _param_refs(model)]
        self.v = [np.zeros_like(p) for _, p in _param_refs(model)]

    def step(self, model: CnnModel, grads: dict) -> None:
        self.t += 1
        params = [p for _, p in _param_refs(model)]
        gs = _grad_refs(grads)
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, gs, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def finalize_float32(model: CnnModel) -> CnnModel:
    """Quantize all tensors to float32 so saved and live predictions agree bit-for-bit."""
    for blk in model.blocks:
        blk.w = blk.w.astype(np.float32)
        blk.b = blk.b.astype(np.float32)
        blk.gamma = blk.gamma.astype(np.float32)
        blk.beta = blk.beta.astype(np.float32)
        blk.running_mean = blk.running_mean.astype(np.float32)
        blk.running_var = blk.running_var.astype(np.float32)
    model.dense_w = model.dense_w.astype(np.float32)
    model.dense_b = model.dense_b.astype(np.float32)
    return model


def cnn_train(
    mels: np.ndarray,
    labels: np.ndarray,
    strata: np.ndarray,
    classes: tuple[str, ...],
    config: TrainConfig,
    channels: tuple[int, ...] = DEFAULT_CHANNELS,
    pools: tuple[int, ...] = DEFAULT_POOLS,
) -> tuple[CnnModel, list[dict]]:
    """Train with Adam, early stopping on validation loss.

    The split is stratified 80/20 by (surface, spin) pair and fully
    determined by ``config.seed``, as is initialization and shuffling.
    Returns the best-validation-loss snapshot and the per-epoch log.
    """
    config.validate()
    mels = np.asarray(mels, dtype=np.float64)
    labels = np.asarray(labels)
    if len(mels) == 0:
        raise DataError("empty training set")
    train_idx, val_idx = stratified_split(strata, labels, len(classes), config.seed)
    if val_idx.size == 0:
        raise DataError("validation split is empty; dataset too small")
    rng = np.random.default_rng(config.seed)
    model = new_cnn(
        classes, config.task, seed=config.seed, channels=channels, pools=pools,
        input_shape=mels.shape[1:],
    )
    adam = AdamState(model, lr=config.learning_rate)
    best_loss = np.inf
    best_snapshot = None
    bad_epochs = 0
    log: list[dict] = []
    for epoch in range(1, config.epochs + 1):
        order = train_idx[rng.permutation(train_idx.size)]
        batch_losses = []
        for start in range(0, order.size, config.batch_size):
            batch = order[start : start + config.batch_size]
            if batch.size < 2:
                continue  # batchnorm needs batch statistics
            loss, grads, stats = cnn_loss_and_grad(model, mels[batch], labels[batch])
            adam.step(model, grads)
            for blk, (mean, var) in zip(model.blocks, stats):
                blk.running_mean = (
                    RUNNING_MOMENTUM * blk.running_mean + (1 - RUNNING_MOMENTUM) * mean
                )
                blk.running_var = (
                    RUNNING_MOMENTUM * blk.running_var + (1 - RUNNING_MOMENTUM) * var
                )
            batch_losses.append(loss)
        val_probs = cnn_forward(model, mels[val_idx], mode="infer")
        val_loss = cross_entropy(val_probs, labels[val_idx])
        val_acc = float(np.mean(val_probs.argmax(axis=1) == labels[val_idx]))
        log.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(batch_losses)) if batch_losses else np.nan,
                "val_loss": val_loss,
                "val_acc": val_acc,
            }
        )
        if val_loss < best_loss:
            best_loss = val_loss
            best_snapshot = copy.deepcopy(model)
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                break
    assert best_snapshot is not None
    return finalize_float32(best_snapshot), log


def predict_cnn(model: CnnModel, mels: np.ndarray) -> np.ndarray:
    """Probability vectors (N, n_classes) in inference mode."""
    return np.atleast_2d(cnn_forward(model, mels, mode="infer"))

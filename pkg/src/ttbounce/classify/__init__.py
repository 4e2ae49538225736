"""Classifier training, prediction, and serialization.

Three interchangeable model families sit behind one predict interface:
the CNN (primary method, normalized mel input), a linear one-vs-rest SVM
(flattened mel input), and per-class diagonal Gaussian mixtures (MFCC
input).
"""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from ..features import FeatureRecord
from .cnn import (
    CnnModel,
    cnn_forward,
    cnn_loss_and_grad,
    cnn_train,
    new_cnn,
    predict_cnn,
)
from .data import (
    TaskDataset,
    TrainConfig,
    assemble_task,
    flat_inputs,
    mel_inputs,
    mfcc_inputs,
    stratified_split,
)
from .gmm import GmmModel, gmm_train, predict_gmm
from .model_io import Model, load_model, save_model
from .svm import SvmModel, predict_svm, svm_train

METHODS = ("cnn", "svm", "gmm")

__all__ = [
    "CnnModel",
    "GmmModel",
    "Model",
    "SvmModel",
    "TaskDataset",
    "TrainConfig",
    "METHODS",
    "assemble_task",
    "cnn_forward",
    "cnn_loss_and_grad",
    "cnn_train",
    "features_for_model",
    "flat_inputs",
    "gmm_train",
    "load_model",
    "mel_inputs",
    "mfcc_inputs",
    "new_cnn",
    "predict",
    "predict_cnn",
    "predict_gmm",
    "predict_svm",
    "save_model",
    "stratified_split",
    "svm_train",
    "train_task_model",
]


def features_for_model(model: Model, cells: np.ndarray) -> np.ndarray:
    """Convert raw log-mel cells (N, 64, 7) to the model's input representation."""
    cells = np.asarray(cells, dtype=np.float64)
    if cells.ndim == 2:
        cells = cells[None]
    if isinstance(model, CnnModel):
        return mel_inputs(cells)
    if isinstance(model, SvmModel):
        return flat_inputs(cells)
    return mfcc_inputs(cells)


def predict(model: Model, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predicted class ids and the score matrix for prepared features.

    Features must already match the model's representation: 64x7
    normalized mel for the CNN, flat 448 for the SVM, 20 MFCCs for the
    GMM (batched or single).
    """
    x = np.asarray(features, dtype=np.float64)
    if isinstance(model, CnnModel):
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != model.input_shape:
            raise ParameterError(
                f"CNN expects (N, {model.input_shape[0]}, {model.input_shape[1]}), got {x.shape}"
            )
        scores = predict_cnn(model, x)
    elif isinstance(model, SvmModel):
        x = np.atleast_2d(x)
        if x.shape[1] != model.weights.shape[1]:
            raise ParameterError(
                f"SVM expects {model.weights.shape[1]} features, got {x.shape[1]}"
            )
        scores = predict_svm(model, x)
    elif isinstance(model, GmmModel):
        x = np.atleast_2d(x)
        if x.shape[1] != model.means.shape[2]:
            raise ParameterError(
                f"GMM expects {model.means.shape[2]} features, got {x.shape[1]}"
            )
        scores = predict_gmm(model, x)
    else:
        raise ParameterError(f"unknown model type {type(model).__name__}")
    return scores.argmax(axis=1), scores


def train_task_model(
    records: list[FeatureRecord],
    method: str,
    config: TrainConfig,
    svm_epochs: int = 50,
    gmm_components: int = 8,
) -> tuple[Model, list[dict]]:
    """Assemble a task dataset from feature records and train one model.

    All methods share the same seeded stratified 80/20 split so their
    held-out metrics are comparable.
    """
    if method not in METHODS:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    config.validate()
    ds = assemble_task(records, config.task)
    if method == "cnn":
        model, log = cnn_train(mel_inputs(ds.cells), ds.labels, ds.strata, ds.classes, config)
        return model, log
    train_idx, val_idx = stratified_split(ds.strata, ds.labels, len(ds.classes), config.seed)
    if method == "svm":
        x = flat_inputs(ds.cells)
        model, log = svm_train(
            x[train_idx],
            ds.labels[train_idx],
            ds.classes,
            config=config,
            epochs=svm_epochs,
            val=(x[val_idx], ds.labels[val_idx]),
        )
        return model, log
    x = mfcc_inputs(ds.cells)
    model, info = gmm_train(
        x[train_idx],
        ds.labels[train_idx],
        ds.classes,
        n_components=gmm_components,
        seed=config.seed,
        task=config.task,
    )
    _, val_scores = predict(model, x[val_idx])
    val_acc = float(np.mean(val_scores.argmax(axis=1) == ds.labels[val_idx]))
    total_iters = max(len(t) for t in info["log_likelihood"].values())
    final_ll = sum(t[-1] for t in info["log_likelihood"].values())
    log = [
        {
            "epoch": total_iters,
            "train_loss": -final_ll / max(1, len(train_idx)),
            "val_loss": float("nan"),
            "val_acc": val_acc,
        }
    ]
    return model, log

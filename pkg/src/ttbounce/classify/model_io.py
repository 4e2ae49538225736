"""TTSB1 model container: JSON header plus named float32 tensors.

Layout: magic ``TTSB1``, uint32 header length, UTF-8 JSON header (kind,
task, class table, architecture descriptor, meta), uint32 tensor count,
then per tensor: uint16 name length, name, uint8 ndim, uint32 dims,
float32 LE data. All integers little-endian. Loading a saved model
reproduces its predictions bit-for-bit because models hold float32
parameters once trained.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .cnn import CnnModel, ConvBlock
from .gmm import GmmModel
from .svm import SvmModel

MODEL_MAGIC = b"TTSB1"

Model = CnnModel | SvmModel | GmmModel


def _tensors_for(model: Model) -> dict[str, np.ndarray]:
    if isinstance(model, CnnModel):
        out: dict[str, np.ndarray] = {}
        for i, blk in enumerate(model.blocks, start=1):
            out[f"block{i}.conv_w"] = blk.w
            out[f"block{i}.conv_b"] = blk.b
            out[f"block{i}.bn_gamma"] = blk.gamma
            out[f"block{i}.bn_beta"] = blk.beta
            out[f"block{i}.bn_mean"] = blk.running_mean
            out[f"block{i}.bn_var"] = blk.running_var
        out["dense_w"] = model.dense_w
        out["dense_b"] = model.dense_b
        return out
    if isinstance(model, SvmModel):
        return {"weights": model.weights, "bias": model.bias}
    if isinstance(model, GmmModel):
        return {
            "class_priors": model.priors,
            "mixture_weights": model.weights,
            "means": model.means,
            "variances": model.variances,
        }
    raise FormatError(f"unknown model type {type(model).__name__}")


def _arch_for(model: Model) -> dict:
    if isinstance(model, CnnModel):
        return {
            "channels": list(model.channels),
            "pools": list(model.pools),
            "input_shape": list(model.input_shape),
        }
    if isinstance(model, SvmModel):
        return {"n_features": int(model.weights.shape[1])}
    return {"n_components": int(model.weights.shape[1]), "n_features": int(model.means.shape[2])}


_KINDS = {CnnModel: "cnn", SvmModel: "svm", GmmModel: "gmm"}


def save_model(model: Model, path: str | Path) -> None:
    header = {
        "kind": _KINDS[type(model)],
        "task": model.task,
        "classes": list(model.classes),
        "arch": _arch_for(model),
        "meta": model.meta,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tensors = _tensors_for(model)
    parts = [MODEL_MAGIC, struct.pack("<I", len(header_bytes)), header_bytes]
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<H", len(name_b)) + name_b)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def _read_exact(raw: bytes, pos: int, n: int, path: Path) -> tuple[bytes, int]:
    if pos + n > len(raw):
        raise FormatError(f"{path}: truncated at byte {pos}")
    return raw[pos : pos + n], pos + n


def load_model(path: str | Path) -> Model:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic, not a TTSB1 model file")
    pos = len(MODEL_MAGIC)
    chunk, pos = _read_exact(raw, pos, 4, path)
    (header_len,) = struct.unpack("<I", chunk)
    chunk, pos = _read_exact(raw, pos, header_len, path)
    try:
        header = json.loads(chunk.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from None
    for key in ("kind", "task", "classes", "arch"):
        if key not in header:
            raise FormatError(f"{path}: header missing field {key!r}")
    chunk, pos = _read_exact(raw, pos, 4, path)
    (n_tensors,) = struct.unpack("<I", chunk)
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        chunk, pos = _read_exact(raw, pos, 2, path)
        (name_len,) = struct.unpack("<H", chunk)
        chunk, pos = _read_exact(raw, pos, name_len, path)
        name = chunk.decode("utf-8")
        chunk, pos = _read_exact(raw, pos, 1, path)
        ndim = chunk[0]
        chunk, pos = _read_exact(raw, pos, 4 * ndim, path)
        shape = struct.unpack(f"<{ndim}I", chunk)
        count = int(np.prod(shape)) if ndim else 1
        chunk, pos = _read_exact(raw, pos, 4 * count, path)
        tensors[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape)
    return _build_model(header, tensors, path)


def _require(tensors: dict, name: str, shape: tuple, path: Path) -> np.ndarray:
    if name not in tensors:
        raise FormatError(f"{path}: missing tensor {name!r}")
    arr = tensors[name]
    if arr.shape != shape:
        raise FormatError(
            f"{path}: tensor {name!r} has shape {arr.shape}, descriptor implies {shape}"
        )
    return arr


def _build_model(header: dict, tensors: dict, path: Path) -> Model:
    kind = header["kind"]
    classes = tuple(header["classes"])
    task = header["task"]
    arch = header["arch"]
    meta = header.get("meta", {})
    n_classes = len(classes)
    if kind == "cnn":
        channels = tuple(arch["channels"])
        blocks = []
        in_ch = 1
        for i, out_ch in enumerate(channels, start=1):
            blocks.append(
                ConvBlock(
                    w=_require(tensors, f"block{i}.conv_w", (out_ch, in_ch, 3, 3), path),
                    b=_require(tensors, f"block{i}.conv_b", (out_ch,), path),
                    gamma=_require(tensors, f"block{i}.bn_gamma", (out_ch,), path),
                    beta=_require(tensors, f"block{i}.bn_beta", (out_ch,), path),
                    running_mean=_require(tensors, f"block{i}.bn_mean", (out_ch,), path),
                    running_var=_require(tensors, f"block{i}.bn_var", (out_ch,), path),
                )
            )
            in_ch = out_ch
        model = CnnModel(
            blocks=blocks,
            dense_w=_require(tensors, "dense_w", (n_classes, channels[-1]), path),
            dense_b=_require(tensors, "dense_b", (n_classes,), path),
            classes=classes,
            task=task,
            channels=channels,
            pools=tuple(arch["pools"]),
            input_shape=tuple(arch["input_shape"]),
            meta=meta,
        )
        if np.any(model.blocks[0].running_var < 0) or any(
            np.any(b.running_var < 0) for b in model.blocks
        ):
            raise FormatError(f"{path}: negative batchnorm running variance")
        return model
    if kind == "svm":
        d = int(arch["n_features"])
        return SvmModel(
            weights=_require(tensors, "weights", (n_classes, d), path),
            bias=_require(tensors, "bias", (n_classes,), path),
            classes=classes,
            task=task,
            meta=meta,
        )
    if kind == "gmm":
        k = int(arch["n_components"])
        d = int(arch["n_features"])
        return GmmModel(
            priors=_require(tensors, "class_priors", (n_classes,), path),
            weights=_require(tensors, "mixture_weights", (n_classes, k), path),
            means=_require(tensors, "means", (n_classes, k, d), path),
            variances=_require(tensors, "variances", (n_classes, k, d), path),
            classes=classes,
            task=task,
            meta=meta,
        )
    raise FormatError(f"{path}: unknown model kind {kind!r}")

"""Versioned binary checkpoint container.

Layout: magic ``SCLM``, format version (u32 LE), header length (u64 LE),
UTF-8 JSON header (config, vocab, schedule, step, blob names), then one
blob per name: name length (u32) + name, ndim (u32), dims (u32 each),
float32 little-endian data.  Optimizer moments ride along as blobs with
an ``opt.`` prefix so training can resume.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .corpus import Vocab
from .curvemap import CurveConfig, build_cache
from .errors import CheckpointVersionMismatch, IoError
from .model import BackboneConfig, SclmModel, build_schedule

MAGIC = b"SCLM"
VERSION = 1


def _write_blob(fh, name: str, array: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<I", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<I", array.ndim))
    for dim in array.shape:
        fh.write(struct.pack("<I", dim))
    fh.write(array.astype("<f4").tobytes())


def _read_blob(fh) -> tuple[str, np.ndarray]:
    raw = fh.read(4)
    if len(raw) < 4:
        raise IoError("truncated checkpoint blob")
    (name_len,) = struct.unpack("<I", raw)
    name = fh.read(name_len).decode("utf-8")
    (ndim,) = struct.unpack("<I", fh.read(4))
    shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(fh.read(count * 4), dtype="<f4").reshape(shape)
    return name, data.astype(np.float64)


def save(model: SclmModel, path: str, step: int) -> None:
    header = {
        "mode": model.mode,
        "embed_dim": model.embed_dim,
        "k_curves": model.k_curves,
        "force_k_head": model.k_head is not None and model.k_curves < 2,
        "unit_norm": model.embedding.unit_norm,
        "lambda_anchor": model.lambda_anchor,
        "seed": model.seed,
        "step": step,
        "opt_step_count": model.store.step_count,
        "schedule": {"T": model.schedule.T, "kind": model.schedule.kind},
        "backbone": {
            "layers": model.backbone.layers,
            "heads": model.backbone.heads,
            "d_model": model.backbone.d_model,
            "d_ff": model.backbone.d_ff,
            "dropout": model.backbone.dropout,
            "max_positions": model.backbone.max_positions,
            "time_dim": model.backbone.time_dim,
        },
        "curve": {
            "n_ratio": model.cache.config.n_ratio,
            "eta_ratio": model.cache.config.eta_ratio,
            "eta_fixed": model.cache.config.eta_fixed,
            "k_curves": model.cache.config.k_curves,
            "margin": model.cache.config.margin,
            "l_min": model.cache.config.l_min,
            "l_max": model.cache.config.l_max,
            "identity": model.cache.config.identity,
        },
        "vocab": list(model.vocab.tokens),
        "params": model.store.names(),
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)
            for name in header["params"]:
                _write_blob(fh, name, model.store[name].data)
                _write_blob(fh, f"opt.m.{name}", model.store.moment1[name])
                _write_blob(fh, f"opt.v.{name}", model.store.moment2[name])
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load(path: str) -> tuple[SclmModel, int, dict]:
    """Rebuild the model (cache included) from a checkpoint file."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != MAGIC:
                raise CheckpointVersionMismatch(f"bad magic {magic!r}, expected {MAGIC!r}")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != VERSION:
                raise CheckpointVersionMismatch(f"format version {version}, expected {VERSION}")
            (header_len,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(header_len).decode("utf-8"))
            blobs = {}
            expected = len(header["params"]) * 3
            for _ in range(expected):
                name, data = _read_blob(fh)
                blobs[name] = data
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc

    curve = header["curve"]
    cache = build_cache(
        CurveConfig(
            n_ratio=curve["n_ratio"],
            eta_ratio=curve["eta_ratio"],
            eta_fixed=curve["eta_fixed"],
            k_curves=curve["k_curves"],
            margin=curve["margin"],
            l_min=curve["l_min"],
            l_max=curve["l_max"],
            identity=curve["identity"],
        )
    )
    bb = header["backbone"]
    model = SclmModel(
        mode=header["mode"],
        vocab=Vocab(tokens=tuple(header["vocab"])),
        cache=cache,
        schedule=build_schedule(header["schedule"]["T"], header["schedule"]["kind"]),
        backbone=BackboneConfig(**bb),
        embed_dim=header["embed_dim"],
        k_curves=header["k_curves"],
        unit_norm=header["unit_norm"],
        lambda_anchor=header["lambda_anchor"],
        seed=header["seed"],
        force_k_head=header.get("force_k_head", False),
    )
    for name in header["params"]:
        if blobs[name].shape != model.store[name].data.shape:
            raise CheckpointVersionMismatch(
                f"blob {name} has shape {blobs[name].shape}, model expects {model.store[name].data.shape}"
            )
        model.store[name].data[...] = blobs[name]
        model.store.moment1[name][...] = blobs[f"opt.m.{name}"]
        model.store.moment2[name][...] = blobs[f"opt.v.{name}"]
    model.store.step_count = header["opt_step_count"]
    return model, header["step"], header

"""Versioned binary checkpoints.

Layout::

    8 bytes   magic  b"KGSCKPT\\0"
    4 bytes   format version, uint32 little-endian
    8 bytes   header length N, uint64 little-endian
    N bytes   UTF-8 JSON header (kind, metadata, array names and shapes)
    rest      every array in header order, float64 little-endian, row-major

KGEM checkpoints store the entity rows followed by the predicate rows.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError
from .features import FeatureNormalizer
from .kgem.model import KGEModel, KgemConfig
from .kgem.scoring import make_scoring
from .nn import MLP

MAGIC = b"KGSCKPT\0"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def write_checkpoint(path, kind: str, meta: dict, arrays: list[tuple[str, np.ndarray]]) -> Path:
    path = Path(path)
    header = {
        "kind": kind,
        "meta": meta,
        "arrays": [{"name": name, "shape": list(np.shape(arr))} for name, arr in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_checkpoint(path, expect_kind: str | None = None):
    """``(header, {name: array})`` from a checkpoint file."""
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint")
    magic, version, n = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(data[start:start + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise CheckpointError(f"{path}: expected a {expect_kind} checkpoint, got {header.get('kind')!r}")
    offset = start + n
    arrays = {}
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated payload")
        arrays[spec["name"]] = np.frombuffer(data[offset:end], dtype="<f8").reshape(spec["shape"]).astype(np.float64)
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return header, arrays


def save_kgem(model: KGEModel, path, kg=None) -> Path:
    E, P = model.entity_embeddings_, model.predicate_embeddings_
    meta = {
        "scoring": model.scoring,
        "dim": model.dim,
        "n_entities": int(E.shape[0]),
        "n_predicates": int(P.shape[0]),
        "config": model.config.to_dict(),
        "loss_history": [float(x) for x in getattr(model, "loss_history_", [])],
    }
    if kg is not None:
        meta["entities"] = kg.entities.labels
        meta["predicates"] = kg.predicates.labels
    return write_checkpoint(path, "kgem", meta, [("entities", E), ("predicates", P)])


def load_kgem(path) -> KGEModel:
    header, arrays = read_checkpoint(path, "kgem")
    meta = header["meta"]
    model = KGEModel.from_config(KgemConfig.from_dict(meta["config"]))
    model.entity_embeddings_ = arrays["entities"]
    model.predicate_embeddings_ = arrays["predicates"]
    model.scoring_ = make_scoring(model.scoring, model.p_norm)
    model.n_entities_ = meta["n_entities"]
    model.loss_history_ = meta["loss_history"]
    model.labels_ = {k: meta[k] for k in ("entities", "predicates") if k in meta}
    return model


def _mlp_arrays(prefix: str, net: MLP):
    out = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out += [(f"{prefix}.{i}.weight", w), (f"{prefix}.{i}.bias", b)]
    return out


def _mlp_from(prefix: str, desc: dict, arrays: dict) -> MLP:
    net = MLP(desc["sizes"], desc["hidden"], desc["output"], desc["dropout"])
    for i in range(len(net.weights)):
        net.weights[i][...] = arrays[f"{prefix}.{i}.weight"]
        net.biases[i][...] = arrays[f"{prefix}.{i}.bias"]
    return net


def save_twigi(model, path) -> Path:
    net = model.network_
    meta = {
        "params": _jsonable(model.get_params()),
        "network": net.describe(),
        "feature_names": list(model.feature_names_),
        "stages": model.stages_,
        "kg_name": getattr(model, "kg_name_", None),
        "loss_history": [float(x) for x in model.loss_history_],
    }
    arrays = _mlp_arrays("net", net)
    if hasattr(model, "normalizer_"):
        arrays += [("normalizer.mean", model.normalizer_.mean_),
                   ("normalizer.scale", model.normalizer_.scale_)]
    return write_checkpoint(path, "twigi", meta, arrays)


def load_twigi(path):
    from .twigi import TwigI

    header, arrays = read_checkpoint(path, "twigi")
    meta = header["meta"]
    params = dict(meta["params"])
    params["hidden"] = tuple(params["hidden"])
    params["ablation"] = tuple(params["ablation"])
    model = TwigI(**params)
    if list(model.feature_names_) != meta["feature_names"]:
        raise CheckpointError("stored feature names do not match the stored ablation")
    model.network_ = _mlp_from("net", meta["network"], arrays)
    if model.network_.n_inputs != len(meta["feature_names"]):
        raise CheckpointError("network input width does not match the feature list")
    model.stages_ = meta["stages"]
    model.kg_name_ = meta["kg_name"]
    model.loss_history_ = meta["loss_history"]
    model.validation_history_ = []
    if "normalizer.mean" in arrays:
        model.normalizer_ = FeatureNormalizer.from_arrays(arrays["normalizer.mean"], arrays["normalizer.scale"])
    return model


def save_twig(model, path) -> Path:
    net = model.net_
    meta = {
        "params": _jsonable(model.get_params()),
        "encoder": model.encoder_.get_state(),
        "networks": {"struct": net.struct.describe(), "hyper": net.hyper.describe(),
                     "trunk": net.trunk.describe()},
        "loss_history": model.loss_history_,
    }
    arrays = _mlp_arrays("struct", net.struct) + _mlp_arrays("hyper", net.hyper) + _mlp_arrays("trunk", net.trunk)
    arrays += [("normalizer.mean", model.normalizer_.mean_), ("normalizer.scale", model.normalizer_.scale_)]
    return write_checkpoint(path, "twig", meta, arrays)


def load_twig(path):
    from .twig.model import HyperEncoder, TwigModel, TwigNet

    header, arrays = read_checkpoint(path, "twig")
    meta = header["meta"]
    params = dict(meta["params"])
    for key in ("struct_widths", "hyper_widths", "trunk_widths"):
        params[key] = tuple(params[key])
    model = TwigModel(**params)
    model.encoder_ = HyperEncoder.from_state(meta["encoder"])
    model.normalizer_ = FeatureNormalizer.from_arrays(arrays["normalizer.mean"], arrays["normalizer.scale"])
    nets = meta["networks"]
    net = TwigNet.__new__(TwigNet)
    net.struct = _mlp_from("struct", nets["struct"], arrays)
    net.hyper = _mlp_from("hyper", nets["hyper"], arrays)
    net.trunk = _mlp_from("trunk", nets["trunk"], arrays)
    net._split = nets["struct"]["sizes"][-1]
    model.net_ = net
    model.loss_history_ = meta["loss_history"]
    return model


def _jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, (tuple, list, frozenset, set)):
            v = sorted(v) if isinstance(v, (frozenset, set)) else list(v)
        out[k] = v
    return out

"""Versioned self-describing binary checkpoints.

Layout (little-endian): magic "CITRISCK", version u32=1, kind string,
config JSON (estimator hyperparameters + fitted metadata), training-step
counter u64, then named float64 tensors. Saving and loading round-trips
bit-exactly, so a reloaded model reproduces evaluation outputs byte for
byte. Flow checkpoints embed their frozen autoencoder under an "ae::"
section tag.
"""

import io
import json
import struct

import numpy as np

MAGIC = b"CITRISCK"
VERSION = 1


def _pack_str(buf, s):
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _unpack_str(raw, off):
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    return raw[off:off + n].decode("utf-8"), off + n


def _config_json(config):
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def serialize_checkpoint(kind, config, step_count, arrays):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _pack_str(buf, kind)
    _pack_str(buf, _config_json(config))
    buf.write(struct.pack("<Q", step_count))
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        _pack_str(buf, name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.astype("<f8").tobytes())
    return buf.getvalue()


def deserialize_checkpoint(raw):
    if raw[:8] != MAGIC:
        raise ValueError("not a CITRISCK file")
    off = 8
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    kind, off = _unpack_str(raw, off)
    config_json, off = _unpack_str(raw, off)
    (step_count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    (n_tensors,) = struct.unpack_from("<I", raw, off)
    off += 4
    arrays = {}
    for _ in range(n_tensors):
        name, off = _unpack_str(raw, off)
        (ndim,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        off += 8 * count
        arrays[name] = arr.reshape(shape).copy()
    return kind, json.loads(config_json), step_count, arrays


def save_checkpoint(path, estimator, extra_meta=None):
    from .flow import CitrisNF

    kind = estimator.checkpoint_kind
    config = {"params": _plain_params(estimator),
              "meta": estimator._fitted_meta()}
    if extra_meta:
        config["meta"].update(extra_meta)
    arrays = dict(estimator.store_.state_arrays())
    if isinstance(estimator, CitrisNF):
        ae = estimator.autoencoder
        config["autoencoder"] = {"params": _plain_params(ae),
                                 "meta": ae._fitted_meta()}
        for name, arr in ae.store_.state_arrays().items():
            arrays[f"ae::{name}"] = arr
    data = serialize_checkpoint(kind, config, estimator.store_.step_count,
                                arrays)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def _plain_params(estimator):
    params = {}
    for key, value in estimator.get_params(deep=False).items():
        if key == "autoencoder":
            continue
        if isinstance(value, (np.integer,)):
            value = int(value)
        elif isinstance(value, (np.floating,)):
            value = float(value)
        params[key] = value
    return params


def load_checkpoint(path):
    from .autoencoder import StateAutoencoder
    from .flow import CitrisNF
    from .vae import CitrisVAE, IVAEStar

    with open(path, "rb") as fh:
        raw = fh.read()
    kind, config, step_count, arrays = deserialize_checkpoint(raw)
    classes = {"vae": CitrisVAE, "ivae-star": IVAEStar, "ae": StateAutoencoder,
               "nf": CitrisNF}
    if kind not in classes:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    if kind == "nf":
        ae_arrays = {name[4:]: arr for name, arr in arrays.items()
                     if name.startswith("ae::")}
        own_arrays = {name: arr for name, arr in arrays.items()
                      if not name.startswith("ae::")}
        ae = StateAutoencoder(**config["autoencoder"]["params"])
        ae._restore(config["autoencoder"]["meta"], ae_arrays)
        est = CitrisNF(autoencoder=ae, **config["params"])
        est._restore(config["meta"], own_arrays)
    else:
        est = classes[kind](**config["params"])
        est._restore(config["meta"], arrays)
    est.store_.step_count = step_count
    return est


def checkpoint_meta(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    kind, config, step_count, _ = deserialize_checkpoint(raw)
    return kind, config, step_count

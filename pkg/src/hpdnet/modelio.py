"""Binary model file.

Layout (little-endian)::

    "RCMM" | version u16 | section*
    section = tag (4 ASCII bytes) | length u32 | payload

Sections: ``META`` (sorted-key JSON), ``KERN`` (kernel bank, float64),
``NORM`` (feature mean/std, float64), ``CNNP`` (CNN tensors: count u32, then
per tensor ndim u32, dims u32..., float32 data in declaration order).
Unknown sections are skipped.
"""
import json
import struct
from dataclasses import asdict

import numpy as np

from .cnn import CnnConfig, CnnModel, param_shapes
from .errors import FormatError
from .kernels import KernelBank
from .polsar import _atomic_write

MODEL_MAGIC = b"RCMM"
MODEL_VERSION = 1


def _section(tag, payload):
    return tag + struct.pack("<I", len(payload)) + payload


def encode_model(model):
    """Serialize a ``PipelineModel`` to bytes."""
    cnn = model.cnn
    meta = {
        "class_ids": list(cnn.class_ids),
        "rcm_layers": model.rcm_layers,
        "loading": model.loading,
        "in_channels": cnn.in_channels,
        "cnn": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cnn.config).items()},
    }
    out = [MODEL_MAGIC, struct.pack("<H", MODEL_VERSION),
           _section(b"META", json.dumps(meta, sort_keys=True).encode())]
    if model.bank is not None:
        k = np.asarray(model.bank.kernels)
        head = struct.pack("<IIdqd", k.shape[0], k.shape[1], model.bank.epsilon,
                           model.bank.seed, model.bank.sample_fraction)
        body = np.stack([k.real, k.imag], axis=-1).astype("<f8").tobytes()
        ids = np.asarray(model.bank.class_ids, dtype="<u4").tobytes()
        out.append(_section(b"KERN", head + ids + body))
    d = cnn.in_channels
    out.append(_section(b"NORM", struct.pack("<I", d)
                        + np.asarray(cnn.feature_mean, dtype="<f8").tobytes()
                        + np.asarray(cnn.feature_std, dtype="<f8").tobytes()))
    tensors = [struct.pack("<I", len(cnn.params))]
    for name, arr in cnn.params.items():
        tensors.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        tensors.append(arr.astype("<f4").tobytes())
    out.append(_section(b"CNNP", b"".join(tensors)))
    return b"".join(out)


def save_model(path, model):
    _atomic_write(path, encode_model(model))


class _Reader:
    def __init__(self, data, base=0):
        self.data, self.pos, self.base = data, 0, base

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated {what}", self.base + len(self.data))
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def decode_model(data):
    from .pipeline import PipelineModel

    r = _Reader(data)
    if r.take(4, "magic") != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)", 0)
    (version,) = r.unpack("<H", "version")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}", 4)
    sections = {}
    while r.pos < len(data):
        tag = r.take(4, "section tag")
        (length,) = r.unpack("<I", "section length")
        sections[tag] = (r.pos, r.take(length, f"section {tag.decode(errors='replace')}"))
    for tag in (b"META", b"NORM", b"CNNP"):
        if tag not in sections:
            raise FormatError(f"model file lacks {tag.decode()} section", len(data))

    off, raw = sections[b"META"]
    try:
        meta = json.loads(raw.decode())
        cfg_d = {k: tuple(v) if isinstance(v, list) else v for k, v in meta["cnn"].items()}
        cfg = CnnConfig(**cfg_d)
        class_ids = tuple(int(c) for c in meta["class_ids"])
        in_channels, rcm_layers = int(meta["in_channels"]), int(meta["rcm_layers"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad META section: {exc}", off) from exc

    bank = None
    if rcm_layers > 0:
        if b"KERN" not in sections:
            raise FormatError("model uses RCM layers but has no KERN section", len(data))
        off, raw = sections[b"KERN"]
        kr = _Reader(raw, off)
        layers, ncls, eps, seed, frac = kr.unpack("<IIdqd", "kernel header")
        ids = tuple(int(c) for c in np.frombuffer(kr.take(4 * ncls, "kernel class ids"), "<u4"))
        body = np.frombuffer(kr.take(layers * ncls * 18 * 8, "kernels"), "<f8")
        body = body.reshape(layers, ncls, 3, 3, 2)
        bank = KernelBank(body[..., 0] + 1j * body[..., 1], ids, eps, seed, frac)
        if layers < rcm_layers:
            raise FormatError(f"model declares {rcm_layers} RCM layers, KERN holds {layers}", off)

    off, raw = sections[b"NORM"]
    nr = _Reader(raw, off)
    (d,) = nr.unpack("<I", "norm header")
    if d != in_channels:
        raise FormatError(f"NORM has {d} channels, META says {in_channels}", off)
    mean = np.frombuffer(nr.take(8 * d, "feature mean"), "<f8").astype(np.float64)
    std = np.frombuffer(nr.take(8 * d, "feature std"), "<f8").astype(np.float64)

    off, raw = sections[b"CNNP"]
    cr = _Reader(raw, off)
    (count,) = cr.unpack("<I", "tensor count")
    expected = param_shapes(cfg, in_channels, len(class_ids))
    if count != len(expected):
        raise FormatError(f"CNNP holds {count} tensors, configuration needs {len(expected)}", off)
    params = {}
    for name, shape in expected:
        (ndim,) = cr.unpack("<I", f"{name} rank")
        dims = cr.unpack(f"<{ndim}I", f"{name} shape")
        if tuple(dims) != tuple(shape):
            raise FormatError(f"{name} has shape {dims}, expected {shape}", off + cr.pos)
        n = int(np.prod(dims))
        params[name] = np.frombuffer(cr.take(4 * n, name), "<f4").astype(np.float64).reshape(dims)
    cnn = CnnModel(cfg, in_channels, class_ids, params, mean, std)
    return PipelineModel(bank, rcm_layers, cnn, float(meta.get("loading", 0.0)))


def load_model(path):
    with open(path, "rb") as fh:
        return decode_model(fh.read())

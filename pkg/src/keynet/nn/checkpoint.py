"""Network checkpoints: a self-describing single-file binary container.

Layout:  8-byte magic | u32 big-endian header length | UTF-8 JSON header
         | concatenated raw parameter bytes (little-endian, layer order).

The header carries the format version, head/loss kinds, input geometry,
per-layer kind + geometry, per-parameter shape/dtype/offset, and any
caller metadata. Writing is fully deterministic (sorted keys, no
timestamps), so identical networks produce byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .layers import layer_from_geometry
from .network import Network

MAGIC = b"KEYNET01"
FORMAT_VERSION = 1

_DTYPES = {"float32": np.float32, "float64": np.float64}


class CheckpointError(ValueError):
    pass


def save_network(net, path, *, meta=None):
    """Write ``net`` to ``path``; ``meta`` is any JSON-serializable dict."""
    entries = []
    blobs = []
    offset = 0
    for i, layer in enumerate(net.layers):
        for name, p in zip(layer.param_names, layer.params):
            raw = np.ascontiguousarray(p).astype(p.dtype.newbyteorder("<"),
                                                 copy=False).tobytes()
            entries.append({
                "layer": i,
                "name": name,
                "shape": list(p.shape),
                "dtype": str(p.dtype),
                "offset": offset,
                "nbytes": len(raw),
            })
            blobs.append(raw)
            offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "head": net.head,
        "loss": net.loss,
        "input_shape": list(net.input_shape),
        "layers": [{"kind": l.kind, "geometry": l.geometry()}
                   for l in net.layers],
        "params": entries,
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack(">I", len(hbytes)))
        f.write(hbytes)
        for raw in blobs:
            f.write(raw)


def load_network(path):
    """Read a checkpoint; returns (network, meta)."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise CheckpointError(
                f"{path}: bad magic {magic!r} (not a network checkpoint)")
        (hlen,) = struct.unpack(">I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported format version "
                f"{header.get('format_version')}")
        data = f.read()

    layers = [layer_from_geometry(spec["kind"], spec["geometry"])
              for spec in header["layers"]]
    net = Network(layers=layers, head=header["head"], loss=header["loss"],
                  input_shape=tuple(header["input_shape"]))
    for entry in header["params"]:
        layer = net.layers[entry["layer"]]
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype {entry['dtype']!r}")
        raw = data[entry["offset"]:entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointError(f"{path}: truncated parameter data")
        arr = np.frombuffer(raw, dtype=np.dtype(dtype).newbyteorder("<"))
        arr = arr.astype(dtype).reshape(entry["shape"])
        target = getattr(layer, entry["name"])
        if tuple(arr.shape) != tuple(target.shape):
            raise CheckpointError(
                f"{path}: parameter {entry['name']} shape {arr.shape} does "
                f"not match layer geometry {target.shape}")
        setattr(layer, entry["name"], arr)
    return net, header.get("meta", {})

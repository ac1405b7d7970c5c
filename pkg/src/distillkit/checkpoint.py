"""Model checkpoints as a single JSON document.

Arrays are stored as base64 of their little-endian float64 bytes, so a
save/load round trip is bit-exact.
"""

import base64
import json

import numpy as np

from .errors import FormatError
from .nn import Network
from .optim import MomentumSGD, MomentumState

FORMAT = "distillkit-checkpoint"
VERSION = 1


def encode_array(arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def decode_array(blob):
    raw = base64.b64decode(blob["data"])
    shape = tuple(blob["shape"])
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if arr.size != int(np.prod(shape)):
        raise FormatError(f"array payload has {arr.size} values, shape {list(shape)} needs {int(np.prod(shape))}")
    return arr.reshape(shape)


def checkpoint_dict(net, optimizer=None, seed=None, extra=None):
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "seed": seed,
        "input_shape": list(net.input_shape) if net.input_shape is not None else None,
        "layers": net.spec(),
        "params": {pid: encode_array(p) for pid, p in sorted(net.parameters().items())},
        "optimizer": None,
    }
    if optimizer is not None:
        doc["optimizer"] = {
            "lr": optimizer.lr,
            "momentum": optimizer.momentum,
            "velocity": {pid: encode_array(s.velocity) for pid, s in sorted(optimizer.states.items())},
        }
    if extra:
        doc["extra"] = extra
    return doc


def save_checkpoint(path, net, optimizer=None, seed=None, extra=None):
    with open(path, "w") as fh:
        json.dump(checkpoint_dict(net, optimizer, seed, extra), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(network, optimizer_or_None, seed, extra)``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: cannot read checkpoint ({exc})") from None
    return from_checkpoint_dict(doc, source=path)


def from_checkpoint_dict(doc, source="<checkpoint>"):
    if doc.get("format") != FORMAT:
        raise FormatError(f"{source}: not a {FORMAT} document")
    net = Network.from_spec(doc["layers"], doc["input_shape"], seed=0)
    params = net.parameters()
    if set(params) != set(doc["params"]):
        raise FormatError(f"{source}: parameter ids do not match the layer specs")
    for pid, blob in doc["params"].items():
        net.set_parameter(pid, decode_array(blob))
    optimizer = None
    if doc.get("optimizer"):
        o = doc["optimizer"]
        optimizer = MomentumSGD(o["lr"], o["momentum"])
        for pid, blob in o["velocity"].items():
            optimizer.states[pid] = MomentumState(decode_array(blob), o["momentum"], o["lr"])
    return net, optimizer, doc.get("seed"), doc.get("extra")

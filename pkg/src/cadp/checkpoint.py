"""Binary checkpoint container: named records with exact float64 payloads.

Layout (all integers little-endian):

    magic   8 bytes  b"CADPCKPT"
    version u32
    records until EOF, each:
        u32  name length
        ...  name (utf-8)
        u8   kind  (0 = raw bytes, 1 = float64 tensor, 2 = int64 tensor)
        u64  payload length in bytes
        ...  payload

Tensor payloads carry their own shape: u8 ndim, then u64 per dimension,
then the raw C-order array data. Exact byte round-trips are part of the
contract — resuming from a checkpoint must reproduce the original run
bit for bit.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigurationError, UsageError
from .replay import Episode, ReplayBuffer

MAGIC = b"CADPCKPT"
VERSION = 1

KIND_BYTES = 0
KIND_F64 = 1
KIND_I64 = 2


def _tensor_payload(arr):
    shape = arr.shape  # before ascontiguousarray, which promotes 0-d to 1-d
    arr = np.ascontiguousarray(arr)
    head = struct.pack("<B", len(shape))
    head += b"".join(struct.pack("<Q", d) for d in shape)
    return head + arr.tobytes()


def _tensor_from_payload(payload, dtype):
    (ndim,) = struct.unpack_from("<B", payload, 0)
    offset = 1
    shape = []
    for _ in range(ndim):
        (dim,) = struct.unpack_from("<Q", payload, offset)
        shape.append(dim)
        offset += 8
    arr = np.frombuffer(payload, dtype=dtype, offset=offset).reshape(shape)
    return arr.copy()  # writable, detached from the payload buffer


def save_records(path, records):
    """Write an ordered mapping of name -> bytes | float64 array | int64 array."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, value in records.items():
            if isinstance(value, (bytes, bytearray)):
                kind, payload = KIND_BYTES, bytes(value)
            elif isinstance(value, np.ndarray) and value.dtype == np.float64:
                kind, payload = KIND_F64, _tensor_payload(value)
            elif isinstance(value, np.ndarray) and value.dtype == np.int64:
                kind, payload = KIND_I64, _tensor_payload(value)
            else:
                raise UsageError(
                    f"record {name!r} must be bytes or a float64/int64 array"
                )
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", kind))
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_records(path):
    """Read a checkpoint file back into an ordered name -> value dict."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read checkpoint {path}: {exc}") from None
    if blob[: len(MAGIC)] != MAGIC:
        raise ConfigurationError(f"{path} is not a checkpoint file")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != VERSION:
        raise ConfigurationError(
            f"checkpoint version {version} is not supported (expected {VERSION})"
        )
    offset = len(MAGIC) + 4
    records = {}
    while offset < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (kind,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        (payload_len,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        payload = blob[offset : offset + payload_len]
        if len(payload) != payload_len:
            raise ConfigurationError(f"{path} is truncated at record {name!r}")
        offset += payload_len
        if kind == KIND_BYTES:
            records[name] = payload
        elif kind == KIND_F64:
            records[name] = _tensor_from_payload(payload, np.float64)
        elif kind == KIND_I64:
            records[name] = _tensor_from_payload(payload, np.int64)
        else:
            raise ConfigurationError(f"{path}: record {name!r} has unknown kind {kind}")
    return records


# ---------------------------------------------------------------------------
# Higher-level packing of training state components.
# ---------------------------------------------------------------------------

def pack_params(records, prefix, params):
    for name, tensor in params.items():
        records[f"{prefix}.{name}"] = np.ascontiguousarray(tensor.data)


def unpack_params(records, prefix, params):
    for name, tensor in params.items():
        key = f"{prefix}.{name}"
        if key not in records:
            raise ConfigurationError(f"checkpoint is missing parameter record {key!r}")
        arr = records[key]
        if arr.shape != tensor.data.shape:
            raise ConfigurationError(
                f"checkpoint parameter {key!r} has shape {arr.shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data[...] = arr


def pack_optimizer(records, prefix, optimizer):
    state = optimizer.state_dict()
    meta = {"kind": state["kind"], "step_count": state["step_count"]}
    records[f"{prefix}.meta"] = json.dumps(meta, sort_keys=True).encode("utf-8")
    for slot_name, per_param in state["slots"].items():
        for param_name, arr in per_param.items():
            records[f"{prefix}.{slot_name}.{param_name}"] = np.ascontiguousarray(arr)


def unpack_optimizer(records, prefix, optimizer):
    meta_key = f"{prefix}.meta"
    if meta_key not in records:
        raise ConfigurationError("checkpoint is missing the optimizer record")
    meta = json.loads(records[meta_key].decode("utf-8"))
    state = optimizer.state_dict()
    if meta["kind"] != state["kind"]:
        raise ConfigurationError(
            f"checkpoint optimizer kind {meta['kind']!r} does not match "
            f"configured {state['kind']!r}"
        )
    slots = {}
    for slot_name, per_param in state["slots"].items():
        slots[slot_name] = {}
        for param_name in per_param:
            key = f"{prefix}.{slot_name}.{param_name}"
            if key not in records:
                raise ConfigurationError(f"checkpoint is missing optimizer record {key!r}")
            slots[slot_name][param_name] = records[key]
    optimizer.load_state_dict(
        {"kind": meta["kind"], "step_count": meta["step_count"], "slots": slots}
    )


def pack_rng(records, name, generator):
    state = generator.bit_generator.state
    records[f"rng.{name}"] = json.dumps(state, sort_keys=True).encode("utf-8")


def unpack_rng(records, name, generator):
    key = f"rng.{name}"
    if key not in records:
        raise ConfigurationError(f"checkpoint is missing RNG record {key!r}")
    generator.bit_generator.state = json.loads(records[key].decode("utf-8"))


_BUFFER_FIELDS = ("obs", "state", "actions", "reward", "terminated", "avail")


def pack_buffer(records, buffer):
    episodes = buffer.episodes()
    lengths = np.array([ep.length for ep in episodes], dtype=np.int64)
    records["buffer.meta"] = json.dumps(
        {"capacity": buffer.capacity, "insert_count": buffer.insert_count},
        sort_keys=True,
    ).encode("utf-8")
    records["buffer.lengths"] = lengths
    if not episodes:
        return
    records["buffer.obs"] = np.concatenate([ep.obs for ep in episodes], axis=0)
    records["buffer.state"] = np.concatenate([ep.state for ep in episodes], axis=0)
    records["buffer.actions"] = np.concatenate([ep.actions for ep in episodes], axis=0)
    records["buffer.reward"] = np.concatenate([ep.reward for ep in episodes], axis=0)
    records["buffer.terminated"] = np.concatenate(
        [ep.terminated for ep in episodes], axis=0
    )
    records["buffer.avail"] = np.concatenate(
        [ep.avail.astype(np.int64) for ep in episodes], axis=0
    )


def unpack_buffer(records, spec):
    if "buffer.meta" not in records or "buffer.lengths" not in records:
        raise ConfigurationError("checkpoint is missing the replay buffer records")
    meta = json.loads(records["buffer.meta"].decode("utf-8"))
    buffer = ReplayBuffer(capacity=meta["capacity"], spec=spec)
    lengths = records["buffer.lengths"]
    if lengths.size == 0:
        buffer.insert_count = meta["insert_count"]
        return buffer
    arrays = {}
    for field in _BUFFER_FIELDS:
        key = f"buffer.{field}"
        if key not in records:
            raise ConfigurationError(f"checkpoint is missing buffer record {key!r}")
        arrays[field] = records[key]
    step_off = 0  # rows in per-step arrays (T each)
    bound_off = 0  # rows in per-boundary arrays (T + 1 each)
    for t in lengths:
        t = int(t)
        episode = Episode(
            obs=arrays["obs"][bound_off : bound_off + t + 1],
            state=arrays["state"][bound_off : bound_off + t + 1],
            actions=arrays["actions"][step_off : step_off + t],
            reward=arrays["reward"][step_off : step_off + t],
            terminated=arrays["terminated"][step_off : step_off + t],
            avail=arrays["avail"][bound_off : bound_off + t + 1].astype(bool),
        )
        buffer.insert(episode)
        step_off += t
        bound_off += t + 1
    buffer.insert_count = meta["insert_count"]
    return buffer

"""Versioned binary checkpoint container.

Layout (all integers little-endian):
  8-byte magic "DNEGCKPT", uint32 format version,
  uint32-length-prefixed UTF-8 config block (key=value lines),
  uint32-length-prefixed UTF-8 schedule block (key=value lines),
  uint32 entry count, then per tensor: uint16 name length, name bytes,
  uint8 rank, uint32 per dimension, raw float64 little-endian payload.
Round-trips are bitwise exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"DNEGCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    version: int
    tensors: dict[str, np.ndarray]
    config: dict[str, str]
    schedule: dict[str, str]


def _encode_block(mapping: dict[str, str]) -> bytes:
    lines = []
    for key, value in mapping.items():
        if "\n" in key or "\n" in str(value) or "=" in key:
            raise CheckpointError(f"unencodable metadata entry {key!r}")
        lines.append(f"{key}={value}")
    return "\n".join(lines).encode("utf-8")


def _decode_block(raw: bytes) -> dict[str, str]:
    out: dict[str, str] = {}
    if not raw:
        return out
    for line in raw.decode("utf-8").split("\n"):
        key, _, value = line.partition("=")
        out[key] = value
    return out


def save_checkpoint(path, tensors: dict[str, np.ndarray], config: dict[str, str],
                    schedule: dict[str, str]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for block in (_encode_block(config), _encode_block(schedule)):
            fh.write(struct.pack("<I", len(block)))
            fh.write(block)
        fh.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            # ascontiguousarray would promote rank-0 arrays to rank-1, so
            # only invoke it where a copy is actually needed.
            arr = np.asarray(value, dtype=np.float64)
            if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    view = memoryview(data)
    if bytes(view[:8]) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    pos = 8

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        values = struct.unpack_from(fmt, view, pos)
        pos += size
        return values[0] if len(values) == 1 else values

    version = take("<I")
    if version != VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version}, this build reads version {VERSION}")
    blocks = []
    for _ in range(2):
        length = take("<I")
        blocks.append(bytes(view[pos:pos + length]))
        pos += length
    count = take("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = take("<H")
        name = bytes(view[pos:pos + name_len]).decode("utf-8")
        pos += name_len
        rank = take("<B")
        shape = tuple(take("<I") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(view, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += size * 8
        tensors[name] = arr.astype(np.float64)
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return Checkpoint(version, tensors, _decode_block(blocks[0]), _decode_block(blocks[1]))

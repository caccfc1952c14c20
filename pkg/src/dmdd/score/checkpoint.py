"""Score-network checkpoints: JSON header line + raw parameter payload.

The header records the architecture, the diffusion schedule the net was
trained against, per-tensor (name, shape, dtype, offset) entries and a
CRC32 of the payload, so a checkpoint is self-describing and integrity
checked on load.
"""

from __future__ import annotations

import json
import os
import zlib

import numpy as np

from ..diffusion import make_vp_schedule
from ..errors import ArchitectureMismatchError, ChecksumError, CheckpointError
from .net import ConvScoreNet, ScoreNetSpec

CHECKPOINT_FORMAT = "score-checkpoint-v1"


def save_checkpoint(net: ConvScoreNet, path: str | os.PathLike) -> None:
    params = net.parameters()
    tensors = []
    blobs = []
    offset = 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        blob = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        tensors.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": arr.dtype.str.lstrip("<>="),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    header = {
        "format": CHECKPOINT_FORMAT,
        "spec": net.spec.to_dict(),
        "dtype": net.dtype.str.lstrip("<>="),
        "schedule": None
        if net.schedule is None
        else {
            "n_steps": net.schedule.n_steps,
            "rate_min": net.schedule.rate_min,
            "rate_max": net.schedule.rate_max,
        },
        "train_data_power": net.train_data_power,
        "tensors": tensors,
        "crc32": zlib.crc32(payload) & 0xFFFFFFFF,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(payload)


def load_checkpoint(path: str | os.PathLike, expect_n: int | None = None) -> ConvScoreNet:
    with open(path, "rb") as fh:
        line = fh.readline()
        if not line.endswith(b"\n"):
            raise CheckpointError("missing header terminator")
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError("unreadable header") from exc
        if header.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"unsupported format {header.get('format')!r}")
        payload = fh.read()
    if (zlib.crc32(payload) & 0xFFFFFFFF) != header["crc32"]:
        raise ChecksumError("parameter payload failed its CRC check")
    spec = ScoreNetSpec.from_dict(header["spec"])
    if expect_n is not None:
        if spec.expected_length is not None and spec.expected_length != expect_n:
            raise ArchitectureMismatchError(
                f"checkpoint was trained for length {spec.expected_length}, "
                f"requested {expect_n}"
            )
    schedule = None
    if header.get("schedule"):
        s = header["schedule"]
        schedule = make_vp_schedule(s["n_steps"], s["rate_min"], s["rate_max"])
    net = ConvScoreNet(spec, dtype=np.dtype(header["dtype"]), schedule=schedule)
    values = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]).newbyteorder("<"))
        values[entry["name"]] = arr.reshape(entry["shape"])
    try:
        net.set_parameters(values)
    except (KeyError, ValueError) as exc:
        raise ArchitectureMismatchError(str(exc)) from exc
    net.train_data_power = header.get("train_data_power")
    return net

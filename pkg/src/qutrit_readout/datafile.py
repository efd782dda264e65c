"""QRT1 binary dataset files.

Layout (little-endian)::

    b"QRT1"                      magic
    u32                          format version (1)
    u32 + UTF-8 JSON             header: device, states, shots_per_state,
                                 n_shots, n_samples, split, rng, seed
    per shot:
        N x float32              I samples
        N x float32              Q samples
        u32 + UTF-8 JSON         ground-truth record
    u32                          CRC32 of everything between the version
                                 field and this checksum
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .sim import DeviceConfig, GroundTruth, SPLIT_NAMES, TraceDataset

MAGIC = b"QRT1"
VERSION = 1


class DatasetFormatError(ValueError):
    pass


class BadMagicError(DatasetFormatError):
    pass


class UnsupportedVersionError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _prefixed(blob: bytes) -> bytes:
    return struct.pack("<I", len(blob)) + blob


def dataset_bytes(dataset: TraceDataset) -> bytes:
    header = {
        "device": dataset.device.to_dict(),
        "states": [list(s) for s in dataset.states],
        "shots_per_state": dataset.shots_per_state,
        "n_shots": len(dataset),
        "n_samples": dataset.i_samples.shape[1],
        "split": [SPLIT_NAMES[c] for c in dataset.split],
        "rng": dataset.rng_name,
        "seed": dataset.seed,
    }
    parts = [_prefixed(_json_bytes(header))]
    i_le = np.ascontiguousarray(dataset.i_samples, dtype="<f4")
    q_le = np.ascontiguousarray(dataset.q_samples, dtype="<f4")
    for k, truth in enumerate(dataset.truths):
        parts.append(i_le[k].tobytes())
        parts.append(q_le[k].tobytes())
        parts.append(_prefixed(_json_bytes(truth.to_dict())))
    payload = b"".join(parts)
    return MAGIC + struct.pack("<I", VERSION) + payload + struct.pack("<I", zlib.crc32(payload))


def write_dataset(dataset: TraceDataset, path) -> None:
    Path(path).write_bytes(dataset_bytes(dataset))


def read_dataset(path) -> TraceDataset:
    return parse_dataset(Path(path).read_bytes())


def parse_dataset(data: bytes) -> TraceDataset:
    if len(data) < 8:
        raise TruncatedFileError("file shorter than the fixed preamble")
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    end = len(data) - 4
    if end < 12:
        raise TruncatedFileError("file ends before the header")
    crc_ok = zlib.crc32(data[8:end]) == struct.unpack_from("<I", data, end)[0]

    pos = 8

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > end:
            raise TruncatedFileError(f"record at byte {pos} runs past the end of the file")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    def take_json():
        (n,) = struct.unpack("<I", take(4))
        raw = take(n)
        try:
            return json.loads(raw)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            if not crc_ok:
                raise ChecksumError("CRC32 mismatch (corrupted JSON record)") from exc
            raise DatasetFormatError(f"invalid JSON record at byte {pos - n}") from exc

    header = take_json()
    n_shots, n = header["n_shots"], header["n_samples"]
    i_samples = np.empty((n_shots, n), dtype=np.float32)
    q_samples = np.empty((n_shots, n), dtype=np.float32)
    truths = []
    for k in range(n_shots):
        i_samples[k] = np.frombuffer(take(4 * n), dtype="<f4")
        q_samples[k] = np.frombuffer(take(4 * n), dtype="<f4")
        truths.append(take_json())
    if pos != end or not crc_ok:
        raise ChecksumError("CRC32 mismatch")

    return TraceDataset(
        device=DeviceConfig.from_dict(header["device"]),
        states=[tuple(s) for s in header["states"]],
        shots_per_state=header["shots_per_state"],
        i_samples=i_samples,
        q_samples=q_samples,
        truths=[GroundTruth.from_dict(t) for t in truths],
        split=np.array([SPLIT_NAMES.index(s) for s in header["split"]], dtype=np.uint8),
        rng_name=header["rng"],
    )

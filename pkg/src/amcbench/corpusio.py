"""Binary labeled-corpus files: magic "AMCI", little-endian throughout.

Layout:
  header:  magic 4s | version u16 | frame count u32 | frame length u16 |
           class count u16 | per class: name length u16 + utf-8 bytes
  record:  class id u8 | snr_db f32 (+inf = clean) | seed u64 |
           frame length interleaved (I, Q) f32 pairs

Samples are stored as 32-bit floats (SDR convention); compute stays 64-bit.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import DataError
from .modem import FRAME_LEN, IqFrame, ModulationClass
from .version import CORPUS_FORMAT_VERSION

MAGIC = b"AMCI"

_HEADER = struct.Struct("<4sHIH")
_RECORD_META = struct.Struct("<BfQ")


def write_corpus(path, frames, class_names=None):
    """Write frames to `path` atomically; partial output is removed on failure."""
    if class_names is None:
        class_names = [c.name for c in ModulationClass]
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, CORPUS_FORMAT_VERSION, len(frames), FRAME_LEN))
            fh.write(struct.pack("<H", len(class_names)))
            for name in class_names:
                raw = name.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
            for frame in frames:
                fh.write(_RECORD_META.pack(int(frame.label), np.float32(frame.snr_db), frame.seed))
                interleaved = np.empty(2 * FRAME_LEN, dtype="<f4")
                interleaved[0::2] = frame.samples.real
                interleaved[1::2] = frame.samples.imag
                fh.write(interleaved.tobytes())
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_corpus(path):
    """Read a corpus file; returns (frames, class_names)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise DataError(f"{path}: truncated corpus header")
    magic, version, count, frame_len = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != CORPUS_FORMAT_VERSION:
        raise DataError(f"{path}: unsupported corpus format version {version}")
    if frame_len != FRAME_LEN:
        raise DataError(f"{path}: frame length {frame_len} != {FRAME_LEN}")
    offset = _HEADER.size
    (n_names,) = struct.unpack_from("<H", blob, offset)
    offset += 2
    class_names = []
    for _ in range(n_names):
        (ln,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        class_names.append(blob[offset:offset + ln].decode("utf-8"))
        offset += ln

    record_size = _RECORD_META.size + 8 * FRAME_LEN
    expected = offset + count * record_size
    if len(blob) != expected:
        raise DataError(f"{path}: size {len(blob)} != expected {expected} for {count} records")

    frames = []
    for _ in range(count):
        class_id, snr_db, seed = _RECORD_META.unpack_from(blob, offset)
        offset += _RECORD_META.size
        if class_id >= n_names:
            raise DataError(f"{path}: class id {class_id} outside table of {n_names} names")
        flat = np.frombuffer(blob, dtype="<f4", count=2 * FRAME_LEN, offset=offset)
        offset += 8 * FRAME_LEN
        samples = flat[0::2].astype(np.float64) + 1j * flat[1::2].astype(np.float64)
        frames.append(IqFrame(samples=samples, label=ModulationClass(class_id),
                              snr_db=float(snr_db), seed=seed))
    return frames, class_names

"""SIGSET v1 container I/O (see the primary trainer's documented layout).

Little-endian: magic "SIGS", u16 version=1, u16 num_classes, u32 num_samples,
u32 length L, u8 channels=2, u8 reserved; then u16-length-prefixed UTF-8
class names; then per sample u16 class_id, i16 snr_db, u64 seed, and
2*L float32 (I row then Q row).
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SIGS"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIBB")
_SAMPLE_HEAD = struct.Struct("<HhQ")


class SigsetError(Exception):
    pass


def write_sigset_streaming(path, classes: list[str], num_samples: int,
                           length: int, sample_iter) -> None:
    """Write samples from an iterator of (class_id, snr_db, iq[2,L] float32).

    Streaming: never holds more than one sample in memory.
    """
    if num_samples < 1:
        raise ValueError("cannot write an empty SIGSET")
    written = 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(classes), num_samples, length, 2, 0))
        for name in classes:
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)) + raw)
        for class_id, snr_db, iq in sample_iter:
            iq = np.ascontiguousarray(iq, dtype="<f4")
            if iq.shape != (2, length):
                raise ValueError(f"sample shape {iq.shape} != (2, {length})")
            f.write(_SAMPLE_HEAD.pack(class_id, snr_db, 0))  # seed 0: imported
            f.write(iq.tobytes())
            written += 1
    if written != num_samples:
        raise ValueError(f"wrote {written} samples, header promised {num_samples}")


class SigsetReader:
    """Minimal random-access reader used for the lossless-conversion audit."""

    def __init__(self, path):
        self.path = str(path)
        with open(path, "rb") as f:
            head = f.read(_HEADER.size)
            if len(head) < _HEADER.size:
                raise SigsetError(f"{path}: header truncated")
            magic, version, n_classes, n_samples, length, channels, _ = _HEADER.unpack(head)
            if magic != MAGIC:
                raise SigsetError(f"{path}: not a SIGSET file")
            if version != VERSION:
                raise SigsetError(f"{path}: unsupported SIGSET version {version}")
            self.classes = []
            for _ in range(n_classes):
                (n,) = struct.unpack("<H", f.read(2))
                self.classes.append(f.read(n).decode("utf-8"))
            self.num_samples = n_samples
            self.length = length
            self._data_offset = f.tell()
            self._sample_bytes = _SAMPLE_HEAD.size + channels * length * 4

    def read_sample(self, index: int):
        """Returns (class_id, snr_db, iq[2,L] float32)."""
        if not 0 <= index < self.num_samples:
            raise IndexError(index)
        with open(self.path, "rb") as f:
            f.seek(self._data_offset + index * self._sample_bytes)
            raw = f.read(self._sample_bytes)
        class_id, snr_db, _seed = _SAMPLE_HEAD.unpack_from(raw)
        iq = np.frombuffer(raw, dtype="<f4", offset=_SAMPLE_HEAD.size)
        return class_id, snr_db, iq.reshape(2, self.length).copy()


def read_sigset(path) -> SigsetReader:
    return SigsetReader(path)

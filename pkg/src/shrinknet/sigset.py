"""SIGSET: portable binary container for labeled I/Q captures.

Little-endian layout: magic "SIGS", u16 version=1, u16 num_classes,
u32 num_samples, u32 length L, u8 channels=2, u8 reserved, then
length-prefixed (u16) UTF-8 class names, then per sample:
u16 class_id, i16 snr_db, u64 seed, 2*L float32 (I row then Q row).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .signals import SignalSample

MAGIC = b"SIGS"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIBB")
_SAMPLE_HEAD = struct.Struct("<HhQ")


class SigsetError(Exception):
    pass


class BadMagicError(SigsetError):
    pass


class UnsupportedVersionError(SigsetError):
    pass


class TruncatedError(SigsetError):
    pass


def write_sigset(path, samples, classes: list[str]) -> None:
    if not samples:
        raise ValueError("cannot write an empty SIGSET")
    length = samples[0].iq.shape[1]
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(classes), len(samples), length, 2, 0))
        for name in classes:
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)) + raw)
        for s in samples:
            iq = np.ascontiguousarray(s.iq, dtype="<f4")
            if iq.shape != (2, length):
                raise ValueError(f"sample shape {iq.shape} != (2, {length})")
            f.write(_SAMPLE_HEAD.pack(s.class_id, s.snr_db, s.seed))
            f.write(iq.tobytes())


@dataclass
class SigsetReader:
    """Streaming reader; samples are decoded on demand."""

    path: str
    classes: list[str]
    num_samples: int
    length: int
    _data_offset: int
    _sample_bytes: int

    @classmethod
    def open(cls, path) -> "SigsetReader":
        with open(path, "rb") as f:
            head = f.read(_HEADER.size)
            if len(head) < _HEADER.size:
                raise TruncatedError(f"{path}: header truncated")
            magic, version, n_classes, n_samples, length, channels, _ = _HEADER.unpack(head)
            if magic != MAGIC:
                raise BadMagicError(f"{path}: not a SIGSET file (magic {magic!r})")
            if version != VERSION:
                raise UnsupportedVersionError(f"{path}: unsupported SIGSET version {version}")
            classes = []
            for _ in range(n_classes):
                (n,) = struct.unpack("<H", f.read(2))
                classes.append(f.read(n).decode("utf-8"))
            data_offset = f.tell()
            sample_bytes = _SAMPLE_HEAD.size + channels * length * 4
            f.seek(0, 2)
            payload = f.tell() - data_offset
            expected = n_samples * sample_bytes
            if payload < expected:
                raise TruncatedError(
                    f"{path}: payload holds {payload // sample_bytes} of "
                    f"{n_samples} samples ({payload} < {expected} bytes)")
        return cls(path=str(path), classes=classes, num_samples=n_samples,
                   length=length, _data_offset=data_offset, _sample_bytes=sample_bytes)

    def read_sample(self, index: int) -> SignalSample:
        if not 0 <= index < self.num_samples:
            raise IndexError(index)
        with open(self.path, "rb") as f:
            f.seek(self._data_offset + index * self._sample_bytes)
            raw = f.read(self._sample_bytes)
        class_id, snr_db, seed = _SAMPLE_HEAD.unpack_from(raw)
        iq = np.frombuffer(raw, dtype="<f4", offset=_SAMPLE_HEAD.size).reshape(2, self.length)
        return SignalSample(iq=iq.copy(), class_id=class_id, snr_db=snr_db, seed=seed)

    def __iter__(self):
        with open(self.path, "rb") as f:
            f.seek(self._data_offset)
            for _ in range(self.num_samples):
                raw = f.read(self._sample_bytes)
                class_id, snr_db, seed = _SAMPLE_HEAD.unpack_from(raw)
                iq = np.frombuffer(raw, dtype="<f4", offset=_SAMPLE_HEAD.size).reshape(2, self.length)
                yield SignalSample(iq=iq.copy(), class_id=class_id, snr_db=snr_db, seed=seed)

    def load_arrays(self):
        """Bulk decode: (iq [N,2,L] float32, class_ids [N], snrs [N], seeds [N])."""
        n = self.num_samples
        iq = np.empty((n, 2, self.length), dtype=np.float32)
        cids = np.empty(n, dtype=np.int64)
        snrs = np.empty(n, dtype=np.int64)
        seeds = np.empty(n, dtype=np.uint64)
        for i, s in enumerate(self):
            iq[i] = s.iq
            cids[i] = s.class_id
            snrs[i] = s.snr_db
            seeds[i] = s.seed
        return iq, cids, snrs, seeds


def read_sigset(path) -> SigsetReader:
    return SigsetReader.open(path)


def build_dataset(spec, out_path, manifest_path=None) -> SigsetReader:
    """Generate the full (class, snr) grid, write the SIGSET file and a
    deterministic stratified 60/20/20 split manifest next to it."""
    from .signals import generate_dataset, stratified_split, write_manifest

    samples = generate_dataset(spec)
    write_sigset(out_path, samples, [c.lower() for c in spec.classes])
    if manifest_path is None:
        manifest_path = str(out_path) + ".manifest"
    n_cells = len(spec.classes) * len(spec.snr_grid)
    write_manifest(manifest_path, stratified_split(spec.samples_per_cell, n_cells))
    return SigsetReader.open(out_path)

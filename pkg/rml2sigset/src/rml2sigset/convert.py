"""Conversion from RML2016 pickle containers and RML2018 HDF5 to SIGSET."""

from __future__ import annotations

import pickle
import re
from dataclasses import dataclass

import numpy as np

from .sigset import write_sigset_streaming

FLAVORS = ("rml2016a", "rml2016b", "rml2018a")

# canonical class order of the RML2018.01a release (the HDF5 file itself
# carries only one-hot labels, not names)
RML2018A_CLASSES = [
    "OOK", "4ASK", "8ASK", "BPSK", "QPSK", "8PSK", "16PSK", "32PSK",
    "16APSK", "32APSK", "64APSK", "128APSK", "16QAM", "32QAM", "64QAM",
    "128QAM", "256QAM", "AM-SSB-WC", "AM-SSB-SC", "AM-DSB-WC", "AM-DSB-SC",
    "FM", "GMSK", "OQPSK",
]


def canonical_name(label: str) -> str:
    """Lowercase ASCII class name shared with the synthetic generator
    where classes coincide (QAM16 -> 16qam, etc.)."""
    name = label.strip().lower()
    m = re.fullmatch(r"qam(\d+)", name)
    if m:
        return f"{m.group(1)}qam"
    return name


@dataclass
class RmlSource:
    path: str
    flavor: str
    classes: list[str]        # canonical names, source order
    source_labels: list[str]  # original labels, same order
    snr_levels: list[int]
    length: int


class ConvertError(Exception):
    pass


def _load_2016(path) -> dict:
    try:
        with open(path, "rb") as f:
            data = pickle.load(f, encoding="latin1")
    except (pickle.UnpicklingError, EOFError, UnicodeDecodeError) as e:
        raise ConvertError(f"{path}: unreadable RML2016 container ({e})") from e
    if not isinstance(data, dict) or not data:
        raise ConvertError(f"{path}: not an RML2016 (modulation, snr) -> array mapping")
    return data


def detect_source(path, flavor: str) -> RmlSource:
    if flavor not in FLAVORS:
        raise ConvertError(f"unknown flavor {flavor!r}; valid: {', '.join(FLAVORS)}")
    if flavor in ("rml2016a", "rml2016b"):
        data = _load_2016(path)
        labels = sorted({mod for mod, _ in data})
        snrs = sorted({int(snr) for _, snr in data})
        length = next(iter(data.values())).shape[2]
        return RmlSource(path=str(path), flavor=flavor,
                         classes=[canonical_name(m) for m in labels],
                         source_labels=labels, snr_levels=snrs, length=length)
    import h5py
    with h5py.File(path, "r") as f:
        for key in ("X", "Y", "Z"):
            if key not in f:
                raise ConvertError(f"{path}: missing dataset {key!r} (expected RML2018 layout)")
        length = f["X"].shape[1]
        n_classes = f["Y"].shape[1]
        snrs = sorted(int(s) for s in np.unique(f["Z"][:]))
    if n_classes != len(RML2018A_CLASSES):
        raise ConvertError(
            f"{path}: {n_classes} label columns, expected {len(RML2018A_CLASSES)}")
    return RmlSource(path=str(path), flavor=flavor,
                     classes=[canonical_name(m) for m in RML2018A_CLASSES],
                     source_labels=list(RML2018A_CLASSES),
                     snr_levels=snrs, length=length)


def _apply_filters(source: RmlSource, class_filter, snr_filter):
    classes = source.classes
    keep_class = list(range(len(classes)))
    if class_filter:
        wanted = {canonical_name(c) for c in class_filter}
        keep_class = [i for i, c in enumerate(classes) if c in wanted]
        if not keep_class:
            raise ConvertError(
                f"class filter matches nothing; available: {', '.join(classes)}")
    snrs = source.snr_levels
    if snr_filter:
        snrs = [s for s in source.snr_levels if s in set(snr_filter)]
        if not snrs:
            raise ConvertError(
                f"snr filter matches nothing; available: {source.snr_levels}")
    return keep_class, snrs


def _split_manifest(cell_of: np.ndarray, seed: int,
                    fractions=(0.6, 0.2, 0.2)) -> list[str]:
    """Stratified per-cell 60/20/20 assignment, seeded shuffle within cells."""
    rng = np.random.default_rng(seed)
    parts = [""] * len(cell_of)
    for cell in np.unique(cell_of):
        idx = np.flatnonzero(cell_of == cell)
        idx = idx[rng.permutation(len(idx))]
        n = len(idx)
        n_train = int(round(n * fractions[0]))
        n_val = int(round(n * fractions[1]))
        for i in idx[:n_train]:
            parts[i] = "train"
        for i in idx[n_train:n_train + n_val]:
            parts[i] = "val"
        for i in idx[n_train + n_val:]:
            parts[i] = "test"
    return parts


def _write_manifest(path, parts: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, part in enumerate(parts):
            f.write(f"{i} {part}\n")


def convert(source: RmlSource, out_path, class_filter=None, snr_filter=None,
            split_seed: int = 0, manifest_path=None, chunk: int = 4096) -> int:
    """Write the SIGSET file + split manifest; returns the sample count."""
    keep_class, snrs = _apply_filters(source, class_filter, snr_filter)
    out_classes = [source.classes[i] for i in keep_class]
    remap = {old: new for new, old in enumerate(keep_class)}
    snr_set = set(snrs)

    if source.flavor in ("rml2016a", "rml2016b"):
        data = _load_2016(source.path)
        cells = []  # (new_class_id, snr, array) in output order
        for new_id, old_id in enumerate(keep_class):
            label = source.source_labels[old_id]
            for snr in snrs:
                arr = data.get((label, snr))
                if arr is not None and len(arr):
                    cells.append((new_id, snr, np.asarray(arr, dtype=np.float32)))
        total = sum(len(a) for _, _, a in cells)
        if total == 0:
            raise ConvertError("no samples after filtering")

        def sample_iter():
            for cid, snr, arr in cells:
                for row in arr:
                    yield cid, snr, row

        write_sigset_streaming(out_path, out_classes, total, source.length,
                               sample_iter())
        cell_of = np.concatenate([
            np.full(len(a), k, dtype=np.int64) for k, (_, _, a) in enumerate(cells)])
    else:
        import h5py
        with h5py.File(source.path, "r") as f:
            labels = np.argmax(f["Y"][:], axis=1)
            z = np.asarray(f["Z"][:]).reshape(-1).astype(int)
        keep = np.isin(labels, keep_class) & np.isin(z, list(snr_set))
        keep_idx = np.flatnonzero(keep)
        total = len(keep_idx)
        if total == 0:
            raise ConvertError("no samples after filtering")

        def sample_iter():
            with h5py.File(source.path, "r") as f:
                x = f["X"]
                for lo in range(0, total, chunk):
                    sel = keep_idx[lo:lo + chunk]
                    block = x[sel]  # [n, L, 2]
                    for j, i in enumerate(sel):
                        yield (remap[int(labels[i])], int(z[i]),
                               np.ascontiguousarray(block[j].T, dtype=np.float32))

        write_sigset_streaming(out_path, out_classes, total, source.length,
                               sample_iter())
        # cell id = class * n_snr_levels + snr rank
        snr_rank = {s: k for k, s in enumerate(sorted(snr_set))}
        cell_of = np.array(
            [remap[int(labels[i])] * len(snr_rank) + snr_rank[int(z[i])]
             for i in keep_idx], dtype=np.int64)

    if manifest_path is None:
        manifest_path = str(out_path) + ".manifest"
    _write_manifest(manifest_path, _split_manifest(cell_of, split_seed))
    return total

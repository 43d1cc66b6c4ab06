"""Synthetic modulated-baseband capture generation.

Linear classes use Gray-mapped unit-power constellations shaped with a
root-raised-cosine filter; CPFSK/GFSK are phase-continuous with modulation
index 0.5. The channel applies a random phase, a carrier frequency offset
and AWGN calibrated against the measured signal power.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

# Gray-coded QPSK: 00 -> (+1+j)/sqrt2, 01 -> (-1+j)/sqrt2, 11 -> (-1-j)/sqrt2, 10 -> (+1-j)/sqrt2
_QPSK = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / np.sqrt(2)

# 8PSK with Gray mapping of the 3-bit index onto the phase wheel
_GRAY3 = [0, 1, 3, 2, 6, 7, 5, 4]
_8PSK = np.exp(1j * 2 * np.pi * np.argsort(_GRAY3) / 8)

_PAM4_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(5.0)  # Gray order -3,-1,3,1 in index space
# 4ASK kept unipolar so it stays distinguishable from PAM4 under phase rotation
_4ASK_LEVELS = np.array([0.0, 1.0, 2.0, 3.0]) / np.sqrt(3.5)


def _qam_constellation(m: int) -> np.ndarray:
    """Square QAM with per-axis Gray mapping, unit average power."""
    side = int(np.sqrt(m))
    levels = 2 * np.arange(side) - (side - 1)
    gray = np.arange(side) ^ (np.arange(side) >> 1)
    axis = np.empty(side)
    axis[gray] = levels
    pts = (axis[:, None] + 1j * axis[None, :]).reshape(-1)
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


_CONSTELLATIONS = {
    "bpsk": np.array([1.0 + 0j, -1.0 + 0j]),  # bit 0 -> +1
    "qpsk": _QPSK,
    "8psk": _8PSK,
    "16qam": _qam_constellation(16),
    "64qam": _qam_constellation(64),
    "pam4": _PAM4_LEVELS.astype(complex)[np.array([0, 1, 3, 2])],  # Gray: 00,01,11,10
    "4ask": _4ASK_LEVELS.astype(complex)[np.array([0, 1, 3, 2])],
    "ook": np.array([0.0 + 0j, np.sqrt(2) + 0j]),
}

_FSK_CLASSES = ("cpfsk", "gfsk")

MODULATION_CLASSES = tuple(sorted(_CONSTELLATIONS) + list(_FSK_CLASSES))


def rrc_filter(beta: float, sps: int, span: int = 10) -> np.ndarray:
    """Root-raised-cosine impulse response, unit energy."""
    n = span * sps
    t = np.arange(-n / 2, n / 2 + 1) / sps
    h = np.empty_like(t)
    eps = np.sqrt(np.finfo(float).eps)
    zero = np.abs(t) < eps
    sing = np.abs(np.abs(4 * beta * t) - 1.0) < eps
    rest = ~(zero | sing)
    h[zero] = 1 + beta * (4 / np.pi - 1)
    if beta > 0:
        x = np.pi / (4 * beta)
        h[sing] = beta / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(x) + (1 - 2 / np.pi) * np.cos(x))
    tt = t[rest]
    h[rest] = (np.sin(np.pi * tt * (1 - beta)) + 4 * beta * tt * np.cos(np.pi * tt * (1 + beta))) \
        / (np.pi * tt * (1 - (4 * beta * tt) ** 2))
    return h / np.sqrt(np.sum(h ** 2))


def _gaussian_pulse(bt: float, sps: int, span: int = 4) -> np.ndarray:
    """Gaussian frequency pre-filter for GFSK (normalized to unit sum)."""
    t = np.arange(-span * sps / 2, span * sps / 2 + 1) / sps
    sigma = np.sqrt(np.log(2)) / (2 * np.pi * bt)
    g = np.exp(-t ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def modulate(class_name: str, n_symbols: int, seed: int,
             sps: int = 8, rolloff: float = 0.35) -> np.ndarray:
    """Random-symbol complex baseband sequence for one modulation class."""
    name = class_name.lower()
    rng = np.random.default_rng(seed)
    if name in _CONSTELLATIONS:
        const = _CONSTELLATIONS[name]
        syms = const[rng.integers(len(const), size=n_symbols)]
        up = np.zeros(n_symbols * sps, dtype=complex)
        up[::sps] = syms
        h = rrc_filter(rolloff, sps)
        shaped = np.convolve(up, h, mode="same")
        # normalize transmit power to 1 so absolute scale carries no class
        # information (constant-envelope FSK is unit power by construction)
        return shaped / np.sqrt(np.mean(np.abs(shaped) ** 2))
    if name in _FSK_CLASSES:
        bits = rng.integers(2, size=n_symbols) * 2 - 1  # +-1
        freq = np.repeat(bits.astype(float), sps)
        if name == "gfsk":
            g = _gaussian_pulse(0.35, sps)
            freq = np.convolve(freq, g, mode="same")
        # modulation index 0.5: per-sample phase increment pi*h*sym/sps
        phase = np.cumsum(np.pi * 0.5 * freq / sps)
        return np.exp(1j * phase)
    raise ValueError(
        f"unknown modulation class {class_name!r}; valid: {', '.join(MODULATION_CLASSES)}")


def symbols_for(class_name: str, bits_or_idx: np.ndarray) -> np.ndarray:
    """Map symbol indices straight through the class constellation (test hook)."""
    const = _CONSTELLATIONS[class_name.lower()]
    return const[np.asarray(bits_or_idx)]


def apply_channel(signal: np.ndarray, snr_db: float, cfo: float, phase: float,
                  seed: int, length: int | None = None) -> np.ndarray:
    """Phase rotation + carrier offset + AWGN; returns a 2 x L real matrix.

    Noise power is calibrated against the measured signal power:
    total variance P_s * 10^(-snr/10), half per real component.
    snr_db = None (or +inf) disables noise.
    """
    sig = np.asarray(signal, dtype=complex)
    p_s = float(np.mean(np.abs(sig) ** 2))
    if p_s <= 0:
        raise ValueError("apply_channel: zero-power signal")
    n = np.arange(len(sig))
    sig = sig * np.exp(1j * (phase + 2 * np.pi * cfo * n))
    rng = np.random.default_rng(seed)
    # crop offset is drawn before the noise so a no-noise twin (same seed)
    # lines up sample-for-sample with the noisy capture
    start = 0
    if length is not None:
        if len(sig) < length:
            raise ValueError(f"signal length {len(sig)} < requested {length}")
        start = int(rng.integers(0, len(sig) - length + 1))
    if snr_db is not None and np.isfinite(snr_db):
        nvar = p_s * 10.0 ** (-snr_db / 10.0)
        noise = rng.normal(0, np.sqrt(nvar / 2), len(sig)) \
            + 1j * rng.normal(0, np.sqrt(nvar / 2), len(sig))
        sig = sig + noise
    if length is not None:
        sig = sig[start:start + length]
    return np.stack([sig.real, sig.imag])


def iq_to_ap(iq: np.ndarray) -> np.ndarray:
    """Amplitude/phase rows from I/Q rows; angle = atan2(I, Q), atan2(0,0)=0."""
    iq = np.asarray(iq)
    amp = np.sqrt(iq[0] ** 2 + iq[1] ** 2)
    ph = np.arctan2(iq[0], iq[1])
    return np.stack([amp, ph])


@dataclass
class SignalSample:
    iq: np.ndarray  # 2 x L float32
    class_id: int
    snr_db: int
    seed: int = 0


@dataclass
class DatasetSpec:
    classes: list[str] = field(default_factory=lambda: [
        "bpsk", "qpsk", "8psk", "16qam", "pam4", "4ask", "cpfsk", "gfsk"])
    snr_grid: list[int] = field(default_factory=lambda: list(range(-20, 19, 4)))
    samples_per_cell: int = 500
    length: int = 128
    sps: int = 8
    rolloff: float = 0.35
    cfo_max: float = 0.01
    master_seed: int = 0

    def validate(self):
        if sorted(self.snr_grid) != list(self.snr_grid) or len(set(self.snr_grid)) != len(self.snr_grid):
            raise ValueError("snr_grid must be strictly increasing")
        if self.samples_per_cell < 1:
            raise ValueError("samples_per_cell must be >= 1")
        for c in self.classes:
            if c.lower() not in MODULATION_CLASSES:
                raise ValueError(
                    f"unknown modulation class {c!r}; valid: {', '.join(MODULATION_CLASSES)}")


def sample_seed(master_seed: int, class_name: str, snr_db: int, index: int) -> int:
    """Stable per-sample seed derived from the cell coordinates."""
    key = f"{master_seed}|{class_name}|{snr_db}|{index}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def generate_sample(class_name: str, snr_db: float, length: int, seed: int,
                    sps: int = 8, rolloff: float = 0.35, cfo_max: float = 0.01,
                    no_noise: bool = False) -> np.ndarray:
    """One 2 x L capture: modulate, impair, crop. Deterministic in `seed`."""
    rng = np.random.default_rng(seed)
    n_symbols = (length + 4 * sps) // sps + 10  # margin for crop + filter tails
    phase = rng.uniform(0, 2 * np.pi)
    cfo = rng.uniform(-cfo_max, cfo_max)
    base = modulate(class_name, n_symbols, seed=rng.integers(2 ** 62), sps=sps, rolloff=rolloff)
    return apply_channel(base, None if no_noise else snr_db, cfo, phase,
                         seed=rng.integers(2 ** 62), length=length)


def generate_dataset(spec: DatasetSpec):
    """All samples of the (class, snr) grid, in deterministic order."""
    spec.validate()
    samples = []
    for ci, cls in enumerate(spec.classes):
        for snr in spec.snr_grid:
            for k in range(spec.samples_per_cell):
                seed = sample_seed(spec.master_seed, cls, snr, k)
                iq = generate_sample(cls, snr, spec.length, seed,
                                     sps=spec.sps, rolloff=spec.rolloff,
                                     cfo_max=spec.cfo_max).astype(np.float32)
                samples.append(SignalSample(iq=iq, class_id=ci, snr_db=snr, seed=seed))
    return samples


def stratified_split(n_per_cell: int, n_cells: int, fractions=(0.6, 0.2, 0.2)) -> list[str]:
    """Per-cell deterministic train/val/test assignment, sample-index order."""
    n_train = int(round(n_per_cell * fractions[0]))
    n_val = int(round(n_per_cell * fractions[1]))
    cell = ["train"] * n_train + ["val"] * n_val + ["test"] * (n_per_cell - n_train - n_val)
    return cell * n_cells


def write_manifest(path, assignment: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, part in enumerate(assignment):
            f.write(f"{i} {part}\n")


def read_manifest(path) -> dict[str, np.ndarray]:
    parts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    with open(path, encoding="utf-8") as f:
        for line in f:
            idx, part = line.split()
            parts[part].append(int(idx))
    return {k: np.array(v, dtype=np.int64) for k, v in parts.items()}

"""Full dual-input classifier: per-input CNN+LSTM feature extraction, a
four-block shrinkage denoiser stack per path, and a shared softmax head.

Axis convention follows the batched [B, L, W, C] layout, so the concat axes
(2 for horizontal/vertical CNN features, 3 for CNN/LSTM fusion) read the
same as the architecture tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor, concat
from .layers import BatchNorm, Conv2D, Dense, LSTM, Layer, l2_penalty
from .shrinkage import ShrinkageBlock


@dataclass
class ModelConfig:
    length: int = 128
    num_classes: int = 8
    lstm_units: int = 4
    cnn_filters: int = 4
    block_channels: list[int] = field(default_factory=lambda: [8, 8, 16, 16])
    block_downsample: list[bool] = field(default_factory=lambda: [True, False, True, False])
    thresholding: str = "garrote"  # garrote | soft
    variant: str = "dual"          # dual | single
    l2_lambda: float = 1e-4

    def validate(self):
        if len(self.block_channels) != len(self.block_downsample):
            raise ValueError("block_channels and block_downsample must have equal length")
        if self.length < 5:
            raise ValueError("length must be >= 5 (dilated kernel span)")

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "num_classes": self.num_classes,
            "lstm_units": self.lstm_units,
            "cnn_filters": self.cnn_filters,
            "block_channels": ",".join(str(c) for c in self.block_channels),
            "block_downsample": ",".join("1" if d else "0" for d in self.block_downsample),
            "thresholding": self.thresholding,
            "variant": self.variant,
            "l2_lambda": repr(self.l2_lambda),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            length=int(d["length"]),
            num_classes=int(d["num_classes"]),
            lstm_units=int(d["lstm_units"]),
            cnn_filters=int(d["cnn_filters"]),
            block_channels=[int(x) for x in d["block_channels"].split(",")],
            block_downsample=[x == "1" for x in d["block_downsample"].split(",")],
            thresholding=d["thresholding"],
            variant=d["variant"],
            l2_lambda=float(d["l2_lambda"]),
        )


class InputPath(Layer):
    """Feature extraction + denoiser stack + final BN for one representation."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        f = cfg.cnn_filters
        self.cfg = cfg
        self.lstm = LSTM(2, cfg.lstm_units, rng)
        self.conv_h = Conv2D(1, f, 3, 1, rng, dilation=(2, 2), padding="same")
        self.conv_v = Conv2D(1, f, 1, 3, rng, dilation=(2, 2), padding="same")
        self.blocks = []
        cin = f + 1
        for cout, down in zip(cfg.block_channels, cfg.block_downsample):
            self.blocks.append(ShrinkageBlock(
                cin, cout, rng, downsample=down,
                thresholding=cfg.thresholding, variant=cfg.variant))
            cin = cout
        self.final_bn = BatchNorm(cin)
        self.out_channels = cin

    def feature_extract(self, x: Tensor) -> Tensor:
        """[B,L,2] -> [B,L,4,cnn_filters+1] hybrid CNN/LSTM feature map."""
        B, L, _ = x.shape
        if L < 5:
            raise ValueError(f"input length {L} < 5, the dilated kernel span")
        h_lstm = self.lstm(x).reshape(B, L, self.cfg.lstm_units, 1)
        xr = x.reshape(B, L, 2, 1)
        f1 = self.conv_h(xr)
        f2 = self.conv_v(xr)
        h_cnn = concat([f1, f2], axis=2)
        return concat([h_cnn, h_lstm], axis=3)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        h = self.feature_extract(x)
        for blk in self.blocks:
            h = blk(h, train)
        return T.gap(self.final_bn(h, train).relu())

    def named_params(self, prefix: str):
        out = self.lstm.named_params(f"{prefix}.lstm")
        out += self.conv_h.named_params(f"{prefix}.conv_h")
        out += self.conv_v.named_params(f"{prefix}.conv_v")
        for i, blk in enumerate(self.blocks):
            out += blk.named_params(f"{prefix}.block{i + 1}")
        out += self.final_bn.named_params(f"{prefix}.final_bn")
        return out

    def named_buffers(self, prefix: str):
        out = []
        for i, blk in enumerate(self.blocks):
            out += blk.named_buffers(f"{prefix}.block{i + 1}")
        out += self.final_bn.named_buffers(f"{prefix}.final_bn")
        return out

    def regularizable_kernels(self):
        ks = [self.conv_h.kernel, self.conv_v.kernel]
        for blk in self.blocks:
            ks += blk.regularizable_kernels()
        return ks


def softmax(logits: Tensor) -> Tensor:
    shift = Tensor(logits.data.max(axis=-1, keepdims=True))  # constant, grad-free
    e = (logits - shift).exp()
    return e / e.sum(axis=-1, keepdims=True)


class Model:
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.iq_path = InputPath(cfg, rng)
        self.ap_path = InputPath(cfg, rng)
        feat = self.iq_path.out_channels + self.ap_path.out_channels
        self.classifier = Dense(feat, cfg.num_classes, rng)

    def forward(self, iq: Tensor, ap: Tensor, train: bool = False):
        """Returns (logits, probabilities); accepts [L,2] or [B,L,2]."""
        iq = iq if isinstance(iq, Tensor) else Tensor(iq)
        ap = ap if isinstance(ap, Tensor) else Tensor(ap)
        squeeze = iq.ndim == 2
        if squeeze:
            iq = iq.reshape(1, *iq.shape)
            ap = ap.reshape(1, *ap.shape)
        f_iq = self.iq_path(iq, train)
        f_ap = self.ap_path(ap, train)
        f = concat([f_iq, f_ap], axis=1)
        logits = self.classifier(f)
        probs = softmax(logits)
        if squeeze:
            logits = logits.reshape(self.cfg.num_classes)
            probs = probs.reshape(self.cfg.num_classes)
        return logits, probs

    def __call__(self, iq, ap, train: bool = False):
        return self.forward(iq, ap, train)

    def named_params(self):
        out = self.iq_path.named_params("iq")
        out += self.ap_path.named_params("ap")
        out += self.classifier.named_params("classifier")
        return out

    def named_buffers(self):
        return self.iq_path.named_buffers("iq") + self.ap_path.named_buffers("ap")

    def regularizable_kernels(self):
        return (self.iq_path.regularizable_kernels()
                + self.ap_path.regularizable_kernels()
                + [self.classifier.kernel])

    def l2(self) -> Tensor:
        return l2_penalty(self.regularizable_kernels(), self.cfg.l2_lambda)

    def zero_grads(self):
        for _, p in self.named_params():
            p.grad = None

    # -- accounting -----------------------------------------------------------

    def param_table(self) -> list[tuple[str, int]]:
        return [(name, p.data.size) for name, p in self.named_params()]

    def count_params(self) -> int:
        return sum(n for _, n in self.param_table())

    def param_subtotals(self) -> dict[str, int]:
        """Counts grouped by top-two name components (e.g. iq.block1)."""
        groups: dict[str, int] = {}
        for name, n in self.param_table():
            key = ".".join(name.split(".")[:2])
            groups[key] = groups.get(key, 0) + n
        return groups

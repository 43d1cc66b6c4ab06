"""Analytic FLOP counting for one forward pass of a single sample.

Declared convention: one multiply-accumulate = 2 FLOPs; bias add,
activation, batch norm, pooling and residual adds = 1 FLOP per element;
shrinkage thresholding = 4 FLOPs per element (abs, compare, divide,
subtract); softmax = 3 FLOPs per output element.
"""

from __future__ import annotations

import math

from .model import ModelConfig


def flops_dense(din: int, dout: int) -> int:
    return 2 * din * dout + dout


def flops_conv2d(out_l: int, out_w: int, cout: int, kh: int, kw: int, cin: int) -> int:
    out_elems = out_l * out_w * cout
    return out_elems * 2 * kh * kw * cin + out_elems


def flops_lstm(length: int, din: int, units: int) -> int:
    # per step: two gate matmuls (MAC=2), bias, 4 activations + cell updates
    per_step = 2 * 4 * units * (din + units) + 4 * units + 8 * units
    return length * per_step


def flops_bn(elems: int) -> int:
    return elems


def flops_activation(elems: int) -> int:
    return elems


def flops_pool(in_elems: int) -> int:
    return in_elems


def flops_threshold(elems: int) -> int:
    return elems * 4


def count_flops(cfg: ModelConfig, length: int | None = None) -> tuple[list[tuple[str, int]], int]:
    """Per-layer FLOP table and total for a single-sample forward pass."""
    L = length if length is not None else cfg.length
    f = cfg.cnn_filters
    u = cfg.lstm_units
    table: list[tuple[str, int]] = []

    def path(prefix: str):
        table.append((f"{prefix}.lstm", flops_lstm(L, 2, u)))
        table.append((f"{prefix}.conv_h", flops_conv2d(L, 2, f, 3, 1, 1)))
        table.append((f"{prefix}.conv_v", flops_conv2d(L, 2, f, 1, 3, 1)))
        cin, cur_l, W = f + 1, L, 4
        for i, (cout, down) in enumerate(zip(cfg.block_channels, cfg.block_downsample)):
            name = f"{prefix}.block{i + 1}"
            out_l = math.ceil(cur_l / 2) if down else cur_l
            n = 0
            n += flops_bn(cur_l * W * cin) + flops_activation(cur_l * W * cin)
            n += flops_conv2d(out_l, W, cout, 3, 3, cin)
            n += flops_bn(out_l * W * cout) + flops_activation(out_l * W * cout)
            n += flops_conv2d(out_l, W, cout, 3, 3, cout)
            feat = out_l * W * cout
            n += flops_activation(feat)  # abs
            n += flops_pool(feat)        # GAP
            n += flops_dense(cout, cout) + flops_bn(cout) + flops_activation(cout)
            n += flops_dense(cout, cout) + flops_activation(cout)  # + sigmoid
            if cfg.variant == "dual":
                n += flops_pool(feat)    # GMP
                n += flops_dense(cout, cout) + flops_bn(cout) + flops_activation(cout)
                n += flops_dense(cout, cout) + flops_activation(cout)
                n += 3 * cout + 5        # convex combination and scalar reparams
            else:
                n += cout + 2            # kappa scaling only
            n += flops_threshold(feat)
            if down:
                n += flops_pool(cur_l * W * cin)  # identity avgpool
            n += feat                    # residual add
            table.append((name, n))
            cin, cur_l = cout, out_l
        table.append((f"{prefix}.final_bn",
                      flops_bn(cur_l * W * cin) + flops_activation(cur_l * W * cin)
                      + flops_pool(cur_l * W * cin)))
        return cin

    c_iq = path("iq")
    c_ap = path("ap")
    table.append(("classifier", flops_dense(c_iq + c_ap, cfg.num_classes)
                  + 3 * cfg.num_classes))
    return table, sum(n for _, n in table)

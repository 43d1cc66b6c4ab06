"""Garrote/soft shrinkage estimators and the dual-path residual shrinkage block.

The block learns a per-channel threshold kappa * (gamma*alpha + (1-gamma)*beta)
where alpha comes from a GAP subnetwork, beta from a GMP subnetwork, and
gamma in (0,1), kappa > 0 are per-block learnable scalars (reparameterized
through sigmoid / softplus so the constraints hold by construction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .layers import BatchNorm, Conv2D, Dense, Layer

GARROTE_EPS = 1e-6


def _broadcast_tau(x: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Broadcast a per-channel ([C] or [B,C]) threshold over spatial axes."""
    if tau.ndim == 2 and x.ndim == 4:
        tau = tau[:, None, None, :]
    elif tau.ndim == 1 and x.ndim >= 1:
        pass  # trailing-axis broadcast
    return np.broadcast_to(tau, x.shape)


def garrote_threshold(x: Tensor, threshold: Tensor) -> Tensor:
    """y = 0 for |x| < tau, x - tau^2/(x + 1e-6) for |x| >= tau.

    The kill/pass mask is treated as a constant in backward; the threshold
    receives gradient only through the pass-through branch.
    """
    xd = x.data
    tb = _broadcast_tau(xd, threshold.data)
    mask = np.abs(xd) >= tb
    # keep the masked-out denominator away from zero so 0 * inf never appears
    denom = np.where(mask, xd + GARROTE_EPS, 1.0)
    out = np.where(mask, xd - tb * tb / denom, 0.0).astype(xd.dtype)

    def backward(g):
        if x.requires_grad:
            x._accum(np.where(mask, g * (1.0 + tb * tb / (denom * denom)), 0.0))
        if threshold.requires_grad:
            gt = np.where(mask, g * (-2.0 * tb / denom), 0.0)
            threshold._accum(T._unbroadcast(gt, _tau_accum_shape(xd, threshold.data)).reshape(threshold.data.shape))

    return Tensor._result(out, (x, threshold), backward)


def soft_threshold(x: Tensor, threshold: Tensor) -> Tensor:
    """y = 0 for |x| < tau, sign(x) * (|x| - tau) otherwise."""
    xd = x.data
    tb = _broadcast_tau(xd, threshold.data)
    mask = np.abs(xd) >= tb
    sgn = np.sign(xd)
    out = np.where(mask, xd - sgn * tb, 0.0).astype(xd.dtype)

    def backward(g):
        if x.requires_grad:
            x._accum(np.where(mask, g, 0.0))
        if threshold.requires_grad:
            gt = np.where(mask, -g * sgn, 0.0)
            threshold._accum(T._unbroadcast(gt, _tau_accum_shape(xd, threshold.data)).reshape(threshold.data.shape))

    return Tensor._result(out, (x, threshold), backward)


def _tau_accum_shape(x: np.ndarray, tau: np.ndarray) -> tuple:
    """Shape the broadcast threshold occupied inside x's shape."""
    if tau.ndim == 2 and x.ndim == 4:
        return (tau.shape[0], 1, 1, tau.shape[1])
    return tau.shape


def apply_shrinkage(kind: str, x: Tensor, threshold: Tensor) -> Tensor:
    if kind == "garrote":
        return garrote_threshold(x, threshold)
    if kind == "soft":
        return soft_threshold(x, threshold)
    raise ValueError(f"unknown thresholding kind {kind!r}")


def softplus(x: Tensor) -> Tensor:
    return ((x.exp() + 1.0).log())


def softplus_inv(y: float) -> float:
    return float(np.log(np.expm1(y)))


@dataclass
class ThresholdStats:
    mu: Tensor
    nu: Tensor | None
    alpha: Tensor
    beta: Tensor | None
    tau: Tensor
    threshold: Tensor


class ShrinkageBlock(Layer):
    """Pre-activation residual block with learned-threshold denoising.

    variant "dual" uses GAP and GMP paths combined by gamma; "single" uses
    the GAP path alone (tau = alpha). Downsampling blocks stride the first
    conv by (2,1) and average-pool the identity path to match.
    """

    def __init__(self, cin: int, cout: int, rng: np.random.Generator,
                 downsample: bool = False, thresholding: str = "garrote",
                 variant: str = "dual", kernel=(3, 3)):
        if variant not in ("dual", "single"):
            raise ValueError(f"unknown variant {variant!r}")
        if thresholding not in ("garrote", "soft"):
            raise ValueError(f"unknown thresholding {thresholding!r}")
        self.cin, self.cout = cin, cout
        self.downsample = downsample
        self.thresholding = thresholding
        self.variant = variant
        kh, kw = kernel
        stride1 = (2, 1) if downsample else (1, 1)
        self.bn1 = BatchNorm(cin)
        self.conv1 = Conv2D(cin, cout, kh, kw, rng, stride=stride1, padding="same")
        self.bn2 = BatchNorm(cout)
        self.conv2 = Conv2D(cout, cout, kh, kw, rng, padding="same")
        self.fc_a1 = Dense(cout, cout, rng)
        self.bn_fc_a = BatchNorm(cout)
        self.fc_a2 = Dense(cout, cout, rng)
        if variant == "dual":
            self.fc_b1 = Dense(cout, cout, rng)
            self.bn_fc_b = BatchNorm(cout)
            self.fc_b2 = Dense(cout, cout, rng)
        else:
            self.fc_b1 = self.bn_fc_b = self.fc_b2 = None
        # gamma = sigmoid(0) = 0.5, kappa = softplus(raw) = 1
        self.gamma_raw = Tensor(0.0, requires_grad=True)
        self.kappa_raw = Tensor(softplus_inv(1.0), requires_grad=True)

    # scalar views
    def gamma(self) -> Tensor:
        return self.gamma_raw.sigmoid()

    def kappa(self) -> Tensor:
        return softplus(self.kappa_raw)

    def compute_threshold(self, features: Tensor, train: bool) -> ThresholdStats:
        a = features.abs()
        mu = T.gap(a)
        alpha = self.fc_a2(self.bn_fc_a(self.fc_a1(mu), train).relu()).sigmoid()
        kappa = self.kappa()
        if self.variant == "dual":
            nu = T.gmp(a)
            beta = self.fc_b2(self.bn_fc_b(self.fc_b1(nu), train).relu()).sigmoid()
            gamma = self.gamma()
            tau = alpha * gamma + beta * (1.0 - gamma)
        else:
            nu = beta = None
            tau = alpha
        return ThresholdStats(mu=mu, nu=nu, alpha=alpha, beta=beta, tau=tau,
                              threshold=tau * kappa)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        r1 = self.conv1(self.bn1(x, train).relu())
        r2 = self.conv2(self.bn2(r1, train).relu())
        stats = self.compute_threshold(r2, train)
        denoised = apply_shrinkage(self.thresholding, r2, stats.threshold)
        ident = x
        if self.downsample:
            ident = T.avgpool(ident, (2, 1), (2, 1))
        if self.cin != self.cout:
            ident = ident.pad_channels(self.cout)
        if ident.shape != denoised.shape:
            raise ValueError(
                f"residual/identity shape mismatch: {denoised.shape} vs {ident.shape}")
        return denoised + ident

    def named_params(self, prefix: str):
        out = []
        parts = [("bn1", self.bn1), ("conv1", self.conv1), ("bn2", self.bn2),
                 ("conv2", self.conv2), ("fc_a1", self.fc_a1), ("bn_fc_a", self.bn_fc_a),
                 ("fc_a2", self.fc_a2)]
        if self.variant == "dual":
            parts += [("fc_b1", self.fc_b1), ("bn_fc_b", self.bn_fc_b), ("fc_b2", self.fc_b2)]
        for name, layer in parts:
            out.extend(layer.named_params(f"{prefix}.{name}"))
        out.append((f"{prefix}.gamma_raw", self.gamma_raw))
        out.append((f"{prefix}.kappa_raw", self.kappa_raw))
        return out

    def named_buffers(self, prefix: str):
        out = []
        parts = [("bn1", self.bn1), ("bn2", self.bn2), ("bn_fc_a", self.bn_fc_a)]
        if self.variant == "dual":
            parts.append(("bn_fc_b", self.bn_fc_b))
        for name, layer in parts:
            out.extend(layer.named_buffers(f"{prefix}.{name}"))
        return out

    def regularizable_kernels(self):
        ks = [self.conv1.kernel, self.conv2.kernel,
              self.fc_a1.kernel, self.fc_a2.kernel]
        if self.variant == "dual":
            ks += [self.fc_b1.kernel, self.fc_b2.kernel]
        return ks


def bias_mse_experiment(theta: float, tau: float, noise_sigma: float,
                        n_trials: int, seed: int = 0) -> dict:
    """Monte-Carlo bias/MSE comparison of soft vs garrote shrinkage.

    Draws x = theta + N(0, sigma^2), applies both estimators with the fixed
    threshold, and returns empirical bias and MSE for each. For
    theta > tau >> sigma the soft bias approaches tau and the garrote bias
    approaches tau^2/theta.
    """
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    rng = np.random.default_rng(seed)
    x = Tensor(theta + rng.normal(0.0, noise_sigma, size=n_trials), dtype=np.float64)
    t = Tensor(np.full(1, tau), dtype=np.float64)
    est_soft = soft_threshold(x, t).data
    est_gar = garrote_threshold(x, t).data
    return {
        "bias_soft": float(np.mean(theta - est_soft)),
        "bias_garrote": float(np.mean(theta - est_gar)),
        "mse_soft": float(np.mean((est_soft - theta) ** 2)),
        "mse_garrote": float(np.mean((est_gar - theta) ** 2)),
    }

"""Dense tensors with reverse-mode automatic differentiation.

Implements exactly the operation set the classifier needs: elementwise
arithmetic and activations, matmul, dilated 2-D convolution, pooling,
structural ops (reshape / concat / channel pad) and a fused LSTM.
Feature maps are row-major and channels-last (L x W x C), with an optional
leading batch axis.

Two float widths are supported: float32 for training/inference and float64
for finite-difference gradient checking (`set_default_dtype`).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32


def set_default_dtype(dtype) -> None:
    """Set the dtype new tensors are created with (float32 or float64)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported default dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


_grad_enabled = True


class no_grad:
    """Context manager: skip graph construction inside (inference fast path)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    # sum away leading axes numpy prepended
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # sum over axes that were size-1 in the original
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense array plus optional gradient, node of a compute graph."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else _DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------------

    @staticmethod
    def _result(data, parents: tuple["Tensor", ...], backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        out.grad = None
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self) -> None:
        """Reverse-mode pass from a scalar; accumulates into leaf .grad."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # intermediate grads are not needed after their closure ran;
                # leaves (no _backward) keep accumulating across calls
                node.grad = None

    # -- elementwise binary --------------------------------------------------

    @staticmethod
    def _coerce(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def _binary(self, other, fwd, bwd_a, bwd_b) -> "Tensor":
        other = Tensor._coerce(other)
        a, b = self.data, other.data
        try:
            data = fwd(a, b)
        except ValueError:
            raise ValueError(f"shapes {a.shape} and {b.shape} are not broadcastable")
        if a.shape != b.shape and data.shape != np.broadcast_shapes(a.shape, b.shape):
            raise ValueError(f"shapes {a.shape} and {b.shape} are not broadcastable")

        def backward(g):
            if self.requires_grad:
                self._accum(_unbroadcast(bwd_a(g, a, b), a.shape))
            if other.requires_grad:
                other._accum(_unbroadcast(bwd_b(g, a, b), b.shape))

        return Tensor._result(data, (self, other), backward)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b,
                            lambda g, a, b: g, lambda g, a, b: g)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b,
                            lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return Tensor._coerce(other).__sub__(self)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b,
                            lambda g, a, b: g * b, lambda g, a, b: g * a)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return self._binary(other, lambda a, b: a / b,
                            lambda g, a, b: g / b,
                            lambda g, a, b: -g * a / (b * b))

    def __rtruediv__(self, other):
        return Tensor._coerce(other).__truediv__(self)

    def __neg__(self):
        return self * -1.0

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")

        def backward(g):
            if self.requires_grad:
                self._accum(g * p * self.data ** (p - 1))

        return Tensor._result(self.data ** p, (self,), backward)

    # -- elementwise unary ---------------------------------------------------

    def _unary(self, data, grad_fn) -> "Tensor":
        def backward(g):
            if self.requires_grad:
                self._accum(grad_fn(g))
        return Tensor._result(data, (self,), backward)

    def abs(self) -> "Tensor":
        return self._unary(np.abs(self.data), lambda g: g * np.sign(self.data))

    def relu(self) -> "Tensor":
        # subgradient 0 at 0
        mask = self.data > 0
        return self._unary(np.maximum(self.data, 0), lambda g: g * mask)

    def sigmoid(self) -> "Tensor":
        s = 1.0 / (1.0 + np.exp(-self.data))
        return self._unary(s, lambda g: g * s * (1.0 - s))

    def tanh(self) -> "Tensor":
        t = np.tanh(self.data)
        return self._unary(t, lambda g: g * (1.0 - t * t))

    def exp(self) -> "Tensor":
        e = np.exp(self.data)
        return self._unary(e, lambda g: g * e)

    def log(self) -> "Tensor":
        return self._unary(np.log(self.data), lambda g: g / self.data)

    def sqrt(self) -> "Tensor":
        r = np.sqrt(self.data)
        return self._unary(r, lambda g: g * 0.5 / r)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accum(np.broadcast_to(g, self.data.shape).copy())
                return
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            self._accum(np.broadcast_to(gg, self.data.shape).copy())

        return Tensor._result(np.asarray(data), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            n = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- linear algebra ------------------------------------------------------

    def matmul(self, other: "Tensor") -> "Tensor":
        other = Tensor._coerce(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise ValueError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")

        def backward(g):
            if self.requires_grad:
                self._accum(g @ b.T)
            if other.requires_grad:
                other._accum(a.T @ g)

        return Tensor._result(a @ b, (self, other), backward)

    def __matmul__(self, other):
        return self.matmul(other)

    # -- structural ----------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        new = np.prod([s for s in shape if s != -1])
        if -1 not in shape and new != self.data.size:
            raise ValueError(f"cannot reshape {self.shape} ({self.data.size} elems) to {shape}")
        old_shape = self.data.shape
        return self._unary(self.data.reshape(shape), lambda g: g.reshape(old_shape))

    def pad_channels(self, target: int) -> "Tensor":
        """Zero-pad the last (channel) axis to `target`, extra on the high side."""
        cur = self.data.shape[-1]
        if target < cur:
            raise ValueError(f"cannot pad {cur} channels down to {target}")
        if target == cur:
            return self._unary(self.data.copy(), lambda g: g)
        low = (target - cur) // 2
        high = target - cur - low
        widths = [(0, 0)] * (self.data.ndim - 1) + [(low, high)]
        data = np.pad(self.data, widths)
        sl = (Ellipsis, slice(low, low + cur))
        return self._unary(data, lambda g: g[sl])


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along `axis`; backward splits the gradient."""
    tensors = [Tensor._coerce(t) for t in tensors]
    shapes = [t.data.shape for t in tensors]
    ref = list(shapes[0])
    for s in shapes[1:]:
        if len(s) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(s, ref)) if i != (axis % len(ref))):
            raise ValueError(f"concat axis {axis}: incompatible shapes {shapes}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [s[axis] for s in shapes]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accum(g[tuple(idx)])

    return Tensor._result(data, tuple(tensors), backward)


# -- elementwise dispatcher (spec-level convenience) --------------------------

_ELEMENTWISE_UNARY = {
    "abs": Tensor.abs,
    "relu": Tensor.relu,
    "sigmoid": Tensor.sigmoid,
    "tanh": Tensor.tanh,
    "exp": Tensor.exp,
    "log": Tensor.log,
}

_ELEMENTWISE_BINARY = {
    "add": Tensor.__add__,
    "sub": Tensor.__sub__,
    "mul": Tensor.__mul__,
    "div": Tensor.__truediv__,
}


def elementwise(op_kind: str, a: Tensor, b=None) -> Tensor:
    """Apply a named elementwise op (add/sub/mul/div/abs/relu/sigmoid/tanh/exp/log)."""
    if op_kind in _ELEMENTWISE_UNARY:
        if b is not None:
            raise ValueError(f"{op_kind} is unary")
        return _ELEMENTWISE_UNARY[op_kind](a)
    if op_kind in _ELEMENTWISE_BINARY:
        if b is None:
            raise ValueError(f"{op_kind} needs two operands")
        return _ELEMENTWISE_BINARY[op_kind](a, b)
    raise ValueError(f"unknown elementwise op {op_kind!r}")


# -- convolution ---------------------------------------------------------------


def _conv_geometry(in_len: int, k: int, d: int, s: int, padding: str):
    eff = (k - 1) * d + 1
    if padding == "same":
        out = -(-in_len // s)  # ceil
        total = max((out - 1) * s + eff - in_len, 0)
        lo = total // 2
        hi = total - lo
    elif padding == "valid":
        if eff > in_len:
            raise ValueError(f"valid padding: effective kernel span {eff} exceeds input extent {in_len}")
        out = (in_len - eff) // s + 1
        lo = hi = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    return out, lo, hi


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None,
           stride=(1, 1), dilation=(1, 1), padding: str = "same") -> Tensor:
    """Dilated 2-D convolution on channels-last input ([B,]L,W,Cin).

    kernel is [kh, kw, Cin, Cout]; zero padding; stride/dilation per axis.
    """
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ValueError(f"conv2d expects ([B,]L,W,C) input, got {x.shape}")
    kd = kernel.data
    if kd.ndim != 4 or kd.shape[2] != xd.shape[3]:
        raise ValueError(f"kernel {kernel.shape} incompatible with input {x.shape}")
    kh, kw, cin, cout = kd.shape
    (sh, sw), (dh, dw) = stride, dilation
    Lo, plo, phi = _conv_geometry(xd.shape[1], kh, dh, sh, padding)
    Wo, qlo, qhi = _conv_geometry(xd.shape[2], kw, dw, sw, padding)
    if plo or phi or qlo or qhi:
        xp = np.pad(xd, ((0, 0), (plo, phi), (qlo, qhi), (0, 0)))
    else:
        xp = xd
    B = xd.shape[0]
    # im2col: one GEMM over all kernel taps
    taps = []
    cols = np.empty((B, Lo, Wo, kh * kw, cin), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None),
                  slice(i * dh, i * dh + (Lo - 1) * sh + 1, sh),
                  slice(j * dw, j * dw + (Wo - 1) * sw + 1, sw),
                  slice(None))
            taps.append(sl)
            cols[:, :, :, i * kw + j, :] = xp[sl]
    cols2 = cols.reshape(B * Lo * Wo, kh * kw * cin)
    kmat = kd.reshape(kh * kw * cin, cout)
    out = (cols2 @ kmat).reshape(B, Lo, Wo, cout)
    if bias is not None:
        out += bias.data

    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def backward(g):
        if squeeze and g.ndim == 3:
            g = g[None]
        gf = g.reshape(-1, cout)
        if bias is not None and bias.requires_grad:
            bias._accum(g.sum(axis=(0, 1, 2)))
        if kernel.requires_grad:
            kernel._accum((cols2.T @ gf).reshape(kd.shape))
        if x.requires_grad:
            gcols = (gf @ kmat.T).reshape(B, Lo, Wo, kh * kw, cin)
            gxp = np.zeros_like(xp)
            for t, sl in enumerate(taps):
                gxp[sl] += gcols[:, :, :, t, :]
            gx = gxp[:, plo:plo + xd.shape[1], qlo:qlo + xd.shape[2], :]
            x._accum(gx[0] if squeeze else gx)

    data = out[0] if squeeze else out
    return Tensor._result(data, parents, backward)


# -- pooling -------------------------------------------------------------------


def _spatial_axes(ndim: int) -> tuple:
    if ndim == 1:
        return (0,)
    if ndim == 4:
        return (1, 2)
    return tuple(range(ndim - 1))


def gap(x: Tensor) -> Tensor:
    """Global average pooling over spatial axes (keeps batch and channel)."""
    if x.size == 0:
        raise ValueError("gap: empty input")
    return x.mean(axis=_spatial_axes(x.ndim))


def gmp(x: Tensor) -> Tensor:
    """Global max pooling; backward routes to the first maximal position."""
    if x.size == 0:
        raise ValueError("gmp: empty input")
    axes = _spatial_axes(x.ndim)
    xd = x.data
    if x.ndim == 4:
        B, L, W, C = xd.shape
        flat = xd.reshape(B, L * W, C)
    elif x.ndim == 1:
        flat = xd.reshape(1, -1, 1)
    else:
        C = xd.shape[-1]
        flat = xd.reshape(1, -1, C)
    idx = flat.argmax(axis=1)  # first occurrence on ties
    data = np.take_along_axis(flat, idx[:, None, :], axis=1)[:, 0, :]

    def backward(g):
        if not x.requires_grad:
            return
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[:, None, :], g.reshape(idx.shape)[:, None, :], axis=1)
        x._accum(gflat.reshape(xd.shape))

    if x.ndim == 4:
        out = data
    elif x.ndim == 1:
        out = data.reshape(())
    else:
        out = data.reshape(xd.shape[-1])
    return Tensor._result(out, (x,), backward)


def avgpool(x: Tensor, window=(2, 1), stride=(2, 1)) -> Tensor:
    """Average pooling along the first spatial axis; partial final window
    is averaged over its actual element count."""
    if window != stride:
        raise ValueError("avgpool supports window == stride only")
    if window[1] != 1:
        raise ValueError("avgpool supports a width-1 window only")
    w = window[0]
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    B, L, W, C = xd.shape
    if w > L:
        raise ValueError(f"avgpool window {w} exceeds spatial extent {L}")
    n_full = L // w
    rem = L % w
    main = xd[:, :n_full * w].reshape(B, n_full, w, W, C).mean(axis=2)
    if rem:
        tail = xd[:, n_full * w:].mean(axis=1, keepdims=True)
        out = np.concatenate([main, tail], axis=1)
    else:
        out = main

    def backward(g):
        if not x.requires_grad:
            return
        if squeeze and g.ndim == 3:
            g = g[None]
        gx = np.empty_like(xd)
        gmain = np.repeat(g[:, :n_full] / w, w, axis=1)
        gx[:, :n_full * w] = gmain
        if rem:
            gx[:, n_full * w:] = np.repeat(g[:, n_full:] / rem, rem, axis=1)
        x._accum(gx[0] if squeeze else gx)

    data = out[0] if squeeze else out
    return Tensor._result(data, (x,), backward)


def batchnorm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    """Fused train-mode batch normalization over all non-channel axes.

    Returns (out, batch_mean, batch_var) with the statistics as plain
    numpy arrays (for running-stat updates).
    """
    xd = x.data
    axes = tuple(range(xd.ndim - 1))
    n = xd.size // xd.shape[-1]
    mu = xd.mean(axis=axes)
    xc = xd - mu
    var = np.mean(xc * xc, axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        if beta.requires_grad:
            beta._accum(g.sum(axis=axes))
        gxhat_sum = (g * xhat).sum(axis=axes)
        if gamma.requires_grad:
            gamma._accum(gxhat_sum)
        if x.requires_grad:
            gx = (gamma.data * inv) * (g - g.sum(axis=axes) / n - xhat * (gxhat_sum / n))
            x._accum(gx.astype(xd.dtype, copy=False))

    return Tensor._result(out.astype(xd.dtype, copy=False), (x, gamma, beta), backward), mu, var


# -- fused LSTM ------------------------------------------------------------------


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Full-sequence LSTM, gate order (input, forget, candidate, output).

    x is ([B,]L,Din); wx [Din,4H]; wh [H,4H]; b [4H]. Initial states are zero
    and the whole output sequence ([B,]L,H) is returned. Fused into one graph
    node: forward and backward-through-time run as plain numpy loops.
    """
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    B, L, D = xd.shape
    H = wh.data.shape[0]
    pre_x = xd.reshape(B * L, D) @ wx.data + b.data
    pre_x = pre_x.reshape(B, L, 4 * H)
    h = np.zeros((B, H), dtype=xd.dtype)
    c = np.zeros((B, H), dtype=xd.dtype)
    gates = np.empty((L, B, 4 * H), dtype=xd.dtype)
    c_prevs = np.empty((L, B, H), dtype=xd.dtype)
    tanhcs = np.empty((L, B, H), dtype=xd.dtype)
    outs = np.empty((B, L, H), dtype=xd.dtype)
    for t in range(L):
        z = pre_x[:, t] + h @ wh.data
        i = 1.0 / (1.0 + np.exp(-z[:, :H]))
        f = 1.0 / (1.0 + np.exp(-z[:, H:2 * H]))
        g_ = np.tanh(z[:, 2 * H:3 * H])
        o = 1.0 / (1.0 + np.exp(-z[:, 3 * H:]))
        c_prevs[t] = c
        c = f * c + i * g_
        tc = np.tanh(c)
        h = o * tc
        gates[t, :, :H] = i
        gates[t, :, H:2 * H] = f
        gates[t, :, 2 * H:3 * H] = g_
        gates[t, :, 3 * H:] = o
        tanhcs[t] = tc
        outs[:, t] = h

    def backward(gout):
        if squeeze and gout.ndim == 2:
            gout = gout[None]
        dz_all = np.empty((B, L, 4 * H), dtype=xd.dtype)
        dwh = np.zeros_like(wh.data)
        dh_next = np.zeros((B, H), dtype=xd.dtype)
        dc_next = np.zeros((B, H), dtype=xd.dtype)
        for t in range(L - 1, -1, -1):
            i = gates[t, :, :H]
            f = gates[t, :, H:2 * H]
            g_ = gates[t, :, 2 * H:3 * H]
            o = gates[t, :, 3 * H:]
            tc = tanhcs[t]
            dh = gout[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.empty((B, 4 * H), dtype=xd.dtype)
            dz[:, :H] = dc * g_ * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prevs[t] * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - g_ * g_)
            dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
            dz_all[:, t] = dz
            h_prev = outs[:, t - 1] if t > 0 else np.zeros((B, H), dtype=xd.dtype)
            dwh += h_prev.T @ dz
            dh_next = dz @ wh.data.T
            dc_next = dc * f
        dflat = dz_all.reshape(B * L, 4 * H)
        if wh.requires_grad:
            wh._accum(dwh)
        if wx.requires_grad:
            wx._accum(xd.reshape(B * L, D).T @ dflat)
        if b.requires_grad:
            b._accum(dflat.sum(axis=0))
        if x.requires_grad:
            gx = (dflat @ wx.data.T).reshape(B, L, D)
            x._accum(gx[0] if squeeze else gx)

    data = outs[0] if squeeze else outs
    return Tensor._result(data, (x, wx, wh, b), backward)

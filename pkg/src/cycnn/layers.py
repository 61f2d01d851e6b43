"""Network layers with explicit forward and backward passes.

Each layer's ``forward(x, train)`` returns ``(y, cache)`` and
``backward(cache, grad_y)`` returns ``(grad_x, grads)`` where ``grads`` maps
parameter names to gradient arrays. Layers hold their parameters in the
``params`` dict and nothing else that changes during a step, except the
running statistics of :class:`ChannelNorm`.
"""

from __future__ import annotations

import numpy as np

from .conv import ConvSpec, FilterBank, conv2d_backward, conv2d_direct
from .tensor import ShapeError
from .winograd import conv2d_winograd


class Layer:
    kind = "layer"
    params: dict

    def __init__(self):
        self.params = {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, cache, grad_y, need_input_grad=True):
        raise NotImplementedError

    def output_shape(self, in_shape):
        return in_shape

    def astype(self, dtype):
        for k, v in self.params.items():
            self.params[k] = v.astype(dtype)
        return self

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv(Layer):
    kind = "conv"

    def __init__(self, spec: ConvSpec, weights=None, bias=None):
        super().__init__()
        self.spec = spec
        shape = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
        if weights is None:
            weights = np.zeros(shape, dtype=np.float32)
        weights = np.asarray(weights)
        if weights.shape != shape:
            raise ShapeError(f"conv weights {weights.shape} != {shape}")
        if bias is None:
            bias = np.zeros(spec.out_channels, dtype=weights.dtype)
        self.params = {"weight": weights, "bias": np.asarray(bias)}

    @property
    def filters(self) -> FilterBank:
        return FilterBank(self.params["weight"], self.params["bias"])

    def forward(self, x, train=False):
        if self.spec.algorithm == "winograd":
            return conv2d_winograd(x, self.filters, self.spec), (x, None)
        y, cols = conv2d_direct(x, self.filters, self.spec, return_cols=True)
        return y, (x, cols)

    def backward(self, cache, grad_y, need_input_grad=True):
        x, cols = cache
        gx, gw, gb = conv2d_backward(x, self.filters, grad_y, self.spec, cols=cols,
                                     need_input_grad=need_input_grad)
        return gx, {"weight": gw, "bias": gb}

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.spec.in_channels:
            raise ShapeError(f"conv expects {self.spec.in_channels} channels, got {c}")
        return (self.spec.out_channels,) + self.spec.output_size(h, w)

    def __repr__(self):
        s = self.spec
        return (f"Conv({s.in_channels}->{s.out_channels}, {s.kernel_h}x{s.kernel_w}, "
                f"stride={s.stride_h}x{s.stride_w}, pad={s.pad}, {s.pad_mode}, {s.algorithm})")


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        mask = x > 0
        return x * mask, mask

    def backward(self, mask, grad_y, need_input_grad=True):
        return grad_y * mask, {}


class MaxPool(Layer):
    """2x2 max pooling with stride 2. Ties go to the first element in
    row-major order."""

    kind = "maxpool"

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool needs even spatial dims, got {h}x{w}")
        win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(n, c, h // 2, w // 2, 4)
        idx = win.argmax(axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)

    def backward(self, cache, grad_y, need_input_grad=True):
        shape, idx = cache
        n, c, h, w = shape
        g = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad_y.dtype)
        np.put_along_axis(g, idx[..., None], grad_y[..., None], axis=-1)
        g = g.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return g.reshape(shape), {}

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, shape, grad_y, need_input_grad=True):
        return grad_y.reshape(shape), {}

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Linear(Layer):
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, weight=None, bias=None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        if weight is None:
            weight = np.zeros((out_features, in_features), dtype=np.float32)
        weight = np.asarray(weight)
        if weight.shape != (out_features, in_features):
            raise ShapeError(f"linear weight {weight.shape} != {(out_features, in_features)}")
        if bias is None:
            bias = np.zeros(out_features, dtype=weight.dtype)
        self.params = {"weight": weight, "bias": np.asarray(bias)}

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"linear expects (N, {self.in_features}), got {x.shape}")
        return x @ self.params["weight"].T + self.params["bias"], x

    def backward(self, x, grad_y, need_input_grad=True):
        gw = grad_y.T @ x
        gb = grad_y.sum(axis=0)
        gx = grad_y @ self.params["weight"] if need_input_grad else None
        return gx, {"weight": gw, "bias": gb}

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"linear expects {self.in_features} features, got {in_shape}")
        return (self.out_features,)

    def __repr__(self):
        return f"Linear({self.in_features}->{self.out_features})"


class ChannelNorm(Layer):
    """Per-channel batch standardisation without learnable scale or shift.

    Training mode normalises with batch statistics and updates the running
    estimates; evaluation mode uses the running estimates.
    """

    kind = "channelnorm"

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 running_mean=None, running_var=None):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.running_mean = (np.zeros(channels, dtype=np.float32)
                             if running_mean is None else np.asarray(running_mean))
        self.running_var = (np.ones(channels, dtype=np.float32)
                            if running_var is None else np.asarray(running_var))

    def forward(self, x, train=False):
        if x.shape[1] != self.channels:
            raise ShapeError(f"channelnorm expects {self.channels} channels, got {x.shape[1]}")
        if not train:
            mean = self.running_mean.astype(x.dtype)[:, None, None]
            inv = (1.0 / np.sqrt(self.running_var + self.eps)).astype(x.dtype)[:, None, None]
            return (x - mean) * inv, None
        axes = (0, 2, 3)
        mean = x.mean(axis=axes, keepdims=True)
        xc = x - mean
        var = (xc * xc).mean(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv
        count = x.size // x.shape[1]
        unbiased = var.ravel() * (count / max(count - 1, 1))
        m = self.momentum
        self.running_mean = ((1 - m) * self.running_mean + m * mean.ravel()).astype(self.running_mean.dtype)
        self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(self.running_var.dtype)
        return xhat, (xhat, inv)

    def backward(self, cache, grad_y, need_input_grad=True):
        if cache is None:
            inv = (1.0 / np.sqrt(self.running_var + self.eps)).astype(grad_y.dtype)
            return grad_y * inv[:, None, None], {}
        xhat, inv = cache
        axes = (0, 2, 3)
        g_mean = grad_y.mean(axis=axes, keepdims=True)
        gx_mean = (grad_y * xhat).mean(axis=axes, keepdims=True)
        return inv * (grad_y - g_mean - xhat * gx_mean), {}

    def astype(self, dtype):
        self.running_mean = self.running_mean.astype(dtype)
        self.running_var = self.running_var.astype(dtype)
        return self

    def __repr__(self):
        return f"ChannelNorm({self.channels})"

"""Parameterized building blocks: MLP and a small 1D UNet over track time."""

import numpy as np

from auto4d.nn.tensor import Tensor, concat
from auto4d.nn import functional as F


def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)


class MLP:
    """Affine stack with ReLU between layers, linear last layer.

    widths = [in, hidden..., out]; weights stored (in, out) so the forward
    pass is x @ W + b on row vectors or (N, in) batches.
    """

    def __init__(self, widths, rng, prefix="mlp"):
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        self.prefix = prefix
        self._layers = []
        for i in range(len(widths) - 1):
            w = Tensor(_he(rng, (widths[i], widths[i + 1]), widths[i]), requires_grad=True)
            b = Tensor(np.zeros(widths[i + 1]), requires_grad=True)
            self._layers.append((w, b))

    def __call__(self, x):
        last = len(self._layers) - 1
        for i, (w, b) in enumerate(self._layers):
            x = x @ w + b
            if i != last:
                x = x.relu()
        return x

    def zero_output_layer(self):
        """Start the net as a constant-zero function regardless of init."""
        w, b = self._layers[-1]
        w.data[...] = 0.0
        b.data[...] = 0.0

    def params(self):
        out = {}
        for i, (w, b) in enumerate(self._layers):
            out[f"{self.prefix}.{i}.w"] = w
            out[f"{self.prefix}.{i}.b"] = b
        return out


class Conv2dLayer:
    def __init__(self, rng, c_in, c_out, k=3, stride=1, padding=0, dilation=1):
        self.w = Tensor(_he(rng, (c_out, c_in, k, k), c_in * k * k), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding
        self.dilation = dilation

    def __call__(self, x):
        return F.conv2d(x, self.w, self.b, stride=self.stride,
                        padding=self.padding, dilation=self.dilation)


class _Conv1d:
    def __init__(self, rng, c_in, c_out, k, stride=1, padding=0):
        self.w = Tensor(_he(rng, (c_out, c_in, k), c_in * k), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return F.conv1d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class _ConvT1d:
    def __init__(self, rng, c_in, c_out, k, stride=2, padding=1):
        self.w = Tensor(_he(rng, (c_in, c_out, k), c_in * k), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return F.conv_transpose1d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class UNet1d:
    """Two-level encoder/decoder over the time axis with skip concatenation.

    Input (C,L) or (N,C,L), L divisible by 4; output has `base` channels at
    the input length.
    """

    def __init__(self, c_in, base, rng, prefix="unet"):
        self.prefix = prefix
        c1, c2, c3 = base, base * 2, base * 4
        self.enc0a = _Conv1d(rng, c_in, c1, 3, padding=1)
        self.enc0b = _Conv1d(rng, c1, c1, 3, padding=1)
        self.down1 = _Conv1d(rng, c1, c2, 4, stride=2, padding=1)
        self.enc1 = _Conv1d(rng, c2, c2, 3, padding=1)
        self.down2 = _Conv1d(rng, c2, c3, 4, stride=2, padding=1)
        self.enc2 = _Conv1d(rng, c3, c3, 3, padding=1)
        self.up1 = _ConvT1d(rng, c3, c2, 4)
        self.dec1 = _Conv1d(rng, c2 + c2, c2, 3, padding=1)
        self.up2 = _ConvT1d(rng, c2, c1, 4)
        self.dec2 = _Conv1d(rng, c1 + c1, c1, 3, padding=1)

    def __call__(self, x):
        if x.shape[-1] % 4:
            raise ValueError("sequence length must be divisible by 4")
        h0 = self.enc0b(self.enc0a(x).relu()).relu()
        d1 = self.enc1(self.down1(h0).relu()).relu()
        d2 = self.enc2(self.down2(d1).relu()).relu()
        u1 = self.up1(d2).relu()
        u1 = self.dec1(concat([u1, d1], axis=-2)).relu()
        u2 = self.up2(u1).relu()
        return self.dec2(concat([u2, h0], axis=-2)).relu()

    def params(self):
        out = {}
        names = ["enc0a", "enc0b", "down1", "enc1", "down2", "enc2", "up1", "dec1", "up2", "dec2"]
        for name in names:
            layer = getattr(self, name)
            out[f"{self.prefix}.{name}.w"] = layer.w
            out[f"{self.prefix}.{name}.b"] = layer.b
        return out

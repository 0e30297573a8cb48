"""U-Net with average pooling/unpooling, built on :mod:`intomo.neural.layers`.

Topology for ``stages`` S and ``base_channels`` C0, with C_s = C0 * 2**s:

    enc s   (s < S): block(in -> C_s), block(C_s -> C_s), keep skip, avgpool
    mid          : block(C_{S-1} -> C_S), block(C_S -> C_S)
    dec s  (s = S-1..0): unpool, block(C_{s+1} -> C_s), concat skip,
                       block(2 C_s -> C_s), block(C_s -> C_s)
    out          : 1x1 conv C_0 -> 1

A block is 3x3 conv -> ReLU -> batch norm. Pooling leaves the channel count
alone; the first conv after each pooling/unpooling doubles/halves it.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from intomo.neural import layers as L
from intomo.rng import PCG32


@dataclass(frozen=True)
class NetSpec:
    stages: int = 3
    base_channels: int = 16
    input_channels: int = 1
    output_channels: int = 1

    def __post_init__(self):
        if self.stages < 1 or self.base_channels < 1:
            raise ValueError("stages and base_channels must be >= 1")
        if self.input_channels != 1 or self.output_channels != 1:
            raise ValueError("the network maps one channel to one channel")

    def channels(self, s: int) -> int:
        return self.base_channels * 2 ** s

    def blocks(self):
        """Ordered (name, in_channels, out_channels) of every conv-relu-bn block."""
        out = []
        cin = self.input_channels
        for s in range(self.stages):
            c = self.channels(s)
            out += [(f"enc{s}.b1", cin, c), (f"enc{s}.b2", c, c)]
            cin = c
        c = self.channels(self.stages)
        out += [("mid.b1", cin, c), ("mid.b2", c, c)]
        for s in reversed(range(self.stages)):
            c = self.channels(s)
            out += [(f"dec{s}.up", self.channels(s + 1), c),
                    (f"dec{s}.b1", 2 * c, c), (f"dec{s}.b2", c, c)]
        return out


@dataclass
class NetworkParams:
    spec: NetSpec
    tensors: "OrderedDict[str, np.ndarray]"
    # pipeline the network was trained for: image_n, roi_n, filter, geometry
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.spec, OrderedDict((k, v.copy()) for k, v in self.tensors.items()),
                             dict(self.meta))

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(self.spec, OrderedDict(
            (k, v.astype(dtype)) for k, v in self.tensors.items()), dict(self.meta))

    def learnable(self):
        """Names that receive gradients (everything except running statistics)."""
        return [k for k in self.tensors if not k.endswith(("running_mean", "running_var"))]


def he_init(spec: NetSpec, seed: int) -> NetworkParams:
    """Kernels ~ N(0, 2 / fan_in) from PCG32 Box-Muller; zero biases; identity batch norm."""
    rng = PCG32(seed)
    t = OrderedDict()

    def conv(name, cin, cout, k):
        fan_in = cin * k * k
        z = rng.normal_array(cout * cin * k * k)
        t[f"{name}.w"] = (z * np.sqrt(2.0 / fan_in)).reshape(cout, cin, k, k)
        t[f"{name}.b"] = np.zeros(cout)

    for name, cin, cout in spec.blocks():
        conv(name, cin, cout, 3)
        t[f"{name}.gamma"] = np.ones(cout)
        t[f"{name}.beta"] = np.zeros(cout)
        t[f"{name}.running_mean"] = np.zeros(cout)
        t[f"{name}.running_var"] = np.ones(cout)
    conv("out", spec.channels(0), spec.output_channels, 1)
    return NetworkParams(spec, t)


def _block_forward(x, p, name, train, cache, updates):
    h, c1 = L.conv2d_forward(x, p[f"{name}.w"], p[f"{name}.b"])
    h, c2 = L.relu_forward(h)
    h, c3, running = L.batchnorm_forward(h, p[f"{name}.gamma"], p[f"{name}.beta"],
                                         p[f"{name}.running_mean"], p[f"{name}.running_var"],
                                         train)
    cache[name] = (c1, c2, c3)
    if train:
        updates[f"{name}.running_mean"], updates[f"{name}.running_var"] = running
    return h


def _block_backward(dout, name, cache, grads):
    c1, c2, c3 = cache[name]
    d, grads[f"{name}.gamma"], grads[f"{name}.beta"] = L.batchnorm_backward(dout, c3)
    d = L.relu_backward(d, c2)
    d, grads[f"{name}.w"], grads[f"{name}.b"] = L.conv2d_backward(d, c1)
    return d


def unet_forward(x, params: NetworkParams, mode: str = "infer"):
    """Returns (out, cache). ``cache["running"]`` holds the batch-norm updates in train mode.

    Parameters are never modified here; committing running statistics is the caller's job.
    """
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    spec = params.spec
    div = 2 ** spec.stages
    if x.ndim != 4 or x.shape[2] % div or x.shape[3] % div:
        raise ValueError(f"input must be (N, 1, H, W) with H, W divisible by {div}")
    train = mode == "train"
    p = params.tensors
    cache, updates, skips = {}, {}, []
    h = x
    for s in range(spec.stages):
        h = _block_forward(h, p, f"enc{s}.b1", train, cache, updates)
        h = _block_forward(h, p, f"enc{s}.b2", train, cache, updates)
        skips.append(h)
        h, cache[f"enc{s}.pool"] = L.avgpool2_forward(h)
    h = _block_forward(h, p, "mid.b1", train, cache, updates)
    h = _block_forward(h, p, "mid.b2", train, cache, updates)
    for s in reversed(range(spec.stages)):
        h, cache[f"dec{s}.unpool"] = L.avgunpool2_forward(h)
        h = _block_forward(h, p, f"dec{s}.up", train, cache, updates)
        h, cache[f"dec{s}.cat"] = L.concat_forward(h, skips[s])
        h = _block_forward(h, p, f"dec{s}.b1", train, cache, updates)
        h = _block_forward(h, p, f"dec{s}.b2", train, cache, updates)
    out, cache["out"] = L.conv2d_forward(h, p["out.w"], p["out.b"])
    cache["running"] = updates
    return out, cache


def unet_backward(grad_out, cache, params: NetworkParams):
    """Returns (grads, dx); ``grads`` maps every learnable tensor name to its gradient."""
    spec = params.spec
    grads = {}
    d, grads["out.w"], grads["out.b"] = L.conv2d_backward(grad_out, cache["out"])
    dskips = [None] * spec.stages
    for s in range(spec.stages):
        d = _block_backward(d, f"dec{s}.b2", cache, grads)
        d = _block_backward(d, f"dec{s}.b1", cache, grads)
        d, dskips[s] = L.concat_backward(d, cache[f"dec{s}.cat"])
        d = _block_backward(d, f"dec{s}.up", cache, grads)
        d = L.avgunpool2_backward(d, cache[f"dec{s}.unpool"])
    d = _block_backward(d, "mid.b2", cache, grads)
    d = _block_backward(d, "mid.b1", cache, grads)
    for s in reversed(range(spec.stages)):
        d = L.avgpool2_backward(d, cache[f"enc{s}.pool"])
        d = d + dskips[s]
        d = _block_backward(d, f"enc{s}.b2", cache, grads)
        d = _block_backward(d, f"enc{s}.b1", cache, grads)
    return grads, d


def recalibrate_batchnorm(params: NetworkParams, x, batch_size: int = 16):
    """Population batch-norm statistics over ``x``; returns (params copy, output on x).

    Same as a train-mode pass with all of ``x`` as one batch, so each layer's
    statistics are taken with every layer upstream already using its own. The
    convolutions run ``batch_size`` samples at a time to bound memory.
    """
    p = params.copy()
    t = p.tensors
    spec = p.spec
    dtype = next(iter(t.values())).dtype

    def conv(h, name):
        return np.concatenate([L.conv2d_forward(h[i:i + batch_size], t[f"{name}.w"], t[f"{name}.b"])[0]
                               for i in range(0, len(h), batch_size)])

    def block(h, name):
        h = np.maximum(conv(h, name), 0)
        t[f"{name}.running_mean"] = h.mean(axis=(0, 2, 3), dtype=np.float64).astype(dtype)
        t[f"{name}.running_var"] = h.var(axis=(0, 2, 3), dtype=np.float64).astype(dtype)
        out, _, _ = L.batchnorm_forward(h, t[f"{name}.gamma"], t[f"{name}.beta"],
                                        t[f"{name}.running_mean"], t[f"{name}.running_var"], False)
        return out

    h = np.asarray(x, dtype=dtype)
    skips = []
    for s in range(spec.stages):
        h = block(block(h, f"enc{s}.b1"), f"enc{s}.b2")
        skips.append(h)
        h = L.avgpool2_forward(h)[0]
    h = block(block(h, "mid.b1"), "mid.b2")
    for s in reversed(range(spec.stages)):
        h = block(L.avgunpool2_forward(h)[0], f"dec{s}.up")
        h = np.concatenate([h, skips.pop()], axis=1)
        h = block(block(h, f"dec{s}.b1"), f"dec{s}.b2")
    return p, conv(h, "out")

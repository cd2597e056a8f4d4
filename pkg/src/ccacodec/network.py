"""Transforms, gated/residual blocks and the per-stage entropy networks."""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .entropy import (LIKELIHOOD_FLOOR, SIGMA_FLOOR, EntropyParams, FactorizedDensity,
                      GroupSchedule, build_schedule, sigma_from_raw)
from .tensor import ShapeError, Tensor

PROFILE_IDS = {"toy": 0, "full": 1, "tiny": 2}


@dataclass(frozen=True)
class ModelConfig:
    profile: str = "toy"
    image_channels: int = 3
    M: int = 48
    hyper_channels: int = 32
    n: int = 3
    k: float = 1.7
    dims: tuple[int, int, int] = (32, 40, 48)
    residual_blocks: int = 1
    gated_blocks: int = 1
    entropy_width: int = 48
    entropy_blocks: int = 1
    sigma_floor: float = SIGMA_FLOOR
    likelihood_floor: float = LIKELIHOOD_FLOOR
    counts: tuple[int, ...] | None = None

    def __post_init__(self):
        widths = (*self.dims, self.entropy_width)
        bad = [w for w in widths if w < 4 or w % 2]
        if bad:
            raise ValueError(f"block widths must be even and >= 4, got {bad}")
        if sum(self.schedule.counts) != self.M:
            raise ValueError("schedule does not cover the latent channels")

    @property
    def schedule(self) -> GroupSchedule:
        if self.counts is not None:
            return GroupSchedule(n=len(self.counts), k=self.k, M=self.M,
                                 counts=tuple(self.counts))
        return build_schedule(self.M, self.n, self.k)

    @property
    def profile_id(self) -> int:
        return PROFILE_IDS[self.profile]

    @property
    def hyper_width(self) -> int:
        return self.dims[2]


PROFILES = {
    "toy": ModelConfig(),
    "full": ModelConfig(profile="full", M=320, hyper_channels=192, n=5, k=1.7,
                        dims=(192, 224, 256), residual_blocks=3, gated_blocks=4,
                        entropy_width=224, entropy_blocks=2),
    "tiny": ModelConfig(profile="tiny", M=12, hyper_channels=8, n=3, k=1.7,
                        dims=(8, 8, 12), entropy_width=12),
}


def profile_config(name: str, **overrides) -> ModelConfig:
    try:
        base = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    return replace(base, **overrides)


# ---------------------------------------------------------------------------
# module plumbing


class Module:
    """Named parameters plus child modules, iterated in construction order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}
        self._frozen = False

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def p(self, name: str) -> Tensor:
        t = self._params[name]
        return T.detach(t) if self._frozen else t

    def named_parameters(self, prefix: str = ""):
        for name, t in self._params.items():
            yield prefix + name, t
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def _set_frozen(self, flag: bool):
        self._frozen = flag
        for child in self._children.values():
            child._set_frozen(flag)

    @contextmanager
    def frozen(self):
        """Evaluate with parameters cut off from the gradient tape."""
        self._set_frozen(True)
        try:
            yield self
        finally:
            self._set_frozen(False)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


class Conv(Module):
    def __init__(self, rng, cin, cout, kernel, stride=1, zero=False):
        super().__init__()
        self.stride, self.padding = stride, kernel // 2
        shape = (cout, cin, kernel, kernel)
        self.add_param("weight", np.zeros(shape) if zero else _uniform(rng, shape, cin * kernel ** 2))
        self.add_param("bias", np.zeros(cout))
        self.cin, self.cout = cin, cout

    def __call__(self, x):
        if x.shape[1] != self.cin:
            raise ShapeError(f"Conv: expected {self.cin} input channels, got {x.shape}")
        return T.conv2d(x, self.p("weight"), self.p("bias"), stride=self.stride,
                        padding=self.padding)


class TConv(Module):
    """Stride-2 transposed convolution that exactly doubles spatial size."""

    def __init__(self, rng, cin, cout, kernel=5, stride=2):
        super().__init__()
        self.stride, self.padding = stride, kernel // 2
        self.output_padding = stride - 1
        shape = (cin, cout, kernel, kernel)
        self.add_param("weight", _uniform(rng, shape, max(cin * kernel ** 2 // stride ** 2, 1)))
        self.add_param("bias", np.zeros(cout))
        self.cin, self.cout = cin, cout

    def __call__(self, x):
        if x.shape[1] != self.cin:
            raise ShapeError(f"TConv: expected {self.cin} input channels, got {x.shape}")
        return T.conv_transpose2d(x, self.p("weight"), self.p("bias"), stride=self.stride,
                                  padding=self.padding, output_padding=self.output_padding)


class DepthwiseConv(Module):
    def __init__(self, rng, channels, kernel=3):
        super().__init__()
        self.padding = kernel // 2
        self.add_param("weight", _uniform(rng, (channels, kernel, kernel), kernel * kernel))
        self.add_param("bias", np.zeros(channels))

    def __call__(self, x):
        return T.depthwise_conv2d(x, self.p("weight"), self.p("bias"), padding=self.padding)


class LayerNorm(Module):
    def __init__(self, channels):
        super().__init__()
        self.add_param("weight", np.ones(channels))
        self.add_param("bias", np.zeros(channels))

    def __call__(self, x):
        return T.channel_layer_norm(x, self.p("weight"), self.p("bias"))


def gate(x: Tensor) -> Tensor:
    half = x.shape[1] // 2
    a, b = T.split_channels(x, (half, half))
    return a * b


class ResidualBlock(Module):
    def __init__(self, rng, channels):
        super().__init__()
        self.conv1 = self.add_child("conv1", Conv(rng, channels, channels, 3))
        self.conv2 = self.add_child("conv2", Conv(rng, channels, channels, 3, zero=True))

    def __call__(self, x):
        return x + self.conv2(T.leaky_relu(self.conv1(x)))


class GatedBlock(Module):
    """Activation-free block: gated depthwise mixing with channel attention, then a gated FFN."""

    def __init__(self, rng, channels):
        super().__init__()
        if channels % 2 or channels < 4:
            raise ValueError(f"GatedBlock needs an even width >= 4, got {channels}")
        c = channels
        self.norm1 = self.add_child("norm1", LayerNorm(c))
        self.expand = self.add_child("expand", Conv(rng, c, 2 * c, 1))
        self.dw = self.add_child("dw", DepthwiseConv(rng, 2 * c, 3))
        self.sca = self.add_child("sca", Conv(rng, c, c, 1))
        self.project = self.add_child("project", Conv(rng, c, c, 1, zero=True))
        self.norm2 = self.add_child("norm2", LayerNorm(c))
        self.ffn_expand = self.add_child("ffn_expand", Conv(rng, c, 2 * c, 1))
        self.ffn_project = self.add_child("ffn_project", Conv(rng, c, c, 1, zero=True))

    def __call__(self, x):
        h = gate(self.dw(self.expand(self.norm1(x))))
        h = h * self.sca(T.global_avg_pool(h))
        x = x + self.project(h)
        h = gate(self.ffn_expand(self.norm2(x)))
        return x + self.ffn_project(h)


class Sequential(Module):
    def __init__(self, layers):
        super().__init__()
        self.layers = []
        for i, layer in enumerate(layers):
            if isinstance(layer, Module):
                self.add_child(str(i), layer)
            self.layers.append(layer)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def _stage(rng, width, cfg: ModelConfig, decoder: bool):
    res = [ResidualBlock(rng, width) for _ in range(cfg.residual_blocks)]
    gated = [GatedBlock(rng, width) for _ in range(cfg.gated_blocks)]
    return gated + res if decoder else res + gated


class EntropyNet(Module):
    """1x1 in -> gated blocks -> 1x1 out; used for major, auxiliary and LRP heads."""

    def __init__(self, rng, cin, width, cout, blocks, zero_head=False):
        super().__init__()
        self.cin = cin
        self.inp = self.add_child("inp", Conv(rng, cin, width, 1))
        self.blocks = self.add_child("blocks", Sequential([GatedBlock(rng, width)
                                                           for _ in range(blocks)]))
        self.out = self.add_child("out", Conv(rng, width, cout, 1, zero=zero_head))

    def __call__(self, x):
        if x.shape[1] != self.cin:
            raise ShapeError(f"EntropyNet: expected {self.cin} input channels, got {x.shape[1]}")
        return self.out(self.blocks(self.inp(x)))


# ---------------------------------------------------------------------------
# full model


class CCAModel(Module):
    """Analysis/synthesis transforms, hyperprior and channel-wise entropy model.

    ``entropy[i]`` predicts slice ``i`` from hyper features and slices ``< i``;
    ``aux[i]`` (for ``i >= 2``) sees one slice less.  Stages are 1-based in
    the public methods.
    """

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        super().__init__()
        cfg = config or PROFILES["toy"]
        self.config = cfg
        self.schedule = cfg.schedule
        rng = np.random.default_rng(seed)
        d0, d1, d2 = cfg.dims
        M, Cz, ic = cfg.M, cfg.hyper_channels, cfg.image_channels
        self.g_a = self.add_child("g_a", Sequential(
            [Conv(rng, ic, d0, 5, 2), *_stage(rng, d0, cfg, False),
             Conv(rng, d0, d1, 5, 2), *_stage(rng, d1, cfg, False),
             Conv(rng, d1, d2, 5, 2), *_stage(rng, d2, cfg, False),
             Conv(rng, d2, M, 5, 2)]))
        self.g_s = self.add_child("g_s", Sequential(
            [TConv(rng, M, d2), *_stage(rng, d2, cfg, True),
             TConv(rng, d2, d1), *_stage(rng, d1, cfg, True),
             TConv(rng, d1, d0), *_stage(rng, d0, cfg, True),
             TConv(rng, d0, ic)]))
        dh = cfg.hyper_width
        self.h_a = self.add_child("h_a", Sequential(
            [Conv(rng, M, dh, 5, 1), T.gelu, Conv(rng, dh, dh, 5, 2), T.gelu,
             Conv(rng, dh, Cz, 5, 2)]))
        self.h_s = self.add_child("h_s", Sequential(
            [TConv(rng, Cz, dh), T.gelu, TConv(rng, dh, dh), T.gelu,
             Conv(rng, dh, 2 * M, 5, 1)]))
        self.density = FactorizedDensity(Cz, rng=rng, prefix="density")
        for t in self.density.parameters():
            self._params[t.name] = t
        counts = self.schedule.counts
        ew, eb = cfg.entropy_width, cfg.entropy_blocks
        self.entropy: dict[int, EntropyNet] = {}
        self.aux: dict[int, EntropyNet] = {}
        self.lrp_nets: dict[int, EntropyNet] = {}
        for i in range(1, self.schedule.n + 1):
            ctx = self.schedule.context_channels(i)
            self.entropy[i] = self.add_child(f"entropy{i}", EntropyNet(
                rng, 2 * M + ctx, ew, 2 * counts[i - 1], eb))
            if i >= 2:
                aux_ctx = self.schedule.context_channels(i, lag=1)
                self.aux[i] = self.add_child(f"aux{i}", EntropyNet(
                    rng, 2 * M + aux_ctx, ew, 2 * counts[i - 1], eb))
            self.lrp_nets[i] = self.add_child(f"lrp{i}", EntropyNet(
                rng, 2 * M + ctx + counts[i - 1], ew, counts[i - 1], eb, zero_head=True))

    # -- naming --------------------------------------------------------

    def parameter_groups(self) -> dict[str, list[Tensor]]:
        groups: dict[str, list[Tensor]] = {}
        for name, t in self.named_parameters():
            key = name.split(".", 1)[0]
            key = "aux" if key.startswith("aux") else key
            groups.setdefault(key, []).append(t)
        return groups

    def aux_parameters(self) -> list[Tensor]:
        return [t for net in self.aux.values() for t in net.parameters()]

    # -- transforms ----------------------------------------------------

    def analysis(self, x: Tensor) -> Tensor:
        """Image in [0, 255] (N, 3, H, W) -> latent (N, M, H/16, W/16)."""
        if x.ndim != 4 or x.shape[1] != self.config.image_channels:
            raise ShapeError(f"analysis: expected (N, {self.config.image_channels}, H, W), "
                             f"got {x.shape}")
        if x.shape[2] % 16 or x.shape[3] % 16:
            raise ShapeError(f"analysis: H and W must be multiples of 16, got {x.shape[2:]}")
        return self.g_a(T.as_tensor(x) * (1.0 / 255.0))

    def synthesis(self, y_hat: Tensor) -> Tensor:
        """Latent -> unclamped image on the 0-255 scale."""
        if y_hat.ndim != 4 or y_hat.shape[1] != self.config.M:
            raise ShapeError(f"synthesis: expected {self.config.M} channels, got {y_hat.shape}")
        return self.g_s(y_hat) * 255.0

    def hyper_analysis(self, y: Tensor) -> Tensor:
        if y.ndim != 4 or y.shape[1] != self.config.M or y.shape[2] % 4 or y.shape[3] % 4:
            raise ShapeError(f"hyper_analysis: expected (N, {self.config.M}, 4h, 4w), got {y.shape}")
        return self.h_a(y)

    def hyper_synthesis(self, z_hat: Tensor) -> Tensor:
        if z_hat.ndim != 4 or z_hat.shape[1] != self.config.hyper_channels:
            raise ShapeError(f"hyper_synthesis: expected {self.config.hyper_channels} channels, "
                             f"got {z_hat.shape}")
        return self.h_s(z_hat)

    # -- entropy stages ------------------------------------------------

    def _context(self, stage: int, hyper: Tensor, slices, lag: int) -> Tensor:
        need = max(stage - 1 - lag, 0)
        if len(slices) != need:
            raise ShapeError(f"stage {stage}: expected {need} context slices, got {len(slices)}")
        for j, s in enumerate(slices):
            expect = self.schedule.counts[j]
            if s.ndim != 4 or s.shape[1] != expect or s.shape[2:] != hyper.shape[2:]:
                raise ShapeError(f"stage {stage}: context slice {j + 1} has shape {s.shape}, "
                                 f"expected {expect} channels at {hyper.shape[2:]}")
        return T.concat([hyper, *slices], axis=1)

    def _split_params(self, stage: int, out: Tensor) -> EntropyParams:
        c = self.schedule.counts[stage - 1]
        mu, raw = T.split_channels(out, (c, c))
        return EntropyParams(mu, sigma_from_raw(raw, self.config.sigma_floor))

    def stage_params(self, stage: int, hyper: Tensor, decoded) -> EntropyParams:
        """Major model: slice ``stage`` given hyper features and slices ``1..stage-1``."""
        return self._split_params(stage, self.entropy[stage](self._context(stage, hyper, decoded, 0)))

    def aux_params(self, stage: int, hyper: Tensor, decoded) -> EntropyParams:
        """Auxiliary model: slice ``stage`` given slices ``1..stage-2`` only."""
        if stage == 1:
            return self.stage_params(1, hyper, decoded)
        net = self.aux[stage]
        return self._split_params(stage, net(self._context(stage, hyper, decoded, 1)))

    def lrp_refine(self, stage: int, hyper: Tensor, decoded, y_hat_i: Tensor) -> Tensor:
        ctx = self._context(stage, hyper, decoded, 0)
        r = self.lrp_nets[stage](T.concat([ctx, y_hat_i], axis=1))
        return y_hat_i + T.tanh(r) * 0.5


def analytic_parameter_count(cfg: ModelConfig) -> int:
    """Parameter count derived from the architecture description alone."""
    d0, d1, d2 = cfg.dims
    M, Cz, ic, dh = cfg.M, cfg.hyper_channels, cfg.image_channels, cfg.hyper_width

    def conv(cin, cout, k):
        return cin * cout * k * k + cout

    def res(c):
        return 2 * conv(c, c, 3)

    def gated(c):
        return (2 * c + conv(c, 2 * c, 1) + (2 * c * 9 + 2 * c) + conv(c, c, 1)
                + conv(c, c, 1) + 2 * c + conv(c, 2 * c, 1) + conv(c, c, 1))

    def level(c):
        return cfg.residual_blocks * res(c) + cfg.gated_blocks * gated(c)

    total = conv(ic, d0, 5) + conv(d0, d1, 5) + conv(d1, d2, 5) + conv(d2, M, 5)
    total += conv(M, d2, 5) + conv(d2, d1, 5) + conv(d1, d0, 5) + conv(d0, ic, 5)
    total += 2 * (level(d0) + level(d1) + level(d2))
    total += conv(M, dh, 5) + conv(dh, dh, 5) + conv(dh, Cz, 5)
    total += conv(Cz, dh, 5) + conv(dh, dh, 5) + conv(dh, 2 * M, 5)
    widths = (1, 3, 3, 3, 1)
    total += Cz * sum(widths[i + 1] * widths[i] + widths[i + 1] for i in range(4))
    total += Cz * 3 * 3
    ew, eb = cfg.entropy_width, cfg.entropy_blocks

    def enet(cin, cout):
        return conv(cin, ew, 1) + eb * gated(ew) + conv(ew, cout, 1)

    sched = cfg.schedule
    for i in range(1, sched.n + 1):
        c = sched.counts[i - 1]
        total += enet(2 * M + sched.context_channels(i), 2 * c)
        if i >= 2:
            total += enet(2 * M + sched.context_channels(i, lag=1), 2 * c)
        total += enet(2 * M + sched.context_channels(i) + c, c)
    return total

"""Training objective, Adam, configs and the crop sampler."""

from __future__ import annotations

import logging
import math
import os
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from . import tensor as T
from .entropy import factorized_likelihood, gaussian_likelihood, quantize_train
from .imageio import list_images, read_ppm
from .losses import (LossReport, StageNLL, aux_loss, cca_loss, distortion_mse, nll_bits,
                     total_loss)
from .network import CCAModel, profile_config
from .tensor import Tensor

log = logging.getLogger(__name__)

# noise draws per step: slot 0 is z, slots 1..n the latent slices
_NOISE_SLOTS = 64
# g_a then h_a: four stride-2 stages and two more
_DOWNSAMPLE = 64


class NonFiniteLossError(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# config


@dataclass
class TrainConfig:
    seed: int = 0
    steps: int = 20000
    batch_size: int = 8
    crop_size: int = 64
    lr_initial: float = 1e-4
    lr_drop_step: int | None = None
    lr_final: float = 1e-5
    lmbda: float = 1.8
    cca_enabled: bool = True
    cca_sign: float = 1.0
    schedule_n: int = 3
    schedule_k: float = 1.7
    profile: str = "toy"
    data_dir: str = "data"
    checkpoint_path: str = "model.ccaw"

    def __post_init__(self):
        if self.crop_size % 16 or self.crop_size <= 0:
            raise ValueError(f"crop_size must be a positive multiple of 16, got {self.crop_size}")
        if self.steps <= 0:
            raise ValueError("steps must be positive")
        if not self.lmbda > 0:
            raise ValueError("lambda must be positive")
        if self.cca_sign not in (1.0, -1.0):
            raise ValueError("cca_sign must be +1 or -1")
        if self.lr_drop_step is None:
            self.lr_drop_step = int(round(0.9 * self.steps))

    def learning_rate(self, step: int) -> float:
        return self.lr_initial if step < self.lr_drop_step else self.lr_final

    def model_config(self):
        return profile_config(self.profile, n=self.schedule_n, k=self.schedule_k)


# Full-scale schedule; far beyond a single CPU, kept for reference.
FULL_PRESET = dict(steps=3_000_000, lr_drop_step=2_800_000, batch_size=8, crop_size=256,
                   lr_initial=1e-4, lr_final=1e-5, profile="full", schedule_n=5,
                    schedule_k=1.7)

_CONFIG_KEYS = {("lambda" if f.name == "lmbda" else f.name): f for f in fields(TrainConfig)}


def _parse_value(key: str, raw: str):
    f = _CONFIG_KEYS[key]
    kind = str(f.type)
    if "bool" in kind:
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"config key {key!r}: expected a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw


def parse_config(text: str) -> TrainConfig:
    """``key = value`` lines, ``#`` comments; keys are the TrainConfig field names."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[_CONFIG_KEYS[key].name] = _parse_value(key, raw)
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    with open(path, encoding="utf-8") as f:
        cfg = parse_config(f.read())
    env_seed = os.environ.get("CCA_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    return cfg


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for key, f in _CONFIG_KEYS.items():
        lines.append(f"{key} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_update(params, grads, state: AdamState, lr: float, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam step, in place on the ``params`` arrays.

    Entries whose gradient is None are skipped.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def step(self, lr: float | None = None):
        adam_update([p.data for p in self.params], [p.grad for p in self.params], self.state,
                    self.lr if lr is None else lr, *self.betas, self.eps)

    def zero_grad(self):
        T.zero_grads(self.params)


# ---------------------------------------------------------------------------
# objective


@dataclass
class ForwardResult:
    total: Tensor
    report: LossReport
    stages: list[StageNLL]
    x_hat: Tensor
    bits_z: float
    bits_slices: list[float]
    cca: Tensor
    aux: Tensor


def forward_losses(model: CCAModel, x: np.ndarray, seed: int, step: int, lmbda: float,
                   cca_enabled: bool = True, cca_sign: float = 1.0) -> ForwardResult:
    """Training objective on a batch of 0-255 images (N, 3, H, W).

    Rate, adjustment and auxiliary terms score the noise-quantized latents;
    the reconstruction path and the causal context use residual rounding
    with a straight-through gradient followed by latent residual prediction,
    which matches what the decoder reconstructs.  Crops whose sides are not
    a multiple of the total downsampling are reflect-padded like the codec
    pads images; rates are per true pixel and distortion ignores the pad.
    """
    x = np.asarray(T.as_tensor(x).data)
    n_img, _, h, w = x.shape
    num_pixels = n_img * h * w
    ph, pw = -h % _DOWNSAMPLE, -w % _DOWNSAMPLE
    target = T.as_tensor(x)
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect" if min(h, w) > 1 else "edge")
    x = T.as_tensor(x)
    cfg = model.config
    sched = model.schedule
    base = step * _NOISE_SLOTS

    y = model.analysis(x)
    z = model.hyper_analysis(y)
    lik_z = factorized_likelihood(quantize_train(z, seed, base), model.density,
                                  cfg.likelihood_floor)
    bits_z = nll_bits(lik_z)
    hyper = model.hyper_synthesis(T.round_ste(z))

    y_slices = T.split_channels(y, sched.counts)
    decoded: list[Tensor] = []
    stages: list[StageNLL] = []
    aux_train: list[StageNLL] = []
    for i in range(1, sched.n + 1):
        y_i = y_slices[i - 1]
        params = model.stage_params(i, hyper, decoded)
        noisy = quantize_train(y_i, seed, base + i)
        major = nll_bits(gaussian_likelihood(noisy, params, cfg.likelihood_floor))
        if i == 1:
            stages.append(StageNLL(1, major, major, y_i.size))
            aux_train.append(StageNLL(1, major, Tensor(0.0), y_i.size))
        else:
            ctx = decoded[:i - 2]
            if cca_enabled:
                with model.aux[i].frozen():
                    p_aux = model.aux_params(i, hyper, ctx)
                aux_bits = nll_bits(gaussian_likelihood(noisy, p_aux, cfg.likelihood_floor))
            else:
                aux_bits = major
            stages.append(StageNLL(i, major, aux_bits, y_i.size))
            p_train = model.aux_params(i, T.detach(hyper), [T.detach(c) for c in ctx])
            train_bits = nll_bits(gaussian_likelihood(T.detach(noisy), p_train,
                                                      cfg.likelihood_floor))
            aux_train.append(StageNLL(i, major, train_bits, y_i.size))
        y_hat = T.round_ste(y_i - params.mu) + params.mu
        decoded.append(model.lrp_refine(i, hyper, decoded, y_hat))

    x_hat = model.synthesis(T.concat(decoded, axis=1))
    rate_y = None
    for s in stages:
        rate_y = s.major_nll if rate_y is None else rate_y + s.major_nll
    rate_y = rate_y * (1.0 / num_pixels)
    rate_z = bits_z * (1.0 / num_pixels)
    if ph or pw:
        mask = np.zeros(x.shape)
        mask[:, :, :h, :w] = 1.0
        dist = T.sum_(T.square(x_hat - x) * mask) * (1.0 / target.size)
    else:
        dist = distortion_mse(x, x_hat)
    cca = cca_loss(stages, num_pixels, sched.n, cca_sign) if cca_enabled else Tensor(0.0)
    aux = aux_loss(aux_train, num_pixels, sched.n)
    total, report = total_loss(rate_y, rate_z, dist, cca, aux, lmbda)
    return ForwardResult(total, report, stages, x_hat, bits_z.item(),
                         [s.major_nll.item() for s in stages], cca, aux)


def train_step(model: CCAModel, optimizer: Adam, batch: np.ndarray, config: TrainConfig,
               step: int) -> LossReport:
    try:
        res = forward_losses(model, batch, config.seed, step, config.lmbda,
                             config.cca_enabled, config.cca_sign)
    except FloatingPointError as exc:
        raise NonFiniteLossError(f"step {step}: non-finite value in forward pass: {exc}") from exc
    if not math.isfinite(res.report.total):
        raise NonFiniteLossError(f"step {step}: non-finite loss {res.report.as_dict()}")
    optimizer.zero_grad()
    T.backward(res.total)
    optimizer.step(config.learning_rate(step))
    return res.report


# ---------------------------------------------------------------------------
# data


class CropSampler:
    """Deterministic random crops from a directory of P6 PPM images.

    Draw ``k`` is a pure function of ``(seed, k)``.
    """

    def __init__(self, images: list[np.ndarray], crop: int, seed: int = 0,
                 names: list[str] | None = None):
        self.crop = crop
        self.seed = seed
        self.rejected: list[str] = []
        self.images: list[np.ndarray] = []
        self.names: list[str] = []
        names = names or [f"image{i}" for i in range(len(images))]
        for name, img in zip(names, images):
            if img.shape[0] < crop or img.shape[1] < crop:
                self.rejected.append(name)
                continue
            self.images.append(img)
            self.names.append(name)
        if self.rejected:
            warnings.warn(f"skipped {len(self.rejected)} image(s) smaller than {crop}px: "
                          f"{', '.join(self.rejected[:5])}")
        if not self.images:
            raise ValueError("dataset is empty (no images at least the crop size)")
        self.draws = 0

    def draw(self, k: int) -> tuple[int, np.ndarray]:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, k], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        idx = int(gen.integers(len(self.images)))
        img = self.images[idx]
        top = int(gen.integers(img.shape[0] - self.crop + 1))
        left = int(gen.integers(img.shape[1] - self.crop + 1))
        return idx, img[top:top + self.crop, left:left + self.crop]

    def batch(self, size: int) -> np.ndarray:
        crops = []
        for _ in range(size):
            _, c = self.draw(self.draws)
            self.draws += 1
            crops.append(c)
        return np.stack(crops).astype(np.float64).transpose(0, 3, 1, 2)


def load_dataset(directory, crop: int, seed: int = 0) -> CropSampler:
    paths = list_images(directory)
    if not paths:
        raise ValueError(f"dataset is empty: no .ppm files in {directory}")
    return CropSampler([read_ppm(p) for p in paths], crop, seed,
                       names=[os.path.basename(p) for p in paths])


def train(config: TrainConfig, sampler: CropSampler | None = None, model: CCAModel | None = None,
          callback=None) -> tuple[CCAModel, list[LossReport]]:
    """Run ``config.steps`` Adam steps; returns the model and per-step reports."""
    sampler = sampler or load_dataset(config.data_dir, config.crop_size, config.seed)
    model = model or CCAModel(config.model_config(), seed=config.seed)
    opt = Adam(model.parameters(), lr=config.lr_initial)
    reports = []
    for step in range(config.steps):
        rep = train_step(model, opt, sampler.batch(config.batch_size), config, step)
        reports.append(rep)
        if callback is not None:
            callback(step, rep, model)
    return model, reports

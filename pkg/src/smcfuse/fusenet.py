"""End-to-end fusion network: per-modality MAFE, gated cross-modal experts, reconstruction head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import get_type_hints

import numpy as np

from .mafe import MafeBlock, Stem, conv_weight
from .mccm import GateDecision, MccmState, mccm_forward
from .numerics import Module, Parameter, Tensor, as_tensor, conv2d, sigmoid, silu
from .objective import LossWeights


@dataclass
class FusionConfig:
    width: int = 8               # stem width C
    state: int = 8               # SSM state size S
    experts: int = 4             # N
    top_k: int = 2
    in_channels: int = 1
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_window: int = 1000        # iterations per halving window
    lambda_fcl: float = 0.8
    lambda_pcl: float = 0.4
    lambda_mccm: float = 1.0
    lambda_ssim: float = 1.0
    lambda_int: float = 1.0
    epochs: int = 10             # T, horizon of the diversity/consensus schedule
    max_steps: int = 0           # 0 = epochs * dataset size
    checkpoint_every: int = 0
    seed: int = 42
    use_mafe: bool = True
    use_mccm: bool = True
    bidirectional: bool = True

    def __post_init__(self):
        if self.width % 2:
            raise ValueError(f"width must be even, got {self.width}")
        if not 1 <= self.top_k <= self.experts:
            raise ValueError(f"need 1 <= top_k <= experts, got {self.top_k} and {self.experts}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        self.loss_weights  # validates non-negativity

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_fcl, self.lambda_pcl, self.lambda_mccm,
                           self.lambda_ssim, self.lambda_int)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "FusionConfig":
        return FusionConfig(**{**asdict(self), **changes})


def _parse_value(kind, raw: str):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return kind(raw.strip())


def parse_overrides(pairs: dict[str, str]) -> dict:
    hints = get_type_hints(FusionConfig)
    known = {f.name for f in fields(FusionConfig)}
    out = {}
    for key, raw in pairs.items():
        if key not in known:
            raise KeyError(f"unknown config key {key!r}")
        out[key] = _parse_value(hints[key], raw)
    return out


def read_config_text(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path: str | Path, **overrides) -> FusionConfig:
    values = parse_overrides(read_config_text(Path(path).read_text()))
    values.update(overrides)
    return FusionConfig(**values)


def format_config(config: FusionConfig) -> str:
    return "\n".join(f"{k} = {v}" for k, v in config.to_dict().items()) + "\n"


class ReconstructionHead(Module):
    """Two 3x3 conv + SiLU layers, then a 1x1 conv and a sigmoid."""

    def __init__(self, in_width: int, hidden: int, out_ch: int, rng: np.random.Generator):
        self.w1 = Parameter(conv_weight(rng, hidden, in_width, 3))
        self.b1 = Parameter(np.zeros(hidden))
        self.w2 = Parameter(conv_weight(rng, hidden, hidden, 3))
        self.b2 = Parameter(np.zeros(hidden))
        self.w3 = Parameter(conv_weight(rng, out_ch, hidden, 1))
        self.b3 = Parameter(np.zeros(out_ch))

    def __call__(self, x) -> Tensor:
        x = silu(conv2d(x, self.w1, "full-3x3", self.b1))
        x = silu(conv2d(x, self.w2, "full-3x3", self.b2))
        return sigmoid(conv2d(x, self.w3, "pointwise-1x1", self.b3))


class FusionModel(Module):
    def __init__(self, config: FusionConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        C, S = config.width, config.state
        bi = config.bidirectional
        if config.use_mafe:
            self.enc1 = MafeBlock(config.in_channels, C, S, rng, bi)
            self.enc2 = MafeBlock(config.in_channels, C, S, rng, bi)
            feat = 2 * C
        else:
            self.enc1 = Stem(config.in_channels, C, rng)
            self.enc2 = Stem(config.in_channels, C, rng)
            feat = C
        n, k = (config.experts, config.top_k) if config.use_mccm else (1, 1)
        self.mccm = MccmState(feat, 2 * feat, S, n, k, rng, bi, horizon=config.epochs)
        self.head = ReconstructionHead(2 * feat, C, config.in_channels, rng)
        self.name_parameters()

    @property
    def feature_width(self) -> int:
        return self.mccm.experts[0].in_width


@dataclass
class Intermediates:
    f_m1: Tensor
    f_m2: Tensor
    f_mf: Tensor
    decision: GateDecision
    expert_outputs: list


def _check_images(i1: Tensor, i2: Tensor, in_ch: int) -> None:
    if i1.shape != i2.shape:
        raise ValueError(f"source images differ in shape: {i1.shape} vs {i2.shape}")
    if i1.ndim != 3 or i1.shape[0] != in_ch:
        raise ValueError(f"expected [{in_ch}, H, W] images, got {i1.shape}")
    H, W = i1.shape[1:]
    if H % 2 or W % 2 or H < 16 or W < 16:
        raise ValueError(f"image size {H}x{W} must be even and at least 16x16")
    for name, img in (("first", i1), ("second", i2)):
        lo, hi = img.data.min(), img.data.max()
        if lo < 0 or hi > 1:
            raise ValueError(f"{name} image has values in [{lo:.3g}, {hi:.3g}], expected [0, 1]")


def fuse_forward(i_m1, i_m2, model: FusionModel, rng: np.random.Generator | None = None,
                 mode: str = "infer") -> tuple[Tensor, Intermediates]:
    i_m1, i_m2 = as_tensor(i_m1), as_tensor(i_m2)
    _check_images(i_m1, i_m2, model.config.in_channels)
    f_m1, f_m2 = model.enc1(i_m1), model.enc2(i_m2)
    decision = None
    if not model.config.use_mccm:
        decision = GateDecision(Tensor(np.ones(1)), (0,), np.zeros(1), np.zeros(1))
    f_mf, decision, outputs = mccm_forward(f_m1, f_m2, model.mccm, rng, mode, decision)
    i_mf = model.head(f_mf)
    return i_mf, Intermediates(f_m1, f_m2, f_mf, decision, outputs)


def fuse_images(model: FusionModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Inference-mode fusion of two [C, H, W] arrays in [0, 1]."""
    out, _ = fuse_forward(a, b, model, None, "infer")
    return out.data

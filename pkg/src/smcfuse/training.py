"""Batch-size-1 training loop with per-step JSON-lines records and resumable checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .fusenet import FusionConfig, FusionModel, fuse_forward
from .mccm import diversity_weight
from .numerics import backward
from .objective import loss_total
from .optim import Adam, learning_rate


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainRecord:
    step: int
    epoch: int
    lr: float
    diversity_weight: float
    losses: dict[str, float]
    gate_weights: list[float]
    selected: list[int]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def total_steps(config: FusionConfig, n_pairs: int) -> int:
    return config.max_steps or config.epochs * n_pairs


def epoch_of(step: int, n_pairs: int) -> int:
    """1-based epoch index of a 0-based step."""
    return step // n_pairs + 1


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, 1, epoch]).permutation(n)


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0, step])


class Trainer:
    def __init__(self, config: FusionConfig, pairs: Sequence[tuple[np.ndarray, np.ndarray]]):
        if not pairs:
            raise ValueError("training needs at least one image pair")
        self.config = config
        self.pairs = list(pairs)
        self.model = FusionModel(config)
        self.params = self.model.parameters()
        self.optimizer = Adam(self.params, config.beta1, config.beta2, config.adam_eps)
        self.step = 0
        self.records: list[TrainRecord] = []

    @property
    def horizon(self) -> int:
        return self.config.epochs

    def train_step(self) -> TrainRecord:
        cfg = self.config
        n = len(self.pairs)
        epoch = epoch_of(self.step, n)
        t = min(epoch, self.horizon)
        a, b = self.pairs[_epoch_order(cfg.seed, epoch, n)[self.step % n]]
        self.model.zero_grad()
        i_mf, inter = fuse_forward(a, b, self.model, step_rng(cfg.seed, self.step), "train")
        br = loss_total(inter.f_mf, inter.f_m1, inter.f_m2, i_mf, a, b, inter.decision.weights,
                        inter.expert_outputs, t, self.horizon, cfg.loss_weights)
        values = br.values()
        bad = [k for k, v in values.items() if not math.isfinite(v)]
        if bad:
            raise NumericalError(f"non-finite loss at step {self.step}: {', '.join(bad)}")
        backward(br.total)
        lr = learning_rate(self.step, cfg.lr, cfg.lr_window)
        self.optimizer.step(lr)
        rec = TrainRecord(self.step, epoch, lr, diversity_weight(t, self.horizon), values,
                          inter.decision.weight_values.tolist(), list(inter.decision.selected))
        self.step += 1
        self.model.mccm.epoch = t
        self.records.append(rec)
        return rec

    def run(self, steps: int | None = None, log: Callable[[TrainRecord], None] | None = None,
            checkpoint_dir: str | Path | None = None) -> list[TrainRecord]:
        end = total_steps(self.config, len(self.pairs)) if steps is None else self.step + steps
        out = []
        while self.step < end:
            rec = self.train_step()
            out.append(rec)
            if log:
                log(rec)
            every = self.config.checkpoint_every
            if checkpoint_dir and every and self.step % every == 0:
                self.save(Path(checkpoint_dir) / f"step_{self.step:06d}.ckpt")
        return out

    def save(self, path: str | Path) -> None:
        arrays = {f"param/{k}": v for k, v in self.model.state_dict().items()}
        arrays.update(self.optimizer.state())
        meta = {"config": self.config.to_dict(), "step": self.step, "adam_t": self.optimizer.t}
        save_checkpoint(path, arrays, meta)

    @classmethod
    def resume(cls, path: str | Path, pairs) -> "Trainer":
        arrays, meta = load_checkpoint(path)
        trainer = cls(FusionConfig(**meta["config"]), pairs)
        trainer.model.load_state_dict({k[6:]: v for k, v in arrays.items() if k.startswith("param/")})
        trainer.optimizer.load_state(arrays, meta["adam_t"])
        trainer.step = meta["step"]
        return trainer


def save_model(path: str | Path, model: FusionModel) -> None:
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    save_checkpoint(path, arrays, {"config": model.config.to_dict(), "step": 0, "adam_t": 0})


def load_model(path: str | Path) -> FusionModel:
    arrays, meta = load_checkpoint(path)
    if "config" not in meta:
        raise ValueError(f"{path}: checkpoint has no model config")
    model = FusionModel(FusionConfig(**meta["config"]))
    model.load_state_dict({k[6:]: v for k, v in arrays.items() if k.startswith("param/")})
    return model


def train(config: FusionConfig, pairs, log: Callable[[TrainRecord], None] | None = None,
          checkpoint_dir: str | Path | None = None) -> tuple[FusionModel, list[TrainRecord]]:
    trainer = Trainer(config, pairs)
    records = trainer.run(log=log, checkpoint_dir=checkpoint_dir)
    return trainer.model, records

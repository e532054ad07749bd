"""Desk-scale experiments on the synthetic corpus: training sanity, held-out fusion, ablations."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .fusenet import FusionConfig, fuse_images
from .metrics import metric_cc, metric_sf
from .synth import make_corpus
from .training import Trainer

TRAIN_PAIRS, HELDOUT_PAIRS, SIZE = 40, 20, 32
TRAIN_SEED, HELDOUT_SEED = 42, 4242
TOY_LR = 3e-3
LOSS_TAIL = 20

ABLATIONS = {
    "full": {},
    "no_bscl": {"lambda_fcl": 0.0, "lambda_pcl": 0.0},
    "no_mccm_loss": {"lambda_mccm": 0.0},
    "single_direction": {"bidirectional": False},
}


def toy_config(seed: int = 42, **overrides) -> FusionConfig:
    """C=8, S=4, N=4, k=2 on 32x32 pairs; the learning rate is the toy-scale one."""
    base = dict(width=8, state=4, experts=4, top_k=2, epochs=10, lr=TOY_LR, seed=seed)
    return FusionConfig(**(base | overrides))


def toy_corpora():
    return make_corpus(TRAIN_PAIRS, SIZE, TRAIN_SEED), make_corpus(HELDOUT_PAIRS, SIZE, HELDOUT_SEED)


@dataclass
class HeldOut:
    cc: float
    sf: float
    cc_copy_a: float
    cc_copy_b: float
    sf_sources: float  # mean over pairs of max(SF(A), SF(B))
    sf_pass_fraction: float  # pairs where SF(F) >= 0.9 max(SF(A), SF(B))


def held_out(model, pairs) -> HeldOut:
    cc, sf, ca, cb, smax = [], [], [], [], []
    for a, b in pairs:
        f = fuse_images(model, a, b)
        cc.append(metric_cc(f, a, b))
        ca.append(metric_cc(a, a, b))
        cb.append(metric_cc(b, a, b))
        sf.append(metric_sf(f))
        smax.append(max(metric_sf(a), metric_sf(b)))
    sf, smax = np.array(sf), np.array(smax)
    return HeldOut(float(np.mean(cc)), float(sf.mean()), float(np.mean(ca)), float(np.mean(cb)),
                   float(smax.mean()), float(np.mean(sf >= 0.9 * smax)))


@dataclass
class ToyRun:
    config: FusionConfig
    losses: list[float]
    selections: Counter
    checkpoints: dict[int, HeldOut] = field(default_factory=dict)

    def loss_ratio(self, steps: int, tail: int = LOSS_TAIL) -> float:
        """Mean total loss over the last ``tail`` of the first ``steps`` steps, over the step-0 loss."""
        return float(np.mean(self.losses[steps - tail:steps]) / self.losses[0])


def run_toy(steps: int, eval_at: tuple[int, ...] = (), seed: int = 42, **overrides) -> ToyRun:
    """Train a toy model; evaluate on the held-out corpus after each step count in ``eval_at``."""
    train, held = toy_corpora()
    cfg = toy_config(seed, **overrides)
    trainer = Trainer(cfg, train)
    run = ToyRun(cfg, [], Counter())
    for stop in sorted(set(eval_at) | {steps}):
        for rec in trainer.run(stop - trainer.step):
            run.losses.append(rec.losses["total"])
            run.selections.update(rec.selected)
        if stop in eval_at:
            run.checkpoints[stop] = held_out(trainer.model, held)
    return run


def ablation_table(steps: int, seeds=(42, 43, 44), names=tuple(ABLATIONS), known=None,
                   progress=None) -> dict[str, dict[str, float]]:
    """Seed-averaged held-out CC and SF per ablation.

    ``known`` maps ``(name, seed)`` to an already computed HeldOut for the same step count.
    """
    known = known or {}
    table = {}
    for name in names:
        rows = []
        for s in seeds:
            ho = known.get((name, s))
            if ho is None:
                ho = run_toy(steps, (steps,), seed=s, **ABLATIONS[name]).checkpoints[steps]
            rows.append(ho)
            if progress:
                progress(name, s, ho)
        table[name] = {"cc": float(np.mean([r.cc for r in rows])), "sf": float(np.mean([r.sf for r in rows]))}
    return table

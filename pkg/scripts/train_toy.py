"""Train the toy model on the synthetic corpus and report held-out fusion metrics.

    python scripts/train_toy.py --steps 500 --out runs/toy
"""

import argparse
import json
import time
from pathlib import Path

from smcfuse.cli import mean_report
from smcfuse.experiments import toy_config, toy_corpora
from smcfuse.training import Trainer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--lr", type=float)
    ap.add_argument("--out", default="runs/toy")
    args = ap.parse_args()

    overrides = {"lr": args.lr} if args.lr else {}
    cfg = toy_config(args.seed, **overrides)
    train, held = toy_corpora()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(cfg, train)
    t0 = time.perf_counter()
    with open(out / "train_log.jsonl", "w") as log:
        for rec in trainer.run(args.steps):
            log.write(rec.to_json() + "\n")
            if rec.step % 50 == 0:
                print(f"step {rec.step:4d}  loss {rec.losses['total']:.4f}  experts {rec.selected}")
    trainer.save(out / "final.ckpt")
    summary = mean_report(trainer.model, held) | {"steps": trainer.step,
                                                  "seconds": round(time.perf_counter() - t0, 1)}
    (out / "heldout_metrics.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()

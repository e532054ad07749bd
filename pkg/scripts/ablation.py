"""Seed-averaged held-out CC/SF for the full toy model and its three ablations."""

import argparse
import json

from smcfuse.experiments import ABLATIONS, ablation_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--seeds", type=int, nargs="+", default=[42, 43, 44])
    ap.add_argument("--only", nargs="+", choices=list(ABLATIONS))
    ap.add_argument("--json", help="also write the table here")
    args = ap.parse_args()

    def progress(name, seed, ho):
        print(f"  {name:<17} seed {seed}: CC {ho.cc:.4f}  SF {ho.sf:.4f}", flush=True)

    table = ablation_table(args.steps, tuple(args.seeds), tuple(args.only or ABLATIONS), progress=progress)
    print(f"\n{'config':<17} {'CC':>8} {'SF':>8}")
    for name, row in table.items():
        print(f"{name:<17} {row['cc']:8.4f} {row['sf']:8.4f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(table, fh, indent=2)


if __name__ == "__main__":
    main()

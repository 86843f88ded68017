"""Both losses against the planted oracle, printed as a Table-2-shaped grid.

    python3 scripts/planted_benchmark.py [--seed 0] [--folds 5] [--epochs 300]
"""
import argparse

import numpy as np

from drugrank.benchmark import desk_config, run_planted

COLUMNS = ["AP@1", "AP@5", "AP@10", "AP@20", "AH@1", "AH@5", "AH@10", "AH@20", "CI", "sCI"]


def fold_mean(rows, which):
    return {c: float(np.nanmean([getattr(r, which)[c] for r in rows])) for c in COLUMNS}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=300)
    args = ap.parse_args()
    cfg = desk_config(seed=args.seed, n_folds=args.folds, rank_epochs=args.epochs)
    rows = run_planted(cfg)
    table = {
        "oracle": fold_mean([r for r in rows if r.loss_kind == "list_all"], "oracle"),
        "List-One": fold_mean([r for r in rows if r.loss_kind == "list_one"], "model"),
        "List-All": fold_mean([r for r in rows if r.loss_kind == "list_all"], "model"),
    }
    print(f"{'method':<10}" + "".join(f"{c:>8}" for c in COLUMNS))
    for name, means in table.items():
        print(f"{name:<10}" + "".join(f"{means[c]:8.3f}" for c in COLUMNS))
    print()
    print("per fold, List-All AH@5 / oracle AH@5 and CI:")
    for r in rows:
        if r.loss_kind == "list_all":
            print(f"  fold {r.fold}: {r.model['AH@5']:.2f} / {r.oracle['AH@5']:.2f}  CI {r.model['CI']:.3f}  ({r.seconds:.1f}s)")


if __name__ == "__main__":
    main()

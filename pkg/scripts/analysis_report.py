"""Train on the synthetic benchmark through the CLI, run the embedding analyses,
and print the headline numbers.

    python3 scripts/analysis_report.py [--output-dir runs/analysis] [--seed 0]
"""
import argparse
import json
from pathlib import Path

from drugrank.cli import main as cli

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output-dir", default="runs/analysis")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    common = ["--synthetic", "100", "60", "4", "--config", str(DESK), "--output-dir", args.output_dir,
              "--seed", str(args.seed), "--jobs", str(args.jobs)]
    for cmd in ("run", "analyze"):
        rc = cli([cmd, *common])
        if rc:
            raise SystemExit(rc)
    out = Path(args.output_dir) / "analysis"
    corr = json.loads((out / "correlations.json").read_text())
    print(json.dumps(corr, indent=2, sort_keys=True))
    print(f"artifacts in {out}")


if __name__ == "__main__":
    main()

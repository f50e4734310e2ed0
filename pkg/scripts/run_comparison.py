"""Train SAC on the desk scenario and compare it with both baselines.

    python scripts/run_comparison.py --config configs/desk.json --out runs/desk
"""

import argparse
import sys
import time

from edgesac.cli import main as cli_main


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", default="configs/desk.json")
    parser.add_argument("--out", default="runs/desk")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--skip-training", action="store_true", help="reuse an existing checkpoint in --out")
    return parser.parse_args()


def main():
    args = parse_args()
    common = ["--config", args.config, "--out", args.out]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    start = time.time()
    if not args.skip_training:
        code = cli_main(["train-sac", *common])
        if code:
            return code
        print(f"trained in {time.time() - start:.0f} s")
    code = cli_main(["compare", *common])
    if code:
        return code
    with open(f"{args.out}/summary.md") as fh:
        print(fh.read())
    print(f"total {time.time() - start:.0f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())

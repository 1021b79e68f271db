"""Run the full quickstart pipeline and time each stage.

Drives the same entry points as the `itcg` console script, in-process,
against configs/quickstart.toml, and prints a stage-by-stage wall-time
table plus the final report location. A second invocation against the same
output directory must reproduce every data artifact byte-for-byte
(timing.json is the one file allowed to differ).
"""

import argparse
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from itcg import cli

STAGES = ("sweep", "dataset", "train", "simulate", "compare", "audit", "report")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=os.path.join(
        os.path.dirname(__file__), "..", "configs", "quickstart.toml"))
    ap.add_argument("--out", default="out")
    ap.add_argument("--threads", type=int, default=0,
                    help="sweep worker processes (0 = serial)")
    args = ap.parse_args()

    times = {}
    t_all = time.time()
    for stage in STAGES:
        argv = [stage, "--config", args.config, "--out", args.out]
        if stage == "sweep" and args.threads:
            argv += ["--threads", str(args.threads)]
        if stage in ("simulate", "compare"):
            argv += ["--plots"]
        t0 = time.time()
        rc = cli.main(argv)
        times[stage] = time.time() - t0
        if rc != 0:
            print(f"stage {stage} failed with exit code {rc}", file=sys.stderr)
            return rc

    total = time.time() - t_all
    print()
    print("stage      wall time")
    for stage in STAGES:
        print(f"{stage:<10} {times[stage]:8.1f} s")
    print(f"{'total':<10} {total:8.1f} s")
    print()
    print(f"report: {os.path.join(args.out, cli.REPORT_MD)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

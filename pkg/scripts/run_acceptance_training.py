"""Run every training needed by the slow acceptance criteria.

Each run lands in runs/acceptance/<name>/; finished runs are skipped, so the
script is resumable.  Total wall time is roughly 1.5-2 hours on two cores.
"""

import os
import subprocess
import sys

RUNS = [
    "configs/acceptance_imitation.cfg",
    "configs/acceptance_damage_min.cfg",
    "configs/acceptance_damage_max.cfg",
    "configs/acceptance_heading.cfg",
    "configs/acceptance_heading_nomp.cfg",
]


def run_dir_of(cfg_path):
    for line in open(cfg_path):
        if line.strip().startswith("run_dir"):
            return line.split("=", 1)[1].split("#")[0].strip()
    raise ValueError(f"no run_dir in {cfg_path}")


def finished(run_dir):
    index = os.path.join(run_dir, "ckpt_index.csv")
    if not os.path.exists(index):
        return False
    return len(open(index).read().strip().splitlines()) >= 2


if __name__ == "__main__":
    missing = [p for p in ("data/outfighter_single.jsonl", "data/outfighter_pair.jsonl")
               if not os.path.exists(p)]
    if missing:
        subprocess.run([sys.executable, "scripts/make_datasets.py"], check=True)
    for cfg in RUNS:
        rd = run_dir_of(cfg)
        if finished(rd):
            print(f"skip {cfg} (finished: {rd})")
            continue
        print(f"=== training {cfg}")
        subprocess.run([sys.executable, "-m", "maaip.cli", "train", "--config", cfg],
                       check=True)

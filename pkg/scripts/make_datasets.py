"""Regenerate the demonstration datasets used by the acceptance runs."""

import subprocess
import sys

JOBS = [
    ("outfighter", 300, 101, "data/outfighter_single.jsonl"),
    ("swarmer", 300, 102, "data/swarmer_single.jsonl"),
    ("outfighter+outfighter", 90, 103, "data/outfighter_pair.jsonl"),
    ("swarmer+swarmer", 90, 104, "data/swarmer_pair.jsonl"),
]

if __name__ == "__main__":
    for style, seconds, seed, out in JOBS:
        cmd = [sys.executable, "-m", "maaip.cli", "gen-demos", "--style", style,
               "--seconds", str(seconds), "--seed", str(seed), "--out", out]
        if "+" in style:
            cmd += ["--round-seconds", "30"]
        print(" ".join(cmd))
        subprocess.run(cmd, check=True)

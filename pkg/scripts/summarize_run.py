"""Print a compact view of a training run's metrics.csv.

Usage: python3 scripts/summarize_run.py runs/acceptance/imitation
"""

import csv
import sys


def main(run_dir: str) -> None:
    rows = list(csv.DictReader(open(f"{run_dir}/metrics.csv")))
    if not rows:
        print("no metrics yet")
        return
    print(f"{'iter':>5} {'w (m/i/c)':>16} {'reward':>8} {'r_m':>7} {'r_i':>7} "
          f"{'r_c':>7} {'kl':>8} {'clipfrac':>8}")
    step = max(1, len(rows) // 20)
    for r in rows[::step] + ([rows[-1]] if (len(rows) - 1) % step else []):
        w = f"{float(r['w_motion']):.2f}/{float(r['w_interaction']):.2f}/{float(r['w_control']):.2f}"
        print(f"{r['iteration']:>5} {w:>16} {float(r['reward_mean']):8.3f} "
              f"{float(r['r_motion']):7.3f} {float(r['r_interaction']):7.3f} "
              f"{float(r['r_control']):7.3f} {float(r['approx_kl']):8.4f} "
              f"{float(r['clip_fraction']):8.3f}")
    try:
        index = list(csv.DictReader(open(f"{run_dir}/ckpt_index.csv")))
        print("\ncheckpoint windows:", " ".join(f"{float(r['window_reward']):.3f}"
                                                for r in index))
    except FileNotFoundError:
        pass


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "runs/acceptance/imitation")

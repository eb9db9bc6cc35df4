"""Run the four-strategy ablation and write reports/ablation.{json,csv}.

    python scripts/run_ablation.py --runs 5 --workers 4
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from cmm import evaluate as ev


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--signal", type=float, default=4.0)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("reports"))
    args = p.parse_args()

    cfg = ev.AblationConfig(root_seed=args.seed, n_seeds=args.runs, signal=args.signal, tau=args.tau)
    start = time.perf_counter()
    result = ev.run_ablation(cfg, workers=args.workers, pr_points=True)
    print(f"{cfg.n_seeds} seed(s) in {time.perf_counter() - start:.1f}s, config {cfg.digest()}")
    print(ev.format_means(result, "ap"))
    for kind, path in ev.write_report(result, args.out).items():
        print(f"wrote {kind}: {path}")


if __name__ == "__main__":
    main()

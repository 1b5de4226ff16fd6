"""Run the five-seed learning study (training, transfer arms, reward-scale
run) and print a per-seed table plus the four verdict lines.

    python scripts/learning_study.py --seeds 0 1 2 3 4 --report study.jsonl
"""

import argparse
import time
from pathlib import Path

from seairl import verify
from seairl.config import TrainConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    ap.add_argument("--iterations", type=int, default=None, help="override the 300-iteration budget")
    ap.add_argument("--report", type=Path, default=None, help="write JSON lines here")
    args = ap.parse_args()

    base = TrainConfig() if args.iterations is None else TrainConfig(iterations=args.iterations)
    t0 = time.perf_counter()
    runs, transfers = [], []
    print(f"{'seed':>4} {'success':>8} {'iters':>6} {'seg':>6} {'ft':>5} {'scr':>5} "
          f"{'gail':>5} {'secs':>6}")
    for s in args.seeds:
        run = verify.training_run(s, base)
        gail = verify.training_run(s, base, "gail")
        tr = verify.transfer_run(run, gail, base)
        runs.append(run)
        transfers.append(tr)
        ft = verify.censored_iterations(tr.finetune, base.iterations)
        scr = verify.censored_iterations(tr.scratch, base.iterations)
        print(f"{s:>4} {run.source.evaluation['success_rate']:>8.2f} "
              f"{str(run.source.iterations_to_threshold):>6} {run.segmentation:>6.3f} "
              f"{ft:>5} {scr:>5} {tr.gail.evaluation['success_rate']:>5.2f} "
              f"{run.seconds:>6.0f}", flush=True)
    checks = [verify.check_learning(runs), verify.check_transfer(transfers, base.iterations),
              verify.check_segmentation(runs), verify.check_reward_normalisation(args.seeds[0], base)]
    for c in checks:
        print(c.line())
    print(f"total {time.perf_counter() - t0:.0f} s")
    if args.report:
        args.report.write_text("\n".join(verify.report_lines(checks)) + "\n")
    return 0 if all(c.passed for c in checks) else 1


if __name__ == "__main__":
    raise SystemExit(main())

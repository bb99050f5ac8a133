#!/usr/bin/env python3
"""Interactive retrieval experiment with a simulated user.

Replays feedback sessions on the synthetic cross-era corpus (10K
distractors), reports mAP before and after the adaptation trigger against
the naive neighbor baseline, and writes the mAP-vs-query-count curve.
"""

import argparse
import csv
import sys
import warnings
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from eralign.retrieve import simulate_session
from eralign.synth import retrieval_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--corpus-seed", type=int, default=0)
    parser.add_argument("--repetitions", type=int, default=10)
    parser.add_argument("--schedule-per-class", type=int, default=3)
    parser.add_argument("--relearn-every", type=int, default=5)
    parser.add_argument("--oracle-error-rate", type=float, default=0.0)
    parser.add_argument("--curve-out", default=None)
    args = parser.parse_args()

    corpus = retrieval_corpus(seed=args.corpus_seed)
    schedule = [q for q in corpus.queries.ids
                if int(q.rsplit("_", 1)[1]) < args.schedule_per_class]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = simulate_session(
            corpus, query_schedule=schedule, seed=args.seed,
            repetitions=args.repetitions, curve_every=6,
            relearn_every=args.relearn_every,
            oracle_error_rate=args.oracle_error_rate)

    print(f"queries scheduled: {len(schedule)}; "
          f"held-out evaluated: {corpus.queries.n - len(schedule)}")
    print(f"raw (no adaptation) mAP:   {report.before_map:.3f}")
    print(f"adapted mAP:               {report.after_mean:.3f} +/- {report.after_std:.3f}")
    print(f"neighbor baseline mAP:     {report.baseline_mean:.3f} +/- {report.baseline_std:.3f}")
    print(f"adaptation trigger rounds: {sorted(set(report.trigger_rounds))}")

    mean_curve = {}
    for curve in report.curves:
        for step, value in curve:
            mean_curve.setdefault(step, []).append(value)
    print("mAP vs accumulated queries:")
    for step in sorted(mean_curve):
        print(f"  {step:>4} queries: {np.mean(mean_curve[step]):.3f}")
    if args.curve_out:
        with open(args.curve_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["queries", "map_mean", "map_std"])
            for step in sorted(mean_curve):
                writer.writerow([step, f"{np.mean(mean_curve[step]):.6f}",
                                 f"{np.std(mean_curve[step]):.6f}"])
        print(f"curve -> {args.curve_out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

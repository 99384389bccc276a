"""Run the full tuning protocol (5 LHS + 20 BO iterations, 10 seeds, LCB/EI/MPI)
on the synthetic paper-space objective, then compare against random search at
the same 25-evaluation budget."""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from steerbo.bo import run_random_search
from steerbo.cli import main
from steerbo.objectives import SyntheticPaperSpace
from steerbo.search_space import build_paper_space


def run(out: Path, seed: int = 0, runs: int = 10, parallel: int = 1) -> dict:
    t0 = time.perf_counter()
    rc = main(["bo-run", "--objective", "synthetic-paper-space", "--n-init", "5", "--n-iter", "20",
               "--runs", str(runs), "--acq", "lcb,ei,mpi", "--seed", str(seed),
               "--parallel-runs", str(parallel), "--out", str(out)])
    elapsed = time.perf_counter() - t0
    summary = json.loads((out / "summary.json").read_text())
    space, objective = build_paper_space(), SyntheticPaperSpace()
    rand = [float(run_random_search(space, objective, 25, seed + i).values.min())
            for i in range(runs)]
    return {"exit_code": rc, "seconds": round(elapsed, 1),
            "selected": summary.get("selected_acquisition"),
            "final_mean": {k: v["final_mean"] for k, v in summary["acquisitions"].items()},
            "random_median": float(np.median(rand))}


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="protocol_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--parallel-runs", type=int, default=1)
    args = ap.parse_args()
    print(json.dumps(run(Path(args.out), args.seed, args.runs, args.parallel_runs), indent=2))

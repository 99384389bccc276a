"""Sequential GP-based Bayesian optimisation and the multi-seed experiment harness."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import gp
from .acquisition import AcquisitionKind, Incumbent, candidate_set, propose_next
from .search_space import Configuration, SearchSpace, encode, lhs_sample, random_sample

log = logging.getLogger(__name__)

INITIAL = "initial-design"
BO = "bo"
RANDOM = "random"


@dataclass(frozen=True)
class Trial:
    index: int
    config: Configuration
    value: float
    phase: str
    wall_time: float = 0.0

    def to_json(self) -> str:
        return json.dumps({"index": self.index, "phase": self.phase, "config": self.config.as_dict(),
                           "value": self.value, "wall_time": self.wall_time})


@dataclass
class RunLog:
    seed: int
    acquisition: AcquisitionKind | None
    n_init: int
    trials: list[Trial] = field(default_factory=list)
    space_digest: str = ""
    failure: str | None = None

    @property
    def values(self) -> np.ndarray:
        return np.array([t.value for t in self.trials])

    @property
    def incumbent(self) -> Incumbent:
        if not self.trials:
            raise ValueError("empty run log")
        best = min(self.trials, key=lambda t: (t.value, t.index))
        return Incumbent(best.value, best.config)

    @property
    def label(self) -> str:
        return str(self.acquisition) if self.acquisition is not None else "RANDOM"

    def header(self) -> dict:
        acq = self.acquisition
        return {"seed": self.seed, "acquisition": self.label,
                "xi": None if acq is None else acq.xi, "n_init": self.n_init,
                "space_digest": self.space_digest, "failure": self.failure}

    def write_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            fh.write(json.dumps(self.header()) + "\n")
            for t in self.trials:
                fh.write(t.to_json() + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "RunLog":
        lines = Path(path).read_text().splitlines()
        head = json.loads(lines[0])
        acq = None if head["acquisition"] == "RANDOM" else AcquisitionKind(head["acquisition"], head["xi"])
        trials = []
        for line in lines[1:]:
            rec = json.loads(line)
            trials.append(Trial(rec["index"], Configuration(rec["config"]), rec["value"],
                                rec["phase"], rec["wall_time"]))
        return cls(head["seed"], acq, head["n_init"], trials, head["space_digest"], head.get("failure"))


class RunAborted(RuntimeError):
    """An objective evaluation failed; ``log`` holds every trial completed before it."""

    def __init__(self, message: str, log: RunLog):
        super().__init__(message)
        self.log = log


def _call_objective(objective: Callable, cfg: Configuration) -> float:
    out = objective(cfg)
    value = float(getattr(out, "value", out))
    if not math.isfinite(value):
        raise ValueError(f"objective returned non-finite value {value!r}")
    return value


def _sub_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _evaluate_into(runlog: RunLog, objective, cfg: Configuration, phase: str, log_path):
    t0 = time.perf_counter()
    try:
        value = _call_objective(objective, cfg)
    except Exception as exc:
        runlog.failure = f"trial {len(runlog.trials)}: {type(exc).__name__}: {exc}"
        if log_path is not None:
            runlog.write_jsonl(log_path)
        raise RunAborted(runlog.failure, runlog) from exc
    runlog.trials.append(Trial(len(runlog.trials), cfg, value, phase, time.perf_counter() - t0))


def run_bo(space: SearchSpace, objective: Callable, kind: AcquisitionKind, n_init: int,
           n_iter: int, seed: int, log_path: str | Path | None = None) -> RunLog:
    """LHS initial design of ``n_init`` points followed by ``n_iter`` BO iterations."""
    if n_init < 1 or n_iter < 0:
        raise ValueError("need n_init >= 1 and n_iter >= 0")
    runlog = RunLog(seed, kind, n_init, space_digest=space.digest())
    for cfg in lhs_sample(space, n_init, seed):
        _evaluate_into(runlog, objective, cfg, INITIAL, log_path)
    for it in range(n_iter):
        X = np.array([encode(t.config, space) for t in runlog.trials])
        model = gp.fit(X, runlog.values, seed=_sub_seed(seed, 1, it))
        cands = candidate_set(space, _sub_seed(seed, 2, it))
        cfg = propose_next(model, kind, runlog.incumbent, space, seed, candidates=cands)
        _evaluate_into(runlog, objective, cfg, BO, log_path)
    if log_path is not None:
        runlog.write_jsonl(log_path)
    return runlog


def run_random_search(space: SearchSpace, objective: Callable, n_total: int, seed: int) -> RunLog:
    """Uniform random-search baseline with the same bookkeeping as a BO run."""
    runlog = RunLog(seed, None, 1, space_digest=space.digest())
    for cfg in random_sample(space, n_total, seed):
        _evaluate_into(runlog, objective, cfg, RANDOM, None)
    return runlog


def best_seen_curve(runlog: RunLog) -> np.ndarray:
    """Running minimum, starting at the best of the initial design."""
    if len(runlog.trials) < runlog.n_init or not runlog.trials:
        raise ValueError("run log holds no completed initial design")
    return np.minimum.accumulate(runlog.values)[runlog.n_init - 1:]


@dataclass
class ExperimentSummary:
    kinds: list[AcquisitionKind]
    logs: dict[str, list[RunLog]]
    mean_curve: dict[str, np.ndarray]
    std_curve: dict[str, np.ndarray]
    final_best: dict[str, list[tuple[int, float]]]
    failed: list[str] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.failed

    def write_curves_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["acquisition", "iteration", "mean", "std"])
            for k in self.kinds:
                for i, (m, s) in enumerate(zip(self.mean_curve[k.kind], self.std_curve[k.kind])):
                    w.writerow([k.kind, i, repr(float(m)), repr(float(s))])

    def write_final_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["acquisition", "seed", "final_best_seen"])
            for k in self.kinds:
                for seed, v in self.final_best[k.kind]:
                    w.writerow([k.kind, seed, repr(float(v))])


def _run_one(args):
    space, objective, kind, n_init, n_iter, seed, log_path = args
    try:
        return run_bo(space, objective, kind, n_init, n_iter, seed, log_path)
    except RunAborted as exc:
        return exc.log


def run_experiment(space: SearchSpace, objective: Callable, kinds: Sequence[AcquisitionKind],
                   n_init: int, n_iter: int, n_runs: int, base_seed: int,
                   log_dir: str | Path | None = None, parallel: int = 1) -> ExperimentSummary:
    """``n_runs`` seeded runs per acquisition; curves are aggregated pointwise."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    kinds = list(kinds)
    jobs = []
    for k in kinds:
        for i in range(n_runs):
            seed = base_seed + i
            path = None if log_dir is None else Path(log_dir) / f"{k.kind.lower()}_seed{seed}.jsonl"
            jobs.append((space, objective, k, n_init, n_iter, seed, path))
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    logs: dict[str, list[RunLog]] = {k.kind: [] for k in kinds}
    for r in results:
        logs[r.acquisition.kind].append(r)
    mean_curve, std_curve, final_best, failed = {}, {}, {}, []
    for k in kinds:
        runs = sorted(logs[k.kind], key=lambda r: r.seed)
        logs[k.kind] = runs
        failed += [f"{k.kind}/seed{r.seed}: {r.failure}" for r in runs if r.failure]
        curves = [best_seen_curve(r) for r in runs if r.failure is None]
        if curves:
            C = np.vstack(curves)
            mean_curve[k.kind] = C.mean(axis=0)
            std_curve[k.kind] = C.std(axis=0, ddof=1) if len(curves) > 1 else np.zeros(C.shape[1])
        else:
            mean_curve[k.kind] = std_curve[k.kind] = np.zeros(0)
        final_best[k.kind] = [(r.seed, float(best_seen_curve(r)[-1])) for r in runs
                              if r.failure is None]
    return ExperimentSummary(kinds, logs, mean_curve, std_curve, final_best, failed)


def select_acquisition(summary: ExperimentSummary) -> AcquisitionKind:
    """Smallest final best-seen std; ties -> smaller final mean -> declaration order."""
    ranked = [(float(summary.std_curve[k.kind][-1]), float(summary.mean_curve[k.kind][-1]), i, k)
              for i, k in enumerate(summary.kinds) if len(summary.std_curve[k.kind])]
    if not ranked:
        raise ValueError("summary holds no completed runs")
    return min(ranked, key=lambda t: t[:3])[3]


def final_values(logs: Iterable[RunLog]) -> np.ndarray:
    return np.array([best_seen_curve(r)[-1] for r in logs])

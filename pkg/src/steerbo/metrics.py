"""Prediction-error metrics, the bias/variance split of MSE and the
Mann-Whitney U rank test."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

EXACT_MAX = 12
ALTERNATIVES = ("two-sided", "less", "greater")


def _pair(y, y_hat, min_n=1):
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size < min_n:
        raise ValueError(f"need at least {min_n} observations")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def absolute_errors(y, y_hat) -> np.ndarray:
    y, y_hat = _pair(y, y_hat)
    return np.abs(y_hat - y)


def mae(y, y_hat) -> float:
    return float(np.mean(absolute_errors(y, y_hat)))


def st_ae(y, y_hat) -> float:
    """Sample standard deviation (n-1 denominator) of the absolute errors."""
    y, y_hat = _pair(y, y_hat, min_n=2)
    return float(np.std(np.abs(y_hat - y), ddof=1))


def bias_variance(y, y_hat) -> tuple[float, float]:
    """Squared mean residual and residual variance (1/n); they sum to the MSE."""
    y, y_hat = _pair(y, y_hat)
    err = y - y_hat
    bias_sq = float((y_hat.mean() - y.mean()) ** 2)
    variance = float(np.mean((err - err.mean()) ** 2))
    return bias_sq, variance


@dataclass(frozen=True)
class ErrorSummary:
    mse: float
    mae: float
    st_ae: float
    bias_sq: float
    variance: float
    n: int


def summarize(y, y_hat) -> ErrorSummary:
    y, y_hat = _pair(y, y_hat)
    b, v = bias_variance(y, y_hat)
    sd = st_ae(y, y_hat) if y.size >= 2 else 0.0
    return ErrorSummary(mse(y, y_hat), mae(y, y_hat), sd, b, v, int(y.size))


# --- Mann-Whitney U ------------------------------------------------------------

@dataclass(frozen=True)
class RankTestResult:
    u_statistic: float
    p_value: float
    method: str


def _u_statistic(a, b):
    ranks = rankdata(np.r_[a, b])  # midranks for ties
    n = a.size
    return float(ranks[:n].sum() - n * (n + 1) / 2.0), ranks


def u_null_distribution(ranks: np.ndarray, n: int) -> dict[float, int]:
    """Exact null distribution of U for the first-sample size ``n``.

    Counts every way of choosing ``n`` of the pooled (mid)ranks, by dynamic
    programming over doubled rank sums so ties stay integral.
    """
    doubled = np.rint(2 * np.asarray(ranks)).astype(int)
    # counts[k] maps doubled rank-sum -> number of k-subsets
    counts = [dict() for _ in range(n + 1)]
    counts[0][0] = 1
    for r in doubled:
        for k in range(min(n, len(doubled)), 0, -1):
            src = counts[k - 1]
            if not src:
                continue
            dst = counts[k]
            for s, c in src.items():
                dst[s + r] = dst.get(s + r, 0) + c
    offset = n * (n + 1) / 2.0
    return {s / 2.0 - offset: c for s, c in counts[n].items()}


def _exact_p(u, dist, alternative):
    total = sum(dist.values())
    tol = 1e-9
    p_le = sum(c for v, c in dist.items() if v <= u + tol) / total
    p_ge = sum(c for v, c in dist.items() if v >= u - tol) / total
    if alternative == "less":
        return p_le
    if alternative == "greater":
        return p_ge
    return min(1.0, 2.0 * min(p_le, p_ge))


def _normal_p(u, ranks, n, m, alternative):
    N = n + m
    _, counts = np.unique(ranks, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    var = n * m / 12.0 * ((N + 1) - tie / (N * (N - 1)))
    mu = n * m / 2.0
    if var <= 0:
        return 1.0
    sd = math.sqrt(var)
    p_le = float(ndtr((u - mu + 0.5) / sd))
    p_ge = float(ndtr(-(u - mu - 0.5) / sd))
    if alternative == "less":
        return min(1.0, p_le)
    if alternative == "greater":
        return min(1.0, p_ge)
    return min(1.0, 2.0 * min(p_le, p_ge))


def mann_whitney_u(a, b, alternative: str = "two-sided", method: str = "auto") -> RankTestResult:
    """U of sample ``a``; ``less`` tests whether ``a`` tends to be smaller than ``b``.

    ``method='auto'`` enumerates exactly when both sizes are <= 12 and otherwise
    uses the tie- and continuity-corrected normal approximation.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    u, ranks = _u_statistic(a, b)
    if method == "auto":
        method = "exact" if max(a.size, b.size) <= EXACT_MAX else "normal-approx"
    if method == "exact":
        p = _exact_p(u, u_null_distribution(ranks, a.size), alternative)
    elif method == "normal-approx":
        p = _normal_p(u, ranks, a.size, b.size, alternative)
    else:
        raise ValueError(f"unknown method {method!r}")
    return RankTestResult(u, float(min(max(p, 0.0), 1.0)), method)


# --- reports -------------------------------------------------------------------

@dataclass
class ComparisonReport:
    models: list[str]
    summaries: dict[str, ErrorSummary]
    p_values: np.ndarray

    def write_summary_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "n", "mse", "mae", "st_ae", "bias_sq", "variance"])
            for name in self.models:
                s = self.summaries[name]
                w.writerow([name, s.n] + [repr(getattr(s, k)) for k in
                                          ("mse", "mae", "st_ae", "bias_sq", "variance")])

    def write_pvalue_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model"] + self.models)
            for name, row in zip(self.models, self.p_values):
                w.writerow([name] + [repr(float(p)) for p in row])

    def as_dict(self) -> dict:
        return {"models": self.models,
                "summaries": {k: asdict(v) for k, v in self.summaries.items()},
                "p_values": self.p_values.tolist()}


def model_comparison_report(predictions: Mapping[str, Sequence[float]], y,
                            errors: str = "absolute", alternative: str = "two-sided"
                            ) -> ComparisonReport:
    """Per-model error summaries plus pairwise U-test p-values on prediction errors."""
    if not predictions:
        raise ValueError("no predictions given")
    y = np.asarray(y, dtype=float).ravel()
    names = list(predictions)
    summaries, errs = {}, {}
    for name in names:
        y_hat = np.asarray(predictions[name], dtype=float).ravel()
        if y_hat.shape != y.shape:
            raise ValueError(f"{name}: {y_hat.size} predictions for {y.size} targets")
        summaries[name] = summarize(y, y_hat)
        errs[name] = np.abs(y_hat - y) if errors == "absolute" else y - y_hat
    P = np.ones((len(names), len(names)))
    for i, j in zip(*np.triu_indices(len(names), k=1)):
        p = mann_whitney_u(errs[names[i]], errs[names[j]], alternative).p_value
        P[i, j] = p
        P[j, i] = p if alternative == "two-sided" else \
            mann_whitney_u(errs[names[j]], errs[names[i]], alternative).p_value
    return ComparisonReport(names, summaries, P)

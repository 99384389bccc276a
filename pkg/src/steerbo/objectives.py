"""Black-box objectives: synthetic landscapes, an external-process protocol and
the desk-scale ST-LSTM validation-MSE trainer."""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .search_space import (CONTINUOUS, Configuration, ParamSpec, SearchSpace,
                           build_paper_space, encode)


@dataclass(frozen=True)
class EvaluationResult:
    value: float
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


class ObjectiveError(RuntimeError):
    """Evaluation failure; ``reason`` is one of process, protocol, timeout."""

    def __init__(self, reason: str, message: str):
        super().__init__(f"{reason}: {message}")
        self.reason = reason


# --- synthetic landscape over the ST-LSTM search space ------------------------
# Two anisotropic Gaussian wells on the unit-cube encoding plus a mild bowl.
# The main well is broad along the five map-count axes and narrow along fc
# width, dropout and learning rate; the second, shallower well is a decoy in
# the opposite corner.  The discrete-grid optimum is stored in tests by enumeration.
_WELL1_CENTRE = np.array([0.625, 0.375, 0.625, 0.625, 0.5, 0.625, 0.3, 0.625])
_WELL1_WIDTH = np.array([4.0, 4.0, 4.0, 4.0, 4.0, 0.5, 0.6, 0.4])
_WELL1_DEPTH = 0.62
_WELL2_CENTRE = np.array([0.15, 0.85, 0.20, 0.15, 0.85, 0.15, 0.80, 0.15])
_WELL2_WIDTH = np.array([0.22, 0.25, 0.20, 0.25, 0.30, 0.22, 0.30, 0.20])
_WELL2_DEPTH = 0.45
_BOWL = 0.25
_BASE = 0.90


def synthetic_landscape(U: np.ndarray) -> np.ndarray:
    """Vectorised synthetic objective on unit-cube rows of an (m, 8) array."""
    U = np.atleast_2d(U)
    w1 = np.exp(-0.5 * (((U - _WELL1_CENTRE) / _WELL1_WIDTH) ** 2).sum(1))
    w2 = np.exp(-0.5 * (((U - _WELL2_CENTRE) / _WELL2_WIDTH) ** 2).sum(1))
    bowl = ((U - 0.5) ** 2).mean(1)
    return _BASE - _WELL1_DEPTH * w1 - _WELL2_DEPTH * w2 + _BOWL * bowl


def eval_synthetic_paper_space(cfg: Configuration, seed: int = 0,
                               space: SearchSpace | None = None) -> float:
    """Deterministic stand-in for the validation-MSE landscape; ``seed`` is unused."""
    space = space or build_paper_space()
    return float(synthetic_landscape(encode(cfg, space))[0])


def branin_space() -> SearchSpace:
    return SearchSpace((ParamSpec("x1", CONTINUOUS, lo=-5.0, hi=10.0),
                        ParamSpec("x2", CONTINUOUS, lo=0.0, hi=15.0)))


def eval_synthetic_continuous(cfg: Configuration, seed: int = 0) -> float:
    """Branin-Hoo on its usual box; global minimum 0.397887."""
    x1, x2 = cfg["x1"], cfg["x2"]
    b, c, t = 5.1 / (4 * math.pi ** 2), 5 / math.pi, 1 / (8 * math.pi)
    return (x2 - b * x1 ** 2 + c * x1 - 6) ** 2 + 10 * (1 - t) * math.cos(x1) + 10


@dataclass(frozen=True)
class SyntheticPaperSpace:
    def __call__(self, cfg: Configuration) -> EvaluationResult:
        return EvaluationResult(eval_synthetic_paper_space(cfg))


@dataclass(frozen=True)
class SyntheticContinuous:
    def __call__(self, cfg: Configuration) -> EvaluationResult:
        return EvaluationResult(eval_synthetic_continuous(cfg))


# --- external command ---------------------------------------------------------

@dataclass(frozen=True)
class ExternalCommand:
    """Child-process objective: configuration JSON on stdin, ``{"objective": x}`` on stdout."""

    command: Sequence[str] | str
    timeout: float = 3600.0

    def argv(self) -> list[str]:
        argv = shlex.split(self.command) if isinstance(self.command, str) else list(self.command)
        if not argv:
            raise ValueError("external objective needs a non-empty command")
        return argv

    def __call__(self, cfg: Configuration) -> EvaluationResult:
        return eval_external(cfg, self)


def eval_external(cfg: Configuration, spec: ExternalCommand) -> EvaluationResult:
    payload = json.dumps(cfg.as_dict()) + "\n"
    try:
        proc = subprocess.run(spec.argv(), input=payload, capture_output=True, text=True,
                              timeout=spec.timeout)
    except subprocess.TimeoutExpired as exc:
        # subprocess.run kills the child before re-raising
        raise ObjectiveError("timeout", f"no reply within {spec.timeout}s") from exc
    except OSError as exc:
        raise ObjectiveError("process", str(exc)) from exc
    if proc.returncode != 0:
        raise ObjectiveError("process", f"exit status {proc.returncode}: {proc.stderr.strip()[:200]}")
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    try:
        reply = json.loads(lines[0])
        value = float(reply["objective"])
    except (IndexError, ValueError, KeyError, TypeError) as exc:
        raise ObjectiveError("protocol", f"malformed reply {proc.stdout[:200]!r}") from exc
    if not math.isfinite(value):
        raise ObjectiveError("protocol", f"non-finite objective {value!r}")
    extra = {k: v for k, v in reply.items() if k != "objective"}
    return EvaluationResult(value, extra)


# --- desk-scale trainer -------------------------------------------------------

def eval_toy_trainer(cfg: Configuration, data, seed: int = 0, epochs: int = 15,
                     batch_size: int = 50, patience: int = 5, **model_kw) -> EvaluationResult:
    """Train the ST-LSTM described by ``cfg`` and return its best validation MSE."""
    from .models import STLSTMConfig, build_stlstm, train

    stcfg = STLSTMConfig.from_configuration(cfg, **model_kw)
    input_shape = data.train[0].tensor.shape
    net = build_stlstm(stcfg, input_shape, seed=seed)
    report = train(net, data, lr=stcfg.learning_rate, epochs=epochs, batch_size=batch_size,
                   patience=patience, seed=seed)
    diag = {"epochs_run": report.epochs_run, "early_stopped": report.early_stopped,
            "train_mse": report.train_mse[-1], "diverged": report.diverged}
    if report.diverged:
        return EvaluationResult(10.0 * report.val_mse[0], diag)
    return EvaluationResult(report.best_val_mse, diag)


@dataclass
class ToyTrainer:
    data: Any
    seed: int = 0
    epochs: int = 15
    batch_size: int = 50
    patience: int = 5
    model_kw: dict = field(default_factory=dict)

    def __call__(self, cfg: Configuration) -> EvaluationResult:
        return eval_toy_trainer(cfg, self.data, self.seed, self.epochs, self.batch_size,
                                self.patience, **self.model_kw)

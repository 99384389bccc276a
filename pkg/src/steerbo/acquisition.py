"""LCB / EI / MPI acquisition functions and candidate-set maximisation.

Conventions: the objective is minimised.  LCB is minimised, EI and MPI are
maximised.  All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import gp
from .search_space import Configuration, SearchSpace, decode, snap

LCB, EI, MPI = "LCB", "EI", "MPI"
KINDS = (LCB, EI, MPI)
DEFAULT_XI = {LCB: 2.0, EI: 0.01, MPI: 0.01}

N_DROPOUT_STRATA = 8
N_RANDOM_CANDIDATES = 2048
MAX_GRID_CANDIDATES = 250_000

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class AcquisitionKind:
    kind: str
    xi: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in KINDS:
            raise ValueError(f"unknown acquisition {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.xi is None:
            object.__setattr__(self, "xi", DEFAULT_XI[kind])
        if self.xi < 0:
            raise ValueError("xi must be non-negative")

    @property
    def minimise(self) -> bool:
        return self.kind == LCB

    def __str__(self):
        return self.kind


@dataclass(frozen=True)
class Incumbent:
    best_value: float
    best_config: Configuration


def _pdf(z):
    with np.errstate(over="ignore"):  # z*z -> inf gives exp(-inf) = 0
        return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def lcb(mean, std, xi=DEFAULT_XI[LCB]):
    return mean - xi * std


def ei(mean, std, incumbent, xi=DEFAULT_XI[EI]):
    mean, std = np.broadcast_arrays(np.asarray(mean, float), np.asarray(std, float))
    improvement = incumbent - mean - xi
    out = np.zeros(mean.shape)
    pos = std > 0
    with np.errstate(over="ignore"):
        z = improvement[pos] / std[pos]
    out[pos] = improvement[pos] * ndtr(z) + std[pos] * _pdf(z)
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def mpi(mean, std, incumbent, xi=DEFAULT_XI[MPI]):
    mean, std = np.broadcast_arrays(np.asarray(mean, float), np.asarray(std, float))
    out = np.array(mean <= incumbent + xi, dtype=float)
    pos = std > 0
    with np.errstate(over="ignore"):
        out[pos] = ndtr((incumbent + xi - mean[pos]) / std[pos])
    return out if out.ndim else float(out)


def score(kind: AcquisitionKind, mean, std, incumbent: float):
    if kind.kind == LCB:
        return lcb(mean, std, kind.xi)
    if kind.kind == EI:
        return ei(mean, std, incumbent, kind.xi)
    return mpi(mean, std, incumbent, kind.xi)


def candidate_set(space: SearchSpace, seed: int) -> np.ndarray:
    """Unit-cube candidates: discrete grid x stratified continuous values, then random points.

    The grid block enumerates every combination of discrete levels crossed
    with N_DROPOUT_STRATA jittered-stratified values per continuous axis (when
    that product stays under MAX_GRID_CANDIDATES); N_RANDOM_CANDIDATES uniform
    points follow.  Row order is fixed, which defines the tie-break index.
    """
    rng = np.random.default_rng(seed)
    axes = []
    for p in space.params:
        if p.is_discrete:
            k = len(p.levels)
            axes.append((np.arange(k) + 0.5) / k)
        else:
            axes.append((np.arange(N_DROPOUT_STRATA) + rng.random(N_DROPOUT_STRATA))
                        / N_DROPOUT_STRATA)
    blocks = []
    if np.prod([len(a) for a in axes], dtype=float) <= MAX_GRID_CANDIDATES:
        mesh = np.meshgrid(*axes, indexing="ij")
        blocks.append(snap(np.stack([m.ravel() for m in mesh], axis=1), space))
    blocks.append(snap(rng.random((N_RANDOM_CANDIDATES, space.dim)), space))
    return np.vstack(blocks)


def best_index(kind: AcquisitionKind, values: np.ndarray) -> int:
    """Index of the best score; np.argmin/argmax return the first occurrence."""
    return int(np.argmin(values) if kind.minimise else np.argmax(values))


def propose_next(model: gp.GPModel, kind: AcquisitionKind, incumbent: Incumbent,
                 space: SearchSpace, seed: int, candidates: np.ndarray | None = None
                 ) -> Configuration:
    if candidates is None:
        candidates = candidate_set(space, seed)
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    mean, std = gp.predict_many(model, candidates)
    values = score(kind, mean, std, incumbent.best_value)
    return decode(candidates[best_index(kind, values)], space)


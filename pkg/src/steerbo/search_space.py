"""Hyperparameter domain, unit-cube encoding and space-filling designs."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DISCRETE = "discrete-ordered"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    levels: tuple[float, ...] = ()
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.name:
            raise ValueError("parameter name must be non-empty")
        if self.kind == DISCRETE:
            levels = tuple(float(v) for v in self.levels)
            if not levels:
                raise ValueError(f"{self.name}: discrete parameter needs levels")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ValueError(f"{self.name}: levels must be strictly increasing")
            object.__setattr__(self, "levels", levels)
        elif self.kind == CONTINUOUS:
            if not self.lo < self.hi:
                raise ValueError(f"{self.name}: need lo < hi")
        else:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    def contains(self, value: float) -> bool:
        if self.is_discrete:
            return float(value) in self.levels
        return self.lo <= value <= self.hi

    def to_unit(self, value: float) -> float:
        if not self.contains(value):
            raise ValueError(f"{self.name}: value {value!r} outside domain")
        if self.is_discrete:
            k = len(self.levels)
            return (self.levels.index(float(value)) + 0.5) / k
        return (value - self.lo) / (self.hi - self.lo)

    def from_unit(self, coord: float) -> float:
        coord = min(max(float(coord), 0.0), 1.0)
        if self.is_discrete:
            k = len(self.levels)
            return self.levels[min(int(coord * k), k - 1)]
        return self.lo + coord * (self.hi - self.lo)

    def to_dict(self) -> dict:
        if self.is_discrete:
            return {"name": self.name, "kind": self.kind, "levels": list(self.levels)}
        return {"name": self.name, "kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[ParamSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if not self.params:
            raise ValueError("search space needs at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def __getitem__(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def grid_size(self) -> int:
        """Number of points in the product of all discrete level sets."""
        return math.prod(len(p.levels) for p in self.params if p.is_discrete)

    def to_json(self) -> str:
        return json.dumps({"params": [p.to_dict() for p in self.params]}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SearchSpace":
        doc = json.loads(text)
        params = []
        for item in doc["params"]:
            if item["kind"] == DISCRETE:
                params.append(ParamSpec(item["name"], DISCRETE, levels=tuple(item["levels"])))
            else:
                params.append(ParamSpec(item["name"], item["kind"], lo=item["lo"], hi=item["hi"]))
        return cls(tuple(params))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Configuration:
    """One point of a search space, stored as an immutable name -> value map."""

    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", dict(self.values))

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def __hash__(self):
        return hash(tuple(sorted(self.values.items())))

    def as_dict(self) -> dict[str, float]:
        return dict(self.values)


def build_paper_space() -> SearchSpace:
    """The eight ST-LSTM hyperparameters tuned by BO."""
    maps = (4, 8, 10, 16)
    return SearchSpace((
        ParamSpec("convlstm1_maps", DISCRETE, levels=maps),
        ParamSpec("convlstm2_maps", DISCRETE, levels=maps),
        ParamSpec("convlstm3_maps", DISCRETE, levels=maps),
        ParamSpec("convlstm4_maps", DISCRETE, levels=maps),
        ParamSpec("conv3d_maps", DISCRETE, levels=(1, 2, 3)),
        ParamSpec("fc_neurons", DISCRETE, levels=(5, 10, 25, 50)),
        ParamSpec("dropout", CONTINUOUS, lo=0.0, hi=0.5),
        ParamSpec("learning_rate", DISCRETE, levels=(1e-5, 1e-4, 1e-3, 1e-2)),
    ))


def validate(cfg: Configuration, space: SearchSpace) -> None:
    unknown = set(cfg.values) - set(space.names)
    if unknown:
        raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
    for p in space.params:
        if p.name not in cfg.values:
            raise ValueError(f"missing parameter {p.name}")
        if not p.contains(cfg[p.name]):
            raise ValueError(f"{p.name}: value {cfg[p.name]!r} outside domain")


def encode(cfg: Configuration, space: SearchSpace) -> np.ndarray:
    """Map a configuration to the unit hypercube (discrete levels -> bin centres)."""
    validate(cfg, space)
    return np.array([p.to_unit(cfg[p.name]) for p in space.params], dtype=float)


def decode(u: Sequence[float], space: SearchSpace) -> Configuration:
    u = np.asarray(u, dtype=float)
    if u.shape != (space.dim,):
        raise ValueError(f"expected {space.dim} coordinates, got shape {u.shape}")
    return Configuration({p.name: p.from_unit(c) for p, c in zip(space.params, u)})


def snap(U: np.ndarray, space: SearchSpace) -> np.ndarray:
    """Vectorised encode(decode(u)) over the rows of U."""
    U = np.clip(np.atleast_2d(np.asarray(U, dtype=float)), 0.0, 1.0)
    out = U.copy()
    for j, p in enumerate(space.params):
        if p.is_discrete:
            k = len(p.levels)
            idx = np.minimum((U[:, j] * k).astype(int), k - 1)
            out[:, j] = (idx + 0.5) / k
        else:
            # same float round trip as from_unit/to_unit
            out[:, j] = ((p.lo + U[:, j] * (p.hi - p.lo)) - p.lo) / (p.hi - p.lo)
    return out


def lhs_unit(dim: int, n: int, seed: int) -> np.ndarray:
    """Latin hypercube design on [0,1]^dim: one point per stratum per axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    U = np.empty((n, dim))
    for j in range(dim):
        U[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return U


def lhs_sample(space: SearchSpace, n: int, seed: int) -> list[Configuration]:
    return [decode(u, space) for u in lhs_unit(space.dim, n, seed)]


def random_sample(space: SearchSpace, n: int, seed: int) -> list[Configuration]:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return [decode(u, space) for u in rng.random((n, space.dim))]

"""Enumerate the synthetic paper-space objective over the discrete grid and
eight dropout levels; write the optimum fixture used by the tests."""

import argparse
import json

import numpy as np

from steerbo.objectives import synthetic_landscape
from steerbo.search_space import build_paper_space, decode

N_DROPOUT = 8


def enumeration_grid(space):
    axes = []
    for p in space.params:
        if p.is_discrete:
            k = len(p.levels)
            axes.append((np.arange(k) + 0.5) / k)
        else:
            axes.append(np.arange(N_DROPOUT) / (N_DROPOUT - 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def enumerate_optimum(space=None):
    space = space or build_paper_space()
    G = enumeration_grid(space)
    f = synthetic_landscape(G)
    i = int(np.argmin(f))
    return {"n_points": int(len(G)), "f_min": float(f[i]), "f_max": float(f.max()),
            "argmin": decode(G[i], space).as_dict(), "argmin_unit": G[i].tolist()}


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tests/fixtures/grid_optimum.json")
    args = ap.parse_args()
    result = enumerate_optimum()
    with open(args.out, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(result, indent=2, sort_keys=True))

"""Desk-scale model comparison: build a synthetic dataset, train ST-LSTM,
PilotNet and J-Net on it, and score all three on the test split."""

import argparse
from pathlib import Path

from steerbo.cli import main


def run(out: Path, frames: int, shape: str, epochs: int, seed: int) -> int:
    out.mkdir(parents=True, exist_ok=True)
    data = out / "synth.bin"
    rc = main(["synth-data", "--frames", str(frames), "--shape", shape, "--seed", str(seed),
               "--out", str(data)])
    if rc:
        return rc
    weights = []
    for arch in ("stlstm", "pilotnet", "jnet"):
        rc = main(["train", "--arch", arch, "--data", str(data), "--epochs", str(epochs),
                   "--seed", str(seed), "--out", str(out / arch)])
        if rc:
            return rc
        weights.append(f"{arch}={out / arch / 'weights.bin'}")
    return main(["evaluate", "--weights", *weights, "--data", str(data), "--out", str(out / "eval")])


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="compare_out")
    ap.add_argument("--frames", type=int, default=200)
    # PilotNet's strided 5x5 stack needs roughly 66x200 inputs; J-Net needs ~40x48
    ap.add_argument("--shape", default="66x200")
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    raise SystemExit(run(Path(args.out), args.frames, args.shape, args.epochs, args.seed))

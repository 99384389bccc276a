"""Frame ingestion and preprocessing: crop, bilinear resize to 66x200, 3-frame
stacking and the chronological 64/16/20 split.  Also a synthetic moving-bar
dataset for desk-scale training.

Images are read as binary netpbm (P5 greyscale / P6 RGB).  JPEG sources can be
converted beforehand, e.g. ``convert frame.jpg frame.ppm`` (ImageMagick).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

TARGET_H, TARGET_W = 66, 200
STACK = 3
DEFAULT_CROP_TOP = 80
DEFAULT_CROP_BOTTOM = 26
SPLIT_FRACTIONS = (0.64, 0.16, 0.20)


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RawFrame:
    pixels: np.ndarray  # (height, width, channels) uint8
    index: int
    angle: float
    name: str = ""

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] not in (1, 3):
            raise DataError(f"frame must be (H, W, 1|3), got {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True, eq=False)
class Sample:
    tensor: np.ndarray  # (3, H, W, C) float
    label: float

    def __post_init__(self):
        if self.tensor.ndim != 4 or self.tensor.shape[0] != STACK:
            raise DataError(f"sample tensor must be ({STACK}, H, W, C), got {self.tensor.shape}")


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    validation: list
    test: list

    @staticmethod
    def arrays(samples) -> tuple[np.ndarray, np.ndarray]:
        X = np.stack([s.tensor for s in samples])
        y = np.array([s.label for s in samples], dtype=float)
        return X, y


# --- netpbm --------------------------------------------------------------------

_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def read_pnm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    pos, fields = 0, []
    while len(fields) < 4:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise DataError(f"{path}: truncated netpbm header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    if magic not in (b"P5", b"P6"):
        raise DataError(f"{path}: unsupported image format {magic!r} (need binary PGM/PPM)")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval > 255:
        raise DataError(f"{path}: 16-bit images are not supported")
    channels = 1 if magic == b"P5" else 3
    body = data[pos + 1:pos + 1 + width * height * channels]
    if len(body) != width * height * channels:
        raise DataError(f"{path}: pixel data truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)


def write_pnm(path: str | Path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    h, w, c = pixels.shape
    magic = {1: b"P5", 3: b"P6"}[c]
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + pixels.tobytes())


# --- operations ----------------------------------------------------------------

def load_frames(image_dir: str | Path, labels_file: str | Path,
                start: int = 0, stop: int | None = None) -> list[RawFrame]:
    """Read ``<filename> <angle>`` records (optionally the slice [start, stop))."""
    image_dir = Path(image_dir)
    frames: list[RawFrame] = []
    lines = Path(labels_file).read_text().splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 2:
            raise DataError(f"{labels_file}:{lineno}: expected '<filename> <angle>'")
        try:
            angle = float(parts[1])
        except ValueError:
            raise DataError(f"{labels_file}:{lineno}: angle {parts[1]!r} is not a number") from None
        frames.append((lineno, parts[0], angle))
    frames = frames[start:stop]
    out = []
    for lineno, name, angle in frames:
        path = image_dir / name
        if not path.exists():
            raise DataError(f"{labels_file}:{lineno}: missing image {path}")
        px = read_pnm(path)
        if out and px.shape != out[0].pixels.shape:
            raise DataError(f"{path}: size {px.shape} differs from first frame {out[0].pixels.shape}")
        out.append(RawFrame(px, len(out), angle, name))
    return out


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centre bilinear resampling of an (H, W, C) image."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape[:2]

    def axis(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis(h, out_h)
    x0, x1, wx = axis(w, out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bot * wy


def preprocess(frame: RawFrame, crop_top: int = DEFAULT_CROP_TOP,
               crop_bottom: int = DEFAULT_CROP_BOTTOM,
               size: tuple[int, int] = (TARGET_H, TARGET_W)) -> np.ndarray:
    """Crop rows, resize to ``size`` (default 66x200) and scale pixels to [-1, 1]."""
    if crop_top < 0 or crop_bottom < 0 or crop_top + crop_bottom >= frame.height:
        raise DataError(f"crop {crop_top}+{crop_bottom} leaves no rows of {frame.height}")
    cropped = frame.pixels[crop_top:frame.height - crop_bottom]
    return resize_bilinear(cropped, *size) / 127.5 - 1.0


def stack_frames(images: Sequence[np.ndarray], angles: Sequence[float]) -> list[Sample]:
    """Sliding window of three consecutive images labelled with the last frame's angle."""
    if len(images) != len(angles):
        raise DataError("images and angles differ in length")
    if len(images) < STACK:
        raise DataError(f"need at least {STACK} frames, got {len(images)}")
    return [Sample(np.stack(images[i:i + STACK]), float(angles[i + STACK - 1]))
            for i in range(len(images) - STACK + 1)]


def split_sizes(n: int, fractions=SPLIT_FRACTIONS) -> tuple[int, int, int]:
    # small epsilon keeps e.g. 0.64*100 from flooring to 63
    n_train = math.floor(fractions[0] * n + 1e-9)
    n_val = math.floor(fractions[1] * n + 1e-9)
    return n_train, n_val, n - n_train - n_val


def split_dataset(samples: Sequence, fractions=SPLIT_FRACTIONS) -> DatasetSplit:
    """Chronological split: first 64% train, next 16% validation, remainder test."""
    if not samples:
        raise DataError("cannot split an empty dataset")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise DataError("fractions must be three non-negative numbers summing to 1")
    a, b, _ = split_sizes(len(samples), fractions)
    samples = list(samples)
    return DatasetSplit(samples[:a], samples[a:a + b], samples[a + b:])


def bar_trajectory(n: int, seed: int) -> np.ndarray:
    """Horizontal bar centre in [0.15, 0.85] following a smooth random walk of sinusoids."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    periods = rng.uniform(12, 40, size=2)
    phases = rng.uniform(0, 2 * np.pi, size=2)
    s = 0.6 * np.sin(2 * np.pi * t / periods[0] + phases[0]) + \
        0.4 * np.sin(2 * np.pi * t / periods[1] + phases[1])
    return 0.5 + 0.35 * s


def synth_dataset(n: int, shape: tuple[int, ...] = (8, 16), seed: int = 0,
                  noise: float = 0.02) -> list[Sample]:
    """``n`` synthetic frames stacked into n-2 samples.

    Each frame is a dark image with one bright vertical bar; the angle is
    ``2 * (position - 0.5)`` plus Gaussian noise, so it tracks the bar of the
    last frame in each window.
    """
    if n < STACK:
        raise DataError(f"need at least {STACK} frames")
    h, w = shape[:2]
    c = shape[2] if len(shape) > 2 else 1
    rng = np.random.default_rng([seed, 1])
    pos = bar_trajectory(n, seed)
    cols = np.arange(w) + 0.5
    images, angles = [], []
    for p in pos:
        profile = np.exp(-0.5 * ((cols - p * w) / max(w / 16, 0.75)) ** 2)
        img = np.broadcast_to(profile[None, :, None], (h, w, c))
        images.append(2.0 * img - 1.0)
        angles.append(2.0 * (p - 0.5) + noise * rng.standard_normal())
    return stack_frames(images, angles)


# --- cache ---------------------------------------------------------------------

def save_dataset(path: str | Path, split: DatasetSplit, source: dict | None = None) -> None:
    """Store a split as one stacked tensor plus labels; sizes live in the manifest."""
    from .container import write_container

    samples = split.train + split.validation + split.test
    X, y = DatasetSplit.arrays(samples)
    manifest = {"kind": "dataset", "sizes": [len(split.train), len(split.validation), len(split.test)],
                "sample_shape": list(X.shape[1:]), "source": source or {}}
    write_container(path, manifest, [("X", X), ("y", y)])


def load_dataset(path: str | Path) -> DatasetSplit:
    from .container import read_container

    try:
        manifest, arrays = read_container(path)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    if manifest.get("kind") != "dataset":
        raise DataError(f"{path}: container does not hold a dataset")
    samples = [Sample(x, float(v)) for x, v in zip(arrays["X"], arrays["y"])]
    a, b, _ = manifest["sizes"]
    return DatasetSplit(samples[:a], samples[a:a + b], samples[a + b:])


def frames_to_samples(frames: Sequence[RawFrame], crop_top: int = DEFAULT_CROP_TOP,
                      crop_bottom: int = DEFAULT_CROP_BOTTOM,
                      size: tuple[int, int] = (TARGET_H, TARGET_W)) -> list[Sample]:
    images = [preprocess(f, crop_top, crop_bottom, size) for f in frames]
    return stack_frames(images, [f.angle for f in frames])

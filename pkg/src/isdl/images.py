"""Image grids, dihedral augmentation and PGM / CSV grid IO."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError

AUGMENT_OPS = ("flip_h", "flip_v", "rot90", "rot180", "rot270")


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Pixels as a ``(height, width, channels)`` float array in ``[0, 1]``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim == 2:
            p = p[:, :, None]
        if p.ndim != 3 or min(p.shape) < 1:
            raise ShapeError(f"expected (height, width, channels), got {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self):
        return self.pixels.shape

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1)


def augment(img: ImageGrid, op: str) -> ImageGrid:
    """Apply a flip or a counterclockwise quarter-turn rotation."""
    p = img.pixels
    if op == "flip_h":
        out = p[:, ::-1]
    elif op == "flip_v":
        out = p[::-1]
    elif op == "rot90":
        out = np.rot90(p, 1, axes=(0, 1))
    elif op == "rot180":
        out = np.rot90(p, 2, axes=(0, 1))
    elif op == "rot270":
        out = np.rot90(p, 3, axes=(0, 1))
    else:
        raise ValueError(f"unknown augmentation {op!r}; expected one of {AUGMENT_OPS}")
    return ImageGrid(out)


INVERSE_OP = {"flip_h": "flip_h", "flip_v": "flip_v", "rot90": "rot270", "rot180": "rot180", "rot270": "rot90"}


# --------------------------------------------------------------------------
# IO

def write_pgm(path, values: np.ndarray) -> None:
    """Write an 8-bit binary (P5) greyscale image from a 2-D uint8-compatible array."""
    a = np.asarray(values)
    if a.ndim != 2:
        raise ShapeError("PGM data must be 2-D")
    a = np.clip(np.rint(a), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        fh.write(a.tobytes())


def _pgm_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> ImageGrid:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), offset = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(w), int(h), int(maxval)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    raw = np.frombuffer(data, dtype=dtype, count=w * h, offset=offset)
    return ImageGrid(raw.reshape(h, w).astype(np.float64) / maxval)


def read_grid_csv(path, channels: int = 1) -> ImageGrid:
    """Read a CSV grid, one image row per line, ``width * channels`` values per line."""
    with open(path, newline="") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    a = np.array(rows, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] % channels:
        raise ShapeError(f"{path}: ragged grid or width not divisible by {channels} channels")
    return ImageGrid(a.reshape(a.shape[0], -1, channels))


def write_grid_csv(path, values: np.ndarray, fmt: str = "%.8g") -> None:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim == 3:
        a = a.reshape(a.shape[0], -1)
    with open(path, "w", newline="") as fh:
        for row in a:
            fh.write(",".join(fmt % v for v in row) + "\n")

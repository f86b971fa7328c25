"""Frame directories (8-bit binary PGM, one file per frame) and clip folders."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DecodeError
from ..numerics import DTYPE
from ..skeleton import format_track, parse_track
from .metrics import to_uint8
from .synth import Sequence

SKELETON_FILE = "skeleton.txt"


def write_pgm(path, frame) -> None:
    img = to_uint8(np.asarray(frame).reshape(np.asarray(frame).shape[-2:]))
    Image.fromarray(img).save(path, format="PPM")


def read_pgm(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.format != "PPM" or im.mode != "L":
                raise DecodeError(f"{path}: not an 8-bit grayscale PGM")
            arr = np.asarray(im, dtype=np.float64)
    except (OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from None
    return (arr / 127.5 - 1.0).astype(DTYPE)[None]


def write_frames(directory, frames) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, f in enumerate(frames):
        p = directory / f"frame_{i:04d}.pgm"
        write_pgm(p, f)
        paths.append(p)
    return paths


def read_frames(directory) -> np.ndarray:
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise DecodeError(f"no .pgm frames in {directory}")
    return np.stack([read_pgm(p) for p in paths])


def write_sequence(directory, seq: Sequence) -> None:
    directory = Path(directory)
    write_frames(directory, seq.frames)
    (directory / SKELETON_FILE).write_text(format_track(seq.track))


def read_sequence(directory) -> Sequence:
    directory = Path(directory)
    return Sequence(read_frames(directory), parse_track((directory / SKELETON_FILE).read_text()))


def read_dataset(root) -> list[Sequence]:
    dirs = sorted(p for p in Path(root).iterdir() if (p / SKELETON_FILE).exists())
    if not dirs:
        raise DecodeError(f"no clip folders (with {SKELETON_FILE}) under {root}")
    return [read_sequence(d) for d in dirs]

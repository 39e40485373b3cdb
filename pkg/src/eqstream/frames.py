"""Frame sequences and the on-disk frame manifest.

A manifest directory holds ``frames.txt`` (``timestamp_us<TAB>filename`` per
line) next to 8-bit binary PGM (P5) or PPM (P6) images.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ParseError, ValidationError
from .events import SensorGeometry

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
MANIFEST_NAME = "frames.txt"


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Timestamped single-channel frames, ``values`` shaped (N, H, W).

    The same container holds luminance frames and lin-log frames; which one
    it is depends on the producer.
    """

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 3:
            raise ValidationError(f"frame stack must be (N, H, W), got shape {vals.shape}")
        if ts.shape != (vals.shape[0],):
            raise ValidationError(f"{ts.size} timestamps for {vals.shape[0]} frames")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValidationError("frame timestamps must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("frame values must be finite")
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_frames(cls, timestamps, frames):
        frames = list(frames)
        shapes = {np.shape(f) for f in frames}
        if len(shapes) > 1:
            raise ValidationError(f"frames differ in geometry: {sorted(shapes)}")
        return cls(np.asarray(timestamps), np.stack([np.asarray(f, dtype=np.float64) for f in frames]))

    @property
    def geometry(self):
        return SensorGeometry(self.values.shape[2], self.values.shape[1])

    def __len__(self):
        return self.values.shape[0]

    def map(self, fn):
        return FrameSequence(self.timestamps, fn(self.values))

    def require(self, n=2):
        if len(self) < n:
            raise ValidationError(f"simulation needs at least {n} frames, got {len(self)}")


def rgb_to_luma(frame) -> np.ndarray:
    """Weighted RGB sum; a 2-D (already gray) frame passes through unchanged."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        return frame
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValidationError(f"expected (H, W) or (H, W, 3) frame, got shape {frame.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * frame[..., 0] + g * frame[..., 1] + b * frame[..., 2]


def read_pnm(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            magic = fh.read(2)
    except OSError as exc:
        raise ParseError(f"cannot open frame {path}: {exc}") from None
    if magic not in (b"P5", b"P6"):
        raise ParseError(f"{path}: expected binary PGM (P5) or PPM (P6), found {magic!r}", 0, unit="byte")
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                raise ParseError(f"{path}: only 8-bit PGM/PPM is supported (mode {im.mode})")
            arr = np.asarray(im)
    except ParseError:
        raise
    except Exception as exc:  # Pillow raises a zoo of types on corrupt files
        raise ParseError(f"{path}: unreadable image ({exc})") from None
    return rgb_to_luma(arr)


def write_pgm(path, frame):
    arr = np.clip(np.rint(np.asarray(frame, dtype=np.float64)), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PPM")


def read_manifest(directory) -> FrameSequence:
    manifest = os.path.join(directory, MANIFEST_NAME)
    if not os.path.isfile(manifest):
        raise ParseError(f"frame manifest not found: {manifest}")
    stamps, frames = [], []
    with open(manifest, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ParseError("expected 'timestamp_us<TAB>filename'", lineno)
            try:
                stamps.append(int(parts[0]))
            except ValueError:
                raise ParseError(f"bad timestamp {parts[0]!r}", lineno) from None
            frames.append(read_pnm(os.path.join(directory, parts[1])))
    if not frames:
        raise ParseError(f"{manifest} lists no frames")
    return FrameSequence.from_frames(stamps, frames)


def write_manifest(directory, frames: FrameSequence, prefix="frame"):
    os.makedirs(directory, exist_ok=True)
    lines = []
    for i, (t, img) in enumerate(zip(frames.timestamps.tolist(), frames.values)):
        name = f"{prefix}_{i:05d}.pgm"
        write_pgm(os.path.join(directory, name), img)
        lines.append(f"{t}\t{name}\n")
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        fh.writelines(lines)

"""Synthetic fixtures: a moving bar clip and seeded random event streams."""

from __future__ import annotations

import numpy as np

from .events import EventStream, SensorGeometry
from .frames import FrameSequence


def moving_bar_frames(width=64, height=64, num_frames=21, frame_dt_us=5_000, bar_width=6.0,
                      speed_px_per_frame=2.0, low=40.0, high=200.0, start=8.0) -> FrameSequence:
    """A vertical bright bar sliding right over a dark background.

    Edges are anti-aliased (coverage-weighted), so sub-pixel motion still
    changes intensities smoothly.
    """
    cols = np.arange(width) + 0.5
    frames = []
    for n in range(num_frames):
        left = start + n * speed_px_per_frame
        cover = np.clip(np.minimum(cols + 0.5, left + bar_width) - np.maximum(cols - 0.5, left), 0.0, 1.0)
        row = low + (high - low) * cover
        frames.append(np.tile(row, (height, 1)))
    stamps = np.arange(num_frames, dtype=np.int64) * frame_dt_us
    return FrameSequence(stamps, np.stack(frames))


def random_stream(geometry: SensorGeometry, num_events, seed=0, t_start=0, duration_us=50_000) -> EventStream:
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(t_start, t_start + duration_us, size=num_events))
    x = rng.integers(0, geometry.width, size=num_events)
    y = rng.integers(0, geometry.height, size=num_events)
    p = np.where(rng.integers(0, 2, size=num_events) == 1, 1, -1)
    return EventStream(geometry, t, x, y, p)

"""PIX2NVS: lin-log frames compared against the previous frame's 4-neighbour mean."""

from __future__ import annotations

import numpy as np

from ..events import EventStream, merge_streams
from ..frames import FrameSequence
from .config import Pix2NvsConfig


def pix2nvs_t_log(cfg: Pix2NvsConfig, luma_max: float) -> float:
    if cfg.t_log_mode == "absolute":
        return float(cfg.t_log_value)
    return float(cfg.t_log_value * luma_max)


def pix2nvs_linlog(luma, t_log: float):
    """Identity up to and including ``t_log``, natural log above it.

    Note the map is discontinuous (and not monotone) at ``t_log``; this is
    the mapping as PIX2NVS defines it.
    """
    luma = np.asarray(luma, dtype=np.float64)
    above = luma > t_log
    return np.where(above, np.log(np.where(above, luma, 1.0)), luma)


def neighbour_mean(frame):
    """Mean of the up/down/left/right neighbours with replicated borders."""
    p = np.pad(frame, 1, mode="edge")
    return (p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]) / 4


def pix2nvs_generate_log(frames: FrameSequence, cfg: Pix2NvsConfig) -> EventStream:
    """Events from a lin-log frame sequence; each stamped at its frame's time."""
    frames.require(2)
    g = frames.geometry
    parts = []
    for n in range(1, len(frames)):
        d = frames.values[n] - neighbour_mean(frames.values[n - 1])
        ys, xs = np.nonzero(np.abs(d) > cfg.threshold)
        if ys.size == 0:
            continue
        t = np.full(ys.size, int(frames.timestamps[n]), dtype=np.int64)
        parts.append(EventStream(g, t, xs, ys, np.sign(d[ys, xs]).astype(np.int8)))
    return merge_streams(g, *parts)


def pix2nvs_generate(frames: FrameSequence, cfg: Pix2NvsConfig = Pix2NvsConfig()) -> EventStream:
    frames.require(2)
    t_log = pix2nvs_t_log(cfg, float(frames.values.max()))
    return pix2nvs_generate_log(frames.map(lambda v: pix2nvs_linlog(v, t_log)), cfg)

"""V2E-style frame-to-event model with memorized brightness, leak and hot pixels."""

from __future__ import annotations

import math

import numpy as np

from ..events import EventStream, merge_streams
from ..frames import FrameSequence
from ..rng import keyed_rng
from .config import THETA_FLOOR, V2eConfig
from .noise import US_PER_S, _default_start, inject_hot_pixels

_LEAK_BLOCK = 64


def v2e_linlog(luma, knee=20.0):
    """Linear below ``knee`` (scaled to meet the log branch), ``ln`` above."""
    luma = np.asarray(luma, dtype=np.float64)
    slope = math.log(knee) / knee
    return np.where(luma < knee, luma * slope, np.log(np.maximum(luma, knee)))


def _interframe_times(t_prev, t_cur, counts):
    """Spread ``counts[i]`` events evenly over ``(t_prev, t_cur]`` in emission order."""
    n = np.asarray(counts, dtype=np.int64)
    total = int(n.sum())
    starts = np.repeat(np.cumsum(n) - n, n)
    k = np.arange(total, dtype=np.int64) - starts + 1
    return t_prev + (k * (t_cur - t_prev)) // np.repeat(n, n)


def v2e_generate_log(frames: FrameSequence, cfg: V2eConfig) -> EventStream:
    """Brightness-change events from frames already in the lin-log domain.

    Leak and hot-pixel activity is not added here; see :func:`v2e_generate`.
    """
    frames.require(2)
    g = frames.geometry
    vals = frames.values.reshape(len(frames), -1)
    memorized = vals[0].copy()
    parts = []
    for n in range(1, len(frames)):
        theta = cfg.theta + cfg.theta_sigma * keyed_rng(cfg.seed, "v2e.theta", n).standard_normal(g.num_pixels)
        theta = np.maximum(theta, THETA_FLOOR)
        diff = vals[n] - memorized
        count = np.floor(np.abs(diff) / theta).astype(np.int64)
        pol = np.sign(diff).astype(np.int64)
        memorized += count * theta * pol
        fired = np.flatnonzero(count)
        if fired.size == 0:
            continue
        c = count[fired]
        pix = np.repeat(fired, c)
        t = _interframe_times(int(frames.timestamps[n - 1]), int(frames.timestamps[n]), c)
        ys, xs = np.divmod(pix, g.width)
        parts.append(EventStream(g, t, xs, ys, pol[pix]))
    return merge_streams(g, *parts)


def inject_leak_events(stream: EventStream, cfg: V2eConfig, duration_us: int, t_start=None) -> EventStream:
    """Spontaneous ON events from a slow downward drift of the memorized brightness.

    Each pixel's drift reaches the next threshold multiple after an
    exponentially distributed wait with mean ``theta / leak_rate`` seconds.
    Waits are drawn in fixed-size keyed blocks, so the events inside a shorter
    duration are a prefix of those inside a longer one.
    """
    if cfg.leak_rate == 0 or duration_us <= 0:
        return stream
    g = stream.geometry
    t0 = _default_start(stream, t_start)
    mean_wait_us = cfg.theta / cfg.leak_rate * US_PER_S
    elapsed = np.zeros(g.num_pixels)
    pix_parts, t_parts = [], []
    block = 0
    while True:
        waits = keyed_rng(cfg.seed, "v2e.leak", block).exponential(mean_wait_us, size=(g.num_pixels, _LEAK_BLOCK))
        times = elapsed[:, None] + np.cumsum(waits, axis=1)
        elapsed = times[:, -1]
        keep = times < duration_us
        pix, col = np.nonzero(keep)
        pix_parts.append(pix)
        t_parts.append(np.floor(times[pix, col]).astype(np.int64) + t0)
        block += 1
        if np.all(elapsed >= duration_us):
            break
    pix = np.concatenate(pix_parts)
    ys, xs = np.divmod(pix, g.width)
    leak = EventStream(g, np.concatenate(t_parts), xs, ys, np.ones(pix.size, dtype=np.int8))
    return merge_streams(g, stream, leak)


def v2e_generate(frames: FrameSequence, cfg: V2eConfig = V2eConfig()) -> EventStream:
    """Luma frames -> lin-log -> memorized-brightness events, plus leak and hot pixels."""
    frames.require(2)
    events = v2e_generate_log(frames.map(lambda v: v2e_linlog(v, cfg.knee)), cfg)
    t0 = int(frames.timestamps[0])
    duration = int(frames.timestamps[-1]) - t0
    events = inject_leak_events(events, cfg, duration, t0)
    return inject_hot_pixels(events, cfg, duration, t0)

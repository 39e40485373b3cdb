"""ESIM-style simulation: piecewise-linear log signal sampled at motion-adaptive times."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ValidationError
from ..events import EventStream, merge_streams
from ..frames import FrameSequence
from ..rng import keyed_rng
from .config import EsimConfig
from .noise import US_PER_S
from .v2e import v2e_linlog

MOTION_EPS = 1e-3
V_MIN = 1e-3
V_MAX = 1e4


class PiecewiseLinearSignal:
    """Per-pixel linear interpolation between frame timestamps."""

    def __init__(self, frames: FrameSequence):
        frames.require(2)
        self.timestamps = frames.timestamps
        self.values = frames.values

    @property
    def span(self):
        return int(self.timestamps[0]), int(self.timestamps[-1])

    def __call__(self, t):
        t = int(t)
        lo, hi = self.span
        if not lo <= t <= hi:
            raise ValidationError(f"query time {t} outside [{lo}, {hi}]")
        i = int(np.searchsorted(self.timestamps, t, side="right")) - 1
        if self.timestamps[i] == t:
            return self.values[i].copy()
        ta, tb = int(self.timestamps[i]), int(self.timestamps[i + 1])
        w = (t - ta) / (tb - ta)
        return self.values[i] + (self.values[i + 1] - self.values[i]) * w


def esim_reconstruct(frames: FrameSequence) -> PiecewiseLinearSignal:
    return PiecewiseLinearSignal(frames)


def _gradient_magnitude(frame):
    grads = [np.gradient(frame, axis=a) if frame.shape[a] > 1 else np.zeros_like(frame) for a in (0, 1)]
    return np.hypot(*grads)


def estimate_motion_magnitude(frame_a, frame_b, dt_s: float) -> float:
    """Largest per-pixel speed proxy ``|dI/dt| / (|grad I| + eps)`` in px/s, clamped."""
    frame_a = np.asarray(frame_a, dtype=np.float64)
    frame_b = np.asarray(frame_b, dtype=np.float64)
    if frame_a.shape != frame_b.shape:
        raise ValidationError(f"frame shapes differ: {frame_a.shape} vs {frame_b.shape}")
    if not dt_s > 0:
        raise ConfigError("dt must be > 0")
    speed = np.abs(frame_b - frame_a) / (_gradient_magnitude(frame_a) + MOTION_EPS) / dt_s
    return float(np.clip(speed, V_MIN, V_MAX).max())


def esim_next_sample_time(t_k_us: int, v_max: float, lambda_v: float = 0.5) -> int:
    """``t_k + lambda_v / v_max`` rounded up to whole microseconds (at least +1 µs)."""
    if not v_max > 0:
        raise ConfigError(f"v_max must be > 0, got {v_max}")
    if not lambda_v > 0:
        raise ConfigError(f"lambda_v must be > 0, got {lambda_v}")
    step = math.ceil(round(lambda_v / v_max * US_PER_S, 6))
    return int(t_k_us) + max(1, step)


def interval_sample_times(t_a, t_b, v_max, cfg: EsimConfig):
    """Sample times in ``(t_a, t_b]``; spacing never below ``(t_b - t_a) / cap``."""
    min_step = -(-(t_b - t_a) // cfg.max_samples_per_interval)
    times = []
    t = t_a
    while t < t_b:
        t = min(t_b, max(esim_next_sample_time(t, v_max, cfg.lambda_v), t + min_step))
        times.append(t)
    return times


def esim_sample_times(frames: FrameSequence, cfg: EsimConfig):
    out = [int(frames.timestamps[0])]
    for n in range(1, len(frames)):
        ta, tb = int(frames.timestamps[n - 1]), int(frames.timestamps[n])
        v = estimate_motion_magnitude(frames.values[n - 1], frames.values[n], (tb - ta) / US_PER_S)
        out.extend(interval_sample_times(ta, tb, v, cfg))
    return out


def contrast_thresholds(cfg: EsimConfig, num_pixels):
    c = cfg.contrast_threshold + cfg.threshold_sigma * keyed_rng(cfg.seed, "esim.C").standard_normal(num_pixels)
    return np.maximum(c, 0.01 * cfg.contrast_threshold)


def esim_generate_log(frames: FrameSequence, cfg: EsimConfig) -> EventStream:
    """Events from lin-log frames.

    Each pixel tracks an integer crossing level ``k``; its reference is
    ``l0 + k * C_p``. Counting against the lattice rather than accumulating
    the reference keeps crossing counts free of floating-point drift.
    """
    frames.require(2)
    g = frames.geometry
    signal = esim_reconstruct(frames)
    thresholds = contrast_thresholds(cfg, g.num_pixels)
    base = frames.values[0].ravel()
    level = np.zeros(g.num_pixels, dtype=np.int64)
    parts = []
    for t in esim_sample_times(frames, cfg)[1:]:
        q = (signal(t).ravel() - base) / thresholds
        up = np.floor(q).astype(np.int64) - level
        down = level - np.ceil(q).astype(np.int64)
        count = np.where(up > 0, up, np.where(down > 0, down, 0))
        if not count.any():
            continue
        pol = np.where(up > 0, 1, -1)
        level += count * pol
        fired = np.flatnonzero(count)
        pix = np.repeat(fired, count[fired])
        ys, xs = np.divmod(pix, g.width)
        parts.append(EventStream(g, np.full(pix.size, t, dtype=np.int64), xs, ys, pol[pix]))
    return merge_streams(g, *parts)


def esim_generate(frames: FrameSequence, cfg: EsimConfig = EsimConfig()) -> EventStream:
    frames.require(2)
    return esim_generate_log(frames.map(v2e_linlog), cfg)

"""Noise injection: hot pixels and Gaussian-weighted background activity.

All draws come from keyed Philox streams (see :mod:`eqstream.rng`), so a
given ``(seed, config)`` always yields the same events.
"""

from __future__ import annotations

import numpy as np

from ..events import EventStream, merge_streams
from ..rng import keyed_rng
from .config import NoiseConfig, V2eConfig

US_PER_S = 1_000_000


def _default_start(stream, t_start):
    if t_start is not None:
        return int(t_start)
    return int(stream.t[0]) if len(stream) else 0


def _poisson_events(geometry, pixels, rates, duration_us, t_start, rng, polarity=None):
    """Homogeneous Poisson process per listed pixel over ``[t_start, t_start + duration)``.

    ``polarity=None`` draws ON/OFF uniformly; otherwise every event gets it.
    """
    pixels = np.asarray(pixels, dtype=np.int64)
    lam = np.asarray(rates, dtype=np.float64) * (duration_us / US_PER_S)
    counts = rng.poisson(lam)
    total = int(counts.sum())
    pix = np.repeat(pixels, counts)
    t = t_start + rng.integers(0, duration_us, size=total, dtype=np.int64)
    if polarity is None:
        p = np.where(rng.integers(0, 2, size=total) == 1, 1, -1)
    else:
        p = np.full(total, polarity)
    ys, xs = np.divmod(pix, geometry.width)
    return EventStream(geometry, t, xs, ys, p).sorted()


def _hot_pixel_stream(geometry, count, rate, duration_us, t_start, seed):
    count = int(count)
    if count == 0 or rate == 0 or duration_us <= 0:
        return EventStream(geometry)
    pixels = np.sort(keyed_rng(seed, "hot.choose").choice(geometry.num_pixels, size=count, replace=False))
    return _poisson_events(geometry, pixels, np.full(count, float(rate)), duration_us, t_start,
                           keyed_rng(seed, "hot.fire"), polarity=1)


def hot_pixel_count(cfg, geometry):
    if isinstance(cfg, V2eConfig):
        return int(np.floor(cfg.hot_pixel_fraction * geometry.num_pixels))
    return int(cfg.hot_pixel_count)


def inject_hot_pixels(stream: EventStream, cfg, duration_us: int, t_start=None) -> EventStream:
    """Add ON-only Poisson activity on a seeded, uniformly chosen set of pixels.

    ``cfg`` is either a :class:`V2eConfig` (``floor(fraction * H * W)`` pixels)
    or a :class:`NoiseConfig` (``hot_pixel_count`` pixels).
    """
    g = stream.geometry
    n = hot_pixel_count(cfg, g)
    hot = _hot_pixel_stream(g, n, cfg.hot_pixel_rate, int(duration_us), _default_start(stream, t_start), cfg.seed)
    if len(hot) == 0:
        return stream
    return merge_streams(g, stream, hot)


def inject_gaussian_background(stream: EventStream, cfg: NoiseConfig, duration_us: int,
                               t_start=None) -> EventStream:
    """Background activity at ``rate * (1 + g)`` per pixel, ``g ~ N(0, jitter)`` clamped at -1."""
    if cfg.background_rate == 0 or duration_us <= 0:
        return stream
    g = stream.geometry
    weight = 1.0 + cfg.rate_jitter * keyed_rng(cfg.seed, "bg.jitter").standard_normal(g.num_pixels)
    rates = cfg.background_rate * np.maximum(weight, 0.0)
    noise = _poisson_events(g, np.arange(g.num_pixels), rates, int(duration_us),
                            _default_start(stream, t_start), keyed_rng(cfg.seed, "bg.fire"))
    return merge_streams(g, stream, noise)


def perturb(stream: EventStream, cfg: NoiseConfig, duration_us: int, t_start=None) -> EventStream:
    """Gaussian background followed by hot pixels, both from ``cfg``."""
    t_start = _default_start(stream, t_start)
    out = inject_gaussian_background(stream, cfg, duration_us, t_start)
    return inject_hot_pixels(out, cfg, duration_us, t_start)

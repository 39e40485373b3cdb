"""Latent feature similarity: patch-pooled cosine distances and the Event Quality Score.

For every step and scale the tapped activations of both streams are cut into
non-overlapping patches (zero padded at the right/bottom), each patch is
reduced to a per-channel vector ``sum / patch_area``, and the two vectors are
compared by cosine distance. ``EQS = 1 - mean distance`` over patches, then
over (step, scale) pairs with equal weight.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import ValidationError
from .events import EventStream, TensorizeConfig, tensorize_sequence
from .nn.network import NetworkConfig, network_backward, network_forward


@dataclass(frozen=True)
class PatchConfig:
    patch_sizes: tuple = (3, 3, 3)
    include_hidden: bool = False    # also compare LSTM hidden states (not part of the default score)

    def __post_init__(self):
        object.__setattr__(self, "patch_sizes", tuple(int(p) for p in self.patch_sizes))
        if min(self.patch_sizes) < 1:
            raise ValidationError("patch size must be >= 1")

    def size_for(self, scale):
        return self.patch_sizes[scale % len(self.patch_sizes)]


def patch_grid_shape(h, w, patch):
    return -(-h // patch), -(-w // patch)


def patch_pool(act, patch=3) -> np.ndarray:
    """``(C, H, W)`` -> ``(ceil(H/p), ceil(W/p), C)`` patch vectors.

    The normalizer is always ``p * p``; padded zeros count as patch members.
    """
    act = np.asarray(act, dtype=np.float64)
    c, h, w = act.shape
    gh, gw = patch_grid_shape(h, w, patch)
    padded = np.zeros((c, gh * patch, gw * patch))
    padded[:, :h, :w] = act
    blocks = padded.reshape(c, gh, patch, gw, patch).sum(axis=(2, 4))
    return blocks.transpose(1, 2, 0) / (patch * patch)


def patch_pool_backward(dvec, act_shape, patch=3):
    c, h, w = act_shape
    spread = np.repeat(np.repeat(dvec.transpose(2, 0, 1), patch, axis=1), patch, axis=2)
    return spread[:, :h, :w] / (patch * patch)


def cosine_distances(v1, v2):
    """Row-wise ``1 - cos`` over the last axis, clipped to [0, 2].

    Both vectors zero -> 0; exactly one zero -> 1. Returns ``(dist, both_zero)``.
    """
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v1.shape != v2.shape:
        raise ValidationError(f"vector shapes differ: {v1.shape} vs {v2.shape}")
    # rescale each vector by its max magnitude so norms cannot under/overflow
    m1 = np.abs(v1).max(axis=-1, keepdims=True)
    m2 = np.abs(v2).max(axis=-1, keepdims=True)
    u1 = v1 / np.where(m1 > 0, m1, 1.0)
    u2 = v2 / np.where(m2 > 0, m2, 1.0)
    dot = (u1 * u2).sum(axis=-1)
    denom = np.sqrt((u1 * u1).sum(axis=-1) * (u2 * u2).sum(axis=-1))
    live = (m1[..., 0] > 0) & (m2[..., 0] > 0)
    cos = np.divide(dot, denom, out=np.zeros_like(dot), where=live)
    dist = np.clip(1.0 - cos, 0.0, 2.0)
    both_zero = (m1[..., 0] == 0) & (m2[..., 0] == 0)
    dist = np.where(live, dist, np.where(both_zero, 0.0, 1.0))
    return dist, both_zero


def cosine_distance(v1, v2) -> float:
    return float(cosine_distances(v1, v2)[0])


def cosine_distance_grad(v1, v2):
    """d(1 - cos)/d v1 row-wise; zero where either vector is zero."""
    dot = (v1 * v2).sum(axis=-1, keepdims=True)
    n1 = (v1 * v1).sum(axis=-1, keepdims=True)
    n2 = (v2 * v2).sum(axis=-1, keepdims=True)
    denom = np.sqrt(n1 * n2)
    live = (denom > 0)
    safe_denom = np.where(live, denom, 1.0)
    safe_n1 = np.where(live, n1, 1.0)
    grad = -(v2 / safe_denom - (dot / safe_denom) * v1 / safe_n1)
    return np.where(live, grad, 0.0)


@dataclass
class ScaleScore:
    distance: float
    patch_count: int
    degenerate: int
    distances: np.ndarray = field(repr=False, default=None)


def scale_score(acts_a, acts_b, patch=3) -> ScaleScore:
    acts_a = np.asarray(acts_a, dtype=np.float64)
    acts_b = np.asarray(acts_b, dtype=np.float64)
    if acts_a.shape != acts_b.shape:
        raise ValidationError(f"activation shapes differ: {acts_a.shape} vs {acts_b.shape}")
    dist, both_zero = cosine_distances(patch_pool(acts_a, patch), patch_pool(acts_b, patch))
    flat = dist.ravel()
    return ScaleScore(float(flat.mean()), int(flat.size), int(both_zero.sum()), dist)


# ---------------------------------------------------------------------------
# aggregate score


@dataclass
class EqsReport:
    eqs: float
    distance: float
    per_scale: list
    per_step: list
    degenerate_patches: int
    config_digest: str
    tool_version: str = __version__
    weights: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)


def _features(result, include_hidden):
    if include_hidden:
        return [taps + hid for taps, hid in zip(result.taps, result.hidden)]
    return result.taps


def _weights_dict(weights):
    return getattr(weights, "tensors", weights)


def weights_digest(weights) -> str:
    h = hashlib.sha256()
    for name, arr in _weights_dict(weights).items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return h.hexdigest()


def config_digest(tcfg, pcfg, netcfg, num_steps, weights) -> str:
    doc = {
        "tensorize": asdict(tcfg) if tcfg is not None else None,
        "patch": asdict(pcfg),
        "network": asdict(netcfg),
        "num_steps": num_steps,
        "weights_sha256": weights_digest(weights),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _scores(feats_a, feats_b, pcfg):
    return [[scale_score(a, b, pcfg.size_for(s)) for s, (a, b) in enumerate(zip(fa, fb))]
            for fa, fb in zip(feats_a, feats_b)]


def _build_report(scores, netcfg, pcfg, digest, window_starts, weights_meta, settings):
    n_steps, n_scales = len(scores), len(scores[0])
    grid = np.array([[sc.distance for sc in row] for row in scores])
    distance = float(grid.mean())
    labels = [f"o{s + 1}" for s in range(netcfg.num_scales)]
    if n_scales > netcfg.num_scales:
        labels += [f"h{s + 1}" for s in range(netcfg.num_scales)]
    factors = netcfg.scale_factors() * (n_scales // netcfg.num_scales)
    per_scale = []
    for s in range(n_scales):
        d = float(grid[:, s].mean())
        per_scale.append({
            "scale": labels[s],
            "downsample": factors[s],
            "distance": d,
            "similarity": 1.0 - d,
            "patch_count": scores[0][s].patch_count,
            "degenerate_patches": int(sum(row[s].degenerate for row in scores)),
        })
    per_step = []
    for k in range(n_steps):
        d = float(grid[k].mean())
        per_step.append({
            "step": k,
            "window_start_us": window_starts[k] if window_starts else None,
            "distance": d,
            "eqs": 1.0 - d,
            "scale_distances": [float(v) for v in grid[k]],
        })
    degenerate = int(sum(sc.degenerate for row in scores for sc in row))
    return EqsReport(1.0 - distance, distance, per_scale, per_step, degenerate, digest,
                     weights=weights_meta, settings=settings)


def eqs_from_tensors(tensors_a, tensors_b, weights, netcfg: NetworkConfig,
                     pcfg: PatchConfig = PatchConfig(), tcfg: TensorizeConfig | None = None,
                     weights_meta=None) -> EqsReport:
    if len(tensors_a) != len(tensors_b) or not tensors_a:
        raise ValidationError("both streams need the same, non-zero number of step tensors")
    ra = network_forward(tensors_a, weights, netcfg)
    rb = network_forward(tensors_b, weights, netcfg)
    scores = _scores(_features(ra, pcfg.include_hidden), _features(rb, pcfg.include_hidden), pcfg)
    starts = [getattr(t, "window_start", None) for t in tensors_a]
    digest = config_digest(tcfg, pcfg, netcfg, len(tensors_a), weights)
    settings = {"aggregation": "unweighted mean over patches, then over (step, scale)",
                "num_steps": len(tensors_a), "patch_sizes": list(pcfg.patch_sizes),
                "include_hidden": pcfg.include_hidden}
    if tcfg is not None:
        settings.update(num_bins=tcfg.num_bins, window_us=tcfg.window_us, window_start=tcfg.window_start)
    return _build_report(scores, netcfg, pcfg, digest, starts if None not in starts else None,
                         weights_meta or {}, settings)


def eqs(stream_a: EventStream, stream_b: EventStream, weights, tcfg: TensorizeConfig = TensorizeConfig(),
        pcfg: PatchConfig = PatchConfig(), num_steps: int = 1, netcfg: NetworkConfig | None = None,
        weights_meta=None) -> EqsReport:
    """Event Quality Score between two streams (1 = identical in feature space)."""
    if stream_a.geometry != stream_b.geometry:
        raise ValidationError(f"stream geometries differ: {stream_a.geometry} vs {stream_b.geometry}")
    netcfg = netcfg or NetworkConfig.for_bins(tcfg.num_bins)
    ta = tensorize_sequence(stream_a, tcfg, num_steps)
    tb = tensorize_sequence(stream_b, tcfg, num_steps)
    return eqs_from_tensors(ta, tb, weights, netcfg, pcfg, tcfg, weights_meta)


def eqs_value(tensors_a, tensors_b, weights, netcfg, pcfg=PatchConfig()) -> float:
    return eqs_from_tensors(tensors_a, tensors_b, weights, netcfg, pcfg).eqs


def eqs_gradient(tensors_a, tensors_b, weights, netcfg: NetworkConfig, pcfg: PatchConfig = PatchConfig(),
                 seed=1.0):
    """Return ``(eqs, grads)``: ``seed * dEQS/dX_a`` for every step tensor of stream a.

    Stream b is held constant.
    """
    if len(tensors_a) != len(tensors_b) or not tensors_a:
        raise ValidationError("both streams need the same, non-zero number of step tensors")
    ra = network_forward(tensors_a, weights, netcfg, retain=True)
    rb = network_forward(tensors_b, weights, netcfg)
    fa = _features(ra, pcfg.include_hidden)
    fb = _features(rb, pcfg.include_hidden)
    n_steps, n_feats = len(fa), len(fa[0])
    grid = np.zeros((n_steps, n_feats))
    grads_o = [[None] * netcfg.num_scales for _ in range(n_steps)]
    grads_h = [[None] * netcfg.num_scales for _ in range(n_steps)] if pcfg.include_hidden else None
    for k in range(n_steps):
        for s in range(n_feats):
            p = pcfg.size_for(s)
            va, vb = patch_pool(fa[k][s], p), patch_pool(fb[k][s], p)
            dist, _ = cosine_distances(va, vb)
            grid[k, s] = dist.mean()
            # dEQS/d dist for each patch of this (step, scale)
            w = -seed / (n_steps * n_feats * dist.size)
            dact = patch_pool_backward(w * cosine_distance_grad(va, vb), fa[k][s].shape, p)
            if s < netcfg.num_scales:
                grads_o[k][s] = dact
            else:
                grads_h[k][s - netcfg.num_scales] = dact
    value = 1.0 - float(grid.mean())
    grads = network_backward(grads_o, ra.context, grads_h)
    return value, grads

"""Three-scale recurrent feature network and its reverse-mode pass.

Each scale runs one recurrent block::

    Z        = sigmoid(Conv3x3(Conv_down(X)))            spatial mixing
    (h, c)   = ConvLSTM(Z, h_prev, c_prev)
    o        = sigmoid(Conv(Z) + Conv(h))                 tapped activation
    X_next   = h + Conv(sigmoid(Conv(LN(h))))

``Conv_down`` has kernel size equal to its stride, so scales 1-3 sit at
exactly 1/4, 1/8 and 1/16 of the (zero-padded) input resolution.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ContextError, FormatError, ValidationError
from .layers import (conv2d_backward, conv2d_forward, layer_norm_backward, layer_norm_forward,
                     sigmoid)

LSTM_GATES = ("input", "forget", "output", "cell")


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int = 20
    strides: tuple = (4, 2, 2)
    widths: tuple = (16, 32, 64)
    kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.strides) != len(self.widths):
            raise ValidationError("strides and widths must have one entry per scale")
        if self.kernel % 2 != 1:
            raise ValidationError("same-padded kernels must have odd size")
        if self.in_channels < 1 or min(self.widths) < 1 or min(self.strides) < 1:
            raise ValidationError("channel counts and strides must be positive")

    @classmethod
    def for_bins(cls, num_bins, **kw):
        return cls(in_channels=2 * num_bins, **kw)

    @property
    def num_scales(self):
        return len(self.widths)

    @property
    def total_stride(self):
        return int(np.prod(self.strides))

    def scale_factors(self):
        return [int(np.prod(self.strides[:i + 1])) for i in range(self.num_scales)]

    def param_shapes(self) -> dict:
        k = self.kernel
        shapes = {}
        c_in = self.in_channels
        for s, (stride, c) in enumerate(zip(self.strides, self.widths), start=1):
            pre = f"s{s}."
            shapes[pre + "down.w"] = (c, c_in, stride, stride)
            shapes[pre + "down.b"] = (c,)
            shapes[pre + "mix.w"] = (c, c, k, k)
            shapes[pre + "mix.b"] = (c,)
            shapes[pre + "lstm.w"] = (4 * c, 2 * c, k, k)
            shapes[pre + "lstm.b"] = (4 * c,)
            shapes[pre + "tap_z.w"] = (c, c, k, k)
            shapes[pre + "tap_z.b"] = (c,)
            shapes[pre + "tap_h.w"] = (c, c, k, k)
            shapes[pre + "tap_h.b"] = (c,)
            shapes[pre + "ln.gain"] = (c,)
            shapes[pre + "ln.offset"] = (c,)
            shapes[pre + "res1.w"] = (c, c, k, k)
            shapes[pre + "res1.b"] = (c,)
            shapes[pre + "res2.w"] = (c, c, k, k)
            shapes[pre + "res2.b"] = (c,)
            c_in = c
        return shapes

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def hash64(self) -> int:
        return int.from_bytes(hashlib.sha256(self.to_json().encode()).digest()[:8], "little")


def scale_params(weights, s):
    """float64 copies of scale ``s``'s parameters keyed by short name (``"mix.w"``)."""
    pre = f"s{s}."
    return {name[len(pre):]: np.asarray(arr, dtype=np.float64)
            for name, arr in weights.items() if name.startswith(pre)}


# ---------------------------------------------------------------------------
# ConvLSTM


def conv_lstm_forward(z, state, w, b):
    """One ConvLSTM update; gate order in ``w``/``b`` is input, forget, output, cell."""
    h, c = state
    if h.shape != z.shape or c.shape != z.shape:
        raise ValidationError(f"state shapes {h.shape}/{c.shape} do not match input {z.shape}")
    ch = z.shape[0]
    pre, conv_cache = conv2d_forward(np.concatenate([z, h]), w, b, 1, w.shape[2] // 2)
    gi = sigmoid(pre[:ch])
    gf = sigmoid(pre[ch:2 * ch])
    go = sigmoid(pre[2 * ch:3 * ch])
    gg = np.tanh(pre[3 * ch:])
    c_new = gf * c + gi * gg
    tc = np.tanh(c_new)
    h_new = go * tc
    return (h_new, c_new), (conv_cache, c, gi, gf, go, gg, tc)


def conv_lstm_backward(dh_new, dc_new, cache):
    """Return ``(dz, dh, dc, dw, db)``."""
    conv_cache, c, gi, gf, go, gg, tc = cache
    ch = c.shape[0]
    dc_total = dc_new + dh_new * go * (1.0 - tc * tc)
    dpre = np.concatenate([
        dc_total * gg * gi * (1.0 - gi),
        dc_total * c * gf * (1.0 - gf),
        dh_new * tc * go * (1.0 - go),
        dc_total * gi * (1.0 - gg * gg),
    ])
    dzh, dw, db = conv2d_backward(dpre, conv_cache)
    return dzh[:ch], dzh[ch:], dc_total * gf, dw, db


def conv_lstm_step(z, state, params):
    """Convenience wrapper: ``params`` holds ``"w"`` and ``"b"``."""
    return conv_lstm_forward(z, state, params["w"], params["b"])[0]


# ---------------------------------------------------------------------------
# recurrent block


@dataclass
class BlockCache:
    down: tuple
    mix: tuple
    z: np.ndarray
    lstm: tuple
    tap_z: tuple
    tap_h: tuple
    o: np.ndarray
    ln: tuple
    res1: tuple
    a: np.ndarray
    res2: tuple


def rvt_block_forward(x, state, p, stride):
    """Return ``(o, x_next, (h, c), cache)`` for one scale."""
    if x.shape[0] != p["down.w"].shape[1]:
        raise ValidationError(f"block input has {x.shape[0]} channels, weights expect {p['down.w'].shape[1]}")
    pad = p["mix.w"].shape[2] // 2
    d, down_c = conv2d_forward(x, p["down.w"], p["down.b"], stride, 0)
    m, mix_c = conv2d_forward(d, p["mix.w"], p["mix.b"], 1, pad)
    z = sigmoid(m)
    (h, c), lstm_c = conv_lstm_forward(z, state, p["lstm.w"], p["lstm.b"])
    oz, tz_c = conv2d_forward(z, p["tap_z.w"], p["tap_z.b"], 1, pad)
    oh, th_c = conv2d_forward(h, p["tap_h.w"], p["tap_h.b"], 1, pad)
    o = sigmoid(oz + oh)
    n, ln_c = layer_norm_forward(h, p["ln.gain"], p["ln.offset"])
    r1, r1_c = conv2d_forward(n, p["res1.w"], p["res1.b"], 1, pad)
    a = sigmoid(r1)
    r2, r2_c = conv2d_forward(a, p["res2.w"], p["res2.b"], 1, pad)
    x_next = h + r2
    cache = BlockCache(down_c, mix_c, z, lstm_c, tz_c, th_c, o, ln_c, r1_c, a, r2_c)
    return o, x_next, (h, c), cache


def rvt_block_backward(do, dx_next, dh_carry, dc_carry, cache: BlockCache):
    """Gradients w.r.t. the block input and the previous (h, c).

    ``dh_carry``/``dc_carry`` arrive from the same scale at the next time step
    (plus any direct upstream gradient on ``h``). Returns ``(dx, dh_prev, dc_prev)``.
    """
    dh = dx_next + dh_carry
    da, _, _ = conv2d_backward(dx_next, cache.res2)
    dn, _, _ = conv2d_backward(da * cache.a * (1.0 - cache.a), cache.res1)
    dh = dh + layer_norm_backward(dn, cache.ln)[0]
    dpre_o = do * cache.o * (1.0 - cache.o)
    dz, _, _ = conv2d_backward(dpre_o, cache.tap_z)
    dh = dh + conv2d_backward(dpre_o, cache.tap_h)[0]
    dz_l, dh_prev, dc_prev, _, _ = conv_lstm_backward(dh, dc_carry, cache.lstm)
    dz = dz + dz_l
    dd, _, _ = conv2d_backward(dz * cache.z * (1.0 - cache.z), cache.mix)
    dx, _, _ = conv2d_backward(dd, cache.down)
    return dx, dh_prev, dc_prev


# ---------------------------------------------------------------------------
# full network


@dataclass
class ForwardContext:
    caches: list                 # [step][scale] -> BlockCache
    input_shape: tuple           # unpadded (C, H, W)


@dataclass
class ForwardResult:
    taps: list                   # [step][scale] -> o, shape (C_s, H_s, W_s)
    hidden: list                 # [step][scale] -> h
    state: list                  # final [(h, c)] per scale
    context: ForwardContext | None = field(default=None, repr=False)


def pad_to_multiple(x, m):
    _, h, w = x.shape
    ph, pw = (-h) % m, (-w) % m
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, ph), (0, pw)))


def _as_array(t):
    return np.asarray(getattr(t, "values", t), dtype=np.float64)


def check_weights(weights, config: NetworkConfig):
    shapes = config.param_shapes()
    names = set(weights)
    if names != set(shapes):
        missing = sorted(set(shapes) - names)
        extra = sorted(names - set(shapes))
        raise FormatError(f"weights do not match network config (missing {missing[:3]}, unexpected {extra[:3]})")
    for name, shape in shapes.items():
        if tuple(np.shape(weights[name])) != shape:
            raise FormatError(f"weight {name} has shape {np.shape(weights[name])}, config expects {shape}")


def network_forward(tensors, weights, config: NetworkConfig, retain=False) -> ForwardResult:
    """Run the recurrent network over consecutive event tensors from a zero state."""
    weights = getattr(weights, "tensors", weights)
    check_weights(weights, config)
    params = [scale_params(weights, s) for s in range(1, config.num_scales + 1)]
    xs = [_as_array(t) for t in tensors]
    if not xs:
        raise ValidationError("network_forward needs at least one tensor")
    shape = xs[0].shape
    if any(x.shape != shape for x in xs):
        raise ValidationError("all step tensors must share one shape")
    if shape[0] != config.in_channels:
        raise FormatError(f"tensor has {shape[0]} channels, network expects {config.in_channels}")
    state = None
    taps, hidden, caches = [], [], []
    for x in xs:
        x = pad_to_multiple(x, config.total_stride)
        if state is None:
            hs = [x.shape[1] // f for f in config.scale_factors()]
            ws = [x.shape[2] // f for f in config.scale_factors()]
            state = [(np.zeros((c, h, w)), np.zeros((c, h, w))) for c, h, w in zip(config.widths, hs, ws)]
        step_taps, step_hidden, step_caches, new_state = [], [], [], []
        for s in range(config.num_scales):
            o, x, hc, cache = rvt_block_forward(x, state[s], params[s], config.strides[s])
            step_taps.append(o)
            step_hidden.append(hc[0])
            step_caches.append(cache)
            new_state.append(hc)
        state = new_state
        taps.append(step_taps)
        hidden.append(step_hidden)
        if retain:
            caches.append(step_caches)
    ctx = ForwardContext(caches, shape) if retain else None
    return ForwardResult(taps, hidden, state, ctx)


def network_backward(upstream, context: ForwardContext | None, upstream_hidden=None):
    """Gradient w.r.t. each step's input tensor given gradients on the taps.

    ``upstream[step][scale]`` matches the shape of the forward tap (``None``
    means zero). Back-propagates through time across all steps.
    """
    if context is None or not context.caches:
        raise ContextError("network_backward needs a forward pass run with retain=True")
    caches = context.caches
    n_steps, n_scales = len(caches), len(caches[0])
    if len(upstream) != n_steps:
        raise ValidationError(f"{len(upstream)} upstream steps for {n_steps} forward steps")
    carry = [None] * n_scales
    grads = [None] * n_steps
    for k in reversed(range(n_steps)):
        dx_next = None
        for s in reversed(range(n_scales)):
            cache = caches[k][s]
            shape = cache.o.shape
            do = upstream[k][s] if upstream[k][s] is not None else np.zeros(shape)
            dh_c, dc_c = carry[s] if carry[s] is not None else (np.zeros(shape), np.zeros(shape))
            if upstream_hidden is not None and upstream_hidden[k][s] is not None:
                dh_c = dh_c + upstream_hidden[k][s]
            if dx_next is None:
                dx_next = np.zeros(shape)
            dx, dh_prev, dc_prev = rvt_block_backward(do, dx_next, dh_c, dc_c, cache)
            carry[s] = (dh_prev, dc_prev)
            dx_next = dx
        c, h, w = context.input_shape
        grads[k] = dx_next[:c, :h, :w]
    return grads

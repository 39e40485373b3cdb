"""Simulator and noise configuration dataclasses plus the JSON loader."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from ..errors import ConfigError, ParseError

THETA_FLOOR = 0.01


@dataclass(frozen=True)
class Pix2NvsConfig:
    threshold: float = 0.1
    t_log_mode: str = "fraction_of_max"     # or "absolute"
    t_log_value: float = 0.10
    border: str = "replicate"

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigError("pix2nvs threshold must be > 0")
        if self.t_log_mode == "fraction_of_max":
            if not 0 < self.t_log_value < 1:
                raise ConfigError("pix2nvs t_log fraction must lie in (0, 1)")
        elif self.t_log_mode == "absolute":
            if self.t_log_value < 0:
                raise ConfigError("pix2nvs absolute t_log must be >= 0")
        else:
            raise ConfigError(f"unknown t_log_mode {self.t_log_mode!r}; expected fraction_of_max or absolute")
        if self.border != "replicate":
            raise ConfigError("only the 'replicate' border policy is supported")


@dataclass(frozen=True)
class V2eConfig:
    theta: float = 0.3
    theta_sigma: float = 0.03
    knee: float = 20.0
    leak_rate: float = 0.0              # expected L_m decrement per second per pixel
    hot_pixel_fraction: float = 0.0
    hot_pixel_rate: float = 0.0         # events/s per hot pixel
    seed: int = 0

    def __post_init__(self):
        if not self.theta > 0:
            raise ConfigError("v2e theta must be > 0")
        if self.theta_sigma < 0:
            raise ConfigError("v2e theta_sigma must be >= 0")
        if not self.knee > 0:
            raise ConfigError("v2e knee must be > 0")
        if self.leak_rate < 0 or self.hot_pixel_rate < 0:
            raise ConfigError("v2e rates must be >= 0")
        if not 0 <= self.hot_pixel_fraction <= 1:
            raise ConfigError("v2e hot_pixel_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class EsimConfig:
    contrast_threshold: float = 0.2
    threshold_sigma: float | None = None    # None -> 0.021 * contrast_threshold
    lambda_v: float = 0.5
    max_samples_per_interval: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.threshold_sigma is None:
            object.__setattr__(self, "threshold_sigma", 0.021 * self.contrast_threshold)
        if not self.contrast_threshold > 0:
            raise ConfigError("esim contrast_threshold must be > 0")
        if self.threshold_sigma < 0 or not self.contrast_threshold - 3 * self.threshold_sigma > 0:
            raise ConfigError("esim threshold_sigma must satisfy 0 <= 3 * sigma < contrast_threshold")
        if not self.lambda_v > 0:
            raise ConfigError("esim lambda_v must be > 0")
        if int(self.max_samples_per_interval) < 1:
            raise ConfigError("esim max_samples_per_interval must be >= 1")


@dataclass(frozen=True)
class NoiseConfig:
    background_rate: float = 0.0    # events/s/pixel
    rate_jitter: float = 0.0        # std of the zero-mean Gaussian rate weight
    hot_pixel_count: int = 0
    hot_pixel_rate: float = 0.0     # events/s per hot pixel
    seed: int = 0

    def __post_init__(self):
        if self.background_rate < 0 or self.rate_jitter < 0 or self.hot_pixel_rate < 0:
            raise ConfigError("noise rates must be >= 0")
        if int(self.hot_pixel_count) < 0:
            raise ConfigError("hot_pixel_count must be >= 0")


METHODS = {"pix2nvs": Pix2NvsConfig, "v2e": V2eConfig, "esim": EsimConfig}


def build_config(cls, params: dict):
    """Instantiate a config dataclass, rejecting keys it does not declare."""
    if not isinstance(params, dict):
        raise ConfigError(f"{cls.__name__} parameters must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(params) - names)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_simulator_config(doc: dict, seed: int | None = None):
    """Return ``(method, config)`` from a ``{"method": ..., "<method>": {...}}`` document."""
    if not isinstance(doc, dict):
        raise ConfigError("simulator config must be a JSON object")
    unknown = sorted(set(doc) - {"method", *METHODS})
    if unknown:
        raise ConfigError(f"unknown simulator config keys: {', '.join(unknown)}")
    method = doc.get("method")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; valid methods are {', '.join(sorted(METHODS))}")
    params = dict(doc.get(method, {}))
    if seed is not None and "seed" in {f.name for f in dataclasses.fields(METHODS[method])}:
        params["seed"] = seed
    return method, build_config(METHODS[method], params)


def load_simulator_config(path, seed=None):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    return parse_simulator_config(doc, seed)

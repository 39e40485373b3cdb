"""Frame-to-event simulators (PIX2NVS, V2E-style, ESIM-style) and noise injection."""

from .config import (EsimConfig, NoiseConfig, Pix2NvsConfig, V2eConfig, METHODS,
                     load_simulator_config, parse_simulator_config)
from .esim import (PiecewiseLinearSignal, esim_generate, esim_generate_log, esim_next_sample_time,
                   esim_reconstruct, esim_sample_times, estimate_motion_magnitude, interval_sample_times)
from .noise import inject_gaussian_background, inject_hot_pixels, perturb
from .pix2nvs import pix2nvs_generate, pix2nvs_generate_log, pix2nvs_linlog, pix2nvs_t_log
from .v2e import inject_leak_events, v2e_generate, v2e_generate_log, v2e_linlog

GENERATORS = {"pix2nvs": pix2nvs_generate, "v2e": v2e_generate, "esim": esim_generate}


def simulate(method, frames, cfg=None):
    """Run one of the named simulators; ``cfg=None`` uses that method's defaults."""
    return GENERATORS[method](frames, cfg if cfg is not None else METHODS[method]())

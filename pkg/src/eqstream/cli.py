"""``eqstream`` command-line front end.

Exit codes: 0 success, 2 I/O or parse error, 3 configuration error,
4 weight-file format error. Machine-readable output (JSON, CSV) goes to
stdout or ``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys

import numpy as np
from scipy.stats import spearmanr
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import ConfigError, EqsError, ParseError
from .events import (SensorGeometry, TensorizeConfig, read_events, steps_to_cover, validate_stream,
                     write_events)
from .frames import read_manifest
from .lfs import PatchConfig, eqs
from .nn import NetworkConfig, init_weights, load_weights, save_weights
from .rng import keyed_rng
from .simulators import GENERATORS, METHODS, NoiseConfig, parse_simulator_config, perturb

log = logging.getLogger("eqstream")

DEFAULT_LEVELS = "0,1,2,4,8"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _csv_floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _apply_config(args, allowed):
    """Fill flags left at None from ``--config``; unknown keys are an error."""
    if not getattr(args, "config", None):
        return args
    doc = _load_json(args.config)
    if not isinstance(doc, dict):
        raise ConfigError("--config must hold a JSON object")
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)} (allowed: {', '.join(sorted(allowed))})")
    for key, value in doc.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _emit(text, out=None):
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(doc):
    return json.dumps(doc, indent=2) + "\n"


def _geometry(args):
    if args.width is None and args.height is None:
        return None
    if args.width is None or args.height is None:
        raise ConfigError("--width and --height must be given together")
    return SensorGeometry(int(args.width), int(args.height))


def _read_stream(path, args):
    stream = read_events(path, getattr(args, "in_format", None), _geometry(args))
    report = validate_stream(stream)
    if not report.ok:
        log.warning("%s: %s", path, report.as_dict())
    return stream


def _stream_summary(stream):
    on = int(np.count_nonzero(stream.p > 0))
    dur = stream.duration_us
    return {
        "events": len(stream),
        "on": on,
        "off": len(stream) - on,
        "duration_us": dur,
        "rate_ev_per_s": (len(stream) / (dur / 1e6)) if dur > 0 else 0.0,
        "geometry": [stream.geometry.width, stream.geometry.height],
    }


# ---------------------------------------------------------------------------
# weights


def _resolve_weights(args, netcfg):
    if args.weights is not None and args.weights_seed is not None:
        raise ConfigError("--weights and --weights-seed are mutually exclusive")
    if args.weights is not None:
        store = load_weights(args.weights, netcfg)
        return store, {"source": "file", "path": os.path.basename(str(args.weights)),
                       "config_hash": f"{store.config_hash:016x}"}
    seed = int(args.weights_seed if args.weights_seed is not None else (args.seed or 0))
    return init_weights(netcfg, seed), {"source": "seeded", "seed": seed}


def cmd_weights(args):
    if args.action == "init":
        netcfg = NetworkConfig.for_bins(int(args.bins or 10))
        store = init_weights(netcfg, int(args.seed or 0))
        if not args.out:
            raise ConfigError("weights init needs --out")
        save_weights(store, args.out)
        _emit(_dump({"out": args.out, "seed": store.seed, "config_hash": f"{store.config_hash:016x}",
                     "tensors": len(store.tensors), "values": store.num_values()}))
        return 0
    if not args.path:
        raise ConfigError("weights inspect needs a weight file path")
    store = load_weights(args.path)
    doc = {
        "config_hash": f"{store.config_hash:016x}",
        "version": store.version,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in store.tensors.items()],
        "values": store.num_values(),
    }
    if args.bins is not None:
        netcfg = NetworkConfig.for_bins(int(args.bins))
        doc["matches_config"] = (store.config_hash == netcfg.hash64()
                                 and list(store.tensors) == list(netcfg.param_shapes()))
    _emit(_dump(doc), args.out)
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args):
    if not args.frames:
        raise ConfigError("simulate needs --frames DIR")
    doc = _load_json(args.config) if args.config else {"method": args.method or "v2e"}
    if args.method:
        doc = dict(doc, method=args.method)
    method, cfg = parse_simulator_config(doc, args.seed)
    frames = read_manifest(args.frames)
    log.info("simulating %d frames with %s", len(frames), method)
    stream = GENERATORS[method](frames, cfg)
    if not args.out:
        raise ConfigError("simulate needs --out")
    write_events(stream, args.out, args.format or "binary")
    summary = {"method": method, "out": args.out, **_stream_summary(stream)}
    if hasattr(cfg, "seed"):
        summary["seed"] = cfg.seed
    _emit(_dump(summary))
    return 0


# ---------------------------------------------------------------------------
# eqs


def _tensorize_config(args, streams):
    start = args.window_start
    if start is None:
        firsts = [int(s.t[0]) for s in streams if len(s)]
        start = min(firsts) if firsts else 0
    tcfg = TensorizeConfig(int(args.bins or 10), int(args.window_us or 50_000), int(start))
    steps = int(args.steps) if args.steps is not None else steps_to_cover(streams, tcfg)
    return tcfg, steps


def _patch_config(args):
    size = int(args.patch or 3)
    return PatchConfig((size, size, size), bool(args.include_hidden))


def _run_eqs(a, b, args, tcfg, steps):
    netcfg = NetworkConfig.for_bins(tcfg.num_bins)
    store, meta = _resolve_weights(args, netcfg)
    return eqs(a, b, store, tcfg, _patch_config(args), steps, netcfg, weights_meta=meta)


def cmd_eqs(args):
    a = _read_stream(args.stream_a, args)
    b = _read_stream(args.stream_b, args)
    tcfg, steps = _tensorize_config(args, [a, b])
    report = _run_eqs(a, b, args, tcfg, steps)
    text = report.to_json() + "\n"
    if args.out:
        _emit(text, args.out)
    sys.stdout.write(text)
    log.info("EQS = %.9f", report.eqs)
    return 0


# ---------------------------------------------------------------------------
# perturb / sweep


def _level_seed(seed, k):
    return int(keyed_rng(seed, "perturb.level", k).integers(0, 2**63 - 1))


def noise_for_level(level, k, args):
    return NoiseConfig(
        background_rate=float(level),
        rate_jitter=float(args.jitter if args.jitter is not None else 0.1),
        hot_pixel_count=int(round(level * float(args.hot_per_level if args.hot_per_level is not None else 1.0))),
        hot_pixel_rate=float(args.hot_rate if args.hot_rate is not None else 100.0),
        seed=_level_seed(int(args.seed or 0), k),
    )


def _perturb_window(base, args):
    t0 = int(base.t[0]) if len(base) else 0
    if args.duration_us is not None:
        return t0, int(args.duration_us)
    return t0, max(1, base.duration_us + 1)


def _perturbed(base, args):
    levels = _csv_floats(args.levels or DEFAULT_LEVELS)
    if any(v < 0 for v in levels):
        raise ConfigError("noise levels must be >= 0")
    t0, duration = _perturb_window(base, args)
    for k, level in enumerate(levels):
        yield k, level, perturb(base, noise_for_level(level, k, args), duration, t0)


def cmd_perturb(args):
    base = _read_stream(args.base, args)
    if not args.out_dir:
        raise ConfigError("perturb needs --out-dir")
    os.makedirs(args.out_dir, exist_ok=True)
    fmt = args.format or "binary"
    ext = "evs" if fmt == "binary" else "csv"
    rows = []
    for k, level, stream in _perturbed(base, args):
        path = os.path.join(args.out_dir, f"{args.prefix or 'perturbed'}_{k:02d}.{ext}")
        write_events(stream, path, fmt)
        rows.append({"index": k, "level": level, "path": path, "events": len(stream)})
    _emit(_dump({"base": args.base, "seed": int(args.seed or 0), "outputs": rows}), args.out)
    return 0


def cmd_sweep(args):
    base = _read_stream(args.base, args)
    tcfg, steps = _tensorize_config(args, [base])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["level", "events", "eqs"])
    levels, scores = [], []
    for _, level, stream in _perturbed(base, args):
        report = _run_eqs(base, stream, args, tcfg, steps)
        writer.writerow([repr(level), len(stream), repr(report.eqs)])
        levels.append(level)
        scores.append(report.eqs)
    _emit(buf.getvalue(), args.out)
    if len(levels) > 1 and len(set(scores)) > 1:
        rho = float(spearmanr(levels, scores)[0])
        print(f"spearman_rho={rho:.6f}", file=sys.stderr)
    else:
        print("spearman_rho=nan", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p):
    p.add_argument("--config", help="JSON file supplying defaults for this subcommand")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None, help="cap numeric library threads")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_stream_input(p):
    p.add_argument("--in-format", choices=["text", "binary"], default=None,
                   help="input event format (default: detect)")
    p.add_argument("--width", type=int, default=None, help="sensor width for text inputs")
    p.add_argument("--height", type=int, default=None, help="sensor height for text inputs")


def _add_metric(p):
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--window-us", dest="window_us", type=int, default=None)
    p.add_argument("--window-start", dest="window_start", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--include-hidden", dest="include_hidden", action="store_const", const=True, default=None)
    p.add_argument("--weights", default=None, help="EQW1 weight file")
    p.add_argument("--weights-seed", dest="weights_seed", type=int, default=None)


def _add_noise(p):
    p.add_argument("--levels", default=None, help=f"comma-separated background rates (default {DEFAULT_LEVELS})")
    p.add_argument("--jitter", type=float, default=None)
    p.add_argument("--hot-per-level", dest="hot_per_level", type=float, default=None)
    p.add_argument("--hot-rate", dest="hot_rate", type=float, default=None)
    p.add_argument("--duration-us", dest="duration_us", type=int, default=None)
    p.add_argument("--format", choices=["text", "binary"], default=None)


METRIC_KEYS = {"bins", "window_us", "window_start", "steps", "patch", "include_hidden", "weights",
               "weights_seed", "seed", "width", "height", "in_format"}
NOISE_KEYS = {"levels", "jitter", "hot_per_level", "hot_rate", "duration_us", "seed", "width", "height",
              "in_format", "format", "prefix", "out_dir"}


def build_parser():
    parser = _Parser(prog="eqstream", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"eqstream {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="frames -> events")
    _add_common(p)
    p.add_argument("--frames", required=False, help="frame manifest directory")
    p.add_argument("--method", default=None, help=f"one of {', '.join(sorted(METHODS))}")
    p.add_argument("--format", choices=["text", "binary"], default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eqs", help="Event Quality Score between two event files")
    _add_common(p)
    p.add_argument("stream_a")
    p.add_argument("stream_b")
    _add_stream_input(p)
    _add_metric(p)
    p.set_defaults(func=cmd_eqs, config_keys=METRIC_KEYS)

    p = sub.add_parser("perturb", help="write noise-perturbed copies of an event file")
    _add_common(p)
    p.add_argument("base")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--prefix", default=None)
    _add_stream_input(p)
    _add_noise(p)
    p.set_defaults(func=cmd_perturb, config_keys=NOISE_KEYS)

    p = sub.add_parser("sweep", help="CSV of EQS against noise level")
    _add_common(p)
    p.add_argument("base")
    _add_stream_input(p)
    _add_metric(p)
    _add_noise(p)
    p.set_defaults(func=cmd_sweep, config_keys=METRIC_KEYS | NOISE_KEYS)

    p = sub.add_parser("weights", help="initialize or inspect weight files")
    _add_common(p)
    p.add_argument("action", choices=["init", "inspect"])
    p.add_argument("path", nargs="?", default=None)
    p.add_argument("--bins", type=int, default=None)
    p.set_defaults(func=cmd_weights, config_keys={"bins", "seed"})
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:       # usage errors, --help, --version
        return exc.code or 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if hasattr(args, "config_keys"):
            _apply_config(args, args.config_keys)
        limits = threadpool_limits(limits=args.threads) if args.threads else contextlib.nullcontext()
        with limits:
            return args.func(args)
    except EqsError as exc:
        print(f"eqstream: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

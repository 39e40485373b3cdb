"""EQS against injected noise on the moving-bar clip, for several weight seeds.

    python scripts/noise_sweep.py [--levels 1,2,4,8,16] [--weight-seeds 0,1,2] [--method esim]

Prints one CSV row per (weight seed, level) and a Spearman rho per seed.
"""

import argparse
import os
import sys

from scipy.stats import spearmanr

from eqstream.cli import noise_for_level
from eqstream.events import TensorizeConfig
from eqstream.frames import read_manifest
from eqstream.lfs import eqs
from eqstream.nn import NetworkConfig, init_weights
from eqstream.simulators import perturb, simulate

HERE = os.path.dirname(os.path.abspath(__file__))
BAR = os.path.join(HERE, "..", "tests", "fixtures", "moving_bar")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", default=BAR)
    ap.add_argument("--method", default="esim")
    ap.add_argument("--levels", default="1,2,4,8,16")
    ap.add_argument("--weight-seeds", default="0,1,2")
    ap.add_argument("--jitter", type=float, default=0.1)
    ap.add_argument("--hot-per-level", type=float, default=1.0)
    ap.add_argument("--hot-rate", type=float, default=100.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bins", type=int, default=10)
    ap.add_argument("--window-us", type=int, default=50_000)
    args = ap.parse_args()

    levels = [float(v) for v in args.levels.split(",")]
    base = simulate(args.method, read_manifest(args.frames))
    start, duration = int(base.t[0]), base.duration_us + 1
    noisy = [perturb(base, noise_for_level(lv, k, args), duration, start) for k, lv in enumerate(levels)]
    tcfg = TensorizeConfig(args.bins, args.window_us, start)
    steps = -(-duration // args.window_us)
    netcfg = NetworkConfig.for_bins(args.bins)

    print("weight_seed,level,events,eqs")
    for wseed in (int(v) for v in args.weight_seeds.split(",")):
        w = init_weights(netcfg, wseed)
        scores = []
        for lv, stream in zip(levels, noisy):
            scores.append(eqs(base, stream, w, tcfg, num_steps=steps, netcfg=netcfg).eqs)
            print(f"{wseed},{lv},{len(stream)},{scores[-1]!r}")
        rho = spearmanr(levels, scores)[0] if len(levels) > 1 else float("nan")
        print(f"# weight seed {wseed}: spearman rho = {rho:+.3f}", file=sys.stderr)


if __name__ == "__main__":
    main()

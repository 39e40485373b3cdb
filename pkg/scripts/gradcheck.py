"""Finite-difference check of the end-to-end EQS gradient on small random tensors.

    python scripts/gradcheck.py [--size 8] [--steps 2] [--trials 3]
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests"))

from eqstream.lfs import PatchConfig, eqs_from_tensors, eqs_gradient  # noqa: E402
from eqstream.nn import NetworkConfig, init_weights  # noqa: E402
from reference_impl import finite_difference, rel_error  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=8)
    ap.add_argument("--steps", type=int, default=2)
    ap.add_argument("--channels", type=int, default=4)
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--h", type=float, default=1e-3)
    args = ap.parse_args()

    cfg = NetworkConfig(in_channels=args.channels, strides=(2, 2, 2), widths=(3, 3, 4))
    pcfg = PatchConfig((2, 2, 1))
    for trial in range(args.trials):
        rng = np.random.default_rng(trial)
        w = init_weights(cfg, trial)
        shape = (args.channels, args.size, args.size)
        ta = [rng.poisson(1.0, size=shape).astype(float) for _ in range(args.steps)]
        tb = [rng.poisson(1.0, size=shape).astype(float) for _ in range(args.steps)]
        value, grads = eqs_gradient(ta, tb, w, cfg, pcfg)
        errs = [rel_error(grads[k], finite_difference(lambda: eqs_from_tensors(ta, tb, w, cfg, pcfg).eqs,
                                                      ta[k], args.h)) for k in range(args.steps)]
        print(f"trial {trial}: eqs={value:.9f} |grad|max={max(np.abs(g).max() for g in grads):.2e} "
              f"rel_err={max(errs):.2e}")


if __name__ == "__main__":
    main()

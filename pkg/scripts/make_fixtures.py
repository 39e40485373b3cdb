"""Regenerate the committed test fixtures.

    python scripts/make_fixtures.py [--out tests/fixtures]

Writes ``moving_bar/``: a 64x64, 21-frame manifest of a bright bar sliding
right at 2 px per 5 ms frame.
"""

import argparse
import os

from eqstream.frames import write_manifest
from eqstream.synthetic import moving_bar_frames

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=os.path.join(HERE, "..", "tests", "fixtures"))
    args = ap.parse_args()
    target = os.path.join(args.out, "moving_bar")
    write_manifest(target, moving_bar_frames())
    print(f"wrote {target}")


if __name__ == "__main__":
    main()

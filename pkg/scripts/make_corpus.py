"""Write a synthetic test corpus for local experiments.

Real images are smooth noise; fakes carry a planted periodic lattice.
The output directory gets PNG files plus a manifest.csv ready for the
synthtrace subcommands.

Usage:
    python scripts/make_corpus.py data/corpus               # 100 real + 100 fake, 256px
    python scripts/make_corpus.py data/corpus --real 500 --fake 500 --seed 3
"""

import argparse
import sys
from pathlib import Path

from synthtrace.corpus import DEFAULT_GENERATOR, DEFAULT_GRID_AMPLITUDE, DEFAULT_PERIOD, write_corpus
from synthtrace.errors import SynthTraceError
from synthtrace.logger import setup_logging


def main() -> None:
    parser = argparse.ArgumentParser(description="Write a synthetic real/fake image corpus.")
    parser.add_argument("out_dir", type=Path, help="destination directory")
    parser.add_argument("--real", type=int, default=100, help="number of real images")
    parser.add_argument("--fake", type=int, default=100, help="number of synthetic images")
    parser.add_argument("--size", type=int, default=256, help="image side in pixels")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--channels", type=int, choices=(1, 3), default=1)
    parser.add_argument("--period", type=int, default=DEFAULT_PERIOD)
    parser.add_argument("--amplitude", type=float, default=DEFAULT_GRID_AMPLITUDE)
    parser.add_argument("--generator", default=DEFAULT_GENERATOR, help="generator name for fakes")
    args = parser.parse_args()

    setup_logging("info")
    try:
        write_corpus(
            args.out_dir, args.real, args.fake, args.size, args.seed,
            channels=args.channels, period=args.period,
            grid_amplitude=args.amplitude, generator=args.generator,
        )
    except (SynthTraceError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)
    print(f"Corpus written to {args.out_dir}")


if __name__ == "__main__":
    main()

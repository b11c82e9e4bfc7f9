"""Entry point for `python -m synthtrace`."""

from synthtrace.cli import main

main()

"""synthtrace: synthetic-image forensics toolkit.

Estimates generator fingerprints from noise residuals, simulates
social-network laundering, trains a frequency-analysis detector and
benchmarks detectors with per-generator Acc./AUC reports.
"""

from importlib.metadata import version, PackageNotFoundError

try:
    __version__ = version("synthtrace")
except PackageNotFoundError:
    __version__ = "0.0.0"

__app_name__ = "synthtrace"

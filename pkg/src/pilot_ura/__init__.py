"""Pilot-based unsourced random access over a many-antenna Rayleigh channel.

Link-level simulator (pilot pool, MMV-AMP activity detection, LMMSE channel
estimation, MRC, CRC-aided polar list decoding) plus the closed-form
finite-blocklength analysis that predicts its energy efficiency.
"""

from pilot_ura.pilots import DensePilots, PilotBook, build_pilot_book

__version__ = "0.1.0"

__all__ = ["DensePilots", "PilotBook", "build_pilot_book", "__version__"]

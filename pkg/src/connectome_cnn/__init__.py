"""Connectome classification toolkit: connectivity metrics, simulation, CCNN."""

import os

# TBB shipped with some numba wheels is too old and warns on first use.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"

"""Lightweight security primitives and a zone-based VANET simulator.

SNEP unicast sealing, μTESLA broadcast authentication over an RC5 core,
base-station zone handoff, and a deterministic discrete-event harness that
compares the secure stack against DSDV, GPSR and BMFR baselines.
"""

__version__ = "0.1.0"

"""Spin-photon interface readout simulator."""

__version__ = "0.1.0"

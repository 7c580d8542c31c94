"""Delay-Doppler link simulation and spectral-efficiency analysis for
OTFS cell-free massive MIMO, with an OFDM baseline."""

__version__ = "0.1.0"

"""Physically parameterized unfolded (M)OMP for MIMO-OFDM channel estimation."""

__version__ = "0.1.0"

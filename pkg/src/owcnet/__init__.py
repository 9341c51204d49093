"""Optical-wireless downlink simulator: channel tracing, exact user assignment,
failure experiments and PON backhaul analysis."""

__version__ = "0.1.0"

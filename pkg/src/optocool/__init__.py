"""Simulation and verification toolkit for optomechanical sideband cooling."""
__version__ = "0.1.0"

"""Nonlinear fiber simulation, classical DSP and learned z-spatial diversity receivers."""

__version__ = "0.1.0"

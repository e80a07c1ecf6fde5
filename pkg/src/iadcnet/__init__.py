"""Differentiable behavioral model of incremental Delta-Sigma converters.

Submodules: :mod:`core` (encoder/decoder), :mod:`constraints` (quantized
weights, capacitors, losses, kT/C noise), :mod:`metrics`, :mod:`baselines`,
:mod:`autodiff` and :mod:`harness` (training, sweeps, export, CLI).
"""

__version__ = "0.1.0"

"""Spin-system laboratory: exact and Monte Carlo reconstruction diagnostics
for Ising-type measures on finite graphs.

Subpackages map to the functional areas: graphs and random subsets,
measures and the product Fourier layer, Ising samplers, the exact
mean-field engine, the clue functional and its operators, block dynamics
spectra, Divide-and-Color analysis, and the experiment CLI.
"""

__version__ = "0.1.0"

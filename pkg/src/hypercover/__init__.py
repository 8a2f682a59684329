"""Numerical toolkit for random covers of the genus-2 Bolza surface:
geodesic catalogs, uniform surface-group homomorphisms into S_n, Selberg
transforms and Monte Carlo experiments on the twisted trace formula."""

__version__ = "0.1.0"

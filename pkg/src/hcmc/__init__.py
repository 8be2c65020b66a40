"""Monte Carlo uniform approximation on mixed-smoothness Sobolev spaces of the torus."""

__version__ = "0.1.0"

"""Continuum directed polymer in a Poissonian (Levy) environment."""
__version__ = "0.1.0"

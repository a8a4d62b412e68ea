"""Home-robot emergency response simulator and planning library."""

__version__ = "0.1.0"

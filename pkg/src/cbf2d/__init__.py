"""Mixed finite element solver for 2D convective Brinkman-Forchheimer flow."""

__version__ = "0.1.0"

"""Facility-usage scientometrics engine: novelty and interdisciplinarity
metrics, covariate construction, and high-dimensional fixed-effects
regression with marginal predictions."""

__version__ = "0.1.0"

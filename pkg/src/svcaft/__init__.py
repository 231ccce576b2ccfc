"""Bayesian AFT models with spatially varying coefficients."""

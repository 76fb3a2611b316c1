"""Functional Competing Risk Net: discrete-time competing-risks survival
modeling with neural hazard heads, adaptive basis layers for functional
covariates, gradient-based missing-value imputation, a synthetic data
generator, and IPCW Brier evaluation."""

__version__ = "0.1.0"

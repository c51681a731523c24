"""Dimer model on the Fisher lattice: exact observables, kernels and sampling."""
from .lattice import ModelParams, critical_anisotropy, independent_anisotropy, gamma_anisotropy

__all__ = ["ModelParams", "critical_anisotropy", "independent_anisotropy", "gamma_anisotropy"]
__version__ = "0.1.0"

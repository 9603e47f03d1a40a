"""Grouped-sparse Bayesian regression via projected posterior draws."""

from ._core import fit, fit_additive, group_lasso, version

__version__ = version()
__all__ = ["fit", "fit_additive", "group_lasso", "version", "__version__"]

"""Granularity-driven growth and fluctuation models.

Submodules: ``rngwalk`` (lattice random walks), ``lattice`` (autocatalytic
reaction-diffusion agents), ``levy`` (heavy-tailed flights and central-peak
scaling), ``sectors`` (multi-sector linear growth and shocks), ``fitkit``
(empirical estimators) and ``scenario``/``cli`` (scenario runner).
"""

__version__ = "0.1.0"

from mezo.errors import DefectiveMatrixError, NumericalError, ScenarioError

__all__ = ["DefectiveMatrixError", "NumericalError", "ScenarioError", "__version__"]

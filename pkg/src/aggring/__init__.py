"""Aggregation kernels, delta-ring similarity solutions and their collapse."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AggringError,
    ContractError,
    ConvergenceError,
    DomainError,
    ExcludedPointError,
    IntegrationError,
    RangeError,
    SearchError,
    SolveError,
)
from .kernel import KernelParams, Regime, phi, phi_prime, psi, regime  # noqa: E402
from .quadrature import QuadratureResult, quad_settings  # noqa: E402
from .rings import RingConfig, find_lambda, ratio_residual, solve_general, solve_geometric  # noqa: E402
from .series import psi_series  # noqa: E402

__all__ = [
    "AggringError", "ContractError", "ConvergenceError", "DomainError", "ExcludedPointError",
    "IntegrationError", "RangeError", "SearchError", "SolveError",
    "KernelParams", "Regime", "phi", "phi_prime", "psi", "regime",
    "QuadratureResult", "quad_settings",
    "RingConfig", "find_lambda", "ratio_residual", "solve_general", "solve_geometric",
    "psi_series",
]

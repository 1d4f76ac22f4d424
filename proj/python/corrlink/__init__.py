"""Correlation estimation from remote samples under one-way communication constraints."""

from ._corrlink import (  # noqa: F401
    ConfigError,
    CorrlinkError,
    DomainError,
    Q,
    Q_inv,
    estimate_threshold,
    exact_max_variance,
    exact_threshold_variance,
    fisher_threshold,
    geometric_entropy,
    geometric_entropy_inv,
    inverse_mills,
    laplace_theory,
    phi,
    run_sweep,
    sweep_csv,
    theory,
    threshold_for_bits,
    zhang_berger_optimal,
    zhang_berger_variance,
)

__all__ = [name for name in dir() if not name.startswith("_")]

# Copyright 2026 The NoiseFlow-cpp Authors
# SPDX-License-Identifier: Apache-2.0
"""Conditional normalizing-flow model of camera sensor noise."""

from ._core import (
    DEFAULT_ARCHITECTURE,
    PARAMETER_BUDGET,
    Dataset,
    Error,
    FlowModel,
    InputError,
    NumericError,
    generate_synthetic,
    likelihood_improvement,
    marginal_kl,
    nlf_nll,
)

__all__ = [
    "DEFAULT_ARCHITECTURE",
    "PARAMETER_BUDGET",
    "Dataset",
    "Error",
    "FlowModel",
    "InputError",
    "NumericError",
    "generate_synthetic",
    "likelihood_improvement",
    "marginal_kl",
    "nlf_nll",
]

# Copyright (c) 2026 geoshare contributors.
# SPDX-License-Identifier: Apache-2.0
"""Curvature-aligned cross-layer parameter sharing at desk scale."""

from ._geoshare import (  # noqa: F401
    Model,
    ablate,
    build_candidate_bases,
    check_automorphism,
    color_classes,
    compression_ratio,
    decompose,
    ellipsoid_axes,
    first_order_ratio,
    fit_coefficient,
    l2_clip,
    lanczos_top_eigs,
    quadratic_cost,
    reconstruct,
    run_experiment,
    run_oracles,
    share,
    svd_truncated,
    sym_eig_dense,
)

__all__ = [
    "Model",
    "ablate",
    "build_candidate_bases",
    "check_automorphism",
    "color_classes",
    "compression_ratio",
    "decompose",
    "ellipsoid_axes",
    "first_order_ratio",
    "fit_coefficient",
    "l2_clip",
    "lanczos_top_eigs",
    "quadratic_cost",
    "reconstruct",
    "run_experiment",
    "run_oracles",
    "share",
    "svd_truncated",
    "sym_eig_dense",
]

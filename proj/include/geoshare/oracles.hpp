// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "geoshare/curvature.hpp"
#include "geoshare/net.hpp"
#include "geoshare/sharing.hpp"

namespace geoshare::oracles {

/// Central-difference gradient of the loss, coordinate by coordinate.
/// Validation only; the main path never touches finite differences.
net::ModelParams fd_gradient(const net::ModelSpec& spec, const net::ModelParams& params,
                             const net::Batch& batch, double step = 1e-5);

/// Dense Hessian over the scope from central differences of exact gradients
/// (column probes).
linalg::DenseMatrix fd_hessian_from_gradients(const net::ModelSpec& spec,
                                              const net::ModelParams& params, const net::Batch& batch,
                                              net::Scope scope, double step = 1e-5);

/// Dense Hessian from loss values alone (4-point double central differences).
/// Slow and least accurate; the most independent route.
linalg::DenseMatrix fd_hessian_from_losses(const net::ModelSpec& spec,
                                           const net::ModelParams& params, const net::Batch& batch,
                                           net::Scope scope, double step = 1e-4);

/// Explicit projector matrix P = sum_j p_j p_j^T onto the bundle's span.
linalg::DenseMatrix explicit_projector(const curvature::MinorAxisBundle& bundle);

/// Analytic Hessian of the one-layer linear MSE model: identity (x) X^T X / n
/// over the row-major weight vector.
linalg::DenseMatrix analytic_linear_mse_hessian(const linalg::DenseMatrix& inputs, int output_dim);

/// Exhaustive search over all K^L colorings of the per-layer energy table
/// energies[l][b]; returns the minimal total and one minimizer (lowest
/// lexicographic assignment on ties).
struct ExhaustiveColoring {
    double total = 0.0;
    std::vector<int> assignment;
};
ExhaustiveColoring exhaustive_coloring_minimum(const std::vector<std::vector<double>>& energies);

/// Count coloring-preserving permutations by checking all L! of them.
unsigned long long exhaustive_automorphism_count(const sharing::Coloring& coloring);

/// Largest principal angle (radians) between the spans of two orthonormal
/// vector sets of equal size.
double subspace_max_principal_angle(const std::vector<std::vector<double>>& a,
                                    const std::vector<std::vector<double>>& b);

/// || P_a - P_b ||_F between the projectors of two orthonormal sets (spans
/// may have different sizes).
double projector_distance(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b);

}  // namespace geoshare::oracles

// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "geoshare/linalg.hpp"

namespace geoshare::curvature {

/// Top-t eigenpairs of a layer-wise Hessian: the high-curvature (minor-axis)
/// directions where the loss is most sensitive. `requested_t` records the
/// caller's ask when the best-effort policy kept fewer converged pairs.
struct MinorAxisBundle {
    int layer = -1;
    int t = 0;
    int requested_t = 0;
    std::vector<std::vector<double>> vectors;  // orthonormal
    std::vector<double> eigenvalues;           // descending
    std::vector<double> residuals;
    bool dense_path = false;  // true when computed from the probed dense Hessian
};

enum class UnconvergedPolicy { strict, best_effort };

struct MinorAxisOptions {
    linalg::LanczosConfig lanczos;
    UnconvergedPolicy policy = UnconvergedPolicy::best_effort;
    bool by_magnitude = false;       // select by |lambda| in indefinite regimes
    int dense_dimension_limit = 300; // <= limit: probe the dense matrix, exact eig
};

/// Extract the top-t minor axes of a symmetric operator. Small dimensions go
/// through the probed dense matrix and exact eigendecomposition; larger ones
/// through Lanczos on the matrix-free operator.
MinorAxisBundle minor_axes(const linalg::SymmetricOperator& op, int t,
                           const MinorAxisOptions& options = {}, int layer_index = -1);

/// delta split into the high-curvature projection (perp) and the flat
/// remainder (par): delta = par + perp with perp = sum_j <p_j, delta> p_j.
struct PerturbationSplit {
    std::vector<double> delta;
    std::vector<double> delta_par;
    std::vector<double> delta_perp;
    double energy_par = 0.0;   // ||delta_par||^2
    double energy_perp = 0.0;  // ||delta_perp||^2
};

PerturbationSplit decompose(std::span<const double> delta, const MinorAxisBundle& bundle);

/// Quadratic surrogate 1/2 <delta, H delta> via one operator application.
double quadratic_cost(std::span<const double> delta, const linalg::SymmetricOperator& op);

struct EnergySplit {
    double cost_par = 0.0;    // delta_par^T H delta_par
    double cost_perp = 0.0;   // delta_perp^T H delta_perp
    double cross_term = 0.0;  // 2 delta_par^T H delta_perp
};

/// Measures the energy split including the cross term, which vanishes only
/// for exact eigenvectors; with approximate bundles it is reported, not
/// assumed zero.
EnergySplit energy_split_check(const PerturbationSplit& split, const linalg::SymmetricOperator& op);

/// First-order-ratio diagnostic c = 2|grad . delta| / |delta^T H delta|.
/// Returns +infinity (flagged, no fault) when the quadratic term is zero.
double first_order_ratio(std::span<const double> grad, std::span<const double> delta,
                         const linalg::SymmetricOperator& op);

/// One semi-axis of the level set {x : 1/2 x^T H x = c}: length
/// sqrt(2c/lambda) along each eigenvector; non-positive curvature leaves the
/// axis flagged unbounded.
struct EllipsoidAxis {
    std::vector<double> direction;
    double semi_axis = 0.0;
    bool bounded = true;
};

std::vector<EllipsoidAxis> ellipsoid_axes(const linalg::EigenPairs& eigs, double level);

}  // namespace geoshare::curvature

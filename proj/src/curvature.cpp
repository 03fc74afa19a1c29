// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include "geoshare/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace geoshare::curvature {

using linalg::DenseMatrix;
using linalg::SymmetricOperator;

namespace {

/// Assemble the dense matrix by applying the operator to every basis vector.
DenseMatrix probe_dense(const SymmetricOperator& op) {
    const int n = op.dimension;
    DenseMatrix h(n, n);
    std::vector<double> e(n, 0.0);
    for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        const std::vector<double> col = op.apply(e);
        e[j] = 0.0;
        for (int i = 0; i < n; ++i) h(i, j) = col[i];
    }
    // symmetrize away rounding before the exact eigensolver
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double v = 0.5 * (h(i, j) + h(j, i));
            h(i, j) = v;
            h(j, i) = v;
        }
    return h;
}

}  // namespace

MinorAxisBundle minor_axes(const SymmetricOperator& op, int t, const MinorAxisOptions& options,
                           int layer_index) {
    if (t < 1 || t > op.dimension) throw std::invalid_argument("minor_axes: t out of range");
    MinorAxisBundle bundle;
    bundle.layer = layer_index;
    bundle.requested_t = t;

    linalg::EigenPairs pairs;
    if (op.dimension <= options.dense_dimension_limit) {
        pairs = linalg::sym_eig_dense(probe_dense(op));
        bundle.dense_path = true;
    } else {
        linalg::LanczosConfig cfg = options.lanczos;
        cfg.max_iters = std::max(cfg.max_iters, 2 * t);
        pairs = linalg::lanczos_top_eigs(op, t, cfg);
        if (options.by_magnitude) {
            // Lanczos converges at the spectrum extremes; the most negative
            // eigenvalues come from a run on the negated operator.
            SymmetricOperator neg;
            neg.dimension = op.dimension;
            neg.apply = [&op](std::span<const double> x) {
                std::vector<double> y = op.apply(x);
                for (double& v : y) v = -v;
                return y;
            };
            linalg::EigenPairs low = linalg::lanczos_top_eigs(neg, t, cfg);
            for (std::size_t k = 0; k < low.count(); ++k) {
                pairs.values.push_back(-low.values[k]);
                pairs.vectors.push_back(std::move(low.vectors[k]));
                pairs.residuals.push_back(low.residuals[k]);
                pairs.converged.push_back(low.converged[k]);
            }
        }
    }

    std::vector<int> order(pairs.count());
    std::iota(order.begin(), order.end(), 0);
    if (options.by_magnitude) {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return std::abs(pairs.values[a]) > std::abs(pairs.values[b]);
        });
    }

    for (int k : order) {
        if (static_cast<int>(bundle.vectors.size()) == t) break;
        if (!pairs.converged[k]) {
            if (options.policy == UnconvergedPolicy::strict)
                throw std::runtime_error("minor_axes: unconverged eigenpair under strict policy" +
                                         (layer_index >= 0 ? " (layer " + std::to_string(layer_index) + ")"
                                                           : std::string()));
            continue;  // best effort: keep converged pairs only
        }
        // the two-ended merge can hand back the same eigenvector twice
        bool duplicate = false;
        for (const auto& kept : bundle.vectors)
            if (std::abs(linalg::dot(kept, pairs.vectors[k])) > 0.5) {
                duplicate = true;
                break;
            }
        if (duplicate) continue;
        bundle.eigenvalues.push_back(pairs.values[k]);
        bundle.vectors.push_back(pairs.vectors[k]);
        bundle.residuals.push_back(pairs.residuals[k]);
    }
    bundle.t = static_cast<int>(bundle.vectors.size());
    if (bundle.t == 0) throw std::runtime_error("minor_axes: no converged eigenpairs");
    return bundle;
}

PerturbationSplit decompose(std::span<const double> delta, const MinorAxisBundle& bundle) {
    if (!bundle.vectors.empty() && delta.size() != bundle.vectors.front().size())
        throw std::invalid_argument("decompose: length mismatch");
    PerturbationSplit split;
    split.delta.assign(delta.begin(), delta.end());
    split.delta_perp.assign(delta.size(), 0.0);
    for (const auto& p : bundle.vectors) {
        const double c = linalg::dot(p, delta);
        linalg::axpy(c, p, split.delta_perp);
    }
    split.delta_par.resize(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i)
        split.delta_par[i] = split.delta[i] - split.delta_perp[i];
    split.energy_par = linalg::dot(split.delta_par, split.delta_par);
    split.energy_perp = linalg::dot(split.delta_perp, split.delta_perp);
    return split;
}

double quadratic_cost(std::span<const double> delta, const SymmetricOperator& op) {
    if (static_cast<int>(delta.size()) != op.dimension)
        throw std::invalid_argument("quadratic_cost: length mismatch");
    const std::vector<double> hd = op.apply(delta);
    return 0.5 * linalg::dot(delta, hd);
}

EnergySplit energy_split_check(const PerturbationSplit& split, const SymmetricOperator& op) {
    EnergySplit out;
    const std::vector<double> h_par = op.apply(split.delta_par);
    const std::vector<double> h_perp = op.apply(split.delta_perp);
    out.cost_par = linalg::dot(split.delta_par, h_par);
    out.cost_perp = linalg::dot(split.delta_perp, h_perp);
    out.cross_term = 2.0 * linalg::dot(split.delta_par, h_perp);
    return out;
}

double first_order_ratio(std::span<const double> grad, std::span<const double> delta,
                         const SymmetricOperator& op) {
    if (grad.size() != delta.size() || static_cast<int>(delta.size()) != op.dimension)
        throw std::invalid_argument("first_order_ratio: length mismatch");
    const double quad = 2.0 * quadratic_cost(delta, op);  // delta^T H delta
    const double lin = linalg::dot(grad, delta);
    if (quad == 0.0) return std::numeric_limits<double>::infinity();
    return 2.0 * std::abs(lin) / std::abs(quad);
}

std::vector<EllipsoidAxis> ellipsoid_axes(const linalg::EigenPairs& eigs, double level) {
    if (level <= 0.0) throw std::invalid_argument("ellipsoid_axes: level must be positive");
    std::vector<EllipsoidAxis> axes;
    axes.reserve(eigs.count());
    for (std::size_t k = 0; k < eigs.count(); ++k) {
        EllipsoidAxis axis;
        axis.direction = eigs.vectors[k];
        if (eigs.values[k] > 0.0) {
            axis.semi_axis = std::sqrt(2.0 * level / eigs.values[k]);
        } else {
            axis.semi_axis = std::numeric_limits<double>::infinity();
            axis.bounded = false;
        }
        axes.push_back(std::move(axis));
    }
    return axes;
}

}  // namespace geoshare::curvature

// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "geoshare/linalg.hpp"
#include "geoshare/net.hpp"

namespace geoshare::sharing {

/// Single-layer sharing: a bipartite connectivity graph whose edges carry
/// color ids, with one shared parameter per color.
struct EdgeColoredLayer {
    struct Edge {
        int in;
        int out;
    };
    int n_in = 0;
    int n_out = 0;
    std::vector<Edge> edges;
    std::vector<int> edge_color;        // parallel to edges
    std::map<int, double> theta;        // color id -> shared parameter
    net::Activation activation = net::Activation::identity;

    void validate() const;
};

/// y_m = sigma( sum over edges (n,m) of theta[color(n,m)] * x_n )
std::vector<double> edge_shared_forward(const EdgeColoredLayer& layer, std::span<const double> x);

/// Orthonormal factor pair shared across layers; a client layer's weight is
/// rebuilt as U S V^T with its own r x r coefficient S.
struct SharedBasis {
    int id = 0;
    linalg::DenseMatrix u;  // M x r
    linalg::DenseMatrix v;  // N x r
    int rank() const { return u.cols(); }

    void validate() const;  // orthonormal columns within 1e-8
};

/// Least-squares coefficient for W within the basis subspaces. With
/// orthonormal factors the minimizer is U^T W V in closed form. The diagonal
/// mode restricts S to its diagonal (for storage parity with baselines that
/// share diagonal coefficients).
linalg::DenseMatrix fit_coefficient(const linalg::DenseMatrix& w, const SharedBasis& basis,
                                    bool diagonal_coeff = false);

linalg::DenseMatrix reconstruct(const SharedBasis& basis, const linalg::DenseMatrix& coeff);

enum class BasisStrategy { per_layer_svd, mean_svd, spectral_cluster };

std::string basis_strategy_name(BasisStrategy s);
BasisStrategy basis_strategy_from_name(const std::string& name);

/// Build K candidate bases for one shape group. All weights must share one
/// (M, N) shape; grouping heterogeneous layers is the caller's job.
///  - per_layer_svd: top-r subspaces of K evenly spaced seed layers
///  - mean_svd: consecutive rank-r singular blocks of the group mean
///  - spectral_cluster: k-means on vectorized weights, then SVD of the
///    cluster means (the default used by the experiment harness)
std::vector<SharedBasis> build_candidate_bases(const std::vector<linalg::DenseMatrix>& weights,
                                               int num_bases, int rank, BasisStrategy strategy,
                                               std::uint64_t seed);

/// Total map from layer index (0-based) to basis id.
struct Coloring {
    std::vector<int> assignment;

    int num_layers() const { return static_cast<int>(assignment.size()); }
};

struct ColorClasses {
    std::map<int, std::vector<int>> classes;  // basis id -> sorted layer indices
    unsigned long long automorphism_order = 1;
    std::vector<int> factor_sizes;            // class sizes, sorted descending
};

/// Partition layers by assigned basis; the automorphism group of the
/// layer-basis graph is the direct product of symmetric groups on the
/// classes, so its order is the product of class-size factorials.
ColorClasses color_classes(const Coloring& coloring, int num_layers);

/// True iff the permutation preserves the coloring pointwise:
/// assignment[pi[l]] == assignment[l] for all l.
bool check_automorphism(const Coloring& coloring, std::span<const int> pi);

/// 1 - shared/dense parameter count. Shared storage counts each used basis
/// once ((M+N)*r) plus one coefficient per layer (r*r, or r in diagonal
/// mode). Negative ratios (no compression possible) are parameter errors.
double compression_ratio(const std::vector<std::pair<int, int>>& shapes, const Coloring& coloring,
                         int rank, bool diagonal_coeff = false);

// Stable-field-order JSON for diffability:
// {"layers": L, "assignment": [...], "rank": r, "basis_strategy": name, "seed": n}
std::string coloring_to_json(const Coloring& coloring, int rank, BasisStrategy strategy,
                             std::uint64_t seed);
Coloring coloring_from_json(const std::string& text);

}  // namespace geoshare::sharing

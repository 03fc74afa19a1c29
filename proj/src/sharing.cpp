// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include "geoshare/sharing.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace geoshare::sharing {

using linalg::DenseMatrix;

void EdgeColoredLayer::validate() const {
    if (n_in < 1 || n_out < 1) throw std::invalid_argument("EdgeColoredLayer: dimensions must be positive");
    if (edges.size() != edge_color.size())
        throw std::invalid_argument("EdgeColoredLayer: one color per edge required");
    for (const Edge& e : edges)
        if (e.in < 0 || e.in >= n_in || e.out < 0 || e.out >= n_out)
            throw std::invalid_argument("EdgeColoredLayer: edge endpoint out of range");
}

std::vector<double> edge_shared_forward(const EdgeColoredLayer& layer, std::span<const double> x) {
    layer.validate();
    if (static_cast<int>(x.size()) != layer.n_in)
        throw std::invalid_argument("edge_shared_forward: input length mismatch");
    std::vector<double> pre(layer.n_out, 0.0);
    for (std::size_t k = 0; k < layer.edges.size(); ++k) {
        const auto it = layer.theta.find(layer.edge_color[k]);
        if (it == layer.theta.end())
            throw std::runtime_error("edge_shared_forward: no parameter for color " +
                                     std::to_string(layer.edge_color[k]));
        pre[layer.edges[k].out] += it->second * x[layer.edges[k].in];
    }
    for (double& v : pre) {
        switch (layer.activation) {
            case net::Activation::identity: break;
            case net::Activation::tanh_act: v = std::tanh(v); break;
            case net::Activation::softplus: v = std::log1p(std::exp(8.0 * v)) / 8.0; break;
        }
    }
    return pre;
}

void SharedBasis::validate() const {
    if (rank() < 1) throw std::invalid_argument("SharedBasis: rank must be positive");
    if (v.cols() != rank()) throw std::invalid_argument("SharedBasis: factor ranks disagree");
    auto check_orthonormal = [](const DenseMatrix& f, const char* name) {
        const DenseMatrix g = f.transposed() * f;
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j)
                if (std::abs(g(i, j) - (i == j ? 1.0 : 0.0)) > 1e-8)
                    throw std::invalid_argument(std::string("SharedBasis: ") + name +
                                                " columns are not orthonormal");
    };
    check_orthonormal(u, "U");
    check_orthonormal(v, "V");
}

DenseMatrix fit_coefficient(const DenseMatrix& w, const SharedBasis& basis, bool diagonal_coeff) {
    if (w.rows() != basis.u.rows() || w.cols() != basis.v.rows())
        throw std::invalid_argument("fit_coefficient: weight shape does not match basis");
    DenseMatrix s = basis.u.transposed() * w * basis.v;
    if (diagonal_coeff) {
        for (int i = 0; i < s.rows(); ++i)
            for (int j = 0; j < s.cols(); ++j)
                if (i != j) s(i, j) = 0.0;
    }
    return s;
}

DenseMatrix reconstruct(const SharedBasis& basis, const DenseMatrix& coeff) {
    if (coeff.rows() != basis.rank() || coeff.cols() != basis.rank())
        throw std::invalid_argument("reconstruct: coefficient must be rank x rank");
    return basis.u * coeff * basis.v.transposed();
}

std::string basis_strategy_name(BasisStrategy s) {
    switch (s) {
        case BasisStrategy::per_layer_svd: return "per-layer-svd";
        case BasisStrategy::mean_svd: return "mean-svd";
        case BasisStrategy::spectral_cluster: return "spectral-cluster";
    }
    throw std::logic_error("unreachable");
}

BasisStrategy basis_strategy_from_name(const std::string& name) {
    if (name == "per-layer-svd") return BasisStrategy::per_layer_svd;
    if (name == "mean-svd") return BasisStrategy::mean_svd;
    if (name == "spectral-cluster") return BasisStrategy::spectral_cluster;
    throw std::invalid_argument("unknown basis strategy: " + name);
}

namespace {

/// Deterministic seeded k-means(++) on vectorized weights. Ties in the
/// assignment step go to the lowest cluster index; an emptied cluster is
/// reseeded with the farthest point (lowest layer index on ties).
std::vector<int> kmeans_assign(const std::vector<DenseMatrix>& weights, int k, std::uint64_t seed) {
    const int n = static_cast<int>(weights.size());
    const std::size_t dim = weights[0].size();
    Rng rng(mix_seed(seed, 0x6b6d));

    std::vector<std::vector<double>> centers;
    auto dist2 = [&](const DenseMatrix& w, const std::vector<double>& c) {
        double s = 0.0;
        const auto& v = w.vec();
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = v[i] - c[i];
            s += d * d;
        }
        return s;
    };

    // k-means++ seeding
    const int first = static_cast<int>(rng.uniform_index(n));
    centers.emplace_back(weights[first].vec().begin(), weights[first].vec().end());
    while (static_cast<int>(centers.size()) < k) {
        std::vector<double> d2(n);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = dist2(weights[i], centers[0]);
            for (std::size_t c = 1; c < centers.size(); ++c)
                best = std::min(best, dist2(weights[i], centers[c]));
            d2[i] = best;
            total += best;
        }
        int pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<int>(rng.uniform_index(n));
        }
        centers.emplace_back(weights[pick].vec().begin(), weights[pick].vec().end());
    }

    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bestd = dist2(weights[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = dist2(weights[i], centers[c]);
                if (d < bestd) {
                    bestd = d;
                    best = c;
                }
            }
            if (best != assign[i]) {
                assign[i] = best;
                changed = true;
            }
        }
        // recompute centers; reseed empty clusters with the farthest point
        for (int c = 0; c < k; ++c) {
            std::vector<double> mean(dim, 0.0);
            int count = 0;
            for (int i = 0; i < n; ++i) {
                if (assign[i] != c) continue;
                const auto& v = weights[i].vec();
                for (std::size_t j = 0; j < dim; ++j) mean[j] += v[j];
                ++count;
            }
            if (count > 0) {
                for (double& x : mean) x /= count;
                centers[c] = std::move(mean);
            } else {
                int far = 0;
                double fard = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = dist2(weights[i], centers[assign[i]]);
                    if (d > fard) {
                        fard = d;
                        far = i;
                    }
                }
                centers[c].assign(weights[far].vec().begin(), weights[far].vec().end());
                assign[far] = c;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return assign;
}

DenseMatrix group_mean(const std::vector<DenseMatrix>& weights, const std::vector<int>& members) {
    DenseMatrix mean(weights[0].rows(), weights[0].cols());
    for (int i : members) {
        const auto& v = weights[i].vec();
        for (std::size_t j = 0; j < v.size(); ++j) mean.data()[j] += v[j];
    }
    for (double& x : mean.data()) x /= static_cast<double>(members.size());
    return mean;
}

SharedBasis basis_from_matrix(int id, const DenseMatrix& m, int rank) {
    const linalg::SvdResult svd = linalg::svd_truncated(m, rank);
    return SharedBasis{id, svd.u, svd.v};
}

}  // namespace

std::vector<SharedBasis> build_candidate_bases(const std::vector<DenseMatrix>& weights,
                                               int num_bases, int rank, BasisStrategy strategy,
                                               std::uint64_t seed) {
    if (weights.empty()) throw std::invalid_argument("build_candidate_bases: no weights");
    if (num_bases < 1) throw std::invalid_argument("build_candidate_bases: need at least one basis");
    const int rows = weights[0].rows();
    const int cols = weights[0].cols();
    for (const auto& w : weights)
        if (w.rows() != rows || w.cols() != cols)
            throw std::invalid_argument("build_candidate_bases: heterogeneous shapes in one group");
    if (rank < 1 || rank > std::min(rows, cols))
        throw std::invalid_argument("build_candidate_bases: rank out of range");

    const int n = static_cast<int>(weights.size());
    std::vector<SharedBasis> bases;
    switch (strategy) {
        case BasisStrategy::per_layer_svd: {
            for (int b = 0; b < num_bases; ++b) {
                const int layer = static_cast<int>(static_cast<long long>(b) * n / num_bases);
                bases.push_back(basis_from_matrix(b, weights[layer], rank));
            }
            break;
        }
        case BasisStrategy::mean_svd: {
            if (num_bases * rank > std::min(rows, cols))
                throw std::invalid_argument(
                    "build_candidate_bases: mean-svd needs num_bases*rank <= min(M,N)");
            std::vector<int> all(n);
            for (int i = 0; i < n; ++i) all[i] = i;
            const DenseMatrix mean = group_mean(weights, all);
            const linalg::SvdResult svd = linalg::svd_truncated(mean, num_bases * rank);
            for (int b = 0; b < num_bases; ++b) {
                DenseMatrix u(rows, rank), v(cols, rank);
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < rank; ++j) u(i, j) = svd.u(i, b * rank + j);
                for (int i = 0; i < cols; ++i)
                    for (int j = 0; j < rank; ++j) v(i, j) = svd.v(i, b * rank + j);
                bases.push_back(SharedBasis{b, std::move(u), std::move(v)});
            }
            break;
        }
        case BasisStrategy::spectral_cluster: {
            const std::vector<int> assign = kmeans_assign(weights, num_bases, seed);
            for (int b = 0; b < num_bases; ++b) {
                std::vector<int> members;
                for (int i = 0; i < n; ++i)
                    if (assign[i] == b) members.push_back(i);
                if (members.empty()) members.push_back(b % n);  // degenerate cluster fallback
                bases.push_back(basis_from_matrix(b, group_mean(weights, members), rank));
            }
            break;
        }
    }
    return bases;
}

ColorClasses color_classes(const Coloring& coloring, int num_layers) {
    if (coloring.num_layers() != num_layers)
        throw std::invalid_argument("color_classes: assignment must be total on the layer set");
    ColorClasses out;
    for (int l = 0; l < num_layers; ++l) out.classes[coloring.assignment[l]].push_back(l);
    unsigned long long order = 1;
    for (auto& [basis, members] : out.classes) {
        std::sort(members.begin(), members.end());
        const std::size_t size = members.size();
        if (size > 20) throw std::overflow_error("color_classes: class too large for exact order");
        unsigned long long fact = 1;
        for (std::size_t i = 2; i <= size; ++i) fact *= i;
        order *= fact;
        out.factor_sizes.push_back(static_cast<int>(size));
    }
    std::sort(out.factor_sizes.rbegin(), out.factor_sizes.rend());
    out.automorphism_order = order;
    return out;
}

bool check_automorphism(const Coloring& coloring, std::span<const int> pi) {
    const int n = coloring.num_layers();
    if (static_cast<int>(pi.size()) != n)
        throw std::invalid_argument("check_automorphism: permutation length mismatch");
    std::vector<bool> seen(n, false);
    for (int p : pi) {
        if (p < 0 || p >= n || seen[p])
            throw std::invalid_argument("check_automorphism: not a bijection on the layer set");
        seen[p] = true;
    }
    for (int l = 0; l < n; ++l)
        if (coloring.assignment[pi[l]] != coloring.assignment[l]) return false;
    return true;
}

double compression_ratio(const std::vector<std::pair<int, int>>& shapes, const Coloring& coloring,
                         int rank, bool diagonal_coeff) {
    const int n = static_cast<int>(shapes.size());
    if (coloring.num_layers() != n)
        throw std::invalid_argument("compression_ratio: shapes and coloring disagree");
    if (rank < 1) throw std::invalid_argument("compression_ratio: rank must be positive");

    // each used basis is stored once; its shape must be consistent across clients
    std::map<int, std::pair<int, int>> basis_shape;
    long long dense = 0;
    for (int l = 0; l < n; ++l) {
        const auto [m, nn] = shapes[l];
        if (rank > std::min(m, nn))
            throw std::invalid_argument("compression_ratio: rank exceeds layer shape");
        dense += static_cast<long long>(m) * nn;
        const int b = coloring.assignment[l];
        auto it = basis_shape.find(b);
        if (it == basis_shape.end()) {
            basis_shape[b] = {m, nn};
        } else if (it->second != std::make_pair(m, nn)) {
            throw std::invalid_argument("compression_ratio: basis clients have inconsistent shapes");
        }
    }
    long long shared = 0;
    for (const auto& [b, shape] : basis_shape)
        shared += static_cast<long long>(shape.first + shape.second) * rank;
    const long long per_layer = diagonal_coeff ? rank : static_cast<long long>(rank) * rank;
    shared += per_layer * n;

    const double ratio = 1.0 - static_cast<double>(shared) / static_cast<double>(dense);
    if (ratio < 0.0)
        throw std::invalid_argument("compression_ratio: sharing stores more than dense (ratio < 0)");
    return ratio;
}

std::string coloring_to_json(const Coloring& coloring, int rank, BasisStrategy strategy,
                             std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["layers"] = coloring.num_layers();
    j["assignment"] = coloring.assignment;
    j["rank"] = rank;
    j["basis_strategy"] = basis_strategy_name(strategy);
    j["seed"] = seed;
    return j.dump(2);
}

Coloring coloring_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    Coloring c;
    c.assignment = j.at("assignment").get<std::vector<int>>();
    if (j.at("layers").get<int>() != c.num_layers())
        throw std::invalid_argument("coloring_from_json: layer count mismatch");
    return c;
}

}  // namespace geoshare::sharing

// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include "geoshare/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace geoshare::oracles {

using linalg::DenseMatrix;

namespace {

int scope_dim(const net::ModelSpec& spec, net::Scope scope) {
    return scope.is_all() ? spec.total_param_count() : spec.layer_param_count(scope.layer);
}

net::ModelParams perturbed(const net::ModelSpec& spec, const net::ModelParams& params,
                           net::Scope scope, int index, double amount) {
    net::ModelParams p = params;
    if (scope.is_all()) {
        std::vector<double> flat = p.to_flat();
        flat[index] += amount;
        return net::ModelParams::from_flat(spec, flat);
    }
    p.weights[scope.layer].data()[index] += amount;
    return p;
}

}  // namespace

net::ModelParams fd_gradient(const net::ModelSpec& spec, const net::ModelParams& params,
                             const net::Batch& batch, double step) {
    const int dim = spec.total_param_count();
    std::vector<double> g(dim);
    for (int i = 0; i < dim; ++i) {
        const double lp = net::loss(spec, perturbed(spec, params, net::Scope::all(), i, step), batch);
        const double lm = net::loss(spec, perturbed(spec, params, net::Scope::all(), i, -step), batch);
        g[i] = (lp - lm) / (2.0 * step);
    }
    return net::ModelParams::from_flat(spec, g);
}

linalg::DenseMatrix fd_hessian_from_gradients(const net::ModelSpec& spec,
                                              const net::ModelParams& params, const net::Batch& batch,
                                              net::Scope scope, double step) {
    const int dim = scope_dim(spec, scope);
    DenseMatrix h(dim, dim);
    for (int j = 0; j < dim; ++j) {
        const net::ModelParams gp =
            net::gradient(spec, perturbed(spec, params, scope, j, step), batch);
        const net::ModelParams gm =
            net::gradient(spec, perturbed(spec, params, scope, j, -step), batch);
        std::vector<double> col;
        if (scope.is_all()) {
            const std::vector<double> fp = gp.to_flat();
            const std::vector<double> fm = gm.to_flat();
            col.resize(dim);
            for (int i = 0; i < dim; ++i) col[i] = (fp[i] - fm[i]) / (2.0 * step);
        } else {
            const auto& wp = gp.weights[scope.layer].vec();
            const auto& wm = gm.weights[scope.layer].vec();
            col.resize(dim);
            for (int i = 0; i < dim; ++i) col[i] = (wp[i] - wm[i]) / (2.0 * step);
        }
        for (int i = 0; i < dim; ++i) h(i, j) = col[i];
    }
    // symmetrize rounding noise
    for (int i = 0; i < dim; ++i)
        for (int j = i + 1; j < dim; ++j) {
            const double v = 0.5 * (h(i, j) + h(j, i));
            h(i, j) = v;
            h(j, i) = v;
        }
    return h;
}

linalg::DenseMatrix fd_hessian_from_losses(const net::ModelSpec& spec,
                                           const net::ModelParams& params, const net::Batch& batch,
                                           net::Scope scope, double step) {
    const int dim = scope_dim(spec, scope);
    DenseMatrix h(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = i; j < dim; ++j) {
            double value;
            if (i == j) {
                const double l0 = net::loss(spec, params, batch);
                const double lp = net::loss(spec, perturbed(spec, params, scope, i, step), batch);
                const double lm = net::loss(spec, perturbed(spec, params, scope, i, -step), batch);
                value = (lp - 2.0 * l0 + lm) / (step * step);
            } else {
                const auto shift2 = [&](double a, double b) {
                    net::ModelParams p = perturbed(spec, params, scope, i, a);
                    p = perturbed(spec, p, scope, j, b);
                    return net::loss(spec, p, batch);
                };
                value = (shift2(step, step) - shift2(step, -step) - shift2(-step, step) +
                         shift2(-step, -step)) /
                        (4.0 * step * step);
            }
            h(i, j) = value;
            h(j, i) = value;
        }
    }
    return h;
}

linalg::DenseMatrix explicit_projector(const curvature::MinorAxisBundle& bundle) {
    if (bundle.vectors.empty()) throw std::invalid_argument("explicit_projector: empty bundle");
    const int n = static_cast<int>(bundle.vectors.front().size());
    DenseMatrix p(n, n);
    for (const auto& v : bundle.vectors)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) p(i, j) += v[i] * v[j];
    return p;
}

linalg::DenseMatrix analytic_linear_mse_hessian(const DenseMatrix& inputs, int output_dim) {
    const int n = inputs.rows();
    const int d = inputs.cols();
    DenseMatrix gram(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k) s += inputs(k, i) * inputs(k, j);
            gram(i, j) = s / n;
        }
    const int dim = output_dim * d;
    DenseMatrix h(dim, dim);
    for (int o = 0; o < output_dim; ++o)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) h(o * d + i, o * d + j) = gram(i, j);
    return h;
}

ExhaustiveColoring exhaustive_coloring_minimum(const std::vector<std::vector<double>>& energies) {
    if (energies.empty()) throw std::invalid_argument("exhaustive_coloring_minimum: empty table");
    const int L = static_cast<int>(energies.size());
    const int K = static_cast<int>(energies.front().size());
    for (const auto& row : energies)
        if (static_cast<int>(row.size()) != K)
            throw std::invalid_argument("exhaustive_coloring_minimum: ragged table");

    std::vector<int> current(L, 0);
    ExhaustiveColoring best;
    bool have_best = false;
    while (true) {
        double total = 0.0;
        for (int l = 0; l < L; ++l) total += energies[l][current[l]];
        if (!have_best || total < best.total) {
            best.total = total;
            best.assignment = current;
            have_best = true;
        }
        int pos = L - 1;
        while (pos >= 0 && current[pos] == K - 1) current[pos--] = 0;
        if (pos < 0) break;
        ++current[pos];
    }
    return best;
}

unsigned long long exhaustive_automorphism_count(const sharing::Coloring& coloring) {
    const int n = coloring.num_layers();
    std::vector<int> pi(n);
    for (int i = 0; i < n; ++i) pi[i] = i;
    unsigned long long count = 0;
    do {
        if (sharing::check_automorphism(coloring, pi)) ++count;
    } while (std::next_permutation(pi.begin(), pi.end()));
    return count;
}

double subspace_max_principal_angle(const std::vector<std::vector<double>>& a,
                                    const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("subspace_max_principal_angle: sets must match in size");
    const int k = static_cast<int>(a.size());
    DenseMatrix overlap(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) overlap(i, j) = linalg::dot(a[i], b[j]);
    const linalg::SvdResult svd = linalg::svd_truncated(overlap, k);
    const double smin = std::clamp(svd.sigma.back(), -1.0, 1.0);
    return std::acos(smin);
}

double projector_distance(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("projector_distance: empty set");
    const int n = static_cast<int>(a.front().size());
    DenseMatrix pa(n, n), pb(n, n);
    for (const auto& v : a)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) pa(i, j) += v[i] * v[j];
    for (const auto& v : b)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) pb(i, j) += v[i] * v[j];
    return (pa - pb).frobenius_norm();
}

}  // namespace geoshare::oracles

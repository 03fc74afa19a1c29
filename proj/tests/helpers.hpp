// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "geoshare/linalg.hpp"
#include "geoshare/net.hpp"

namespace geoshare::testing {

inline linalg::DenseMatrix random_symmetric(int n, Rng& rng) {
    const linalg::DenseMatrix g = linalg::DenseMatrix::gaussian(n, n, rng);
    linalg::DenseMatrix h(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) h(i, j) = 0.5 * (g(i, j) + g(j, i));
    return h;
}

/// Symmetric matrix with a prescribed spectrum (random orthogonal frame).
inline linalg::DenseMatrix with_spectrum(const std::vector<double>& eigenvalues, Rng& rng) {
    const int n = static_cast<int>(eigenvalues.size());
    // Gram-Schmidt on a gaussian draw
    linalg::DenseMatrix q(n, n);
    for (int col = 0; col < n; ++col) {
        std::vector<double> v(n);
        for (double& x : v) x = rng.gaussian();
        for (int prev = 0; prev < col; ++prev) {
            double d = 0.0;
            for (int i = 0; i < n; ++i) d += v[i] * q(i, prev);
            for (int i = 0; i < n; ++i) v[i] -= d * q(i, prev);
        }
        const double nv = linalg::norm2(v);
        for (int i = 0; i < n; ++i) q(i, col) = v[i] / nv;
    }
    linalg::DenseMatrix h(n, n);
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) h(i, j) += eigenvalues[k] * q(i, k) * q(j, k);
    return h;
}

inline std::vector<double> random_vector(int n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

/// One-layer linear MSE model whose loss is exactly quadratic in the weight.
struct LinearModel {
    net::ModelSpec spec;
    net::ModelParams params;
    net::Batch batch;
};

inline LinearModel make_linear_model(int d_in, int d_out, int n, std::uint64_t seed,
                                     bool at_minimum = false) {
    LinearModel m;
    m.spec.layer_dims = {d_in, d_out};
    m.spec.activation = net::Activation::identity;
    m.spec.loss_kind = net::LossKind::mse;
    Rng rng(mix_seed(seed, 0x11));
    m.params = net::ModelParams::gaussian_init(m.spec, seed, 1.0);
    m.batch.inputs = linalg::DenseMatrix::gaussian(n, d_in, rng);
    if (at_minimum) {
        m.batch.targets = net::predict(m.spec, m.params, m.batch.inputs);  // residual zero
    } else {
        m.batch.targets = linalg::DenseMatrix::gaussian(n, d_out, rng);
    }
    return m;
}

}  // namespace geoshare::testing

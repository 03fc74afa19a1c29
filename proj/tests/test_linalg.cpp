// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "geoshare/linalg.hpp"
#include "helpers.hpp"

using namespace geoshare;
using linalg::DenseMatrix;

namespace {

DenseMatrix reconstruct_svd(const linalg::SvdResult& svd) {
    const int r = static_cast<int>(svd.sigma.size());
    DenseMatrix s(r, r);
    for (int i = 0; i < r; ++i) s(i, i) = svd.sigma[i];
    return svd.u * s * svd.v.transposed();
}

/// Full singular values of A through the Gram-matrix eigendecomposition;
/// independent of the one-sided-Jacobi path under test.
std::vector<double> gram_singular_values(const DenseMatrix& a) {
    const DenseMatrix gram = a.transposed() * a;
    const linalg::EigenPairs eig = linalg::sym_eig_dense(gram);
    std::vector<double> sv;
    for (double v : eig.values) sv.push_back(std::sqrt(std::max(0.0, v)));
    return sv;
}

}  // namespace

TEST_CASE("svd_truncated identity and rank-1 cases") {
    const DenseMatrix eye = DenseMatrix::identity(3);
    const linalg::SvdResult s3 = linalg::svd_truncated(eye, 3);
    for (double sv : s3.sigma) CHECK(sv == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((reconstruct_svd(s3) - eye).frobenius_norm() < 1e-12);

    // unit rank-1 outer product
    Rng rng(3);
    std::vector<double> u = testing::random_vector(5, rng);
    std::vector<double> v = testing::random_vector(4, rng);
    const double nu = linalg::norm2(u), nv = linalg::norm2(v);
    DenseMatrix a(5, 4);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) a(i, j) = (u[i] / nu) * (v[j] / nv);
    const linalg::SvdResult s1 = linalg::svd_truncated(a, 1);
    CHECK(s1.sigma[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((reconstruct_svd(s1) - a).frobenius_norm() < 1e-12);
}

TEST_CASE("svd_truncated rank-3 error matches the Gram-matrix oracle") {
    Rng rng(11);
    const DenseMatrix a = DenseMatrix::gaussian(8, 6, rng);
    const linalg::SvdResult s = linalg::svd_truncated(a, 3);
    const double err = (reconstruct_svd(s) - a).frobenius_norm();
    const std::vector<double> sv = gram_singular_values(a);
    const double expected = std::sqrt(sv[3] * sv[3] + sv[4] * sv[4] + sv[5] * sv[5]);
    CHECK(err == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("svd_truncated error is non-increasing in rank") {
    Rng rng(12);
    const DenseMatrix a = DenseMatrix::gaussian(7, 5, rng);
    double prev = 1e300;
    for (int r = 1; r <= 5; ++r) {
        const double err = (reconstruct_svd(linalg::svd_truncated(a, r)) - a).frobenius_norm();
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
    CHECK(prev < 1e-8 * a.frobenius_norm());  // full rank reconstructs
}

TEST_CASE("svd_truncated wide input and zero matrix") {
    Rng rng(13);
    const DenseMatrix wide = DenseMatrix::gaussian(4, 9, rng);
    const linalg::SvdResult s = linalg::svd_truncated(wide, 4);
    CHECK((reconstruct_svd(s) - wide).frobenius_norm() < 1e-10);

    const DenseMatrix zero(5, 3);
    const linalg::SvdResult z = linalg::svd_truncated(zero, 2);
    for (double sv : z.sigma) CHECK(sv == 0.0);
    // factors stay orthonormal and deterministic (canonical axes)
    const DenseMatrix utu = z.u.transposed() * z.u;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(utu(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
    const linalg::SvdResult z2 = linalg::svd_truncated(zero, 2);
    CHECK(z.u.vec() == z2.u.vec());
    CHECK(z.v.vec() == z2.v.vec());
}

TEST_CASE("svd_truncated rejects bad input") {
    const DenseMatrix a(3, 3);
    CHECK_THROWS_AS(linalg::svd_truncated(a, 4), std::invalid_argument);
    CHECK_THROWS_AS(linalg::svd_truncated(a, 0), std::invalid_argument);
    DenseMatrix bad(2, 2);
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(linalg::svd_truncated(bad, 1), std::runtime_error);
}

TEST_CASE("sym_eig_dense diagonal and identity cases") {
    DenseMatrix d(3, 3);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    d(2, 2) = 2.0;
    const linalg::EigenPairs eig = linalg::sym_eig_dense(d);
    CHECK(eig.values[0] == doctest::Approx(3.0));
    CHECK(eig.values[1] == doctest::Approx(2.0));
    CHECK(eig.values[2] == doctest::Approx(1.0));
    // axis-aligned eigenvectors
    CHECK(std::abs(eig.vectors[0][0]) == doctest::Approx(1.0));
    CHECK(std::abs(eig.vectors[1][2]) == doctest::Approx(1.0));
    CHECK(std::abs(eig.vectors[2][1]) == doctest::Approx(1.0));

    const linalg::EigenPairs ones = linalg::sym_eig_dense(DenseMatrix::identity(4));
    for (double v : ones.values) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("sym_eig_dense reconstructs a random symmetric matrix") {
    Rng rng(21);
    const DenseMatrix h = testing::random_symmetric(10, rng);
    const linalg::EigenPairs eig = linalg::sym_eig_dense(h);
    DenseMatrix recon(10, 10);
    for (int k = 0; k < 10; ++k)
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j)
                recon(i, j) += eig.values[k] * eig.vectors[k][i] * eig.vectors[k][j];
    CHECK((recon - h).frobenius_norm() < 1e-10 * std::max(1.0, h.frobenius_norm()));
    for (double r : eig.residuals) CHECK(r < 1e-12 * std::max(1.0, h.frobenius_norm()) * 10);
    // orthonormality
    for (int a = 0; a < 10; ++a)
        for (int b = 0; b < 10; ++b)
            CHECK(linalg::dot(eig.vectors[a], eig.vectors[b]) ==
                  doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-8));
}

TEST_CASE("sym_eig_dense rejects asymmetric input") {
    DenseMatrix a(2, 2);
    a(0, 1) = 1.0;
    a(1, 0) = 0.5;
    CHECK_THROWS_AS(linalg::sym_eig_dense(a), std::runtime_error);
}

TEST_CASE("lanczos on a known diagonal spectrum") {
    linalg::SymmetricOperator op;
    op.dimension = 5;
    op.apply = [](std::span<const double> x) {
        std::vector<double> y(5);
        const double diag[5] = {5, 4, 3, 2, 1};
        for (int i = 0; i < 5; ++i) y[i] = diag[i] * x[i];
        return y;
    };
    linalg::LanczosConfig cfg;
    cfg.max_iters = 5;
    cfg.seed = 4;
    const linalg::EigenPairs eig = linalg::lanczos_top_eigs(op, 2, cfg);
    CHECK(eig.values[0] == doctest::Approx(5.0).epsilon(1e-10));
    CHECK(eig.values[1] == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("lanczos matches the dense oracle on a 50-dim operator") {
    Rng rng(31);
    const DenseMatrix h = testing::random_symmetric(50, rng);
    const linalg::EigenPairs dense = linalg::sym_eig_dense(h);
    linalg::LanczosConfig cfg;
    cfg.max_iters = 50;
    cfg.tol = 1e-10;
    cfg.seed = 5;
    const linalg::EigenPairs krylov =
        linalg::lanczos_top_eigs(linalg::SymmetricOperator::from_dense(h), 5, cfg);
    const double scale = std::abs(dense.values[0]);
    for (int k = 0; k < 5; ++k) {
        CHECK(std::abs(krylov.values[k] - dense.values[k]) < 1e-8 * scale);
        // no overshoot beyond the residual bound
        CHECK(krylov.values[k] <= dense.values[0] + cfg.tol);
    }
    // subspace agreement through principal angles
    double worst_angle = 0.0;
    for (int k = 0; k < 5; ++k) {
        double overlap = 0.0;
        for (int j = 0; j < 5; ++j)
            overlap += std::pow(linalg::dot(krylov.vectors[k], dense.vectors[j]), 2);
        worst_angle = std::max(worst_angle, std::acos(std::min(1.0, std::sqrt(overlap))));
    }
    CHECK(worst_angle < 1e-6);
}

TEST_CASE("lanczos resolves a repeated top eigenvalue") {
    Rng rng(32);
    std::vector<double> spectrum(50);
    spectrum[0] = 7.0;
    spectrum[1] = 7.0;  // multiplicity two at the top
    for (int i = 2; i < 50; ++i) spectrum[i] = 5.0 - 0.1 * i;
    const DenseMatrix h = testing::with_spectrum(spectrum, rng);
    linalg::LanczosConfig cfg;
    cfg.max_iters = 50;
    cfg.tol = 1e-9;
    cfg.seed = 6;
    const linalg::EigenPairs krylov =
        linalg::lanczos_top_eigs(linalg::SymmetricOperator::from_dense(h), 2, cfg);
    CHECK(krylov.values[0] == doctest::Approx(7.0).epsilon(1e-8));
    CHECK(krylov.values[1] == doctest::Approx(7.0).epsilon(1e-8));
    // the returned plane spans the eigenspace: projector distance to the
    // dense oracle's top-2 space
    const linalg::EigenPairs dense = linalg::sym_eig_dense(h);
    DenseMatrix pk(50, 50), pd(50, 50);
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 50; ++j) {
                pk(i, j) += krylov.vectors[k][i] * krylov.vectors[k][j];
                pd(i, j) += dense.vectors[k][i] * dense.vectors[k][j];
            }
    CHECK((pk - pd).frobenius_norm() < 1e-6);
}

TEST_CASE("lanczos parameter validation") {
    linalg::SymmetricOperator op = linalg::SymmetricOperator::from_dense(DenseMatrix::identity(3));
    CHECK_THROWS_AS(linalg::lanczos_top_eigs(op, 4, {}), std::invalid_argument);
    linalg::LanczosConfig cfg;
    cfg.max_iters = 1;
    CHECK_THROWS_AS(linalg::lanczos_top_eigs(op, 2, cfg), std::invalid_argument);
}

TEST_CASE("l2_clip cases and idempotence") {
    const std::vector<double> x{3.0, 4.0};
    CHECK(linalg::l2_clip(x, 10.0) == x);
    CHECK(linalg::l2_clip(x, 5.0) == x);  // boundary
    const std::vector<double> c = linalg::l2_clip(x, 1.0);
    CHECK(c[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(c[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK_THROWS_AS(linalg::l2_clip(x, -1.0), std::invalid_argument);

    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> v = testing::random_vector(8, rng);
        const double tau = std::abs(rng.gaussian());
        const std::vector<double> once = linalg::l2_clip(v, tau);
        const std::vector<double> twice = linalg::l2_clip(once, tau);
        for (std::size_t i = 0; i < v.size(); ++i)
            CHECK(std::abs(twice[i] - once[i]) <= 1e-15 * std::max(1.0, std::abs(once[i])));
        CHECK(linalg::norm2(once) <= tau * (1.0 + 1e-15));
    }
}

TEST_CASE("symmetric operator self-adjointness spot check") {
    Rng rng(51);
    const DenseMatrix h = testing::random_symmetric(12, rng);
    const linalg::SymmetricOperator op = linalg::SymmetricOperator::from_dense(h);
    const double scale = h.frobenius_norm();
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> v = testing::random_vector(12, rng);
        const std::vector<double> w = testing::random_vector(12, rng);
        const double lhs = linalg::dot(op.apply(v), w);
        const double rhs = linalg::dot(v, op.apply(w));
        CHECK(std::abs(lhs - rhs) <= 1e-8 * linalg::norm2(v) * linalg::norm2(w) * scale);
    }
}

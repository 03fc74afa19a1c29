// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "geoshare/curvature.hpp"
#include "geoshare/net.hpp"
#include "geoshare/oracles.hpp"
#include "helpers.hpp"

using namespace geoshare;
using linalg::DenseMatrix;

namespace {

curvature::MinorAxisBundle bundle_from_dense(const DenseMatrix& h, int t) {
    return curvature::minor_axes(linalg::SymmetricOperator::from_dense(h), t, {}, 0);
}

}  // namespace

TEST_CASE("minor_axes picks the leading axes of a known spectrum") {
    DenseMatrix h(4, 4);
    h(0, 0) = 10.0;
    h(1, 1) = 5.0;
    h(2, 2) = 1.0;
    h(3, 3) = 0.1;
    const curvature::MinorAxisBundle b = bundle_from_dense(h, 2);
    CHECK(b.t == 2);
    CHECK(b.eigenvalues[0] == doctest::Approx(10.0));
    CHECK(b.eigenvalues[1] == doctest::Approx(5.0));
    CHECK(std::abs(b.vectors[0][0]) == doctest::Approx(1.0));
    CHECK(std::abs(b.vectors[1][1]) == doctest::Approx(1.0));
}

TEST_CASE("minor_axes of a tiny model match the finite-difference dense oracle") {
    net::ModelSpec spec;
    spec.layer_dims = {3, 4, 2};
    spec.activation = net::Activation::tanh_act;
    const net::ModelParams p = net::ModelParams::gaussian_init(spec, 71, 0.8);
    net::Batch batch;
    Rng rng(72);
    batch.inputs = DenseMatrix::gaussian(6, 3, rng);
    batch.targets = DenseMatrix::gaussian(6, 2, rng);
    const linalg::SymmetricOperator op = net::layer_hessian_operator(spec, p, batch, 0);
    const curvature::MinorAxisBundle b = curvature::minor_axes(op, 5, {}, 0);
    CHECK(b.dense_path);

    const DenseMatrix fd =
        oracles::fd_hessian_from_losses(spec, p, batch, net::Scope::single(0));
    const linalg::EigenPairs fd_eig = linalg::sym_eig_dense(fd);
    const std::vector<std::vector<double>> fd_top(fd_eig.vectors.begin(), fd_eig.vectors.begin() + 5);
    CHECK(oracles::subspace_max_principal_angle(b.vectors, fd_top) < 1e-3);
}

TEST_CASE("decompose identities, projector oracle, and full-t case") {
    Rng rng(73);
    const DenseMatrix h = testing::random_symmetric(12, rng);
    const curvature::MinorAxisBundle b = bundle_from_dense(h, 4);

    // delta equal to a minor axis goes entirely to the perp component
    const curvature::PerturbationSplit s1 = curvature::decompose(b.vectors[0], b);
    CHECK(std::sqrt(s1.energy_par) < 1e-10);
    CHECK(s1.energy_perp == doctest::Approx(1.0).epsilon(1e-10));

    // delta orthogonal to every axis keeps everything in the par component
    std::vector<double> ortho = testing::random_vector(12, rng);
    for (const auto& p : b.vectors) linalg::axpy(-linalg::dot(p, ortho), p, ortho);
    const curvature::PerturbationSplit s2 = curvature::decompose(ortho, b);
    CHECK(std::sqrt(s2.energy_perp) < 1e-9 * linalg::norm2(ortho));

    const DenseMatrix proj = oracles::explicit_projector(b);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<double> delta = testing::random_vector(12, rng);
        const curvature::PerturbationSplit s = curvature::decompose(delta, b);
        // reassembly and orthogonality
        for (int i = 0; i < 12; ++i)
            CHECK(s.delta_par[i] + s.delta_perp[i] ==
                  doctest::Approx(delta[i]).epsilon(1e-12));
        for (const auto& p : b.vectors)
            CHECK(std::abs(linalg::dot(s.delta_par, p)) <= 1e-10 * linalg::norm2(delta));
        // energies against the explicit projector
        const std::vector<double> proj_delta = proj.apply(delta);
        CHECK(s.energy_perp ==
              doctest::Approx(linalg::dot(proj_delta, proj_delta)).epsilon(1e-10));
        // Pythagoras
        CHECK(s.energy_par + s.energy_perp ==
              doctest::Approx(linalg::dot(delta, delta)).epsilon(1e-10));
        // projector idempotence: decomposing delta_par leaves nothing perp
        const curvature::PerturbationSplit again = curvature::decompose(s.delta_par, b);
        CHECK(std::sqrt(again.energy_perp) <= 1e-10 * (1.0 + linalg::norm2(delta)));
    }

    // t = dimension: everything is perp
    const curvature::MinorAxisBundle full = bundle_from_dense(h, 12);
    const std::vector<double> any = testing::random_vector(12, rng);
    const curvature::PerturbationSplit sf = curvature::decompose(any, full);
    CHECK(std::sqrt(sf.energy_par) < 1e-9 * linalg::norm2(any));

    CHECK_THROWS_AS(curvature::decompose(std::vector<double>(5, 0.0), b), std::invalid_argument);
}

TEST_CASE("energy_perp grows and retained cost shrinks as t grows") {
    Rng rng(74);
    const DenseMatrix h = testing::with_spectrum({9, 7, 5, 3, 2, 1, 0.5, 0.2}, rng);
    const std::vector<double> delta = testing::random_vector(8, rng);
    const linalg::SymmetricOperator op = linalg::SymmetricOperator::from_dense(h);
    double prev_perp = -1.0;
    double prev_cost = std::numeric_limits<double>::max();
    for (int t = 1; t < 8; ++t) {
        const curvature::PerturbationSplit s = curvature::decompose(delta, bundle_from_dense(h, t));
        CHECK(s.energy_perp >= prev_perp - 1e-12);
        const double cost = curvature::quadratic_cost(s.delta_par, op);
        CHECK(cost <= prev_cost + 1e-12);
        prev_perp = s.energy_perp;
        prev_cost = cost;
    }
}

TEST_CASE("quadratic_cost basics and the exactly quadratic model") {
    Rng rng(75);
    const DenseMatrix h = testing::random_symmetric(6, rng);
    const linalg::SymmetricOperator op = linalg::SymmetricOperator::from_dense(h);
    CHECK(curvature::quadratic_cost(std::vector<double>(6, 0.0), op) == 0.0);

    const linalg::SymmetricOperator ident =
        linalg::SymmetricOperator::from_dense(DenseMatrix::identity(6));
    const std::vector<double> v = testing::random_vector(6, rng);
    CHECK(curvature::quadratic_cost(v, ident) ==
          doctest::Approx(0.5 * linalg::dot(v, v)).epsilon(1e-12));

    // linear model at its minimum: J(W + d) - J(W) equals the surrogate exactly
    const testing::LinearModel m = testing::make_linear_model(4, 3, 8, 76, /*at_minimum=*/true);
    const linalg::SymmetricOperator hop = net::layer_hessian_operator(m.spec, m.params, m.batch, 0);
    const std::vector<double> d = testing::random_vector(12, rng);
    net::ModelParams shifted = m.params;
    for (int i = 0; i < 12; ++i) shifted.weights[0].data()[i] += d[i];
    const double actual = net::loss(m.spec, shifted, m.batch) - net::loss(m.spec, m.params, m.batch);
    CHECK(actual == doctest::Approx(curvature::quadratic_cost(d, hop)).epsilon(1e-9));

    // spectral identity: cost equals half the lambda-weighted coordinates
    const linalg::EigenPairs eig = linalg::sym_eig_dense(h);
    const std::vector<double> delta = testing::random_vector(6, rng);
    double spectral = 0.0;
    for (int k = 0; k < 6; ++k)
        spectral += 0.5 * eig.values[k] * std::pow(linalg::dot(eig.vectors[k], delta), 2);
    CHECK(curvature::quadratic_cost(delta, op) == doctest::Approx(spectral).epsilon(1e-9));
}

TEST_CASE("energy_split_check cross term vanishes for exact eigenvectors") {
    Rng rng(77);
    const DenseMatrix h = testing::random_symmetric(10, rng);
    const linalg::SymmetricOperator op = linalg::SymmetricOperator::from_dense(h);
    const curvature::MinorAxisBundle b = bundle_from_dense(h, 3);

    // delta inside the span: par cost and cross vanish
    std::vector<double> inside(10, 0.0);
    for (const auto& p : b.vectors) linalg::axpy(rng.gaussian(), p, inside);
    const curvature::EnergySplit inside_split =
        curvature::energy_split_check(curvature::decompose(inside, b), op);
    CHECK(std::abs(inside_split.cost_par) < 1e-9 * h.frobenius_norm());
    CHECK(std::abs(inside_split.cross_term) < 1e-9 * h.frobenius_norm());

    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<double> delta = testing::random_vector(10, rng);
        const curvature::EnergySplit es =
            curvature::energy_split_check(curvature::decompose(delta, b), op);
        CHECK(std::abs(es.cross_term) <=
              1e-10 * (std::abs(es.cost_par) + std::abs(es.cost_perp) +
                       h.frobenius_norm() * linalg::dot(delta, delta)));
    }
}

TEST_CASE("first_order_ratio definition and flags") {
    Rng rng(78);
    const DenseMatrix h = testing::random_symmetric(7, rng);
    const linalg::SymmetricOperator op = linalg::SymmetricOperator::from_dense(h);
    const std::vector<double> delta = testing::random_vector(7, rng);
    const std::vector<double> zero(7, 0.0);
    CHECK(curvature::first_order_ratio(zero, delta, op) == 0.0);

    // grad = H delta gives c = 2 exactly
    const std::vector<double> grad = op.apply(delta);
    CHECK(curvature::first_order_ratio(grad, delta, op) == doctest::Approx(2.0).epsilon(1e-12));

    // zero quadratic term: flagged infinity, no fault
    const linalg::SymmetricOperator zero_op =
        linalg::SymmetricOperator::from_dense(DenseMatrix(3, 3));
    CHECK(std::isinf(curvature::first_order_ratio(std::vector<double>{1, 0, 0},
                                                  std::vector<double>{0, 1, 0}, zero_op)));
}

TEST_CASE("ellipsoid_axes lengths and level-set membership") {
    DenseMatrix h(2, 2);
    h(0, 0) = 4.0;
    h(1, 1) = 1.0;
    const auto axes = curvature::ellipsoid_axes(linalg::sym_eig_dense(h), 2.0);
    CHECK(axes[0].semi_axis == doctest::Approx(1.0));  // large lambda, short axis
    CHECK(axes[1].semi_axis == doctest::Approx(2.0));

    const auto sphere = curvature::ellipsoid_axes(
        linalg::sym_eig_dense(DenseMatrix::identity(3)), 2.0);
    for (const auto& a : sphere) CHECK(a.semi_axis == doctest::Approx(std::sqrt(4.0)));

    Rng rng(79);
    const DenseMatrix spd = testing::with_spectrum({6, 3.5, 1.2, 0.4}, rng);
    const linalg::SymmetricOperator op = linalg::SymmetricOperator::from_dense(spd);
    const double level = 1.7;
    for (const auto& axis : curvature::ellipsoid_axes(linalg::sym_eig_dense(spd), level)) {
        REQUIRE(axis.bounded);
        std::vector<double> x = axis.direction;
        for (double& xi : x) xi *= axis.semi_axis;
        CHECK(curvature::quadratic_cost(x, op) == doctest::Approx(level).epsilon(1e-10));
    }

    // indefinite direction flagged unbounded
    DenseMatrix indef(2, 2);
    indef(0, 0) = 1.0;
    indef(1, 1) = -2.0;
    const auto flagged = curvature::ellipsoid_axes(linalg::sym_eig_dense(indef), 1.0);
    CHECK(flagged[0].bounded);
    CHECK_FALSE(flagged[1].bounded);
}

TEST_CASE("minor_axes by-magnitude flag on an indefinite spectrum") {
    Rng rng(80);
    const DenseMatrix h = testing::with_spectrum({4, 1, -0.5, -6}, rng);
    curvature::MinorAxisOptions opts;
    opts.by_magnitude = true;
    const curvature::MinorAxisBundle b =
        curvature::minor_axes(linalg::SymmetricOperator::from_dense(h), 2, opts, 0);
    CHECK(b.eigenvalues[0] == doctest::Approx(-6.0));
    CHECK(b.eigenvalues[1] == doctest::Approx(4.0));
}

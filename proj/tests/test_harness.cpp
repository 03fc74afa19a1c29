// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "geoshare/curvature.hpp"
#include "geoshare/harness.hpp"
#include "geoshare/oracles.hpp"
#include "helpers.hpp"

using namespace geoshare;
using linalg::DenseMatrix;

namespace {

harness::ExperimentConfig tiny_teacher_config() {
    harness::ExperimentConfig c;
    c.model.layer_dims = {6, 6, 6};
    c.model.activation = net::Activation::tanh_act;
    c.data.task = "teacher";
    c.data.n_train = 16;
    c.data.n_eval = 24;
    c.data.seed = 5;
    c.training.steps = 30;
    c.training.seed = 6;
    c.sharing.num_bases = 2;
    c.sharing.rank = 2;
    c.sharing.seed = 7;
    c.sharing.align.t = 6;
    return c;
}

}  // namespace

TEST_CASE("gen_data identity task and determinism") {
    net::ModelSpec spec;
    spec.layer_dims = {3, 3};
    harness::DataSpec d;
    d.task = "identity";
    d.n_train = 8;
    d.n_eval = 8;
    d.noise = 0.0;
    d.seed = 9;
    const harness::GeneratedData g1 = harness::gen_data(d, spec);
    CHECK(g1.train.inputs.vec() == g1.train.targets.vec());  // zero noise: targets equal inputs
    const harness::GeneratedData g2 = harness::gen_data(d, spec);
    CHECK(g1.train.inputs.vec() == g2.train.inputs.vec());   // bitwise identical
    CHECK(g1.eval.inputs.vec() == g2.eval.inputs.vec());

    harness::DataSpec noisy = d;
    noisy.noise = 0.1;
    const harness::GeneratedData g3 = harness::gen_data(noisy, spec);
    CHECK(g3.train.inputs.vec() != g3.train.targets.vec());  // train noise applied
    CHECK(g3.eval.inputs.vec() == g3.eval.targets.vec());    // eval stays clean
}

TEST_CASE("gen_data planted task produces the planted structure") {
    net::ModelSpec spec;
    spec.layer_dims = std::vector<int>(5, 6);
    harness::DataSpec d;
    d.task = "planted-cluster";
    d.seed = 11;
    d.n_train = 8;
    d.n_eval = 8;
    d.planted.clusters = 2;
    d.planted.center_rank = 3;
    d.planted.strong_rank = 3;
    d.planted.center_scale = 2.0;
    d.planted.weight_noise = 0.1;
    const harness::GeneratedData g = harness::gen_data(d, spec);
    REQUIRE(g.teacher.has_value());
    REQUIRE(g.student_init.has_value());
    CHECK(g.planted_assignment == std::vector<int>{0, 1, 0, 1});
    // same-cluster teacher layers are identical, cross-cluster differ
    CHECK((g.teacher->weights[0] - g.teacher->weights[2]).frobenius_norm() == 0.0);
    CHECK((g.teacher->weights[0] - g.teacher->weights[1]).frobenius_norm() > 0.5);
    // student noise is proportional to the configured level
    const double rel = (g.student_init->weights[0] - g.teacher->weights[0]).frobenius_norm() /
                       g.teacher->weights[0].frobenius_norm();
    CHECK(rel == doctest::Approx(0.1).epsilon(0.5));

    // disjoint variant: cross-cluster coefficient mass is near zero
    harness::DataSpec dd = d;
    dd.planted.disjoint_subspaces = true;
    dd.planted.strong_rank = 2;
    dd.planted.weak_scale = 0.5;
    const harness::GeneratedData gd = harness::gen_data(dd, spec);
    const DenseMatrix& a = gd.teacher->weights[0];
    const DenseMatrix& b = gd.teacher->weights[1];
    double cross = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) cross += a(i, j) * b(i, j);
    CHECK(std::abs(cross) < 1e-10);  // disjoint singular subspaces
}

TEST_CASE("train matches the normal-equations solution on a linear model") {
    harness::ExperimentConfig c;
    c.model.layer_dims = {4, 3};
    c.model.activation = net::Activation::identity;
    c.data.task = "teacher";
    c.data.n_train = 32;
    c.data.n_eval = 16;
    c.data.noise = 0.3;  // non-trivial residual at the optimum
    c.data.seed = 21;
    c.training.steps = 20000;
    c.training.learning_rate = 5e-2;
    c.training.grad_norm_target = 1e-10;
    c.training.seed = 22;

    const harness::GeneratedData data = harness::gen_data(c.data, c.model);
    const harness::TrainResult result = harness::train(c, data);

    // least-squares oracle: W^T = (X^T X)^{-1} X^T Y via the dense eigensolver
    const DenseMatrix& x = data.train.inputs;
    const DenseMatrix& y = data.train.targets;
    const DenseMatrix xtx = x.transposed() * x;
    const DenseMatrix xty = x.transposed() * y;
    const linalg::EigenPairs eig = linalg::sym_eig_dense(xtx);
    DenseMatrix inv(4, 4);
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                inv(i, j) += eig.vectors[k][i] * eig.vectors[k][j] / eig.values[k];
    const DenseMatrix w_opt_t = inv * xty;  // 4 x 3
    for (int o = 0; o < 3; ++o)
        for (int i = 0; i < 4; ++i)
            CHECK(result.params.weights[0](o, i) == doctest::Approx(w_opt_t(i, o)).epsilon(1e-6));
}

TEST_CASE("train zero steps returns the initialization, and replays bitwise") {
    harness::ExperimentConfig c = tiny_teacher_config();
    c.training.steps = 0;
    c.training.init = "random";
    const harness::GeneratedData data = harness::gen_data(c.data, c.model);
    const harness::TrainResult r = harness::train(c, data);
    const net::ModelParams init =
        net::ModelParams::gaussian_init(c.model, c.training.seed, c.training.init_scale);
    for (int l = 0; l < c.model.num_layers(); ++l)
        CHECK(r.params.weights[l].vec() == init.weights[l].vec());

    c.training.steps = 25;
    const harness::TrainResult r1 = harness::train(c, data);
    const harness::TrainResult r2 = harness::train(c, data);
    for (int l = 0; l < c.model.num_layers(); ++l)
        CHECK(r1.params.weights[l].vec() == r2.params.weights[l].vec());
}

TEST_CASE("run_experiment without baselines reports geo-sharing only") {
    harness::ExperimentConfig c = tiny_teacher_config();
    c.sharing.num_bases = 1;
    const harness::RunReport report = harness::run_experiment(c);
    REQUIRE(report.methods.size() == 1);
    CHECK(report.methods[0].name == "geo-sharing");
    // K = 1 means a constant coloring
    for (int id : report.methods[0].coloring) CHECK(id == report.methods[0].coloring[0]);
    CHECK_FALSE(report.bases_hash.empty());
    CHECK_FALSE(report.eval_batch_hash.empty());
}

TEST_CASE("run_experiment report schema round-trips byte-identically") {
    harness::ExperimentConfig c = tiny_teacher_config();
    c.baselines = {"random-coloring", "adjacent-pairs", "no-sharing"};
    const harness::RunReport report = harness::run_experiment(c);
    const std::string once = report.to_json();
    // parse and re-serialize: canonical field order must survive
    const harness::ExperimentConfig echoed = harness::config_from_json_text(
        nlohmann::ordered_json::parse(once).at("config").dump());
    CHECK(harness::config_to_json(echoed) == harness::config_to_json(c));
    const std::string twice = report.to_json();
    CHECK(once == twice);

    // fair comparison: every method consumed the same basis pool
    REQUIRE(report.methods.size() == 4);
    CHECK(report.methods[0].name == "geo-sharing");
    // identical eval hash by construction; delta for no-sharing is zero
    for (const auto& m : report.methods)
        if (m.name == "no-sharing") CHECK(m.delta_loss == 0.0);
}

TEST_CASE("run_experiment is deterministic end to end") {
    harness::ExperimentConfig c = tiny_teacher_config();
    c.baselines = {"random-coloring"};
    const std::string a = harness::run_experiment(c).to_json();
    const std::string b = harness::run_experiment(c).to_json();
    CHECK(a == b);
}

TEST_CASE("run_oracles passes all four suites on the default tiny config") {
    harness::ExperimentConfig c = tiny_teacher_config();
    c.training.steps = 40;
    const harness::OracleReport report = harness::run_oracles(c);
    for (const auto& s : report.suites) {
        INFO(s.name, " measured ", s.measured, " tolerance ", s.tolerance);
        CHECK(s.pass);
    }
    CHECK(report.all_passed);
    CHECK(report.suites.size() == 4);

    // oversized models are rejected up front
    harness::ExperimentConfig big = c;
    big.model.layer_dims = std::vector<int>(9, 4);
    CHECK_THROWS_AS(harness::run_oracles(big), std::invalid_argument);
}

TEST_CASE("ablate emits one row per sweep point and honors a singleton sweep") {
    harness::ExperimentConfig c = tiny_teacher_config();
    harness::AblationSpec sweep;
    sweep.parameter = "beta";
    sweep.values = {0.05};
    const harness::AblationTable table = harness::ablate(c, sweep);
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0].value == 0.05);

    // the t sweep needs layer-wise PSD Hessians for the monotone trend; a
    // linear-activation model has them exactly (the per-layer map is linear)
    harness::ExperimentConfig lin = c;
    lin.model.activation = net::Activation::identity;
    lin.sharing.align.mode = align::Mode::paper_literal;
    harness::AblationSpec tsweep;
    tsweep.parameter = "t";
    tsweep.values = {1, 4, 8};
    const harness::AblationTable tt = harness::ablate(lin, tsweep);
    REQUIRE(tt.rows.size() == 3);
    // exact-eigenvector path: retained surrogate cost non-increasing in t
    CHECK(tt.rows[1].surrogate_cost_after <= tt.rows[0].surrogate_cost_after + 1e-12);
    CHECK(tt.rows[2].surrogate_cost_after <= tt.rows[1].surrogate_cost_after + 1e-12);
}

TEST_CASE("run_experiment embeds the configured ablation sweep") {
    harness::ExperimentConfig c = tiny_teacher_config();
    harness::AblationSpec sweep;
    sweep.parameter = "beta";
    sweep.values = {1e-3, 5e-2};
    c.ablation = sweep;
    const harness::RunReport report = harness::run_experiment(c);
    CHECK(report.ablation_parameter == "beta");
    REQUIRE(report.ablation_rows.size() == 2);
    CHECK(report.ablation_rows[0].value == 1e-3);
    CHECK(report.to_json().find("\"ablation\"") != std::string::npos);
}

TEST_CASE("config json round-trip and master seed override") {
    harness::ExperimentConfig c = tiny_teacher_config();
    c.baselines = {"no-sharing"};
    harness::AblationSpec ab;
    ab.parameter = "t";
    ab.values = {1, 2};
    c.ablation = ab;
    const std::string text = harness::config_to_json(c);
    const harness::ExperimentConfig back = harness::config_from_json_text(text);
    CHECK(harness::config_to_json(back) == text);

    harness::ExperimentConfig o = c;
    harness::override_master_seed(o, 123);
    CHECK(o.data.seed != c.data.seed);
    CHECK(o.training.seed != c.training.seed);
    CHECK(o.sharing.seed != c.sharing.seed);
    harness::ExperimentConfig o2 = c;
    harness::override_master_seed(o2, 123);
    CHECK(o.data.seed == o2.data.seed);

    CHECK_THROWS_AS(harness::config_from_json_text("{not json"), std::invalid_argument);
    CHECK_THROWS_AS(harness::config_from_json_text("{\"model\": {\"layer_dims\": [4]}}"),
                    std::invalid_argument);
}

TEST_CASE("layer Hessians are positive semi-definite at a trained minimum") {
    // realizable task: the interpolating minimum is reachable, where the
    // curvature premise of the whole alignment procedure holds
    harness::ExperimentConfig c;
    c.model.layer_dims = {4, 4, 4};
    c.model.activation = net::Activation::tanh_act;
    c.data.task = "teacher";
    c.data.seed = 301;
    c.data.n_train = 64;
    c.data.n_eval = 16;
    c.data.noise = 0.0;
    c.data.teacher_scale = 1.2;
    c.training.init = "teacher-perturbed";
    c.training.init_noise = 0.05;
    c.training.steps = 20000;
    c.training.learning_rate = 2e-3;
    c.training.grad_norm_target = 1e-7;
    c.training.seed = 302;
    const harness::GeneratedData data = harness::gen_data(c.data, c.model);
    const harness::TrainResult r = harness::train(c, data);
    REQUIRE(r.trace.final_grad_norm < 1e-6);
    for (int l = 0; l < c.model.num_layers(); ++l) {
        const linalg::SymmetricOperator op =
            net::layer_hessian_operator(c.model, r.params, data.train, l);
        const curvature::MinorAxisBundle full = curvature::minor_axes(op, op.dimension, {}, l);
        const double lam_max = full.eigenvalues.front();
        const double lam_min = full.eigenvalues.back();
        CHECK(lam_min >= -1e-6 * lam_max);
    }
}

TEST_CASE("hash_doubles is order- and value-sensitive") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    const std::vector<double> b{3.0, 2.0, 1.0};
    CHECK(harness::hash_doubles(a) == harness::hash_doubles(a));
    CHECK(harness::hash_doubles(a) != harness::hash_doubles(b));
}

TEST_CASE("baseline colorings reference valid bases per shape group") {
    harness::ExperimentConfig c = tiny_teacher_config();
    c.model.layer_dims = {4, 5, 3};  // two shape groups: 5x4 and 3x5
    const harness::GeneratedData data = harness::gen_data(c.data, c.model);
    const harness::TrainResult trained = harness::train(c, data);
    const auto bases = harness::build_shape_group_bases(c.model, trained.params, c.sharing);
    // ids are globally unique across groups
    std::vector<int> all_ids;
    for (const auto& [shape, pool] : bases)
        for (const auto& basis : pool) all_ids.push_back(basis.id);
    std::sort(all_ids.begin(), all_ids.end());
    CHECK(std::adjacent_find(all_ids.begin(), all_ids.end()) == all_ids.end());

    const sharing::Coloring rc = harness::random_coloring(c.model, bases, 99);
    const sharing::Coloring ac = harness::adjacent_pairs_coloring(c.model, bases);
    for (int l = 0; l < c.model.num_layers(); ++l) {
        const auto& pool = bases.at({c.model.layer_rows(l), c.model.layer_cols(l)});
        auto in_pool = [&](int id) {
            return std::any_of(pool.begin(), pool.end(),
                               [&](const auto& basis) { return basis.id == id; });
        };
        CHECK(in_pool(rc.assignment[l]));
        CHECK(in_pool(ac.assignment[l]));
    }
}

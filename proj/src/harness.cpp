// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include "geoshare/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "geoshare/oracles.hpp"

namespace geoshare::harness {

using linalg::DenseMatrix;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// config <-> json
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    model.validate();
    if (data.task != "identity" && data.task != "teacher" && data.task != "planted-cluster")
        throw std::invalid_argument("config: unknown data task '" + data.task + "'");
    if (data.n_train < 1 || data.n_eval < 1)
        throw std::invalid_argument("config: sample counts must be positive");
    if (training.optimizer != "sgd" && training.optimizer != "adam")
        throw std::invalid_argument("config: unknown optimizer '" + training.optimizer + "'");
    if (training.steps < 0) throw std::invalid_argument("config: steps must be non-negative");
    if (training.grad_norm_target <= 0.0)
        throw std::invalid_argument("config: grad_norm_target must be positive");
    if (training.init != "random" && training.init != "teacher-perturbed" && training.init != "generated")
        throw std::invalid_argument("config: unknown init '" + training.init + "'");
    if (sharing.num_bases < 1) throw std::invalid_argument("config: num_bases must be positive");
    if (sharing.rank < 1) throw std::invalid_argument("config: rank must be positive");
    sharing.align.validate();
    for (const auto& b : baselines)
        if (b != "random-coloring" && b != "adjacent-pairs" && b != "no-sharing")
            throw std::invalid_argument("config: unknown baseline '" + b + "'");
    if (ablation) {
        if (ablation->parameter != "beta" && ablation->parameter != "t")
            throw std::invalid_argument("config: ablation parameter must be 'beta' or 't'");
        if (ablation->values.empty())
            throw std::invalid_argument("config: ablation sweep must be nonempty");
    }
    if (data.task == "planted-cluster") {
        const auto& p = data.planted;
        if (p.clusters < 1 || p.center_rank < 1 || p.strong_rank < 0 || p.strong_rank > p.center_rank)
            throw std::invalid_argument("config: malformed planted spec");
        for (int l = 0; l < model.num_layers(); ++l)
            if (model.layer_rows(l) != model.layer_rows(0) || model.layer_cols(l) != model.layer_cols(0))
                throw std::invalid_argument("config: planted-cluster task needs uniform layer shapes");
        if (p.disjoint_subspaces &&
            p.clusters * p.center_rank > std::min(model.layer_rows(0), model.layer_cols(0)))
            throw std::invalid_argument("config: disjoint planted centers do not fit the layer shape");
    }
    if (data.task == "identity" && model.input_dim() != model.output_dim())
        throw std::invalid_argument("config: identity task needs matching input/output dims");
}

namespace {

curvature::MinorAxisOptions axes_from_json(const json& j) {
    curvature::MinorAxisOptions o;
    if (j.contains("dense_dimension_limit")) o.dense_dimension_limit = j.at("dense_dimension_limit");
    if (j.contains("policy")) {
        const std::string p = j.at("policy");
        if (p == "strict") o.policy = curvature::UnconvergedPolicy::strict;
        else if (p == "best-effort") o.policy = curvature::UnconvergedPolicy::best_effort;
        else throw std::invalid_argument("config: unknown policy '" + p + "'");
    }
    if (j.contains("by_magnitude")) o.by_magnitude = j.at("by_magnitude");
    if (j.contains("lanczos")) {
        const json& l = j.at("lanczos");
        if (l.contains("max_iters")) o.lanczos.max_iters = l.at("max_iters");
        if (l.contains("tol")) o.lanczos.tol = l.at("tol");
        if (l.contains("seed")) o.lanczos.seed = l.at("seed");
    }
    return o;
}

ordered_json axes_to_json(const curvature::MinorAxisOptions& o) {
    ordered_json j;
    j["dense_dimension_limit"] = o.dense_dimension_limit;
    j["policy"] = o.policy == curvature::UnconvergedPolicy::strict ? "strict" : "best-effort";
    j["by_magnitude"] = o.by_magnitude;
    j["lanczos"] = {{"max_iters", o.lanczos.max_iters}, {"tol", o.lanczos.tol}, {"seed", o.lanczos.seed}};
    return j;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig c;
    const json& m = j.at("model");
    c.model.layer_dims = m.at("layer_dims").get<std::vector<int>>();
    if (m.contains("activation")) c.model.activation = net::activation_from_name(m.at("activation"));
    if (m.contains("softplus_sharpness")) c.model.softplus_sharpness = m.at("softplus_sharpness");
    if (m.contains("loss")) c.model.loss_kind = net::loss_from_name(m.at("loss"));

    if (j.contains("data")) {
        const json& d = j.at("data");
        if (d.contains("task")) c.data.task = d.at("task");
        if (d.contains("n_train")) c.data.n_train = d.at("n_train");
        if (d.contains("n_eval")) c.data.n_eval = d.at("n_eval");
        if (d.contains("noise")) c.data.noise = d.at("noise");
        if (d.contains("seed")) c.data.seed = d.at("seed");
        if (d.contains("teacher_scale")) c.data.teacher_scale = d.at("teacher_scale");
        if (d.contains("planted")) {
            const json& p = d.at("planted");
            if (p.contains("clusters")) c.data.planted.clusters = p.at("clusters");
            if (p.contains("center_rank")) c.data.planted.center_rank = p.at("center_rank");
            if (p.contains("strong_rank")) c.data.planted.strong_rank = p.at("strong_rank");
            if (p.contains("weak_scale")) c.data.planted.weak_scale = p.at("weak_scale");
            if (p.contains("disjoint_subspaces")) c.data.planted.disjoint_subspaces = p.at("disjoint_subspaces");
            if (p.contains("center_scale")) c.data.planted.center_scale = p.at("center_scale");
            if (p.contains("weight_noise")) c.data.planted.weight_noise = p.at("weight_noise");
        } else if (c.data.task == "planted-cluster") {
            c.data.planted.strong_rank = c.data.planted.center_rank;
        }
    }

    if (j.contains("training")) {
        const json& t = j.at("training");
        if (t.contains("optimizer")) c.training.optimizer = t.at("optimizer");
        if (t.contains("steps")) c.training.steps = t.at("steps");
        if (t.contains("learning_rate")) c.training.learning_rate = t.at("learning_rate");
        if (t.contains("cosine_decay")) c.training.cosine_decay = t.at("cosine_decay");
        if (t.contains("grad_norm_target")) c.training.grad_norm_target = t.at("grad_norm_target");
        if (t.contains("seed")) c.training.seed = t.at("seed");
        if (t.contains("init")) c.training.init = t.at("init");
        if (t.contains("init_scale")) c.training.init_scale = t.at("init_scale");
        if (t.contains("init_noise")) c.training.init_noise = t.at("init_noise");
    }

    if (j.contains("sharing")) {
        const json& s = j.at("sharing");
        if (s.contains("num_bases")) c.sharing.num_bases = s.at("num_bases");
        if (s.contains("rank")) c.sharing.rank = s.at("rank");
        if (s.contains("strategy"))
            c.sharing.strategy = sharing::basis_strategy_from_name(s.at("strategy"));
        if (s.contains("seed")) c.sharing.seed = s.at("seed");
        if (s.contains("align")) {
            const json& a = s.at("align");
            if (a.contains("t")) c.sharing.align.t = a.at("t");
            if (a.contains("beta")) c.sharing.align.beta = a.at("beta");
            if (a.contains("mode")) c.sharing.align.mode = align::mode_from_name(a.at("mode"));
            if (a.contains("seed")) c.sharing.align.seed = a.at("seed");
            c.sharing.align.axes = axes_from_json(a);
        }
    }

    if (j.contains("baselines")) c.baselines = j.at("baselines").get<std::vector<std::string>>();
    if (j.contains("ablation")) {
        AblationSpec ab;
        ab.parameter = j.at("ablation").at("parameter");
        ab.values = j.at("ablation").at("values").get<std::vector<double>>();
        c.ablation = ab;
    }
    if (j.contains("out")) c.out_dir = j.at("out");
    c.validate();
    return c;
}

ExperimentConfig config_from_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("config: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return config_from_json_text(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
    ordered_json j;
    j["model"] = {{"layer_dims", c.model.layer_dims},
                  {"activation", net::activation_name(c.model.activation)},
                  {"softplus_sharpness", c.model.softplus_sharpness},
                  {"loss", net::loss_name(c.model.loss_kind)}};
    ordered_json d;
    d["task"] = c.data.task;
    d["n_train"] = c.data.n_train;
    d["n_eval"] = c.data.n_eval;
    d["noise"] = c.data.noise;
    d["seed"] = c.data.seed;
    d["teacher_scale"] = c.data.teacher_scale;
    if (c.data.task == "planted-cluster") {
        d["planted"] = {{"clusters", c.data.planted.clusters},
                        {"center_rank", c.data.planted.center_rank},
                        {"strong_rank", c.data.planted.strong_rank},
                        {"weak_scale", c.data.planted.weak_scale},
                        {"disjoint_subspaces", c.data.planted.disjoint_subspaces},
                        {"center_scale", c.data.planted.center_scale},
                        {"weight_noise", c.data.planted.weight_noise}};
    }
    j["data"] = d;
    j["training"] = {{"optimizer", c.training.optimizer},
                     {"steps", c.training.steps},
                     {"learning_rate", c.training.learning_rate},
                     {"cosine_decay", c.training.cosine_decay},
                     {"grad_norm_target", c.training.grad_norm_target},
                     {"seed", c.training.seed},
                     {"init", c.training.init},
                     {"init_scale", c.training.init_scale},
                     {"init_noise", c.training.init_noise}};
    ordered_json al;
    al["t"] = c.sharing.align.t;
    al["beta"] = c.sharing.align.beta;
    al["mode"] = align::mode_name(c.sharing.align.mode);
    al["seed"] = c.sharing.align.seed;
    const ordered_json ax = axes_to_json(c.sharing.align.axes);
    for (auto it = ax.begin(); it != ax.end(); ++it) al[it.key()] = it.value();
    j["sharing"] = {{"num_bases", c.sharing.num_bases},
                    {"rank", c.sharing.rank},
                    {"strategy", sharing::basis_strategy_name(c.sharing.strategy)},
                    {"seed", c.sharing.seed},
                    {"align", al}};
    j["baselines"] = c.baselines;
    if (c.ablation)
        j["ablation"] = {{"parameter", c.ablation->parameter}, {"values", c.ablation->values}};
    j["out"] = c.out_dir;
    return j.dump(2);
}

namespace {

/// Config echo embedded in reports: the output directory is invocation
/// plumbing, not experiment semantics, and must not break byte-identity
/// between runs that only differ in --out.
ordered_json config_echo(const ExperimentConfig& config) {
    ExperimentConfig c = config;
    c.out_dir.clear();
    return ordered_json::parse(config_to_json(c));
}

}  // namespace

void override_master_seed(ExperimentConfig& config, std::uint64_t master) {
    config.data.seed = mix_seed(master, 1);
    config.training.seed = mix_seed(master, 2);
    config.sharing.seed = mix_seed(master, 3);
    config.sharing.align.seed = mix_seed(master, 4);
    config.sharing.align.axes.lanczos.seed = mix_seed(master, 5);
}

// ---------------------------------------------------------------------------
// data generation
// ---------------------------------------------------------------------------

namespace {

/// Orthonormal square matrix from seeded Gram-Schmidt on a gaussian draw.
DenseMatrix random_orthonormal(int n, Rng& rng) {
    DenseMatrix q(n, n);
    for (int col = 0; col < n; ++col) {
        std::vector<double> v(n);
        for (double& x : v) x = rng.gaussian();
        for (int prev = 0; prev < col; ++prev) {
            double d = 0.0;
            for (int i = 0; i < n; ++i) d += v[i] * q(i, prev);
            for (int i = 0; i < n; ++i) v[i] -= d * q(i, prev);
        }
        const double nv = linalg::norm2(v);
        if (nv < 1e-12) {
            --col;  // astronomically unlikely; redraw
            continue;
        }
        for (int i = 0; i < n; ++i) q(i, col) = v[i] / nv;
    }
    return q;
}

std::vector<DenseMatrix> planted_centers(const PlantedSpec& p, int rows, int cols, Rng& rng) {
    std::vector<DenseMatrix> centers;
    if (p.disjoint_subspaces) {
        const int dim = std::min(rows, cols);
        if (p.clusters * p.center_rank > dim)
            throw std::invalid_argument("planted_centers: disjoint blocks exceed dimension");
        const DenseMatrix qu = random_orthonormal(rows, rng);
        const DenseMatrix qv = random_orthonormal(cols, rng);
        std::vector<double> spectrum(p.center_rank, p.weak_scale);
        for (int i = 0; i < p.strong_rank; ++i) spectrum[i] = 1.0;
        for (int c = 0; c < p.clusters; ++c) {
            DenseMatrix m(rows, cols);
            const int off = c * p.center_rank;
            for (int k = 0; k < p.center_rank; ++k)
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j)
                        m(i, j) += spectrum[k] * qu(i, off + k) * qv(j, off + k);
            const double f = m.frobenius_norm();
            for (double& x : m.data()) x *= p.center_scale / f;
            centers.push_back(std::move(m));
        }
    } else {
        for (int c = 0; c < p.clusters; ++c) {
            const DenseMatrix a = DenseMatrix::gaussian(rows, p.center_rank, rng);
            const DenseMatrix b = DenseMatrix::gaussian(p.center_rank, cols, rng);
            DenseMatrix m = a * b;
            const double f = m.frobenius_norm();
            for (double& x : m.data()) x *= p.center_scale / f;
            centers.push_back(std::move(m));
        }
    }
    return centers;
}

DenseMatrix gaussian_batch(int n, int d, Rng& rng) { return DenseMatrix::gaussian(n, d, rng); }

void fill_targets(const net::ModelSpec& model, const net::ModelParams& teacher,
                  const DenseMatrix& inputs, double noise, Rng& rng, net::Batch& batch) {
    const DenseMatrix out = net::predict(model, teacher, inputs);
    if (model.loss_kind == net::LossKind::mse) {
        DenseMatrix targets = out;
        if (noise > 0.0)
            for (double& x : targets.data()) x += noise * rng.gaussian();
        batch.targets = std::move(targets);
    } else {
        // classification targets from the teacher's argmax; noise is a
        // regression concept and is ignored here
        batch.labels.resize(out.rows());
        for (int i = 0; i < out.rows(); ++i) {
            int best = 0;
            for (int j = 1; j < out.cols(); ++j)
                if (out(i, j) > out(i, best)) best = j;
            batch.labels[i] = best;
        }
    }
}

}  // namespace

GeneratedData gen_data(const DataSpec& data, const net::ModelSpec& model) {
    model.validate();
    GeneratedData g;
    Rng rng(mix_seed(data.seed, 0xda7a));

    if (data.task == "identity") {
        if (model.input_dim() != model.output_dim())
            throw std::invalid_argument("gen_data: identity task needs matching dims");
        g.train.inputs = gaussian_batch(data.n_train, model.input_dim(), rng);
        g.train.targets = g.train.inputs;
        if (data.noise > 0.0)
            for (double& x : g.train.targets.data()) x += data.noise * rng.gaussian();
        g.eval.inputs = gaussian_batch(data.n_eval, model.input_dim(), rng);
        g.eval.targets = g.eval.inputs;
        return g;
    }

    if (data.task == "teacher") {
        g.teacher = net::ModelParams::gaussian_init(model, mix_seed(data.seed, 0x7e), data.teacher_scale);
    } else {  // planted-cluster
        const auto& p = data.planted;
        const std::vector<DenseMatrix> centers =
            planted_centers(p, model.layer_rows(0), model.layer_cols(0), rng);
        net::ModelParams teacher;
        net::ModelParams student;
        for (int l = 0; l < model.num_layers(); ++l) {
            const int which = l % p.clusters;
            g.planted_assignment.push_back(which);
            teacher.weights.push_back(centers[which]);
            DenseMatrix noisy = centers[which];
            const double sigma =
                p.weight_noise * noisy.frobenius_norm() / std::sqrt(static_cast<double>(noisy.size()));
            for (double& x : noisy.data()) x += sigma * rng.gaussian();
            student.weights.push_back(std::move(noisy));
        }
        g.teacher = std::move(teacher);
        g.student_init = std::move(student);
    }

    g.train.inputs = gaussian_batch(data.n_train, model.input_dim(), rng);
    fill_targets(model, *g.teacher, g.train.inputs, data.noise, rng, g.train);
    g.eval.inputs = gaussian_batch(data.n_eval, model.input_dim(), rng);
    fill_targets(model, *g.teacher, g.eval.inputs, 0.0, rng, g.eval);
    return g;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

TrainResult train(const ExperimentConfig& config, const GeneratedData& data) {
    config.validate();
    const net::ModelSpec& spec = config.model;
    const TrainSpec& ts = config.training;

    net::ModelParams params;
    if (ts.init == "generated") {
        if (!data.student_init)
            throw std::invalid_argument("train: init 'generated' needs a planted task");
        params = *data.student_init;
    } else if (ts.init == "teacher-perturbed") {
        if (!data.teacher) throw std::invalid_argument("train: init 'teacher-perturbed' needs a teacher");
        params = *data.teacher;
        Rng rng(mix_seed(ts.seed, 0x1717));
        for (auto& w : params.weights)
            for (double& x : w.data()) x += ts.init_noise * rng.gaussian();
    } else {
        params = net::ModelParams::gaussian_init(spec, ts.seed, ts.init_scale);
    }

    TrainResult result;
    result.trace.loss_samples.reserve(128);
    const int sample_every = std::max(1, ts.steps / 100);

    // adam state
    std::vector<std::vector<double>> m, v;
    if (ts.optimizer == "adam") {
        for (int l = 0; l < spec.num_layers(); ++l) {
            m.emplace_back(spec.layer_param_count(l), 0.0);
            v.emplace_back(spec.layer_param_count(l), 0.0);
        }
    }
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;

    net::ModelParams grads;
    double loss = net::loss(spec, params, data.train);
    double grad_norm = 0.0;
    bool converged = false;
    int step = 0;
    for (step = 1; step <= ts.steps; ++step) {
        loss = net::loss_and_gradient(spec, params, data.train, grads);
        if (!std::isfinite(loss))
            throw std::runtime_error("train: loss diverged at step " + std::to_string(step));
        grad_norm = grads.gradient_norm();
        if ((step - 1) % sample_every == 0) result.trace.loss_samples.push_back(loss);
        if (grad_norm <= ts.grad_norm_target) {
            converged = true;
            break;
        }
        double lr = ts.learning_rate;
        if (ts.cosine_decay)
            lr *= 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, static_cast<double>(step) / ts.steps)));
        if (ts.optimizer == "adam") {
            for (int l = 0; l < spec.num_layers(); ++l) {
                auto w = params.weights[l].data();
                const auto& g = grads.weights[l].vec();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    m[l][i] = b1 * m[l][i] + (1.0 - b1) * g[i];
                    v[l][i] = b2 * v[l][i] + (1.0 - b2) * g[i] * g[i];
                    const double mh = m[l][i] / (1.0 - std::pow(b1, step));
                    const double vh = v[l][i] / (1.0 - std::pow(b2, step));
                    w[i] -= lr * mh / (std::sqrt(vh) + eps);
                }
            }
        } else {
            for (int l = 0; l < spec.num_layers(); ++l) {
                auto w = params.weights[l].data();
                const auto& g = grads.weights[l].vec();
                for (std::size_t i = 0; i < g.size(); ++i) w[i] -= lr * g[i];
            }
        }
    }
    if (!converged && ts.steps > 0) {
        // final gradient norm at the last iterate
        loss = net::loss_and_gradient(spec, params, data.train, grads);
        grad_norm = grads.gradient_norm();
        converged = grad_norm <= ts.grad_norm_target;
    } else if (ts.steps == 0) {
        net::ModelParams g0;
        loss = net::loss_and_gradient(spec, params, data.train, g0);
        grad_norm = g0.gradient_norm();
    }
    result.trace.loss_samples.push_back(loss);
    result.trace.final_loss = loss;
    result.trace.final_grad_norm = grad_norm;
    result.trace.steps_taken = std::min(step, ts.steps);
    result.trace.converged = converged;
    result.params = std::move(params);
    return result;
}

// ---------------------------------------------------------------------------
// bases and baseline colorings
// ---------------------------------------------------------------------------

std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>> build_shape_group_bases(
    const net::ModelSpec& model, const net::ModelParams& params, const SharingSpec& spec) {
    // group layers by exact shape; bases never span groups
    std::map<std::pair<int, int>, std::vector<DenseMatrix>> groups;
    for (int l = 0; l < model.num_layers(); ++l)
        groups[{model.layer_rows(l), model.layer_cols(l)}].push_back(params.weights[l]);

    std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>> out;
    int next_id = 0;
    for (const auto& [shape, weights] : groups) {
        std::vector<sharing::SharedBasis> bases = sharing::build_candidate_bases(
            weights, spec.num_bases, spec.rank, spec.strategy, spec.seed);
        for (auto& b : bases) b.id = next_id++;
        out[shape] = std::move(bases);
    }
    return out;
}

sharing::Coloring random_coloring(
    const net::ModelSpec& model,
    const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases,
    std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xabc0));
    sharing::Coloring c;
    for (int l = 0; l < model.num_layers(); ++l) {
        const auto& pool = bases.at({model.layer_rows(l), model.layer_cols(l)});
        c.assignment.push_back(pool[rng.uniform_index(pool.size())].id);
    }
    return c;
}

sharing::Coloring adjacent_pairs_coloring(
    const net::ModelSpec& model,
    const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases) {
    // pair consecutive layers within each shape group: (1,2)->B1, (3,4)->B2,
    // ... clamping to the last basis when the pool runs out
    std::map<std::pair<int, int>, int> seen;
    sharing::Coloring c;
    for (int l = 0; l < model.num_layers(); ++l) {
        const auto key = std::make_pair(model.layer_rows(l), model.layer_cols(l));
        const auto& pool = bases.at(key);
        const int index_in_group = seen[key]++;
        const int pair_index = std::min(index_in_group / 2, static_cast<int>(pool.size()) - 1);
        c.assignment.push_back(pool[pair_index].id);
    }
    return c;
}

// ---------------------------------------------------------------------------
// hashing
// ---------------------------------------------------------------------------

std::string hash_doubles(std::span<const double> values) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double d : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xff;
            h *= 0x100000001b3ull;
        }
    }
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

namespace {

std::vector<AblationRow> sweep_rows(
    const ExperimentConfig& config, const AblationSpec& sweep, const GeneratedData& data,
    const net::ModelParams& params,
    const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases);

MethodResult method_result(const std::string& name, const net::ModelSpec& model,
                           const align::GeoShareResult& run) {
    MethodResult r;
    r.name = name;
    r.loss_before = run.report.loss_before;
    r.loss_after = run.report.loss_after;
    r.delta_loss = r.loss_after - r.loss_before;
    r.compression_ratio = run.report.compression_ratio;
    r.coloring = run.coloring.assignment;
    r.automorphism_order =
        sharing::color_classes(run.coloring, model.num_layers()).automorphism_order;
    if (model.loss_kind == net::LossKind::softmax_ce) {
        r.ppl_analog_before = std::exp(r.loss_before);
        r.ppl_analog_after = std::exp(r.loss_after);
    }
    return r;
}

std::string bases_pool_hash(
    const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases) {
    std::vector<double> all;
    for (const auto& [shape, pool] : bases) {
        for (const auto& b : pool) {
            all.push_back(static_cast<double>(b.id));
            all.insert(all.end(), b.u.vec().begin(), b.u.vec().end());
            all.insert(all.end(), b.v.vec().begin(), b.v.vec().end());
        }
    }
    return hash_doubles(all);
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, PhaseTimings* timings) {
    config.validate();
    const double t0 = now_seconds();

    const GeneratedData data = gen_data(config.data, config.model);
    const TrainResult trained = train(config, data);
    const double t_train = now_seconds();

    const auto bases = build_shape_group_bases(config.model, trained.params, config.sharing);

    RunReport report;
    report.config = config;
    report.training = trained.trace;
    report.bases_hash = bases_pool_hash(bases);
    report.eval_batch_hash = hash_doubles(data.eval.inputs.vec());

    // minor axes once, shared verbatim by every method
    const std::vector<curvature::MinorAxisBundle> bundles =
        align::model_minor_axes(config.model, trained.params, data.train, config.sharing.align);
    const double t_eig = now_seconds();

    align::GeoShareResult geo = align::geo_share(config.model, trained.params, bases,
                                                 config.sharing.align, data.train, data.eval, &bundles);
    report.methods.push_back(method_result("geo-sharing", config.model, geo));

    for (const std::string& b : config.baselines) {
        if (b == "no-sharing") {
            MethodResult r;
            r.name = b;
            r.loss_before = geo.report.loss_before;
            r.loss_after = geo.report.loss_before;
            r.delta_loss = 0.0;
            r.compression_ratio = 0.0;
            for (int l = 0; l < config.model.num_layers(); ++l) r.coloring.push_back(l);
            r.automorphism_order = 1;
            if (config.model.loss_kind == net::LossKind::softmax_ce) {
                r.ppl_analog_before = std::exp(r.loss_before);
                r.ppl_analog_after = std::exp(r.loss_after);
            }
            report.methods.push_back(std::move(r));
            continue;
        }
        sharing::Coloring coloring;
        if (b == "random-coloring") {
            coloring = random_coloring(config.model, bases, config.sharing.align.seed);
        } else {  // adjacent-pairs
            coloring = adjacent_pairs_coloring(config.model, bases);
        }
        const align::GeoShareResult run =
            align::apply_coloring(config.model, trained.params, bases, coloring,
                                  config.sharing.align, data.train, data.eval, &bundles);
        report.methods.push_back(method_result(b, config.model, run));
    }

    // first-order-ratio diagnostic over the geo run's sharing perturbations
    net::ModelParams grads;
    net::loss_and_gradient(config.model, trained.params, data.train, grads);
    std::vector<double> full_delta;
    for (int l = 0; l < config.model.num_layers(); ++l) {
        const auto& la = geo.report.layers[l];
        const linalg::SymmetricOperator op =
            net::layer_hessian_operator(config.model, trained.params, data.train, l);
        report.first_order_ratio_per_layer.push_back(
            curvature::first_order_ratio(grads.weights[l].vec(), la.delta_star, op));
        full_delta.insert(full_delta.end(), la.delta_star.begin(), la.delta_star.end());
    }
    {
        std::vector<double> c_sorted = report.first_order_ratio_per_layer;
        std::sort(c_sorted.begin(), c_sorted.end());
        const std::size_t n = c_sorted.size();
        report.first_order_ratio_median =
            n % 2 == 1 ? c_sorted[n / 2] : 0.5 * (c_sorted[n / 2 - 1] + c_sorted[n / 2]);
    }
    report.first_order_ratio_global = curvature::first_order_ratio(
        grads.to_flat(), full_delta,
        net::full_hessian_operator(config.model, trained.params, data.train));

    if (config.ablation) {
        report.ablation_parameter = config.ablation->parameter;
        report.ablation_rows =
            sweep_rows(config, *config.ablation, data, trained.params, bases);
    }

    const double t_end = now_seconds();
    if (timings) {
        timings->train_seconds = t_train - t0;
        timings->eig_seconds = t_eig - t_train;
        timings->align_seconds = t_end - t_eig;
        timings->total_seconds = t_end - t0;
    }
    return report;
}

// ---------------------------------------------------------------------------
// run_oracles
// ---------------------------------------------------------------------------

OracleReport run_oracles(const ExperimentConfig& config) {
    config.validate();
    if (config.model.num_layers() > 6)
        throw std::invalid_argument("run_oracles: needs L <= 6");
    for (int l = 0; l < config.model.num_layers(); ++l)
        if (config.model.layer_param_count(l) > 300)
            throw std::invalid_argument("run_oracles: needs <= 300 params per layer");
    if (config.sharing.num_bases > 3) throw std::invalid_argument("run_oracles: needs K <= 3");

    OracleReport report;
    report.config = config;

    const GeneratedData data = gen_data(config.data, config.model);
    const TrainResult trained = train(config, data);
    const net::ModelSpec& model = config.model;
    const net::ModelParams& params = trained.params;

    // 1. finite-difference dense Hessian vs exact HVP (per layer)
    {
        double worst = 0.0;
        for (int l = 0; l < model.num_layers(); ++l) {
            const linalg::DenseMatrix fd = oracles::fd_hessian_from_gradients(
                model, params, data.train, net::Scope::single(l));
            const int dim = model.layer_param_count(l);
            double scale = fd.frobenius_norm();
            if (scale == 0.0) scale = 1.0;
            std::vector<double> e(dim, 0.0);
            linalg::DenseMatrix hv(dim, dim);
            for (int j = 0; j < dim; ++j) {
                e[j] = 1.0;
                const std::vector<double> col =
                    net::hvp(model, params, data.train, net::Scope::single(l), e);
                e[j] = 0.0;
                for (int i = 0; i < dim; ++i) hv(i, j) = col[i];
            }
            worst = std::max(worst, (hv - fd).frobenius_norm() / scale);
        }
        report.suites.push_back(
            {"fd-hessian-vs-hvp", worst < 1e-4, worst, 1e-4, "max relative Frobenius gap over layers"});
    }

    // 2. dense eigendecomposition vs Lanczos on the layer-0 Hessian
    {
        const linalg::SymmetricOperator op =
            net::layer_hessian_operator(model, params, data.train, 0);
        const int dim = op.dimension;
        linalg::DenseMatrix h(dim, dim);
        std::vector<double> e(dim, 0.0);
        for (int j = 0; j < dim; ++j) {
            e[j] = 1.0;
            const std::vector<double> col = op.apply(e);
            e[j] = 0.0;
            for (int i = 0; i < dim; ++i) h(i, j) = col[i];
        }
        for (int i = 0; i < dim; ++i)
            for (int j = i + 1; j < dim; ++j) {
                const double v = 0.5 * (h(i, j) + h(j, i));
                h(i, j) = v;
                h(j, i) = v;
            }
        const linalg::EigenPairs dense = linalg::sym_eig_dense(h);
        const int top = std::min(5, dim);
        linalg::LanczosConfig cfg;
        cfg.max_iters = dim;
        cfg.tol = 1e-10;
        cfg.seed = mix_seed(config.sharing.seed, 0x0c);
        const linalg::EigenPairs krylov = linalg::lanczos_top_eigs(op, top, cfg);
        double worst_val = 0.0;
        const double scale = std::max(std::abs(dense.values.front()), 1e-12);
        for (int k = 0; k < top; ++k)
            worst_val = std::max(worst_val, std::abs(krylov.values[k] - dense.values[k]) / scale);
        const std::vector<std::vector<double>> da(dense.vectors.begin(), dense.vectors.begin() + top);
        const std::vector<std::vector<double>> ka(krylov.vectors.begin(), krylov.vectors.begin() + top);
        const double angle = oracles::subspace_max_principal_angle(da, ka);
        const bool pass = worst_val < 1e-8 && angle < 1e-6;
        report.suites.push_back({"dense-eig-vs-lanczos", pass, std::max(worst_val, angle), 1e-6,
                                 "max(value rel err, principal angle)"});
    }

    // 3. exhaustive coloring search vs greedy selection
    {
        const auto bases = build_shape_group_bases(model, params, config.sharing);
        align::AlignConfig acfg = config.sharing.align;
        const align::GeoShareResult geo =
            align::geo_share(model, params, bases, acfg, data.train, data.eval);
        std::vector<std::vector<double>> energies;
        std::vector<std::vector<int>> ids;
        for (const auto& la : geo.report.layers) {
            std::vector<double> row;
            std::vector<int> id_row;
            for (const auto& [id, e] : la.perp_energy_per_candidate) {
                id_row.push_back(id);
                row.push_back(e);
            }
            energies.push_back(std::move(row));
            ids.push_back(std::move(id_row));
        }
        const oracles::ExhaustiveColoring ex = oracles::exhaustive_coloring_minimum(energies);
        double greedy_total = 0.0;
        for (std::size_t l = 0; l < energies.size(); ++l) {
            const auto& id_row = ids[l];
            const auto it = std::find(id_row.begin(), id_row.end(), geo.coloring.assignment[l]);
            greedy_total += energies[l][std::distance(id_row.begin(), it)];
        }
        const double gap = std::abs(greedy_total - ex.total);
        report.suites.push_back({"exhaustive-coloring-vs-greedy", gap == 0.0, gap, 0.0,
                                 "absolute energy gap (must be exactly zero)"});
    }

    // 4. explicit projector vs decompose
    {
        const linalg::SymmetricOperator op =
            net::layer_hessian_operator(model, params, data.train, 0);
        curvature::MinorAxisOptions opts = config.sharing.align.axes;
        const int t = std::min(config.sharing.align.t, op.dimension - 1);
        const curvature::MinorAxisBundle bundle = curvature::minor_axes(op, t, opts, 0);
        const linalg::DenseMatrix proj = oracles::explicit_projector(bundle);
        Rng rng(mix_seed(config.sharing.seed, 0x4d));
        double worst = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> delta(op.dimension);
            for (double& x : delta) x = rng.gaussian();
            const curvature::PerturbationSplit split = curvature::decompose(delta, bundle);
            const std::vector<double> p = proj.apply(delta);
            double err = 0.0;
            for (int i = 0; i < op.dimension; ++i)
                err = std::max(err, std::abs(p[i] - split.delta_perp[i]));
            worst = std::max(worst, err / std::max(1.0, linalg::norm2(delta)));
        }
        report.suites.push_back(
            {"projector-vs-decompose", worst < 1e-10, worst, 1e-10, "max relative projection gap"});
    }

    report.all_passed = std::all_of(report.suites.begin(), report.suites.end(),
                                    [](const OracleSuite& s) { return s.pass; });
    return report;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

namespace {

std::vector<AblationRow> sweep_rows(
    const ExperimentConfig& config, const AblationSpec& sweep, const GeneratedData& data,
    const net::ModelParams& params,
    const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases) {
    std::vector<AblationRow> rows;
    for (double value : sweep.values) {
        align::AlignConfig acfg = config.sharing.align;
        if (sweep.parameter == "beta") {
            acfg.beta = value;
        } else {
            acfg.t = static_cast<int>(value);
        }
        const align::GeoShareResult run =
            align::geo_share(config.model, params, bases, acfg, data.train, data.eval);
        AblationRow row;
        row.value = value;
        row.delta_loss = run.report.loss_after - run.report.loss_before;
        for (const auto& la : run.report.layers) {
            row.surrogate_cost_before += la.surrogate_cost_before;
            row.surrogate_cost_after += la.surrogate_cost_after;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

AblationTable ablate(const ExperimentConfig& config, const AblationSpec& sweep,
                     PhaseTimings* timings) {
    config.validate();
    if (sweep.values.empty()) throw std::invalid_argument("ablate: sweep must be nonempty");
    const double t0 = now_seconds();

    const GeneratedData data = gen_data(config.data, config.model);
    const TrainResult trained = train(config, data);
    const auto bases = build_shape_group_bases(config.model, trained.params, config.sharing);

    AblationTable table;
    table.config = config;
    table.parameter = sweep.parameter;
    table.rows = sweep_rows(config, sweep, data, trained.params, bases);
    if (timings) timings->total_seconds = now_seconds() - t0;
    return table;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

std::string RunReport::to_json() const {
    ordered_json j;
    j["schema_version"] = 1;
    j["config"] = config_echo(config);
    j["training"] = {{"final_train_loss", training.final_loss},
                     {"final_grad_norm", training.final_grad_norm},
                     {"steps_taken", training.steps_taken},
                     {"converged", training.converged}};
    ordered_json methods = ordered_json::array();
    for (const auto& m : this->methods) {
        ordered_json rec;
        rec["name"] = m.name;
        rec["loss_before"] = m.loss_before;
        rec["loss_after"] = m.loss_after;
        rec["delta_loss"] = m.delta_loss;
        rec["ppl_analog_before"] = m.ppl_analog_before ? ordered_json(*m.ppl_analog_before) : ordered_json(nullptr);
        rec["ppl_analog_after"] = m.ppl_analog_after ? ordered_json(*m.ppl_analog_after) : ordered_json(nullptr);
        rec["compression_ratio"] = m.compression_ratio ? ordered_json(*m.compression_ratio) : ordered_json(nullptr);
        rec["coloring"] = m.coloring;
        rec["automorphism_order"] = m.automorphism_order;
        methods.push_back(std::move(rec));
    }
    j["methods"] = methods;
    j["first_order_ratio"] = {{"per_layer", first_order_ratio_per_layer},
                              {"median", first_order_ratio_median},
                              {"global", first_order_ratio_global}};
    if (ablation_rows.empty()) {
        j["ablation"] = nullptr;
    } else {
        ordered_json rows = ordered_json::array();
        for (const auto& r : ablation_rows) {
            rows.push_back({{"value", r.value},
                            {"delta_loss", r.delta_loss},
                            {"surrogate_cost_before", r.surrogate_cost_before},
                            {"surrogate_cost_after", r.surrogate_cost_after}});
        }
        j["ablation"] = {{"parameter", ablation_parameter}, {"rows", rows}};
    }
    j["hashes"] = {{"bases", bases_hash}, {"eval_batch", eval_batch_hash}};
    return j.dump(2);
}

std::string RunReport::to_csv() const {
    std::ostringstream csv;
    csv << "method,loss_before,loss_after,delta_loss,compression_ratio,automorphism_order\n";
    csv.precision(17);
    for (const auto& m : methods) {
        csv << m.name << "," << m.loss_before << "," << m.loss_after << "," << m.delta_loss << ",";
        if (m.compression_ratio) csv << *m.compression_ratio;
        csv << "," << m.automorphism_order << "\n";
    }
    return csv.str();
}

std::string PhaseTimings::to_json() const {
    ordered_json j;
    j["train_seconds"] = train_seconds;
    j["eig_seconds"] = eig_seconds;
    j["align_seconds"] = align_seconds;
    j["total_seconds"] = total_seconds;
    return j.dump(2);
}

std::string OracleReport::to_json() const {
    ordered_json j;
    j["schema_version"] = 1;
    j["config"] = config_echo(config);
    ordered_json suites = ordered_json::array();
    for (const auto& s : this->suites) {
        suites.push_back({{"name", s.name},
                          {"pass", s.pass},
                          {"measured", s.measured},
                          {"tolerance", s.tolerance},
                          {"detail", s.detail}});
    }
    j["suites"] = suites;
    j["all_passed"] = all_passed;
    return j.dump(2);
}

std::string OracleReport::to_csv() const {
    std::ostringstream csv;
    csv << "suite,pass,measured,tolerance\n";
    csv.precision(17);
    for (const auto& s : suites)
        csv << s.name << "," << (s.pass ? 1 : 0) << "," << s.measured << "," << s.tolerance << "\n";
    return csv.str();
}

std::string AblationTable::to_json() const {
    ordered_json j;
    j["schema_version"] = 1;
    j["config"] = config_echo(config);
    j["parameter"] = parameter;
    ordered_json rows = ordered_json::array();
    for (const auto& r : this->rows) {
        rows.push_back({{"value", r.value},
                        {"delta_loss", r.delta_loss},
                        {"surrogate_cost_before", r.surrogate_cost_before},
                        {"surrogate_cost_after", r.surrogate_cost_after}});
    }
    j["rows"] = rows;
    return j.dump(2);
}

std::string AblationTable::to_csv() const {
    std::ostringstream csv;
    csv << "value,delta_loss,surrogate_cost_before,surrogate_cost_after\n";
    csv.precision(17);
    for (const auto& r : rows)
        csv << r.value << "," << r.delta_loss << "," << r.surrogate_cost_before << ","
            << r.surrogate_cost_after << "\n";
    return csv.str();
}

}  // namespace geoshare::harness

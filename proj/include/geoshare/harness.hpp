// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geoshare/aligner.hpp"
#include "geoshare/net.hpp"
#include "geoshare/sharing.hpp"

namespace geoshare::harness {

/// Planted-cluster construction: every layer's weight is one of `clusters`
/// shared center matrices plus per-layer noise, so cross-layer structure
/// exists for the sharing machinery to discover.
struct PlantedSpec {
    int clusters = 2;
    int center_rank = 4;
    int strong_rank = 4;         // leading directions at full scale
    double weak_scale = 1.0;     // relative scale of the remaining directions
    bool disjoint_subspaces = false;
    double center_scale = 3.5;   // Frobenius norm of each center
    double weight_noise = 0.1;   // ||noise||_F relative to ||center||_F
};

struct DataSpec {
    std::string task = "teacher";  // "identity" | "teacher" | "planted-cluster"
    int n_train = 64;
    int n_eval = 256;
    double noise = 0.0;            // train-target noise (eval targets stay clean)
    std::uint64_t seed = 1;
    double teacher_scale = 1.0;    // teacher init scale for the "teacher" task
    PlantedSpec planted;
};

struct TrainSpec {
    std::string optimizer = "adam";  // "sgd" | "adam"
    int steps = 2000;
    double learning_rate = 2e-3;
    bool cosine_decay = true;
    double grad_norm_target = 1e-6;
    std::uint64_t seed = 2;
    std::string init = "random";     // "random" | "teacher-perturbed" | "generated"
    double init_scale = 1.0;
    double init_noise = 0.05;        // elementwise sigma for teacher-perturbed init
};

struct SharingSpec {
    int num_bases = 2;
    int rank = 3;
    sharing::BasisStrategy strategy = sharing::BasisStrategy::spectral_cluster;
    std::uint64_t seed = 3;
    align::AlignConfig align;
};

struct AblationSpec {
    std::string parameter = "beta";  // "beta" | "t"
    std::vector<double> values;
};

struct ExperimentConfig {
    net::ModelSpec model;
    DataSpec data;
    TrainSpec training;
    SharingSpec sharing;
    std::vector<std::string> baselines;  // of {"random-coloring","adjacent-pairs","no-sharing"}
    std::optional<AblationSpec> ablation;
    std::string out_dir;

    void validate() const;
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig config_from_json_file(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);

/// Re-derive every section seed from one master seed (CLI --seed override).
void override_master_seed(ExperimentConfig& config, std::uint64_t master);

struct GeneratedData {
    net::Batch train;
    net::Batch eval;
    std::optional<net::ModelParams> teacher;
    std::optional<net::ModelParams> student_init;  // planted tasks
    std::vector<int> planted_assignment;
};

GeneratedData gen_data(const DataSpec& data, const net::ModelSpec& model);

struct TrainTrace {
    std::vector<double> loss_samples;
    double final_loss = 0.0;
    double final_grad_norm = 0.0;
    int steps_taken = 0;
    bool converged = false;
};

struct TrainResult {
    net::ModelParams params;
    TrainTrace trace;
};

TrainResult train(const ExperimentConfig& config, const GeneratedData& data);

struct MethodResult {
    std::string name;
    double loss_before = 0.0;
    double loss_after = 0.0;
    double delta_loss = 0.0;
    std::optional<double> ppl_analog_before;  // exp(loss), cross-entropy tasks only
    std::optional<double> ppl_analog_after;
    std::optional<double> compression_ratio;
    std::vector<int> coloring;
    unsigned long long automorphism_order = 1;
};

struct AblationRow {
    double value = 0.0;
    double delta_loss = 0.0;
    double surrogate_cost_before = 0.0;
    double surrogate_cost_after = 0.0;
};

struct RunReport {
    ExperimentConfig config;
    TrainTrace training;
    std::vector<MethodResult> methods;  // geo-sharing first
    std::vector<double> first_order_ratio_per_layer;
    double first_order_ratio_median = 0.0;
    double first_order_ratio_global = 0.0;
    std::string bases_hash;
    std::string eval_batch_hash;
    // embedded sweep when the config carries an ablation section
    std::string ablation_parameter;
    std::vector<AblationRow> ablation_rows;

    std::string to_json() const;
    std::string to_csv() const;
};

/// Wall-clock phase split, written to a separate timing file so the report
/// itself stays byte-deterministic.
struct PhaseTimings {
    double train_seconds = 0.0;
    double eig_seconds = 0.0;
    double align_seconds = 0.0;
    double total_seconds = 0.0;

    std::string to_json() const;
};

RunReport run_experiment(const ExperimentConfig& config, PhaseTimings* timings = nullptr);

struct OracleSuite {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct OracleReport {
    ExperimentConfig config;
    std::vector<OracleSuite> suites;
    bool all_passed = false;

    std::string to_json() const;
    std::string to_csv() const;
};

/// Executes the four validation suites: finite-difference dense Hessian vs
/// exact HVP, dense eigendecomposition vs Lanczos, exhaustive coloring vs
/// greedy selection, explicit projector vs decompose.
OracleReport run_oracles(const ExperimentConfig& config);

struct AblationTable {
    ExperimentConfig config;
    std::string parameter;
    std::vector<AblationRow> rows;

    std::string to_json() const;
    std::string to_csv() const;
};

AblationTable ablate(const ExperimentConfig& config, const AblationSpec& sweep,
                     PhaseTimings* timings = nullptr);

/// FNV-1a over raw little-endian doubles, reported as a hex string.
std::string hash_doubles(std::span<const double> values);

/// One basis pool per layer-shape group, ids globally unique, built from the
/// trained weights. Returned map is keyed by (rows, cols).
std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>> build_shape_group_bases(
    const net::ModelSpec& model, const net::ModelParams& params, const SharingSpec& sharing);

/// Baseline colorings over the basis pool (ids valid per shape group).
sharing::Coloring random_coloring(const net::ModelSpec& model,
                                  const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases,
                                  std::uint64_t seed);
sharing::Coloring adjacent_pairs_coloring(const net::ModelSpec& model,
                                          const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases);

}  // namespace geoshare::harness

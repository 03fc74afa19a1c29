// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include "geoshare/aligner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace geoshare::align {

using linalg::DenseMatrix;

std::string mode_name(Mode m) {
    return m == Mode::paper_literal ? "paper-literal" : "strict-sharing";
}

Mode mode_from_name(const std::string& name) {
    if (name == "paper-literal") return Mode::paper_literal;
    if (name == "strict-sharing") return Mode::strict_sharing;
    throw std::invalid_argument("unknown mode: " + name);
}

void AlignConfig::validate() const {
    if (t < 1) throw std::invalid_argument("AlignConfig: t must be positive");
    if (beta <= 0.0) throw std::invalid_argument("AlignConfig: beta must be positive");
}

CandidateDelta candidate_delta(const DenseMatrix& w, const sharing::SharedBasis& basis) {
    CandidateDelta out;
    out.coeff = sharing::fit_coefficient(w, basis);
    const DenseMatrix approx = sharing::reconstruct(basis, out.coeff);
    out.delta.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out.delta[i] = approx.vec()[i] - w.vec()[i];
    return out;
}

SelectionResult select_basis(const DenseMatrix& w, const std::vector<sharing::SharedBasis>& candidates,
                             const curvature::MinorAxisBundle& bundle) {
    if (candidates.empty()) throw std::invalid_argument("select_basis: no candidates");
    SelectionResult result;
    double best = 0.0;
    for (const auto& basis : candidates) {
        const CandidateDelta cand = candidate_delta(w, basis);
        const curvature::PerturbationSplit split = curvature::decompose(cand.delta, bundle);
        result.perp_energy[basis.id] = split.energy_perp;
        if (result.basis_id < 0 || split.energy_perp < best ||
            (split.energy_perp == best && basis.id < result.basis_id)) {
            best = split.energy_perp;
            result.basis_id = basis.id;
        }
    }
    return result;
}

LayerAlignment align_layer(const DenseMatrix& w, const sharing::SharedBasis& basis,
                           const curvature::MinorAxisBundle& bundle,
                           const linalg::SymmetricOperator& hessian, double beta, Mode mode) {
    if (beta < 0.0) throw std::invalid_argument("align_layer: beta must be non-negative");
    LayerAlignment la;
    la.layer = bundle.layer;
    la.chosen_basis = basis.id;
    la.t_requested = bundle.requested_t;
    la.t_effective = bundle.t;

    CandidateDelta cand = candidate_delta(w, basis);
    la.coeff = cand.coeff;
    la.delta_star = std::move(cand.delta);
    la.delta_norm = linalg::norm2(la.delta_star);
    la.surrogate_cost_before = curvature::quadratic_cost(la.delta_star, hessian);

    const curvature::PerturbationSplit split = curvature::decompose(la.delta_star, bundle);
    la.delta_par_norm = std::sqrt(split.energy_par);
    la.tau = beta * w.frobenius_norm();
    la.delta_par_clipped = linalg::l2_clip(split.delta_par, la.tau);
    la.delta_par_clipped_norm = linalg::norm2(la.delta_par_clipped);
    la.clip_applied = la.delta_par_norm > la.tau;

    if (mode == Mode::paper_literal) {
        DenseMatrix updated = w;
        for (std::size_t i = 0; i < updated.size(); ++i)
            updated.data()[i] += la.delta_par_clipped[i];
        la.aligned_weight = std::move(updated);
        la.surrogate_cost_after = curvature::quadratic_cost(la.delta_par_clipped, hessian);
    } else {
        la.aligned_weight = sharing::reconstruct(basis, la.coeff);
        // strict mode realizes the raw perturbation; record it honestly
        la.surrogate_cost_after = la.surrogate_cost_before;
    }
    return la;
}

std::vector<curvature::MinorAxisBundle> model_minor_axes(const net::ModelSpec& spec,
                                                         const net::ModelParams& params,
                                                         const net::Batch& calibration,
                                                         const AlignConfig& config) {
    std::vector<curvature::MinorAxisBundle> bundles;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const linalg::SymmetricOperator op = net::layer_hessian_operator(spec, params, calibration, l);
        const int t_eff = std::min(config.t, op.dimension - 1);
        if (t_eff < 1)
            throw std::invalid_argument("model_minor_axes: layer dimension too small for any minor axis");
        curvature::MinorAxisBundle b = curvature::minor_axes(op, t_eff, config.axes, l);
        b.requested_t = config.t;
        bundles.push_back(std::move(b));
    }
    return bundles;
}

namespace {

GeoShareResult run_alignment(const net::ModelSpec& spec, const net::ModelParams& params,
                             const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases,
                             const std::optional<sharing::Coloring>& fixed_coloring,
                             const AlignConfig& config, const net::Batch& calibration,
                             const net::Batch& heldout,
                             const std::vector<curvature::MinorAxisBundle>* precomputed) {
    config.validate();
    const int L = spec.num_layers();
    if (fixed_coloring && fixed_coloring->num_layers() != L)
        throw std::invalid_argument("apply_coloring: coloring length mismatch");
    if (precomputed && static_cast<int>(precomputed->size()) != L)
        throw std::invalid_argument("geo_share: precomputed bundle count mismatch");

    const std::vector<curvature::MinorAxisBundle> bundles =
        precomputed ? *precomputed : model_minor_axes(spec, params, calibration, config);

    GeoShareResult result;
    result.coloring.assignment.resize(L);
    result.aligned = params;
    result.report.mode = config.mode;
    result.report.seed = config.seed;
    result.report.config = config;

    for (int l = 0; l < L; ++l) {
        const auto key = std::make_pair(spec.layer_rows(l), spec.layer_cols(l));
        const auto it = bases.find(key);
        if (it == bases.end() || it->second.empty())
            throw std::invalid_argument("geo_share: no candidate bases for shape group of layer " +
                                        std::to_string(l));
        const auto& candidates = it->second;
        const linalg::SymmetricOperator op =
            net::layer_hessian_operator(spec, params, calibration, l);

        SelectionResult sel;
        if (fixed_coloring) {
            sel.basis_id = fixed_coloring->assignment[l];
            for (const auto& basis : candidates) {
                const CandidateDelta cand = candidate_delta(params.weights[l], basis);
                sel.perp_energy[basis.id] =
                    curvature::decompose(cand.delta, bundles[l]).energy_perp;
            }
        } else {
            sel = select_basis(params.weights[l], candidates, bundles[l]);
        }
        const auto chosen = std::find_if(candidates.begin(), candidates.end(),
                                         [&](const auto& b) { return b.id == sel.basis_id; });
        if (chosen == candidates.end())
            throw std::invalid_argument("geo_share: coloring references unknown basis id " +
                                        std::to_string(sel.basis_id));

        LayerAlignment la =
            align_layer(params.weights[l], *chosen, bundles[l], op, config.beta, config.mode);
        la.layer = l;
        la.perp_energy_per_candidate = sel.perp_energy;
        result.coloring.assignment[l] = sel.basis_id;
        result.aligned.weights[l] = la.aligned_weight;
        result.report.layers.push_back(std::move(la));
    }

    result.report.coloring = result.coloring;
    if (config.mode == Mode::strict_sharing) {
        std::vector<std::pair<int, int>> shapes;
        int rank = 0;
        for (int l = 0; l < L; ++l) {
            shapes.emplace_back(spec.layer_rows(l), spec.layer_cols(l));
            rank = bases.at({spec.layer_rows(l), spec.layer_cols(l)}).front().rank();
        }
        result.report.rank = rank;
        result.report.compression_ratio =
            sharing::compression_ratio(shapes, result.coloring, rank);
    } else if (!bases.empty()) {
        result.report.rank = bases.begin()->second.front().rank();
    }
    result.report.loss_before = net::loss(spec, params, heldout);
    result.report.loss_after = net::loss(spec, result.aligned, heldout);
    return result;
}

}  // namespace

GeoShareResult geo_share(const net::ModelSpec& spec, const net::ModelParams& params,
                         const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases,
                         const AlignConfig& config, const net::Batch& calibration,
                         const net::Batch& heldout,
                         const std::vector<curvature::MinorAxisBundle>* bundles) {
    return run_alignment(spec, params, bases, std::nullopt, config, calibration, heldout, bundles);
}

GeoShareResult apply_coloring(const net::ModelSpec& spec, const net::ModelParams& params,
                              const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases,
                              const sharing::Coloring& coloring, const AlignConfig& config,
                              const net::Batch& calibration, const net::Batch& heldout,
                              const std::vector<curvature::MinorAxisBundle>* bundles) {
    return run_alignment(spec, params, bases, coloring, config, calibration, heldout, bundles);
}

std::string AlignmentReport::to_json() const {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["mode"] = mode_name(mode);
    j["seed"] = seed;
    j["rank"] = rank;
    j["config"] = {{"t", config.t},
                   {"beta", config.beta},
                   {"mode", mode_name(config.mode)},
                   {"policy", config.axes.policy == curvature::UnconvergedPolicy::strict
                                  ? "strict"
                                  : "best-effort"},
                   {"dense_dimension_limit", config.axes.dense_dimension_limit},
                   {"by_magnitude", config.axes.by_magnitude},
                   {"lanczos", {{"max_iters", config.axes.lanczos.max_iters},
                                {"tol", config.axes.lanczos.tol},
                                {"seed", config.axes.lanczos.seed}}}};
    j["coloring"] = coloring.assignment;
    if (compression_ratio) {
        j["compression_ratio"] = *compression_ratio;
    } else {
        j["compression_ratio"] = nullptr;
    }
    j["loss_before"] = loss_before;
    j["loss_after"] = loss_after;
    nlohmann::ordered_json per_layer = nlohmann::ordered_json::array();
    for (const auto& la : layers) {
        nlohmann::ordered_json rec;
        rec["layer"] = la.layer;
        rec["chosen_basis"] = la.chosen_basis;
        nlohmann::ordered_json energies = nlohmann::ordered_json::object();
        for (const auto& [id, e] : la.perp_energy_per_candidate)
            energies[std::to_string(id)] = e;
        rec["perp_energy_per_candidate"] = energies;
        rec["tau"] = la.tau;
        rec["delta_norm"] = la.delta_norm;
        rec["delta_par_norm"] = la.delta_par_norm;
        rec["delta_par_clipped_norm"] = la.delta_par_clipped_norm;
        rec["clip_applied"] = la.clip_applied;
        rec["t_requested"] = la.t_requested;
        rec["t_effective"] = la.t_effective;
        rec["surrogate_cost_before"] = la.surrogate_cost_before;
        rec["surrogate_cost_after"] = la.surrogate_cost_after;
        per_layer.push_back(std::move(rec));
    }
    j["layers"] = per_layer;
    return j.dump(2);
}

}  // namespace geoshare::align

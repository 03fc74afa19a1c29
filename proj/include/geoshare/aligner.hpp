// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geoshare/curvature.hpp"
#include "geoshare/net.hpp"
#include "geoshare/sharing.hpp"

namespace geoshare::align {

/// paper_literal keeps the original weight and adds only the clipped
/// flat-subspace component of the sharing perturbation (the exact update
/// rule; stores nothing). strict_sharing rebuilds the weight purely from the
/// shared factors, which is what realizes the reported compression ratio.
enum class Mode { paper_literal, strict_sharing };

std::string mode_name(Mode m);
Mode mode_from_name(const std::string& name);

struct AlignConfig {
    int t = 550;          // capped at layer dimension - 1 before use
    double beta = 5e-2;   // trust region radius factor: tau = beta ||W||_F
    Mode mode = Mode::strict_sharing;
    curvature::MinorAxisOptions axes;
    std::uint64_t seed = 0;

    void validate() const;
};

struct CandidateDelta {
    linalg::DenseMatrix coeff;   // r x r least-squares coefficient
    std::vector<double> delta;   // vec(U S V^T - W)
};

/// Sharing perturbation of one candidate basis for one layer.
CandidateDelta candidate_delta(const linalg::DenseMatrix& w, const sharing::SharedBasis& basis);

struct SelectionResult {
    int basis_id = -1;
    std::map<int, double> perp_energy;  // basis id -> ||delta_perp||^2
};

/// Pick the basis with minimal high-curvature energy; ties go to the lowest
/// basis id.
SelectionResult select_basis(const linalg::DenseMatrix& w,
                             const std::vector<sharing::SharedBasis>& candidates,
                             const curvature::MinorAxisBundle& bundle);

struct LayerAlignment {
    int layer = -1;
    int chosen_basis = -1;
    linalg::DenseMatrix coeff;
    std::vector<double> delta_star;         // raw sharing perturbation
    std::vector<double> delta_par_clipped;  // clipped flat component
    double tau = 0.0;
    double delta_norm = 0.0;
    double delta_par_norm = 0.0;
    double delta_par_clipped_norm = 0.0;
    bool clip_applied = false;
    std::map<int, double> perp_energy_per_candidate;
    linalg::DenseMatrix aligned_weight;
    int t_requested = 0;
    int t_effective = 0;
    // surrogate quadratic costs 1/2 d^T H d of the raw perturbation and of
    // the realized one (mode-dependent)
    double surrogate_cost_before = 0.0;
    double surrogate_cost_after = 0.0;
};

/// Alignment of one layer against its chosen basis: project out the top-t
/// curvature component, clip the remainder to tau = beta ||W||_F, apply the
/// mode's update rule.
LayerAlignment align_layer(const linalg::DenseMatrix& w, const sharing::SharedBasis& basis,
                           const curvature::MinorAxisBundle& bundle,
                           const linalg::SymmetricOperator& hessian, double beta, Mode mode);

struct AlignmentReport {
    std::vector<LayerAlignment> layers;
    sharing::Coloring coloring;
    std::optional<double> compression_ratio;  // strict mode only
    double loss_before = 0.0;
    double loss_after = 0.0;
    int rank = 0;
    Mode mode = Mode::strict_sharing;
    std::uint64_t seed = 0;
    AlignConfig config;

    std::string to_json() const;
};

struct GeoShareResult {
    sharing::Coloring coloring;
    net::ModelParams aligned;
    AlignmentReport report;
};

/// The full loop: per-layer minor axes from the calibration batch, basis
/// selection by minimal high-curvature energy, alignment, and report
/// assembly (losses evaluated on the held-out batch). Pass precomputed
/// bundles to reuse one set of axes across methods.
GeoShareResult geo_share(const net::ModelSpec& spec, const net::ModelParams& params,
                         const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases,
                         const AlignConfig& config, const net::Batch& calibration,
                         const net::Batch& heldout,
                         const std::vector<curvature::MinorAxisBundle>* bundles = nullptr);

/// Same alignment machinery with a fixed, externally supplied coloring
/// (baselines reuse it so every method consumes identical bases and axes).
GeoShareResult apply_coloring(const net::ModelSpec& spec, const net::ModelParams& params,
                              const std::map<std::pair<int, int>, std::vector<sharing::SharedBasis>>& bases,
                              const sharing::Coloring& coloring, const AlignConfig& config,
                              const net::Batch& calibration, const net::Batch& heldout,
                              const std::vector<curvature::MinorAxisBundle>* bundles = nullptr);

/// Per-layer minor-axis bundles for every layer of the model, computed once
/// and shared by selection, alignment and diagnostics.
std::vector<curvature::MinorAxisBundle> model_minor_axes(const net::ModelSpec& spec,
                                                         const net::ModelParams& params,
                                                         const net::Batch& calibration,
                                                         const AlignConfig& config);

}  // namespace geoshare::align

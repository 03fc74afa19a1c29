// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geoshare/linalg.hpp"

namespace geoshare::net {

/// Hidden-layer activation. The last layer is always linear. The smoothed
/// relu is a softplus with configurable sharpness so every Hessian quantity
/// stays twice-differentiable.
enum class Activation { identity, tanh_act, softplus };

enum class LossKind { mse, softmax_ce };

struct ModelSpec {
    std::vector<int> layer_dims;  // d_0 .. d_L
    Activation activation = Activation::tanh_act;
    double softplus_sharpness = 8.0;
    LossKind loss_kind = LossKind::mse;

    int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    int layer_rows(int layer) const { return layer_dims[layer + 1]; }
    int layer_cols(int layer) const { return layer_dims[layer]; }
    int layer_param_count(int layer) const { return layer_rows(layer) * layer_cols(layer); }
    int total_param_count() const;

    void validate() const;
};

/// Bias-free weights, one dense matrix per layer, weights[l] of shape
/// d_{l+1} x d_l. Layers are indexed from 0.
struct ModelParams {
    std::vector<linalg::DenseMatrix> weights;

    static ModelParams zeros(const ModelSpec& spec);
    static ModelParams gaussian_init(const ModelSpec& spec, std::uint64_t seed, double scale);

    std::vector<double> to_flat() const;
    static ModelParams from_flat(const ModelSpec& spec, std::span<const double> flat);

    double gradient_norm() const;  // Frobenius norm over all layers
};

/// Row-per-sample batch. `targets` is used by the MSE loss, `labels` by
/// softmax cross-entropy; the unused field stays empty.
struct Batch {
    linalg::DenseMatrix inputs;   // n x d_0
    linalg::DenseMatrix targets;  // n x d_L (mse)
    std::vector<int> labels;      // n entries in [0, d_L) (softmax_ce)

    int sample_count() const { return inputs.rows(); }
};

/// Parameter scope for Hessian-vector products: a single layer (all other
/// layers held fixed) or the whole model.
struct Scope {
    int layer = -1;
    static Scope all() { return {}; }
    static Scope single(int l) { return {l}; }
    bool is_all() const { return layer < 0; }
};

double loss(const ModelSpec& spec, const ModelParams& params, const Batch& batch);

ModelParams gradient(const ModelSpec& spec, const ModelParams& params, const Batch& batch);

double loss_and_gradient(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                         ModelParams& grad_out);

/// Exact H v over the chosen scope, computed forward-over-reverse (the
/// directional derivative of the gradient). Never finite differences.
std::vector<double> hvp(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                        Scope scope, std::span<const double> v);

/// Matrix-free Hessian of the loss restricted to vec(W_layer).
linalg::SymmetricOperator layer_hessian_operator(const ModelSpec& spec, const ModelParams& params,
                                                 const Batch& batch, int layer);

/// Matrix-free Hessian over all parameters (used by the first-order-ratio
/// diagnostic, which is defined over the whole parameter vector).
linalg::SymmetricOperator full_hessian_operator(const ModelSpec& spec, const ModelParams& params,
                                                const Batch& batch);

/// Network forward pass; returns the n x d_L output matrix.
linalg::DenseMatrix predict(const ModelSpec& spec, const ModelParams& params,
                            const linalg::DenseMatrix& inputs);

// --- checkpoint format ----------------------------------------------------
// A directory holding manifest.json plus one raw little-endian f64 binary
// file per layer, row-major. Round-trips bit-exactly.

void save_checkpoint(const std::filesystem::path& dir, const ModelSpec& spec,
                     const ModelParams& params, std::uint64_t seed);

struct Checkpoint {
    ModelSpec spec;
    ModelParams params;
    std::uint64_t seed = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);
std::string loss_name(LossKind k);
LossKind loss_from_name(const std::string& name);

}  // namespace geoshare::net

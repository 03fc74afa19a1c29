// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include "geoshare/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace geoshare::net {

using linalg::DenseMatrix;

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

struct ActDerivs {
    double value;
    double d1;
    double d2;
};

ActDerivs activation_eval(Activation act, double sharpness, double z) {
    switch (act) {
        case Activation::identity:
            return {z, 1.0, 0.0};
        case Activation::tanh_act: {
            const double a = std::tanh(z);
            const double d1 = 1.0 - a * a;
            return {a, d1, -2.0 * a * d1};
        }
        case Activation::softplus: {
            const double k = sharpness;
            const double kz = k * z;
            double value;
            if (kz > 30.0) {
                value = z;
            } else if (kz < -30.0) {
                value = std::exp(kz) / k;
            } else {
                value = std::log1p(std::exp(kz)) / k;
            }
            const double s = 1.0 / (1.0 + std::exp(-kz));  // sigmoid(kz)
            return {value, s, k * s * (1.0 - s)};
        }
    }
    throw std::logic_error("unreachable activation");
}

void check_shapes(const ModelSpec& spec, const ModelParams& params, const Batch& batch) {
    spec.validate();
    if (static_cast<int>(params.weights.size()) != spec.num_layers())
        throw std::invalid_argument("model: wrong number of weight matrices");
    for (int l = 0; l < spec.num_layers(); ++l) {
        const auto& w = params.weights[l];
        if (w.rows() != spec.layer_rows(l) || w.cols() != spec.layer_cols(l))
            throw std::invalid_argument("model: weight shape mismatch at layer " + std::to_string(l));
    }
    if (batch.inputs.rows() < 1) throw std::invalid_argument("batch: needs at least one sample");
    if (batch.inputs.cols() != spec.input_dim())
        throw std::invalid_argument("batch: input width does not match model");
    if (spec.loss_kind == LossKind::mse) {
        if (batch.targets.rows() != batch.inputs.rows() || batch.targets.cols() != spec.output_dim())
            throw std::invalid_argument("batch: target shape does not match model");
    } else {
        if (static_cast<int>(batch.labels.size()) != batch.inputs.rows())
            throw std::invalid_argument("batch: label count does not match samples");
        for (int y : batch.labels)
            if (y < 0 || y >= spec.output_dim())
                throw std::invalid_argument("batch: label out of range");
    }
}

/// Per-layer forward state. activations[0] is the input batch; for hidden
/// layers d1/d2 hold the activation derivatives at the pre-activations.
struct ForwardTrace {
    std::vector<DenseMatrix> activations;  // L+1 entries, n x d_l
    std::vector<DenseMatrix> d1;           // L entries (last layer unused)
    std::vector<DenseMatrix> d2;
};

ForwardTrace forward(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                     bool want_second) {
    const int n = batch.inputs.rows();
    const int L = spec.num_layers();
    ForwardTrace tr;
    tr.activations.reserve(L + 1);
    tr.activations.push_back(batch.inputs);
    tr.d1.resize(L);
    tr.d2.resize(L);
    for (int l = 0; l < L; ++l) {
        const DenseMatrix z = tr.activations[l] * params.weights[l].transposed();
        if (!z.all_finite())
            throw std::runtime_error("forward: non-finite values at layer " + std::to_string(l));
        if (l == L - 1) {
            tr.activations.push_back(z);
            break;
        }
        DenseMatrix a(n, z.cols());
        DenseMatrix d1(n, z.cols());
        DenseMatrix d2 = want_second ? DenseMatrix(n, z.cols()) : DenseMatrix();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < z.cols(); ++j) {
                const ActDerivs ad = activation_eval(spec.activation, spec.softplus_sharpness, z(i, j));
                a(i, j) = ad.value;
                d1(i, j) = ad.d1;
                if (want_second) d2(i, j) = ad.d2;
            }
        }
        tr.activations.push_back(std::move(a));
        tr.d1[l] = std::move(d1);
        if (want_second) tr.d2[l] = std::move(d2);
    }
    return tr;
}

/// Loss value and dJ/dA_L for the configured loss.
double loss_head(const ModelSpec& spec, const Batch& batch, const DenseMatrix& out,
                 DenseMatrix* grad_out) {
    const int n = out.rows();
    const int d = out.cols();
    if (spec.loss_kind == LossKind::mse) {
        double s = 0.0;
        if (grad_out) *grad_out = DenseMatrix(n, d);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                const double r = out(i, j) - batch.targets(i, j);
                s += r * r;
                if (grad_out) (*grad_out)(i, j) = r / n;
            }
        }
        return s / (2.0 * n);
    }
    // softmax cross-entropy over logits
    double s = 0.0;
    if (grad_out) *grad_out = DenseMatrix(n, d);
    for (int i = 0; i < n; ++i) {
        double zmax = out(i, 0);
        for (int j = 1; j < d; ++j) zmax = std::max(zmax, out(i, j));
        double lse = 0.0;
        for (int j = 0; j < d; ++j) lse += std::exp(out(i, j) - zmax);
        lse = zmax + std::log(lse);
        s += lse - out(i, batch.labels[i]);
        if (grad_out) {
            for (int j = 0; j < d; ++j) {
                const double p = std::exp(out(i, j) - lse);
                (*grad_out)(i, j) = (p - (j == batch.labels[i] ? 1.0 : 0.0)) / n;
            }
        }
    }
    return s / n;
}

/// Tangent of the loss-head gradient given output tangent.
DenseMatrix loss_head_tangent(const ModelSpec& spec, const DenseMatrix& out,
                              const DenseMatrix& out_dot) {
    const int n = out.rows();
    const int d = out.cols();
    DenseMatrix g_dot(n, d);
    if (spec.loss_kind == LossKind::mse) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) g_dot(i, j) = out_dot(i, j) / n;
        return g_dot;
    }
    for (int i = 0; i < n; ++i) {
        double zmax = out(i, 0);
        for (int j = 1; j < d; ++j) zmax = std::max(zmax, out(i, j));
        double lse = 0.0;
        for (int j = 0; j < d; ++j) lse += std::exp(out(i, j) - zmax);
        lse = zmax + std::log(lse);
        double sdot = 0.0;  // p . out_dot
        for (int j = 0; j < d; ++j) sdot += std::exp(out(i, j) - lse) * out_dot(i, j);
        for (int j = 0; j < d; ++j) {
            const double p = std::exp(out(i, j) - lse);
            g_dot(i, j) = p * (out_dot(i, j) - sdot) / n;
        }
    }
    return g_dot;
}

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c = a;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) c(i, j) *= b(i, j);
    return c;
}

ModelParams backward(const ModelSpec& spec, const ModelParams& params, const ForwardTrace& tr,
                     DenseMatrix g /* dJ/dA_L */) {
    const int L = spec.num_layers();
    ModelParams grads = ModelParams::zeros(spec);
    for (int l = L - 1; l >= 0; --l) {
        const DenseMatrix d = (l == L - 1) ? g : hadamard(g, tr.d1[l]);
        grads.weights[l] = d.transposed() * tr.activations[l];
        if (l > 0) g = d * params.weights[l];
    }
    return grads;
}

}  // namespace

int ModelSpec::total_param_count() const {
    int total = 0;
    for (int l = 0; l < num_layers(); ++l) total += layer_param_count(l);
    return total;
}

void ModelSpec::validate() const {
    if (layer_dims.size() < 2) throw std::invalid_argument("ModelSpec: need at least two dims");
    for (int d : layer_dims)
        if (d < 1) throw std::invalid_argument("ModelSpec: dims must be positive");
    if (activation == Activation::softplus && softplus_sharpness <= 0.0)
        throw std::invalid_argument("ModelSpec: softplus sharpness must be positive");
}

ModelParams ModelParams::zeros(const ModelSpec& spec) {
    ModelParams p;
    for (int l = 0; l < spec.num_layers(); ++l)
        p.weights.emplace_back(spec.layer_rows(l), spec.layer_cols(l));
    return p;
}

ModelParams ModelParams::gaussian_init(const ModelSpec& spec, std::uint64_t seed, double scale) {
    Rng rng(mix_seed(seed, 0xd1));
    ModelParams p;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const double s = scale / std::sqrt(static_cast<double>(spec.layer_cols(l)));
        p.weights.push_back(DenseMatrix::gaussian(spec.layer_rows(l), spec.layer_cols(l), rng, s));
    }
    return p;
}

std::vector<double> ModelParams::to_flat() const {
    std::vector<double> flat;
    for (const auto& w : weights) flat.insert(flat.end(), w.vec().begin(), w.vec().end());
    return flat;
}

ModelParams ModelParams::from_flat(const ModelSpec& spec, std::span<const double> flat) {
    if (static_cast<int>(flat.size()) != spec.total_param_count())
        throw std::invalid_argument("from_flat: length mismatch");
    ModelParams p;
    std::size_t off = 0;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const std::size_t count = static_cast<std::size_t>(spec.layer_param_count(l));
        p.weights.emplace_back(spec.layer_rows(l), spec.layer_cols(l),
                               std::vector<double>(flat.begin() + off, flat.begin() + off + count));
        off += count;
    }
    return p;
}

double ModelParams::gradient_norm() const {
    double s = 0.0;
    for (const auto& w : weights)
        for (double x : w.vec()) s += x * x;
    return std::sqrt(s);
}

double loss(const ModelSpec& spec, const ModelParams& params, const Batch& batch) {
    check_shapes(spec, params, batch);
    const ForwardTrace tr = forward(spec, params, batch, false);
    return loss_head(spec, batch, tr.activations.back(), nullptr);
}

ModelParams gradient(const ModelSpec& spec, const ModelParams& params, const Batch& batch) {
    ModelParams g;
    loss_and_gradient(spec, params, batch, g);
    return g;
}

double loss_and_gradient(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                         ModelParams& grad_out) {
    check_shapes(spec, params, batch);
    const ForwardTrace tr = forward(spec, params, batch, false);
    DenseMatrix g;
    const double value = loss_head(spec, batch, tr.activations.back(), &g);
    grad_out = backward(spec, params, tr, std::move(g));
    return value;
}

std::vector<double> hvp(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                        Scope scope, std::span<const double> v) {
    check_shapes(spec, params, batch);
    const int L = spec.num_layers();
    if (!scope.is_all() && (scope.layer < 0 || scope.layer >= L))
        throw std::invalid_argument("hvp: layer index out of range");
    const int expected = scope.is_all() ? spec.total_param_count()
                                        : spec.layer_param_count(scope.layer);
    if (static_cast<int>(v.size()) != expected)
        throw std::invalid_argument("hvp: direction length does not match scope");

    // direction as per-layer matrices, zero outside the scope
    ModelParams dir = ModelParams::zeros(spec);
    if (scope.is_all()) {
        dir = ModelParams::from_flat(spec, v);
    } else {
        dir.weights[scope.layer] =
            DenseMatrix(spec.layer_rows(scope.layer), spec.layer_cols(scope.layer),
                        std::vector<double>(v.begin(), v.end()));
    }

    const ForwardTrace tr = forward(spec, params, batch, true);
    const int n = batch.inputs.rows();

    // tangent forward pass
    std::vector<DenseMatrix> a_dot(L + 1);
    std::vector<DenseMatrix> z_dot(L);
    a_dot[0] = DenseMatrix(n, spec.input_dim());
    for (int l = 0; l < L; ++l) {
        DenseMatrix zd = a_dot[l] * params.weights[l].transposed() +
                         tr.activations[l] * dir.weights[l].transposed();
        if (l == L - 1) {
            a_dot[l + 1] = zd;
        } else {
            a_dot[l + 1] = hadamard(tr.d1[l], zd);
        }
        z_dot[l] = std::move(zd);
    }

    // reverse pass with tangents
    DenseMatrix g;
    loss_head(spec, batch, tr.activations.back(), &g);
    DenseMatrix g_dot = loss_head_tangent(spec, tr.activations.back(), a_dot[L]);

    ModelParams hv = ModelParams::zeros(spec);
    for (int l = L - 1; l >= 0; --l) {
        DenseMatrix d, d_dot;
        if (l == L - 1) {
            d = g;
            d_dot = g_dot;
        } else {
            d = hadamard(g, tr.d1[l]);
            d_dot = hadamard(g_dot, tr.d1[l]) + hadamard(g, hadamard(tr.d2[l], z_dot[l]));
        }
        hv.weights[l] = d_dot.transposed() * tr.activations[l] + d.transposed() * a_dot[l];
        if (l > 0) {
            g_dot = d_dot * params.weights[l] + d * dir.weights[l];
            g = d * params.weights[l];
        }
    }

    if (scope.is_all()) return hv.to_flat();
    return hv.weights[scope.layer].vec();
}

linalg::SymmetricOperator layer_hessian_operator(const ModelSpec& spec, const ModelParams& params,
                                                 const Batch& batch, int layer) {
    if (layer < 0 || layer >= spec.num_layers())
        throw std::invalid_argument("layer_hessian_operator: layer index out of range");
    linalg::SymmetricOperator op;
    op.dimension = spec.layer_param_count(layer);
    op.apply = [spec, params, batch, layer](std::span<const double> x) {
        return hvp(spec, params, batch, Scope::single(layer), x);
    };
    return op;
}

linalg::SymmetricOperator full_hessian_operator(const ModelSpec& spec, const ModelParams& params,
                                                const Batch& batch) {
    linalg::SymmetricOperator op;
    op.dimension = spec.total_param_count();
    op.apply = [spec, params, batch](std::span<const double> x) {
        return hvp(spec, params, batch, Scope::all(), x);
    };
    return op;
}

linalg::DenseMatrix predict(const ModelSpec& spec, const ModelParams& params,
                            const linalg::DenseMatrix& inputs) {
    Batch b;
    b.inputs = inputs;
    if (spec.loss_kind == LossKind::mse) {
        b.targets = DenseMatrix(inputs.rows(), spec.output_dim());
    } else {
        b.labels.assign(inputs.rows(), 0);
    }
    check_shapes(spec, params, b);
    return forward(spec, params, b, false).activations.back();
}

// --- checkpoints ------------------------------------------------------------

namespace {

std::string layer_file_name(int l) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "layer_%03d.bin", l);
    return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelSpec& spec,
                     const ModelParams& params, std::uint64_t seed) {
    spec.validate();
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["schema_version"] = 1;
    manifest["layer_dims"] = spec.layer_dims;
    manifest["activation"] = activation_name(spec.activation);
    manifest["softplus_sharpness"] = spec.softplus_sharpness;
    manifest["loss"] = loss_name(spec.loss_kind);
    manifest["seed"] = seed;
    manifest["dtype"] = "f64";
    manifest["endianness"] = "little";
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (int l = 0; l < spec.num_layers(); ++l) {
        layers.push_back({{"file", layer_file_name(l)},
                          {"rows", spec.layer_rows(l)},
                          {"cols", spec.layer_cols(l)}});
    }
    manifest["layers"] = layers;
    {
        std::ofstream f(dir / "manifest.json", std::ios::binary);
        if (!f) throw std::runtime_error("save_checkpoint: cannot open manifest for writing");
        f << manifest.dump(2) << "\n";
    }
    for (int l = 0; l < spec.num_layers(); ++l) {
        std::ofstream f(dir / layer_file_name(l), std::ios::binary);
        if (!f) throw std::runtime_error("save_checkpoint: cannot open layer file for writing");
        const auto& w = params.weights[l].vec();
        f.write(reinterpret_cast<const char*>(w.data()),
                static_cast<std::streamsize>(w.size() * sizeof(double)));
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json", std::ios::binary);
    if (!mf) throw std::runtime_error("load_checkpoint: missing manifest.json");
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.at("dtype") != "f64" || manifest.at("endianness") != "little")
        throw std::runtime_error("load_checkpoint: unsupported dtype/endianness");

    Checkpoint ck;
    ck.spec.layer_dims = manifest.at("layer_dims").get<std::vector<int>>();
    ck.spec.activation = activation_from_name(manifest.at("activation").get<std::string>());
    ck.spec.softplus_sharpness = manifest.value("softplus_sharpness", 8.0);
    ck.spec.loss_kind = loss_from_name(manifest.at("loss").get<std::string>());
    ck.seed = manifest.value("seed", 0ull);
    ck.spec.validate();

    for (const auto& entry : manifest.at("layers")) {
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        std::ifstream f(dir / entry.at("file").get<std::string>(), std::ios::binary);
        if (!f) throw std::runtime_error("load_checkpoint: missing layer file");
        std::vector<double> data(static_cast<std::size_t>(rows) * cols);
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (f.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double)))
            throw std::runtime_error("load_checkpoint: layer file truncated");
        ck.params.weights.emplace_back(rows, cols, std::move(data));
    }
    if (static_cast<int>(ck.params.weights.size()) != ck.spec.num_layers())
        throw std::runtime_error("load_checkpoint: layer count mismatch");
    return ck;
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh_act: return "tanh";
        case Activation::softplus: return "relu-smoothed";
    }
    throw std::logic_error("unreachable");
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh_act;
    if (name == "relu-smoothed" || name == "softplus") return Activation::softplus;
    throw std::invalid_argument("unknown activation: " + name);
}

std::string loss_name(LossKind k) {
    return k == LossKind::mse ? "mean-squared-error" : "softmax-cross-entropy";
}

LossKind loss_from_name(const std::string& name) {
    if (name == "mean-squared-error" || name == "mse") return LossKind::mse;
    if (name == "softmax-cross-entropy" || name == "ce") return LossKind::softmax_ce;
    throw std::invalid_argument("unknown loss: " + name);
}

}  // namespace geoshare::net

// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "geoshare/aligner.hpp"
#include "geoshare/curvature.hpp"
#include "geoshare/harness.hpp"
#include "geoshare/linalg.hpp"
#include "geoshare/net.hpp"
#include "geoshare/sharing.hpp"

namespace py = pybind11;
using namespace geoshare;
using linalg::DenseMatrix;

namespace {

DenseMatrix matrix_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    const int rows = static_cast<int>(a.shape(0));
    const int cols = static_cast<int>(a.shape(1));
    std::vector<double> data(a.data(), a.data() + static_cast<std::size_t>(rows) * cols);
    return DenseMatrix(rows, cols, std::move(data));
}

py::array_t<double> array_from_matrix(const DenseMatrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.vec().begin(), m.vec().end(), out.mutable_data());
    return out;
}

py::array_t<double> array_from_vector(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<double> vector_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
    return std::vector<double>(a.data(), a.data() + a.shape(0));
}

std::vector<DenseMatrix> matrices_from_list(const py::list& weights) {
    std::vector<DenseMatrix> out;
    for (const auto& item : weights)
        out.push_back(matrix_from_array(item.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>()));
    return out;
}

harness::ExperimentConfig config_from_py(const py::object& config) {
    if (py::isinstance<py::str>(config))
        return harness::config_from_json_text(config.cast<std::string>());
    const py::object dumps = py::module_::import("json").attr("dumps");
    return harness::config_from_json_text(dumps(config).cast<std::string>());
}

py::object json_to_py(const std::string& text) {
    return py::module_::import("json").attr("loads")(text);
}

/// Weights + batch bundle shared by the model-level bindings.
struct ModelHandle {
    net::ModelSpec spec;

    explicit ModelHandle(std::vector<int> dims, const std::string& activation,
                         const std::string& loss, double sharpness) {
        spec.layer_dims = std::move(dims);
        spec.activation = net::activation_from_name(activation);
        spec.loss_kind = net::loss_from_name(loss);
        spec.softplus_sharpness = sharpness;
        spec.validate();
    }

    net::ModelParams params(const py::list& weights) const {
        net::ModelParams p;
        p.weights = matrices_from_list(weights);
        return p;
    }

    net::Batch batch(const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                     const py::object& y) const {
        net::Batch b;
        b.inputs = matrix_from_array(x);
        if (spec.loss_kind == net::LossKind::mse) {
            b.targets = matrix_from_array(
                y.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>());
        } else {
            b.labels = y.cast<std::vector<int>>();
        }
        return b;
    }
};

}  // namespace

PYBIND11_MODULE(_geoshare, m) {
    m.doc() = "curvature-aligned cross-layer parameter sharing, C++ core";

    // --- linalg -------------------------------------------------------------
    m.def(
        "svd_truncated",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a, int rank) {
            const linalg::SvdResult r = linalg::svd_truncated(matrix_from_array(a), rank);
            return py::make_tuple(array_from_matrix(r.u), array_from_vector(r.sigma),
                                  array_from_matrix(r.v));
        },
        py::arg("a"), py::arg("rank"),
        "Best rank-r factorization (U, sigma, V) with A ~= U @ diag(sigma) @ V.T");

    m.def(
        "sym_eig_dense",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& h) {
            const linalg::EigenPairs e = linalg::sym_eig_dense(matrix_from_array(h));
            const int n = static_cast<int>(e.count());
            py::array_t<double> vectors({n, n});
            for (int k = 0; k < n; ++k)
                for (int i = 0; i < n; ++i)
                    vectors.mutable_at(k, i) = e.vectors[k][i];
            return py::make_tuple(array_from_vector(e.values), vectors);
        },
        py::arg("h"),
        "Full symmetric eigendecomposition; returns (values desc, row-per-vector matrix)");

    m.def(
        "lanczos_top_eigs",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& h, int t,
           int max_iters, double tol, std::uint64_t seed) {
            const DenseMatrix hd = matrix_from_array(h);
            linalg::LanczosConfig cfg;
            cfg.max_iters = max_iters > 0 ? max_iters : hd.rows();
            cfg.tol = tol;
            cfg.seed = seed;
            const linalg::EigenPairs e =
                linalg::lanczos_top_eigs(linalg::SymmetricOperator::from_dense(hd), t, cfg);
            const int n = hd.rows();
            const int k = static_cast<int>(e.count());
            py::array_t<double> vectors({k, n});
            for (int a = 0; a < k; ++a)
                for (int i = 0; i < n; ++i) vectors.mutable_at(a, i) = e.vectors[a][i];
            return py::make_tuple(array_from_vector(e.values), vectors,
                                  array_from_vector(e.residuals));
        },
        py::arg("h"), py::arg("t"), py::arg("max_iters") = 0, py::arg("tol") = 1e-10,
        py::arg("seed") = 0);

    m.def(
        "l2_clip",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, double tau) {
            return array_from_vector(linalg::l2_clip(vector_from_array(x), tau));
        },
        py::arg("x"), py::arg("tau"));

    // --- model --------------------------------------------------------------
    py::class_<ModelHandle>(m, "Model")
        .def(py::init<std::vector<int>, const std::string&, const std::string&, double>(),
             py::arg("layer_dims"), py::arg("activation") = "tanh",
             py::arg("loss") = "mean-squared-error", py::arg("softplus_sharpness") = 8.0)
        .def_property_readonly("total_params",
                               [](const ModelHandle& h) { return h.spec.total_param_count(); })
        .def("init_weights",
             [](const ModelHandle& h, std::uint64_t seed, double scale) {
                 py::list out;
                 for (const auto& w : net::ModelParams::gaussian_init(h.spec, seed, scale).weights)
                     out.append(array_from_matrix(w));
                 return out;
             },
             py::arg("seed"), py::arg("scale") = 1.0)
        .def("predict",
             [](const ModelHandle& h, const py::list& weights,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
                 return array_from_matrix(net::predict(h.spec, h.params(weights), matrix_from_array(x)));
             })
        .def("loss",
             [](const ModelHandle& h, const py::list& weights,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                const py::object& y) {
                 return net::loss(h.spec, h.params(weights), h.batch(x, y));
             })
        .def("gradient",
             [](const ModelHandle& h, const py::list& weights,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                const py::object& y) {
                 py::list out;
                 for (const auto& g : net::gradient(h.spec, h.params(weights), h.batch(x, y)).weights)
                     out.append(array_from_matrix(g));
                 return out;
             })
        .def("hvp",
             [](const ModelHandle& h, const py::list& weights,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                const py::object& y, const py::object& layer,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
                 const net::Scope scope =
                     layer.is_none() ? net::Scope::all() : net::Scope::single(layer.cast<int>());
                 return array_from_vector(
                     net::hvp(h.spec, h.params(weights), h.batch(x, y), scope, vector_from_array(v)));
             },
             py::arg("weights"), py::arg("x"), py::arg("y"), py::arg("layer"), py::arg("v"))
        .def("layer_hessian",
             [](const ModelHandle& h, const py::list& weights,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                const py::object& y, int layer) {
                 const net::ModelParams p = h.params(weights);
                 const net::Batch b = h.batch(x, y);
                 const linalg::SymmetricOperator op =
                     net::layer_hessian_operator(h.spec, p, b, layer);
                 DenseMatrix dense(op.dimension, op.dimension);
                 std::vector<double> e(op.dimension, 0.0);
                 for (int j = 0; j < op.dimension; ++j) {
                     e[j] = 1.0;
                     const std::vector<double> col = op.apply(e);
                     e[j] = 0.0;
                     for (int i = 0; i < op.dimension; ++i) dense(i, j) = col[i];
                 }
                 return array_from_matrix(dense);
             },
             py::arg("weights"), py::arg("x"), py::arg("y"), py::arg("layer"),
             "Dense layer Hessian assembled from exact Hessian-vector products");

    // --- sharing ------------------------------------------------------------
    m.def(
        "fit_coefficient",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& u,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& v,
           bool diagonal) {
            const sharing::SharedBasis basis{0, matrix_from_array(u), matrix_from_array(v)};
            return array_from_matrix(sharing::fit_coefficient(matrix_from_array(w), basis, diagonal));
        },
        py::arg("w"), py::arg("u"), py::arg("v"), py::arg("diagonal") = false);

    m.def(
        "reconstruct",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& u,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& v,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& s) {
            const sharing::SharedBasis basis{0, matrix_from_array(u), matrix_from_array(v)};
            return array_from_matrix(sharing::reconstruct(basis, matrix_from_array(s)));
        },
        py::arg("u"), py::arg("v"), py::arg("s"));

    m.def(
        "build_candidate_bases",
        [](const py::list& weights, int num_bases, int rank, const std::string& strategy,
           std::uint64_t seed) {
            const auto bases = sharing::build_candidate_bases(
                matrices_from_list(weights), num_bases, rank,
                sharing::basis_strategy_from_name(strategy), seed);
            py::list out;
            for (const auto& b : bases)
                out.append(py::make_tuple(b.id, array_from_matrix(b.u), array_from_matrix(b.v)));
            return out;
        },
        py::arg("weights"), py::arg("num_bases"), py::arg("rank"),
        py::arg("strategy") = "spectral-cluster", py::arg("seed") = 0);

    m.def(
        "color_classes",
        [](const std::vector<int>& assignment) {
            sharing::Coloring c;
            c.assignment = assignment;
            const sharing::ColorClasses cc =
                sharing::color_classes(c, static_cast<int>(assignment.size()));
            py::dict classes;
            for (const auto& [id, members] : cc.classes) classes[py::int_(id)] = members;
            return py::make_tuple(classes, cc.automorphism_order, cc.factor_sizes);
        },
        py::arg("assignment"),
        "Returns (classes dict, automorphism group order, class sizes)");

    m.def(
        "check_automorphism",
        [](const std::vector<int>& assignment, const std::vector<int>& pi) {
            sharing::Coloring c;
            c.assignment = assignment;
            return sharing::check_automorphism(c, pi);
        },
        py::arg("assignment"), py::arg("pi"));

    m.def(
        "compression_ratio",
        [](const std::vector<std::pair<int, int>>& shapes, const std::vector<int>& assignment,
           int rank, bool diagonal) {
            sharing::Coloring c;
            c.assignment = assignment;
            return sharing::compression_ratio(shapes, c, rank, diagonal);
        },
        py::arg("shapes"), py::arg("assignment"), py::arg("rank"), py::arg("diagonal") = false);

    // --- curvature ----------------------------------------------------------
    m.def(
        "decompose",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& delta,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& vectors) {
            curvature::MinorAxisBundle bundle;
            if (vectors.ndim() != 2) throw std::invalid_argument("vectors must be 2-D (row-per-vector)");
            for (py::ssize_t k = 0; k < vectors.shape(0); ++k) {
                std::vector<double> p(vectors.shape(1));
                for (py::ssize_t i = 0; i < vectors.shape(1); ++i) p[i] = vectors.at(k, i);
                bundle.vectors.push_back(std::move(p));
                bundle.eigenvalues.push_back(0.0);
            }
            bundle.t = static_cast<int>(bundle.vectors.size());
            const curvature::PerturbationSplit s =
                curvature::decompose(vector_from_array(delta), bundle);
            return py::make_tuple(array_from_vector(s.delta_par), array_from_vector(s.delta_perp),
                                  s.energy_par, s.energy_perp);
        },
        py::arg("delta"), py::arg("vectors"),
        "Split delta against a row-per-vector orthonormal set; returns (par, perp, e_par, e_perp)");

    m.def(
        "quadratic_cost",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& delta,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& h) {
            return curvature::quadratic_cost(
                vector_from_array(delta),
                linalg::SymmetricOperator::from_dense(matrix_from_array(h)));
        },
        py::arg("delta"), py::arg("h"));

    m.def(
        "first_order_ratio",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& grad,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& delta,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& h) {
            return curvature::first_order_ratio(
                vector_from_array(grad), vector_from_array(delta),
                linalg::SymmetricOperator::from_dense(matrix_from_array(h)));
        },
        py::arg("grad"), py::arg("delta"), py::arg("h"));

    m.def(
        "ellipsoid_axes",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& h, double level) {
            const auto axes =
                curvature::ellipsoid_axes(linalg::sym_eig_dense(matrix_from_array(h)), level);
            py::list out;
            for (const auto& a : axes)
                out.append(py::make_tuple(array_from_vector(a.direction), a.semi_axis, a.bounded));
            return out;
        },
        py::arg("h"), py::arg("level"));

    // --- harness: config-driven pipelines ------------------------------------
    m.def(
        "run_experiment",
        [](const py::object& config) {
            return json_to_py(harness::run_experiment(config_from_py(config)).to_json());
        },
        py::arg("config"), "Full method-vs-baseline comparison; config is a dict or JSON string");

    m.def(
        "run_oracles",
        [](const py::object& config) {
            return json_to_py(harness::run_oracles(config_from_py(config)).to_json());
        },
        py::arg("config"));

    m.def(
        "ablate",
        [](const py::object& config) {
            const harness::ExperimentConfig c = config_from_py(config);
            if (!c.ablation) throw std::invalid_argument("config has no 'ablation' section");
            return json_to_py(harness::ablate(c, *c.ablation).to_json());
        },
        py::arg("config"));

    m.def(
        "share",
        [](const py::object& config) {
            const harness::ExperimentConfig c = config_from_py(config);
            const harness::GeneratedData data = harness::gen_data(c.data, c.model);
            const harness::TrainResult trained = harness::train(c, data);
            const auto bases = harness::build_shape_group_bases(c.model, trained.params, c.sharing);
            const align::GeoShareResult run = align::geo_share(c.model, trained.params, bases,
                                                               c.sharing.align, data.train, data.eval);
            py::list aligned;
            for (const auto& w : run.aligned.weights) aligned.append(array_from_matrix(w));
            return py::make_tuple(json_to_py(run.report.to_json()), aligned);
        },
        py::arg("config"), "Runs the sharing pipeline; returns (alignment report, aligned weights)");
}

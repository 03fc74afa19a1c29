// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#include "geoshare/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace geoshare::linalg {

namespace {

/// First-nonzero-positive sign convention so eigen/singular vectors are
/// deterministic across runs. Returns +1/-1, the factor applied.
double canonicalize_sign(std::span<double> v) {
    for (double x : v) {
        if (std::abs(x) > 1e-14) {
            if (x < 0.0) {
                for (double& y : v) y = -y;
                return -1.0;
            }
            return 1.0;
        }
    }
    return 1.0;
}

}  // namespace

DenseMatrix::DenseMatrix(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("DenseMatrix: dimensions must be positive");
    data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

DenseMatrix::DenseMatrix(int rows, int cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("DenseMatrix: dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(rows) * cols)
        throw std::invalid_argument("DenseMatrix: entry count does not match rows*cols");
}

DenseMatrix DenseMatrix::identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::gaussian(int rows, int cols, Rng& rng, double scale) {
    DenseMatrix m(rows, cols);
    for (double& x : m.data_) x = scale * rng.gaussian();
    return m;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
        for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double DenseMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double x : data_) s += x * x;
    return std::sqrt(s);
}

bool DenseMatrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void DenseMatrix::require_finite(const std::string& what) const {
    if (!all_finite()) throw std::runtime_error(what + ": non-finite entries");
}

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols_ != b.rows_) throw std::invalid_argument("matmul: inner dimensions disagree");
    DenseMatrix c(a.rows_, b.cols_);
    for (int i = 0; i < a.rows_; ++i) {
        for (int k = 0; k < a.cols_; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw std::invalid_argument("matrix add: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] += b.data_[i];
    return c;
}

DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw std::invalid_argument("matrix sub: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] -= b.data_[i];
    return c;
}

std::vector<double> DenseMatrix::apply(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != cols_) throw std::invalid_argument("apply: length mismatch");
    std::vector<double> y(rows_, 0.0);
    for (int i = 0; i < rows_; ++i) {
        double s = 0.0;
        const double* row = data_.data() + static_cast<std::size_t>(i) * cols_;
        for (int j = 0; j < cols_; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    return y;
}

std::vector<double> DenseMatrix::apply_transposed(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != rows_) throw std::invalid_argument("apply_transposed: length mismatch");
    std::vector<double> y(cols_, 0.0);
    for (int i = 0; i < rows_; ++i) {
        const double xi = x[i];
        const double* row = data_.data() + static_cast<std::size_t>(i) * cols_;
        for (int j = 0; j < cols_; ++j) y[j] += row[j] * xi;
    }
    return y;
}

SymmetricOperator SymmetricOperator::from_dense(const DenseMatrix& h) {
    if (h.rows() != h.cols()) throw std::invalid_argument("SymmetricOperator: matrix must be square");
    SymmetricOperator op;
    op.dimension = h.rows();
    op.apply = [h](std::span<const double> x) { return h.apply(x); };
    return op;
}

bool EigenPairs::all_converged() const {
    return std::all_of(converged.begin(), converged.end(), [](bool b) { return b; });
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

std::vector<double> l2_clip(std::span<const double> x, double tau) {
    if (tau < 0.0) throw std::invalid_argument("l2_clip: tau must be non-negative");
    std::vector<double> out(x.begin(), x.end());
    const double n = norm2(x);
    if (n > tau) {
        const double s = tau / n;
        for (double& v : out) v *= s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// dense symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

EigenPairs sym_eig_dense(const DenseMatrix& h) {
    if (h.rows() != h.cols()) throw std::runtime_error("sym_eig_dense: matrix must be square");
    h.require_finite("sym_eig_dense");
    const int n = h.rows();
    const double scale = h.frobenius_norm();
    // symmetry check, relative
    double asym = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) asym = std::max(asym, std::abs(h(i, j) - h(j, i)));
    if (scale > 0.0 && asym > 1e-10 * scale)
        throw std::runtime_error("sym_eig_dense: input is not symmetric");

    // work on the symmetrized copy
    DenseMatrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = 0.5 * (h(i, j) + h(j, i));
    DenseMatrix q = DenseMatrix::identity(n);

    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (std::sqrt(off) <= 1e-15 * std::max(scale, 1e-300)) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int r = p + 1; r < n; ++r) {
                const double apr = a(p, r);
                if (std::abs(apr) <= 1e-18 * std::max(scale, 1e-300)) continue;
                const double app = a(p, p);
                const double arr = a(r, r);
                const double theta = (arr - app) / (2.0 * apr);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akr = a(k, r);
                    a(k, p) = c * akp - s * akr;
                    a(k, r) = s * akp + c * akr;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double ark = a(r, k);
                    a(p, k) = c * apk - s * ark;
                    a(r, k) = s * apk + c * ark;
                }
                for (int k = 0; k < n; ++k) {
                    const double qkp = q(k, p);
                    const double qkr = q(k, r);
                    q(k, p) = c * qkp - s * qkr;
                    q(k, r) = s * qkp + c * qkr;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });

    EigenPairs out;
    out.values.reserve(n);
    out.vectors.reserve(n);
    for (int k : order) {
        out.values.push_back(a(k, k));
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) v[i] = q(i, k);
        canonicalize_sign(v);
        out.vectors.push_back(std::move(v));
    }
    out.converged.assign(n, true);
    out.residuals.resize(n);
    for (int k = 0; k < n; ++k) {
        std::vector<double> av = h.apply(out.vectors[k]);
        axpy(-out.values[k], out.vectors[k], av);
        out.residuals[k] = norm2(av);
    }
    return out;
}

// ---------------------------------------------------------------------------
// truncated SVD (one-sided Jacobi on columns)
// ---------------------------------------------------------------------------

namespace {

/// One-sided Jacobi SVD of an M x N matrix with M >= N. Returns full thin
/// factors (rank = N); caller truncates.
void one_sided_jacobi(const DenseMatrix& a, DenseMatrix& u, std::vector<double>& sigma, DenseMatrix& v) {
    const int m = a.rows();
    const int n = a.cols();
    DenseMatrix b = a;                    // columns get orthogonalized in place
    DenseMatrix vt = DenseMatrix::identity(n);
    const double scale = a.frobenius_norm();
    const double eps = 1e-15;

    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int r = p + 1; r < n; ++r) {
                double app = 0.0, arr = 0.0, apr = 0.0;
                for (int i = 0; i < m; ++i) {
                    app += b(i, p) * b(i, p);
                    arr += b(i, r) * b(i, r);
                    apr += b(i, p) * b(i, r);
                }
                if (std::abs(apr) <= eps * std::sqrt(app * arr) + eps * scale * scale * 1e-6) continue;
                rotated = true;
                const double theta = (arr - app) / (2.0 * apr);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < m; ++i) {
                    const double bip = b(i, p);
                    const double bir = b(i, r);
                    b(i, p) = c * bip - s * bir;
                    b(i, r) = s * bip + c * bir;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = vt(i, p);
                    const double vir = vt(i, r);
                    vt(i, p) = c * vip - s * vir;
                    vt(i, r) = s * vip + c * vir;
                }
            }
        }
        if (!rotated) break;
    }

    // column norms are the singular values
    std::vector<double> s(n);
    for (int j = 0; j < n; ++j) {
        double nj = 0.0;
        for (int i = 0; i < m; ++i) nj += b(i, j) * b(i, j);
        s[j] = std::sqrt(nj);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return s[i] > s[j]; });

    u = DenseMatrix(m, n);
    v = DenseMatrix(n, n);
    sigma.resize(n);
    const double tiny = eps * std::max(scale, 1e-300);
    int zero_fill = 0;
    for (int k = 0; k < n; ++k) {
        const int j = order[k];
        sigma[k] = s[j];
        if (s[j] > tiny) {
            for (int i = 0; i < m; ++i) u(i, k) = b(i, j) / s[j];
            for (int i = 0; i < n; ++i) v(i, k) = vt(i, j);
        } else {
            sigma[k] = 0.0;
            // canonical axis fill, orthonormalized against earlier columns
            for (int axis = zero_fill; axis < m; ++axis) {
                std::vector<double> cand(m, 0.0);
                cand[axis] = 1.0;
                for (int kk = 0; kk < k; ++kk) {
                    double d = 0.0;
                    for (int i = 0; i < m; ++i) d += cand[i] * u(i, kk);
                    for (int i = 0; i < m; ++i) cand[i] -= d * u(i, kk);
                }
                const double cn = norm2(cand);
                if (cn > 0.5) {
                    for (int i = 0; i < m; ++i) u(i, k) = cand[i] / cn;
                    zero_fill = axis + 1;
                    break;
                }
            }
            for (int axis = 0; axis < n; ++axis) {
                std::vector<double> cand(n, 0.0);
                cand[axis] = 1.0;
                for (int kk = 0; kk < k; ++kk) {
                    double d = 0.0;
                    for (int i = 0; i < n; ++i) d += cand[i] * v(i, kk);
                    for (int i = 0; i < n; ++i) cand[i] -= d * v(i, kk);
                }
                const double cn = norm2(cand);
                if (cn > 0.5) {
                    for (int i = 0; i < n; ++i) v(i, k) = cand[i] / cn;
                    break;
                }
            }
        }
    }

    // sign convention on U columns, compensated in V
    for (int k = 0; k < n; ++k) {
        double flip = 1.0;
        for (int i = 0; i < m; ++i) {
            if (std::abs(u(i, k)) > 1e-14) {
                flip = u(i, k) < 0.0 ? -1.0 : 1.0;
                break;
            }
        }
        if (flip < 0.0) {
            for (int i = 0; i < m; ++i) u(i, k) = -u(i, k);
            for (int i = 0; i < n; ++i) v(i, k) = -v(i, k);
        }
    }
}

DenseMatrix take_columns(const DenseMatrix& a, int r) {
    DenseMatrix out(a.rows(), r);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < r; ++j) out(i, j) = a(i, j);
    return out;
}

}  // namespace

SvdResult svd_truncated(const DenseMatrix& a, int rank) {
    if (rank < 1 || rank > std::min(a.rows(), a.cols()))
        throw std::invalid_argument("svd_truncated: rank out of range");
    if (!a.all_finite()) throw std::runtime_error("svd_truncated: non-finite input");

    DenseMatrix u, v;
    std::vector<double> sigma;
    if (a.rows() >= a.cols()) {
        one_sided_jacobi(a, u, sigma, v);
    } else {
        one_sided_jacobi(a.transposed(), v, sigma, u);
    }
    SvdResult out;
    out.u = take_columns(u, rank);
    out.v = take_columns(v, rank);
    out.sigma.assign(sigma.begin(), sigma.begin() + rank);
    return out;
}

// ---------------------------------------------------------------------------
// Lanczos (full reorthogonalization)
// ---------------------------------------------------------------------------

namespace {

/// Remove the components of w along all stored basis vectors; two passes.
void reorthogonalize(std::vector<double>& w, const std::vector<std::vector<double>>& basis) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& q : basis) {
            const double h = dot(w, q);
            axpy(-h, q, w);
        }
    }
}

/// Draw a unit vector orthogonal to the existing basis; returns false when
/// the basis already spans the whole space.
bool fresh_direction(std::vector<double>& out, const std::vector<std::vector<double>>& basis, int dim, Rng& rng) {
    for (int attempt = 0; attempt < 20; ++attempt) {
        out.assign(dim, 0.0);
        for (double& x : out) x = rng.gaussian();
        reorthogonalize(out, basis);
        const double n = norm2(out);
        if (n > 1e-8) {
            for (double& x : out) x /= n;
            return true;
        }
    }
    return false;
}

}  // namespace

EigenPairs lanczos_top_eigs(const SymmetricOperator& op, int t, const LanczosConfig& config) {
    if (t < 1 || t > op.dimension) throw std::invalid_argument("lanczos_top_eigs: t out of range");
    if (config.max_iters < t) throw std::invalid_argument("lanczos_top_eigs: max_iters < t");
    const int n = op.dimension;
    const int m_cap = std::min(config.max_iters, n);

    Rng rng(mix_seed(config.seed, 0x1a2c));
    std::vector<std::vector<double>> basis;   // Krylov vectors q_0..q_{m-1}
    std::vector<double> alpha;                // tridiagonal diagonal
    std::vector<double> beta;                 // tridiagonal off-diagonal (beta[j] couples j, j+1)

    std::vector<double> q0;
    if (!fresh_direction(q0, basis, n, rng)) return {};
    basis.push_back(std::move(q0));

    EigenPairs best;
    // Ritz extraction from the m completed steps (alpha entries), not from
    // the basis size: the basis may already hold the next, unprocessed vector.
    auto extract = [&](bool final_pass) -> bool {
        const int m = static_cast<int>(alpha.size());
        if (m == 0) return false;
        DenseMatrix tri(m, m);
        for (int i = 0; i < m; ++i) {
            tri(i, i) = alpha[i];
            if (i + 1 < m) {
                tri(i, i + 1) = beta[i];
                tri(i + 1, i) = beta[i];
            }
        }
        EigenPairs small = sym_eig_dense(tri);
        const int take = std::min(t, m);
        EigenPairs result;
        for (int k = 0; k < take; ++k) {
            std::vector<double> ritz(n, 0.0);
            for (int j = 0; j < m; ++j) axpy(small.vectors[k][j], basis[j], ritz);
            const double nv = norm2(ritz);
            if (nv > 0.0)
                for (double& x : ritz) x /= nv;
            std::vector<double> av = op.apply(ritz);
            std::vector<double> res = av;
            axpy(-small.values[k], ritz, res);
            const double rnorm = norm2(res);
            canonicalize_sign(ritz);
            result.values.push_back(small.values[k]);
            result.vectors.push_back(std::move(ritz));
            result.residuals.push_back(rnorm);
            result.converged.push_back(rnorm <= config.tol);
        }
        best = std::move(result);
        if (static_cast<int>(best.count()) < t) return false;
        if (final_pass) return true;
        return best.all_converged();
    };

    std::vector<double> w;
    double beta_prev = 0.0;
    for (int j = 0; j < m_cap; ++j) {
        w = op.apply(basis[j]);
        const double a = dot(basis[j], w);
        alpha.push_back(a);
        axpy(-a, basis[j], w);
        if (j > 0) axpy(-beta_prev, basis[j - 1], w);
        reorthogonalize(w, basis);
        double b = norm2(w);

        const bool last = (j + 1 == m_cap);
        if (!last) {
            if (b < 1e-12) {
                // invariant subspace found; restart with a fresh direction
                std::vector<double> fresh;
                if (!fresh_direction(fresh, basis, n, rng)) {
                    beta.push_back(0.0);
                    break;
                }
                w = std::move(fresh);
                b = 0.0;  // decouples the new block in the tridiagonal matrix
                basis.push_back(w);
                beta.push_back(b);
                beta_prev = b;
                continue;
            }
            for (double& x : w) x /= b;
            basis.push_back(w);
            beta.push_back(b);
            beta_prev = b;
            // converged-early check every few steps once t pairs exist
            if (static_cast<int>(alpha.size()) >= t && (j % 8 == 7)) {
                if (extract(false)) return best;
            }
        }
    }
    extract(true);
    return best;
}

}  // namespace geoshare::linalg

// Copyright (c) 2026 geoshare contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "geoshare/rng.hpp"

namespace geoshare::linalg {

/// Dense row-major matrix of 64-bit reals. All verification paths in this
/// project run in double precision; there is no mixed-precision mode.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols);
    DenseMatrix(int rows, int cols, std::vector<double> entries);

    static DenseMatrix identity(int n);
    static DenseMatrix gaussian(int rows, int cols, Rng& rng, double scale = 1.0);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    DenseMatrix transposed() const;
    double frobenius_norm() const;
    bool all_finite() const;

    /// Throws a data error naming `what` if any entry is non-finite.
    void require_finite(const std::string& what) const;

    friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);
    friend DenseMatrix operator+(const DenseMatrix& a, const DenseMatrix& b);
    friend DenseMatrix operator-(const DenseMatrix& a, const DenseMatrix& b);

    /// y = A x
    std::vector<double> apply(std::span<const double> x) const;
    /// y = A^T x
    std::vector<double> apply_transposed(std::span<const double> x) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

/// Matrix-free symmetric linear operator. `apply` must be linear and
/// symmetric; tests check <Av,w> = <v,Aw> probabilistically.
struct SymmetricOperator {
    int dimension = 0;
    std::function<std::vector<double>(std::span<const double>)> apply;

    static SymmetricOperator from_dense(const DenseMatrix& h);
};

/// Extreme or full eigenpairs of a symmetric operator/matrix.
/// values are sorted descending; vectors are orthonormal columns stored as
/// rows of `vectors` (vectors[k] is the k-th eigenvector); residuals hold
/// ||Av - lambda v||_2 per pair. `converged[k]` is false when an iterative
/// solver could not certify the pair to the requested tolerance.
struct EigenPairs {
    std::vector<double> values;
    std::vector<std::vector<double>> vectors;
    std::vector<double> residuals;
    std::vector<bool> converged;

    std::size_t count() const { return values.size(); }
    bool all_converged() const;
};

struct SvdResult {
    DenseMatrix u;              // M x r, orthonormal columns
    std::vector<double> sigma;  // descending, non-negative
    DenseMatrix v;              // N x r, orthonormal columns
};

/// Best rank-r factorization A ~= U diag(sigma) V^T via one-sided Jacobi.
/// Deterministic: singular values descending, ties kept in sweep order, each
/// U column's first nonzero entry made positive (V compensates). Zero
/// singular directions are padded with canonical axis vectors.
SvdResult svd_truncated(const DenseMatrix& a, int rank);

/// Full spectral decomposition H = Q Lambda Q^T of a symmetric matrix via
/// cyclic Jacobi rotations. Oracle-grade accuracy at desk scale.
EigenPairs sym_eig_dense(const DenseMatrix& h);

struct LanczosConfig {
    int max_iters = 300;
    double tol = 1e-10;
    std::uint64_t seed = 0;
};

/// Top-t eigenpairs of a matrix-free symmetric operator. Krylov iteration
/// with full reorthogonalization against all stored basis vectors; on
/// breakdown a fresh random direction is injected so repeated eigenvalues
/// are resolved. Pairs that fail the residual tolerance within max_iters are
/// returned flagged, not dropped.
EigenPairs lanczos_top_eigs(const SymmetricOperator& op, int t, const LanczosConfig& config = {});

/// L2-norm clipping: x unchanged if ||x|| <= tau, else rescaled to norm tau.
std::vector<double> l2_clip(std::span<const double> x, double tau);

// small vector helpers shared across modules
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> x);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace geoshare::linalg

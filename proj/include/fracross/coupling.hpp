#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "errors.hpp"

namespace fracross {

/// Small dense row-major matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows)
    {
        const std::size_t r = rows.size();
        const std::size_t c = r == 0 ? 0 : rows[0].size();
        Matrix m(r, c);
        for (std::size_t i = 0; i < r; ++i) {
            if (rows[i].size() != c) throw ValidationError("matrix rows have unequal length");
            for (std::size_t j = 0; j < c; ++j) m(i, j) = rows[i][j];
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Eigenvalues (ascending) of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(Matrix m, int max_sweeps = 100)
{
    const std::size_t n = m.rows();
    if (n != m.cols()) throw ValidationError("jacobi_eigenvalues needs a square matrix");
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        double scale = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                (i == j ? scale : off) += m(i, j) * m(i, j);
            }
        }
        if (off <= 1e-30 * (scale + off) || off == 0.0) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (m(p, q) == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p);
                    const double mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k);
                    const double mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = m(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

/// Validated cross-diffusion coupling (a_ij) with detailed-balance weights.
struct CouplingSpec {
    std::size_t n = 0;
    Matrix a;
    std::vector<double> pi;
    double balance_residual = 0.0;
    /// Smallest eigenvalue of (pi_i a_ij).
    double c0 = 0.0;
    /// Eigenvalues of a (real under detailed balance), ascending.
    std::vector<double> spectrum;

    /// Row sum bound on the spectral radius of a.
    double max_row_sum() const
    {
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += std::abs(a(i, j));
            best = std::max(best, s);
        }
        return best;
    }
};

inline CouplingSpec validate_coupling(const Matrix& a, const std::vector<double>& pi)
{
    const std::size_t n = a.rows();
    if (n == 0 || a.cols() != n) throw ValidationError("coupling matrix must be square and non-empty");
    if (pi.size() != n) throw ValidationError("weights pi must have one entry per species");
    for (double v : a.data()) {
        if (!std::isfinite(v)) throw ValidationError("coupling matrix has non-finite entries");
        if (v < 0.0) throw ValidationError("coupling matrix entries must be nonnegative");
    }
    for (double p : pi) {
        if (!std::isfinite(p) || !(p > 0.0)) throw ValidationError("weights pi must be positive");
    }

    CouplingSpec spec;
    spec.n = n;
    spec.a = a;
    spec.pi = pi;

    Matrix sym(n, n);
    double scale = 0.0;
    std::size_t worst_i = 0, worst_j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            sym(i, j) = pi[i] * a(i, j);
            scale = std::max(scale, std::abs(sym(i, j)));
            const double r = std::abs(pi[i] * a(i, j) - pi[j] * a(j, i));
            if (r > spec.balance_residual) {
                spec.balance_residual = r;
                worst_i = i;
                worst_j = j;
            }
        }
    }
    if (spec.balance_residual > 1e-12 * scale) {
        std::ostringstream msg;
        msg << "detailed balance violated: |pi_" << worst_i + 1 << " a_" << worst_i + 1 << worst_j + 1 << " - pi_"
            << worst_j + 1 << " a_" << worst_j + 1 << worst_i + 1 << "| = " << spec.balance_residual;
        throw ValidationError(msg.str());
    }
    // Exact symmetrization removes residual rounding before the eigen solve.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) sym(i, j) = sym(j, i) = 0.5 * (sym(i, j) + sym(j, i));
    }
    const auto sym_eigs = jacobi_eigenvalues(sym);
    spec.c0 = sym_eigs.front();

    // a = diag(pi)^{-1} S is similar to diag(pi)^{-1/2} S diag(pi)^{-1/2}.
    Matrix similar(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) similar(i, j) = sym(i, j) / std::sqrt(pi[i] * pi[j]);
    }
    spec.spectrum = jacobi_eigenvalues(similar);
    if (!(spec.spectrum.front() > 0.0)) {
        std::ostringstream msg;
        msg << "coupling spectrum not in the right half-plane: smallest eigenvalue " << spec.spectrum.front();
        throw ValidationError(msg.str());
    }
    if (!(spec.c0 > 0.0)) {
        std::ostringstream msg;
        msg << "symmetrized coupling is not positive definite: c0 = " << spec.c0;
        throw ValidationError(msg.str());
    }
    return spec;
}

inline CouplingSpec validate_coupling(const std::vector<std::vector<double>>& a, const std::vector<double>& pi)
{
    return validate_coupling(Matrix::from_rows(a), pi);
}

}  // namespace fracross

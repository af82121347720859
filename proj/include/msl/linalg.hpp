#pragma once

// Small dense linear-algebra helpers shared by the msl modules.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace msl {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double pi = std::numbers::pi;

inline Matrix identity(Eigen::Index m) { return Matrix::Identity(m, m); }

inline Matrix hermitian_part(const Matrix& a) { return 0.5 * (a + a.adjoint()); }

/// Induced 2-norm (largest singular value).
inline double norm2(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    if (a.rows() == 1 && a.cols() == 1) return std::abs(a(0, 0));
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

inline double hermitian_defect(const Matrix& a) { return norm2(a - a.adjoint()); }

/// Eigen-decomposition of the Hermitian part of `a`; eigenvalues ascending.
struct HermitianEigen {
    RealVector values;
    Matrix vectors;
};

inline HermitianEigen hermitian_eigen(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(a));
    return {es.eigenvalues(), es.eigenvectors()};
}

/// Orthonormal basis (columns) of the eigenspace of a Hermitian matrix for
/// eigenvalues above `threshold`.
inline Matrix range_basis(const Matrix& hermitian, double threshold = 0.5) {
    auto eig = hermitian_eigen(hermitian);
    std::vector<Eigen::Index> cols;
    for (Eigen::Index i = 0; i < eig.values.size(); ++i)
        if (eig.values(i) > threshold) cols.push_back(i);
    Matrix basis(hermitian.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
        basis.col(static_cast<Eigen::Index>(j)) = eig.vectors.col(cols[j]);
    return basis;
}

inline bool all_finite(const Matrix& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const cplx v = a.data()[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    }
    return true;
}

/// sin(w x)/w with w^2 = w2, entire in w2.
inline cplx sinc_kernel(cplx w2, double x) {
    if (std::abs(w2) * x * x < 1e-6) {
        const cplx t = w2 * x * x;
        return x * (1.0 - t / 6.0 + t * t / 120.0 - t * t * t / 5040.0);
    }
    const cplx w = std::sqrt(w2);
    return std::sin(w * x) / w;
}

/// d/dx [sin(w x)/w] = cos(w x).
inline cplx cos_kernel(cplx w2, double x) { return std::cos(std::sqrt(w2) * x); }

/// Weighted least-squares fit value(n) ~ limit + c / n; returns the limit.
/// Works entrywise on matrices so it serves scalar and matrix sequences alike.
template <class Value>
Value fit_limit_inverse_n(const std::vector<double>& n, const std::vector<Value>& values,
                          double* rms_residual = nullptr) {
    // weights w_n = n emphasize the asymptotic tail.
    double s0 = 0, s1 = 0, s2 = 0;
    for (double ni : n) {
        const double w = ni, t = 1.0 / ni;
        s0 += w;
        s1 += w * t;
        s2 += w * t * t;
    }
    const double det = s0 * s2 - s1 * s1;
    Value b0 = values.front() * 0.0, b1 = values.front() * 0.0;
    for (std::size_t i = 0; i < n.size(); ++i) {
        const double w = n[i], t = 1.0 / n[i];
        b0 = b0 + values[i] * w;
        b1 = b1 + values[i] * (w * t);
    }
    Value limit = (b0 * s2 - b1 * s1) * (1.0 / det);
    if (rms_residual) {
        const Value slope = (b1 * s0 - b0 * s1) * (1.0 / det);
        double acc = 0;
        for (std::size_t i = 0; i < n.size(); ++i) {
            const Value r = values[i] - limit - slope * (1.0 / n[i]);
            if constexpr (std::is_arithmetic_v<Value>)
                acc += r * r;
            else
                acc += r.squaredNorm();
        }
        *rms_residual = std::sqrt(acc / static_cast<double>(n.size()));
    }
    return limit;
}

}  // namespace msl

#pragma once

// Domain types shared by every msl module: the boundary value problem
//   -Y'' + Q(x) Y = lambda Y,  Y(0) = 0,  T (Y'(pi) - H Y(pi)) - T_perp Y(pi) = 0
// and its spectral data {lambda_nk, alpha_nk}.

#include "msl/linalg.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace msl {

/// Every tolerance used by the toolkit, in one place.
struct ToleranceConfig {
    double projector = 1e-12;        // Hermitian / idempotent / H = THT checks
    double potential_hermitian = 1e-10;
    double psd = 1e-10;              // alpha eigenvalues >= -psd * |alpha|
    double wronskian = 1e-8;
    double root = 1e-10;             // |d rho| for eigenvalue polishing
    double rank = 1e-7;              // relative singular-value cutoff
    double contour_radius = 0.1;     // residue circle radius (lambda units)
    int quadrature_points = 64;
    double multiplicity = 1e-6;      // equal lambdas: |d lambda| <= tol * (1 + |lambda|)
    double z_equal = 1e-3;
    double fit = 0.2;                // projector defect allowed when rounding T
    double solve = 1e-9;             // main-equation relative residual
    double spectrum = 1e-3;          // absolute lambda agreement in round trips
    double alpha = 1e-2;             // relative alpha agreement in round trips
    double shift_margin = 0.25;
    double mask_condition = 1e6;     // recover_Q_direct validity mask
    double recovered_hermitian = 1e-4;
};

// ---------------------------------------------------------------------------
// Errors. Each carries the pipeline stage that raised it.

class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct StructuralError : Error {
    using Error::Error;
};
struct IntegrationOverflow : Error {
    using Error::Error;
};
struct AtEigenvalueError : Error {
    using Error::Error;
};
struct ContourClashError : Error {
    ContourClashError(std::string stage, const std::string& what, double suggested)
        : Error(std::move(stage), what), suggested_radius(suggested) {}
    double suggested_radius;
};
struct BracketExhaustionError : Error {
    BracketExhaustionError(std::string stage, const std::string& what, int band_, int missing_)
        : Error(std::move(stage), what), band(band_), missing(missing_) {}
    int band;
    int missing;
};
struct InconclusiveRankError : Error {
    using Error::Error;
};
struct NoisyDataError : Error {
    NoisyDataError(std::string stage, const std::string& what, double residual_)
        : Error(std::move(stage), what), residual(residual_) {}
    double residual;
};
struct GroupingError : Error {
    using Error::Error;
};
struct SolveFailure : Error {
    SolveFailure(std::string stage, const std::string& what, double condition_)
        : Error(std::move(stage), what), condition(condition_) {}
    double condition;
};
struct ReconstructionInconsistency : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------

/// Orthogonal projector T with rank p; T_perp = I - T.
class Projector {
public:
    explicit Projector(Matrix matrix) : matrix_(std::move(matrix)) {
        if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0)
            throw StructuralError("core", "projector must be a nonempty square matrix");
        auto eig = hermitian_eigen(matrix_);
        rank_ = static_cast<int>((eig.values.array() > 0.5).count());
    }

    /// Orthogonal projector onto the span of the given columns.
    static Projector onto(const Matrix& columns) {
        Eigen::HouseholderQR<Matrix> qr(columns);
        Matrix q = qr.householderQ() * Matrix::Identity(columns.rows(), columns.cols());
        return Projector(q * q.adjoint());
    }

    /// Averaging projector with every entry 1/m (star graph / model example).
    static Projector star(int m) { return Projector(Matrix::Constant(m, m, cplx(1.0 / m, 0.0))); }

    const Matrix& matrix() const noexcept { return matrix_; }
    Matrix complement() const { return identity(dim()) - matrix_; }
    int rank() const noexcept { return rank_; }
    int dim() const noexcept { return static_cast<int>(matrix_.rows()); }

private:
    Matrix matrix_;
    int rank_ = 0;
};

/// Samples of Q on the uniform grid x_i = i pi / N, i = 0..N.
class PotentialGrid {
public:
    PotentialGrid(std::vector<Matrix> samples) : samples_(std::move(samples)) {
        if (samples_.size() < 2) throw StructuralError("core", "potential grid needs at least two nodes");
        const auto m = samples_.front().rows();
        for (const auto& q : samples_)
            if (q.rows() != m || q.cols() != m)
                throw StructuralError("core", "potential samples must all be m x m");
    }

    static PotentialGrid constant(const Matrix& value, int intervals) {
        return PotentialGrid(std::vector<Matrix>(static_cast<std::size_t>(intervals) + 1, value));
    }

    static PotentialGrid from_function(const std::function<Matrix(double)>& f, int intervals) {
        std::vector<Matrix> s;
        s.reserve(static_cast<std::size_t>(intervals) + 1);
        for (int i = 0; i <= intervals; ++i) s.push_back(f(pi * i / intervals));
        return PotentialGrid(std::move(s));
    }

    int intervals() const noexcept { return static_cast<int>(samples_.size()) - 1; }
    std::size_t nodes() const noexcept { return samples_.size(); }
    int dim() const noexcept { return static_cast<int>(samples_.front().rows()); }
    double step() const noexcept { return pi / intervals(); }
    double node(std::size_t i) const noexcept { return pi * static_cast<double>(i) / intervals(); }
    const Matrix& operator[](std::size_t i) const { return samples_[i]; }
    const std::vector<Matrix>& samples() const noexcept { return samples_; }

    bool is_constant(double tol = 0.0) const {
        for (const auto& q : samples_)
            if ((q - samples_.front()).cwiseAbs().maxCoeff() > tol) return false;
        return true;
    }

    /// Trapezoid approximation of the integral over [0, pi].
    Matrix integral() const {
        Matrix acc = 0.5 * (samples_.front() + samples_.back());
        for (std::size_t i = 1; i + 1 < samples_.size(); ++i) acc += samples_[i];
        return acc * step();
    }

private:
    std::vector<Matrix> samples_;
};

struct BoundaryCoefficient {
    Matrix matrix;
};

/// L = L(Q, T, H). `shift` records a spectrum translation applied to data
/// before reconstruction; the stored potential is already un-shifted.
struct Problem {
    PotentialGrid potential;
    Projector projector;
    BoundaryCoefficient boundary;
    double shift = 0.0;

    int dim() const noexcept { return projector.dim(); }
};

struct SpectralDatum {
    int n = 1;          // band, 1-based
    int k = 1;          // slot within the band, 1-based
    double lambda = 0;
    Matrix alpha;
};

/// {lambda_nk, alpha_nk} for n = 1..bands, k = 1..slots, stored in
/// lexicographic (n, k) order. `slots` is the number of eigenvalues per band
/// (m); the alpha matrices may be smaller (1 x 1 for scalar local data).
class SpectralData {
public:
    SpectralData() = default;
    SpectralData(std::vector<SpectralDatum> data, int slots) : data_(std::move(data)), slots_(slots) {
        if (slots_ < 1 || data_.empty() || data_.size() % static_cast<std::size_t>(slots_) != 0)
            throw StructuralError("core", "spectral data size must be a positive multiple of the slot count");
        bands_ = static_cast<int>(data_.size()) / slots_;
        const auto d = data_.front().alpha.rows();
        for (std::size_t i = 0; i < data_.size(); ++i) {
            const auto& e = data_[i];
            if (e.n != static_cast<int>(i) / slots_ + 1 || e.k != static_cast<int>(i) % slots_ + 1)
                throw StructuralError("core", "spectral data must be indexed lexicographically from (1, 1)");
            if (e.alpha.rows() != d || e.alpha.cols() != d)
                throw StructuralError("core", "weight matrices must share one square shape");
        }
    }

    int bands() const noexcept { return bands_; }
    int slots() const noexcept { return slots_; }
    int dim() const noexcept { return data_.empty() ? 0 : static_cast<int>(data_.front().alpha.rows()); }
    std::size_t size() const noexcept { return data_.size(); }
    const std::vector<SpectralDatum>& entries() const noexcept { return data_; }
    const SpectralDatum& at(int n, int k) const {
        return data_[static_cast<std::size_t>((n - 1) * slots_ + (k - 1))];
    }
    double min_lambda() const {
        double v = data_.front().lambda;
        for (const auto& e : data_) v = std::min(v, e.lambda);
        return v;
    }

    /// First `bands` bands.
    SpectralData truncated(int bands) const {
        if (bands >= bands_) return *this;
        return SpectralData(std::vector<SpectralDatum>(data_.begin(), data_.begin() + bands * slots_), slots_);
    }

private:
    std::vector<SpectralDatum> data_;
    int slots_ = 1;
    int bands_ = 0;
};

inline bool same_eigenvalue(double a, double b, double tol) {
    return std::abs(a - b) <= tol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

// ---------------------------------------------------------------------------

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const noexcept { return violations.empty(); }
};

inline ValidationReport validate_problem(const Problem& problem, const ToleranceConfig& tol = {}) {
    const int m = problem.projector.dim();
    if (problem.potential.dim() != m || problem.boundary.matrix.rows() != m ||
        problem.boundary.matrix.cols() != m)
        throw StructuralError("core", "problem matrices have inconsistent dimensions");

    ValidationReport report;
    const Matrix& t = problem.projector.matrix();
    const Matrix tp = problem.projector.complement();
    if (norm2(t - t.adjoint()) > tol.projector) report.violations.emplace_back("T Hermitian");
    if (norm2(t * t - t) > tol.projector) report.violations.emplace_back("T idempotent");
    if (norm2(tp * tp - tp) > tol.projector) report.violations.emplace_back("T_perp idempotent");
    const int p = problem.projector.rank();
    if (p < 1 || p >= m) report.violations.emplace_back("p < m required (1 <= rank T < m)");

    for (std::size_t i = 0; i < problem.potential.nodes(); ++i) {
        if (hermitian_defect(problem.potential[i]) > tol.potential_hermitian) {
            report.violations.emplace_back("Q Hermitian at node " + std::to_string(i));
            break;
        }
    }
    const Matrix& h = problem.boundary.matrix;
    if (norm2(h - h.adjoint()) > tol.projector) report.violations.emplace_back("H Hermitian");
    if (norm2(h - t * h * t) > tol.projector) report.violations.emplace_back("H = THT");
    return report;
}

/// Checks the SpectralDatum / SpectralData invariants; empty when valid.
inline ValidationReport validate_spectral_data(const SpectralData& data, const ToleranceConfig& tol = {}) {
    ValidationReport report;
    const auto& e = data.entries();
    for (std::size_t i = 0; i < e.size(); ++i) {
        const double scale = std::max(1.0, norm2(e[i].alpha));
        if (hermitian_defect(e[i].alpha) > 1e-8 * scale)
            report.violations.push_back("alpha not Hermitian at index " + std::to_string(i));
        else if (hermitian_eigen(e[i].alpha).values.minCoeff() < -tol.psd * scale)
            report.violations.push_back("alpha not positive semidefinite at index " + std::to_string(i));
        if (i > 0 && e[i].lambda < e[i - 1].lambda &&
            !same_eigenvalue(e[i].lambda, e[i - 1].lambda, tol.multiplicity))
            report.violations.push_back("eigenvalues not nondecreasing at index " + std::to_string(i));
        if (i > 0 && same_eigenvalue(e[i].lambda, e[i - 1].lambda, tol.multiplicity) &&
            norm2(e[i].alpha - e[i - 1].alpha) > 1e-8 * scale)
            report.violations.push_back("equal eigenvalues carry different weights at index " + std::to_string(i));
    }
    return report;
}

struct ShiftedSpectralData {
    SpectralData data;
    double shift = 0.0;
};

/// Translates the spectrum so every lambda is nonnegative. Nonnegative data is
/// returned untouched with shift 0; otherwise shift = -min lambda + margin.
inline ShiftedSpectralData shift_spectrum(const SpectralData& data, double margin = 0.25) {
    const double lo = data.min_lambda();
    if (lo >= 0.0) return {data, 0.0};
    const double shift = -lo + margin;
    std::vector<SpectralDatum> shifted = data.entries();
    for (auto& e : shifted) e.lambda += shift;
    return {SpectralData(std::move(shifted), data.slots()), shift};
}

}  // namespace msl

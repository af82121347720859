#pragma once

// Q and H from the main-equation solution, the end-to-end inverse pipeline,
// and the closed-form three-edge example.

#include "msl/maineq.hpp"

#include <optional>

namespace msl::reconstruct {

struct EpsilonTrace {
    std::vector<double> x;
    std::vector<Matrix> eps0;
    std::vector<Matrix> eps;
};

struct Diagnostics {
    std::vector<double> residual;  // main-equation residual per node
    std::vector<double> rcond;
    double Lambda = 0;
    std::vector<double> xi;
    std::optional<double> truncation_delta;  // rel. L2 change of Q when dropping bands
    int truncation_bands = 0;
    double q_hermitian_defect = 0;   // before symmetrization, max over nodes
    double h_hermitian_defect = 0;
    double kernel_asymmetry = 0;
    std::vector<std::pair<std::size_t, double>> identity_defect;
    double shift = 0;
    int n0 = 1;
    std::size_t unknowns = 0;
    std::size_t active = 0;
};

struct ReconstructionResult {
    Problem problem;
    Problem model;
    EpsilonTrace epsilon;
    Diagnostics diagnostics;
    model::AsymptoticSummary summary;
    maineq::MainSeries series;
    maineq::ValueLayout layout;
};

struct InverseConfig {
    int grid = 1000;
    ToleranceConfig tol{};
    int truncation_bands = 0;  // > 0: rerun with this many bands and report the change in Q
    std::vector<std::size_t> identity_nodes;
    bool second_derivative = true;
};

/// eps0 and eps rebuilt from stored S, S' traces and the model.
inline EpsilonTrace epsilon_series(const maineq::ValueLayout& layout, const std::vector<Matrix>& c,
                                   const maineq::MainSeries& series, const model::ConstantModel& model) {
    const std::size_t nodes = series.x.size();
    if (series.S.size() != layout.size() || series.dS.size() != layout.size())
        throw StructuralError("reconstruct", "solution traces do not match the value layout");
    for (std::size_t v = 0; v < layout.size(); ++v)
        if (series.S[v].size() != nodes || series.dS[v].size() != nodes)
            throw StructuralError("reconstruct", "missing S' data for epsilon");
    const auto d = c.front().rows();
    const auto act = maineq::active_values(c);
    EpsilonTrace out{series.x, {}, {}};
    for (std::size_t i = 0; i < nodes; ++i) {
        Matrix e0 = Matrix::Zero(d, d), de0 = Matrix::Zero(d, d);
        for (int w : act) {
            const auto wi = static_cast<std::size_t>(w);
            auto t = model.at(layout.values[wi].lambda, series.x[i]);
            e0 += series.S[wi][i] * c[wi] * t.s.adjoint();
            de0 += series.dS[wi][i] * c[wi] * t.s.adjoint() + series.S[wi][i] * c[wi] * t.ds.adjoint();
        }
        out.eps0.push_back(e0);
        out.eps.push_back(-2.0 * de0);
    }
    return out;
}

/// Q = Q~ + eps - shift I, H = H~ - T eps0(pi) T.
inline Problem recover_QH(const Problem& model, const EpsilonTrace& eps, double shift = 0.0,
                          const ToleranceConfig& tol = {}, Diagnostics* diag = nullptr) {
    if (eps.eps.size() != model.potential.nodes())
        throw StructuralError("reconstruct", "epsilon is not on the model grid");
    const int m = model.dim();
    double qdef = 0;
    std::vector<Matrix> q;
    q.reserve(eps.eps.size());
    for (std::size_t i = 0; i < eps.eps.size(); ++i) {
        const Matrix raw = model.potential[i] + eps.eps[i];
        qdef = std::max(qdef, hermitian_defect(raw));
        q.push_back(hermitian_part(raw) - shift * identity(m));
    }
    if (qdef > tol.recovered_hermitian)
        throw ReconstructionInconsistency("reconstruct", "recovered Q is not Hermitian (defect " + std::to_string(qdef) +
                                                             "); more bands are needed");
    const Matrix& t = model.projector.matrix();
    const Matrix raw_h = model.boundary.matrix - t * eps.eps0.back() * t;
    const Matrix h = t * hermitian_part(raw_h) * t;
    if (diag) {
        diag->q_hermitian_defect = qdef;
        diag->h_hermitian_defect = hermitian_defect(raw_h);
    }
    return {PotentialGrid(std::move(q)), model.projector, {0.5 * (h + h.adjoint())}, 0.0};
}

struct DirectQ {
    std::vector<Matrix> q;
    std::vector<bool> valid;
};

/// Q = S'' S^{-1} + lambda I on nodes where cond(S) is acceptable.
inline DirectQ recover_Q_direct(const std::vector<Matrix>& s, const std::vector<Matrix>& d2s, double lambda,
                                double max_condition = 1e6) {
    DirectQ out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        Eigen::JacobiSVD<Matrix> svd(s[i]);
        const auto& sv = svd.singularValues();
        const double smin = sv(sv.size() - 1);
        const bool ok = smin > 0 && sv(0) / smin <= max_condition;
        out.valid.push_back(ok);
        out.q.push_back(ok ? Matrix(d2s[i] * s[i].inverse() + lambda * identity(s[i].rows()))
                           : Matrix::Zero(s[i].rows(), s[i].cols()));
    }
    return out;
}

/// Relative L2 distance between two potentials on one grid (trapezoid, Frobenius).
inline double relative_l2(const PotentialGrid& a, const PotentialGrid& b) {
    if (a.nodes() != b.nodes()) throw StructuralError("reconstruct", "grids differ");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.nodes(); ++i) {
        const double w = (i == 0 || i + 1 == a.nodes()) ? 0.5 : 1.0;
        num += w * (a[i] - b[i]).squaredNorm();
        den += w * b[i].squaredNorm();
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num * a.step());
}

/// Steps after the model is fixed: groups, main equation per node, Q and H.
/// `data` must already be shifted; `model_data` belongs to `model`.
inline ReconstructionResult reconstruct_against(const SpectralData& data, const SpectralData& model_data,
                                                const Problem& model, int p, const InverseConfig& config,
                                                double shift = 0.0, std::vector<int> classes = {}) {
    if (!model.potential.is_constant(1e-12))
        throw StructuralError("reconstruct", "the model potential must be constant");
    if (model.potential.intervals() != config.grid)
        throw StructuralError("reconstruct", "model grid differs from the configured grid");
    const auto& tol = config.tol;
    auto wd = model::collapse_weights(data, p, tol), wm = model::collapse_weights(model_data, p, tol);
    auto grouping = maineq::build_groups(data, model_data, p, tol);
    auto layout = maineq::build_layout(grouping, tol);
    auto c = maineq::coefficients(layout, wd, wm);
    model::ConstantModel cm(model.potential[0]);
    maineq::SeriesOptions opt{config.second_derivative, config.identity_nodes};
    auto series = maineq::solve_series(layout, c, cm, config.grid, tol, opt);
    EpsilonTrace eps{series.x, series.eps0, series.eps};

    Diagnostics diag;
    auto problem = recover_QH(model, eps, shift, tol, &diag);
    diag.residual = series.residual;
    diag.rcond = series.rcond;
    diag.identity_defect = series.identity_defect;
    diag.kernel_asymmetry = *std::max_element(series.kernel_asymmetry.begin(), series.kernel_asymmetry.end());
    diag.shift = shift;
    diag.n0 = grouping.n0;
    diag.unknowns = layout.size();
    diag.active = series.active.size();
    auto xi = maineq::diagnostics_xi(data, model_data, p, std::move(classes), tol);
    diag.xi = xi.xi;
    diag.Lambda = xi.Lambda;
    return {std::move(problem), model, std::move(eps), std::move(diag), {}, std::move(series), std::move(layout)};
}

namespace detail {

inline SpectralData first_bands(const SpectralData& data, int bands) {
    std::vector<SpectralDatum> e(data.entries().begin(),
                                 data.entries().begin() + static_cast<std::ptrdiff_t>(bands * data.slots()));
    return SpectralData(std::move(e), data.slots());
}

inline std::vector<int> class_leaders(const model::AsymptoticSummary& s, const ToleranceConfig& tol) {
    return model::detail::leaders(model::detail::z_classes(s.z, s.p, tol.z_equal));
}

}  // namespace detail

/// Full pipeline: shift, model construction, main equation, Q and H.
inline ReconstructionResult solve_inverse(const SpectralData& data, const InverseConfig& config = {}) {
    auto report = validate_spectral_data(data, config.tol);
    if (!report.ok()) throw StructuralError("reconstruct", "invalid spectral data: " + report.violations.front());
    auto shifted = shift_spectrum(data, config.tol.shift_margin);
    auto summary = model::analyze(shifted.data, config.tol);
    auto model = model::build_model(summary, config.grid);
    auto model_data = model::model_spectral_data(model, shifted.data.bands(), config.tol);
    auto out = reconstruct_against(shifted.data, model_data, model, summary.p, config, shifted.shift,
                                   detail::class_leaders(summary, config.tol));
    out.summary = summary;

    if (config.truncation_bands > 0 && config.truncation_bands < data.bands()) {
        InverseConfig inner = config;
        inner.truncation_bands = 0;
        inner.identity_nodes.clear();
        auto cut = detail::first_bands(shifted.data, config.truncation_bands);
        auto cut_model = model::model_spectral_data(model, config.truncation_bands, config.tol);
        auto coarse = reconstruct_against(cut, cut_model, model, summary.p, inner, shifted.shift,
                                          detail::class_leaders(summary, config.tol));
        out.diagnostics.truncation_delta = relative_l2(coarse.problem.potential, out.problem.potential);
        out.diagnostics.truncation_bands = config.truncation_bands;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Three-edge example: model Q = 0, star T, H = 0; data differ only in lambda_11 = a^2.

inline SpectralData sec6_data(double a, int bands) {
    const Matrix t = Projector::star(3).matrix();
    const Matrix tp = identity(3) - t;
    std::vector<SpectralDatum> e;
    for (int n = 1; n <= bands; ++n) {
        const double h = n - 0.5;
        e.push_back({n, 1, n == 1 ? a * a : h * h, (2 / pi) * h * h * t});
        e.push_back({n, 2, double(n * n), (2 / pi) * n * n * tp});
        e.push_back({n, 3, double(n * n), (2 / pi) * n * n * tp});
    }
    return SpectralData(std::move(e), 3);
}

struct Sec6Values {
    double f11, f12, f22, d0, d1, d2;
    Matrix S110, S111, eps0;
};

inline void check_sec6_parameter(double a) {
    if (!(a >= 0 && a < 1) || std::abs(a - 0.5) < 1e-12)
        throw StructuralError("reconstruct", "a must lie in [0, 1) and differ from 1/2");
}

inline Sec6Values sec6_closed_form(double a, double x) {
    check_sec6_parameter(a);
    const Matrix t = Projector::star(3).matrix();
    const Matrix tp = identity(3) - t;
    // sin(ax)/a and its a -> 0 limit
    const double sa = sinc_kernel(a * a, x).real();
    const double s2 = 2 * std::sin(x / 2);
    double f11;
    if (2 * a * x < 0.5) {
        // (x - sin(2ax)/(2a)) / (4 a^2) as a series in (2ax)^2
        double term = x * x * x / 6, sum = 0;
        for (int k = 1; k < 20; ++k) {
            sum += term;
            term *= -(2 * a * x) * (2 * a * x) / ((2 * k + 2) * (2 * k + 3));
        }
        f11 = 1 + sum / pi;
    } else {
        f11 = 1 + (x - std::sin(2 * a * x) / (2 * a)) / (4 * pi * a * a);
    }
    const double f22 = 1 - (x - std::sin(x)) / pi;
    // (1/(2 pi a)) (sin((a-1/2)x)/(a-1/2) - sin((a+1/2)x)/(a+1/2)); finite as a -> 0
    double f12;
    if (a < 1e-5)
        f12 = (4 * std::sin(x / 2) - 2 * x * std::cos(x / 2)) / pi;
    else
        f12 = (std::sin((a - 0.5) * x) / (a - 0.5) - std::sin((a + 0.5) * x) / (a + 0.5)) / (2 * pi * a);
    const double d0 = f11 * f22 + f12 * f12;
    const double d1 = sa * f22 + f12 * s2;
    const double d2 = f11 * s2 - f12 * sa;
    Sec6Values v{f11, f12, f22, d0, d1, d2, {}, {}, {}};
    v.S110 = (d1 / d0) * t + sa * tp;
    v.S111 = (d2 / d0) * t + s2 * tp;
    v.eps0 = ((d1 * sa - 2 * d2 * std::sin(x / 2)) / (2 * pi * d0)) * t;
    return v;
}

}  // namespace msl::reconstruct

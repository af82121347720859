#pragma once

// Star-shaped graph adapter: m edges joined at one vertex with continuity and
// Kirchhoff conditions, and the scalar local inverse problems per edge.

#include "msl/reconstruct.hpp"

namespace msl::graph {

struct StarGraphProblem {
    std::vector<std::vector<double>> edges;  // q_j on a common grid over [0, pi]

    int size() const { return static_cast<int>(edges.size()); }
    int intervals() const { return static_cast<int>(edges.front().size()) - 1; }

    static StarGraphProblem from_functions(const std::vector<std::function<double(double)>>& q, int intervals) {
        StarGraphProblem g;
        for (const auto& f : q) {
            std::vector<double> v;
            for (int i = 0; i <= intervals; ++i) v.push_back(f(pi * i / intervals));
            g.edges.push_back(std::move(v));
        }
        return g;
    }
};

inline Problem graph_to_matrix(const StarGraphProblem& g) {
    if (g.edges.empty()) throw StructuralError("graph", "a star needs at least one edge");
    const int m = g.size();
    const auto nodes = g.edges.front().size();
    for (const auto& e : g.edges) {
        if (e.size() != nodes) throw StructuralError("graph", "edge grids differ in length");
        for (double v : e)
            if (!std::isfinite(v)) throw StructuralError("graph", "edge potential is not finite");
    }
    std::vector<Matrix> q;
    for (std::size_t i = 0; i < nodes; ++i) {
        Matrix d = Matrix::Zero(m, m);
        for (int j = 0; j < m; ++j) d(j, j) = g.edges[static_cast<std::size_t>(j)][i];
        q.push_back(std::move(d));
    }
    return {PotentialGrid(std::move(q)), Projector::star(m), {Matrix::Zero(m, m)}};
}

/// Eigenvalues of all slots plus the (i, i) entries of the weights.
struct ScalarLocalData {
    int i = 1;  // 1-based edge index
    SpectralData data;  // 1 x 1 weights
};

inline ScalarLocalData extract_local(const SpectralData& full, int i) {
    if (i < 1 || i > full.dim()) throw StructuralError("graph", "edge index out of range");
    std::vector<SpectralDatum> e;
    for (const auto& d : full.entries()) {
        const cplx a = d.alpha(i - 1, i - 1);
        if (std::abs(a.imag()) > 1e-10 * std::max(1.0, std::abs(a)) || a.real() < -1e-10)
            throw StructuralError("graph", "diagonal weight is not real and nonnegative");
        e.push_back({d.n, d.k, d.lambda, Matrix::Constant(1, 1, cplx(a.real(), 0.0))});
    }
    return {i, SpectralData(std::move(e), full.slots())};
}

/// Theta_ii and the z_k seen from one edge's local data.
struct LocalAsymptotics {
    std::vector<double> z;
    double theta = 0;
};

inline LocalAsymptotics local_asymptotics(const ScalarLocalData& local, const ToleranceConfig& tol = {}) {
    const auto& data = local.data;
    const int m = data.slots();
    auto weights = model::collapse_weights(data, 1, tol);
    const auto bands = model::detail::fit_bands(data.bands());
    std::vector<double> ns(bands.begin(), bands.end());
    LocalAsymptotics out;
    for (int k = 1; k <= m; ++k) {
        std::vector<double> v;
        for (int n : bands) {
            const double centre = k == 1 ? n - 0.5 : n;
            v.push_back((model::detail::root_of(data.at(n, k).lambda) - centre) * pi * centre);
        }
        out.z.push_back(fit_limit_inverse_n(ns, v));
    }
    const auto classes = model::detail::z_classes(out.z, 1, tol.z_equal);
    for (int s : model::detail::leaders(classes)) {
        std::vector<double> v;
        for (int n : bands) {
            const double centre = s == 1 ? n - 0.5 : n;
            double sum = 0;
            for (int k = 1; k <= m; ++k)
                if (classes[static_cast<std::size_t>(k - 1)] == s) sum += weights.at(n, k)(0, 0).real();
            v.push_back(pi / (2 * centre * centre) * sum);
        }
        out.theta += out.z[static_cast<std::size_t>(s - 1)] * fit_limit_inverse_n(ns, v);
    }
    return out;
}

/// Star graph with constant edge potentials; the reference for the local problems.
struct EdgeModel {
    std::vector<double> c;  // constant potential per edge
    Problem problem;
    SpectralData data;      // full weight matrices of the model
};

/// Edge constants from the local data of edges 1..m-1: with Omega = diag(omega),
/// Theta_ii = omega_i (1 - 2/m) + 2 z_1 / m and sum omega = m z_1.
inline EdgeModel estimate_edge_model(const std::vector<ScalarLocalData>& locals, int m, int intervals = 1000,
                                     const ToleranceConfig& tol = {}) {
    if (m < 3) throw StructuralError("graph", "edge constants need m >= 3");
    if (static_cast<int>(locals.size()) < m - 1) throw StructuralError("graph", "local data for m - 1 edges is needed");
    const int bands = locals.front().data.bands();
    std::vector<double> omega(static_cast<std::size_t>(m), 0.0);
    double z1 = 0, sum = 0;
    for (int j = 0; j < m - 1; ++j) {
        const auto& local = locals[static_cast<std::size_t>(j)];
        if (local.i != j + 1) throw StructuralError("graph", "local data must be ordered by edge");
        auto a = local_asymptotics(local, tol);
        z1 += a.z.front() / (m - 1);
        omega[static_cast<std::size_t>(j)] = a.theta;  // finished below once z1 is known
    }
    for (int j = 0; j < m - 1; ++j) {
        auto& w = omega[static_cast<std::size_t>(j)];
        w = (w - 2 * z1 / m) / (1.0 - 2.0 / m);
        sum += w;
    }
    omega.back() = m * z1 - sum;

    std::vector<double> c;
    std::vector<std::function<double(double)>> q;
    for (double w : omega) {
        c.push_back(2 * w / pi);
        q.push_back([v = c.back()](double) { return v; });
    }
    auto problem = graph_to_matrix(StarGraphProblem::from_functions(q, intervals));
    auto data = forward::spectral_data(problem, bands, tol);
    return {std::move(c), std::move(problem), std::move(data)};
}

struct LocalResult {
    std::vector<double> q;  // recovered q_i on the grid
    reconstruct::Diagnostics diagnostics;
};

namespace detail {

inline Problem scalar_problem(double c, int intervals) {
    return {PotentialGrid::constant(Matrix::Constant(1, 1, cplx(c, 0)), intervals), Projector(identity(1)),
            {Matrix::Zero(1, 1)}};
}

inline SpectralData restrict_to(const SpectralData& full, int i) {
    std::vector<SpectralDatum> e = full.entries();
    for (auto& d : e) {
        const cplx a = d.alpha(i - 1, i - 1);
        d.alpha.setZero();
        d.alpha(i - 1, i - 1) = a;
    }
    return SpectralData(std::move(e), full.slots());
}

}  // namespace detail

/// Scalar main equation for edge i against the edge model.
inline LocalResult solve_local_inverse(const ScalarLocalData& local, const EdgeModel& model,
                                       const reconstruct::InverseConfig& config = {}) {
    const int i = local.i;
    const int m = model.problem.dim();
    if (i < 1 || i > m - 1) throw StructuralError("graph", "local problems cover edges 1..m-1");
    if (local.data.bands() != model.data.bands() || local.data.slots() != m)
        throw StructuralError("graph", "local data and model data do not match");
    auto model_local = extract_local(model.data, i);
    auto r = reconstruct::reconstruct_against(local.data, model_local.data,
                                              detail::scalar_problem(model.c[static_cast<std::size_t>(i - 1)], config.grid),
                                              1, config);
    LocalResult out;
    for (const auto& v : r.problem.potential.samples()) out.q.push_back(v(0, 0).real());
    out.diagnostics = std::move(r.diagnostics);
    return out;
}

/// The same equations assembled at matrix level: weights restricted to the
/// (i, i) entry, matrix model kernels, (i, i) entry of the recovered Q.
inline LocalResult solve_local_matrix_path(const SpectralData& full, int i, const EdgeModel& model,
                                           const reconstruct::InverseConfig& config = {}) {
    if (model.problem.potential.intervals() != config.grid)
        throw StructuralError("graph", "edge model grid differs from the configured grid");
    auto r = reconstruct::reconstruct_against(detail::restrict_to(full, i), detail::restrict_to(model.data, i),
                                              model.problem, 1, config);
    LocalResult out;
    for (const auto& v : r.problem.potential.samples()) out.q.push_back(v(i - 1, i - 1).real());
    out.diagnostics = std::move(r.diagnostics);
    return out;
}

inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double w = (i == 0 || i + 1 == a.size()) ? 0.5 : 1.0;
        num += w * (a[i] - b[i]) * (a[i] - b[i]);
        den += w * b[i] * b[i];
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace msl::graph

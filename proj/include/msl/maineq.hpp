#pragma once

// Grouped main equation psi~(x) = psi(x) (I + R~(x)) on the truncated data.

#include "msl/model.hpp"

namespace msl::maineq {

struct GroupEntry {
    int n = 1;
    int k = 1;
    int s = 0;  // 0: data of L, 1: model data
    double lambda = 0;
    double rho = 0;
};

struct Group {
    int index = 1;  // 1-based
    double center = 0;  // asymptotic centre; 0 for the first group
    std::vector<GroupEntry> entries;
};

struct Grouping {
    int n0 = 1;
    int bands = 0;
    int slots = 0;
    int p = 0;
    std::vector<Group> groups;
};

inline Grouping build_groups(const SpectralData& data, const SpectralData& model, int p,
                             const ToleranceConfig& tol = {}) {
    (void)tol;
    if (data.bands() != model.bands() || data.slots() != model.slots())
        throw StructuralError("maineq", "data and model data must share bands and slots");
    const int bands = data.bands(), m = data.slots();
    const SpectralData* sets[2] = {&data, &model};

    auto settled = [&](int n) {
        for (int k = 1; k <= m; ++k) {
            const double centre = k <= p ? n - 0.5 : n;
            for (const auto* set : sets)
                if (!(std::abs(model::detail::root_of(set->at(n, k).lambda) - centre) < 0.25)) return false;
        }
        return true;
    };
    int n0 = bands;
    while (n0 >= 1 && settled(n0)) --n0;
    n0 = std::max(n0, 1);
    if (n0 > bands - 2)
        throw GroupingError("maineq", "square roots do not settle into their asymptotic windows (n0 = " +
                                          std::to_string(n0) + ", bands = " + std::to_string(bands) + ")");

    Grouping g{n0, bands, m, p, {}};
    auto entry = [&](int n, int k, int s) {
        const double lambda = sets[s]->at(n, k).lambda;
        return GroupEntry{n, k, s, lambda, model::detail::root_of(lambda)};
    };
    Group first{1, 0.0, {}};
    for (int n = 1; n <= n0; ++n)
        for (int k = 1; k <= m; ++k)
            for (int s = 0; s < 2; ++s) first.entries.push_back(entry(n, k, s));
    g.groups.push_back(first);
    for (int j = 1; j <= bands - n0; ++j) {
        const int n = n0 + j;
        Group half{2 * j, n - 0.5, {}}, whole{2 * j + 1, double(n), {}};
        for (int k = 1; k <= m; ++k)
            for (int s = 0; s < 2; ++s) (k <= p ? half : whole).entries.push_back(entry(n, k, s));
        g.groups.push_back(half);
        g.groups.push_back(whole);
    }
    return g;
}

/// One unknown per distinct eigenvalue per group.
struct SpectralValue {
    double lambda = 0;
    double rho = 0;
    int group = 0;  // position in Grouping::groups
};

struct ValueLayout {
    std::vector<SpectralValue> values;
    std::vector<std::vector<int>> group_values;  // per group: value indices
    std::vector<int> index_data;                 // (n, k) lexicographic -> value, s = 0
    std::vector<int> index_model;                // s = 1
    int slots = 0;

    std::size_t size() const noexcept { return values.size(); }
    int of(int n, int k, int s) const {
        const auto i = static_cast<std::size_t>((n - 1) * slots + (k - 1));
        return s == 0 ? index_data[i] : index_model[i];
    }
};

inline ValueLayout build_layout(const Grouping& grouping, const ToleranceConfig& tol = {}) {
    ValueLayout layout;
    layout.slots = grouping.slots;
    const auto total = static_cast<std::size_t>(grouping.bands * grouping.slots);
    layout.index_data.assign(total, -1);
    layout.index_model.assign(total, -1);
    for (std::size_t gi = 0; gi < grouping.groups.size(); ++gi) {
        auto entries = grouping.groups[gi].entries;
        std::stable_sort(entries.begin(), entries.end(),
                         [](const GroupEntry& a, const GroupEntry& b) { return a.lambda < b.lambda; });
        std::vector<int> mine;
        for (const auto& e : entries) {
            if (mine.empty() || !same_eigenvalue(layout.values[static_cast<std::size_t>(mine.back())].lambda, e.lambda,
                                                 tol.multiplicity)) {
                mine.push_back(static_cast<int>(layout.values.size()));
                layout.values.push_back({e.lambda, e.rho, static_cast<int>(gi)});
            }
            const auto i = static_cast<std::size_t>((e.n - 1) * grouping.slots + (e.k - 1));
            (e.s == 0 ? layout.index_data : layout.index_model)[i] = mine.back();
        }
        layout.group_values.push_back(mine);
    }
    return layout;
}

/// C_w = sum alpha'_{lj0} - sum alpha'_{lj1} over the entries sharing value w.
inline std::vector<Matrix> coefficients(const ValueLayout& layout, const model::CollapsedWeights& data,
                                        const model::CollapsedWeights& model) {
    const auto d = data.alpha_prime.front().rows();
    std::vector<Matrix> c(layout.size(), Matrix::Zero(d, d));
    std::vector<double> scale(layout.size(), 0.0);
    for (int n = 1; n <= data.bands; ++n)
        for (int k = 1; k <= data.slots; ++k) {
            const auto a = static_cast<std::size_t>(layout.of(n, k, 0));
            const auto b = static_cast<std::size_t>(layout.of(n, k, 1));
            c[a] += data.at(n, k);
            c[b] -= model.at(n, k);
            scale[a] += data.at(n, k).norm();
            scale[b] += model.at(n, k).norm();
        }
    // round-off left over from weights that cancel
    for (std::size_t w = 0; w < c.size(); ++w)
        if (c[w].norm() <= 1e-12 * scale[w]) c[w].setZero();
    return c;
}

/// Values whose coefficient does not cancel.
inline std::vector<int> active_values(const std::vector<Matrix>& c) {
    double scale = 0;
    for (const auto& m : c) scale = std::max(scale, norm2(m));
    std::vector<int> out;
    for (std::size_t i = 0; i < c.size(); ++i)
        if (norm2(c[i]) > 1e-14 * std::max(1.0, scale)) out.push_back(static_cast<int>(i));
    return out;
}

// ---------------------------------------------------------------------------
// Norms

struct GroupFunction {
    int group = 1;               // 1-based group index
    std::vector<double> rho;     // distinct square roots
    std::vector<Matrix> values;

    /// max of sup ||f|| and the difference quotients.
    double norm() const {
        double out = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            out = std::max(out, norm2(values[i]));
            for (std::size_t j = i + 1; j < values.size(); ++j)
                if (rho[i] != rho[j]) out = std::max(out, norm2(values[i] - values[j]) / std::abs(rho[i] - rho[j]));
        }
        return out;
    }
};

inline std::vector<GroupFunction> split(const ValueLayout& layout, const std::vector<Matrix>& per_value) {
    std::vector<GroupFunction> out;
    for (std::size_t g = 0; g < layout.group_values.size(); ++g) {
        GroupFunction f{static_cast<int>(g) + 1, {}, {}};
        for (int v : layout.group_values[g]) {
            f.rho.push_back(layout.values[static_cast<std::size_t>(v)].rho);
            f.values.push_back(per_value[static_cast<std::size_t>(v)]);
        }
        out.push_back(std::move(f));
    }
    return out;
}

/// sup_n n ||f_n||.
inline double sequence_norm(const std::vector<GroupFunction>& f) {
    double out = 0;
    for (const auto& g : f) out = std::max(out, g.group * g.norm());
    return out;
}

// ---------------------------------------------------------------------------
// Kernels

namespace detail {

/// One step of the cumulative integral of f = A^dagger B with the end-point
/// derivative correction (exact for cubics).
inline void hermite_step(Matrix& acc, double h, const Matrix& a0, const Matrix& da0, const Matrix& b0, const Matrix& db0,
                         const Matrix& a1, const Matrix& da1, const Matrix& b1, const Matrix& db1) {
    const Matrix f0 = a0.adjoint() * b0, f1 = a1.adjoint() * b1;
    const Matrix g0 = da0.adjoint() * b0 + a0.adjoint() * db0;
    const Matrix g1 = da1.adjoint() * b1 + a1.adjoint() * db1;
    acc += 0.5 * h * (f0 + f1) + (h * h / 12.0) * (g0 - g1);
}

}  // namespace detail

/// D(x, lambda_A, lambda_B) = int_0^x S_A^dagger S_B on every node of the traces.
inline std::vector<Matrix> kernel_D(const forward::SolutionTrace& a, const forward::SolutionTrace& b) {
    if (a.nodes() != b.nodes() || a.nodes() < 2 || a.y.front().rows() != b.y.front().rows())
        throw StructuralError("maineq", "kernel traces must share one grid");
    const double h = pi / static_cast<double>(a.nodes() - 1);
    std::vector<Matrix> out;
    Matrix acc = Matrix::Zero(a.y.front().cols(), b.y.front().cols());
    out.push_back(acc);
    for (std::size_t i = 1; i < a.nodes(); ++i) {
        detail::hermite_step(acc, h, a.y[i - 1], a.dy[i - 1], b.y[i - 1], b.dy[i - 1], a.y[i], a.dy[i], b.y[i], b.dy[i]);
        out.push_back(acc);
    }
    return out;
}

/// D(x, lambda_w, lambda_v) at the current node for rows w in `rows` and all v,
/// advanced node by node.
class KernelTable {
public:
    KernelTable(std::vector<int> rows, std::size_t values, Eigen::Index d)
        : rows_(std::move(rows)), values_(values), slot_(values, -1) {
        for (std::size_t r = 0; r < rows_.size(); ++r) slot_[static_cast<std::size_t>(rows_[r])] = static_cast<int>(r);
        table_.assign(rows_.size() * values_, Matrix::Zero(d, d));
    }

    void advance(double h, const std::vector<Matrix>& s0, const std::vector<Matrix>& ds0, const std::vector<Matrix>& s1,
                 const std::vector<Matrix>& ds1) {
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            const auto w = static_cast<std::size_t>(rows_[r]);
            for (std::size_t v = 0; v < values_; ++v)
                detail::hermite_step(table_[r * values_ + v], h, s0[w], ds0[w], s0[v], ds0[v], s1[w], ds1[w], s1[v],
                                     ds1[v]);
        }
    }

    bool has_row(int w) const { return slot_[static_cast<std::size_t>(w)] >= 0; }
    const Matrix& operator()(int w, int v) const {
        return table_[static_cast<std::size_t>(slot_[static_cast<std::size_t>(w)]) * values_ + static_cast<std::size_t>(v)];
    }
    const std::vector<int>& rows() const noexcept { return rows_; }

private:
    std::vector<int> rows_;
    std::size_t values_;
    std::vector<int> slot_;
    std::vector<Matrix> table_;
};

// ---------------------------------------------------------------------------
// Assembly and solution at one node

struct TruncatedMainEquation {
    double x = 0;
    Eigen::Index d = 0;
    Matrix K;    // block (w, v) = C_w D~(x, lambda_w, lambda_v)
    Matrix rhs;  // d x (values d): [S~_v]

    std::size_t values() const { return static_cast<std::size_t>(rhs.cols() / d); }
};

inline TruncatedMainEquation assemble(double x, const std::vector<Matrix>& c, const KernelTable& kernels,
                                      const std::vector<Matrix>& model_s) {
    const auto nv = static_cast<Eigen::Index>(model_s.size());
    const auto d = model_s.front().rows();
    TruncatedMainEquation eq{x, d, Matrix::Zero(nv * d, nv * d), Matrix(d, nv * d)};
    for (Eigen::Index v = 0; v < nv; ++v) eq.rhs.middleCols(v * d, d) = model_s[static_cast<std::size_t>(v)];
    for (int w : kernels.rows())
        for (Eigen::Index v = 0; v < nv; ++v)
            eq.K.block(w * d, v * d, d, d) = c[static_cast<std::size_t>(w)] * kernels(w, static_cast<int>(v));
    return eq;
}

struct MainSolution {
    std::vector<Matrix> S;
    Eigen::PartialPivLU<Matrix> lu;  // of (I + K)^T, reused for derivative solves
    double rcond = 0;
    double residual = 0;  // ||psi~ - psi (I + R~)||_B / ||psi~||_B

    std::vector<Matrix> solve(const std::vector<Matrix>& rhs) const {
        const auto d = rhs.front().rows();
        Matrix r(d, static_cast<Eigen::Index>(rhs.size()) * d);
        for (std::size_t v = 0; v < rhs.size(); ++v) r.middleCols(static_cast<Eigen::Index>(v) * d, d) = rhs[v];
        const Matrix x = lu.solve(r.transpose()).transpose();
        std::vector<Matrix> out;
        for (std::size_t v = 0; v < rhs.size(); ++v) out.push_back(x.middleCols(static_cast<Eigen::Index>(v) * d, d));
        return out;
    }
};

inline std::vector<Matrix> blocks(const Matrix& row, Eigen::Index d) {
    std::vector<Matrix> out;
    for (Eigen::Index v = 0; v < row.cols() / d; ++v) out.push_back(row.middleCols(v * d, d));
    return out;
}

/// Dense LU of the stacked system; residual measured in the B norm.
inline MainSolution solve_main(const TruncatedMainEquation& eq, const ValueLayout& layout,
                               const ToleranceConfig& tol = {}) {
    const auto n = eq.K.rows();
    const Matrix a = Matrix::Identity(n, n) + eq.K;
    MainSolution sol;
    sol.lu.compute(a.transpose());
    sol.rcond = sol.lu.rcond();
    if (!(sol.rcond > 1e-15))
        throw SolveFailure("maineq", "main equation is singular at x = " + std::to_string(eq.x), 1.0 / sol.rcond);
    const Matrix x = sol.lu.solve(eq.rhs.transpose()).transpose();
    sol.S = blocks(x, eq.d);
    const Matrix r = eq.rhs - x * a;
    const double scale = sequence_norm(split(layout, blocks(eq.rhs, eq.d)));
    const double res = sequence_norm(split(layout, blocks(r, eq.d)));
    sol.residual = scale > 0 ? res / scale : res;
    if (!(sol.residual <= tol.solve))
        throw SolveFailure("maineq",
                           "main equation residual " + std::to_string(sol.residual) + " at x = " + std::to_string(eq.x),
                           1.0 / sol.rcond);
    return sol;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct XiDiagnostics {
    std::vector<double> xi;  // xi_k, k = 1..groups
    double Lambda = 0;
};

/// xi_k over the groups; slots in one z class (by leader) form a sub-collection.
/// `classes` empty means one class per block.
inline XiDiagnostics diagnostics_xi(const SpectralData& data, const SpectralData& model, int p,
                                    std::vector<int> classes = {}, const ToleranceConfig& tol = {}) {
    const int m = data.slots();
    if (classes.empty())
        for (int k = 1; k <= m; ++k) classes.push_back(k <= p ? 1 : p + 1);
    auto grouping = build_groups(data, model, p, tol);
    auto wd = model::collapse_weights(data, p, tol), wm = model::collapse_weights(model, p, tol);
    XiDiagnostics out;
    double acc = 0;
    const auto d = data.dim();
    for (const auto& g : grouping.groups) {
        const double k = g.index;
        double gaps = 0;
        std::map<int, Matrix> sub;
        Matrix whole = Matrix::Zero(d, d);
        for (const auto& e : g.entries) {
            if (e.s != 0) continue;
            gaps += std::abs(e.rho - model::detail::root_of(model.at(e.n, e.k).lambda));
            const int cls = g.index == 1 ? 0 : classes[static_cast<std::size_t>(e.k - 1)];
            const Matrix diff = wd.at(e.n, e.k) - wm.at(e.n, e.k);
            auto it = sub.try_emplace(cls, Matrix::Zero(d, d)).first;
            it->second += diff;
            whole += diff;
        }
        double parts = 0;
        for (const auto& [cls, diff] : sub) parts += norm2(diff);
        const double xi = gaps + parts / (k * k * k) + norm2(whole) / (k * k);
        out.xi.push_back(xi);
        acc += (k * xi) * (k * xi);
    }
    out.Lambda = std::sqrt(acc);
    return out;
}

// ---------------------------------------------------------------------------
// Streaming solve over the grid

struct SeriesOptions {
    bool second_derivative = true;
    std::vector<std::size_t> identity_nodes;  // nodes where (I - R)(I + R~) - I is measured
};

struct MainSeries {
    std::vector<double> x;
    std::vector<Matrix> eps0;
    std::vector<Matrix> eps;                   // -2 eps0', term-wise
    std::vector<std::vector<Matrix>> S, dS, d2S;  // [value][node]
    std::vector<double> residual;
    std::vector<double> rcond;
    std::vector<std::pair<std::size_t, double>> identity_defect;
    std::vector<double> kernel_asymmetry;      // Frobenius, max over active pairs per node
    std::vector<int> active;
};

/// Solves the main equation on every node x_i = i pi / intervals and builds
/// eps0 and eps from the solution.
inline MainSeries solve_series(const ValueLayout& layout, const std::vector<Matrix>& c, const model::ConstantModel& model,
                               int intervals, const ToleranceConfig& tol = {}, const SeriesOptions& options = {}) {
    const std::size_t nv = layout.size();
    const auto d = c.front().rows();
    const double h = pi / intervals;
    MainSeries out;
    out.active = active_values(c);
    out.S.assign(nv, {});
    out.dS.assign(nv, {});
    if (options.second_derivative) out.d2S.assign(nv, {});

    KernelTable model_k(out.active, nv, d);
    KernelTable data_k(out.active, nv, d);
    const bool check_identity = !options.identity_nodes.empty();
    std::vector<Matrix> s0, ds0, x0, dx0;

    for (int i = 0; i <= intervals; ++i) {
        const double x = pi * i / intervals;
        std::vector<Matrix> s(nv), ds(nv);
        for (std::size_t v = 0; v < nv; ++v) {
            auto val = model.at(layout.values[v].lambda, x);
            s[v] = std::move(val.s);
            ds[v] = std::move(val.ds);
        }
        if (i > 0) model_k.advance(h, s0, ds0, s, ds);

        auto eq = assemble(x, c, model_k, s);
        auto sol = solve_main(eq, layout, tol);

        Matrix e0 = Matrix::Zero(d, d);
        for (int w : out.active) {
            const auto wi = static_cast<std::size_t>(w);
            e0 += sol.S[wi] * c[wi] * s[wi].adjoint();
        }
        std::vector<Matrix> rhs1(nv);
        for (std::size_t v = 0; v < nv; ++v) rhs1[v] = ds[v] - e0 * s[v];
        auto dx = sol.solve(rhs1);

        Matrix e1 = Matrix::Zero(d, d), e2 = Matrix::Zero(d, d);
        for (int w : out.active) {
            const auto wi = static_cast<std::size_t>(w);
            e1 += dx[wi] * c[wi] * s[wi].adjoint();
            e2 += sol.S[wi] * c[wi] * ds[wi].adjoint();
        }
        const Matrix de0 = e1 + e2;

        if (options.second_derivative) {
            std::vector<Matrix> rhs2(nv);
            for (std::size_t v = 0; v < nv; ++v)
                rhs2[v] = model.second(layout.values[v].lambda, s[v]) - e1 * s[v] - de0 * s[v] - e0 * ds[v];
            auto d2x = sol.solve(rhs2);
            for (std::size_t v = 0; v < nv; ++v) out.d2S[v].push_back(std::move(d2x[v]));
        }

        double asym = 0;
        for (int a : out.active)
            for (int b : out.active) asym = std::max(asym, (model_k(a, b).adjoint() - model_k(b, a)).norm());
        out.kernel_asymmetry.push_back(asym);

        if (check_identity) {
            if (i > 0) data_k.advance(h, x0, dx0, sol.S, dx);
            if (std::find(options.identity_nodes.begin(), options.identity_nodes.end(), static_cast<std::size_t>(i)) !=
                options.identity_nodes.end()) {
                const auto n = eq.K.rows();
                Matrix r = Matrix::Zero(n, n);
                for (int w : out.active)
                    for (std::size_t v = 0; v < nv; ++v)
                        r.block(w * d, static_cast<Eigen::Index>(v) * d, d, d) =
                            c[static_cast<std::size_t>(w)] * data_k(w, static_cast<int>(v));
                const Matrix defect = (Matrix::Identity(n, n) - r) * (Matrix::Identity(n, n) + eq.K) - Matrix::Identity(n, n);
                out.identity_defect.emplace_back(static_cast<std::size_t>(i), norm2(defect));
            }
            x0 = sol.S;
            dx0 = dx;
        }

        out.x.push_back(x);
        out.eps0.push_back(e0);
        out.eps.push_back(-2.0 * de0);
        out.residual.push_back(sol.residual);
        out.rcond.push_back(sol.rcond);
        for (std::size_t v = 0; v < nv; ++v) {
            out.S[v].push_back(sol.S[v]);
            out.dS[v].push_back(dx[v]);
        }
        s0 = std::move(s);
        ds0 = std::move(ds);
    }
    return out;
}

}  // namespace msl::maineq

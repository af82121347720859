#pragma once

// Asymptotic analysis of spectral data and the constant-potential model problem.

#include "msl/forward.hpp"

#include <map>
#include <set>

namespace msl::model {

/// Weights with repeated eigenvalues counted once (first slot of a tie keeps alpha).
struct CollapsedWeights {
    int slots = 0;
    int bands = 0;
    int p = 0;
    std::vector<Matrix> alpha_prime;  // lexicographic (n, k)
    std::vector<Matrix> sum_I;        // per band: sum over k <= p
    std::vector<Matrix> sum_II;       // per band: sum over k > p

    const Matrix& at(int n, int k) const { return alpha_prime[static_cast<std::size_t>((n - 1) * slots + (k - 1))]; }
    const Matrix& I(int n) const { return sum_I[static_cast<std::size_t>(n - 1)]; }
    const Matrix& II(int n) const { return sum_II[static_cast<std::size_t>(n - 1)]; }
};

inline CollapsedWeights collapse_weights(const SpectralData& data, int p, const ToleranceConfig& tol = {}) {
    CollapsedWeights w;
    w.slots = data.slots();
    w.bands = data.bands();
    w.p = p;
    const auto& e = data.entries();
    std::size_t leader = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (i > 0 && same_eigenvalue(e[i].lambda, e[leader].lambda, tol.multiplicity)) {
            w.alpha_prime.push_back(Matrix::Zero(e[i].alpha.rows(), e[i].alpha.cols()));
        } else {
            leader = i;
            w.alpha_prime.push_back(e[i].alpha);
        }
    }
    const auto d = data.dim();
    for (int n = 1; n <= w.bands; ++n) {
        Matrix a = Matrix::Zero(d, d), b = Matrix::Zero(d, d);
        for (int k = 1; k <= w.slots; ++k) (k <= p ? a : b) += w.at(n, k);
        w.sum_I.push_back(a);
        w.sum_II.push_back(b);
    }
    return w;
}

struct AsymptoticSummary {
    int p = 0;
    Matrix T;
    std::vector<double> z;      // z_1..z_p, then z_{p+1}..z_m
    std::map<int, Matrix> A;    // s -> A^(s), s in S (1-based)
    Matrix Theta;
    std::vector<int> S;         // class leaders, 1-based
    std::vector<std::string> warnings;
    double projector_defect = 0;

    int dim() const { return static_cast<int>(T.rows()); }
};

namespace detail {

inline double root_of(double lambda) { return lambda >= 0 ? std::sqrt(lambda) : -std::sqrt(-lambda); }

/// Bands used by the limit fits: the last max(3, ceil(N/2)).
inline std::vector<int> fit_bands(int bands) {
    const int count = std::min(bands, std::max(3, (bands + 1) / 2));
    std::vector<int> out;
    for (int n = bands - count + 1; n <= bands; ++n) out.push_back(n);
    return out;
}

/// Leader (1-based) of each slot's z-equality class; classes never cross the p boundary.
inline std::vector<int> z_classes(const std::vector<double>& z, int p, double tol) {
    std::vector<int> leader(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        const bool block_start = k == 0 || static_cast<int>(k) == p;
        if (block_start || std::abs(z[k] - z[k - 1]) > tol)
            leader[k] = static_cast<int>(k) + 1;
        else
            leader[k] = leader[k - 1];
    }
    return leader;
}

inline std::vector<int> leaders(const std::vector<int>& classes) {
    std::set<int> s(classes.begin(), classes.end());
    return {s.begin(), s.end()};
}

}  // namespace detail

/// Number of slots whose square roots sit near half-integers (majority vote
/// over the last ceil(N/2) bands).
inline int estimate_p(const SpectralData& data) {
    const int bands = data.bands();
    if (bands < 5) throw InconclusiveRankError("model", "at least 5 bands are needed to estimate p");
    const int first = bands - (bands + 1) / 2 + 1;
    const int total = bands - first + 1;
    int p = 0;
    for (int k = 1; k <= data.slots(); ++k) {
        int half = 0;
        for (int n = first; n <= bands; ++n) {
            const double rho = detail::root_of(data.at(n, k).lambda);
            const double frac = rho - std::floor(rho);
            if (std::abs(frac - 0.5) < std::min(frac, 1.0 - frac)) ++half;
        }
        const int majority = std::max(half, total - half);
        if (3 * majority < 2 * total)
            throw InconclusiveRankError("model", "slot " + std::to_string(k) + " is not clearly half-integer or integer (" +
                                                     std::to_string(half) + "/" + std::to_string(total) + ")");
        if (2 * half > total) ++p;
    }
    return p;
}

struct ProjectorFit {
    Matrix matrix;   // rounded projector
    Matrix raw;      // fitted limit before rounding
    double defect = 0;
};

/// Nearest orthogonal projector: eigenvalues snapped to {0, 1}.
inline ProjectorFit round_to_projector(const Matrix& raw) {
    auto eig = hermitian_eigen(raw);
    ProjectorFit fit{Matrix::Zero(raw.rows(), raw.cols()), raw, 0.0};
    for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
        const double snapped = eig.values(i) > 0.5 ? 1.0 : 0.0;
        fit.defect = std::max(fit.defect, std::abs(eig.values(i) - snapped));
        if (snapped > 0) fit.matrix += eig.vectors.col(i) * eig.vectors.col(i).adjoint();
    }
    return fit;
}

/// T = lim pi / (2 (n - 1/2)^2) alpha_n^I, fitted as limit + c/n and rounded.
inline ProjectorFit estimate_T(const CollapsedWeights& weights, const ToleranceConfig& tol = {}) {
    if (weights.bands < 3) throw NoisyDataError("model", "at least 3 bands are needed to estimate T", 0.0);
    std::vector<double> ns;
    std::vector<Matrix> values;
    for (int n : detail::fit_bands(weights.bands)) {
        const double c = n - 0.5;
        ns.push_back(n);
        values.push_back(pi / (2 * c * c) * weights.I(n));
    }
    auto fit = round_to_projector(hermitian_part(fit_limit_inverse_n(ns, values)));
    if (fit.defect > tol.fit)
        throw NoisyDataError("model", "fitted T is " + std::to_string(fit.defect) + " away from a projector",
                             fit.defect);
    const int rank = static_cast<int>((hermitian_eigen(fit.matrix).values.array() > 0.5).count());
    if (rank != weights.p)
        throw NoisyDataError("model",
                             "rank of fitted T (" + std::to_string(rank) + ") differs from p = " + std::to_string(weights.p),
                             fit.defect);
    return fit;
}

/// z_k, A^(s) and Theta from the asymptotics of the data.
inline AsymptoticSummary estimate_z_A_Theta(const SpectralData& data, const CollapsedWeights& weights,
                                            const ProjectorFit& t, int p, const ToleranceConfig& tol = {}) {
    const int m = data.slots();
    const auto d = data.dim();
    AsymptoticSummary out;
    out.p = p;
    out.T = t.matrix;
    out.projector_defect = t.defect;
    const auto bands = detail::fit_bands(data.bands());
    std::vector<double> ns(bands.begin(), bands.end());

    for (int k = 1; k <= m; ++k) {
        std::vector<double> values;
        for (int n : bands) {
            const double centre = k <= p ? n - 0.5 : n;
            values.push_back((detail::root_of(data.at(n, k).lambda) - centre) * pi * centre);
        }
        out.z.push_back(fit_limit_inverse_n(ns, values));
    }

    const auto classes = detail::z_classes(out.z, p, tol.z_equal);
    if (detail::z_classes(out.z, p, 2 * tol.z_equal) != classes)
        out.warnings.emplace_back("z equality classes change when tol_z is doubled");
    out.S = detail::leaders(classes);

    const Matrix tp = identity(d) - out.T;
    out.Theta = Matrix::Zero(d, d);
    for (int s : out.S) {
        std::vector<Matrix> values;
        for (int n : bands) {
            const double centre = s <= p ? n - 0.5 : n;
            Matrix sum = Matrix::Zero(d, d);
            for (int k = 1; k <= m; ++k)
                if (classes[static_cast<std::size_t>(k - 1)] == s) sum += weights.at(n, k);
            values.push_back(pi / (2 * centre * centre) * sum);
        }
        Matrix a = fit_limit_inverse_n(ns, values);
        a = s <= p ? Matrix(out.T * a * out.T) : Matrix(tp * a * tp);
        out.A[s] = hermitian_part(a);
        out.Theta += out.z[static_cast<std::size_t>(s - 1)] * out.A[s];
    }
    out.Theta = hermitian_part(out.Theta);
    return out;
}

/// Algorithm steps 1-6 in one call.
inline AsymptoticSummary analyze(const SpectralData& data, const ToleranceConfig& tol = {}) {
    const int p = estimate_p(data);
    auto weights = collapse_weights(data, p, tol);
    auto t = estimate_T(weights, tol);
    return estimate_z_A_Theta(data, weights, t, p, tol);
}

/// L~ = L((2/pi) Theta, T, 0).
inline Problem build_model(const AsymptoticSummary& summary, int intervals = 1000) {
    const int m = summary.dim();
    return {PotentialGrid::constant((2.0 / pi) * summary.Theta, intervals), Projector(summary.T),
            {Matrix::Zero(m, m)}};
}

/// Closed-form S, S', S'' for a constant Hermitian potential.
class ConstantModel {
public:
    explicit ConstantModel(const Matrix& q) : q_(hermitian_part(q)) {
        auto eig = hermitian_eigen(q_);
        d_ = eig.values;
        u_ = eig.vectors;
    }

    struct Values {
        Matrix s;
        Matrix ds;
    };

    Values at(cplx lambda, double x) const {
        const auto m = d_.size();
        Eigen::VectorXcd a(m), b(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const cplx w2 = lambda - d_(j);
            a(j) = sinc_kernel(w2, x);
            b(j) = cos_kernel(w2, x);
        }
        return {u_ * a.asDiagonal() * u_.adjoint(), u_ * b.asDiagonal() * u_.adjoint()};
    }

    /// S'' = (Q - lambda) S.
    Matrix second(cplx lambda, const Matrix& s) const { return q_ * s - lambda * s; }

    const Matrix& potential() const noexcept { return q_; }

private:
    Matrix q_;
    Matrix u_;
    RealVector d_;
};

inline forward::SolutionTrace constant_solution(const Matrix& q, cplx lambda, int intervals) {
    ConstantModel model(q);
    forward::SolutionTrace tr{lambda, {}, {}};
    for (int i = 0; i <= intervals; ++i) {
        auto v = model.at(lambda, pi * i / intervals);
        tr.y.push_back(std::move(v.s));
        tr.dy.push_back(std::move(v.ds));
    }
    return tr;
}

/// S~(x, lambda) of the model built from `summary`.
inline forward::SolutionTrace model_solution(const AsymptoticSummary& summary, cplx lambda, int intervals = 1000) {
    return constant_solution((2.0 / pi) * summary.Theta, lambda, intervals);
}

/// Spectral data of a problem with constant Q commuting with T and H = 0:
/// range T contributes d + (n - 1/2)^2, range T_perp contributes d + n^2.
inline SpectralData model_spectral_data(const Problem& model, int bands, const ToleranceConfig& tol = {}) {
    const int m = model.dim();
    const auto& grid = model.potential;
    if (!grid.is_constant(1e-12)) throw StructuralError("model", "closed-form model data needs a constant potential");
    const Matrix& q = grid[0];
    const Matrix& t = model.projector.matrix();
    if (norm2(q * t - t * q) > 1e-10 || norm2(model.boundary.matrix) > 1e-12)
        throw StructuralError("model", "closed-form model data needs [Q, T] = 0 and H = 0");

    struct Branch {
        double lambda;
        Matrix alpha;
    };
    std::vector<Branch> all;
    const double dmax = hermitian_eigen(q).values.cwiseAbs().maxCoeff();
    const int extra = 2 + static_cast<int>(std::ceil(std::sqrt(dmax)));
    for (int block = 0; block < 2; ++block) {
        const Matrix basis = range_basis(block == 0 ? t : model.projector.complement());
        if (basis.cols() == 0) continue;
        auto eig = hermitian_eigen(basis.adjoint() * q * basis);
        for (Eigen::Index j = 0; j < eig.values.size(); ++j) {
            const Eigen::VectorXcd u = basis * eig.vectors.col(j);
            for (int n = 1; n <= bands + extra; ++n) {
                const double c = block == 0 ? n - 0.5 : n;
                all.push_back({eig.values(j) + c * c, (2.0 / pi) * c * c * (u * u.adjoint())});
            }
        }
    }
    std::stable_sort(all.begin(), all.end(), [](const Branch& a, const Branch& b) { return a.lambda < b.lambda; });

    std::vector<SpectralDatum> out;
    const std::size_t needed = static_cast<std::size_t>(bands * m);
    for (std::size_t i = 0; i < all.size() && out.size() < needed;) {
        std::size_t j = i;
        Matrix alpha = Matrix::Zero(m, m);
        while (j < all.size() && same_eigenvalue(all[j].lambda, all[i].lambda, tol.multiplicity)) alpha += all[j++].alpha;
        for (std::size_t r = i; r < j && out.size() < needed; ++r) {
            const int idx = static_cast<int>(out.size());
            out.push_back({idx / m + 1, idx % m + 1, all[i].lambda, alpha});
        }
        i = j;
    }
    return SpectralData(std::move(out), m);
}

/// Omega, z, A^(s) and Theta computed from a known problem.
inline AsymptoticSummary forward_asymptotics(const Problem& problem, const ToleranceConfig& tol = {}) {
    const int m = problem.dim();
    const int p = problem.projector.rank();
    const Matrix& t = problem.projector.matrix();
    const Matrix tp = problem.projector.complement();
    const Matrix omega = 0.5 * problem.potential.integral();
    const Matrix& h = problem.boundary.matrix;

    AsymptoticSummary out;
    out.p = p;
    out.T = t;
    const Matrix first = hermitian_part(t * (omega - h) * t);
    const Matrix second = hermitian_part(tp * omega * tp);
    out.Theta = first + second;

    std::vector<Eigen::VectorXcd> vecs;
    for (int block = 0; block < 2; ++block) {
        const Matrix basis = range_basis(block == 0 ? t : tp);
        if (basis.cols() == 0) continue;
        auto eig = hermitian_eigen(basis.adjoint() * (block == 0 ? first : second) * basis);
        for (Eigen::Index j = 0; j < eig.values.size(); ++j) {
            out.z.push_back(eig.values(j));
            vecs.push_back(basis * eig.vectors.col(j));
        }
    }
    const auto classes = detail::z_classes(out.z, p, tol.z_equal);
    out.S = detail::leaders(classes);
    for (int s : out.S) {
        Matrix a = Matrix::Zero(m, m);
        for (std::size_t k = 0; k < classes.size(); ++k)
            if (classes[k] == s) a += vecs[k] * vecs[k].adjoint();
        out.A[s] = a;
    }
    return out;
}

}  // namespace msl::model

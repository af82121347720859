#pragma once

// Forward spectral solver: potential -> eigenvalues and weight matrices.

#include "msl/core.hpp"

#include <limits>
#include <map>
#include <optional>

namespace msl::forward {

/// Values (Y(x_i), Y'(x_i)) at every grid node for one spectral parameter.
struct SolutionTrace {
    cplx lambda;
    std::vector<Matrix> y;
    std::vector<Matrix> dy;

    std::size_t nodes() const noexcept { return y.size(); }
};

struct EigenRecord {
    double lambda = 0;
    int multiplicity = 1;
    int band = 1;
    std::vector<int> slots;       // k indices within `band`
    double gap = std::numeric_limits<double>::infinity();  // to nearest other eigenvalue
    int contour_count = 0;        // argument-principle count, 0 if not evaluated
};

struct WeylSample {
    cplx lambda;
    Matrix M;
};

namespace detail {

/// Potential flattened row-major for the hand-written integrator.
struct FlatPotential {
    int m = 0;
    int intervals = 0;
    double h = 0;
    std::vector<cplx> nodes;
    std::vector<cplx> mids;

    explicit FlatPotential(const PotentialGrid& grid)
        : m(grid.dim()), intervals(grid.intervals()), h(grid.step()) {
        const std::size_t mm = static_cast<std::size_t>(m) * m;
        nodes.resize(grid.nodes() * mm);
        mids.resize(static_cast<std::size_t>(intervals) * mm);
        for (std::size_t i = 0; i < grid.nodes(); ++i)
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < m; ++c) nodes[i * mm + r * m + c] = grid[i](r, c);
        // Cubic midpoint values keep the scheme fourth order for smooth Q;
        // linear averaging would cap it at h^2.
        const std::size_t n = static_cast<std::size_t>(intervals);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < mm; ++j) {
                auto at = [&](std::size_t k) { return nodes[k * mm + j]; };
                if (n < 3)
                    mids[i * mm + j] = 0.5 * (at(i) + at(i + 1));
                else if (i == 0)
                    mids[i * mm + j] = (5.0 * at(0) + 15.0 * at(1) - 5.0 * at(2) + at(3)) / 16.0;
                else if (i + 1 == n)
                    mids[i * mm + j] = (5.0 * at(n) + 15.0 * at(n - 1) - 5.0 * at(n - 2) + at(n - 3)) / 16.0;
                else
                    mids[i * mm + j] = (-at(i - 1) + 9.0 * at(i) + 9.0 * at(i + 1) - at(i + 2)) / 16.0;
            }
    }
};

inline std::vector<cplx> flatten(const Matrix& a) {
    std::vector<cplx> out(static_cast<std::size_t>(a.size()));
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c) out[static_cast<std::size_t>(r * a.cols() + c)] = a(r, c);
    return out;
}

inline Matrix unflatten(const std::vector<cplx>& v, int rows, int cols) {
    Matrix a(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) a(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    return a;
}

/// Classical RK4 for Y' = Z, Z' = (Q(x) - lambda) Y with Y, Z of shape m x cols.
/// Q at half steps comes from cubic interpolation. `observe(i, y, z)` runs at every node.
template <class Observer>
void rk4(const FlatPotential& q, cplx lambda, int cols, std::vector<cplx>& y, std::vector<cplx>& z,
         Observer&& observe) {
    const int m = q.m;
    const std::size_t n = static_cast<std::size_t>(m) * cols, mm = static_cast<std::size_t>(m) * m;
    std::vector<cplx> k1y(n), k1z(n), k2y(n), k2z(n), k3y(n), k3z(n), k4y(n), k4z(n), ty(n);
    const double h = q.h;

    auto apply = [&](const cplx* a, const std::vector<cplx>& in, std::vector<cplx>& out) {
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < cols; ++c) {
                cplx acc = -lambda * in[static_cast<std::size_t>(r * cols + c)];
                for (int k = 0; k < m; ++k) acc += a[r * m + k] * in[static_cast<std::size_t>(k * cols + c)];
                out[static_cast<std::size_t>(r * cols + c)] = acc;
            }
    };

    observe(std::size_t{0}, y, z);
    for (std::size_t i = 0; i < static_cast<std::size_t>(q.intervals); ++i) {
        const cplx* a0 = &q.nodes[i * mm];
        const cplx* am = &q.mids[i * mm];
        const cplx* a1 = &q.nodes[(i + 1) * mm];

        apply(a0, y, k1z);
        for (std::size_t j = 0; j < n; ++j) {
            k1y[j] = z[j];
            ty[j] = y[j] + 0.5 * h * k1y[j];
            k2y[j] = z[j] + 0.5 * h * k1z[j];
        }
        apply(am, ty, k2z);
        for (std::size_t j = 0; j < n; ++j) {
            ty[j] = y[j] + 0.5 * h * k2y[j];
            k3y[j] = z[j] + 0.5 * h * k2z[j];
        }
        apply(am, ty, k3z);
        for (std::size_t j = 0; j < n; ++j) {
            ty[j] = y[j] + h * k3y[j];
            k4y[j] = z[j] + h * k3z[j];
        }
        apply(a1, ty, k4z);
        for (std::size_t j = 0; j < n; ++j) {
            y[j] += h / 6.0 * (k1y[j] + 2.0 * k2y[j] + 2.0 * k3y[j] + k4y[j]);
            z[j] += h / 6.0 * (k1z[j] + 2.0 * k2z[j] + 2.0 * k3z[j] + k4z[j]);
        }
        observe(i + 1, y, z);
    }
    for (std::size_t j = 0; j < n; ++j)
        if (!std::isfinite(y[j].real()) || !std::isfinite(y[j].imag()) || !std::isfinite(z[j].real()) ||
            !std::isfinite(z[j].imag()))
            throw IntegrationOverflow("forward", "non-finite solution values while integrating");
}

struct Terminal {
    Matrix y;
    Matrix dy;
};

inline Terminal terminal(const FlatPotential& q, cplx lambda, const Matrix& y0, const Matrix& dy0) {
    auto y = flatten(y0), z = flatten(dy0);
    rk4(q, lambda, static_cast<int>(y0.cols()), y, z, [](std::size_t, const auto&, const auto&) {});
    return {unflatten(y, q.m, static_cast<int>(y0.cols())), unflatten(z, q.m, static_cast<int>(y0.cols()))};
}

inline Matrix boundary_form(const Problem& problem, const Matrix& y, const Matrix& dy) {
    const Matrix& t = problem.projector.matrix();
    return t * (dy - problem.boundary.matrix * y) - problem.projector.complement() * y;
}

}  // namespace detail

/// Integrates the matrix equation from x = 0 with (Y(0), Y'(0)) = (y0, dy0).
inline SolutionTrace integrate(const Problem& problem, cplx lambda, const Matrix& y0, const Matrix& dy0) {
    const int m = problem.dim();
    if (y0.rows() != m || dy0.rows() != m || y0.cols() != dy0.cols())
        throw StructuralError("forward", "initial data must have m rows and matching columns");
    if (!std::isfinite(lambda.real()) || !std::isfinite(lambda.imag()))
        throw StructuralError("forward", "spectral parameter must be finite");
    detail::FlatPotential q(problem.potential);
    SolutionTrace trace{lambda, {}, {}};
    trace.y.reserve(problem.potential.nodes());
    trace.dy.reserve(problem.potential.nodes());
    const int cols = static_cast<int>(y0.cols());
    auto y = detail::flatten(y0), z = detail::flatten(dy0);
    detail::rk4(q, lambda, cols, y, z, [&](std::size_t, const std::vector<cplx>& yy, const std::vector<cplx>& zz) {
        trace.y.push_back(detail::unflatten(yy, m, cols));
        trace.dy.push_back(detail::unflatten(zz, m, cols));
    });
    return trace;
}

/// S(x, lambda): S(0) = 0, S'(0) = I.
inline SolutionTrace integrate_s(const Problem& problem, cplx lambda) {
    const int m = problem.dim();
    return integrate(problem, lambda, Matrix::Zero(m, m), identity(m));
}

/// C(x, lambda): C(0) = I, C'(0) = 0.
inline SolutionTrace integrate_c(const Problem& problem, cplx lambda) {
    const int m = problem.dim();
    return integrate(problem, lambda, identity(m), Matrix::Zero(m, m));
}

/// V(Y) = T (Y'(pi) - H Y(pi)) - T_perp Y(pi) from the last node of the trace.
inline Matrix boundary_form(const Problem& problem, const SolutionTrace& trace) {
    if (trace.nodes() == 0) throw StructuralError("forward", "empty trace");
    return detail::boundary_form(problem, trace.y.back(), trace.dy.back());
}

/// det V(S(., lambda)); zeros are the eigenvalues.
inline cplx characteristic(const Problem& problem, cplx lambda) {
    detail::FlatPotential q(problem.potential);
    const int m = problem.dim();
    auto end = detail::terminal(q, lambda, Matrix::Zero(m, m), identity(m));
    return detail::boundary_form(problem, end.y, end.dy).determinant();
}

/// Weyl matrix M(lambda) = -V(S)^{-1} V(C).
inline WeylSample weyl_matrix(const Problem& problem, cplx lambda) {
    detail::FlatPotential q(problem.potential);
    const int m = problem.dim();
    Matrix y0(m, 2 * m), dy0(m, 2 * m);
    y0 << Matrix::Zero(m, m), identity(m);
    dy0 << identity(m), Matrix::Zero(m, m);
    auto end = detail::terminal(q, lambda, y0, dy0);
    const Matrix v = detail::boundary_form(problem, end.y, end.dy);
    Eigen::PartialPivLU<Matrix> lu(v.leftCols(m));
    if (!(lu.rcond() > 1e-13))
        throw AtEigenvalueError("forward", "V(S) is singular: lambda is (numerically) an eigenvalue");
    return {lambda, -lu.solve(v.rightCols(m))};
}

namespace detail {

/// Characteristic evaluation on the real axis, parametrized by u with
/// lambda = u |u| (u = rho for lambda >= 0).
class CharacteristicScanner {
public:
    CharacteristicScanner(const Problem& problem, const ToleranceConfig& tol)
        : problem_(problem), q_(problem.potential), tol_(tol), m_(problem.dim()) {}

    struct Sample {
        double u = 0;
        cplx det;
        double sigma_rel = 1;   // smallest / largest singular value of the scaled V(S)
        RealVector sigma;
    };

    static double lambda_of(double u) { return u * std::abs(u); }

    Sample sample(double u) {
        ++evaluations;
        const double lambda = lambda_of(u);
        auto end = terminal(q_, lambda, Matrix::Zero(m_, m_), identity(m_));
        const Matrix& t = problem_.projector.matrix();
        const Matrix tp = problem_.projector.complement();
        const Matrix top = t * (end.dy - problem_.boundary.matrix * end.y);
        const Matrix v = top - tp * end.y;
        // Scaling the T_perp block by max(1, |u|) leaves the zero set unchanged and
        // balances the block magnitudes (cos vs sin / rho).
        const Matrix vs = top - std::max(1.0, std::abs(u)) * tp * end.y;
        Eigen::JacobiSVD<Matrix> svd(vs);
        Sample s{u, v.determinant(), 1.0, svd.singularValues()};
        const double smax = s.sigma(0);
        s.sigma_rel = smax > 0 ? s.sigma(s.sigma.size() - 1) / smax : 0.0;
        return s;
    }

    double projected(const Sample& s) const { return (s.det * std::conj(phase_)).real(); }

    void set_phase(cplx f) {
        if (std::abs(f) > 0) phase_ = f / std::abs(f);
    }

    int multiplicity(const Sample& s) const {
        const double cut = tol_.rank * s.sigma(0);
        int count = 0;
        for (Eigen::Index i = 0; i < s.sigma.size(); ++i)
            if (s.sigma(i) <= cut) ++count;
        return count;
    }

    /// Bisection then safeguarded secant on the projected determinant.
    double refine_sign_change(Sample a, Sample b) {
        double ga = projected(a), gb = projected(b);
        double ua = a.u, ub = b.u;
        while (ub - ua > 1e-6) {
            const double um = 0.5 * (ua + ub);
            const double gm = projected(sample(um));
            if (gm == 0.0) return um;
            if ((gm < 0) == (ga < 0)) {
                ua = um;
                ga = gm;
            } else {
                ub = um;
                gb = gm;
            }
        }
        double prev = 0.5 * (ua + ub);
        for (int it = 0; it < 60; ++it) {
            double un = ub - gb * (ub - ua) / (gb - ga);
            if (!(un > ua && un < ub)) un = 0.5 * (ua + ub);
            const double gn = projected(sample(un));
            if (gn == 0.0) return un;
            if ((gn < 0) == (ga < 0)) {
                ua = un;
                ga = gn;
            } else {
                ub = un;
                gb = gn;
            }
            if (std::abs(un - prev) <= tol_.root || ub - ua <= tol_.root) return un;
            prev = un;
        }
        return prev;
    }

    /// Golden-section minimization of sigma_rel on [a, b].
    Sample minimize_sigma(double a, double b) {
        const double g = 0.5 * (std::sqrt(5.0) - 1.0);
        double c = b - g * (b - a), d = a + g * (b - a);
        Sample sc = sample(c), sd = sample(d);
        for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, std::abs(a)); ++it) {
            if (sc.sigma_rel < sd.sigma_rel) {
                b = d;
                d = c;
                sd = sc;
                c = b - g * (b - a);
                sc = sample(c);
            } else {
                a = c;
                c = d;
                sc = sd;
                d = a + g * (b - a);
                sd = sample(d);
            }
        }
        return sc.sigma_rel < sd.sigma_rel ? sc : sd;
    }

    /// Roots (u values) located on the grid u_lo + (j + 1/2) du, j < count.
    std::vector<double> locate(double u_lo, double u_hi, double du) {
        std::vector<Sample> grid;
        for (double u = u_lo + 0.5 * du; u < u_hi; u += du) grid.push_back(sample(u));
        std::vector<double> roots;
        if (grid.empty()) return roots;
        if (phase_ == cplx(0.0))
            for (const auto& s : grid)
                if (std::abs(s.det) > 0) {
                    set_phase(s.det);
                    break;
                }
        std::vector<bool> sign_change(grid.size(), false);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double gi = projected(grid[i]);
            if (gi == 0.0) {
                roots.push_back(grid[i].u);
                continue;
            }
            if (i + 1 < grid.size()) {
                const double gj = projected(grid[i + 1]);
                if (gj != 0.0 && (gi < 0) != (gj < 0)) {
                    sign_change[i] = true;
                    roots.push_back(refine_sign_change(grid[i], grid[i + 1]));
                }
            }
        }
        for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
            if (sign_change[i - 1] || sign_change[i]) continue;
            if (projected(grid[i]) == 0.0) continue;
            if (grid[i].sigma_rel < grid[i - 1].sigma_rel && grid[i].sigma_rel <= grid[i + 1].sigma_rel) {
                const Sample best = minimize_sigma(grid[i - 1].u, grid[i + 1].u);
                if (best.sigma_rel <= 1e-6) roots.push_back(best.u);
            }
        }
        std::sort(roots.begin(), roots.end());
        std::vector<double> merged;
        for (double r : roots)
            if (merged.empty() || std::abs(r - merged.back()) > 1e-8 * (1.0 + std::abs(r))) merged.push_back(r);
        return merged;
    }

    /// Argument-principle count of zeros of det V inside a rectangle around
    /// the real segment [lambda_a, lambda_b].
    int count_in_segment(double lambda_a, double lambda_b) {
        const double width = lambda_b - lambda_a;
        const double half_height = 0.25 * width + 0.05;
        const std::array<cplx, 4> corners{cplx(lambda_a, -half_height), cplx(lambda_b, -half_height),
                                          cplx(lambda_b, half_height), cplx(lambda_a, half_height)};
        double total = 0;
        for (int e = 0; e < 4; ++e) total += phase_change(corners[e], corners[(e + 1) % 4], 0);
        return static_cast<int>(std::lround(total / (2 * pi)));
    }

    cplx det_at(cplx lambda) {
        ++evaluations;
        auto end = terminal(q_, lambda, Matrix::Zero(m_, m_), identity(m_));
        return boundary_form(problem_, end.y, end.dy).determinant();
    }

    int evaluations = 0;

private:
    double phase_change(cplx a, cplx b, int depth) {
        const int pieces = 16;
        double total = 0;
        cplx prev_z = a, prev_f = det_at(a);
        for (int j = 1; j <= pieces; ++j) {
            const cplx z = a + (b - a) * (static_cast<double>(j) / pieces);
            const cplx f = det_at(z);
            double d = std::arg(f / prev_f);
            if (std::abs(d) > pi / 4 && depth < 6)
                d = phase_change(prev_z, z, depth + 1);
            total += d;
            prev_z = z;
            prev_f = f;
        }
        return total;
    }

    const Problem& problem_;
    FlatPotential q_;
    ToleranceConfig tol_;
    int m_;
    cplx phase_{0.0, 0.0};
};

}  // namespace detail

/// Locates the first n_max * m eigenvalues (with multiplicity), grouped into
/// records; band/slot indices follow the nondecreasing order.
inline std::vector<EigenRecord> find_eigenvalues(const Problem& problem, int n_max,
                                                 const ToleranceConfig& tol = {}) {
    const int m = problem.dim();
    const int needed = n_max * m;
    detail::CharacteristicScanner scanner(problem, tol);

    double qmin = std::numeric_limits<double>::infinity();
    for (const auto& qi : problem.potential.samples()) qmin = std::min(qmin, hermitian_eigen(qi).values(0));
    const double hn = norm2(problem.boundary.matrix);
    const double lambda_lo = std::min(0.0, qmin) - (hn + 1.0) * (hn + 1.0) - 1.0;
    const double u_lo = -std::sqrt(-lambda_lo);

    struct Root {
        double u;
        int mult;
    };
    std::vector<Root> roots;
    auto add_roots = [&](const std::vector<double>& us) {
        for (double u : us) {
            bool dup = false;
            for (const auto& r : roots)
                if (std::abs(r.u - u) <= 1e-8 * (1.0 + std::abs(u))) dup = true;
            if (dup) continue;
            const int mult = std::max(1, scanner.multiplicity(scanner.sample(u)));
            roots.push_back({u, mult});
        }
        std::sort(roots.begin(), roots.end(), [](const Root& a, const Root& b) { return a.u < b.u; });
    };
    auto count_between = [&](double a, double b) {
        int c = 0;
        for (const auto& r : roots)
            if (r.u >= a && r.u < b) c += r.mult;
        return c;
    };

    const double du = 0.01;
    // Band windows: rho in [n - 3/4, n + 1/4]; the first window reaches down to u_lo.
    auto window = [&](int n) {
        return std::pair<double, double>{n == 1 ? u_lo : n - 0.75, n + 0.25};
    };
    int scanned_bands = 0;
    auto scan_band = [&](int n) {
        auto [a, b] = window(n);
        add_roots(scanner.locate(a, b, du));
        // Clustered roots may hide inside one grid cell: compare with the
        // argument-principle count and rescan finer when short.
        if (count_between(a, b) != m) {
            const double la = detail::CharacteristicScanner::lambda_of(a);
            const double lb = detail::CharacteristicScanner::lambda_of(b);
            const int expected = scanner.count_in_segment(la, lb);
            for (double fine = du / 8; count_between(a, b) < expected && fine > 1e-6; fine /= 8)
                add_roots(scanner.locate(a, b, fine));
        }
        scanned_bands = n;
    };

    int total = 0;
    const int max_bands = 4 * n_max + 40 + static_cast<int>(std::sqrt(std::max(0.0, -qmin)));
    for (int n = 1; n <= max_bands; ++n) {
        scan_band(n);
        total = 0;
        for (const auto& r : roots) total += r.mult;
        // Scan one band past the last needed eigenvalue so gaps are known.
        if (total >= needed && n >= n_max + 1) break;
    }
    if (total < needed) {
        int band = 1;
        while (band * m <= total) ++band;
        throw BracketExhaustionError("forward",
                                     "located " + std::to_string(total) + " of " + std::to_string(needed) +
                                         " eigenvalues (band " + std::to_string(band) + " incomplete)",
                                     band, needed - total);
    }
    (void)scanned_bands;

    std::vector<EigenRecord> records;
    int slot = 0;  // zero-based global slot counter
    for (std::size_t i = 0; i < roots.size() && slot < needed; ++i) {
        const double lambda = detail::CharacteristicScanner::lambda_of(roots[i].u);
        double gap = std::numeric_limits<double>::infinity();
        if (i > 0) gap = std::min(gap, lambda - detail::CharacteristicScanner::lambda_of(roots[i - 1].u));
        if (i + 1 < roots.size())
            gap = std::min(gap, detail::CharacteristicScanner::lambda_of(roots[i + 1].u) - lambda);
        int left = roots[i].mult;
        while (left > 0 && slot < needed) {
            EigenRecord rec;
            rec.lambda = lambda;
            rec.multiplicity = roots[i].mult;
            rec.band = slot / m + 1;
            rec.gap = gap;
            while (left > 0 && slot < needed && slot / m + 1 == rec.band) {
                rec.slots.push_back(slot % m + 1);
                ++slot;
                --left;
            }
            records.push_back(rec);
        }
    }
    return records;
}

namespace detail {

struct ContourResult {
    Matrix alpha;
    int count = 0;
};

/// -1/(2 pi i) \oint M dlambda and the winding number of det V(S) on a circle.
inline ContourResult residue_contour(const Problem& problem, double lambda0, double radius, int points) {
    FlatPotential q(problem.potential);
    const int m = problem.dim();
    Matrix y0(m, 2 * m), dy0(m, 2 * m);
    y0 << Matrix::Zero(m, m), identity(m);
    dy0 << identity(m), Matrix::Zero(m, m);
    Matrix acc = Matrix::Zero(m, m);
    double winding = 0;
    cplx first_det, prev_det;
    for (int j = 0; j < points; ++j) {
        const double theta = 2 * pi * j / points;
        const cplx e = std::polar(1.0, theta);
        const cplx lambda = lambda0 + radius * e;
        auto end = terminal(q, lambda, y0, dy0);
        const Matrix v = boundary_form(problem, end.y, end.dy);
        Eigen::PartialPivLU<Matrix> lu(v.leftCols(m));
        acc += (-lu.solve(v.rightCols(m))) * e;
        const cplx det = lu.determinant();
        if (j == 0)
            first_det = det;
        else
            winding += std::arg(det / prev_det);
        prev_det = det;
    }
    winding += std::arg(first_det / prev_det);
    return {-(radius / points) * acc, static_cast<int>(std::lround(winding / (2 * pi)))};
}

}  // namespace detail

/// alpha = -Res M at the record's eigenvalue via trapezoidal quadrature on a
/// circle. radius <= 0 selects min(contour_radius, gap / 3).
inline Matrix weight_matrix(const Problem& problem, const EigenRecord& eigen, const ToleranceConfig& tol = {},
                            double radius = 0.0) {
    const double safe = std::min(tol.contour_radius, eigen.gap / 3.0);
    if (radius <= 0.0) radius = safe;
    if (radius >= 0.5 * eigen.gap)
        throw ContourClashError("forward",
                                "contour radius " + std::to_string(radius) + " reaches a neighbouring eigenvalue",
                                safe);
    auto res = detail::residue_contour(problem, eigen.lambda, radius, tol.quadrature_points);
    return hermitian_part(res.alpha);
}

/// Argument-principle multiplicity on the residue circle.
inline int contour_multiplicity(const Problem& problem, const EigenRecord& eigen, const ToleranceConfig& tol = {}) {
    const double radius = std::min(tol.contour_radius, eigen.gap / 3.0);
    return detail::residue_contour(problem, eigen.lambda, radius, tol.quadrature_points).count;
}

/// Eigenvalues and weight matrices for bands 1..n_max. Weights are computed
/// once per distinct eigenvalue and shared by every slot it occupies.
inline SpectralData spectral_data(const Problem& problem, int n_max, const ToleranceConfig& tol = {}) {
    auto records = find_eigenvalues(problem, n_max, tol);
    std::vector<SpectralDatum> out;
    out.reserve(static_cast<std::size_t>(n_max * problem.dim()));
    std::optional<std::pair<double, Matrix>> last;
    for (const auto& rec : records) {
        if (!last || last->first != rec.lambda) {
            const double radius = std::min(tol.contour_radius, rec.gap / 3.0);
            auto res = detail::residue_contour(problem, rec.lambda, radius, tol.quadrature_points);
            if (res.count != rec.multiplicity)
                throw StructuralError("forward", "multiplicity mismatch at lambda = " + std::to_string(rec.lambda) +
                                                     ": rank gives " + std::to_string(rec.multiplicity) +
                                                     ", contour count " + std::to_string(res.count));
            last = std::pair<double, Matrix>{rec.lambda, hermitian_part(res.alpha)};
        }
        for (int k : rec.slots) out.push_back({rec.band, k, rec.lambda, last->second});
    }
    return SpectralData(std::move(out), problem.dim());
}

}  // namespace msl::forward

// msl: forward and inverse spectral computations for matrix Sturm-Liouville problems.

#include "msl/io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <random>

using namespace msl;

namespace {

struct Args {
    io::RunConfig run;
    std::string input;
    double a = 0.3;
    int edge = 0;
    bool matrix_check = false;
};

void add_common(CLI::App* cmd, Args& args) {
    cmd->add_option("--bands", args.run.bands, "number of eigenvalue bands")->check(CLI::PositiveNumber);
    cmd->add_option("--grid", args.run.grid, "intervals on [0, pi]")->check(CLI::PositiveNumber);
    cmd->add_option("--tol-spec", args.run.tol_spec, "absolute eigenvalue tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--tol-alpha", args.run.tol_alpha, "relative weight tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--output", args.run.output, "output path prefix");
    cmd->add_option("--seed", args.run.seed, "seed for synthetic inputs");
}

ToleranceConfig tolerances(const io::RunConfig& run) {
    ToleranceConfig tol;
    tol.spectrum = run.tol_spec;
    tol.alpha = run.tol_alpha;
    return tol;
}

reconstruct::InverseConfig inverse_config(const io::RunConfig& run) {
    reconstruct::InverseConfig c;
    c.grid = run.grid;
    c.tol = tolerances(run);
    c.truncation_bands = run.truncation_bands;
    return c;
}

std::string prefix(const io::RunConfig& run, const std::string& fallback) {
    return run.output.empty() ? fallback : run.output;
}

void print_table(const SpectralData& d, int rows = -1) {
    const int bands = rows < 0 ? d.bands() : std::min(rows, d.bands());
    std::printf("n");
    for (int k = 1; k <= d.slots(); ++k) std::printf(" | lambda_n%d", k);
    std::printf("\n");
    for (int n = 1; n <= bands; ++n) {
        std::printf("%d", n);
        for (int k = 1; k <= d.slots(); ++k) std::printf(" | %.6f", d.at(n, k).lambda);
        std::printf("\n");
    }
}

// h when H = h T.
std::optional<double> scalar_boundary(const Problem& p) {
    const Matrix& t = p.projector.matrix();
    const int rank = p.projector.rank();
    if (rank == 0) return std::nullopt;
    const double h = p.boundary.matrix.trace().real() / rank;
    if (norm2(p.boundary.matrix - h * t) > 1e-8 * std::max(1.0, std::abs(h))) return std::nullopt;
    return h;
}

// true when every Q(x) is a multiple of T
bool scalar_potential(const Problem& p) {
    const Matrix& t = p.projector.matrix();
    const int rank = p.projector.rank();
    if (rank == 0) return false;
    for (const auto& q : p.potential.samples()) {
        const double v = q.trace().real() / rank;
        if (norm2(q - v * t) > 1e-8 * std::max(1.0, std::abs(v))) return false;
    }
    return true;
}

void report_inverse(const reconstruct::ReconstructionResult& r) {
    const auto& d = r.diagnostics;
    const auto& s = r.summary;
    std::printf("shift            %.6f\n", d.shift);
    std::printf("p                %d\n", s.p);
    std::printf("z               ");
    for (double z : s.z) std::printf(" %.6f", z);
    std::printf("\n");
    for (const auto& w : s.warnings) std::printf("warning          %s\n", w.c_str());
    std::printf("n0               %d\n", d.n0);
    std::printf("unknowns         %zu (active %zu)\n", d.unknowns, d.active);
    std::printf("max residual     %.3e\n", *std::max_element(d.residual.begin(), d.residual.end()));
    std::printf("min rcond        %.3e\n", *std::min_element(d.rcond.begin(), d.rcond.end()));
    std::printf("Lambda           %.6f\n", d.Lambda);
    std::printf("Q defect         %.3e\n", d.q_hermitian_defect);
    std::printf("H defect         %.3e\n", d.h_hermitian_defect);
    std::printf("kernel asymmetry %.3e\n", d.kernel_asymmetry);
    if (d.truncation_delta)
        std::printf("truncation delta %.6f (%d bands)\n", *d.truncation_delta, d.truncation_bands);
    if (auto h = scalar_boundary(r.problem)) std::printf("h = %.6f (H = h T)\n", *h);
    if (scalar_potential(r.problem)) std::printf("Q = q(x) T\n");
}

void write_outputs(const std::string& base, const Problem& p) {
    io::write_file(base + ".json", io::to_json(p));
    std::ofstream csv(base + ".csv");
    if (!csv) throw StructuralError("io", "cannot write " + base + ".csv");
    io::write_potential_csv(csv, p.potential);
    std::printf("wrote %s.json and %s.csv\n", base.c_str(), base.c_str());
}

int cmd_forward(const Args& args) {
    auto problem = io::problem_from(io::read_file(args.input));
    auto report = validate_problem(problem);
    if (!report.ok()) throw StructuralError("core", report.violations.front());
    auto data = forward::spectral_data(problem, args.run.bands, tolerances(args.run));
    print_table(data);
    const auto out = prefix(args.run, "spectral") + ".json";
    io::write_file(out, io::to_json(data));
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_inverse(const Args& args) {
    auto data = io::spectral_from(io::read_file(args.input));
    auto r = reconstruct::solve_inverse(data, inverse_config(args.run));
    report_inverse(r);
    write_outputs(prefix(args.run, "recovered"), r.problem);
    return 0;
}

Problem synthetic_problem(const io::RunConfig& run) {
    std::mt19937_64 rng(run.seed);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    const double a1 = u(rng), a2 = u(rng), a3 = u(rng);
    Matrix t = Matrix::Zero(2, 2);
    t(0, 0) = 1;
    auto pot = PotentialGrid::from_function(
        [=](double x) {
            Matrix q = Matrix::Zero(2, 2);
            q(0, 0) = a1 * std::sin(x) + a2 * std::sin(2 * x) + a3 * std::sin(3 * x);
            return q;
        },
        run.grid);
    return {pot, Projector(t), {Matrix::Zero(2, 2)}};
}

int cmd_roundtrip(const Args& args) {
    const auto tol = tolerances(args.run);
    Problem truth = args.input.empty() ? synthetic_problem(args.run) : io::problem_from(io::read_file(args.input));
    if (args.input.empty()) std::printf("synthetic diagonal potential, seed %llu\n", (unsigned long long)args.run.seed);
    if (truth.potential.intervals() != args.run.grid)
        throw StructuralError("cli", "problem grid (" + std::to_string(truth.potential.intervals()) +
                                         ") differs from --grid");
    auto data = forward::spectral_data(truth, args.run.bands, tol);
    auto r = reconstruct::solve_inverse(data, inverse_config(args.run));
    report_inverse(r);
    auto again = forward::spectral_data(r.problem, args.run.bands, tol);

    double dl = 0, da = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& e = data.entries()[i];
        const auto& f = again.entries()[i];
        dl = std::max(dl, std::abs(e.lambda - f.lambda));
        da = std::max(da, norm2(e.alpha - f.alpha) / std::max(norm2(e.alpha), 1e-300));
    }
    const double ql2 = reconstruct::relative_l2(r.problem.potential, truth.potential);
    const double dh = norm2(r.problem.boundary.matrix - truth.boundary.matrix);
    const bool spec_ok = dl <= args.run.tol_spec, alpha_ok = da <= args.run.tol_alpha;
    std::printf("max |lambda - lambda_in|   %.3e  %s (tol %.1e)\n", dl, spec_ok ? "pass" : "FAIL", args.run.tol_spec);
    std::printf("max rel |alpha - alpha_in| %.3e  %s (tol %.1e)\n", da, alpha_ok ? "pass" : "FAIL", args.run.tol_alpha);
    std::printf("Q relative L2 error        %.4f\n", ql2);
    std::printf("H error                    %.3e\n", dh);
    write_outputs(prefix(args.run, "roundtrip"), r.problem);
    return spec_ok && alpha_ok ? 0 : 3;
}

int cmd_example_sec6(const Args& args) {
    reconstruct::check_sec6_parameter(args.a);
    auto data = reconstruct::sec6_data(args.a, args.run.bands);
    auto r = reconstruct::solve_inverse(data, inverse_config(args.run));
    const auto v0 = static_cast<std::size_t>(r.layout.of(1, 1, 0));
    const auto v1 = static_cast<std::size_t>(r.layout.of(1, 1, 1));
    double d110 = 0, d111 = 0, de0 = 0;
    const int grid = args.run.grid;
    for (int j = 0; j <= 100; ++j) {
        const auto i = static_cast<std::size_t>(std::lround(double(j) * grid / 100));
        auto cf = reconstruct::sec6_closed_form(args.a, r.epsilon.x[i]);
        d110 = std::max(d110, norm2(r.series.S[v0][i] - cf.S110));
        d111 = std::max(d111, norm2(r.series.S[v1][i] - cf.S111));
        de0 = std::max(de0, norm2(r.epsilon.eps0[i] - cf.eps0));
    }
    auto cf = reconstruct::sec6_closed_form(args.a, pi);
    const Matrix& t = r.problem.projector.matrix();
    const double h_closed = -(t * cf.eps0 * t).trace().real();
    std::printf("a = %.6f, bands = %d, grid = %d\n", args.a, args.run.bands, grid);
    std::printf("sup |S110 - closed form|  %.3e\n", d110);
    std::printf("sup |S111 - closed form|  %.3e\n", d111);
    std::printf("sup |eps0 - closed form|  %.3e\n", de0);
    if (auto h = scalar_boundary(r.problem)) std::printf("h = %.6f (closed form %.6f)\n", *h, h_closed);
    if (scalar_potential(r.problem)) std::printf("Q = q(x) T\n");
    auto check = forward::spectral_data(r.problem, std::min(7, args.run.bands), tolerances(args.run));
    print_table(check);
    write_outputs(prefix(args.run, "sec6"), r.problem);
    return 0;
}

graph::StarGraphProblem default_graph(int grid) {
    return graph::StarGraphProblem::from_functions(
        {[](double x) { return 0.3 * std::sin(x); }, [](double) { return 0.0; }, [](double) { return 0.0; }}, grid);
}

int cmd_graph_local(const Args& args) {
    auto g = args.input.empty() ? default_graph(args.run.grid) : io::graph_from(io::read_file(args.input));
    if (args.input.empty()) std::printf("default star: q1 = 0.3 sin x, q2 = q3 = 0\n");
    const int m = g.size();
    if (g.intervals() != args.run.grid) throw StructuralError("cli", "graph grid differs from --grid");
    auto full = forward::spectral_data(graph::graph_to_matrix(g), args.run.bands, tolerances(args.run));
    std::vector<graph::ScalarLocalData> locals;
    for (int i = 1; i < m; ++i) locals.push_back(graph::extract_local(full, i));
    auto em = graph::estimate_edge_model(locals, m, args.run.grid, tolerances(args.run));
    std::printf("edge constants  ");
    for (double c : em.c) std::printf(" %.6f", c);
    std::printf("\n");
    auto cfg = inverse_config(args.run);
    std::ofstream csv(prefix(args.run, "graph_local") + ".csv");
    if (!csv) throw StructuralError("io", "cannot write csv");
    std::vector<std::vector<double>> curves;
    for (int i = 1; i < m; ++i) {
        if (args.edge && i != args.edge) continue;
        auto r = graph::solve_local_inverse(locals[static_cast<std::size_t>(i - 1)], em, cfg);
        const auto& truth = g.edges[static_cast<std::size_t>(i - 1)];
        const bool zero = std::all_of(truth.begin(), truth.end(), [](double v) { return v == 0.0; });
        std::printf("edge %d: %s L2 %.4f, max residual %.3e", i, zero ? "absolute" : "relative",
                    graph::relative_l2(r.q, truth),
                    *std::max_element(r.diagnostics.residual.begin(), r.diagnostics.residual.end()));
        if (args.matrix_check) {
            auto mp = graph::solve_local_matrix_path(full, i, em, cfg);
            double d = 0;
            for (std::size_t k = 0; k < r.q.size(); ++k) d = std::max(d, std::abs(r.q[k] - mp.q[k]));
            std::printf(", matrix path delta %.3e", d);
        }
        std::printf("\n");
        curves.push_back(r.q);
    }
    csv << "x";
    for (std::size_t c = 0; c < curves.size(); ++c) csv << ",q" << (args.edge ? args.edge : int(c) + 1);
    csv << '\n';
    csv.precision(12);
    for (int k = 0; k <= args.run.grid; ++k) {
        csv << pi * k / args.run.grid;
        for (const auto& c : curves) csv << ',' << c[static_cast<std::size_t>(k)];
        csv << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Forward and inverse spectral problems for matrix Sturm-Liouville operators"};
    app.require_subcommand(1);
    Args args;

    auto* fwd = app.add_subcommand("forward", "eigenvalues and weight matrices of a problem file");
    fwd->add_option("problem", args.input, "problem JSON")->required()->check(CLI::ExistingFile);
    add_common(fwd, args);

    auto* inv = app.add_subcommand("inverse", "recover Q and H from a spectral data file");
    inv->add_option("data", args.input, "spectral data JSON")->required()->check(CLI::ExistingFile);
    inv->add_option("--truncation", args.run.truncation_bands, "also solve with this many bands and report the change");
    add_common(inv, args);

    auto* rt = app.add_subcommand("roundtrip", "forward, inverse and forward again");
    rt->add_option("problem", args.input, "problem JSON (default: seeded synthetic potential)")->check(CLI::ExistingFile);
    rt->add_option("--truncation", args.run.truncation_bands, "also solve with this many bands and report the change");
    add_common(rt, args);

    auto* ex = app.add_subcommand("example-sec6", "three-edge example: closed form against the pipeline");
    ex->add_option("--a", args.a, "perturbed square root of the first eigenvalue, in [0, 1), not 1/2");
    add_common(ex, args);

    auto* gl = app.add_subcommand("graph-local", "local inverse problems on a star graph");
    gl->add_option("graph", args.input, "star graph JSON (default: 0.3 sin x on edge 1)")->check(CLI::ExistingFile);
    gl->add_option("--edge", args.edge, "solve only this edge");
    gl->add_flag("--matrix-check", args.matrix_check, "compare with the matrix-level equations");
    add_common(gl, args);

    CLI11_PARSE(app, argc, argv);
    try {
        args.run.check();
        if (fwd->parsed()) return cmd_forward(args);
        if (inv->parsed()) return cmd_inverse(args);
        if (rt->parsed()) return cmd_roundtrip(args);
        if (ex->parsed()) return cmd_example_sec6(args);
        if (gl->parsed()) return cmd_graph_local(args);
    } catch (const Error& e) {
        std::string what = e.what();
        if (what.rfind(e.stage() + ": ", 0) == 0) what.erase(0, e.stage().size() + 2);
        std::fprintf(stderr, "error [%s]: %s\n", e.stage().c_str(), what.c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}

#pragma once

// JSON documents for problems, spectral data and star graphs; CSV curves.
// Complex numbers are [re, im] pairs, matrices are arrays of rows.

#include "msl/graph.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

namespace msl::io {

using json = nlohmann::json;

inline constexpr const char* problem_format = "msl-problem/1";
inline constexpr const char* spectral_format = "msl-spectral-data/1";
inline constexpr const char* graph_format = "msl-star-graph/1";

struct RunConfig {
    int bands = 15;
    int grid = 1000;
    double tol_spec = 1e-3;
    double tol_alpha = 1e-2;
    int truncation_bands = 0;
    std::uint64_t seed = 1;
    std::string output;

    void check() const {
        if (bands <= 0 || grid <= 0) throw StructuralError("cli", "bands and grid must be positive");
        if (!(tol_spec > 0) || !(tol_alpha > 0)) throw StructuralError("cli", "tolerances must be positive");
    }
};

namespace detail {

[[noreturn]] inline void fail(const std::string& field, const std::string& what) {
    throw StructuralError("io", "field '" + field + "': " + what);
}

inline const json& member(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) fail(where + key, "missing");
    return j.at(key);
}

inline double number(const json& j, const std::string& field) {
    if (!j.is_number()) fail(field, "expected a number");
    return j.get<double>();
}

inline int integer(const json& j, const std::string& field) {
    if (!j.is_number_integer()) fail(field, "expected an integer");
    return j.get<int>();
}

inline void check_format(const json& j, const char* expected) {
    const auto& f = member(j, "format", "");
    if (!f.is_string() || f.get<std::string>() != expected)
        fail("format", std::string("expected \"") + expected + "\"");
}

}  // namespace detail

inline json to_json(const cplx& z) { return json::array({z.real(), z.imag()}); }

inline json to_json(const Matrix& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(to_json(a(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline cplx complex_from(const json& j, const std::string& field) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (!j.is_array() || j.size() != 2) detail::fail(field, "expected [re, im]");
    return {detail::number(j[0], field + "[0]"), detail::number(j[1], field + "[1]")};
}

inline Matrix matrix_from(const json& j, const std::string& field, Eigen::Index m = -1) {
    if (!j.is_array() || j.empty()) detail::fail(field, "expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (m >= 0 && rows != m) detail::fail(field, "expected " + std::to_string(m) + " rows");
    Matrix a(rows, rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        const std::string rf = field + "[" + std::to_string(i) + "]";
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows) detail::fail(rf, "row length differs");
        for (Eigen::Index k = 0; k < rows; ++k)
            a(i, k) = complex_from(row[static_cast<std::size_t>(k)], rf + "[" + std::to_string(k) + "]");
    }
    return a;
}

inline json to_json(const Problem& p) {
    json pot = json::array();
    for (const auto& q : p.potential.samples()) pot.push_back(to_json(q));
    return {{"format", problem_format},
            {"m", p.dim()},
            {"intervals", p.potential.intervals()},
            {"projector", to_json(p.projector.matrix())},
            {"boundary", to_json(p.boundary.matrix)},
            {"shift", p.shift},
            {"potential", std::move(pot)}};
}

inline Problem problem_from(const json& j) {
    detail::check_format(j, problem_format);
    const int m = detail::integer(detail::member(j, "m", ""), "m");
    const auto& pot = detail::member(j, "potential", "");
    if (!pot.is_array() || pot.size() < 2) detail::fail("potential", "expected at least two nodes");
    if (j.contains("intervals") && detail::integer(j["intervals"], "intervals") + 1 != static_cast<int>(pot.size()))
        detail::fail("intervals", "does not match the number of potential nodes");
    std::vector<Matrix> q;
    for (std::size_t i = 0; i < pot.size(); ++i) q.push_back(matrix_from(pot[i], "potential[" + std::to_string(i) + "]", m));
    Problem p{PotentialGrid(std::move(q)), Projector(matrix_from(detail::member(j, "projector", ""), "projector", m)),
              {matrix_from(detail::member(j, "boundary", ""), "boundary", m)}};
    if (j.contains("shift")) p.shift = detail::number(j["shift"], "shift");
    return p;
}

inline json to_json(const SpectralData& d) {
    json entries = json::array();
    for (const auto& e : d.entries())
        entries.push_back({{"n", e.n}, {"k", e.k}, {"lambda", e.lambda}, {"alpha", to_json(e.alpha)}});
    return {{"format", spectral_format}, {"slots", d.slots()}, {"dim", d.dim()}, {"bands", d.bands()}, {"entries", std::move(entries)}};
}

inline SpectralData spectral_from(const json& j) {
    detail::check_format(j, spectral_format);
    const int slots = detail::integer(detail::member(j, "slots", ""), "slots");
    const int dim = j.contains("dim") ? detail::integer(j["dim"], "dim") : slots;
    const auto& list = detail::member(j, "entries", "");
    if (!list.is_array()) detail::fail("entries", "expected an array");
    std::vector<SpectralDatum> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string f = "entries[" + std::to_string(i) + "].";
        const auto& e = list[i];
        out.push_back({detail::integer(detail::member(e, "n", f), f + "n"), detail::integer(detail::member(e, "k", f), f + "k"),
                       detail::number(detail::member(e, "lambda", f), f + "lambda"),
                       matrix_from(detail::member(e, "alpha", f), f + "alpha", dim)});
    }
    return SpectralData(std::move(out), slots);
}

inline json to_json(const graph::StarGraphProblem& g) {
    return {{"format", graph_format}, {"edges", g.edges}};
}

inline graph::StarGraphProblem graph_from(const json& j) {
    detail::check_format(j, graph_format);
    const auto& edges = detail::member(j, "edges", "");
    if (!edges.is_array() || edges.empty()) detail::fail("edges", "expected a non-empty array");
    graph::StarGraphProblem g;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string f = "edges[" + std::to_string(i) + "]";
        if (!edges[i].is_array()) detail::fail(f, "expected an array of numbers");
        std::vector<double> v;
        for (std::size_t k = 0; k < edges[i].size(); ++k) v.push_back(detail::number(edges[i][k], f + "[" + std::to_string(k) + "]"));
        g.edges.push_back(std::move(v));
    }
    return g;
}

/// Parses text; syntax errors report line and column.
inline json parse(const std::string& text, const std::string& source = "input") {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw StructuralError("io", source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
}

inline json read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("io", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

inline void write_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw StructuralError("io", "cannot write " + path);
    out << j.dump(1) << '\n';
}

/// x followed by the real and imaginary parts of every entry.
inline void write_potential_csv(std::ostream& out, const PotentialGrid& q) {
    const int m = q.dim();
    out << "x";
    for (int i = 1; i <= m; ++i)
        for (int k = 1; k <= m; ++k) out << ",re_q" << i << k << ",im_q" << i << k;
    out << '\n';
    out.precision(12);
    for (std::size_t n = 0; n < q.nodes(); ++n) {
        out << q.node(n);
        for (int i = 0; i < m; ++i)
            for (int k = 0; k < m; ++k) out << ',' << q[n](i, k).real() << ',' << q[n](i, k).imag();
        out << '\n';
    }
}

}  // namespace msl::io

#include "msl/io.hpp"

#include <gtest/gtest.h>

using namespace msl;

namespace {

Problem sample_problem() {
    Matrix t = Matrix::Zero(2, 2);
    t(0, 0) = 1;
    auto pot = PotentialGrid::from_function(
        [](double x) {
            Matrix q = Matrix::Zero(2, 2);
            q(0, 0) = std::sin(x) / 3;
            q(0, 1) = cplx(0.1 * x, 0.05);
            q(1, 0) = std::conj(q(0, 1));
            q(1, 1) = std::cos(2 * x);
            return q;
        },
        20);
    Problem p{pot, Projector(t), {Matrix::Constant(2, 2, cplx(0, 0))}};
    p.boundary.matrix(0, 0) = -0.25;
    return p;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const StructuralError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Json, ProblemRoundTripIsExact) {
    auto p = sample_problem();
    auto back = io::problem_from(io::parse(io::to_json(p).dump()));
    ASSERT_EQ(back.potential.nodes(), p.potential.nodes());
    for (std::size_t i = 0; i < p.potential.nodes(); ++i) EXPECT_EQ(norm2(back.potential[i] - p.potential[i]), 0.0);
    EXPECT_EQ(norm2(back.projector.matrix() - p.projector.matrix()), 0.0);
    EXPECT_EQ(norm2(back.boundary.matrix - p.boundary.matrix), 0.0);
}

TEST(Json, SpectralRoundTripIsExact) {
    auto d = reconstruct::sec6_data(0.3, 5);
    auto back = io::spectral_from(io::parse(io::to_json(d).dump()));
    ASSERT_EQ(back.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(back.entries()[i].lambda, d.entries()[i].lambda);
        EXPECT_EQ(norm2(back.entries()[i].alpha - d.entries()[i].alpha), 0.0);
    }
}

TEST(Json, LocalDataKeepsItsDimension) {
    auto local = graph::extract_local(reconstruct::sec6_data(0.3, 4), 1);
    auto back = io::spectral_from(io::parse(io::to_json(local.data).dump()));
    EXPECT_EQ(back.slots(), 3);
    EXPECT_EQ(back.dim(), 1);
}

TEST(Json, GraphRoundTrip) {
    auto g = graph::StarGraphProblem::from_functions({[](double x) { return x; }, [](double) { return 0.5; }}, 10);
    auto back = io::graph_from(io::parse(io::to_json(g).dump()));
    EXPECT_EQ(back.edges, g.edges);
}

TEST(Json, SyntaxErrorNamesLineAndColumn) {
    auto msg = message_of([] { io::parse("{\n  \"m\": 2,\n  oops\n}", "bad.json"); });
    EXPECT_NE(msg.find("bad.json:3:"), std::string::npos) << msg;
}

TEST(Json, MissingFieldIsNamed) {
    auto j = io::to_json(sample_problem());
    j.erase("projector");
    EXPECT_NE(message_of([&] { io::problem_from(j); }).find("'projector'"), std::string::npos);
}

TEST(Json, BadEntryIsLocated) {
    auto j = io::to_json(reconstruct::sec6_data(0.3, 2));
    j["entries"][3]["lambda"] = "x";
    EXPECT_NE(message_of([&] { io::spectral_from(j); }).find("entries[3].lambda"), std::string::npos);
}

TEST(Json, WrongFormatRejected) {
    auto j = io::to_json(sample_problem());
    EXPECT_THROW(io::spectral_from(j), StructuralError);
}

TEST(Json, RaggedMatrixRejected) {
    auto j = io::to_json(sample_problem());
    j["potential"][2][1] = io::json::array({io::json::array({0.0, 0.0})});
    EXPECT_NE(message_of([&] { io::problem_from(j); }).find("potential[2][1]"), std::string::npos);
}

TEST(Csv, HeaderAndRows) {
    std::ostringstream out;
    io::write_potential_csv(out, sample_problem().potential);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,re_q11,im_q11,re_q12,im_q12,re_q21,im_q21,re_q22,im_q22");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 21);
}

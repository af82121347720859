#include "msl/core.hpp"

#include <gtest/gtest.h>

using namespace msl;

namespace {

Problem flat_star(int m, int grid = 100) {
    return {PotentialGrid::constant(Matrix::Zero(m, m), grid), Projector::star(m), {Matrix::Zero(m, m)}};
}

std::vector<SpectralDatum> ladder(const std::vector<double>& lambdas, int slots) {
    std::vector<SpectralDatum> out;
    for (std::size_t i = 0; i < lambdas.size(); ++i)
        out.push_back({static_cast<int>(i) / slots + 1, static_cast<int>(i) % slots + 1, lambdas[i], identity(1)});
    return out;
}

}  // namespace

TEST(ValidateProblem, StarModelIsValid) {
    EXPECT_TRUE(validate_problem(flat_star(3)).ok());
}

TEST(ValidateProblem, FullProjectorViolatesRank) {
    Problem p{PotentialGrid::constant(Matrix::Zero(2, 2), 10), Projector(identity(2)), {Matrix::Zero(2, 2)}};
    auto r = validate_problem(p);
    ASSERT_FALSE(r.ok());
    EXPECT_NE(std::find(r.violations.begin(), r.violations.end(), "p < m required (1 <= rank T < m)"),
              r.violations.end());
}

TEST(ValidateProblem, BoundaryOutsideRangeOfT) {
    Matrix t = Matrix::Zero(2, 2);
    t(0, 0) = 1;
    Projector proj(t);
    Problem p{PotentialGrid::constant(Matrix::Zero(2, 2), 10), proj, {proj.complement()}};
    auto r = validate_problem(p);
    EXPECT_NE(std::find(r.violations.begin(), r.violations.end(), "H = THT"), r.violations.end());
}

TEST(ValidateProblem, DimensionMismatchThrows) {
    Problem p{PotentialGrid::constant(Matrix::Zero(2, 2), 10), Projector::star(3), {Matrix::Zero(3, 3)}};
    EXPECT_THROW(validate_problem(p), StructuralError);
}

TEST(ValidateProblem, Idempotent) {
    auto p = flat_star(3);
    p.potential = PotentialGrid::constant(Matrix::Ones(3, 3) * cplx(0, 1), 10);
    auto a = validate_problem(p), b = validate_problem(p);
    EXPECT_EQ(a.violations, b.violations);
    EXPECT_FALSE(a.ok());
}

TEST(ShiftSpectrum, NonnegativeIsNoOp) {
    SpectralData d(ladder({0.0, 1.0, 2.0, 3.0}, 2), 2);
    auto s = shift_spectrum(d);
    EXPECT_EQ(s.shift, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(s.data.entries()[i].lambda, d.entries()[i].lambda);
}

TEST(ShiftSpectrum, ZeroMarginTranslation) {
    SpectralData d(ladder({-1.0, 0.5}, 2), 2);
    auto s = shift_spectrum(d, 0.0);
    EXPECT_DOUBLE_EQ(s.shift, 1.0);
    EXPECT_DOUBLE_EQ(s.data.entries()[0].lambda, 0.0);
    EXPECT_DOUBLE_EQ(s.data.entries()[1].lambda, 1.5);
}

TEST(ShiftSpectrum, DefaultMargin) {
    SpectralData d(ladder({-1.0, 0.5}, 2), 2);
    const double expected = std::max(0.0, 1.0) + 0.25;
    EXPECT_DOUBLE_EQ(shift_spectrum(d).shift, expected);
}

TEST(SpectralDataType, RejectsBadIndexing) {
    auto e = ladder({0.0, 1.0}, 2);
    e[1].k = 1;
    EXPECT_THROW(SpectralData(e, 2), StructuralError);
}

TEST(SpectralDataType, FlagsUnequalWeightsOnTie) {
    auto e = ladder({1.0, 1.0}, 2);
    e[1].alpha = 2.0 * identity(1);
    auto r = validate_spectral_data(SpectralData(e, 2));
    EXPECT_FALSE(r.ok());
}

TEST(ProjectorType, StarRankAndComplement) {
    auto t = Projector::star(4);
    EXPECT_EQ(t.rank(), 1);
    EXPECT_LT(norm2(t.complement() * t.complement() - t.complement()), 1e-14);
}

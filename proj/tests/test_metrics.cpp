#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "wavepinn/metrics.hpp"

using namespace wavepinn;

namespace {

constexpr double kPi = std::numbers::pi;

GridField random_field(std::uint64_t seed, int nt = 24, int nx = 36) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    GridField f;
    f.values.resize(nt, nx);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = n01(rng);
    f.dx = 0.1;
    f.dt = 0.05;
    return f;
}

GridField scaled(const GridField& f, double c) {
    GridField g = f;
    g.values *= c;
    return g;
}

}  // namespace

TEST(Ssp, PropertySuite) {
    const GridField y = random_field(1);
    EXPECT_NEAR(ssp_2d(y, y), 0.0, 1e-10);
    EXPECT_NEAR(ssp_2d(y, scaled(y, -1.0)), 1.0, 1e-10);
    EXPECT_NEAR(ssp_2d(y, scaled(y, 0.0)), 1.0, 1e-10);
    EXPECT_NEAR(ssp_2d(y, scaled(y, 2.0)), 1.0 / 3.0, 1e-10);
    const GridField z = random_field(2);
    EXPECT_NEAR(ssp_2d(y, z), ssp_2d(z, y), 1e-10);
}

TEST(Ssp, TransformConventionInvariance) {
    const GridField y = random_field(3), z = random_field(4);
    const double base = ssp_2d(y, z, DftScaling::none);
    EXPECT_NEAR(ssp_2d(y, z, DftScaling::unitary), base, 1e-10);
    EXPECT_NEAR(ssp_2d(y, z, DftScaling::inverse_n), base, 1e-10);
}

TEST(Ssp, ParsevalMatchesDirectRatio) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const GridField y = random_field(10 + s, 17, 23), z = random_field(20 + s, 17, 23);
        EXPECT_NEAR(ssp_2d(y, z), ssp_direct(y.values, z.values), 1e-12);
    }
}

TEST(Ssp, ScaleBoundAndRange) {
    const GridField y = random_field(5);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> uc(0.0, 10.0);
    for (int k = 0; k < 50; ++k) {
        const double c = uc(rng);
        EXPECT_NEAR(ssp_2d(y, scaled(y, c)), std::abs(1.0 - c) / (1.0 + c), 1e-12);
        const double v = ssp_2d(y, random_field(100 + k));
        EXPECT_GE(v, -1e-12);
        EXPECT_LE(v, 1.0 + 1e-12);
    }
}

TEST(Ssp, ZeroFieldsAndGridMismatch) {
    GridField a = random_field(7);
    a.values.setZero();
    EXPECT_EQ(ssp_2d(a, a), 0.0);
    GridField b = random_field(8);
    b.dx = 0.2;
    EXPECT_THROW(ssp_2d(random_field(8), b), DomainError);
    EXPECT_THROW(ssp_2d(random_field(8, 24, 36), random_field(8, 24, 35)), DomainError);
    GridField c = random_field(9);
    c.values(0, 0) = std::nan("");
    EXPECT_THROW(ssp_2d(c, c), DomainError);
}

TEST(Ssp1d, SineFixtures) {
    const int n = 128;
    Eigen::VectorXd s(n), shifted(n), half(n);
    for (int i = 0; i < n; ++i) {
        const double th = 2.0 * kPi * 4.0 * i / n;
        s[i] = std::sin(th);
        shifted[i] = std::sin(th + kPi);
        half[i] = 0.5 * s[i];
    }
    EXPECT_NEAR(ssp_1d(s, s), 0.0, 1e-12);
    EXPECT_NEAR(ssp_1d(s, shifted), 1.0, 1e-12);
    EXPECT_NEAR(ssp_1d(s, half), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(ssp_1d(s, shifted, DftScaling::unitary), 1.0, 1e-12);
}

TEST(Ssp1d, PhaseShiftFamily) {
    // Whole periods on the grid: ssp(sin, sin(. + phi)) = |sin(phi / 2)|.
    const int n = 200;
    for (double phi : {0.1, 0.25 * kPi, 0.5 * kPi, 2.0, kPi}) {
        Eigen::VectorXd a(n), b(n);
        for (int i = 0; i < n; ++i) {
            const double th = 2.0 * kPi * 5.0 * i / n;
            a[i] = std::sin(th);
            b[i] = std::sin(th + phi);
        }
        EXPECT_NEAR(ssp_1d(a, b), std::abs(std::sin(0.5 * phi)), 1e-12) << phi;
    }
}

TEST(Ssp, MaskedAndSummary) {
    const GridField y = random_field(11);
    GridField z = y;
    z.values.col(0).setConstant(100.0);
    Eigen::MatrixXd mask = Eigen::MatrixXd::Ones(y.nt(), y.nx());
    mask.col(0).setZero();
    EXPECT_NEAR(ssp_2d_masked(y, z, mask), 0.0, 1e-12);
    const auto s = summarize_error(y, scaled(y, 2.0));
    EXPECT_NEAR(s.ssp, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(s.max_abs, y.values.cwiseAbs().maxCoeff(), 1e-12);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "wavepinn/physics_loss.hpp"

using namespace wavepinn;
using ad::NodeId;
using ad::Tape;

namespace {

constexpr double kPi = std::numbers::pi;

// a_0 + sum_r w_r * coordinate_r as a constant affine map.
NodeId linear(Tape& tape, NodeId in, std::vector<double> w, double shift = 0.0) {
    Eigen::MatrixXd m(1, static_cast<Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) m(0, static_cast<Index>(i)) = w[i];
    return tape.affine(in, m, Eigen::VectorXd::Constant(1, shift));
}

FieldFunctions synthetic(std::function<NodeId(Tape&, NodeId)> eta, std::function<NodeId(Tape&, NodeId)> phi) {
    return {std::move(eta), std::move(phi)};
}

auto eta_const(double h) {
    return [h](Tape& t, NodeId xt) { return linear(t, xt, {0, 0}, h); };
}
auto phi_const(double c) {
    return [c](Tape& t, NodeId xtz) { return linear(t, xtz, {0, 0, 0}, c); };
}
auto phi_z() {
    return [](Tape& t, NodeId xtz) { return linear(t, xtz, {0, 0, 1}); };
}

Eigen::Matrix2Xd random_xt(Index n, std::uint64_t seed, double x1 = 50, double t1 = 30) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0, x1), ut(0, t1);
    Eigen::Matrix2Xd p(2, n);
    for (Index i = 0; i < n; ++i) p.col(i) = Eigen::Vector2d(ux(rng), ut(rng));
    return p;
}

SeaStateSpec table_sea(double scale = 1.0) {
    SeaStateSpec s;
    s.depth = 200.0;
    s.components = {make_component(1.117 * scale, 2 * kPi / 15.0, 0.5 * kPi, 200.0),
                    make_component(0.280 * scale, 2 * kPi / 7.5, -0.2 * kPi, 200.0),
                    make_component(0.358 * scale, 2 * kPi / 6.0, 0.75 * kPi, 200.0)};
    return s;
}

nn::DomainBox table_box() { return nn::make_domain_box({0, 50}, {0, 30}, 200.0, 1.8); }

// Small model with frozen random constraint fields.
struct Fixture {
    nn::DomainBox box = nn::make_domain_box({0, 10}, {0, 5}, 2.0, 0.5);
    nn::PinnModel model;
    ConstraintFields fields;

    Fixture() {
        nn::ModelSpec spec;
        spec.eta = {2, {true, 2, -0.4, 0.4}, {2, 8, "tanh"}};
        spec.phi = {3, {true, 2, -0.4, 0.4}, {2, 8, "tanh"}};
        spec.seed = 11;
        model = nn::init_model(spec, box);
        nn::NetworkSpec small{2, {true, 2, -0.4, 0.4}, {1, 6, "tanh"}};
        fields = ConstraintFields(nn::StandaloneNetwork(small, {box.x, box.t}, 3),
                                  nn::StandaloneNetwork(small, {box.x, box.t}, 4), 0.3);
        fields.freeze();
    }
};

}  // namespace

TEST(Collocation, CountsAndBounds) {
    const auto box = table_box();
    const CollocationCounts paper{5000, 1000, 30000, 1000};
    const auto sets = sample_collocation(box, paper, 7);
    EXPECT_EQ(sets.surface.cols(), 5000);
    EXPECT_EQ(sets.bottom.cols(), 1000);
    EXPECT_EQ(sets.interior.cols(), 30000);
    EXPECT_EQ(sets.periodic.cols(), 1000);
    for (Index i = 0; i < sets.interior.cols(); ++i) {
        EXPECT_GE(sets.interior(0, i), 0.0);
        EXPECT_LE(sets.interior(0, i), 50.0);
        EXPECT_GE(sets.interior(1, i), 0.0);
        EXPECT_LE(sets.interior(1, i), 30.0);
        EXPECT_GE(sets.interior(2, i), -200.0);
        EXPECT_LE(sets.interior(2, i), 1.1 * 1.8);
    }
}

TEST(Collocation, DeterministicForSeed) {
    const auto box = table_box();
    const CollocationCounts c{50, 20, 100, 10};
    const auto a = sample_collocation(box, c, 3), b = sample_collocation(box, c, 3), d = sample_collocation(box, c, 4);
    EXPECT_EQ(a.interior, b.interior);
    EXPECT_EQ(a.surface, b.surface);
    EXPECT_NE(a.interior, d.interior);
}

TEST(Collocation, RejectsEmptyDomainAndCounts) {
    auto box = table_box();
    EXPECT_THROW(sample_collocation(box, {0, 1, 1, 1}, 0), DomainError);
    box.x.hi = box.x.lo;
    EXPECT_THROW(sample_collocation(box, {1, 1, 1, 1}, 0), DomainError);
}

TEST(Collocation, PredictionRegionRejection) {
    const PredictionRegion region{1.581, 0.510, -1.494, 4.0, 2.145};
    const auto box = nn::make_domain_box({0, 5.2}, {0, 2.145}, 0.7, 0.05);
    const std::vector<double> bounds{0.0, 0.945, 1.5, 2.145};
    const auto sets = sample_collocation(box, {600, 300, 1200, 0}, 5, region, bounds);
    for (Index i = 0; i < sets.interior.cols(); ++i) EXPECT_TRUE(region.contains(sets.interior(0, i), sets.interior(1, i)));
    for (Index i = 0; i < sets.surface.cols(); ++i) EXPECT_TRUE(region.contains(sets.surface(0, i), sets.surface(1, i)));
    // Strata are contiguous, time-ordered and sized by duration.
    ASSERT_EQ(sets.interior_ends.size(), 3u);
    EXPECT_EQ(sets.interior_ends.back(), 1200);
    const double total = 2.145;
    Index start = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        const Index n = sets.interior_ends[s] - start;
        EXPECT_NEAR(static_cast<double>(n), 1200.0 * (bounds[s + 1] - bounds[s]) / total, 1.0);
        for (Index i = start; i < sets.interior_ends[s]; ++i) {
            EXPECT_GE(sets.interior(1, i), bounds[s]);
            EXPECT_LE(sets.interior(1, i), bounds[s + 1]);
        }
        start = sets.interior_ends[s];
    }
}

TEST(Clamp, InteriorUnderSurface) {
    Eigen::Matrix3Xd p(3, 3);
    p << 0, 1, 2,  //
        0, 0, 0,   //
        0.5, -0.5, 0.1;
    const ElevationFn eta = [](const Eigen::Matrix2Xd& xt) { return Eigen::VectorXd::Constant(xt.cols(), 0.2); };
    const auto c = clamp_interior_z(p, eta);
    EXPECT_DOUBLE_EQ(c(2, 0), 0.2);
    EXPECT_DOUBLE_EQ(c(2, 1), -0.5);
    EXPECT_DOUBLE_EQ(c(2, 2), 0.1);
    EXPECT_LE((c.row(2).array() - 0.2).maxCoeff(), 0.0);
}

TEST(Losses, BottomOracles) {
    const auto pts = random_xt(300, 1);
    EXPECT_NEAR(loss_bottom(synthetic(eta_const(0), phi_z()), pts, 200.0), 1.0, 1e-14);
    EXPECT_EQ(loss_bottom(synthetic(eta_const(0), phi_const(3.0)), pts, 200.0), 0.0);
    EXPECT_LT(loss_bottom(lwt_fields(table_sea()), pts, 200.0), 1e-12);
}

TEST(Losses, SurfaceOracles) {
    const auto pts = random_xt(300, 2);
    EXPECT_EQ(loss_kinematic(synthetic(eta_const(0), phi_const(0)), pts), 0.0);
    EXPECT_EQ(loss_dynamic(synthetic(eta_const(0), phi_const(0)), pts, 9.81), 0.0);
    EXPECT_NEAR(loss_kinematic(synthetic(eta_const(0), phi_z()), pts), 1.0, 1e-14);
    const double h = 0.3;
    EXPECT_NEAR(loss_dynamic(synthetic(eta_const(h), phi_const(0)), pts, 9.81), 9.81 * 9.81 * h * h, 1e-12);
}

TEST(Losses, LaplaceOracles) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::Matrix3Xd p(3, 400);
    for (Index i = 0; i < p.cols(); ++i) p.col(i) = Eigen::Vector3d(u(rng), u(rng), u(rng));
    auto x2 = [](Tape& t, NodeId in) { return t.square(linear(t, in, {1, 0, 0})); };
    auto harmonic = [](Tape& t, NodeId in) {
        return t.sub(t.square(linear(t, in, {1, 0, 0})), t.square(linear(t, in, {0, 0, 1})));
    };
    EXPECT_NEAR(loss_laplace(synthetic(eta_const(0), x2), p), 4.0, 1e-13);
    EXPECT_EQ(loss_laplace(synthetic(eta_const(0), harmonic), p), 0.0);

    std::uniform_real_distribution<double> ux(0, 50), ut(0, 30), uz(-200, 0);
    for (Index i = 0; i < p.cols(); ++i) p.col(i) = Eigen::Vector3d(ux(rng), ut(rng), uz(rng));
    EXPECT_LT(loss_laplace(lwt_fields(table_sea()), p), 1e-10);
}

TEST(Losses, SurfaceResidualScalesWithAmplitude) {
    const auto pts = random_xt(1000, 4);
    const auto [k1, d1] = loss_surface(lwt_fields(table_sea(1.0)), pts, 9.81);
    const auto [k2, d2] = loss_surface(lwt_fields(table_sea(0.5)), pts, 9.81);
    EXPECT_GT(k1, 0.0);
    EXPECT_GE(k1 / k2, 8.0);
    EXPECT_LE(k1 / k2, 32.0);
    EXPECT_GE(d1 / d2, 8.0);
    EXPECT_LE(d1 / d2, 32.0);
}

TEST(Losses, PeriodicOracles) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(0, 50), uz(-200, 1.9);
    Eigen::Matrix2Xd pairs(2, 1000);
    for (Index i = 0; i < pairs.cols(); ++i) pairs.col(i) = Eigen::Vector2d(ux(rng), uz(rng));
    const auto [e0, p0] = loss_periodic(synthetic(eta_const(0.1), phi_z()), pairs, 0.0, 30.0);
    EXPECT_EQ(e0, 0.0);
    EXPECT_EQ(p0, 0.0);
    const auto [e1, p1] = loss_periodic(lwt_fields(table_sea()), pairs, 0.0, 30.0);
    EXPECT_LT(e1, 1e-12);
    EXPECT_LT(p1, 1e-12);
    EXPECT_THROW(loss_periodic(lwt_fields(table_sea()), pairs, 1.0, 1.0), ConfigError);
}

TEST(Losses, DataMse) {
    ObservationSet obs;
    obs.points = random_xt(40, 6);
    obs.values = Eigen::VectorXd::Constant(40, 0.25);
    EXPECT_EQ(data_mse(synthetic(eta_const(0.25), phi_const(0)), obs), 0.0);
    EXPECT_NEAR(data_mse(synthetic(eta_const(0.35), phi_const(0)), obs), 0.01, 1e-15);
}

TEST(Evaluator, GradientsMatchFiniteDifferences) {
    Fixture fx;
    auto sets = sample_collocation(fx.box, {40, 30, 60, 20}, 9);
    sets.interior.row(2) = sets.interior.row(2).array() * 0.0 - 1.5;  // far below the surface: clamp inactive
    sets.periodic.row(1).setConstant(-1.2);
    PhysicsSettings ps;
    ps.depth = 2.0;
    ps.periodic = true;
    ps.t0 = 0.0;
    ps.t_max = 5.0;
    ps.chunk = 16;
    const PhysicsLoss loss(fx.model, fx.fields, sets, ps);
    const auto ev = loss.evaluate(true);
    ASSERT_EQ(ev.gradients.cols(), 6);

    std::mt19937_64 rng(10);
    std::normal_distribution<double> n01;
    const Eigen::VectorXd theta = fx.model.params();
    for (int dir = 0; dir < 5; ++dir) {
        Eigen::VectorXd v(theta.size());
        for (Index i = 0; i < v.size(); ++i) v[i] = n01(rng);
        const double h = 1e-6;
        fx.model.params() = theta + h * v;
        const auto plus = loss.evaluate(false).bundle.values;
        fx.model.params() = theta - h * v;
        const auto minus = loss.evaluate(false).bundle.values;
        fx.model.params() = theta;
        for (int c = 0; c < 6; ++c) {
            const double fd = (plus[c] - minus[c]) / (2 * h);
            const double an = ev.gradients.col(c).dot(v);
            EXPECT_NEAR(an, fd, 1e-5 * std::max(1.0, std::abs(fd))) << "component " << c;
        }
    }
}

TEST(Evaluator, ThreadCountAndChunkingDoNotChangeResults) {
    Fixture fx;
    const auto sets = sample_collocation(fx.box, {70, 30, 130, 0}, 12);
    PhysicsSettings ps;
    ps.depth = 2.0;
    ps.chunk = 32;
    const auto a = PhysicsLoss(fx.model, fx.fields, sets, ps).evaluate(true);
    ps.threads = 3;
    const auto b = PhysicsLoss(fx.model, fx.fields, sets, ps).evaluate(true);
    EXPECT_EQ(a.bundle.values, b.bundle.values);
    EXPECT_EQ(a.gradients, b.gradients);
    ps.threads = 1;
    ps.chunk = 7;
    const auto c = PhysicsLoss(fx.model, fx.fields, sets, ps).evaluate(false);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(c.bundle.values[i], a.bundle.values[i], 1e-12 * a.bundle.values[i]);
}

TEST(Evaluator, PermutationInvariance) {
    Fixture fx;
    auto sets = sample_collocation(fx.box, {64, 32, 96, 0}, 13);
    PhysicsSettings ps;
    ps.depth = 2.0;
    const auto a = PhysicsLoss(fx.model, fx.fields, sets, ps).evaluate(false);
    sets.interior = sets.interior.rowwise().reverse().eval();
    sets.surface = sets.surface.rowwise().reverse().eval();
    sets.bottom = sets.bottom.rowwise().reverse().eval();
    const auto b = PhysicsLoss(fx.model, fx.fields, sets, ps).evaluate(false);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.bundle.values[i], b.bundle.values[i], 1e-12 * a.bundle.values[i]);
}

TEST(Evaluator, ActivePrefixMatchesTruncatedSets) {
    Fixture fx;
    const auto sets = sample_collocation(fx.box, {60, 30, 90, 0}, 14);
    PhysicsSettings ps;
    ps.depth = 2.0;
    const auto part = PhysicsLoss(fx.model, fx.fields, sets, ps).evaluate(false, {20, 10, 30});
    CollocationSets cut = sets;
    cut.surface = sets.surface.leftCols(20);
    cut.bottom = sets.bottom.leftCols(10);
    cut.interior = sets.interior.leftCols(30);
    const auto ref = PhysicsLoss(fx.model, fx.fields, cut, ps).evaluate(false);
    EXPECT_EQ(part.bundle.values, ref.bundle.values);
    EXPECT_THROW(PhysicsLoss(fx.model, fx.fields, sets, ps).evaluate(false, {61, -1, -1}), ConstructionError);
}

TEST(Evaluator, ClampKeepsInteriorUnderSurface) {
    Fixture fx;
    const auto sets = sample_collocation(fx.box, {10, 10, 500, 0}, 15);
    PhysicsSettings ps;
    ps.depth = 2.0;
    const PhysicsLoss loss(fx.model, fx.fields, sets, ps);
    const auto clamped = loss.clamped_interior();
    const Eigen::VectorXd surf = constrained_elevation(fx.model, fx.fields, clamped.topRows<2>());
    EXPECT_LE((clamped.row(2).transpose() - surf).maxCoeff(), 0.0);
}

TEST(Evaluator, RequiresFrozenConstraintsAndPeriodicWindow) {
    Fixture fx;
    const auto sets = sample_collocation(fx.box, {10, 10, 10, 0}, 16);
    PhysicsSettings ps;
    ps.depth = 2.0;
    ConstraintFields loose(fx.fields.m_net(), fx.fields.r_net(), 1.0);
    EXPECT_THROW(PhysicsLoss(fx.model, loose, sets, ps), StateError);
    ps.periodic = true;
    EXPECT_THROW(PhysicsLoss(fx.model, fx.fields, sets, ps), ConfigError);
}

TEST(Evaluator, CombinedGradientIsWeightedSum) {
    Fixture fx;
    const auto sets = sample_collocation(fx.box, {20, 20, 20, 0}, 17);
    PhysicsSettings ps;
    ps.depth = 2.0;
    const auto ev = PhysicsLoss(fx.model, fx.fields, sets, ps).evaluate(true);
    const std::vector<double> w{0.5, 1.0, 2.0, 0.25};
    const Eigen::VectorXd g = ev.combined(w);
    Eigen::VectorXd ref = Eigen::VectorXd::Zero(g.size());
    for (int i = 0; i < 4; ++i) ref += w[i] * ev.gradients.col(i);
    EXPECT_LT((g - ref).norm(), 1e-12 * (1.0 + ref.norm()));
}

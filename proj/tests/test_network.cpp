#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "wavepinn/network.hpp"

using namespace wavepinn;
using namespace wavepinn::nn;

TEST(Normalize, EndpointsAndMidpoint) {
    const AxisRange x{0.0, 50.0};
    EXPECT_DOUBLE_EQ(x.normalize(25.0), 0.0);
    EXPECT_DOUBLE_EQ(x.normalize(0.0), -1.0);
    EXPECT_DOUBLE_EQ(x.normalize(50.0), 1.0);
    const AxisRange z{-200.0, 1.5};
    EXPECT_DOUBLE_EQ(z.normalize(-200.0), -1.0);
    EXPECT_NEAR(x.denormalize(x.normalize(17.3)), 17.3, 1e-13);
}

TEST(Normalize, TapeMatchesAxisRange) {
    std::array<AxisRange, 3> r{AxisRange{0, 50}, AxisRange{0, 15}, AxisRange{-200, 1.5}};
    Eigen::Vector3d p(12.0, 3.0, -40.0);
    ad::Tape tape;
    const auto in = tape.input(ad::coordinates(p, ad::kAllSlots));
    const auto& u = tape.out(normalize(tape, in, r));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(u.value()(i, 0), r[i].normalize(p[i]), 1e-15);
    EXPECT_DOUBLE_EQ(u.slot(ad::Slot::dx)(0, 0), 2.0 / 50.0);
    EXPECT_DOUBLE_EQ(u.slot(ad::Slot::dz)(2, 0), 2.0 / 201.5);
}

TEST(DomainBox, ZRange) {
    const auto b = make_domain_box({0, 50}, {0, 15}, 200.0, 1.2);
    EXPECT_DOUBLE_EQ(b.z.lo, -200.0);
    EXPECT_NEAR(b.z.hi, 1.32, 1e-15);
    EXPECT_THROW(make_domain_box({0, 0}, {0, 15}, 200.0, 1.0), DomainError);
}

TEST(Embedding, ShapesAndZeroInput) {
    for (int nv : {2, 3}) {
        FieldNetwork net(NetworkSpec{nv, {}, {1, 4, "tanh"}}, 0);
        EXPECT_EQ(net.spec().embedding.output_dim(nv), 20 + nv);
        Eigen::VectorXd params = Eigen::VectorXd::Zero(net.size());
        std::mt19937_64 rng(0);
        net.initialize(std::span<double>(params.data(), params.size()), rng);
        ad::Tape tape;
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(nv);
        const auto in = tape.input(ad::coordinates(zero, ad::kValueOnly));
        const ad::ParamRef f{params.data() + net.embedding_offset(), 10, nv, -1};
        const auto& e = tape.out(embed(tape, in, f));
        ASSERT_EQ(e.rows(), 20 + nv);
        EXPECT_EQ(e.value().topRows(10).norm(), 0.0);
        EXPECT_EQ((e.value().middleRows(10, 10).array() - 1.0).matrix().norm(), 0.0);
        EXPECT_EQ(e.value().bottomRows(nv).norm(), 0.0);
    }
}

TEST(Embedding, InitialFrequencies) {
    FieldNetwork net(NetworkSpec{3, {}, {1, 4, "tanh"}}, 0);
    Eigen::VectorXd params = Eigen::VectorXd::Zero(net.size());
    std::mt19937_64 rng(0);
    net.initialize(std::span<double>(params.data(), params.size()), rng);
    Eigen::Map<const Eigen::MatrixXd> f(params.data() + net.embedding_offset(), 10, 3);
    for (int i = 0; i < 10; ++i) {
        const double expect = -0.4 + 0.8 * i / 9.0;
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(f(i, j), expect, 1e-15);
    }
}

TEST(Embedding, SinCosBounded) {
    ad::Tape tape;
    Eigen::MatrixXd v = 5.0 * Eigen::MatrixXd::Random(2, 50);
    Eigen::MatrixXd F = 3.0 * Eigen::MatrixXd::Random(10, 2);
    const auto in = tape.input(ad::coordinates(v, ad::kValueOnly));
    const auto& e = tape.out(embed(tape, in, ad::ParamRef{F.data(), 10, 2, -1}));
    EXPECT_LE(e.value().topRows(20).cwiseAbs().maxCoeff(), 1.0);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(10, 3);
    EXPECT_THROW(embed(tape, in, ad::ParamRef{bad.data(), 10, 3, -1}), ConstructionError);
}

TEST(Init, PaperSizesZeroBiasesAndVariance) {
    const auto box = make_domain_box({0, 50}, {0, 15}, 200.0, 1.0);
    const auto m = init_model(full_scale_model_spec(3), box);
    for (const FieldNetwork* net : {&m.eta_net(), &m.phi_net()}) {
        ASSERT_EQ(net->layers().size(), 5u);
        for (std::size_t l = 0; l + 1 < net->layers().size(); ++l) EXPECT_EQ(net->layers()[l].rows, 200);
        for (const auto& L : net->layers()) {
            EXPECT_EQ(m.params().segment(L.bias_offset, L.rows).norm(), 0.0);
            if (L.rows * L.cols < 4000) continue;
            const auto w = m.params().segment(L.weight_offset, L.rows * L.cols);
            const double var = w.squaredNorm() / w.size() - std::pow(w.mean(), 2);
            const double expect = 2.0 / static_cast<double>(L.rows + L.cols);
            EXPECT_NEAR(var, expect, 0.2 * expect);
        }
    }
}

TEST(Init, Deterministic) {
    const auto box = make_domain_box({0, 50}, {0, 15}, 200.0, 1.0);
    const auto a = init_model(desk_scale_model_spec(7), box);
    const auto b = init_model(desk_scale_model_spec(7), box);
    const auto c = init_model(desk_scale_model_spec(8), box);
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.params().data(), b.params().data(), sizeof(double) * a.size()), 0);
    EXPECT_NE((a.params() - c.params()).norm(), 0.0);
}

TEST(Eval, ZeroWeightsGiveZero) {
    const auto box = make_domain_box({0, 50}, {0, 15}, 200.0, 1.0);
    auto m = init_model(desk_scale_model_spec(1), box);
    m.params().setZero();
    EXPECT_EQ(m.eval_eta(3.0, 4.0), 0.0);
    EXPECT_EQ(m.eval_phi(3.0, 4.0, -10.0), 0.0);
}

TEST(Eval, BatchEqualsPointwise) {
    const auto box = make_domain_box({0, 50}, {0, 15}, 200.0, 1.0);
    const auto m = init_model(desk_scale_model_spec(1), box);
    Eigen::MatrixXd xt(2, 5), xtz(3, 5);
    for (int c = 0; c < 5; ++c) {
        xt.col(c) = Eigen::Vector2d(7.0 * c, 2.5 * c);
        xtz.col(c) = Eigen::Vector3d(7.0 * c, 2.5 * c, -30.0 * c);
    }
    const auto be = m.eval_eta(xt);
    const auto bp = m.eval_phi(xtz);
    for (int c = 0; c < 5; ++c) {
        EXPECT_NEAR(be[c], m.eval_eta(xt(0, c), xt(1, c)), 1e-14);
        EXPECT_NEAR(bp[c], m.eval_phi(xtz(0, c), xtz(1, c), xtz(2, c)), 1e-14);
    }
    EXPECT_THROW(m.eval_eta(std::nan(""), 0.0), NumericError);
}

TEST(Eval, JetsFinite) {
    const auto box = make_domain_box({0, 50}, {0, 15}, 200.0, 1.0);
    const auto m = init_model(desk_scale_model_spec(2), box);
    const auto j = m.phi_jet(10.0, 3.0, -5.0);
    for (double v : {j.value, j.d_x, j.d_t, j.d_z, j.d_xx, j.d_zz}) EXPECT_TRUE(std::isfinite(v));
    const auto e = m.eta_jet(10.0, 3.0);
    EXPECT_EQ(e.d_z, 0.0);
}

TEST(Gradient, ReachesEmbedding) {
    const auto box = make_domain_box({0, 50}, {0, 15}, 200.0, 1.0);
    const auto m = init_model(desk_scale_model_spec(2), box);
    ad::Tape tape;
    Eigen::MatrixXd xt(2, 3);
    xt << 1, 20, 40, 2, 7, 13;
    const auto y = m.eta_raw(tape, tape.input(ad::coordinates(xt, ad::kValueOnly)));
    const auto loss = tape.mean(tape.square(y));
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m.size());
    tape.backward(loss, g);
    const auto off = m.eta_net().embedding_offset();
    EXPECT_GT(g.segment(off, 20).norm(), 0.0);
}

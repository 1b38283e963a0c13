#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wavepinn/optim.hpp"

using namespace wavepinn;
using namespace wavepinn::optim;

TEST(Adam, FirstStepIsLearningRate) {
    Adam adam(AdamConfig{}, 1);
    Eigen::VectorXd p(1), g(1);
    p << 0.0;
    g << 1.0;
    adam.step(p, g);
    EXPECT_NEAR(p[0], -5e-4, 1e-11);
}

TEST(Adam, VmaxNeverDecreases) {
    Adam adam(AdamConfig{}, 3);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    Eigen::VectorXd prev = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd g(3);
        g << n(rng) * (i < 50 ? 10.0 : 0.1), n(rng), n(rng);
        adam.step(p, g);
        EXPECT_TRUE((adam.v_max().array() >= prev.array()).all());
        prev = adam.v_max();
    }
}

TEST(Adam, BoundedStep) {
    AdamConfig c;
    c.lr = 0.01;
    Adam adam(c, 50);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(50);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd g(50);
        for (auto& v : g) v = n(rng);
        const Eigen::VectorXd before = p;
        adam.step(p, g);
        EXPECT_LE((p - before).norm(), c.lr * std::sqrt(50.0) * 1.1);
    }
}

TEST(Adam, QuadraticConverges) {
    AdamConfig c;
    c.lr = 0.1;
    Adam adam(c, 1);
    Eigen::VectorXd p(1);
    p << 1.0;
    int steps = 0;
    while (std::abs(p[0]) >= 1e-3 && steps < 500) {
        Eigen::VectorXd g(1);
        g << 2.0 * p[0];
        adam.step(p, g);
        ++steps;
    }
    EXPECT_LT(std::abs(p[0]), 1e-3);
}

TEST(Adam, RejectsNaN) {
    Adam adam(AdamConfig{}, 2);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2), g(2);
    g << 1.0, std::nan("");
    EXPECT_THROW(adam.step(p, g), NumericError);
}

TEST(Lbfgs, ConvexQuadratic) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n;
    Eigen::MatrixXd A(5, 5);
    for (auto& v : A.reshaped()) v = n(rng);
    const Eigen::MatrixXd Q = A * A.transpose() + Eigen::MatrixXd::Identity(5, 5);
    Eigen::VectorXd b(5);
    for (auto& v : b) v = n(rng);
    Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = Q * x - b;
        return 0.5 * x.dot(Q * x) - b.dot(x);
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
    LbfgsConfig c;
    c.max_iterations = 20;
    c.gradient_tolerance = 1e-8;
    const auto r = lbfgs_minimize(f, x, c);
    Eigen::VectorXd g;
    f(x, g);
    EXPECT_LT(g.norm(), 1e-8) << to_string(r.reason) << " after " << r.iterations;
    EXPECT_LE(r.iterations, 20);
}

TEST(Lbfgs, Rosenbrock) {
    Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
        g.resize(2);
        g << -2.0 * a - 400.0 * x[0] * b, 200.0 * b;
        return a * a + 100.0 * b * b;
    };
    Eigen::VectorXd x(2);
    x << -1.2, 1.0;
    LbfgsConfig c;
    c.max_iterations = 200;
    std::vector<double> trace;
    const auto r = lbfgs_minimize(f, x, c, [&](int, double fx, const Eigen::VectorXd&) {
        trace.push_back(fx);
        return true;
    });
    EXPECT_LT((x - Eigen::Vector2d(1.0, 1.0)).norm(), 1e-6) << to_string(r.reason);
    EXPECT_LE(r.iterations, 200);
    for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]);
}

TEST(Lbfgs, StallStopsRun) {
    // Flat objective with a nonzero gradient far below any progress.
    Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = Eigen::VectorXd::Constant(x.size(), 1e-3);
        return 1.0 + 1e-30 * x.sum();
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    LbfgsConfig c;
    c.max_iterations = 500;
    const auto r = lbfgs_minimize(f, x, c);
    EXPECT_NE(r.reason, LbfgsStop::max_iterations);
}

TEST(Lbfgs, Deterministic) {
    Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = 4.0 * x.array().cube().matrix() + x;
        return x.array().pow(4).sum() + 0.5 * x.squaredNorm();
    };
    Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(6, -2, 3), b = a;
    LbfgsConfig c;
    c.max_iterations = 50;
    lbfgs_minimize(f, a, c);
    lbfgs_minimize(f, b, c);
    EXPECT_EQ(a, b);
}

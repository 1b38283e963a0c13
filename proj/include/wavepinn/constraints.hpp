#pragma once

// Hard encoding of elevation measurements: eta = M + R N with a smooth
// extension M of the data and a distance-like field R vanishing on the data.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "wavepinn/autodiff/chunks.hpp"
#include "wavepinn/autodiff/tape.hpp"
#include "wavepinn/errors.hpp"
#include "wavepinn/network.hpp"
#include "wavepinn/optim.hpp"

namespace wavepinn {

using ad::Index;
using ad::NodeId;

enum class ObservationKind { buoys, snapshots, scattered };

/// Elevation measurements eta_m at points (x, t). For buoys `locations` holds
/// the positions x_wb; for snapshots the times t_sn.
struct ObservationSet {
    Eigen::Matrix2Xd points;
    Eigen::VectorXd values;
    ObservationKind kind = ObservationKind::scattered;
    std::vector<double> locations;

    Index size() const { return values.size(); }

    double max_abs() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
    double max_value() const { return values.size() ? values.maxCoeff() : 0.0; }

    void validate() const {
        if (values.size() < 1) throw DomainError("observations: at least one point required");
        if (points.cols() != values.size()) throw DomainError("observations: point/value count mismatch");
        if (!points.allFinite() || !values.allFinite()) throw DomainError("observations: non-finite entries");
    }

    void validate(const nn::DomainBox& box) const {
        validate();
        const double tol = 1e-9;
        for (Index i = 0; i < points.cols(); ++i) {
            const double x = points(0, i), t = points(1, i);
            if (x < box.x.lo - tol || x > box.x.hi + tol || t < box.t.lo - tol || t > box.t.hi + tol) {
                throw DomainError("observations: point outside the domain box");
            }
        }
    }
};

/// Minimum Euclidean distance to the data in normalized (x, t) coordinates,
/// scaled by its maximum over a reference grid of the box.
class DistanceOracle {
  public:
    DistanceOracle(const ObservationSet& obs, nn::AxisRange x, nn::AxisRange t, int reference = 101)
        : x_(x), t_(t) {
        obs.validate();
        data_.resize(2, obs.size());
        for (Index i = 0; i < obs.size(); ++i) {
            data_(0, i) = x.normalize(obs.points(0, i));
            data_(1, i) = t.normalize(obs.points(1, i));
        }
        double sup = 0.0;
        for (int i = 0; i < reference; ++i) {
            for (int j = 0; j < reference; ++j) {
                const double u = -1.0 + 2.0 * i / (reference - 1);
                const double v = -1.0 + 2.0 * j / (reference - 1);
                sup = std::max(sup, min_distance(u, v));
            }
        }
        sup_ = sup > 0.0 ? sup : 1.0;
    }

    /// Unscaled distance in normalized coordinates.
    double min_distance(double u, double v) const {
        double best = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < data_.cols(); ++i) {
            const double du = u - data_(0, i), dv = v - data_(1, i);
            best = std::min(best, du * du + dv * dv);
        }
        return std::sqrt(best);
    }

    double operator()(double x, double t) const {
        return std::min(1.0, min_distance(x_.normalize(x), t_.normalize(t)) / sup_);
    }

    double scale() const { return sup_; }

  private:
    nn::AxisRange x_, t_;
    Eigen::Matrix2Xd data_;
    double sup_ = 1.0;
};

inline double raw_distance(double x, double t, const ObservationSet& obs, const nn::DomainBox& box) {
    return DistanceOracle(obs, box.x, box.t)(x, t);
}

struct ConstraintConfig {
    nn::NetworkSpec net{2, {}, {2, 50, "tanh"}};
    int adam_epochs = 2000;
    double learning_rate = 1e-3;
    int lbfgs_iterations = 2000;   // polishing after Adam
    int distance_samples = 2000;
    bool squared_distance = true;  // fit R to r^2, which is smooth at the data
    double m_tolerance = 0.02;     // |M - eta_m| <= m_tolerance * max|eta_m|
    double r_tolerance = 0.05;     // R <= r_tolerance on the data
    std::uint64_t seed = 0;
};

/// Frozen pair of low-capacity networks (M, R) over (x, t).
class ConstraintFields {
  public:
    ConstraintFields() = default;
    ConstraintFields(nn::StandaloneNetwork m, nn::StandaloneNetwork r, double m_scale)
        : m_(std::move(m)), r_(std::move(r)), m_scale_(m_scale) {}

    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }
    double m_scale() const { return m_scale_; }
    const nn::StandaloneNetwork& m_net() const { return m_; }
    const nn::StandaloneNetwork& r_net() const { return r_; }
    nn::StandaloneNetwork& m_net() { return m_; }
    nn::StandaloneNetwork& r_net() { return r_; }

    /// Records (M, R) for a physical (x, t) node; R is clamped to [0, 1].
    std::pair<NodeId, NodeId> build(ad::Tape& tape, NodeId xt) const {
        const NodeId m = tape.scale(m_.build(tape, xt, false), m_scale_);
        const NodeId r = tape.clamp(r_.build(tape, xt, false), 0.0, 1.0);
        return {m, r};
    }

    Eigen::Matrix2Xd evaluate(const Eigen::Ref<const Eigen::Matrix2Xd>& xt) const {
        ad::Tape tape;
        const NodeId in = tape.input(ad::coordinates(xt, ad::kValueOnly));
        const auto [m, r] = build(tape, in);
        Eigen::Matrix2Xd out(2, xt.cols());
        out.row(0) = tape.out(m).value();
        out.row(1) = tape.out(r).value();
        return out;
    }

    /// FNV-1a over both parameter blobs.
    std::uint64_t checksum() const {
        std::uint64_t h = 1469598103934665603ull;
        for (const Eigen::VectorXd* p : {&m_.params, &r_.params}) {
            const auto* bytes = reinterpret_cast<const unsigned char*>(p->data());
            for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(p->size()); ++i) {
                h = (h ^ bytes[i]) * 1099511628211ull;
            }
        }
        return h;
    }

  private:
    nn::StandaloneNetwork m_, r_;
    double m_scale_ = 1.0;
    bool frozen_ = false;
};

/// eta = M + R N as a tape expression.
inline NodeId hard_constraint(ad::Tape& tape, NodeId m, NodeId r, NodeId n) { return tape.add(m, tape.mul(r, n)); }

/// Constrained elevation on a physical (x, t) node.
inline NodeId constrained_elevation(ad::Tape& tape, const nn::PinnModel& model, const ConstraintFields& c, NodeId xt,
                                    bool trainable = true) {
    if (!c.frozen()) throw StateError("constrained_elevation: constraint fields are not frozen");
    const auto [m, r] = c.build(tape, xt);
    return hard_constraint(tape, m, r, model.eta_raw(tape, xt, trainable));
}

inline Eigen::VectorXd constrained_elevation(const nn::PinnModel& model, const ConstraintFields& c,
                                             const Eigen::Ref<const Eigen::Matrix2Xd>& xt) {
    ad::Tape tape;
    const NodeId in = tape.input(ad::coordinates(xt, ad::kValueOnly));
    return tape.out(constrained_elevation(tape, model, c, in, false)).value().row(0).transpose();
}

inline double constrained_elevation(const nn::PinnModel& model, const ConstraintFields& c, double x, double t) {
    return constrained_elevation(model, c, Eigen::Vector2d(x, t))[0];
}

struct ConstraintFitReport {
    double m_max_error = 0.0;  // max |M - eta_m| on the data, m
    double r_max_on_data = 0.0;
    double m_loss = 0.0;
    double r_loss = 0.0;
};

namespace detail {

// Full-batch least-squares fit of a standalone net: Adam, then L-BFGS.
inline double fit_network(nn::StandaloneNetwork& net, const Eigen::Matrix2Xd& xt, const Eigen::VectorXd& target,
                          const ConstraintConfig& cfg) {
    const double inv_n = 1.0 / static_cast<double>(target.size());

    optim::Objective loss = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        net.params = theta;
        grad = Eigen::VectorXd::Zero(theta.size());
        return ad::accumulate_chunks(
            target.size(),
            [&](ad::Tape& tape, Index c0, Index len) {
                ad::JetBatch goal(1, len, ad::kValueOnly);
                goal.value().row(0) = target.segment(c0, len).transpose();
                const NodeId y = net.build(tape, tape.input(ad::coordinates(xt.middleCols(c0, len), ad::kValueOnly)), true);
                return tape.sum(tape.square(tape.sub(y, tape.constant(goal))), inv_n);
            },
            grad);
    };

    Eigen::VectorXd theta = net.params, grad;
    optim::AdamConfig ac;
    ac.lr = cfg.learning_rate;
    optim::Adam adam(ac, theta.size());
    for (int e = 0; e < cfg.adam_epochs; ++e) {
        loss(theta, grad);
        adam.step(theta, grad);
    }
    optim::LbfgsConfig lc;
    lc.max_iterations = cfg.lbfgs_iterations;
    lc.gradient_tolerance = 1e-12;
    double f = loss(theta, grad);
    if (cfg.lbfgs_iterations > 0) f = optim::lbfgs_minimize(loss, theta, lc).f;
    net.params = theta;
    return f;
}

}  // namespace detail

/// Fits M to the data and R to the distance oracle, checks the thresholds and
/// freezes the result. Throws NumericError with the achieved residuals if a
/// threshold is missed.
inline std::pair<ConstraintFields, ConstraintFitReport> pretrain_constraints(const ObservationSet& obs,
                                                                             const nn::DomainBox& box,
                                                                             const ConstraintConfig& cfg) {
    obs.validate(box);
    if (cfg.net.inputs != 2) throw ConfigError("constraints: networks take (x, t)");
    const std::vector<nn::AxisRange> ranges{box.x, box.t};
    const double peak = obs.max_abs();
    const double scale = peak > 0.0 ? peak : 1.0;
    ConstraintFitReport rep;

    nn::StandaloneNetwork m(cfg.net, ranges, cfg.seed);
    rep.m_loss = detail::fit_network(m, obs.points, obs.values / scale, cfg);

    const DistanceOracle oracle(obs, box.x, box.t);
    std::mt19937_64 rng(cfg.seed + 1);
    std::uniform_real_distribution<double> ux(box.x.lo, box.x.hi), ut(box.t.lo, box.t.hi);
    const Index n_rand = std::max(cfg.distance_samples, 0);
    Eigen::Matrix2Xd rp(2, n_rand + obs.size());
    Eigen::VectorXd rt(n_rand + obs.size());
    for (Index i = 0; i < n_rand; ++i) {
        rp(0, i) = ux(rng);
        rp(1, i) = ut(rng);
        const double r = oracle(rp(0, i), rp(1, i));
        rt[i] = cfg.squared_distance ? r * r : r;
    }
    rp.rightCols(obs.size()) = obs.points;
    rt.tail(obs.size()).setZero();
    nn::StandaloneNetwork r(cfg.net, ranges, cfg.seed + 2);
    rep.r_loss = detail::fit_network(r, rp, rt, cfg);

    ConstraintFields fields(std::move(m), std::move(r), scale);
    const Eigen::Matrix2Xd at_data = fields.evaluate(obs.points);
    rep.m_max_error = (at_data.row(0).transpose() - obs.values).cwiseAbs().maxCoeff();
    rep.r_max_on_data = at_data.row(1).maxCoeff();
    if (rep.m_max_error > cfg.m_tolerance * scale || rep.r_max_on_data > cfg.r_tolerance) {
        throw NumericError("constraint pre-training missed its thresholds: max|M - eta_m| = " +
                           std::to_string(rep.m_max_error) + " m (limit " + std::to_string(cfg.m_tolerance * scale) +
                           "), max R on data = " + std::to_string(rep.r_max_on_data) + " (limit " +
                           std::to_string(cfg.r_tolerance) + ")");
    }
    fields.freeze();
    return {std::move(fields), rep};
}

}  // namespace wavepinn

#pragma once

// Adam with the AMSGrad correction and a limited-memory BFGS minimiser with a
// strong Wolfe line search, both acting on a flat parameter vector.

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <vector>
#include <string>

#include "wavepinn/errors.hpp"

namespace wavepinn::optim {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool amsgrad = true;
};

class Adam {
  public:
    Adam() = default;
    Adam(AdamConfig config, Eigen::Index size) : config_(config) { reset(size); }

    void reset(Eigen::Index size) {
        m_ = Eigen::VectorXd::Zero(size);
        v_ = Eigen::VectorXd::Zero(size);
        v_max_ = Eigen::VectorXd::Zero(size);
        steps_ = 0;
    }

    void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad) {
        if (grad.size() != m_.size() || params.size() != m_.size()) {
            throw ConstructionError("adam: parameter/gradient size mismatch");
        }
        if (!grad.allFinite()) {
            throw NumericError("adam: non-finite gradient at step " + std::to_string(steps_ + 1));
        }
        ++steps_;
        const double b1 = config_.beta1, b2 = config_.beta2;
        m_ = b1 * m_ + (1.0 - b1) * grad;
        v_ = b2 * v_ + (1.0 - b2) * grad.cwiseAbs2();
        const Eigen::VectorXd* second = &v_;
        if (config_.amsgrad) {
            v_max_ = v_max_.cwiseMax(v_);
            second = &v_max_;
        }
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        params.array() -= config_.lr * (m_.array() / c1) / ((second->array() / c2).sqrt() + config_.eps);
    }

    const AdamConfig& config() const { return config_; }
    AdamConfig& config() { return config_; }
    long steps() const { return steps_; }
    const Eigen::VectorXd& first_moment() const { return m_; }
    const Eigen::VectorXd& second_moment() const { return v_; }
    const Eigen::VectorXd& v_max() const { return v_max_; }

  private:
    AdamConfig config_;
    Eigen::VectorXd m_, v_, v_max_;
    long steps_ = 0;
};

// --- L-BFGS ------------------------------------------------------------------

struct LbfgsConfig {
    int history = 30;
    int max_iterations = 1000;
    double gradient_tolerance = 1e-9;      // infinity norm
    double relative_decrease = 1e-12;      // per iteration, over `stall_window` iterations
    int stall_window = 10;
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_search = 25;
};

enum class LbfgsStop { gradient, stalled, max_iterations, line_search_failed, callback };

inline std::string to_string(LbfgsStop s) {
    switch (s) {
        case LbfgsStop::gradient: return "gradient";
        case LbfgsStop::stalled: return "stalled";
        case LbfgsStop::max_iterations: return "max_iterations";
        case LbfgsStop::line_search_failed: return "line_search_failed";
        case LbfgsStop::callback: return "callback";
    }
    return "unknown";
}

struct LbfgsResult {
    double f = 0.0;
    int iterations = 0;
    int evaluations = 0;
    LbfgsStop reason = LbfgsStop::max_iterations;
};

/// f(x, grad) returns the objective and writes the gradient.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
/// Called after each accepted iteration; returning false stops the run.
using IterationCallback = std::function<bool(int iteration, double f, const Eigen::VectorXd& x)>;

namespace detail {

// Minimiser of the cubic through (a, fa, da) and (b, fb, db), or NaN.
inline double cubic_min(double a, double fa, double da, double b, double fb, double db) {
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

struct LinePoint {
    double alpha = 0.0;
    double f = 0.0;
    double slope = 0.0;
};

class LineSearch {
  public:
    LineSearch(const Objective& f, const LbfgsConfig& c, const Eigen::VectorXd& x, const Eigen::VectorXd& d,
               double f0, double slope0)
        : f_(f), c_(c), x_(x), d_(d), f0_(f0), slope0_(slope0) {}

    // Returns true on a strong Wolfe point; the evaluated point is left in best().
    bool run(double alpha0) {
        LinePoint prev{0.0, f0_, slope0_};
        double alpha = alpha0;
        for (int i = 0; evals_ < c_.max_line_search; ++i) {
            const LinePoint cur = eval(alpha);
            if (!std::isfinite(cur.f) || cur.f > f0_ + c_.c1 * alpha * slope0_ || (i > 0 && cur.f >= prev.f)) {
                return zoom(prev, cur);
            }
            if (std::abs(cur.slope) <= -c_.c2 * slope0_) return commit(cur);
            if (cur.slope >= 0.0) return zoom(cur, prev);
            prev = cur;
            alpha *= 2.0;
        }
        return false;
    }

    int evaluations() const { return evals_; }
    double alpha() const { return best_.alpha; }
    double f() const { return best_.f; }
    const Eigen::VectorXd& x() const { return best_x_; }
    const Eigen::VectorXd& grad() const { return best_g_; }
    bool armijo() const { return best_.alpha > 0.0 && best_.f < f0_; }

  private:
    LinePoint eval(double alpha) {
        ++evals_;
        trial_x_ = x_ + alpha * d_;
        trial_g_.resize(x_.size());
        LinePoint p{alpha, f_(trial_x_, trial_g_), 0.0};
        p.slope = trial_g_.dot(d_);
        const bool sufficient = std::isfinite(p.f) && p.f <= f0_ + c_.c1 * alpha * slope0_;
        if (sufficient && (best_.alpha == 0.0 || p.f < best_.f)) commit(p);
        return p;
    }

    // The most recent evaluation becomes the returned point.
    bool commit(const LinePoint& p) {
        best_ = p;
        best_x_ = trial_x_;
        best_g_ = trial_g_;
        return true;
    }

    bool zoom(LinePoint lo, LinePoint hi) {
        while (evals_ < c_.max_line_search) {
            const double width = hi.alpha - lo.alpha;
            double a = std::isfinite(hi.f)
                           ? cubic_min(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope)
                           : std::numeric_limits<double>::quiet_NaN();
            const double lo_b = std::min(lo.alpha, hi.alpha) + 0.1 * std::abs(width);
            const double hi_b = std::max(lo.alpha, hi.alpha) - 0.1 * std::abs(width);
            if (!std::isfinite(a) || a < lo_b || a > hi_b) a = 0.5 * (lo.alpha + hi.alpha);
            if (std::abs(width) < 1e-16 * std::max(1.0, std::abs(lo.alpha))) return false;
            const LinePoint cur = eval(a);
            if (!std::isfinite(cur.f) || cur.f > f0_ + c_.c1 * a * slope0_ || cur.f >= lo.f) {
                hi = cur;
            } else {
                if (std::abs(cur.slope) <= -c_.c2 * slope0_) return commit(cur);
                if (cur.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
                lo = cur;
            }
        }
        return false;
    }

    const Objective& f_;
    const LbfgsConfig& c_;
    const Eigen::VectorXd& x_;
    const Eigen::VectorXd& d_;
    double f0_, slope0_;
    int evals_ = 0;
    LinePoint best_{};
    Eigen::VectorXd trial_x_, trial_g_, best_x_, best_g_;
};

}  // namespace detail

/// Minimises f from x (updated in place). The loss sequence of accepted
/// iterates is non-increasing.
inline LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd& x, const LbfgsConfig& config,
                                  const IterationCallback& callback = {}) {
    if (config.history < 1 || config.max_iterations < 0) {
        throw ConfigError("lbfgs: history must be positive and max_iterations non-negative");
    }
    LbfgsResult result;
    Eigen::VectorXd g(x.size());
    double fx = f(x, g);
    result.evaluations = 1;
    if (!std::isfinite(fx) || !g.allFinite()) {
        throw NumericError("lbfgs: non-finite loss or gradient at the starting point");
    }

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;
    int stalled = 0;
    Eigen::VectorXd d(x.size());
    std::vector<double> alpha_buf;

    auto finish = [&](LbfgsStop why) {
        result.f = fx;
        result.reason = why;
        return result;
    };

    for (int it = 0;; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < config.gradient_tolerance) return finish(LbfgsStop::gradient);
        if (it >= config.max_iterations) return finish(LbfgsStop::max_iterations);

        // Two-loop recursion.
        d = -g;
        const int m = static_cast<int>(s_hist.size());
        alpha_buf.assign(m, 0.0);
        for (int i = m - 1; i >= 0; --i) {
            alpha_buf[i] = rho_hist[i] * s_hist[i].dot(d);
            d -= alpha_buf[i] * y_hist[i];
        }
        if (m > 0) d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (int i = 0; i < m; ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(d);
            d += (alpha_buf[i] - beta) * s_hist[i];
        }

        double slope = g.dot(d);
        if (!(slope < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -g;
            slope = -g.squaredNorm();
        }

        std::optional<detail::LineSearch> ls;
        auto search = [&](double alpha0) {
            ls.emplace(f, config, x, d, fx, slope);
            const bool ok = ls->run(alpha0);
            result.evaluations += ls->evaluations();
            return ok || ls->armijo();
        };
        bool ok = search(s_hist.empty() ? std::min(1.0, 1.0 / g.lpNorm<1>()) : 1.0);
        if (!ok && !s_hist.empty()) {
            // Retry along steepest descent with a fresh memory.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -g;
            slope = -g.squaredNorm();
            ok = search(std::min(1.0, 1.0 / g.lpNorm<1>()));
        }
        if (!ok) return finish(LbfgsStop::line_search_failed);

        Eigen::VectorXd s = ls->x() - x;
        Eigen::VectorXd y = ls->grad() - g;
        const double f_old = fx;
        x = ls->x();
        g = ls->grad();
        fx = ls->f();
        ++result.iterations;

        const double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > config.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        const double rel = (f_old - fx) / std::max(std::abs(f_old), std::numeric_limits<double>::min());
        stalled = rel < config.relative_decrease ? stalled + 1 : 0;
        if (callback && !callback(result.iterations, fx, x)) return finish(LbfgsStop::callback);
        if (stalled >= config.stall_window) return finish(LbfgsStop::stalled);
    }
}

}  // namespace wavepinn::optim

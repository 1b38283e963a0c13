#pragma once

// Assimilation and prediction training loops.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wavepinn/balancing.hpp"
#include "wavepinn/constraints.hpp"
#include "wavepinn/errors.hpp"
#include "wavepinn/metrics.hpp"
#include "wavepinn/network.hpp"
#include "wavepinn/optim.hpp"
#include "wavepinn/physics_loss.hpp"
#include "wavepinn/wave_theory.hpp"

namespace wavepinn {

enum class Scenario { assimilation, prediction };

inline std::string to_string(Scenario s) { return s == Scenario::assimilation ? "assimilate" : "predict"; }

// --- segment schedule ------------------------------------------------------------

struct ScheduleConfig {
    int segments = 52;
    double t_start = 0.0;
    double first_duration = 0.945;  // the assimilation window
    double t_end = 2.145;
    double step = 0.0;              // > 0: required length of segments 2..n, checked against the totals
    int epochs_per_segment = 750;
};

struct Segment {
    double t_begin = 0.0;
    double t_end = 0.0;
    long activation_epoch = 0;

    double duration() const { return t_end - t_begin; }
};

/// Contiguous segments covering [t_start, t_end]: the first spans the
/// assimilation window and the remaining ones split the rest evenly.
inline std::vector<Segment> segment_schedule(const ScheduleConfig& c) {
    if (c.segments < 1) throw ConfigError("schedule: at least one segment required");
    if (c.epochs_per_segment < 0) throw ConfigError("schedule: epochs per segment must be non-negative");
    const double span = c.t_end - c.t_start;
    if (!(span > 0.0) || !(c.first_duration > 0.0) || c.first_duration > span + 1e-12) {
        throw ConfigError("schedule: first segment must lie inside a non-empty window");
    }
    const double rest = span - c.first_duration;
    if (c.segments == 1 && std::abs(rest) > 1e-9 * span) {
        throw ConfigError("schedule: a single segment must span the whole window");
    }
    if (c.segments > 1 && !(rest > 0.0)) throw ConfigError("schedule: no time left after the first segment");
    const double step = c.segments > 1 ? rest / (c.segments - 1) : 0.0;
    if (c.step > 0.0 && std::abs(step - c.step) > 1e-9) {
        throw ConfigError("schedule: " + std::to_string(c.segments) + " segments with first " +
                          std::to_string(c.first_duration) + " s and step " + std::to_string(c.step) + " s end at " +
                          std::to_string(c.t_start + c.first_duration + (c.segments - 1) * c.step) + " s, not " +
                          std::to_string(c.t_end) + " s");
    }
    std::vector<Segment> out;
    out.reserve(static_cast<std::size_t>(c.segments));
    out.push_back({c.t_start, c.t_start + c.first_duration, 0});
    for (int n = 1; n < c.segments; ++n) {
        const double b = out.back().t_end;
        const double e = n + 1 == c.segments ? c.t_end : c.t_start + c.first_duration + n * step;
        out.push_back({b, e, static_cast<long>(n) * c.epochs_per_segment});
    }
    return out;
}

/// Segments active at a given epoch of the progressive phase.
inline int active_segments(const std::vector<Segment>& schedule, long epoch) {
    int n = 0;
    for (const auto& s : schedule) n += s.activation_epoch <= epoch ? 1 : 0;
    return n;
}

// --- configuration ----------------------------------------------------------------

struct DomainConfig {
    nn::AxisRange x{0.0, 50.0};
    nn::AxisRange t{0.0, 30.0};
    double depth = 200.0;
    double gravity = kStandardGravity;
};

struct TrainConfig {
    Scenario scenario = Scenario::assimilation;
    DomainConfig domain;
    nn::ModelSpec model = nn::full_scale_model_spec();
    CollocationCounts counts;
    std::uint64_t seed = 0;  // collocation sampling
    ad::SurfaceCoupling coupling = ad::SurfaceCoupling::partial;
    bool periodic = false;
    ConstraintConfig constraints;
    BalancerConfig balancer;
    optim::AdamConfig adam;
    int adam_epochs = 5000;
    optim::LbfgsConfig lbfgs{30, 35000};
    // prediction only
    ScheduleConfig schedule;
    int refinement_epochs = 6000;
    long total_epochs = 50000;
    std::optional<PredictionRegion> region;
    // runtime
    int checkpoint_every = 1000;
    int threads = 1;
    Index chunk = ad::kDefaultChunk;
};

/// Validates scenario-level invariants. `truth`, when known, is checked for
/// exact periodicity over the time window if periodic losses are requested.
inline void validate(const TrainConfig& c, const SeaStateSpec* truth = nullptr) {
    if (!(c.domain.x.hi > c.domain.x.lo) || !(c.domain.t.hi > c.domain.t.lo) || !(c.domain.depth > 0.0) ||
        !(c.domain.gravity > 0.0)) {
        throw ConfigError("train config: invalid domain");
    }
    if (c.adam_epochs < 0 || c.lbfgs.max_iterations < 0 || c.checkpoint_every < 0 || c.threads < 1 || c.chunk < 1) {
        throw ConfigError("train config: epoch counts, checkpoint cadence, threads and chunk must be non-negative");
    }
    if (c.scenario == Scenario::prediction) {
        if (!c.region) throw ConfigError("train config: prediction requires a prediction region");
        if (c.periodic) throw ConfigError("train config: periodic losses do not apply to prediction");
        if (c.refinement_epochs < 0 || c.total_epochs < 0) throw ConfigError("train config: negative epoch budget");
        (void)segment_schedule(c.schedule);
    }
    if (c.periodic && truth && !is_time_periodic(*truth, c.domain.t.width())) {
        throw ConfigError("train config: periodic losses requested but the sea is not periodic over the window");
    }
}

// --- report ---------------------------------------------------------------------------

struct EpochRecord {
    long epoch = 0;
    std::string stage;  // adam | refine | lbfgs
    std::vector<double> losses;
    std::vector<double> lambdas;
    double total = 0.0;  // sum lambda_i L_i
    double mse_data = 0.0;
    int segments = 1;
    Index active_interior = 0;
};

struct Evaluation {
    double ssp_elevation = std::numeric_limits<double>::quiet_NaN();
    double ssp_potential = std::numeric_limits<double>::quiet_NaN();  // surface potential Phi(x, t, eta)
};

struct TrainReport {
    std::vector<std::string> components;
    std::vector<EpochRecord> epochs;
    double wall_seconds = 0.0;
    std::string termination;
    ConstraintFitReport constraint_fit;
    double mse_data_initial = 0.0;
    std::uint64_t constraint_checksum_before = 0;
    std::uint64_t constraint_checksum_after = 0;
    std::optional<Evaluation> evaluation;

    std::vector<double> trace(std::size_t component) const {
        std::vector<double> v;
        for (const auto& e : epochs) v.push_back(e.losses.at(component));
        return v;
    }
    std::vector<double> total_trace() const {
        std::vector<double> v;
        for (const auto& e : epochs) v.push_back(e.total);
        return v;
    }
};

struct Checkpoint {
    long epoch = 0;
    std::string stage;
    const nn::PinnModel& model;
    const ConstraintFields& constraints;
};

struct TrainHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
    nn::PinnModel model;
    ConstraintFields constraints;
    TrainReport report;
};

// --- evaluation grids --------------------------------------------------------------------

struct GridSpec {
    double x0 = 0.0, x1 = 1.0;
    int nx = 2;
    double t0 = 0.0, t1 = 1.0;
    int nt = 2;

    GridField empty(Quantity q) const {
        if (nx < 2 || nt < 2 || !(x1 > x0) || !(t1 > t0)) throw DomainError("grid: needs 2 x 2 points on a non-empty box");
        GridField f;
        f.values = Eigen::MatrixXd::Zero(nt, nx);
        f.x0 = x0;
        f.dx = (x1 - x0) / (nx - 1);
        f.t0 = t0;
        f.dt = (t1 - t0) / (nt - 1);
        f.quantity = q;
        return f;
    }
    Eigen::Matrix2Xd points() const {
        const GridField f = empty(Quantity::elevation);
        Eigen::Matrix2Xd p(2, static_cast<Index>(nx) * nt);
        for (int i = 0; i < nt; ++i) {
            for (int j = 0; j < nx; ++j) p.col(static_cast<Index>(i) * nx + j) = Eigen::Vector2d(f.x(j), f.t(i));
        }
        return p;
    }
};

inline GridField truth_elevation(const SeaStateSpec& sea, const GridSpec& g) {
    GridField f = g.empty(Quantity::elevation);
    for (int i = 0; i < g.nt; ++i) {
        for (int j = 0; j < g.nx; ++j) f.values(i, j) = lwt_elevation(sea, f.x(j), f.t(i));
    }
    return f;
}

/// Phi(x, t, eta(x, t)) of the analytic sea.
inline GridField truth_surface_potential(const SeaStateSpec& sea, const GridSpec& g) {
    GridField f = g.empty(Quantity::potential);
    for (int i = 0; i < g.nt; ++i) {
        for (int j = 0; j < g.nx; ++j) {
            f.values(i, j) = lwt_potential(sea, f.x(j), f.t(i), lwt_elevation(sea, f.x(j), f.t(i)));
        }
    }
    return f;
}

/// Constrained elevation and surface potential of a trained model on a grid.
inline std::pair<GridField, GridField> model_surface_fields(const nn::PinnModel& model, const ConstraintFields& c,
                                                            const GridSpec& g) {
    GridField eta = g.empty(Quantity::elevation), phi = g.empty(Quantity::potential);
    const Eigen::Matrix2Xd xt = g.points();
    const Eigen::VectorXd e = evaluate_elevation(model_fields(model, c, false), xt);
    Eigen::Matrix3Xd xtz(3, xt.cols());
    xtz << xt, e.transpose();
    Eigen::VectorXd p(xt.cols());
    for (Index c0 = 0; c0 < xt.cols(); c0 += ad::kDefaultChunk) {
        const Index len = std::min(ad::kDefaultChunk, xt.cols() - c0);
        p.segment(c0, len) = model.eval_phi(xtz.middleCols(c0, len));
    }
    for (int i = 0; i < g.nt; ++i) {
        eta.values.row(i) = e.segment(static_cast<Index>(i) * g.nx, g.nx).transpose();
        phi.values.row(i) = p.segment(static_cast<Index>(i) * g.nx, g.nx).transpose();
    }
    return {eta, phi};
}

/// 1 inside the prediction region, 0 outside.
inline Eigen::MatrixXd region_mask(const PredictionRegion& r, const GridField& f) {
    Eigen::MatrixXd m(f.nt(), f.nx());
    for (Index i = 0; i < f.nt(); ++i) {
        for (Index j = 0; j < f.nx(); ++j) m(i, j) = r.contains(f.x(j), f.t(i)) ? 1.0 : 0.0;
    }
    return m;
}

inline Evaluation evaluate_against(const nn::PinnModel& model, const ConstraintFields& c, const SeaStateSpec& truth,
                                   const GridSpec& grid, const std::optional<PredictionRegion>& region = std::nullopt) {
    const auto [eta, phi] = model_surface_fields(model, c, grid);
    const GridField te = truth_elevation(truth, grid), tp = truth_surface_potential(truth, grid);
    Evaluation ev;
    if (region) {
        const Eigen::MatrixXd mask = region_mask(*region, te);
        ev.ssp_elevation = ssp_2d_masked(te, eta, mask);
        ev.ssp_potential = ssp_2d_masked(tp, phi, mask);
    } else {
        ev.ssp_elevation = ssp_2d(te, eta);
        ev.ssp_potential = ssp_2d(tp, phi);
    }
    return ev;
}

// --- training -----------------------------------------------------------------------------

namespace detail {

inline double weighted(const std::vector<double>& lambdas, const std::vector<double>& losses) {
    return total_loss(lambdas, losses);
}

class TrainerLoop {
  public:
    TrainerLoop(const TrainConfig& config, const ObservationSet& obs, const TrainHooks& hooks)
        : config_(config), obs_(obs), hooks_(hooks) {}

    TrainResult run(const std::optional<SeaStateSpec>& truth, const std::optional<GridSpec>& grid) {
        const auto started = std::chrono::steady_clock::now();
        validate(config_, truth ? &*truth : nullptr);
        const DomainConfig& d = config_.domain;
        const nn::DomainBox box = nn::make_domain_box(d.x, d.t, d.depth, obs_.max_value());
        obs_.validate(box);

        TrainResult res;
        auto [fields, fit] = pretrain_constraints(obs_, box, config_.constraints);
        res.constraints = std::move(fields);
        res.report.constraint_fit = fit;
        res.report.constraint_checksum_before = res.constraints.checksum();
        res.model = nn::init_model(config_.model, box);

        const bool predict = config_.scenario == Scenario::prediction;
        std::vector<Segment> schedule;
        std::vector<double> boundaries;
        if (predict) {
            schedule = segment_schedule(config_.schedule);
            boundaries.push_back(schedule.front().t_begin);
            for (const auto& s : schedule) boundaries.push_back(s.t_end);
        }
        CollocationSets sets = sample_collocation(box, config_.counts, config_.seed,
                                                  predict ? config_.region : std::nullopt, boundaries);
        PhysicsSettings ps;
        ps.gravity = d.gravity;
        ps.depth = d.depth;
        ps.coupling = config_.coupling;
        ps.periodic = config_.periodic;
        ps.t0 = d.t.lo;
        ps.t_max = d.t.hi;
        ps.chunk = config_.chunk;
        ps.threads = config_.threads;
        const PhysicsLoss loss(res.model, res.constraints, std::move(sets), ps);
        for (auto c : loss.components()) res.report.components.emplace_back(name(c));
        res.report.mse_data_initial = data_mse(res.model, res.constraints, obs_);

        model_ = &res.model;
        fields_ = &res.constraints;
        loss_ = &loss;
        report_ = &res.report;
        last_good_ = res.model.params();
        RelobraloBalancer balancer(config_.balancer, loss.components().size());

        // Adam: progressive segments (prediction), then the remaining epochs over everything.
        const long progressive = predict ? static_cast<long>(schedule.size()) * config_.schedule.epochs_per_segment : 0;
        const long adam_total = predict ? progressive + config_.refinement_epochs : config_.adam_epochs;
        optim::Adam adam(config_.adam, res.model.size());
        for (long e = 0; e < adam_total; ++e) {
            const int segs = predict ? (e < progressive ? active_segments(schedule, e) : static_cast<int>(schedule.size()))
                                     : 1;
            const ActivePoints active = active_points(segs, predict);
            const char* stage = predict && e >= progressive ? "refine" : "adam";
            const auto ev = evaluate(active, e, stage);
            const std::vector<double>& lambda = balancer.update(ev.bundle.values);
            record(e, stage, ev.bundle.values, lambda, segs, active);
            adam.step(res.model.params(), ev.combined(lambda));
            checkpoint_if_due(e + 1, "adam");
        }
        checkpoint(adam_total, "adam_end");

        // L-BFGS over the full set with frozen weights.
        long lbfgs_budget = config_.lbfgs.max_iterations;
        if (predict) lbfgs_budget = std::min<long>(lbfgs_budget, std::max<long>(0, config_.total_epochs - adam_total));
        std::string termination = "adam_epochs";
        if (lbfgs_budget > 0) {
            const std::vector<double> lambda = balancer.lambdas();
            const ActivePoints all = active_points(predict ? static_cast<int>(schedule.size()) : 1, predict);
            std::vector<std::pair<Eigen::VectorXd, std::vector<double>>> seen;
            long epoch = adam_total;
            optim::Objective f = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
                res.model.params() = theta;
                const auto ev = evaluate(all, epoch, "lbfgs", false);
                if (!ev.bundle.finite()) {
                    grad = Eigen::VectorXd::Zero(theta.size());
                    return std::numeric_limits<double>::infinity();
                }
                grad = ev.combined(lambda);
                seen.emplace_back(theta, ev.bundle.values);
                return weighted(lambda, ev.bundle.values);
            };
            optim::IterationCallback cb = [&](int, double, const Eigen::VectorXd& x) {
                const std::vector<double>* values = nullptr;
                for (auto it = seen.rbegin(); it != seen.rend(); ++it) {
                    if (it->first == x) {
                        values = &it->second;
                        break;
                    }
                }
                if (!values) throw StateError("trainer: accepted L-BFGS point was never evaluated");
                res.model.params() = x;
                last_good_ = x;
                record(epoch, "lbfgs", *values, lambda, predict ? static_cast<int>(schedule.size()) : 1, all);
                seen.clear();
                ++epoch;
                checkpoint_if_due(epoch, "lbfgs");
                return true;
            };
            Eigen::VectorXd theta = res.model.params();
            optim::LbfgsConfig lc = config_.lbfgs;
            lc.max_iterations = static_cast<int>(lbfgs_budget);
            const auto out = optim::lbfgs_minimize(f, theta, lc, cb);
            res.model.params() = theta;
            termination = "lbfgs_" + optim::to_string(out.reason);
            checkpoint(epoch, "final");
        } else {
            checkpoint(adam_total, "final");
        }

        res.report.termination = termination;
        res.report.constraint_checksum_after = res.constraints.checksum();
        if (truth && grid) {
            res.report.evaluation = evaluate_against(res.model, res.constraints, *truth, *grid,
                                                     predict ? config_.region : std::nullopt);
        }
        res.report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        return res;
    }

  private:
    ActivePoints active_points(int segments, bool predict) const {
        if (!predict) return {};
        const auto& s = loss_->sets();
        const auto idx = static_cast<std::size_t>(segments - 1);
        return {s.surface_ends.at(idx), s.bottom_ends.at(idx), s.interior_ends.at(idx)};
    }

    PhysicsLoss::Evaluation evaluate(const ActivePoints& active, long epoch, const char* stage, bool throw_on_nan = true) {
        auto ev = loss_->evaluate(true, active);
        if (throw_on_nan && (!ev.bundle.finite() || !ev.gradients.allFinite())) {
            model_->params().swap(last_good_);
            checkpoint(epoch, "abort");
            throw NumericError(std::string("training: non-finite loss at epoch ") + std::to_string(epoch) +
                               " (" + stage + "); last good parameters restored");
        }
        if (throw_on_nan) last_good_ = model_->params();
        return ev;
    }

    void record(long epoch, const char* stage, const std::vector<double>& losses, const std::vector<double>& lambdas,
                int segments, const ActivePoints& active) {
        EpochRecord r;
        r.epoch = epoch;
        r.stage = stage;
        r.losses = losses;
        r.lambdas = lambdas;
        r.total = weighted(lambdas, losses);
        r.mse_data = data_mse(*model_, *fields_, obs_);
        r.segments = segments;
        r.active_interior = active.interior < 0 ? loss_->sets().interior.cols() : active.interior;
        if (hooks_.on_epoch) hooks_.on_epoch(r);
        report_->epochs.push_back(std::move(r));
    }

    void checkpoint_if_due(long epoch, const char* stage) {
        if (config_.checkpoint_every > 0 && epoch % config_.checkpoint_every == 0) checkpoint(epoch, stage);
    }

    void checkpoint(long epoch, const char* stage) {
        if (hooks_.on_checkpoint) hooks_.on_checkpoint(Checkpoint{epoch, stage, *model_, *fields_});
    }

    const TrainConfig& config_;
    const ObservationSet& obs_;
    const TrainHooks& hooks_;
    nn::PinnModel* model_ = nullptr;
    ConstraintFields* fields_ = nullptr;
    const PhysicsLoss* loss_ = nullptr;
    TrainReport* report_ = nullptr;
    Eigen::VectorXd last_good_;
};

}  // namespace detail

/// Two-stage training over the full domain: Adam with adaptive weights, then
/// L-BFGS with the weights frozen at their last Adam value.
inline TrainResult run_assimilation(TrainConfig config, const ObservationSet& observations,
                                    const std::optional<SeaStateSpec>& truth = std::nullopt,
                                    const std::optional<GridSpec>& grid = std::nullopt, const TrainHooks& hooks = {}) {
    config.scenario = Scenario::assimilation;
    return detail::TrainerLoop(config, observations, hooks).run(truth, grid);
}

/// Causal training: segments join every `epochs_per_segment` Adam epochs,
/// followed by refinement epochs and L-BFGS up to the total epoch cap.
inline TrainResult run_prediction(TrainConfig config, const ObservationSet& snapshots,
                                  const std::optional<SeaStateSpec>& truth = std::nullopt,
                                  const std::optional<GridSpec>& grid = std::nullopt, const TrainHooks& hooks = {}) {
    config.scenario = Scenario::prediction;
    return detail::TrainerLoop(config, snapshots, hooks).run(truth, grid);
}

}  // namespace wavepinn

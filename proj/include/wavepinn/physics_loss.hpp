#pragma once

// Collocation sets and the residual losses of the potential-flow system.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <thread>
#include <vector>

#include "wavepinn/autodiff/chunks.hpp"
#include "wavepinn/autodiff/tape.hpp"
#include "wavepinn/constraints.hpp"
#include "wavepinn/errors.hpp"
#include "wavepinn/network.hpp"
#include "wavepinn/wave_theory.hpp"

namespace wavepinn {

// --- collocation -------------------------------------------------------------

struct CollocationCounts {
    Index surface = 5000;
    Index bottom = 1000;
    Index interior = 30000;
    Index periodic = 1000;
};

/// Fixed collocation points. Columns are grouped by time stratum (one stratum
/// unless segment boundaries were given), so the points of the first n strata
/// form a leading block of every set.
struct CollocationSets {
    Eigen::Matrix2Xd surface;   // (x, t)
    Eigen::Matrix2Xd bottom;    // (x, t), z = -d
    Eigen::Matrix3Xd interior;  // (x, t, z) before clamping
    Eigen::Matrix2Xd periodic;  // (x, z), paired at t0 and t_max
    std::vector<Index> surface_ends, bottom_ends, interior_ends;  // cumulative per stratum
    std::uint64_t seed = 0;
};

namespace detail {

// Largest-remainder split of n proportional to the weights.
inline std::vector<Index> proportional_split(Index n, std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) throw DomainError("collocation: strata have zero total weight");
    std::vector<Index> out(weights.size());
    std::vector<std::pair<double, std::size_t>> rest;
    Index used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double share = static_cast<double>(n) * weights[i] / total;
        out[i] = static_cast<Index>(std::floor(share));
        used += out[i];
        rest.emplace_back(share - std::floor(share), i);
    }
    std::stable_sort(rest.begin(), rest.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; used < n; ++k, ++used) ++out[rest[k % rest.size()].second];
    return out;
}

}  // namespace detail

/// Uniform pseudo-random sampling over the static box, or over a prediction
/// region by rejection. `boundaries` (ascending times t_0 < ... < t_n) splits
/// the surface, bottom and interior budgets across strata proportionally to
/// their duration.
inline CollocationSets sample_collocation(const nn::DomainBox& box, const CollocationCounts& counts,
                                          std::uint64_t seed,
                                          const std::optional<PredictionRegion>& region = std::nullopt,
                                          std::vector<double> boundaries = {}) {
    if (counts.surface < 1 || counts.bottom < 1 || counts.interior < 1 || counts.periodic < 0) {
        throw DomainError("collocation: counts must be positive");
    }
    if (!(box.x.hi > box.x.lo) || !(box.t.hi > box.t.lo) || !(box.z.hi > box.z.lo)) {
        throw DomainError("collocation: empty domain");
    }
    if (boundaries.empty()) boundaries = {box.t.lo, box.t.hi};
    if (boundaries.size() < 2 || !std::is_sorted(boundaries.begin(), boundaries.end()) ||
        std::adjacent_find(boundaries.begin(), boundaries.end()) != boundaries.end()) {
        throw DomainError("collocation: stratum boundaries must be strictly increasing");
    }
    std::vector<double> durations;
    for (std::size_t i = 1; i < boundaries.size(); ++i) durations.push_back(boundaries[i] - boundaries[i - 1]);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(box.x.lo, box.x.hi), uz(box.z.lo, box.z.hi), unit(0.0, 1.0);
    CollocationSets sets;
    sets.seed = seed;

    // Draws one (x, t) inside stratum s.
    auto draw_xt = [&](std::size_t s) -> Eigen::Vector2d {
        const double t0 = boundaries[s], t1 = boundaries[s + 1];
        for (int attempt = 0; attempt < 1000000; ++attempt) {
            const double t = t0 + (t1 - t0) * unit(rng);
            const double x = ux(rng);
            if (!region || region->contains(x, t)) return {x, t};
        }
        throw DomainError("collocation: prediction region does not intersect a time stratum");
    };

    auto fill = [&](Index n, int rows, std::vector<Index>& ends) {
        const auto split = detail::proportional_split(n, durations);
        Eigen::MatrixXd m(rows, n);
        Index col = 0;
        for (std::size_t s = 0; s < split.size(); ++s) {
            for (Index i = 0; i < split[s]; ++i, ++col) {
                m.block<2, 1>(0, col) = draw_xt(s);
                if (rows == 3) m(2, col) = uz(rng);
            }
            ends.push_back(col);
        }
        return m;
    };

    sets.surface = fill(counts.surface, 2, sets.surface_ends);
    sets.bottom = fill(counts.bottom, 2, sets.bottom_ends);
    sets.interior = fill(counts.interior, 3, sets.interior_ends);
    sets.periodic.resize(2, counts.periodic);
    for (Index i = 0; i < counts.periodic; ++i) {
        sets.periodic(0, i) = ux(rng);
        sets.periodic(1, i) = uz(rng);
    }
    return sets;
}

/// Elevation evaluator used by the clamps: values at the columns of a 2 x n matrix.
using ElevationFn = std::function<Eigen::VectorXd(const Eigen::Matrix2Xd&)>;

/// z <- min(z, eta(x, t)) per interior point.
inline Eigen::Matrix3Xd clamp_interior_z(const Eigen::Matrix3Xd& interior, const ElevationFn& eta) {
    Eigen::Matrix3Xd out = interior;
    if (interior.cols() == 0) return out;
    const Eigen::VectorXd surf = eta(interior.topRows<2>());
    out.row(2) = interior.row(2).cwiseMin(surf.transpose());
    return out;
}

// --- fields --------------------------------------------------------------------

/// Tape builders for the elevation over physical (x, t) and the potential over
/// physical (x, t, z).
struct FieldFunctions {
    std::function<NodeId(ad::Tape&, NodeId)> eta;
    std::function<NodeId(ad::Tape&, NodeId)> phi;
};

/// Constrained elevation and potential of a model, differentiable in its parameters.
inline FieldFunctions model_fields(const nn::PinnModel& model, const ConstraintFields& c, bool trainable = true) {
    if (!c.frozen()) throw StateError("model fields: constraint fields are not frozen");
    return {[&model, &c, trainable](ad::Tape& t, NodeId xt) {
                return constrained_elevation(t, model, c, xt, trainable);
            },
            [&model, trainable](ad::Tape& t, NodeId xtz) { return model.phi(t, xtz, trainable); }};
}

/// Linear-wave elevation and potential recorded from tape primitives. Exact
/// to rounding, so it serves as an oracle for the residual losses.
inline FieldFunctions lwt_fields(const SeaStateSpec& sea) {
    validate(sea);
    auto eta = [sea](ad::Tape& tape, NodeId xt) {
        NodeId sum = tape.affine(xt, Eigen::MatrixXd::Zero(1, 2), Eigen::VectorXd::Zero(1));
        for (const auto& c : sea.components) {
            Eigen::MatrixXd w(1, 2);
            w << c.k, -c.omega;
            const NodeId wave = tape.cos(tape.affine(xt, w, Eigen::VectorXd::Constant(1, c.phase)));
            sum = tape.lincomb(sum, 1.0, wave, c.amplitude);
        }
        return sum;
    };
    auto phi = [sea](ad::Tape& tape, NodeId xtz) {
        NodeId sum = tape.affine(xtz, Eigen::MatrixXd::Zero(1, 3), Eigen::VectorXd::Zero(1));
        for (const auto& c : sea.components) {
            Eigen::MatrixXd w(1, 3), wz(1, 3);
            w << c.k, -c.omega, 0.0;
            wz << 0.0, 0.0, c.k;
            const NodeId s = tape.sin(tape.affine(xtz, w, Eigen::VectorXd::Constant(1, c.phase)));
            // cosh(k(z+d))/cosh(kd) = (e^{kz} + e^{-k(z+2d)}) / (1 + e^{-2kd})
            const NodeId up = tape.exp(tape.affine(xtz, wz, Eigen::VectorXd::Zero(1)));
            const NodeId down = tape.exp(tape.affine(xtz, -wz, Eigen::VectorXd::Constant(1, -2.0 * c.k * sea.depth)));
            const double amp = sea.gravity * c.amplitude / c.omega / (1.0 + std::exp(-2.0 * c.k * sea.depth));
            sum = tape.lincomb(sum, 1.0, tape.mul(tape.add(up, down), s), amp);
        }
        return sum;
    };
    return {eta, phi};
}

inline Eigen::VectorXd evaluate_elevation(const FieldFunctions& f, const Eigen::Matrix2Xd& xt,
                                          Index chunk = ad::kDefaultChunk) {
    Eigen::VectorXd out(xt.cols());
    for (Index c0 = 0; c0 < xt.cols(); c0 += chunk) {
        const Index len = std::min(chunk, xt.cols() - c0);
        ad::Tape tape;
        const NodeId in = tape.input(ad::coordinates(xt.middleCols(c0, len), ad::kValueOnly));
        out.segment(c0, len) = tape.out(f.eta(tape, in)).value().row(0).transpose();
    }
    return out;
}

// --- residuals -------------------------------------------------------------------

struct SurfaceResiduals {
    NodeId kinematic;
    NodeId dynamic;
};

namespace detail {

inline NodeId bottom_residual(ad::Tape& tape, const FieldFunctions& f, const Eigen::Ref<const Eigen::Matrix2Xd>& xt,
                              double depth) {
    Eigen::Matrix3Xd p(3, xt.cols());
    p.topRows<2>() = xt;
    p.row(2).setConstant(-depth);
    const NodeId in = tape.input(ad::coordinates(p, ad::bit(ad::Slot::value) | ad::bit(ad::Slot::dz)));
    return tape.slot(f.phi(tape, in), ad::Slot::dz);
}

inline SurfaceResiduals surface_residuals(ad::Tape& tape, const FieldFunctions& f,
                                          const Eigen::Ref<const Eigen::Matrix2Xd>& xt, double gravity,
                                          ad::SurfaceCoupling coupling) {
    const NodeId in = tape.input(ad::coordinates(xt, ad::kFirstXT));
    const NodeId eta = f.eta(tape, in);
    const NodeId z = tape.lift_z(eta, coupling);
    const NodeId phi = f.phi(tape, tape.concat({in, z}));
    const NodeId eta_x = tape.slot(eta, ad::Slot::dx), eta_t = tape.slot(eta, ad::Slot::dt);
    const NodeId phi_x = tape.slot(phi, ad::Slot::dx), phi_t = tape.slot(phi, ad::Slot::dt);
    const NodeId phi_z = tape.slot(phi, ad::Slot::dz);
    const NodeId eta_v = tape.slot(eta, ad::Slot::value);
    const NodeId kin = tape.sub(tape.add(eta_t, tape.mul(eta_x, phi_x)), phi_z);
    const NodeId kinetic = tape.scale(tape.add(tape.square(phi_x), tape.square(phi_z)), 0.5);
    const NodeId dyn = tape.add(tape.lincomb(phi_t, 1.0, eta_v, gravity), kinetic);
    return {kin, dyn};
}

inline NodeId laplace_residual(ad::Tape& tape, const FieldFunctions& f, const Eigen::Ref<const Eigen::Matrix3Xd>& xtz) {
    const NodeId phi = f.phi(tape, tape.input(ad::coordinates(xtz, ad::kLaplace)));
    return tape.add(tape.slot(phi, ad::Slot::dxx), tape.slot(phi, ad::Slot::dzz));
}

// (x, z) pairs with z already clamped.
inline std::pair<NodeId, NodeId> periodic_residuals(ad::Tape& tape, const FieldFunctions& f,
                                                    const Eigen::Ref<const Eigen::Matrix2Xd>& xz, double t0,
                                                    double t1) {
    const Index n = xz.cols();
    Eigen::Matrix2Xd a(2, n), b(2, n);
    a.row(0) = b.row(0) = xz.row(0);
    a.row(1).setConstant(t0);
    b.row(1).setConstant(t1);
    Eigen::Matrix3Xd pa(3, n), pb(3, n);
    pa << a, xz.row(1);
    pb << b, xz.row(1);
    const NodeId eta = tape.sub(f.eta(tape, tape.input(ad::coordinates(a, ad::kValueOnly))),
                                f.eta(tape, tape.input(ad::coordinates(b, ad::kValueOnly))));
    const NodeId phi = tape.sub(f.phi(tape, tape.input(ad::coordinates(pa, ad::kValueOnly))),
                                f.phi(tape, tape.input(ad::coordinates(pb, ad::kValueOnly))));
    return {eta, phi};
}

// Clamps periodic-pair depths under the surface at both ends of the window.
inline Eigen::Matrix2Xd clamp_periodic_z(const Eigen::Matrix2Xd& xz, const FieldFunctions& f, double t0, double t1) {
    Eigen::Matrix2Xd out = xz;
    if (xz.cols() == 0) return out;
    Eigen::Matrix2Xd a(2, xz.cols()), b(2, xz.cols());
    a.row(0) = b.row(0) = xz.row(0);
    a.row(1).setConstant(t0);
    b.row(1).setConstant(t1);
    const Eigen::VectorXd ea = evaluate_elevation(f, a), eb = evaluate_elevation(f, b);
    out.row(1) = xz.row(1).cwiseMin(ea.transpose()).cwiseMin(eb.transpose());
    return out;
}

/// Mean squares of K residual rows over n points split into chunks. Each
/// chunk gets its own tape and gradient buffers; the reduction runs in chunk
/// order, so results do not depend on the thread count.
template <std::size_t K, class Build>
std::array<double, K> mse_over_chunks(Index n, Build&& build, std::array<Eigen::VectorXd*, K> grads, Index chunk,
                                      int threads) {
    std::array<double, K> total{};
    if (n == 0) return total;
    if (chunk < 1) throw ConfigError("loss evaluation: chunk size must be positive");
    const Index chunks = (n + chunk - 1) / chunk;
    const double inv_n = 1.0 / static_cast<double>(n);
    struct Part {
        std::array<double, K> loss{};
        std::array<Eigen::VectorXd, K> grad;
    };
    std::vector<Part> parts(static_cast<std::size_t>(chunks));

    auto work = [&](Index c) {
        const Index c0 = c * chunk, len = std::min(chunk, n - c0);
        ad::Tape tape;
        const std::array<NodeId, K> res = build(tape, c0, len);
        Part& p = parts[static_cast<std::size_t>(c)];
        for (std::size_t k = 0; k < K; ++k) {
            const NodeId l = tape.sum(tape.square(res[k]), inv_n);
            p.loss[k] = tape.scalar(l);
            if (grads[k]) {
                p.grad[k] = Eigen::VectorXd::Zero(grads[k]->size());
                tape.backward(l, p.grad[k]);
            }
        }
    };

    const int workers = static_cast<int>(std::min<Index>(std::max(threads, 1), chunks));
    if (workers <= 1) {
        for (Index c = 0; c < chunks; ++c) work(c);
    } else {
        std::atomic<Index> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (Index c = next++; c < chunks; c = next++) work(c);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    for (const Part& p : parts) {
        for (std::size_t k = 0; k < K; ++k) {
            total[k] += p.loss[k];
            if (grads[k]) *grads[k] += p.grad[k];
        }
    }
    return total;
}

}  // namespace detail

// --- standalone losses -------------------------------------------------------------
// `grad`, when given, accumulates the parameter gradient of the returned loss.

inline double loss_bottom(const FieldFunctions& f, const Eigen::Matrix2Xd& bottom, double depth,
                          Eigen::VectorXd* grad = nullptr) {
    return detail::mse_over_chunks<1>(
        bottom.cols(),
        [&](ad::Tape& t, Index c0, Index len) {
            return std::array<NodeId, 1>{detail::bottom_residual(t, f, bottom.middleCols(c0, len), depth)};
        },
        {grad}, ad::kDefaultChunk, 1)[0];
}

/// (L_kin, L_dyn) at the surface points.
inline std::pair<double, double> loss_surface(const FieldFunctions& f, const Eigen::Matrix2Xd& surface, double gravity,
                                              ad::SurfaceCoupling coupling = ad::SurfaceCoupling::partial,
                                              Eigen::VectorXd* grad_kin = nullptr, Eigen::VectorXd* grad_dyn = nullptr) {
    const auto l = detail::mse_over_chunks<2>(
        surface.cols(),
        [&](ad::Tape& t, Index c0, Index len) {
            const auto r = detail::surface_residuals(t, f, surface.middleCols(c0, len), gravity, coupling);
            return std::array<NodeId, 2>{r.kinematic, r.dynamic};
        },
        {grad_kin, grad_dyn}, ad::kDefaultChunk, 1);
    return {l[0], l[1]};
}

inline double loss_kinematic(const FieldFunctions& f, const Eigen::Matrix2Xd& surface,
                             ad::SurfaceCoupling coupling = ad::SurfaceCoupling::partial) {
    return loss_surface(f, surface, kStandardGravity, coupling).first;
}

inline double loss_dynamic(const FieldFunctions& f, const Eigen::Matrix2Xd& surface, double gravity,
                           ad::SurfaceCoupling coupling = ad::SurfaceCoupling::partial) {
    return loss_surface(f, surface, gravity, coupling).second;
}

/// Laplacian MSE at interior points whose z is already clamped.
inline double loss_laplace(const FieldFunctions& f, const Eigen::Matrix3Xd& interior, Eigen::VectorXd* grad = nullptr) {
    return detail::mse_over_chunks<1>(
        interior.cols(),
        [&](ad::Tape& t, Index c0, Index len) {
            return std::array<NodeId, 1>{detail::laplace_residual(t, f, interior.middleCols(c0, len))};
        },
        {grad}, ad::kDefaultChunk, 1)[0];
}

/// (L_PB_eta, L_PB_phi) over (x, z) pairs; z is clamped under the surface at both ends.
inline std::pair<double, double> loss_periodic(const FieldFunctions& f, const Eigen::Matrix2Xd& pairs, double t0,
                                               double t1) {
    if (!(t1 > t0)) throw ConfigError("periodic losses: empty time window");
    const Eigen::Matrix2Xd xz = detail::clamp_periodic_z(pairs, f, t0, t1);
    const auto l = detail::mse_over_chunks<2>(
        xz.cols(),
        [&](ad::Tape& t, Index c0, Index len) {
            const auto [a, b] = detail::periodic_residuals(t, f, xz.middleCols(c0, len), t0, t1);
            return std::array<NodeId, 2>{a, b};
        },
        {nullptr, nullptr}, ad::kDefaultChunk, 1);
    return {l[0], l[1]};
}

/// (1/N_d) sum |eta_m - eta|^2. Diagnostic only.
inline double data_mse(const FieldFunctions& f, const ObservationSet& obs) {
    obs.validate();
    return (evaluate_elevation(f, obs.points) - obs.values).squaredNorm() / static_cast<double>(obs.size());
}

inline double data_mse(const nn::PinnModel& model, const ConstraintFields& c, const ObservationSet& obs) {
    return data_mse(model_fields(model, c, false), obs);
}

// --- bundle and evaluator ---------------------------------------------------------

enum class LossComponent { laplace, kinematic, dynamic, bottom, periodic_eta, periodic_phi };

inline constexpr std::array<std::string_view, 6> kLossNames{"lap", "kin", "dyn", "bot", "pb_eta", "pb_phi"};

inline std::string_view name(LossComponent c) { return kLossNames[static_cast<std::size_t>(c)]; }

/// Active loss components in a fixed order plus the data diagnostic.
struct LossBundle {
    std::vector<LossComponent> components;
    std::vector<double> values;
    double mse_data = std::numeric_limits<double>::quiet_NaN();

    double get(LossComponent c) const {
        for (std::size_t i = 0; i < components.size(); ++i) {
            if (components[i] == c) return values[i];
        }
        throw ConstructionError("loss bundle: component not active");
    }
    bool finite() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    }
};

struct PhysicsSettings {
    double gravity = kStandardGravity;
    double depth = 1.0;
    ad::SurfaceCoupling coupling = ad::SurfaceCoupling::partial;
    bool periodic = false;
    double t0 = 0.0;     // periodic window
    double t_max = 0.0;
    Index chunk = ad::kDefaultChunk;
    int threads = 1;
};

/// Number of leading columns of each collocation set taking part in the loss.
struct ActivePoints {
    Index surface = -1;  // < 0: all
    Index bottom = -1;
    Index interior = -1;
};

/// Full-batch evaluation of every active loss component and its gradient
/// with respect to the model parameters. Reads the model's current parameters.
class PhysicsLoss {
  public:
    struct Evaluation {
        LossBundle bundle;
        Eigen::MatrixXd gradients;  // one column per component, empty without gradients

        Eigen::VectorXd combined(std::span<const double> lambdas) const {
            if (static_cast<Index>(lambdas.size()) != gradients.cols()) {
                throw ConstructionError("loss evaluation: weight count mismatch");
            }
            return gradients * Eigen::Map<const Eigen::VectorXd>(lambdas.data(), gradients.cols());
        }
    };

    PhysicsLoss(const nn::PinnModel& model, const ConstraintFields& constraints, CollocationSets sets,
                PhysicsSettings settings)
        : model_(model), constraints_(constraints), sets_(std::move(sets)), settings_(settings) {
        if (!constraints.frozen()) throw StateError("physics loss: constraint fields are not frozen");
        if (!(settings_.depth > 0.0) || !(settings_.gravity > 0.0)) {
            throw ConfigError("physics loss: depth and gravity must be positive");
        }
        if (settings_.periodic && (!(settings_.t_max > settings_.t0) || sets_.periodic.cols() == 0)) {
            throw ConfigError("physics loss: periodic losses need a time window and periodic pairs");
        }
        components_ = {LossComponent::laplace, LossComponent::kinematic, LossComponent::dynamic,
                       LossComponent::bottom};
        if (settings_.periodic) {
            components_.push_back(LossComponent::periodic_eta);
            components_.push_back(LossComponent::periodic_phi);
        }
    }

    const std::vector<LossComponent>& components() const { return components_; }
    const CollocationSets& sets() const { return sets_; }
    const PhysicsSettings& settings() const { return settings_; }

    /// Interior points clamped under the current surface.
    Eigen::Matrix3Xd clamped_interior(Index count = -1) const {
        const Index n = count < 0 ? sets_.interior.cols() : count;
        const FieldFunctions frozen = model_fields(model_, constraints_, false);
        return clamp_interior_z(sets_.interior.leftCols(n),
                                [&](const Eigen::Matrix2Xd& xt) { return evaluate_elevation(frozen, xt); });
    }

    Evaluation evaluate(bool with_gradient, const ActivePoints& active = {}) const {
        const FieldFunctions f = model_fields(model_, constraints_, true);
        const FieldFunctions frozen = model_fields(model_, constraints_, false);
        const Index ns = pick(active.surface, sets_.surface.cols());
        const Index nb = pick(active.bottom, sets_.bottom.cols());
        const Index nl = pick(active.interior, sets_.interior.cols());
        const Index p = model_.size();
        const Index m = static_cast<Index>(components_.size());

        Evaluation ev;
        ev.bundle.components = components_;
        ev.bundle.values.assign(components_.size(), 0.0);
        if (with_gradient) ev.gradients = Eigen::MatrixXd::Zero(p, m);
        std::vector<Eigen::VectorXd> g(static_cast<std::size_t>(m));
        auto slot = [&](std::size_t i) -> Eigen::VectorXd* {
            if (!with_gradient) return nullptr;
            g[i] = Eigen::VectorXd::Zero(p);
            return &g[i];
        };
        const Index chunk = settings_.chunk;
        const int threads = settings_.threads;

        // Interior: clamp against the current surface (detached), then the Laplacian.
        const auto lap = detail::mse_over_chunks<1>(
            nl,
            [&](ad::Tape& t, Index c0, Index len) {
                Eigen::Matrix3Xd pts = sets_.interior.middleCols(c0, len);
                const Eigen::VectorXd surf = evaluate_elevation(frozen, pts.topRows<2>(), len);
                pts.row(2) = pts.row(2).cwiseMin(surf.transpose());
                return std::array<NodeId, 1>{detail::laplace_residual(t, f, pts)};
            },
            {slot(0)}, chunk, threads);
        const auto surf = detail::mse_over_chunks<2>(
            ns,
            [&](ad::Tape& t, Index c0, Index len) {
                const auto r = detail::surface_residuals(t, f, sets_.surface.middleCols(c0, len), settings_.gravity,
                                                         settings_.coupling);
                return std::array<NodeId, 2>{r.kinematic, r.dynamic};
            },
            {slot(1), slot(2)}, chunk, threads);
        const auto bot = detail::mse_over_chunks<1>(
            nb,
            [&](ad::Tape& t, Index c0, Index len) {
                return std::array<NodeId, 1>{
                    detail::bottom_residual(t, f, sets_.bottom.middleCols(c0, len), settings_.depth)};
            },
            {slot(3)}, chunk, threads);
        ev.bundle.values[0] = lap[0];
        ev.bundle.values[1] = surf[0];
        ev.bundle.values[2] = surf[1];
        ev.bundle.values[3] = bot[0];

        if (settings_.periodic) {
            const Eigen::Matrix2Xd xz = detail::clamp_periodic_z(sets_.periodic, frozen, settings_.t0, settings_.t_max);
            const auto pb = detail::mse_over_chunks<2>(
                xz.cols(),
                [&](ad::Tape& t, Index c0, Index len) {
                    const auto [a, b] =
                        detail::periodic_residuals(t, f, xz.middleCols(c0, len), settings_.t0, settings_.t_max);
                    return std::array<NodeId, 2>{a, b};
                },
                {slot(4), slot(5)}, chunk, threads);
            ev.bundle.values[4] = pb[0];
            ev.bundle.values[5] = pb[1];
        }
        if (with_gradient) {
            for (Index i = 0; i < m; ++i) ev.gradients.col(i) = g[static_cast<std::size_t>(i)];
        }
        return ev;
    }

  private:
    static Index pick(Index requested, Index available) {
        if (requested > available) throw ConstructionError("physics loss: active count exceeds the set");
        return requested < 0 ? available : requested;
    }

    const nn::PinnModel& model_;
    const ConstraintFields& constraints_;
    CollocationSets sets_;
    PhysicsSettings settings_;
    std::vector<LossComponent> components_;
};

}  // namespace wavepinn

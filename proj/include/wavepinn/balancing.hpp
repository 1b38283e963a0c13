#pragma once

// Relative loss balancing with random lookbacks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "wavepinn/errors.hpp"

namespace wavepinn {

struct BalancerConfig {
    bool enabled = true;  // false: fixed unit weights
    double alpha = 0.95;
    double tau = 20.0;
    double expected_rho = 0.98;
    double loss_floor = 1e-12;
    std::uint64_t seed = 0;
};

/// nu_i = m softmax_i(L_i / (tau L_ref_i)), with both losses floored.
inline std::vector<double> relobralo_ratio_weights(std::span<const double> losses, std::span<const double> reference,
                                                   double tau, double floor = 1e-12) {
    if (losses.size() != reference.size() || losses.empty()) {
        throw ConstructionError("relobralo: loss vectors differ in length");
    }
    const std::size_t m = losses.size();
    std::vector<double> z(m);
    for (std::size_t i = 0; i < m; ++i) {
        z[i] = std::max(losses[i], floor) / (tau * std::max(reference[i], floor));
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double& v : z) total += (v = std::exp(v - zmax));
    for (double& v : z) v *= static_cast<double>(m) / total;
    return z;
}

class RelobraloBalancer {
  public:
    RelobraloBalancer() = default;
    RelobraloBalancer(BalancerConfig config, std::size_t components)
        : config_(config), rng_(config.seed), lambda_(components, 1.0) {
        if (components == 0) throw ConstructionError("relobralo: no loss components");
        if (!(config.tau > 0.0) || config.alpha < 0.0 || config.alpha > 1.0 || config.expected_rho < 0.0 ||
            config.expected_rho > 1.0) {
            throw ConfigError("relobralo: requires tau > 0 and alpha, E[rho] in [0, 1]");
        }
    }

    /// Feeds the losses of the current epoch and returns the weights to use for it.
    /// The first call records the initial losses and keeps lambda = 1.
    /// `rho` overrides the Bernoulli draw.
    const std::vector<double>& update(std::span<const double> losses, std::optional<bool> rho = std::nullopt) {
        if (losses.size() != lambda_.size()) throw ConstructionError("relobralo: component count changed");
        for (double l : losses) {
            if (!std::isfinite(l)) throw NumericError("relobralo: non-finite loss component");
        }
        if (!config_.enabled) {
            ++epoch_;
            return lambda_;
        }
        if (epoch_ == 0) {
            initial_.assign(losses.begin(), losses.end());
            previous_ = initial_;
            ++epoch_;
            return lambda_;
        }
        const bool keep = rho ? *rho : std::bernoulli_distribution(config_.expected_rho)(rng_);
        const double r = keep ? 1.0 : 0.0;
        const auto nu_init = relobralo_ratio_weights(losses, initial_, config_.tau, config_.loss_floor);
        const auto nu_prev = relobralo_ratio_weights(losses, previous_, config_.tau, config_.loss_floor);
        last_nu_ = nu_prev;
        const double a = config_.alpha;
        for (std::size_t i = 0; i < lambda_.size(); ++i) {
            lambda_[i] = a * (r * lambda_[i] + (1.0 - r) * nu_init[i]) + (1.0 - a) * nu_prev[i];
        }
        previous_.assign(losses.begin(), losses.end());
        ++epoch_;
        return lambda_;
    }

    const std::vector<double>& lambdas() const { return lambda_; }
    const std::vector<double>& last_nu() const { return last_nu_; }
    long epoch() const { return epoch_; }
    const BalancerConfig& config() const { return config_; }

  private:
    BalancerConfig config_;
    std::mt19937_64 rng_;
    std::vector<double> lambda_;
    std::vector<double> initial_, previous_, last_nu_;
    long epoch_ = 0;
};

/// Weighted sum of the active loss components.
inline double total_loss(std::span<const double> lambdas, std::span<const double> losses) {
    if (lambdas.size() != losses.size()) throw ConstructionError("total_loss: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        if (!(lambdas[i] >= 0.0)) throw DomainError("total_loss: weights must be non-negative");
        acc += lambdas[i] * losses[i];
    }
    return acc;
}

}  // namespace wavepinn

#pragma once

// Linear wave theory: dispersion, group velocity, superposed elevation and
// potential fields, JONSWAP spectra and prediction-region geometry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "wavepinn/errors.hpp"

namespace wavepinn {

inline constexpr double kStandardGravity = 9.81;

struct WaveComponent {
    double amplitude = 0.0;  // m
    double omega = 0.0;      // rad/s
    double k = 0.0;          // rad/m
    double phase = 0.0;      // rad
};

struct SeaStateSpec {
    std::vector<WaveComponent> components;
    double depth = 0.0;  // m
    double gravity = kStandardGravity;
};

/// Partial derivatives of a scalar field at one point. Slots that do not
/// apply to a field (d_z for elevation) are zero.
struct InputJet {
    double value = 0.0;
    double d_x = 0.0;
    double d_t = 0.0;
    double d_z = 0.0;
    double d_xx = 0.0;
    double d_zz = 0.0;
};

/// Wavenumber k satisfying omega^2 = g k tanh(k d).
///
/// Newton iteration from the deep-water guess omega^2/g; falls back to
/// bisection on the bracket [max(omega^2/g, omega/sqrt(g d)), omega^2/(g tanh(k_lo d))]
/// if Newton has not converged after 50 iterations.
inline double solve_dispersion(double omega, double depth, double gravity = kStandardGravity) {
    if (!(omega > 0.0) || !(depth > 0.0) || !(gravity > 0.0) || !std::isfinite(omega) ||
        !std::isfinite(depth)) {
        throw DomainError("solve_dispersion: omega, depth and gravity must be positive and finite");
    }
    const double w2 = omega * omega;
    auto residual = [&](double k) { return gravity * k * std::tanh(k * depth) - w2; };

    double k = w2 / gravity;
    for (int it = 0; it < 50; ++it) {
        const double th = std::tanh(k * depth);
        const double f = gravity * k * th - w2;
        const double df = gravity * (th + k * depth * (1.0 - th * th));
        const double step = f / df;
        const double next = k - step;
        if (!(next > 0.0) || !std::isfinite(next)) {
            break;
        }
        k = next;
        if (std::abs(step) <= 1e-15 * k) {
            if (std::abs(residual(k)) <= 1e-13 * w2) {
                return k;
            }
        }
    }

    double lo = std::max(w2 / gravity, omega / std::sqrt(gravity * depth));
    double hi = w2 / (gravity * std::tanh(lo * depth));
    if (residual(lo) >= 0.0) {
        return lo;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (residual(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// omega from k via the dispersion relation.
inline double dispersion_frequency(double k, double depth, double gravity = kStandardGravity) {
    return std::sqrt(gravity * k * std::tanh(k * depth));
}

inline double group_velocity(double omega, double depth, double gravity = kStandardGravity) {
    const double k = solve_dispersion(omega, depth, gravity);
    const double two_kd = 2.0 * k * depth;
    // kd / sinh(2kd) underflows to zero long before sinh overflows.
    const double shoaling = two_kd > 700.0 ? 0.0 : k * depth / std::sinh(two_kd);
    return (0.5 + shoaling) * omega / k;
}

inline double phase_velocity(double omega, double depth, double gravity = kStandardGravity) {
    return omega / solve_dispersion(omega, depth, gravity);
}

/// Component with k filled in from the dispersion relation.
inline WaveComponent make_component(double amplitude, double omega, double phase, double depth,
                                    double gravity = kStandardGravity) {
    return {amplitude, omega, solve_dispersion(omega, depth, gravity), phase};
}

/// Throws DomainError if the sea state violates its invariants.
inline void validate(const SeaStateSpec& spec, double dispersion_tolerance = 1e-10) {
    if (!(spec.depth > 0.0) || !(spec.gravity > 0.0)) {
        throw DomainError("sea state: depth and gravity must be positive");
    }
    if (spec.components.empty()) {
        throw DomainError("sea state: at least one component required");
    }
    for (const auto& c : spec.components) {
        if (!(c.amplitude >= 0.0) || !(c.omega > 0.0) || !(c.k > 0.0)) {
            throw DomainError("sea state: component requires a >= 0, omega > 0, k > 0");
        }
        const double w = dispersion_frequency(c.k, spec.depth, spec.gravity);
        if (std::abs(w - c.omega) > dispersion_tolerance * c.omega) {
            throw DomainError("sea state: component violates the dispersion relation");
        }
    }
}

inline double lwt_elevation(const SeaStateSpec& spec, double x, double t) {
    double eta = 0.0;
    for (const auto& c : spec.components) {
        eta += c.amplitude * std::cos(c.k * x - c.omega * t + c.phase);
    }
    return eta;
}

/// Elevation with first partials (value, d_x, d_t).
inline InputJet lwt_elevation_jet(const SeaStateSpec& spec, double x, double t) {
    InputJet j;
    for (const auto& c : spec.components) {
        const double theta = c.k * x - c.omega * t + c.phase;
        const double s = std::sin(theta);
        j.value += c.amplitude * std::cos(theta);
        j.d_x -= c.amplitude * c.k * s;
        j.d_t += c.amplitude * c.omega * s;
    }
    return j;
}

namespace detail {

// cosh(k(z+d))/cosh(kd) and sinh(k(z+d))/cosh(kd) without overflow for large kd.
inline std::pair<double, double> vertical_profile(double k, double z, double d) {
    const double decay = std::exp(k * z);
    const double bottom = std::exp(-2.0 * k * (z + d));
    const double norm = 1.0 + std::exp(-2.0 * k * d);
    return {decay * (1.0 + bottom) / norm, decay * (1.0 - bottom) / norm};
}

}  // namespace detail

/// Velocity potential with all partials used by the residuals.
inline InputJet lwt_potential_jet(const SeaStateSpec& spec, double x, double t, double z) {
    if (z < -spec.depth) {
        throw DomainError("lwt_potential: z below the sea bed");
    }
    InputJet j;
    for (const auto& c : spec.components) {
        const double amp = spec.gravity * c.amplitude / c.omega;
        const auto [ch, sh] = detail::vertical_profile(c.k, z, spec.depth);
        const double theta = c.k * x - c.omega * t + c.phase;
        const double s = std::sin(theta);
        const double co = std::cos(theta);
        j.value += amp * ch * s;
        j.d_x += amp * ch * c.k * co;
        j.d_t -= amp * ch * c.omega * co;
        j.d_z += amp * c.k * sh * s;
        j.d_xx -= amp * ch * c.k * c.k * s;
        j.d_zz += amp * ch * c.k * c.k * s;
    }
    return j;
}

inline double lwt_potential(const SeaStateSpec& spec, double x, double t, double z) {
    return lwt_potential_jet(spec, x, t, z).value;
}

/// Common period of all components within a relative tolerance, if the window is one.
inline bool is_time_periodic(const SeaStateSpec& spec, double window, double tolerance = 1e-6) {
    if (!(window > 0.0)) {
        return false;
    }
    for (const auto& c : spec.components) {
        const double cycles = c.omega * window / (2.0 * std::numbers::pi);
        if (std::abs(cycles - std::round(cycles)) > tolerance * std::max(1.0, cycles)) {
            return false;
        }
    }
    return true;
}

// --- JONSWAP ---------------------------------------------------------------

struct JonswapSpec {
    double peak_period = 0.0;  // s
    double gamma = 3.3;
    std::optional<double> significant_height;  // m
    std::optional<double> steepness;           // 0.5 Hs k_p
    double depth = 0.0;                        // m
    double gravity = kStandardGravity;

    double peak_frequency() const { return 2.0 * std::numbers::pi / peak_period; }
    double peak_wavenumber() const { return solve_dispersion(peak_frequency(), depth, gravity); }
    double peak_wavelength() const { return 2.0 * std::numbers::pi / peak_wavenumber(); }

    double hs() const {
        if (significant_height && steepness) {
            throw DomainError("jonswap: give exactly one of significant height and steepness");
        }
        if (significant_height) {
            return *significant_height;
        }
        if (steepness) {
            return 2.0 * *steepness / peak_wavenumber();
        }
        throw DomainError("jonswap: significant height or steepness required");
    }
    double eps() const { return 0.5 * hs() * peak_wavenumber(); }
};

inline void validate(const JonswapSpec& spec) {
    if (!(spec.peak_period > 0.0) || !(spec.gamma >= 1.0) || !(spec.depth > 0.0)) {
        throw DomainError("jonswap: requires T_p > 0, gamma >= 1, depth > 0");
    }
    (void)spec.hs();
}

namespace detail {

// Unscaled JONSWAP shape g^2 w^-5 exp(-5/4 (wp/w)^4) gamma^r.
inline double jonswap_shape(double omega, double wp, double gamma, double gravity) {
    if (!(omega > 0.0)) {
        return 0.0;
    }
    const double sigma = omega <= wp ? 0.07 : 0.09;
    const double dw = (omega - wp) / (sigma * wp);
    const double r = std::exp(-0.5 * dw * dw);
    const double q = wp / omega;
    const double q4 = q * q * q * q;
    return gravity * gravity * std::pow(omega, -5.0) * std::exp(-1.25 * q4) * std::pow(gamma, r);
}

// Zeroth moment of the unscaled shape: Simpson over [0.2 wp, 20 wp] plus the
// analytic omega^-5 tail.
inline double jonswap_shape_m0(double wp, double gamma, double gravity) {
    const double lo = 0.2 * wp;
    const double hi = 20.0 * wp;
    constexpr int n = 40000;
    const double h = (hi - lo) / n;
    double acc = jonswap_shape(lo, wp, gamma, gravity) + jonswap_shape(hi, wp, gamma, gravity);
    for (int i = 1; i < n; ++i) {
        acc += (i % 2 ? 4.0 : 2.0) * jonswap_shape(lo + i * h, wp, gamma, gravity);
    }
    return acc * h / 3.0 + gravity * gravity * std::pow(hi, -4.0) / 4.0;
}

}  // namespace detail

/// Spectral density S(omega) in m^2 s/rad scaled so that the zeroth moment
/// equals Hs^2/16. The normalisation is computed once per instance.
class JonswapDensity {
  public:
    explicit JonswapDensity(const JonswapSpec& spec)
        : wp_(spec.peak_frequency()), gamma_(spec.gamma), gravity_(spec.gravity) {
        const double hs = spec.hs();
        scale_ = hs * hs / 16.0 / detail::jonswap_shape_m0(wp_, gamma_, gravity_);
    }
    double operator()(double omega) const {
        return scale_ * detail::jonswap_shape(omega, wp_, gamma_, gravity_);
    }

  private:
    double wp_, gamma_, gravity_, scale_;
};

inline double jonswap_density(const JonswapSpec& spec, double omega) {
    return JonswapDensity(spec)(omega);
}

/// Frequencies below and above the peak where S drops to fraction * S(omega_p).
inline std::pair<double, double> spectral_cutoffs(const JonswapSpec& spec, double fraction) {
    if (!(fraction > 0.0) || !(fraction < 1.0)) {
        throw DomainError("spectral_cutoffs: fraction must lie in (0, 1)");
    }
    const double wp = spec.peak_frequency();
    auto shape = [&](double w) { return detail::jonswap_shape(w, wp, spec.gamma, spec.gravity); };
    const double level = fraction * shape(wp);
    auto f = [&](double w) { return shape(w) - level; };

    auto bisect = [&](double inside, double outside) {
        for (int it = 0; it < 200 && std::abs(outside - inside) > 1e-15 * wp; ++it) {
            const double mid = 0.5 * (inside + outside);
            (f(mid) > 0.0 ? inside : outside) = mid;
        }
        return 0.5 * (inside + outside);
    };

    double above = wp * 1.1;
    while (f(above) > 0.0) {
        above = wp + 2.0 * (above - wp);
    }
    double below = wp / 1.1;
    while (f(below) > 0.0) {
        below *= 0.5;
    }
    return {bisect(wp, below), bisect(wp, above)};
}

/// Largest sensor spacing resolving wavelength L_min with two samples per wavelength.
inline double nyquist_spacing(double min_wavelength) {
    if (!(min_wavelength > 0.0)) {
        throw DomainError("nyquist_spacing: wavelength must be positive");
    }
    return min_wavelength / 2.0;
}

/// Random-phase linear sea drawn from the spectrum on equal-width bins over [omega_lo, omega_hi].
inline SeaStateSpec synthesize_jonswap_sea(const JonswapSpec& spec, int components, double omega_lo,
                                           double omega_hi, std::uint64_t seed) {
    validate(spec);
    if (components < 1 || !(omega_hi > omega_lo) || !(omega_lo > 0.0)) {
        throw DomainError("synthesize_jonswap_sea: invalid frequency band or component count");
    }
    SeaStateSpec sea;
    sea.depth = spec.depth;
    sea.gravity = spec.gravity;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
    const double dw = (omega_hi - omega_lo) / components;
    const JonswapDensity density(spec);
    for (int i = 0; i < components; ++i) {
        const double w = omega_lo + (i + 0.5) * dw;
        const double a = std::sqrt(2.0 * density(w) * dw);
        sea.components.push_back(make_component(a, w, phase(rng), spec.depth, spec.gravity));
    }
    return sea;
}

// --- prediction region -----------------------------------------------------

/// Sheared spacetime region c_high t + left <= x <= c_low t + right, 0 <= t <= t_max.
struct PredictionRegion {
    double c_g_high = 0.0;
    double c_g_low = 0.0;
    double x_offset_left = 0.0;
    double x_extent_right = 0.0;
    double t_max = 0.0;

    bool contains(double x, double t) const {
        return t >= 0.0 && t <= t_max && x >= c_g_high * t + x_offset_left &&
               x <= c_g_low * t + x_extent_right;
    }
};

inline std::pair<double, double> prediction_region_bounds(const PredictionRegion& region,
                                                          double t) {
    if (t < 0.0 || t > region.t_max) {
        throw DomainError("prediction_region_bounds: t outside [0, t_max]");
    }
    const double x_min = region.c_g_high * t + region.x_offset_left;
    const double x_max = region.c_g_low * t + region.x_extent_right;
    if (!(x_min < x_max)) {
        throw DomainError("prediction_region_bounds: empty region at this time");
    }
    return {x_min, x_max};
}

/// Region bounded by the fastest group leaving the measured strip after the last
/// snapshot and the slowest group entering it from the first one.
inline PredictionRegion prediction_region_from_snapshots(double c_g_high, double c_g_low,
                                                         double x_lo, double x_hi,
                                                         double t_first, double t_last,
                                                         double t_max) {
    PredictionRegion r{c_g_high, c_g_low, x_lo - c_g_high * t_last, x_hi - c_g_low * t_first,
                       t_max};
    if (!(c_g_high >= c_g_low) || !(c_g_low > 0.0)) {
        throw DomainError("prediction region: requires c_g_high >= c_g_low > 0");
    }
    (void)prediction_region_bounds(r, 0.0);
    (void)prediction_region_bounds(r, t_max);
    return r;
}

/// Limiting group velocities at the spectral cutoffs (high from the low-frequency cutoff).
inline std::pair<double, double> limiting_group_velocities(const JonswapSpec& spec,
                                                           double fraction) {
    const auto [w_lo, w_hi] = spectral_cutoffs(spec, fraction);
    return {group_velocity(w_lo, spec.depth, spec.gravity),
            group_velocity(w_hi, spec.depth, spec.gravity)};
}

}  // namespace wavepinn

#pragma once

// Surface similarity parameter on uniform grids.

#include <fftw3.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <mutex>
#include <string>
#include <vector>

#include "wavepinn/errors.hpp"

namespace wavepinn {

enum class Quantity { elevation, potential };

inline std::string to_string(Quantity q) { return q == Quantity::elevation ? "elevation" : "potential"; }

/// Samples on a uniform (t, x) grid; row i is time t0 + i dt, column j is x0 + j dx.
struct GridField {
    Eigen::MatrixXd values;  // nt x nx
    double x0 = 0.0, dx = 1.0;
    double t0 = 0.0, dt = 1.0;
    Quantity quantity = Quantity::elevation;
    double z = 0.0;  // depth of a potential slice

    Eigen::Index nt() const { return values.rows(); }
    Eigen::Index nx() const { return values.cols(); }
    double x(Eigen::Index j) const { return x0 + static_cast<double>(j) * dx; }
    double t(Eigen::Index i) const { return t0 + static_cast<double>(i) * dt; }

    void validate() const {
        if (nt() < 2 || nx() < 2) throw DomainError("grid field: needs at least 2 x 2 samples");
        if (!(dx > 0.0) || !(dt > 0.0)) throw DomainError("grid field: spacing must be positive");
        if (!values.allFinite()) throw DomainError("grid field: non-finite values");
    }

    bool same_grid(const GridField& o, double tol = 1e-12) const {
        return nt() == o.nt() && nx() == o.nx() && std::abs(x0 - o.x0) <= tol && std::abs(t0 - o.t0) <= tol &&
               std::abs(dx - o.dx) <= tol * std::max(1.0, dx) && std::abs(dt - o.dt) <= tol * std::max(1.0, dt);
    }
};

/// Scaling applied to the forward DFT; the SSP does not depend on it.
enum class DftScaling { none, unitary, inverse_n };

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Forward DFT of real data laid out row-major with the given dimensions.
inline std::vector<std::complex<double>> dft(const std::vector<double>& data, const std::vector<int>& dims,
                                             DftScaling scaling) {
    const std::size_t n = data.size();
    std::vector<std::complex<double>> in(data.begin(), data.end()), out(n);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), reinterpret_cast<fftw_complex*>(in.data()),
                             reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD, FFTW_ESTIMATE);
    }
    if (!plan) throw NumericError("dft: planner failed");
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    const double s = scaling == DftScaling::none      ? 1.0
                     : scaling == DftScaling::unitary ? 1.0 / std::sqrt(static_cast<double>(n))
                                                      : 1.0 / static_cast<double>(n);
    if (s != 1.0) {
        for (auto& c : out) c *= s;
    }
    return out;
}

inline double ssp_spectra(const std::vector<std::complex<double>>& a, const std::vector<std::complex<double>>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += std::norm(a[i] - b[i]);
        na += std::norm(a[i]);
        nb += std::norm(b[i]);
    }
    const double denom = std::sqrt(na) + std::sqrt(nb);
    if (denom == 0.0) return 0.0;
    return std::sqrt(diff) / denom;
}

inline std::vector<double> row_major(const Eigen::MatrixXd& m) {
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.data(), m.rows(),
                                                                                        m.cols()) = m;
    return out;
}

}  // namespace detail

/// ||F(truth) - F(est)|| / (||F(truth)|| + ||F(est)||) over the 2D DFT. Two zero fields give 0.
inline double ssp_2d(const GridField& truth, const GridField& estimate, DftScaling scaling = DftScaling::none) {
    truth.validate();
    estimate.validate();
    if (!truth.same_grid(estimate)) throw DomainError("ssp_2d: grids differ");
    const std::vector<int> dims{static_cast<int>(truth.nt()), static_cast<int>(truth.nx())};
    return detail::ssp_spectra(detail::dft(detail::row_major(truth.values), dims, scaling),
                               detail::dft(detail::row_major(estimate.values), dims, scaling));
}

/// One-dimensional analogue for a time series or spatial slice.
inline double ssp_1d(const Eigen::Ref<const Eigen::VectorXd>& truth, const Eigen::Ref<const Eigen::VectorXd>& estimate,
                     DftScaling scaling = DftScaling::none) {
    if (truth.size() != estimate.size() || truth.size() < 2) throw DomainError("ssp_1d: series lengths differ or < 2");
    if (!truth.allFinite() || !estimate.allFinite()) throw DomainError("ssp_1d: non-finite values");
    const std::vector<int> dims{static_cast<int>(truth.size())};
    const std::vector<double> a(truth.data(), truth.data() + truth.size());
    const std::vector<double> b(estimate.data(), estimate.data() + estimate.size());
    return detail::ssp_spectra(detail::dft(a, dims, scaling), detail::dft(b, dims, scaling));
}

/// Same ratio over the raw samples (equal to the spectral form by Parseval).
inline double ssp_direct(const Eigen::Ref<const Eigen::MatrixXd>& truth, const Eigen::Ref<const Eigen::MatrixXd>& estimate) {
    const double denom = truth.norm() + estimate.norm();
    return denom == 0.0 ? 0.0 : (truth - estimate).norm() / denom;
}

/// Masked variant: entries where `mask` is zero are excluded from both fields
/// (set to zero) before the transform.
inline double ssp_2d_masked(const GridField& truth, const GridField& estimate, const Eigen::MatrixXd& mask) {
    if (mask.rows() != truth.nt() || mask.cols() != truth.nx()) throw DomainError("ssp_2d_masked: mask shape");
    GridField a = truth, b = estimate;
    a.values = a.values.cwiseProduct(mask);
    b.values = b.values.cwiseProduct(mask);
    return ssp_2d(a, b);
}

struct ErrorSummary {
    double ssp = 0.0;
    double rmse = 0.0;
    double max_abs = 0.0;
};

inline ErrorSummary summarize_error(const GridField& truth, const GridField& estimate) {
    ErrorSummary s;
    s.ssp = ssp_2d(truth, estimate);
    const Eigen::MatrixXd d = truth.values - estimate.values;
    s.rmse = std::sqrt(d.squaredNorm() / static_cast<double>(d.size()));
    s.max_abs = d.cwiseAbs().maxCoeff();
    return s;
}

}  // namespace wavepinn

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "wavepinn/autodiff/tape.hpp"
#include "wavepinn/errors.hpp"
#include "wavepinn/wave_theory.hpp"

namespace wavepinn::nn {

using ad::Index;
using ad::NodeId;

struct AxisRange {
    double lo = -1.0;
    double hi = 1.0;

    double normalize(double v) const { return (2.0 * v - (hi + lo)) / (hi - lo); }
    double denormalize(double u) const { return 0.5 * ((hi - lo) * u + (hi + lo)); }
    double width() const { return hi - lo; }
};

/// Static box of the computational domain; z spans [-d, 1.1 max(eta_m)].
struct DomainBox {
    AxisRange x;
    AxisRange t;
    AxisRange z;
};

inline DomainBox make_domain_box(AxisRange x, AxisRange t, double depth, double max_eta) {
    if (!(x.hi > x.lo) || !(t.hi > t.lo) || !(depth > 0.0)) {
        throw DomainError("domain box: empty x/t range or non-positive depth");
    }
    const double top = 1.1 * max_eta;
    if (!(top > -depth)) {
        throw DomainError("domain box: surface range lies below the sea bed");
    }
    return {x, t, AxisRange{-depth, top}};
}

/// Affine map of physical coordinates onto [-1, 1] per axis, applied to every jet slot.
inline NodeId normalize(ad::Tape& tape, NodeId physical, std::span<const AxisRange> ranges) {
    const Index n = static_cast<Index>(ranges.size());
    Eigen::VectorXd scale(n), shift(n);
    for (Index i = 0; i < n; ++i) {
        scale[i] = 2.0 / ranges[i].width();
        shift[i] = -(ranges[i].hi + ranges[i].lo) / ranges[i].width();
    }
    return tape.scale_shift(physical, scale, shift);
}

enum class FourierLayout {
    replicate,  // row i holds the i-th evenly spaced value in every column
    staggered,  // column j is the evenly spaced list rotated by j rows
};

struct EmbeddingSpec {
    bool enabled = true;
    int n_f = 10;
    double init_lo = -0.4;
    double init_hi = 0.4;
    FourierLayout layout = FourierLayout::replicate;

    int output_dim(int n_v) const { return enabled ? 2 * n_f + n_v : n_v; }
};

struct MlpSpec {
    int hidden_layers = 4;
    int width = 200;
    std::string activation = "tanh";
};

struct NetworkSpec {
    int inputs = 2;
    EmbeddingSpec embedding;
    MlpSpec mlp;
};

/// mu(v) = [sin(2 pi F v); cos(2 pi F v); v] on a normalized input node.
inline NodeId embed(ad::Tape& tape, NodeId normalized, const ad::ParamRef& f_matrix) {
    if (f_matrix.cols != tape.out(normalized).rows()) {
        throw ConstructionError("embed: F has the wrong number of columns");
    }
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const NodeId arg = tape.affine(normalized, f_matrix, nullptr, two_pi);
    const NodeId s = tape.sin(arg);
    const NodeId c = tape.cos(arg);
    return tape.concat({s, c, normalized});
}

/// Fourier-embedded tanh MLP with a scalar linear output. The network owns no
/// storage: it describes a contiguous segment [offset, offset + size) of an
/// external flat parameter vector.
///
/// Segment layout: F (n_f x n_v, column-major) if the embedding is enabled,
/// then for each layer its weight (out x in, column-major) followed by its bias.
class FieldNetwork {
  public:
    struct Layer {
        Index weight_offset;
        Index bias_offset;
        Index rows;
        Index cols;
    };

    FieldNetwork() = default;

    FieldNetwork(NetworkSpec spec, Index offset) : spec_(std::move(spec)), offset_(offset) {
        if (spec_.inputs < 1 || spec_.inputs > 3 || spec_.mlp.hidden_layers < 1 || spec_.mlp.width < 1 ||
            (spec_.embedding.enabled && spec_.embedding.n_f < 1)) {
            throw ConstructionError("network: layer sizes must be positive");
        }
        activation_ = ad::parse_primitive(spec_.mlp.activation);
        Index cursor = offset_;
        if (spec_.embedding.enabled) {
            f_offset_ = cursor;
            cursor += static_cast<Index>(spec_.embedding.n_f) * spec_.inputs;
        }
        Index fan_in = spec_.embedding.output_dim(spec_.inputs);
        for (int l = 0; l <= spec_.mlp.hidden_layers; ++l) {
            const Index fan_out = l == spec_.mlp.hidden_layers ? 1 : spec_.mlp.width;
            layers_.push_back({cursor, cursor + fan_out * fan_in, fan_out, fan_in});
            cursor += fan_out * fan_in + fan_out;
            fan_in = fan_out;
        }
        size_ = cursor - offset_;
    }

    const NetworkSpec& spec() const { return spec_; }
    Index offset() const { return offset_; }
    Index size() const { return size_; }
    int inputs() const { return spec_.inputs; }
    const std::vector<Layer>& layers() const { return layers_; }
    Index embedding_offset() const { return f_offset_; }

    /// Fourier matrix from evenly spaced values, Xavier-uniform weights, zero biases.
    void initialize(std::span<double> params, std::mt19937_64& rng) const {
        check_span(params);
        if (spec_.embedding.enabled) {
            const int nf = spec_.embedding.n_f;
            Eigen::Map<Eigen::MatrixXd> f(params.data() + f_offset_, nf, spec_.inputs);
            Eigen::VectorXd values = Eigen::VectorXd::LinSpaced(nf, spec_.embedding.init_lo, spec_.embedding.init_hi);
            if (nf == 1) values[0] = 0.5 * (spec_.embedding.init_lo + spec_.embedding.init_hi);
            for (int j = 0; j < spec_.inputs; ++j) {
                for (int i = 0; i < nf; ++i) {
                    const int src = spec_.embedding.layout == FourierLayout::replicate ? i : (i + j) % nf;
                    f(i, j) = values[src];
                }
            }
        }
        for (const Layer& l : layers_) {
            const double bound = std::sqrt(6.0 / static_cast<double>(l.rows + l.cols));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (Index i = 0; i < l.rows * l.cols; ++i) params[l.weight_offset + i] = dist(rng);
            for (Index i = 0; i < l.rows; ++i) params[l.bias_offset + i] = 0.0;
        }
    }

    /// Records the network on an already normalized input node. With
    /// `grad_base >= 0`, parameter gradients are accumulated at grad_base + position.
    NodeId build(ad::Tape& tape, NodeId normalized, const double* params, Index grad_base) const {
        if (tape.out(normalized).rows() != spec_.inputs) {
            throw ConstructionError("network: input dimension mismatch");
        }
        auto ref = [&](Index off, Index rows, Index cols) {
            return ad::ParamRef{params + off, rows, cols, grad_base < 0 ? -1 : grad_base + off};
        };
        NodeId h = normalized;
        if (spec_.embedding.enabled) {
            h = embed(tape, h, ref(f_offset_, spec_.embedding.n_f, spec_.inputs));
        }
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Layer& L = layers_[l];
            const ad::ParamRef w = ref(L.weight_offset, L.rows, L.cols);
            const ad::ParamRef b = ref(L.bias_offset, L.rows, 1);
            h = tape.affine(h, w, &b);
            if (l + 1 < layers_.size()) h = tape.unary(activation_, h);
        }
        return h;
    }

  private:
    void check_span(std::span<double> params) const {
        if (static_cast<Index>(params.size()) < offset_ + size_) {
            throw ConstructionError("network: parameter vector too short");
        }
    }

    NetworkSpec spec_;
    ad::Primitive activation_ = ad::Primitive::tanh;
    Index offset_ = 0;
    Index size_ = 0;
    Index f_offset_ = -1;
    std::vector<Layer> layers_;
};

/// Network paired with its own flat parameter vector and input ranges.
/// Used for the low-capacity constraint fields and as a building block of PinnModel.
struct StandaloneNetwork {
    FieldNetwork net;
    std::vector<AxisRange> ranges;
    Eigen::VectorXd params;

    StandaloneNetwork() = default;
    StandaloneNetwork(NetworkSpec spec, std::vector<AxisRange> input_ranges, std::uint64_t seed)
        : net(std::move(spec), 0), ranges(std::move(input_ranges)), params(Eigen::VectorXd::Zero(net.size())) {
        if (static_cast<int>(ranges.size()) != net.inputs()) {
            throw ConstructionError("network: range count does not match input dimension");
        }
        std::mt19937_64 rng(seed);
        net.initialize(std::span<double>(params.data(), params.size()), rng);
    }

    NodeId build(ad::Tape& tape, NodeId physical, bool trainable) const {
        const NodeId u = normalize(tape, physical, ranges);
        return net.build(tape, u, params.data(), trainable ? 0 : -1);
    }
};

struct ModelSpec {
    NetworkSpec eta{2, {}, {}};
    NetworkSpec phi{3, {}, {}};
    std::uint64_t seed = 0;
};

/// Paper-sized defaults: 4 hidden layers of 200 neurons for both networks.
inline ModelSpec full_scale_model_spec(std::uint64_t seed = 0) {
    ModelSpec s;
    s.eta.inputs = 2;
    s.phi.inputs = 3;
    s.seed = seed;
    return s;
}

/// Desk-scale defaults: 3 hidden layers of 64 neurons.
inline ModelSpec desk_scale_model_spec(std::uint64_t seed = 0) {
    ModelSpec s = full_scale_model_spec(seed);
    s.eta.mlp = {3, 64, "tanh"};
    s.phi.mlp = {3, 64, "tanh"};
    return s;
}

/// Elevation network over (x, t) and potential network over (x, t, z), each
/// with its own Fourier embedding, sharing one flat parameter vector
/// (elevation segment first).
class PinnModel {
  public:
    PinnModel() = default;

    PinnModel(ModelSpec spec, DomainBox box) : spec_(std::move(spec)), box_(box) {
        if (spec_.eta.inputs != 2 || spec_.phi.inputs != 3) {
            throw ConstructionError("model: elevation net takes (x,t), potential net takes (x,t,z)");
        }
        eta_ = FieldNetwork(spec_.eta, 0);
        phi_ = FieldNetwork(spec_.phi, eta_.size());
        params_ = Eigen::VectorXd::Zero(eta_.size() + phi_.size());
    }

    const ModelSpec& spec() const { return spec_; }
    const DomainBox& box() const { return box_; }
    const FieldNetwork& eta_net() const { return eta_; }
    const FieldNetwork& phi_net() const { return phi_; }
    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }
    Index size() const { return params_.size(); }

    std::array<AxisRange, 2> eta_ranges() const { return {box_.x, box_.t}; }
    std::array<AxisRange, 3> phi_ranges() const { return {box_.x, box_.t, box_.z}; }

    /// Raw elevation output N(x,t) on a physical (x, t) coordinate node.
    NodeId eta_raw(ad::Tape& tape, NodeId xt, bool trainable = true) const {
        const auto r = eta_ranges();
        const NodeId u = normalize(tape, xt, r);
        return eta_.build(tape, u, params_.data(), trainable ? 0 : -1);
    }

    /// Potential on a physical (x, t, z) coordinate node.
    NodeId phi(ad::Tape& tape, NodeId xtz, bool trainable = true) const {
        const auto r = phi_ranges();
        const NodeId u = normalize(tape, xtz, r);
        return phi_.build(tape, u, params_.data(), trainable ? 0 : -1);
    }

    double eval_eta(double x, double t) const { return eta_jet(x, t).value; }
    double eval_phi(double x, double t, double z) const { return phi_jet(x, t, z).value; }

    InputJet eta_jet(double x, double t) const {
        check_finite({x, t, 0.0});
        ad::Tape tape;
        Eigen::Matrix<double, 2, 1> p(x, t);
        const NodeId in = tape.input(ad::coordinates(p, ad::kFirstXT));
        return to_input_jet(tape.out(eta_raw(tape, in, false)));
    }

    InputJet phi_jet(double x, double t, double z) const {
        check_finite({x, t, z});
        ad::Tape tape;
        Eigen::Vector3d p(x, t, z);
        const NodeId in = tape.input(ad::coordinates(p, ad::kAllSlots));
        return to_input_jet(tape.out(phi(tape, in, false)));
    }

    /// Values of N at the columns of a 2 x n matrix.
    Eigen::VectorXd eval_eta(const Eigen::Ref<const Eigen::MatrixXd>& xt) const {
        ad::Tape tape;
        const NodeId in = tape.input(ad::coordinates(xt, ad::kValueOnly));
        return tape.out(eta_raw(tape, in, false)).value().row(0).transpose();
    }

    Eigen::VectorXd eval_phi(const Eigen::Ref<const Eigen::MatrixXd>& xtz) const {
        ad::Tape tape;
        const NodeId in = tape.input(ad::coordinates(xtz, ad::kValueOnly));
        return tape.out(phi(tape, in, false)).value().row(0).transpose();
    }

    static InputJet to_input_jet(const ad::JetBatch& j) {
        InputJet r;
        r.value = j.value()(0, 0);
        if (j.has(ad::Slot::dx)) r.d_x = j.slot(ad::Slot::dx)(0, 0);
        if (j.has(ad::Slot::dt)) r.d_t = j.slot(ad::Slot::dt)(0, 0);
        if (j.has(ad::Slot::dz)) r.d_z = j.slot(ad::Slot::dz)(0, 0);
        if (j.has(ad::Slot::dxx)) r.d_xx = j.slot(ad::Slot::dxx)(0, 0);
        if (j.has(ad::Slot::dzz)) r.d_zz = j.slot(ad::Slot::dzz)(0, 0);
        return r;
    }

  private:
    static void check_finite(std::initializer_list<double> v) {
        for (double d : v) {
            if (!std::isfinite(d)) throw NumericError("model evaluation: non-finite input coordinate");
        }
    }

    ModelSpec spec_;
    DomainBox box_{};
    FieldNetwork eta_;
    FieldNetwork phi_;
    Eigen::VectorXd params_;
};

/// Deterministic initialization: identical spec, box and seed give bit-identical parameters.
inline PinnModel init_model(const ModelSpec& spec, const DomainBox& box) {
    PinnModel model(spec, box);
    std::mt19937_64 rng(spec.seed);
    std::span<double> all(model.params().data(), static_cast<std::size_t>(model.size()));
    model.eta_net().initialize(all, rng);
    model.phi_net().initialize(all, rng);
    return model;
}

}  // namespace wavepinn::nn

#pragma once

// Batched forward-mode jets with a reverse sweep for parameter gradients.
//
// Every node holds a JetBatch: the node's value together with its partials
// with respect to the input coordinates (x, t, z) up to the diagonal second
// order. Building the graph runs the forward jet propagation; `backward`
// then differentiates selected scalar nodes with respect to every trainable
// parameter referenced by the graph, including the dependence that flows
// through the derivative slots.

#include <Eigen/Dense>
#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavepinn/autodiff/jet_batch.hpp"
#include "wavepinn/errors.hpp"

namespace wavepinn::ad {

using NodeId = int;

/// Column-major parameter block inside a flat parameter vector.
struct ParamRef {
    const double* data = nullptr;
    Index rows = 0;
    Index cols = 0;
    Index grad_offset = -1;  // < 0: frozen, no gradient

    auto matrix() const { return Eigen::Map<const Eigen::MatrixXd>(data, rows, cols); }
    bool trainable() const { return grad_offset >= 0; }
};

/// How the surface elevation enters the z-coordinate of the potential.
///  partial: Phi's input partials are taken with (x, t, z) independent and then
///           evaluated at z = eta; only the value carries eta's dependence.
///  total:   z = eta(x, t) is substituted before differentiating, so d/dx and
///           d/dt include the Phi_z * eta_x and Phi_z * eta_t terms.
enum class SurfaceCoupling { partial, total };

enum class Primitive { tanh, sin, cos, exp, square };

/// Closed set of elementwise primitives; anything else is rejected.
inline Primitive parse_primitive(std::string_view name) {
    if (name == "tanh") return Primitive::tanh;
    if (name == "sin") return Primitive::sin;
    if (name == "cos") return Primitive::cos;
    if (name == "exp") return Primitive::exp;
    if (name == "square") return Primitive::square;
    throw ConstructionError("unsupported primitive '" + std::string(name) + "'");
}

struct Seed {
    NodeId node;
    double weight;
};

class Tape {
  public:
    Tape() = default;

    // --- leaves ----------------------------------------------------------

    NodeId input(JetBatch jet) { return push(Node{Op::leaf, {}, std::move(jet)}); }
    NodeId constant(JetBatch jet) { return input(std::move(jet)); }

    // --- linear ------------------------------------------------------------

    /// Rowwise affine map out = scale .* a + shift, the same scale applied to every slot.
    NodeId scale_shift(NodeId a, const Eigen::VectorXd& scale, const Eigen::VectorXd& shift) {
        const JetBatch& in = out(a);
        if (scale.size() != in.rows() || shift.size() != in.rows()) {
            throw ConstructionError("scale_shift: size mismatch");
        }
        JetBatch y(in.rows(), in.batch(), in.mask());
        y.data().noalias() = scale.asDiagonal() * in.data();
        y.value().colwise() += shift;
        Node n{Op::scale_shift, {a}, std::move(y)};
        n.vec0 = scale;
        return push(std::move(n));
    }

    /// out = scale * W a + b with trainable (or frozen) W, b.
    NodeId affine(NodeId a, const ParamRef& weight, const ParamRef* bias = nullptr,
                  double scale = 1.0) {
        const JetBatch& in = out(a);
        if (weight.cols != in.rows() || (bias && (bias->rows != weight.rows || bias->cols != 1))) {
            throw ConstructionError("affine: shape mismatch");
        }
        JetBatch y(weight.rows, in.batch(), in.mask());
        y.data().noalias() = scale * weight.matrix() * in.data();
        if (bias) {
            y.value().colwise() += bias->matrix().col(0);
        }
        Node n{Op::affine, {a}, std::move(y)};
        n.weight = weight;
        n.has_bias = bias != nullptr;
        if (bias) {
            n.bias = *bias;
        }
        n.scalar = scale;
        n.requires_grad = weight.trainable() || (bias && bias->trainable());
        return push(std::move(n));
    }

    /// out = W a + b with constant coefficients.
    NodeId affine(NodeId a, const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias) {
        const JetBatch& in = out(a);
        if (weight.cols() != in.rows() || bias.size() != weight.rows()) {
            throw ConstructionError("affine: shape mismatch");
        }
        JetBatch y(weight.rows(), in.batch(), in.mask());
        y.data().noalias() = weight * in.data();
        y.value().colwise() += bias;
        Node n{Op::affine_const, {a}, std::move(y)};
        n.mat0 = weight;
        return push(std::move(n));
    }

    /// out = alpha a + beta b + shift, slotwise.
    NodeId lincomb(NodeId a, double alpha, NodeId b, double beta, double shift = 0.0) {
        const JetBatch& ia = out(a);
        const JetBatch& ib = out(b);
        check_same_shape(ia, ib, "lincomb");
        JetBatch y(ia.rows(), ia.batch(), ia.mask() | ib.mask());
        for_each_slot(y.mask(), [&](Slot s) {
            auto ys = y.slot(s);
            if (ia.has(s)) ys += alpha * ia.slot(s);
            if (ib.has(s)) ys += beta * ib.slot(s);
        });
        y.value().array() += shift;
        Node n{Op::lincomb, {a, b}, std::move(y)};
        n.scalar = alpha;
        n.scalar2 = beta;
        return push(std::move(n));
    }

    NodeId add(NodeId a, NodeId b) { return lincomb(a, 1.0, b, 1.0); }
    NodeId sub(NodeId a, NodeId b) { return lincomb(a, 1.0, b, -1.0); }

    /// out = alpha a + shift.
    NodeId scale(NodeId a, double alpha, double shift = 0.0) {
        const JetBatch& in = out(a);
        return scale_shift(a, Eigen::VectorXd::Constant(in.rows(), alpha),
                           Eigen::VectorXd::Constant(in.rows(), shift));
    }

    // --- nonlinear -------------------------------------------------------

    NodeId unary(std::string_view name, NodeId a) { return unary(parse_primitive(name), a); }

    NodeId unary(Primitive f, NodeId a) {
        const JetBatch& in = out(a);
        JetBatch y(in.rows(), in.batch(), in.mask());
        const auto av = in.value().array();
        const int order = has_second(in.mask()) ? 2 : (has_first(in.mask()) ? 1 : 0);
        const Derivs d = derivs(f, av, order);
        y.value().array() = d.f0;
        for (Slot s : kFirstOrder) {
            if (in.has(s)) y.slot(s).array() = d.f1 * in.slot(s).array();
        }
        for (Slot s : kSecondOrder) {
            if (!in.has(s)) continue;
            auto ys = y.slot(s).array();
            ys = d.f1 * in.slot(s).array();
            const Slot first = first_order_of(s);
            if (in.has(first)) ys += d.f2 * in.slot(first).array().square();
        }
        Node n{Op::unary, {a}, std::move(y)};
        n.primitive = f;
        return push(std::move(n));
    }

    NodeId tanh(NodeId a) { return unary(Primitive::tanh, a); }
    NodeId sin(NodeId a) { return unary(Primitive::sin, a); }
    NodeId cos(NodeId a) { return unary(Primitive::cos, a); }
    NodeId exp(NodeId a) { return unary(Primitive::exp, a); }
    NodeId square(NodeId a) { return unary(Primitive::square, a); }

    /// Elementwise product.
    NodeId mul(NodeId a, NodeId b) {
        const JetBatch& ia = out(a);
        const JetBatch& ib = out(b);
        check_same_shape(ia, ib, "mul");
        JetBatch y(ia.rows(), ia.batch(), ia.mask() | ib.mask());
        const auto av = ia.value().array();
        const auto bv = ib.value().array();
        y.value().array() = av * bv;
        for (Slot s : kFirstOrder) {
            if (!y.has(s)) continue;
            auto ys = y.slot(s).array();
            if (ia.has(s)) ys += ia.slot(s).array() * bv;
            if (ib.has(s)) ys += av * ib.slot(s).array();
        }
        for (Slot s : kSecondOrder) {
            if (!y.has(s)) continue;
            auto ys = y.slot(s).array();
            if (ia.has(s)) ys += ia.slot(s).array() * bv;
            if (ib.has(s)) ys += av * ib.slot(s).array();
            const Slot f = first_order_of(s);
            if (ia.has(f) && ib.has(f)) ys += 2.0 * ia.slot(f).array() * ib.slot(f).array();
        }
        return push(Node{Op::mul, {a, b}, std::move(y)});
    }

    /// Elementwise clamp to [lo, hi]; every slot is zeroed where the bound is active.
    NodeId clamp(NodeId a, double lo, double hi) {
        const JetBatch& in = out(a);
        JetBatch y(in.rows(), in.batch(), in.mask());
        const auto v = in.value().array();
        Eigen::MatrixXd inside = ((v > lo) && (v < hi)).cast<double>().matrix();
        y.value() = v.max(lo).min(hi).matrix();
        for_each_slot(in.mask(), [&](Slot s) {
            if (s != Slot::value) y.slot(s) = in.slot(s).cwiseProduct(inside);
        });
        Node n{Op::clamp, {a}, std::move(y)};
        n.mat0 = std::move(inside);
        return push(std::move(n));
    }

    // --- structural ------------------------------------------------------

    /// Row-wise concatenation; slots missing from a part are zero.
    NodeId concat(std::initializer_list<NodeId> parts) {
        return concat(std::span<const NodeId>(parts.begin(), parts.size()));
    }

    NodeId concat(std::span<const NodeId> parts) {
        if (parts.empty()) throw ConstructionError("concat: no parts");
        Index rows = 0;
        SlotMask mask = 0;
        const Index batch = out(parts[0]).batch();
        for (NodeId p : parts) {
            const JetBatch& in = out(p);
            if (in.batch() != batch) throw ConstructionError("concat: batch mismatch");
            rows += in.rows();
            mask |= in.mask();
        }
        JetBatch y(rows, batch, mask);
        Index r0 = 0;
        for (NodeId p : parts) {
            const JetBatch& in = out(p);
            for_each_slot(in.mask(), [&](Slot s) { y.slot(s).middleRows(r0, in.rows()) = in.slot(s); });
            r0 += in.rows();
        }
        Node n{Op::concat, {}, std::move(y)};
        n.inputs.assign(parts.begin(), parts.end());
        return push(std::move(n));
    }

    /// Value-only batch holding one derivative slot of `a`.
    NodeId slot(NodeId a, Slot s) {
        const JetBatch& in = out(a);
        JetBatch y(in.rows(), in.batch(), kValueOnly);
        y.value() = in.slot(s);
        Node n{Op::slot, {a}, std::move(y)};
        n.slot = s;
        return push(std::move(n));
    }

    /// Re-seed a one-row elevation jet as the z-coordinate of a potential input.
    NodeId lift_z(NodeId eta, SurfaceCoupling coupling) {
        const JetBatch& in = out(eta);
        if (in.rows() != 1) throw ConstructionError("lift_z: expected a single row");
        JetBatch y(1, in.batch(), kFirstXTZ);
        y.value() = in.value();
        y.slot(Slot::dz).setOnes();
        if (coupling == SurfaceCoupling::total) {
            if (in.has(Slot::dx)) y.slot(Slot::dx) = in.slot(Slot::dx);
            if (in.has(Slot::dt)) y.slot(Slot::dt) = in.slot(Slot::dt);
        }
        Node n{Op::lift_z, {eta}, std::move(y)};
        n.coupling = coupling;
        return push(std::move(n));
    }

    /// Scalar factor * sum of all values of `a`.
    NodeId sum(NodeId a, double factor = 1.0) {
        const JetBatch& in = out(a);
        JetBatch y(1, 1, kValueOnly);
        y.value()(0, 0) = factor * in.value().sum();
        Node n{Op::sum, {a}, std::move(y)};
        n.scalar = factor;
        return push(std::move(n));
    }

    NodeId mean(NodeId a) {
        const JetBatch& in = out(a);
        const double count = static_cast<double>(in.rows() * in.batch());
        if (count == 0) throw ConstructionError("mean: empty batch");
        return sum(a, 1.0 / count);
    }

    // --- access ----------------------------------------------------------

    const JetBatch& out(NodeId id) const {
        if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
            throw ConstructionError("tape: invalid node id");
        }
        return nodes_[id].out;
    }

    double scalar(NodeId id) const { return out(id).value()(0, 0); }

    std::size_t size() const { return nodes_.size(); }

    /// Accumulates sum_k weight_k * d(node_k)/d(theta) into `grad`; seed nodes must be 1x1.
    void backward(std::span<const Seed> seeds, Eigen::Ref<Eigen::VectorXd> grad) {
        for (auto& n : nodes_) n.adj = JetBatch{};
        for (const Seed& sd : seeds) {
            Node& n = nodes_.at(sd.node);
            if (n.out.rows() != 1 || n.out.batch() != 1) {
                throw ConstructionError("backward: seed node is not a scalar");
            }
            adjoint(sd.node).value()(0, 0) += sd.weight;
        }
        for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || n.adj.empty()) continue;
            propagate(id, grad);
            n.adj = JetBatch{};
        }
    }

    void backward(NodeId node, Eigen::Ref<Eigen::VectorXd> grad, double weight = 1.0) {
        const Seed s{node, weight};
        backward(std::span<const Seed>(&s, 1), grad);
    }

  private:
    enum class Op { leaf, scale_shift, affine, affine_const, lincomb, unary, mul, clamp, concat, slot, lift_z, sum };

    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        JetBatch out;
        JetBatch adj{};
        bool requires_grad = false;
        ParamRef weight{};
        ParamRef bias{};
        bool has_bias = false;
        double scalar = 1.0;
        double scalar2 = 1.0;
        Primitive primitive = Primitive::tanh;
        Slot slot = Slot::value;
        SurfaceCoupling coupling = SurfaceCoupling::partial;
        Eigen::VectorXd vec0;
        Eigen::MatrixXd mat0;
    };

    struct Derivs {
        Eigen::ArrayXXd f0, f1, f2, f3;
    };

    static bool has_first(SlotMask m) {
        return m & (bit(Slot::dx) | bit(Slot::dt) | bit(Slot::dz) | bit(Slot::dxx) | bit(Slot::dzz));
    }
    static bool has_second(SlotMask m) { return m & (bit(Slot::dxx) | bit(Slot::dzz)); }

    template <class F>
    static void for_each_slot(SlotMask mask, F&& f) {
        for (int s = 0; s < kSlotCount; ++s) {
            if ((mask >> s) & 1u) f(static_cast<Slot>(s));
        }
    }

    static void check_same_shape(const JetBatch& a, const JetBatch& b, const char* what) {
        if (a.rows() != b.rows() || a.batch() != b.batch()) {
            throw ConstructionError(std::string(what) + ": shape mismatch");
        }
    }

    // f and its derivatives up to `order` (at most 3).
    // tanh through the vectorised exp; absolute error stays near one ulp.
    template <class A>
    static Eigen::ArrayXXd fast_tanh(const A& a) {
        const Eigen::ArrayXXd e = (-2.0 * a.abs()).exp();
        return a.sign() * (1.0 - e) / (1.0 + e);
    }

    // `value`, when given, is f(a) from the forward pass.
    template <class A>
    static Derivs derivs(Primitive f, const A& a, int order, const Eigen::ArrayXXd* value = nullptr) {
        Derivs d;
        switch (f) {
            case Primitive::tanh: {
                d.f0 = value ? *value : fast_tanh(a);
                if (order >= 1) d.f1 = 1.0 - d.f0.square();
                if (order >= 2) d.f2 = -2.0 * d.f0 * d.f1;
                if (order >= 3) d.f3 = d.f1 * (4.0 * d.f0.square() - 2.0 * d.f1);
                break;
            }
            case Primitive::sin: {
                d.f0 = value ? *value : Eigen::ArrayXXd(a.sin());
                if (order >= 1) d.f1 = a.cos();
                if (order >= 2) d.f2 = -d.f0;
                if (order >= 3) d.f3 = -d.f1;
                break;
            }
            case Primitive::cos: {
                d.f0 = value ? *value : Eigen::ArrayXXd(a.cos());
                if (order >= 1) d.f1 = -a.sin();
                if (order >= 2) d.f2 = -d.f0;
                if (order >= 3) d.f3 = -d.f1;
                break;
            }
            case Primitive::exp: {
                d.f0 = value ? *value : Eigen::ArrayXXd(a.exp());
                if (order >= 1) d.f1 = d.f0;
                if (order >= 2) d.f2 = d.f0;
                if (order >= 3) d.f3 = d.f0;
                break;
            }
            case Primitive::square: {
                d.f0 = a.square();
                if (order >= 1) d.f1 = 2.0 * a;
                if (order >= 2) d.f2 = Eigen::ArrayXXd::Constant(a.rows(), a.cols(), 2.0);
                if (order >= 3) d.f3 = Eigen::ArrayXXd::Zero(a.rows(), a.cols());
                break;
            }
        }
        return d;
    }

    NodeId push(Node n) {
        if (n.op != Op::affine && n.op != Op::leaf) {
            for (NodeId in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
        } else if (n.op == Op::affine) {
            n.requires_grad = n.requires_grad || nodes_[n.inputs[0]].requires_grad;
        }
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    JetBatch& adjoint(NodeId id) {
        Node& n = nodes_[id];
        if (n.adj.empty()) n.adj = JetBatch(n.out.rows(), n.out.batch(), n.out.mask());
        return n.adj;
    }

    bool wants(NodeId id) const { return nodes_[id].requires_grad; }

    void propagate(NodeId id, Eigen::Ref<Eigen::VectorXd> grad) {
        Node& n = nodes_[id];
        const JetBatch& g = n.adj;
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::scale_shift: {
                const NodeId a = n.inputs[0];
                if (wants(a)) adjoint(a).data().noalias() += n.vec0.asDiagonal() * g.data();
                break;
            }
            case Op::affine: {
                const NodeId a = n.inputs[0];
                const JetBatch& in = nodes_[a].out;
                if (n.weight.trainable()) {
                    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + n.weight.grad_offset, n.weight.rows,
                                                   n.weight.cols);
                    gw.noalias() += n.scalar * g.data() * in.data().transpose();
                }
                if (n.has_bias && n.bias.trainable()) {
                    grad.segment(n.bias.grad_offset, n.bias.rows) += g.value().rowwise().sum();
                }
                if (wants(a)) {
                    adjoint(a).data().noalias() += n.scalar * n.weight.matrix().transpose() * g.data();
                }
                break;
            }
            case Op::affine_const: {
                const NodeId a = n.inputs[0];
                if (wants(a)) adjoint(a).data().noalias() += n.mat0.transpose() * g.data();
                break;
            }
            case Op::lincomb: {
                const double coef[2] = {n.scalar, n.scalar2};
                for (int k = 0; k < 2; ++k) {
                    const NodeId a = n.inputs[k];
                    if (!wants(a)) continue;
                    JetBatch& ga = adjoint(a);
                    for_each_slot(ga.mask(), [&](Slot s) {
                        if (g.has(s)) ga.slot(s) += coef[k] * g.slot(s);
                    });
                }
                break;
            }
            case Op::unary:
                propagate_unary(n);
                break;
            case Op::mul:
                propagate_mul(n);
                break;
            case Op::clamp: {
                const NodeId a = n.inputs[0];
                if (!wants(a)) break;
                JetBatch& ga = adjoint(a);
                for_each_slot(ga.mask(), [&](Slot s) { ga.slot(s) += g.slot(s).cwiseProduct(n.mat0); });
                break;
            }
            case Op::concat: {
                Index r0 = 0;
                for (NodeId p : n.inputs) {
                    const Index rows = nodes_[p].out.rows();
                    if (wants(p)) {
                        JetBatch& gp = adjoint(p);
                        for_each_slot(gp.mask(), [&](Slot s) { gp.slot(s) += g.slot(s).middleRows(r0, rows); });
                    }
                    r0 += rows;
                }
                break;
            }
            case Op::slot: {
                const NodeId a = n.inputs[0];
                if (wants(a)) adjoint(a).slot(n.slot) += g.value();
                break;
            }
            case Op::lift_z: {
                const NodeId a = n.inputs[0];
                if (!wants(a)) break;
                JetBatch& ga = adjoint(a);
                ga.value() += g.value();
                if (n.coupling == SurfaceCoupling::total) {
                    if (ga.has(Slot::dx)) ga.slot(Slot::dx) += g.slot(Slot::dx);
                    if (ga.has(Slot::dt)) ga.slot(Slot::dt) += g.slot(Slot::dt);
                }
                break;
            }
            case Op::sum: {
                const NodeId a = n.inputs[0];
                if (wants(a)) adjoint(a).value().array() += n.scalar * g.value()(0, 0);
                break;
            }
        }
    }

    void propagate_unary(Node& n) {
        const NodeId a = n.inputs[0];
        if (!wants(a)) return;
        const JetBatch& in = nodes_[a].out;
        const JetBatch& g = n.adj;
        JetBatch& ga = adjoint(a);
        const int order = has_second(in.mask()) ? 3 : (has_first(in.mask()) ? 2 : 1);
        const Eigen::ArrayXXd f0 = n.out.value().array();
        const Derivs d = derivs(n.primitive, in.value().array(), order, &f0);

        Eigen::ArrayXXd gv = g.value().array() * d.f1;
        for (Slot s : kFirstOrder) {
            if (!in.has(s)) continue;
            gv += g.slot(s).array() * d.f2 * in.slot(s).array();
        }
        for (Slot s : kSecondOrder) {
            if (!in.has(s)) continue;
            const auto gs = g.slot(s).array();
            const Slot f = first_order_of(s);
            gv += gs * d.f2 * in.slot(s).array();
            if (in.has(f)) gv += gs * d.f3 * in.slot(f).array().square();
        }
        ga.value().array() += gv;
        for (Slot s : kFirstOrder) {
            if (!in.has(s)) continue;
            auto gas = ga.slot(s).array();
            gas += g.slot(s).array() * d.f1;
            const Slot ss = s == Slot::dx ? Slot::dxx : Slot::dzz;
            if (s != Slot::dt && in.has(ss)) gas += 2.0 * g.slot(ss).array() * d.f2 * in.slot(s).array();
        }
        for (Slot s : kSecondOrder) {
            if (in.has(s)) ga.slot(s).array() += g.slot(s).array() * d.f1;
        }
    }

    void propagate_mul(Node& n) {
        const JetBatch& g = n.adj;
        for (int k = 0; k < 2; ++k) {
            const NodeId a = n.inputs[k];
            const NodeId b = n.inputs[1 - k];
            if (!wants(a)) continue;
            const JetBatch& ob = nodes_[b].out;
            JetBatch& ga = adjoint(a);
            const auto bv = ob.value().array();
            Eigen::ArrayXXd gv = g.value().array() * bv;
            for (Slot s : kFirstOrder) {
                if (g.has(s) && ob.has(s)) gv += g.slot(s).array() * ob.slot(s).array();
            }
            for (Slot s : kSecondOrder) {
                if (g.has(s) && ob.has(s)) gv += g.slot(s).array() * ob.slot(s).array();
            }
            ga.value().array() += gv;
            for (Slot s : kFirstOrder) {
                if (!ga.has(s)) continue;
                auto gas = ga.slot(s).array();
                gas += g.slot(s).array() * bv;
                if (s == Slot::dt) continue;
                const Slot ss = s == Slot::dx ? Slot::dxx : Slot::dzz;
                if (g.has(ss) && ob.has(s)) gas += 2.0 * g.slot(ss).array() * ob.slot(s).array();
            }
            for (Slot s : kSecondOrder) {
                if (ga.has(s)) ga.slot(s).array() += g.slot(s).array() * bv;
            }
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace wavepinn::ad

#pragma once

#include <Eigen/Dense>
#include <algorithm>

#include "wavepinn/autodiff/tape.hpp"

namespace wavepinn::ad {

/// Points per tape when a batch is split; keeps every jet block cache resident.
inline constexpr Index kDefaultChunk = 256;

/// Sums a scalar loss over column ranges [begin, begin + len) of a batch of n
/// points, one tape per range, accumulating the parameter gradient in order.
/// `build(tape, begin, len)` records the chunk's contribution and returns it.
template <class Build>
double accumulate_chunks(Index n, Build&& build, Eigen::Ref<Eigen::VectorXd> grad, Index chunk = kDefaultChunk) {
    double total = 0.0;
    for (Index c0 = 0; c0 < n; c0 += chunk) {
        const Index len = std::min(chunk, n - c0);
        Tape tape;
        const NodeId l = build(tape, c0, len);
        total += tape.scalar(l);
        tape.backward(l, grad);
    }
    return total;
}

}  // namespace wavepinn::ad

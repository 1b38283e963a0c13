#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>

#include "wavepinn/errors.hpp"

namespace wavepinn::ad {

using Index = Eigen::Index;

/// Derivative slots carried alongside every value. Second-order slots are the
/// diagonal partials only.
enum class Slot : int { value = 0, dx = 1, dt = 2, dz = 3, dxx = 4, dzz = 5 };

inline constexpr int kSlotCount = 6;

using SlotMask = std::uint8_t;

constexpr SlotMask bit(Slot s) { return static_cast<SlotMask>(1u << static_cast<int>(s)); }

inline constexpr SlotMask kValueOnly = bit(Slot::value);
inline constexpr SlotMask kFirstXT = bit(Slot::value) | bit(Slot::dx) | bit(Slot::dt);
inline constexpr SlotMask kFirstXTZ = kFirstXT | bit(Slot::dz);
inline constexpr SlotMask kLaplace =
    bit(Slot::value) | bit(Slot::dx) | bit(Slot::dz) | bit(Slot::dxx) | bit(Slot::dzz);
inline constexpr SlotMask kAllSlots = 0x3f;

/// First-order slot whose square feeds a second-order slot (dxx <- dx, dzz <- dz).
constexpr Slot first_order_of(Slot second) { return second == Slot::dxx ? Slot::dx : Slot::dz; }

inline constexpr std::array<Slot, 3> kFirstOrder{Slot::dx, Slot::dt, Slot::dz};
inline constexpr std::array<Slot, 2> kSecondOrder{Slot::dxx, Slot::dzz};

/// A rows x batch block of values plus the requested derivative slots, stored
/// as one column-major matrix with one rows x batch block per active slot so
/// that linear maps act on every slot with a single matrix product.
class JetBatch {
  public:
    JetBatch() = default;

    JetBatch(Index rows, Index batch, SlotMask mask) : rows_(rows), batch_(batch), mask_(mask) {
        if (!(mask & kValueOnly)) {
            throw ConstructionError("JetBatch: value slot is mandatory");
        }
        int pos = 0;
        for (int s = 0; s < kSlotCount; ++s) {
            position_[s] = (mask >> s) & 1u ? pos++ : -1;
        }
        data_.setZero(rows, batch * pos);
    }

    Index rows() const { return rows_; }
    Index batch() const { return batch_; }
    SlotMask mask() const { return mask_; }
    int slot_count() const { return static_cast<int>(data_.cols() / (batch_ == 0 ? 1 : batch_)); }
    bool has(Slot s) const { return position_[static_cast<int>(s)] >= 0; }
    bool empty() const { return data_.size() == 0; }

    auto slot(Slot s) { return data_.middleCols(offset(s), batch_); }
    auto slot(Slot s) const { return data_.middleCols(offset(s), batch_); }
    auto value() { return slot(Slot::value); }
    auto value() const { return slot(Slot::value); }

    Eigen::MatrixXd& data() { return data_; }
    const Eigen::MatrixXd& data() const { return data_; }

  private:
    Index offset(Slot s) const {
        const int p = position_[static_cast<int>(s)];
        if (p < 0) {
            throw ConstructionError("JetBatch: requested slot is not active");
        }
        return p * batch_;
    }

    Index rows_ = 0;
    Index batch_ = 0;
    SlotMask mask_ = 0;
    std::array<int, kSlotCount> position_{-1, -1, -1, -1, -1, -1};
    Eigen::MatrixXd data_;
};

/// Coordinate jets: row r of `points` is seeded with unit derivative along
/// coordinate r (x, t, z in that order). Second-order slots start at zero.
inline JetBatch coordinates(const Eigen::Ref<const Eigen::MatrixXd>& points, SlotMask mask) {
    const Index rows = points.rows();
    if (rows < 1 || rows > 3) {
        throw ConstructionError("coordinates: expected 1 to 3 coordinate rows");
    }
    JetBatch jet(rows, points.cols(), mask);
    jet.value() = points;
    constexpr std::array<Slot, 3> seed{Slot::dx, Slot::dt, Slot::dz};
    for (Index r = 0; r < rows; ++r) {
        if (jet.has(seed[r])) {
            jet.slot(seed[r]).row(r).setOnes();
        }
    }
    return jet;
}

}  // namespace wavepinn::ad

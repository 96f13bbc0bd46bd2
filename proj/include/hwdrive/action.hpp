#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace hwdrive {

inline constexpr int kLaneCount = 3;
inline constexpr int kActionCount = 7;

// Lane 0 is the leftmost lane.
enum class Action : std::uint8_t {
    LaneLeft = 0,
    LaneRight = 1,
    Accel1 = 2,
    Accel2 = 3,
    Decel1 = 4,
    Decel2 = 5,
    Maintain = 6,
};

inline constexpr std::array<Action, kActionCount> kAllActions = {
    Action::LaneLeft, Action::LaneRight, Action::Accel1, Action::Accel2,
    Action::Decel1,   Action::Decel2,    Action::Maintain,
};

constexpr int index_of(Action a) noexcept { return static_cast<int>(a); }

inline Action action_from_index(int i) {
    if (i < 0 || i >= kActionCount) throw std::out_of_range("action index out of range");
    return static_cast<Action>(i);
}

/// Lateral displacement in lanes (-1 is one lane to the left).
constexpr int lane_delta(Action a) noexcept {
    switch (a) {
        case Action::LaneLeft: return -1;
        case Action::LaneRight: return +1;
        default: return 0;
    }
}

/// Longitudinal acceleration in m/s^2, held for the whole 1 s decision period.
constexpr int acceleration(Action a) noexcept {
    switch (a) {
        case Action::Accel1: return 1;
        case Action::Accel2: return 2;
        case Action::Decel1: return -1;
        case Action::Decel2: return -2;
        default: return 0;
    }
}

constexpr std::string_view name_of(Action a) noexcept {
    switch (a) {
        case Action::LaneLeft: return "lane_left";
        case Action::LaneRight: return "lane_right";
        case Action::Accel1: return "accel1";
        case Action::Accel2: return "accel2";
        case Action::Decel1: return "decel1";
        case Action::Decel2: return "decel2";
        case Action::Maintain: return "maintain";
    }
    return "?";
}

/// Set of actions, one bit per action index.
class ActionMask {
public:
    constexpr ActionMask() = default;
    constexpr explicit ActionMask(std::uint8_t bits) : bits_(bits & kFull) {}

    static constexpr ActionMask all() { return ActionMask(kFull); }

    constexpr bool contains(Action a) const noexcept { return (bits_ >> index_of(a)) & 1U; }
    constexpr bool contains(int i) const noexcept {
        return i >= 0 && i < kActionCount && ((bits_ >> i) & 1U);
    }
    constexpr void insert(Action a) noexcept { bits_ |= std::uint8_t(1U << index_of(a)); }
    constexpr void erase(Action a) noexcept { bits_ &= std::uint8_t(~(1U << index_of(a))); }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::uint8_t bits() const noexcept { return bits_; }

    constexpr int size() const noexcept {
        int n = 0;
        for (int i = 0; i < kActionCount; ++i) n += (bits_ >> i) & 1U;
        return n;
    }

    constexpr bool operator==(const ActionMask&) const = default;

private:
    static constexpr std::uint8_t kFull = (1U << kActionCount) - 1U;
    std::uint8_t bits_ = 0;
};

}  // namespace hwdrive

#pragma once

#include <algorithm>
#include <cstdlib>

namespace hwdrive {

inline constexpr double kVehicleLength = 5.0;
inline constexpr double kMinSpeed = 0.0;
inline constexpr double kMaxSpeed = 25.0;

// Sensed window, measured from the ego front bumper.
inline constexpr double kSenseBehind = 75.0;
inline constexpr double kSenseAhead = 100.0;

/// Bumper-to-bumper longitudinal distance between two vehicles given their
/// front-bumper positions. Overlapping bodies give 0.
inline double bumper_gap(double ego_front, double other_front) noexcept {
    const double gap = other_front >= ego_front ? (other_front - kVehicleLength) - ego_front
                                                : (ego_front - kVehicleLength) - other_front;
    return std::max(0.0, gap);
}

/// True when any point of the other body lies in the closed window
/// [ego_front - 75, ego_front + 100] and the lanes differ by at most one.
inline bool in_sensed_window(double ego_front, int ego_lane, double other_front,
                             int other_lane) noexcept {
    if (std::abs(other_lane - ego_lane) > 1) return false;
    const double rel_front = other_front - ego_front;
    const double rel_rear = rel_front - kVehicleLength;
    return rel_front >= -kSenseBehind && rel_rear <= kSenseAhead;
}

}  // namespace hwdrive

#pragma once

// Per-step reward: negative weighted sum of a proximity penalty, a desired
// speed penalty, a collision count, an acceleration penalty and a lane change
// indicator.

#include <cmath>
#include <stdexcept>

#include "hwdrive/perception.hpp"

namespace hwdrive {

struct RewardWeights {
    double proximity = 1.0;    // w1
    double speed = 0.5;        // w2
    double collision = 20.0;   // w3
    double accel = 0.01;       // w4
    double lane_change = 0.01; // w5
    double delta0 = 3.0;       // minimum safe distance, m
    double desired_speed = 21.0;

    void validate() const {
        if (proximity < 0 || speed < 0 || collision < 0 || accel < 0 || lane_change < 0)
            throw std::invalid_argument("reward weights must be >= 0");
        if (!(delta0 > 0)) throw std::invalid_argument("delta0 must be > 0");
    }
};

struct RewardBreakdown {
    double proximity_sum = 0.0;
    double speed_dev = 0.0;
    int collision_count = 0;
    double accel = 0.0;
    int lane_change = 0;
    double total = 0.0;
};

inline double proximity_penalty(double delta, double delta0, bool same_lane) {
    if (delta < 0) throw std::invalid_argument("gap must be >= 0");
    return same_lane ? std::exp(-(delta - delta0)) : 0.0;
}

inline double speed_penalty(double v, double v_desired) {
    const double d = v - v_desired;
    return d * d;
}

inline double accel_penalty(double v, double v_prev) {
    const double d = v - v_prev;
    return d * d;
}

inline int lane_change_penalty(int lane, int lane_prev) { return lane != lane_prev ? 1 : 0; }

inline double combine(const RewardWeights& w, double proximity_sum, double speed_dev, int collisions,
                      double accel, int lane_change) {
    return -w.proximity * proximity_sum - w.speed * speed_dev - w.collision * collisions - w.accel * accel -
           w.lane_change * lane_change;
}

inline RewardBreakdown total_reward(const SensedObstacles& obstacles, double v, double v_prev, int lane,
                                    int lane_prev, const RewardWeights& w) {
    RewardBreakdown r;
    for (const auto& o : obstacles.items) {
        const double f = proximity_penalty(o.gap, w.delta0, o.lane == lane);
        r.proximity_sum += f;
        if (f >= 1.0) ++r.collision_count;
    }
    r.speed_dev = speed_penalty(v, w.desired_speed);
    r.accel = accel_penalty(v, v_prev);
    r.lane_change = lane_change_penalty(lane, lane_prev);
    r.total = combine(w, r.proximity_sum, r.speed_dev, r.collision_count, r.accel, r.lane_change);
    return r;
}

/// Reward for arriving in `s` (the post-step state) from the ego lane/speed
/// recorded in its prev_* fields.
inline RewardBreakdown transition_reward(const SimState& s, const RewardWeights& w) {
    const auto& ego = s.ego();
    return total_reward(sense_obstacles(s), ego.v, s.prev_ego_speed, ego.lane, s.prev_ego_lane, w);
}

}  // namespace hwdrive

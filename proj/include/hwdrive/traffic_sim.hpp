#pragma once

// Kinematic three-lane freeway simulator.
//
// Manual vehicles keep their lane and entry speed for the whole episode. The
// ego vehicle is stepped once per second with one of the seven high-level
// actions. Vehicles enter the road with their front bumper at x = 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwdrive/action.hpp"
#include "hwdrive/geometry.hpp"

namespace hwdrive {

using Rng = std::mt19937_64;

struct VehicleState {
    int id = 0;
    int lane = 0;
    double x = 0.0;  // front bumper
    double v = 0.0;
    double length = kVehicleLength;

    bool operator==(const VehicleState&) const = default;
};

struct ScenarioConfig {
    int duration_steps = 60;
    int spawn_period_s = 2;
    int ego_spawn_index = 10;  // 1-based
    double speed_low = 12.0;
    double speed_high = 17.0;
    double desired_speed = 21.0;
    double entry_gap = 3.0;  // entry is blocked below this rear gap; tracks delta0
    bool collision_terminates = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (duration_steps < 0) throw std::invalid_argument("duration_steps must be >= 0");
        if (spawn_period_s <= 0) throw std::invalid_argument("spawn_period_s must be > 0");
        if (ego_spawn_index < 1) throw std::invalid_argument("ego_spawn_index must be >= 1");
        if (!(speed_low <= speed_high)) throw std::invalid_argument("speed_low must be <= speed_high");
        if (speed_low < kMinSpeed || speed_high > kMaxSpeed)
            throw std::invalid_argument("spawn speeds must lie in [0, 25] m/s");
        if (!(entry_gap >= 0.0)) throw std::invalid_argument("entry_gap must be >= 0");
    }
};

struct SpawnEvent {
    int time_s = 0;  // absolute road clock
    int lane = 0;
    double v0 = 0.0;
    bool is_ego = false;

    bool operator==(const SpawnEvent&) const = default;
};

struct Scenario {
    std::vector<SpawnEvent> events;  // sorted by time
    int ego_event = -1;

    const SpawnEvent& ego() const { return events.at(static_cast<std::size_t>(ego_event)); }
    int ego_time() const { return ego().time_s; }

    /// Front-bumper position of a manual vehicle at episode step t, in closed form.
    double manual_x(std::size_t event, int t) const {
        const auto& e = events[event];
        return e.v0 * static_cast<double>(ego_time() + t - e.time_s);
    }

    bool operator==(const Scenario&) const = default;
};

namespace detail {

// Rear gap behind the rearmost vehicle of `lane` at absolute time `now`, for a
// vehicle entering at x = 0. The ego is tracked along its nominal constant
// speed path because its real path is unknown when the scenario is drawn.
inline double entry_gap_at(const std::vector<SpawnEvent>& events, int lane, int now) {
    double rear = std::numeric_limits<double>::infinity();
    for (const auto& e : events) {
        if (e.lane != lane || e.time_s > now) continue;
        const double x = e.v0 * static_cast<double>(now - e.time_s);
        rear = std::min(rear, x - kVehicleLength);
    }
    return rear;
}

}  // namespace detail

/// Draws the spawn schedule: one entry every spawn period on a uniform random
/// lane with a uniform random speed; the ego_spawn_index-th entry is the ego.
/// Blocked lanes are redrawn and a spawn with all lanes blocked waits 1 s.
/// Events are generated until the episode (duration_steps after ego entry) ends.
inline Scenario generate_scenario(const ScenarioConfig& config, Rng& rng) {
    config.validate();
    std::uniform_int_distribution<int> lane_dist(0, kLaneCount - 1);
    std::uniform_real_distribution<double> speed_dist(config.speed_low, config.speed_high);

    Scenario sc;
    int prev_time = 0;
    for (int k = 0;; ++k) {
        const bool is_ego = (k + 1 == config.ego_spawn_index);
        int time = std::max(k * config.spawn_period_s, prev_time);
        if (sc.ego_event >= 0 && time > sc.ego_time() + config.duration_steps) break;

        int lane = lane_dist(rng);
        const double v0 = speed_dist(rng);
        for (;;) {
            bool open[kLaneCount];
            int n_open = 0;
            for (int l = 0; l < kLaneCount; ++l) {
                open[l] = detail::entry_gap_at(sc.events, l, time) >= config.entry_gap;
                n_open += open[l];
            }
            if (open[lane]) break;
            if (n_open == 0) {
                ++time;
                if (sc.ego_event >= 0 && time > sc.ego_time() + config.duration_steps) break;
                continue;
            }
            std::uniform_int_distribution<int> pick(0, n_open - 1);
            int which = pick(rng);
            for (int l = 0; l < kLaneCount; ++l) {
                if (open[l] && which-- == 0) {
                    lane = l;
                    break;
                }
            }
        }
        if (sc.ego_event >= 0 && time > sc.ego_time() + config.duration_steps) break;
        sc.events.push_back({time, lane, v0, is_ego});
        if (is_ego) sc.ego_event = static_cast<int>(sc.events.size()) - 1;
        prev_time = time;
    }
    return sc;
}

inline Scenario generate_scenario(const ScenarioConfig& config) {
    Rng rng(config.seed);
    return generate_scenario(config, rng);
}

// ---------------------------------------------------------------------------
// Scenario text format: one spawn event per line, `time_s lane v0 is_ego`.
// Lines starting with '#' and blank lines are ignored. v0 uses 17 significant
// digits so a write/read cycle is exact.

inline void write_scenario(std::ostream& os, const Scenario& sc) {
    os << "# time_s lane v0 is_ego\n";
    std::ostringstream line;
    line.precision(17);
    for (const auto& e : sc.events) {
        line.str({});
        line << e.time_s << ' ' << e.lane << ' ' << e.v0 << ' ' << (e.is_ego ? 1 : 0) << '\n';
        os << line.str();
    }
}

inline Scenario read_scenario(std::istream& is) {
    Scenario sc;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        SpawnEvent e;
        int ego = 0;
        if (!(ss >> e.time_s >> e.lane >> e.v0 >> ego) || (ego != 0 && ego != 1) || e.lane < 0 ||
            e.lane >= kLaneCount || e.v0 < kMinSpeed || e.v0 > kMaxSpeed) {
            throw std::runtime_error("scenario line " + std::to_string(line_no) + ": malformed event");
        }
        std::string rest;
        if (ss >> rest) throw std::runtime_error("scenario line " + std::to_string(line_no) + ": trailing data");
        if (!sc.events.empty() && e.time_s < sc.events.back().time_s)
            throw std::runtime_error("scenario line " + std::to_string(line_no) + ": events out of order");
        e.is_ego = ego == 1;
        if (e.is_ego) {
            if (sc.ego_event >= 0) throw std::runtime_error("scenario has more than one ego event");
            sc.ego_event = static_cast<int>(sc.events.size());
        }
        sc.events.push_back(e);
    }
    if (sc.ego_event < 0) throw std::runtime_error("scenario has no ego event");
    return sc;
}

// ---------------------------------------------------------------------------

struct SimState {
    int t = 0;  // ego decision steps since ego entry
    std::vector<VehicleState> vehicles;  // vehicles[0] is the ego
    int ego_id = -1;
    double prev_ego_speed = 0.0;
    int prev_ego_lane = 0;
    std::size_t next_event = 0;

    const VehicleState& ego() const { return vehicles.front(); }
    VehicleState& ego() { return vehicles.front(); }

    bool operator==(const SimState&) const = default;
};

namespace detail {

inline void insert_due_spawns(const Scenario& sc, SimState& s) {
    const int now = sc.ego_time() + s.t;
    while (s.next_event < sc.events.size() && sc.events[s.next_event].time_s <= now) {
        const auto& e = sc.events[s.next_event];
        if (!e.is_ego) {
            s.vehicles.push_back({static_cast<int>(s.next_event), e.lane, sc.manual_x(s.next_event, s.t),
                                  e.v0, kVehicleLength});
        }
        ++s.next_event;
    }
}

}  // namespace detail

/// Road at the moment the ego enters: every earlier vehicle already driving.
inline SimState initial_state(const Scenario& sc) {
    if (sc.ego_event < 0) throw std::invalid_argument("scenario has no ego event");
    const auto& ego = sc.ego();
    SimState s;
    s.ego_id = sc.ego_event;
    s.vehicles.push_back({sc.ego_event, ego.lane, 0.0, ego.v0, kVehicleLength});
    s.prev_ego_speed = ego.v0;
    s.prev_ego_lane = ego.lane;
    detail::insert_due_spawns(sc, s);
    return s;
}

inline ActionMask feasible_actions(const SimState& s) {
    const auto& ego = s.ego();
    ActionMask mask;
    for (Action a : kAllActions) {
        const int lane = ego.lane + lane_delta(a);
        const double v = ego.v + acceleration(a);
        if (lane < 0 || lane >= kLaneCount) continue;
        if (v < kMinSpeed || v > kMaxSpeed) continue;
        mask.insert(a);
    }
    mask.insert(Action::Maintain);
    return mask;
}

/// Advances the road by one second. Throws std::logic_error for an action
/// outside feasible_actions(s); callers are expected to mask.
inline SimState step(const Scenario& sc, SimState s, Action action) {
    if (!feasible_actions(s).contains(action)) {
        throw std::logic_error("infeasible action " + std::string(name_of(action)));
    }
    auto& ego = s.ego();
    s.prev_ego_speed = ego.v;
    s.prev_ego_lane = ego.lane;

    const double a = acceleration(action);
    ego.x += ego.v + 0.5 * a;
    ego.v += a;
    ego.lane += lane_delta(action);
    for (std::size_t i = 1; i < s.vehicles.size(); ++i) s.vehicles[i].x += s.vehicles[i].v;

    ++s.t;
    detail::insert_due_spawns(sc, s);
    return s;
}

/// True iff some sensed vehicle in the ego lane is within delta0 bumper to
/// bumper, i.e. its proximity penalty reaches 1.
inline bool detect_collision(const SimState& s, double delta0) {
    const auto& ego = s.ego();
    for (std::size_t i = 1; i < s.vehicles.size(); ++i) {
        const auto& o = s.vehicles[i];
        if (o.lane != ego.lane || !in_sensed_window(ego.x, ego.lane, o.x, o.lane)) continue;
        if (bumper_gap(ego.x, o.x) <= delta0) return true;
    }
    return false;
}

}  // namespace hwdrive

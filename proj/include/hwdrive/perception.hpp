#pragma once

// Sensing and state encoding.
//
// The ego senses its own lane and both neighbours from 75 m behind to 100 m
// ahead of its front bumper. That area is cut into 1 m tiles, giving three
// bands of 176 tiles. Band 0 is the lane to the left of the ego, band 1 the
// ego lane, band 2 the lane to the right. Tile k (k = -75 ... 100) covers the
// relative interval [k, k+1) in front of the ego front bumper, so the ego body
// occupies tiles -5 ... -1.
//
// Tile values: speed of the vehicle above the tile, 0 for free road and -1 for
// bands outside the road. The flat vector is band-major and rear-to-front
// within a band: index = band * 176 + (k + 75).

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "hwdrive/geometry.hpp"
#include "hwdrive/traffic_sim.hpp"

namespace hwdrive {

inline constexpr int kBands = 3;
inline constexpr int kTilesBehind = 75;
inline constexpr int kTilesAhead = 100;
inline constexpr int kTilesPerBand = kTilesBehind + kTilesAhead + 1;  // 176
inline constexpr int kGridSize = kBands * kTilesPerBand;              // 528
inline constexpr double kOffRoad = -1.0;

class OccupancyGrid {
public:
    OccupancyGrid() { values_.fill(0.0); }

    static constexpr int flat_index(int band, int tile) noexcept {
        return band * kTilesPerBand + (tile + kTilesBehind);
    }

    double at(int band, int tile) const { return values_.at(static_cast<std::size_t>(flat_index(band, tile))); }
    double& at(int band, int tile) { return values_.at(static_cast<std::size_t>(flat_index(band, tile))); }

    std::span<const double, kGridSize> values() const noexcept { return values_; }
    std::span<double, kGridSize> values() noexcept { return values_; }

    bool operator==(const OccupancyGrid&) const = default;

private:
    std::array<double, kGridSize> values_;
};

struct SensedObstacle {
    int id = 0;
    int lane = 0;
    double gap = 0.0;        // bumper-to-bumper, >= 0
    double rel_front = 0.0;  // obstacle front bumper minus ego front bumper
    double speed = 0.0;

    bool ahead() const noexcept { return rel_front >= 0.0; }
    bool operator==(const SensedObstacle&) const = default;
};

struct SensedObstacles {
    std::vector<SensedObstacle> items;

    std::size_t count() const noexcept { return items.size(); }
    bool operator==(const SensedObstacles&) const = default;
};

/// Every vehicle with part of its body in the sensed window, ordered by lane
/// and then from front to rear.
inline SensedObstacles sense_obstacles(const SimState& s) {
    const auto& ego = s.ego();
    SensedObstacles out;
    for (std::size_t i = 1; i < s.vehicles.size(); ++i) {
        const auto& o = s.vehicles[i];
        if (!in_sensed_window(ego.x, ego.lane, o.x, o.lane)) continue;
        out.items.push_back({o.id, o.lane, bumper_gap(ego.x, o.x), o.x - ego.x, o.v});
    }
    std::sort(out.items.begin(), out.items.end(), [](const SensedObstacle& a, const SensedObstacle& b) {
        if (a.lane != b.lane) return a.lane < b.lane;
        if (a.rel_front != b.rel_front) return a.rel_front > b.rel_front;
        return a.id < b.id;
    });
    return out;
}

/// Scales each gap by (1 + u), u ~ U[-p, p], independently per obstacle. The
/// obstacle moves along the road accordingly; speeds are untouched.
inline SensedObstacles apply_measurement_error(SensedObstacles obstacles, double magnitude, Rng& rng) {
    if (!(magnitude >= 0.0)) throw std::invalid_argument("measurement error magnitude must be >= 0");
    if (magnitude == 0.0) return obstacles;
    std::uniform_real_distribution<double> noise(-magnitude, magnitude);
    for (auto& o : obstacles.items) {
        const double noisy = o.gap * (1.0 + noise(rng));
        const double shift = noisy - o.gap;
        o.rel_front += o.ahead() ? shift : -shift;
        o.gap = noisy;
    }
    return obstacles;
}

namespace detail {

inline void paint(OccupancyGrid& g, int band, double rel_front, double length, double value, bool overwrite) {
    const double rel_rear = rel_front - length;
    const int lo = std::max(static_cast<int>(std::floor(rel_rear)), -kTilesBehind);
    const int hi = std::min(static_cast<int>(std::ceil(rel_front)) - 1, kTilesAhead);
    for (int k = lo; k <= hi; ++k) {
        double& cell = g.at(band, k);
        cell = overwrite ? value : std::max(cell, value);
    }
}

}  // namespace detail

/// Grid from the ego and a (possibly corrupted) obstacle list. Overlapping
/// obstacles keep the larger speed; ego tiles always carry the ego speed.
inline OccupancyGrid encode(const VehicleState& ego, const SensedObstacles& obstacles) {
    OccupancyGrid g;
    for (int band = 0; band < kBands; ++band) {
        const int lane = ego.lane + band - 1;
        if (lane < 0 || lane >= kLaneCount) {
            for (int k = -kTilesBehind; k <= kTilesAhead; ++k) g.at(band, k) = kOffRoad;
        }
    }
    for (const auto& o : obstacles.items) {
        const int band = o.lane - ego.lane + 1;
        if (band < 0 || band >= kBands) continue;
        detail::paint(g, band, o.rel_front, kVehicleLength, o.speed, false);
    }
    detail::paint(g, 1, 0.0, ego.length, ego.v, true);
    return g;
}

inline OccupancyGrid encode(const SimState& s) { return encode(s.ego(), sense_obstacles(s)); }

/// Debug dump: three rows of 176 rounded integers, left band first.
inline void dump_grid(std::ostream& os, const OccupancyGrid& g) {
    for (int band = 0; band < kBands; ++band) {
        for (int k = -kTilesBehind; k <= kTilesAhead; ++k) {
            if (k != -kTilesBehind) os << ' ';
            os << std::lround(g.at(band, k));
        }
        os << '\n';
    }
}

}  // namespace hwdrive

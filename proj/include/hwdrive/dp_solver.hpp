#pragma once

// Exact finite-horizon dynamic programming over the ego state lattice.
//
// With accelerations in {-2, ..., 2} m/s^2 held for 1 s, the ego speed after t
// steps is v0 + o for an integer offset o, and its position is v0 * t + K / 2
// for an integer K (K accumulates o_prev + o_next every step). Manual vehicles
// have closed-form positions, so the reachable set of (t, lane, o, K) is finite
// and exact. Collision states are absorbing when collisions end the episode.
//
// Storage is dense per (t, lane, o) over the K interval that the speed offset o
// can reach at step t; a flag marks the states that are really reachable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwdrive/reward.hpp"
#include "hwdrive/traffic_sim.hpp"

namespace hwdrive {

struct LatticeState {
    int t = 0;
    int lane = 0;
    int x_key = 0;  // ego x = v0 * t + x_key / 2
    int v_off = 0;  // ego v = v0 + v_off

    bool operator==(const LatticeState&) const = default;
};

/// Action preference used to break ties between equally valued actions.
inline constexpr std::array<Action, kActionCount> kDpTieOrder = {
    Action::Maintain, Action::Accel1, Action::Decel1,  Action::Accel2,
    Action::Decel2,   Action::LaneLeft, Action::LaneRight,
};

class DpLattice {
public:
    static constexpr std::uint8_t kReachable = 1;
    static constexpr std::uint8_t kTerminal = 2;

    DpLattice() = default;

    int horizon() const noexcept { return horizon_; }
    double v0() const noexcept { return v0_; }
    int start_lane() const noexcept { return lane0_; }
    int v_off_min() const noexcept { return omin_; }
    int v_off_max() const noexcept { return omax_; }

    double ego_x(int t, int x_key) const noexcept { return v0_ * t + 0.5 * x_key; }
    double ego_v(int v_off) const noexcept { return v0_ + v_off; }

    /// Flat index of a state, or -1 when it lies outside the stored box.
    std::int64_t index(const LatticeState& s) const noexcept {
        if (s.t < 0 || s.t > horizon_ || s.lane < 0 || s.lane >= kLaneCount || s.v_off < omin_ ||
            s.v_off > omax_)
            return -1;
        const auto& b = box(s.t, s.v_off);
        if (b.kmin > b.kmax || s.x_key < b.kmin || s.x_key > b.kmax) return -1;
        return block_start(s.t, s.lane, s.v_off) + (s.x_key - b.kmin);
    }

    bool reachable(const LatticeState& s) const noexcept {
        const auto i = index(s);
        return i >= 0 && (flags_[static_cast<std::size_t>(i)] & kReachable);
    }
    bool terminal(const LatticeState& s) const noexcept {
        const auto i = index(s);
        return i >= 0 && (flags_[static_cast<std::size_t>(i)] & kTerminal);
    }

    std::size_t state_count() const noexcept { return reachable_count_; }
    std::size_t state_count(int t) const { return per_step_count_.at(static_cast<std::size_t>(t)); }
    std::size_t storage_size() const noexcept { return flags_.size(); }

    /// All reachable states of step t, in storage order.
    std::vector<LatticeState> states_at(int t) const {
        std::vector<LatticeState> out;
        for (int lane = 0; lane < kLaneCount; ++lane)
            for (int o = omin_; o <= omax_; ++o) {
                const auto& b = box(t, o);
                for (int k = b.kmin; k <= b.kmax; ++k) {
                    LatticeState s{t, lane, k, o};
                    if (reachable(s)) out.push_back(s);
                }
            }
        return out;
    }

    /// Same-lane proximity sum and collision count seen at (t, lane, x_key).
    double proximity_sum(int t, int lane, int x_key) const {
        const auto& c = costs_[static_cast<std::size_t>(t)];
        return c.prox[static_cast<std::size_t>(lane)][static_cast<std::size_t>(x_key - c.kmin)];
    }
    int collisions(int t, int lane, int x_key) const {
        const auto& c = costs_[static_cast<std::size_t>(t)];
        return c.coll[static_cast<std::size_t>(lane)][static_cast<std::size_t>(x_key - c.kmin)];
    }

    /// Successor under `a`, or nullopt when `a` is infeasible at `s`.
    std::optional<LatticeState> successor(const LatticeState& s, Action a) const noexcept {
        const int lane = s.lane + lane_delta(a);
        if (lane < 0 || lane >= kLaneCount) return std::nullopt;
        const double v_next = ego_v(s.v_off) + acceleration(a);
        if (v_next < kMinSpeed || v_next > kMaxSpeed) return std::nullopt;
        const int o_next = s.v_off + acceleration(a);
        return LatticeState{s.t + 1, lane, s.x_key + s.v_off + o_next, o_next};
    }

    double transition_reward(const LatticeState& s, const LatticeState& next, const RewardWeights& w) const {
        const double v = ego_v(next.v_off);
        const double v_prev = ego_v(s.v_off);
        return combine(w, proximity_sum(next.t, next.lane, next.x_key), speed_penalty(v, w.desired_speed),
                       collisions(next.t, next.lane, next.x_key), accel_penalty(v, v_prev),
                       lane_change_penalty(next.lane, s.lane));
    }

    std::uint8_t flags_at(std::int64_t i) const { return flags_[static_cast<std::size_t>(i)]; }

    /// Calls fn(lane, v_off, kmin, kmax, first_index) for each non-empty block of step t.
    template <class Fn>
    void for_each_block(int t, Fn&& fn) const {
        for (int lane = 0; lane < kLaneCount; ++lane)
            for (int o = omin_; o <= omax_; ++o) {
                const auto& b = box(t, o);
                if (b.kmin <= b.kmax) fn(lane, o, b.kmin, b.kmax, block_start(t, lane, o));
            }
    }

private:
    friend DpLattice build_reachable_lattice(const Scenario&, int, const RewardWeights&, bool);

    struct Box {
        int kmin = 1;
        int kmax = 0;
    };
    struct StepCosts {
        int kmin = 0;
        int kmax = -1;
        std::array<std::vector<double>, kLaneCount> prox;
        std::array<std::vector<std::uint8_t>, kLaneCount> coll;
    };

    int n_off() const noexcept { return omax_ - omin_ + 1; }
    const Box& box(int t, int o) const noexcept {
        return boxes_[static_cast<std::size_t>(t * n_off() + (o - omin_))];
    }
    std::int64_t block_start(int t, int lane, int o) const noexcept {
        return starts_[static_cast<std::size_t>((t * kLaneCount + lane) * n_off() + (o - omin_))];
    }

    int horizon_ = 0;
    double v0_ = 0.0;
    int lane0_ = 0;
    int omin_ = 0;
    int omax_ = 0;
    std::vector<Box> boxes_;             // [t][o]
    std::vector<std::int64_t> starts_;   // [t][lane][o]
    std::vector<std::uint8_t> flags_;
    std::vector<StepCosts> costs_;       // [t]
    std::size_t reachable_count_ = 0;
    std::vector<std::size_t> per_step_count_;
};

namespace detail {

// Manual vehicles present at episode step t, per lane, ordered front to rear.
inline std::array<std::vector<double>, kLaneCount> manual_positions(const Scenario& sc, int t) {
    std::array<std::vector<double>, kLaneCount> lanes;
    const int now = sc.ego_time() + t;
    for (std::size_t i = 0; i < sc.events.size(); ++i) {
        const auto& e = sc.events[i];
        if (e.is_ego || e.time_s > now) continue;
        lanes[static_cast<std::size_t>(e.lane)].push_back(sc.manual_x(i, t));
    }
    for (auto& l : lanes) std::sort(l.begin(), l.end(), std::greater<>());
    return lanes;
}

}  // namespace detail

/// Forward construction of every ego state reachable within `horizon` steps
/// over feasible actions. Collision states get no successors.
inline DpLattice build_reachable_lattice(const Scenario& sc, int horizon, const RewardWeights& w,
                                         bool collisions_terminal = false) {
    if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
    w.validate();
    const auto& ego = sc.ego();

    DpLattice L;
    L.horizon_ = horizon;
    L.v0_ = ego.v0;
    L.lane0_ = ego.lane;
    L.omin_ = static_cast<int>(std::ceil(kMinSpeed - ego.v0));
    L.omax_ = static_cast<int>(std::floor(kMaxSpeed - ego.v0));
    const int nOff = L.n_off();

    // K interval per (t, o), ignoring lanes and collisions.
    L.boxes_.assign(static_cast<std::size_t>((horizon + 1) * nOff), {});
    auto box_mut = [&](int t, int o) -> DpLattice::Box& {
        return L.boxes_[static_cast<std::size_t>(t * nOff + (o - L.omin_))];
    };
    box_mut(0, 0) = {0, 0};
    for (int t = 0; t < horizon; ++t) {
        for (int o = L.omin_; o <= L.omax_; ++o) {
            const auto b = box_mut(t, o);
            if (b.kmin > b.kmax) continue;
            for (int a = -2; a <= 2; ++a) {
                const double vn = L.ego_v(o) + a;
                if (vn < kMinSpeed || vn > kMaxSpeed) continue;
                const int on = o + a;
                auto& nb = box_mut(t + 1, on);
                const int lo = b.kmin + o + on;
                const int hi = b.kmax + o + on;
                if (nb.kmin > nb.kmax) {
                    nb = {lo, hi};
                } else {
                    nb.kmin = std::min(nb.kmin, lo);
                    nb.kmax = std::max(nb.kmax, hi);
                }
            }
        }
    }

    L.starts_.assign(static_cast<std::size_t>((horizon + 1) * kLaneCount * nOff), 0);
    std::int64_t total = 0;
    for (int t = 0; t <= horizon; ++t)
        for (int lane = 0; lane < kLaneCount; ++lane)
            for (int o = L.omin_; o <= L.omax_; ++o) {
                L.starts_[static_cast<std::size_t>((t * kLaneCount + lane) * nOff + (o - L.omin_))] = total;
                const auto& b = box_mut(t, o);
                if (b.kmin <= b.kmax) total += b.kmax - b.kmin + 1;
            }
    L.flags_.assign(static_cast<std::size_t>(total), 0);

    // Proximity sum and collision count per (t, lane, K). Summation order
    // matches sense_obstacles (front to rear) so rewards agree with rollouts.
    L.costs_.resize(static_cast<std::size_t>(horizon + 1));
    for (int t = 0; t <= horizon; ++t) {
        auto& c = L.costs_[static_cast<std::size_t>(t)];
        c.kmin = std::numeric_limits<int>::max();
        c.kmax = std::numeric_limits<int>::min();
        for (int o = L.omin_; o <= L.omax_; ++o) {
            const auto& b = box_mut(t, o);
            if (b.kmin > b.kmax) continue;
            c.kmin = std::min(c.kmin, b.kmin);
            c.kmax = std::max(c.kmax, b.kmax);
        }
        if (c.kmin > c.kmax) continue;
        const auto width = static_cast<std::size_t>(c.kmax - c.kmin + 1);
        const auto lanes = detail::manual_positions(sc, t);
        for (int lane = 0; lane < kLaneCount; ++lane) {
            auto& prox = c.prox[static_cast<std::size_t>(lane)];
            auto& coll = c.coll[static_cast<std::size_t>(lane)];
            prox.assign(width, 0.0);
            coll.assign(width, 0);
            const auto& xs = lanes[static_cast<std::size_t>(lane)];
            for (int k = c.kmin; k <= c.kmax; ++k) {
                const double ex = L.ego_x(t, k);
                double sum = 0.0;
                int hits = 0;
                for (double ox : xs) {
                    if (!in_sensed_window(ex, lane, ox, lane)) {
                        if (ox < ex) break;
                        continue;
                    }
                    const double f = proximity_penalty(bumper_gap(ex, ox), w.delta0, true);
                    sum += f;
                    if (f >= 1.0) ++hits;
                }
                prox[static_cast<std::size_t>(k - c.kmin)] = sum;
                coll[static_cast<std::size_t>(k - c.kmin)] = static_cast<std::uint8_t>(std::min(hits, 255));
            }
        }
    }

    // Forward reachability.
    L.per_step_count_.assign(static_cast<std::size_t>(horizon + 1), 0);
    const LatticeState init{0, ego.lane, 0, 0};
    L.flags_[static_cast<std::size_t>(L.index(init))] = DpLattice::kReachable;
    L.per_step_count_[0] = 1;
    for (int t = 0; t < horizon; ++t) {
        for (int lane = 0; lane < kLaneCount; ++lane)
            for (int o = L.omin_; o <= L.omax_; ++o) {
                const auto& b = box_mut(t, o);
                for (int k = b.kmin; k <= b.kmax; ++k) {
                    const LatticeState s{t, lane, k, o};
                    const auto f = L.flags_[static_cast<std::size_t>(L.index(s))];
                    if (!(f & DpLattice::kReachable) || (f & DpLattice::kTerminal)) continue;
                    for (Action a : kAllActions) {
                        const auto n = L.successor(s, a);
                        if (!n) continue;
                        auto& nf = L.flags_[static_cast<std::size_t>(L.index(*n))];
                        if (nf & DpLattice::kReachable) continue;
                        nf = DpLattice::kReachable;
                        if (collisions_terminal && L.collisions(n->t, n->lane, n->x_key) > 0) nf |= DpLattice::kTerminal;
                        ++L.per_step_count_[static_cast<std::size_t>(t + 1)];
                    }
                }
            }
    }
    for (auto n : L.per_step_count_) L.reachable_count_ += n;
    return L;
}

/// Optimal undiscounted value-to-go and action for every lattice state.
class DpSolution {
public:
    static constexpr std::int8_t kNoAction = -1;

    const DpLattice& lattice() const noexcept { return lattice_; }
    const RewardWeights& weights() const noexcept { return weights_; }

    double value(const LatticeState& s) const {
        const auto i = checked_index(s);
        return values_[static_cast<std::size_t>(i)];
    }

    /// nullopt at the horizon and at collision states.
    std::optional<Action> action(const LatticeState& s) const {
        const auto i = checked_index(s);
        const auto a = actions_[static_cast<std::size_t>(i)];
        if (a == kNoAction) return std::nullopt;
        return static_cast<Action>(a);
    }

    double initial_value() const { return value(initial_state()); }
    LatticeState initial_state() const { return {0, lattice_.start_lane(), 0, 0}; }

    /// Lattice coordinates of a simulator state of this scenario.
    LatticeState locate(const SimState& s) const {
        const auto& ego = s.ego();
        const double v0 = lattice_.v0();
        return {s.t, ego.lane, static_cast<int>(std::lround(2.0 * (ego.x - v0 * s.t))),
                static_cast<int>(std::lround(ego.v - v0))};
    }

private:
    friend DpSolution backward_induction(DpLattice, const RewardWeights&);

    std::int64_t checked_index(const LatticeState& s) const {
        const auto i = lattice_.index(s);
        if (i < 0 || !(lattice_.flags_at(i) & DpLattice::kReachable)) {
            throw std::logic_error("state (t=" + std::to_string(s.t) + ", lane=" + std::to_string(s.lane) +
                                   ", x_key=" + std::to_string(s.x_key) + ", v_off=" + std::to_string(s.v_off) +
                                   ") is not in the reachable lattice");
        }
        return i;
    }

    DpLattice lattice_;
    RewardWeights weights_;
    std::vector<double> values_;
    std::vector<std::int8_t> actions_;
};

/// Backward induction: V(T, .) = 0 and
/// V(s) = max over feasible a of r(s, a, s') + V(s'), with V(s') = 0 for a
/// collision successor. Ties go to the earlier action in kDpTieOrder.
inline DpSolution backward_induction(DpLattice lattice, const RewardWeights& w) {
    DpSolution sol;
    sol.weights_ = w;
    sol.values_.assign(lattice.storage_size(), 0.0);
    sol.actions_.assign(lattice.storage_size(), DpSolution::kNoAction);
    const int T = lattice.horizon();
    for (int t = T - 1; t >= 0; --t) {
        lattice.for_each_block(t, [&](int lane, int o, int kmin, int kmax, std::int64_t start) {
        for (int k = kmin; k <= kmax; ++k) {
            const auto i = static_cast<std::size_t>(start + (k - kmin));
            const auto f = lattice.flags_at(static_cast<std::int64_t>(i));
            if (!(f & DpLattice::kReachable) || (f & DpLattice::kTerminal)) continue;
            const LatticeState s{t, lane, k, o};
            double best = -std::numeric_limits<double>::infinity();
            std::int8_t best_a = DpSolution::kNoAction;
            for (Action a : kDpTieOrder) {
                const auto n = lattice.successor(s, a);
                if (!n) continue;
                const auto ni = lattice.index(*n);
                if (ni < 0) throw std::logic_error("successor outside lattice storage");
                const auto nf = lattice.flags_at(ni);
                if (!(nf & DpLattice::kReachable)) throw std::logic_error("successor missing from lattice");
                double q = lattice.transition_reward(s, *n, w);
                if (!(nf & DpLattice::kTerminal)) q += sol.values_[static_cast<std::size_t>(ni)];
                if (q > best) {
                    best = q;
                    best_a = static_cast<std::int8_t>(index_of(a));
                }
            }
            sol.values_[i] = best;
            sol.actions_[i] = best_a;
        }
        });
    }
    sol.lattice_ = std::move(lattice);
    return sol;
}

inline DpSolution solve_dp(const Scenario& sc, int horizon, const RewardWeights& w,
                           bool collisions_terminal = false) {
    return backward_induction(build_reachable_lattice(sc, horizon, w, collisions_terminal), w);
}

struct DpTrajectoryRow {
    int t = 0;
    int lane = 0;
    double x = 0.0;
    double v = 0.0;
    std::optional<Action> action;  // empty on the last row
    double value = 0.0;            // optimal value-to-go at this state
};

struct DpRollout {
    std::vector<DpTrajectoryRow> rows;
    double ret = 0.0;
    int lane_changes = 0;
    int collision_steps = 0;
    int desired_speed_steps = 0;
};

/// Replays the optimal policy through the simulator until the horizon or an
/// absorbing collision state. The undiscounted return
/// must reproduce V(initial); a gap above 1e-9 means the solver and simulator
/// disagree and is reported as std::runtime_error.
inline DpRollout rollout_optimal(const DpSolution& sol, const Scenario& sc, double desired_band = 0.5) {
    const auto& w = sol.weights();
    DpRollout out;
    SimState s = initial_state(sc);
    for (;;) {
        const auto ls = sol.locate(s);
        const auto a = sol.action(ls);
        out.rows.push_back({s.t, s.ego().lane, s.ego().x, s.ego().v, a, sol.value(ls)});
        if (!a) break;
        s = step(sc, s, *a);
        const auto r = transition_reward(s, w);
        out.ret += r.total;
        out.lane_changes += r.lane_change;
        if (std::abs(s.ego().v - w.desired_speed) <= desired_band) ++out.desired_speed_steps;
        if (r.collision_count > 0) ++out.collision_steps;
    }
    const double v0 = sol.initial_value();
    if (!(std::abs(out.ret - v0) < 1e-9)) {
        throw std::runtime_error("DP rollout return " + std::to_string(out.ret) + " differs from V(initial) " +
                                 std::to_string(v0));
    }
    return out;
}

inline void write_trajectory_csv(std::ostream& os, const DpRollout& r) {
    os << "t,lane,x,v,action,value\n";
    std::ostringstream line;
    line.precision(12);
    for (const auto& row : r.rows) {
        line.str({});
        line << row.t << ',' << row.lane << ',' << row.x << ',' << row.v << ','
             << (row.action ? name_of(*row.action) : std::string_view{}) << ',' << row.value << '\n';
        os << line.str();
    }
}

}  // namespace hwdrive

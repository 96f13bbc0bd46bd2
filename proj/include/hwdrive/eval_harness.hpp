#pragma once

// Policy evaluation over seeded scenario batches.
//
// Scenario i of a batch is drawn from seed `scenario_seed(seed, i)`, so two
// policies evaluated with the same seed see byte-identical traffic. Workers
// fill result slots by scenario index and reports are reduced in index order,
// so the job count never changes the output.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "hwdrive/ddqn_agent.hpp"
#include "hwdrive/dp_solver.hpp"
#include "hwdrive/perception.hpp"
#include "hwdrive/reward.hpp"
#include "hwdrive/traffic_sim.hpp"

namespace hwdrive {

struct EpisodeContext {
    const Scenario& scenario;
    const ScenarioConfig& config;
    const RewardWeights& weights;
    std::uint64_t seed;  // per-scenario seed, for stochastic policies
};

/// Maps an observation to an action. Implementations must return an action
/// inside `feasible`. `truth` is the exact simulator state; only the
/// omniscient DP benchmark reads it.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    virtual void begin_episode(const EpisodeContext&) {}
    virtual Action act(const OccupancyGrid& observation, ActionMask feasible, const SimState& truth) = 0;
    virtual void end_episode(double /*undiscounted_return*/) {}
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

class MaintainPolicy final : public Policy {
public:
    std::string name() const override { return "maintain"; }
    Action act(const OccupancyGrid&, ActionMask, const SimState&) override { return Action::Maintain; }
};

class RandomPolicy final : public Policy {
public:
    std::string name() const override { return "random"; }
    void begin_episode(const EpisodeContext& ctx) override { rng_.seed(ctx.seed ^ 0x5eed0fa11ULL); }
    Action act(const OccupancyGrid&, ActionMask feasible, const SimState&) override {
        std::uniform_int_distribution<int> pick(0, feasible.size() - 1);
        int which = pick(rng_);
        for (int i = 0; i < kActionCount; ++i)
            if (feasible.contains(i) && which-- == 0) return action_from_index(i);
        return Action::Maintain;
    }

private:
    Rng rng_;
};

class DdqnPolicy final : public Policy {
public:
    explicit DdqnPolicy(std::shared_ptr<const MlpParams> params) : params_(std::move(params)) {
        if (!params_ || params_->input_size() != kGridSize || params_->output_size() != kActionCount)
            throw std::invalid_argument("DDQN policy needs a 528 -> 7 network");
    }
    std::string name() const override { return "ddqn"; }
    Action act(const OccupancyGrid& observation, ActionMask feasible, const SimState&) override {
        return action_from_index(greedy_action(forward(*params_, grid_features(observation)), feasible));
    }

private:
    std::shared_ptr<const MlpParams> params_;
};

/// Solves each scenario exactly and follows the optimal table. Checks that the
/// realised return matches V(initial).
class DpPolicy final : public Policy {
public:
    std::string name() const override { return "dp"; }
    void begin_episode(const EpisodeContext& ctx) override {
        solution_ = solve_dp(ctx.scenario, ctx.config.duration_steps, ctx.weights, ctx.config.collision_terminates);
    }
    Action act(const OccupancyGrid&, ActionMask feasible, const SimState& truth) override {
        const auto a = solution_.action(solution_.locate(truth));
        if (!a || !feasible.contains(*a)) throw std::logic_error("DP table has no feasible action for this state");
        return *a;
    }
    void end_episode(double ret) override {
        if (!(std::abs(ret - solution_.initial_value()) < 1e-9))
            throw std::runtime_error("DP return does not match V(initial)");
    }
    const DpSolution& solution() const noexcept { return solution_; }

private:
    DpSolution solution_;
};

inline PolicyFactory make_policy_factory(const std::string& kind, std::shared_ptr<const MlpParams> params = {}) {
    if (kind == "dp") return [] { return std::make_unique<DpPolicy>(); };
    if (kind == "random") return [] { return std::make_unique<RandomPolicy>(); };
    if (kind == "maintain") return [] { return std::make_unique<MaintainPolicy>(); };
    if (kind == "ddqn") {
        if (!params) throw std::invalid_argument("ddqn policy needs a checkpoint");
        return [params] { return std::make_unique<DdqnPolicy>(params); };
    }
    throw std::invalid_argument("unknown policy '" + kind + "'");
}

// ---------------------------------------------------------------------------

struct EvalConfig {
    int spawn_period_s = 2;
    int scenarios = 100;
    std::uint64_t seed = 2024;
    double noise = 0.0;          // measurement error magnitude p
    double desired_band = 0.5;   // |v - v_d| <= band counts as desired speed
    int jobs = 1;
};

struct ScenarioResult {
    int index = 0;
    std::uint64_t seed = 0;
    double ret = 0.0;
    bool collided = false;
    int collision_steps = 0;
    int lane_changes = 0;
    int desired_speed_steps = 0;
    int steps = 0;  // decision steps actually simulated
};

struct MetricsReport {
    std::string policy;
    int spawn_period_s = 0;
    double noise = 0.0;
    int scenarios = 0;
    int collisions = 0;  // scenarios with at least one collision
    int lane_changes_total = 0;
    double pct_desired_speed = 0.0;
    double mean_return = 0.0;
    std::vector<ScenarioResult> rows;
};

inline std::uint64_t scenario_seed(std::uint64_t seed, int index) {
    // splitmix64 of (seed, index)
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(index) + 1;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// One scenario under one policy. The policy observes sensed obstacles with
/// optional measurement error; rewards and collisions use exact positions.
inline ScenarioResult run_episode(Policy& policy, const Scenario& sc, const ScenarioConfig& config,
                                  const RewardWeights& w, std::uint64_t seed, double noise, double desired_band) {
    ScenarioResult res;
    res.seed = seed;
    Rng noise_rng(seed ^ 0x0b5e55edULL);
    policy.begin_episode({sc, config, w, seed});
    SimState s = initial_state(sc);
    for (int t = 0; t < config.duration_steps; ++t) {
        const auto observed = apply_measurement_error(sense_obstacles(s), noise, noise_rng);
        const auto grid = encode(s.ego(), observed);
        const auto mask = feasible_actions(s);
        const Action a = policy.act(grid, mask, s);
        if (!mask.contains(a)) throw std::logic_error(policy.name() + " chose an infeasible action");
        s = step(sc, s, a);
        ++res.steps;
        const auto r = transition_reward(s, w);
        res.ret += r.total;
        res.lane_changes += r.lane_change;
        if (std::abs(s.ego().v - w.desired_speed) <= desired_band) ++res.desired_speed_steps;
        if (r.collision_count > 0) {
            res.collided = true;
            ++res.collision_steps;
            if (config.collision_terminates) break;
        }
    }
    policy.end_episode(res.ret);
    return res;
}

namespace detail {

template <class Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(0, i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) {
        pool.emplace_back([&, j] {
            try {
                for (int i; (i = next.fetch_add(1)) < n;) fn(j, i);
            } catch (...) {
                errors[static_cast<std::size_t>(j)] = std::current_exception();
                next.store(n);
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

inline MetricsReport summarize(std::string policy, const EvalConfig& eval, int duration_steps,
                               std::vector<ScenarioResult> rows) {
    MetricsReport rep;
    rep.policy = std::move(policy);
    rep.spawn_period_s = eval.spawn_period_s;
    rep.noise = eval.noise;
    rep.scenarios = static_cast<int>(rows.size());
    long desired = 0;
    double ret = 0.0;
    for (const auto& r : rows) {
        rep.collisions += r.collided ? 1 : 0;
        rep.lane_changes_total += r.lane_changes;
        desired += r.desired_speed_steps;
        ret += r.ret;
    }
    // Steps lost to a terminating collision count as not at desired speed.
    const double possible = static_cast<double>(rep.scenarios) * duration_steps;
    rep.pct_desired_speed = possible > 0 ? 100.0 * static_cast<double>(desired) / possible : 0.0;
    rep.mean_return = rep.scenarios > 0 ? ret / rep.scenarios : 0.0;
    rep.rows = std::move(rows);
    return rep;
}

/// Evaluates a policy on `eval.scenarios` seeded scenarios at one density.
inline MetricsReport run_batch(const PolicyFactory& factory, const EvalConfig& eval, ScenarioConfig base,
                               const RewardWeights& w) {
    if (eval.scenarios < 0) throw std::invalid_argument("scenario count must be >= 0");
    base.spawn_period_s = eval.spawn_period_s;
    base.validate();
    w.validate();
    const int n = eval.scenarios;
    std::vector<ScenarioResult> rows(static_cast<std::size_t>(n));
    const int jobs = std::max(1, std::min(eval.jobs, std::max(n, 1)));
    std::vector<std::unique_ptr<Policy>> workers;
    for (int j = 0; j < jobs; ++j) workers.push_back(factory());
    detail::parallel_for(n, jobs, [&](int worker, int i) {
        ScenarioConfig cfg = base;
        cfg.seed = scenario_seed(eval.seed, i);
        const Scenario sc = generate_scenario(cfg);
        auto r = run_episode(*workers[static_cast<std::size_t>(worker)], sc, cfg, w, cfg.seed, eval.noise,
                             eval.desired_band);
        r.index = i;
        rows[static_cast<std::size_t>(i)] = r;
    });
    return summarize(workers.front()->name(), eval, base.duration_steps, std::move(rows));
}

// ---------------------------------------------------------------------------

struct SweepResult {
    std::vector<int> densities;
    std::vector<double> magnitudes;
    std::vector<std::vector<int>> collisions;  // [density][magnitude]
};

inline SweepResult robustness_sweep(const PolicyFactory& factory, const std::vector<int>& densities,
                                    const std::vector<double>& magnitudes, EvalConfig eval,
                                    const ScenarioConfig& base, const RewardWeights& w) {
    SweepResult out{densities, magnitudes, {}};
    for (int d : densities) {
        std::vector<int> row;
        for (double m : magnitudes) {
            eval.spawn_period_s = d;
            eval.noise = m;
            row.push_back(run_batch(factory, eval, base, w).collisions);
        }
        out.collisions.push_back(std::move(row));
    }
    return out;
}

struct PairedComparison {
    int spawn_period_s = 0;
    MetricsReport a;
    MetricsReport b;
    int dominance_violations = 0;  // scenarios where b's return exceeds a's
};

inline std::vector<PairedComparison> compare_policies(const PolicyFactory& a, const PolicyFactory& b,
                                                      const std::vector<int>& densities, EvalConfig eval,
                                                      const ScenarioConfig& base, const RewardWeights& w,
                                                      double tolerance = 1e-9) {
    std::vector<PairedComparison> out;
    for (int d : densities) {
        eval.spawn_period_s = d;
        PairedComparison c;
        c.spawn_period_s = d;
        c.a = run_batch(a, eval, base, w);
        c.b = run_batch(b, eval, base, w);
        for (std::size_t i = 0; i < c.a.rows.size(); ++i) {
            if (c.a.rows[i].seed != c.b.rows[i].seed) throw std::logic_error("paired scenarios diverged");
            if (c.b.rows[i].ret > c.a.rows[i].ret + tolerance) ++c.dominance_violations;
        }
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV writers.

namespace detail {
inline std::string fmt_num(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}
}  // namespace detail

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsReport>& reports) {
    os << "policy,spawn_period_s,noise,scenarios,collisions,lane_changes,pct_desired_speed,mean_return\n";
    for (const auto& r : reports) {
        os << r.policy << ',' << r.spawn_period_s << ',' << detail::fmt_num(r.noise) << ',' << r.scenarios << ','
           << r.collisions << ',' << r.lane_changes_total << ',' << detail::fmt_num(r.pct_desired_speed) << ','
           << detail::fmt_num(r.mean_return) << '\n';
    }
}

inline void write_scenario_rows_csv(std::ostream& os, const MetricsReport& r) {
    os << "index,seed,return,collided,collision_steps,lane_changes,desired_speed_steps,steps\n";
    for (const auto& row : r.rows) {
        os << row.index << ',' << row.seed << ',' << detail::fmt_num(row.ret) << ',' << (row.collided ? 1 : 0) << ','
           << row.collision_steps << ',' << row.lane_changes << ',' << row.desired_speed_steps << ',' << row.steps
           << '\n';
    }
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& s) {
    os << "spawn_period_s";
    for (double m : s.magnitudes) os << ",noise_" << detail::fmt_num(m);
    os << '\n';
    for (std::size_t i = 0; i < s.densities.size(); ++i) {
        os << s.densities[i];
        for (int c : s.collisions[i]) os << ',' << c;
        os << '\n';
    }
}

inline void write_comparison_csv(std::ostream& os, const std::vector<PairedComparison>& cs) {
    os << "spawn_period_s,scenarios,policy_a,policy_b,collisions_a,collisions_b,lane_changes_a,lane_changes_b,"
          "pct_desired_a,pct_desired_b,mean_return_a,mean_return_b,mean_return_diff,dominance_violations\n";
    for (const auto& c : cs) {
        os << c.spawn_period_s << ',' << c.a.scenarios << ',' << c.a.policy << ',' << c.b.policy << ','
           << c.a.collisions << ',' << c.b.collisions << ',' << c.a.lane_changes_total << ','
           << c.b.lane_changes_total << ',' << detail::fmt_num(c.a.pct_desired_speed) << ','
           << detail::fmt_num(c.b.pct_desired_speed) << ',' << detail::fmt_num(c.a.mean_return) << ','
           << detail::fmt_num(c.b.mean_return) << ',' << detail::fmt_num(c.a.mean_return - c.b.mean_return) << ','
           << c.dominance_violations << '\n';
    }
}

}  // namespace hwdrive

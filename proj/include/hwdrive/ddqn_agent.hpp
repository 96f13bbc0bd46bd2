#pragma once

// Double DQN learner: uniform replay, epsilon-greedy exploration restricted to
// feasible actions, and a target network refreshed every target_sync_period
// gradient steps. TD targets use the online network to pick the next action
// and the target network to value it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwdrive/neural_net.hpp"
#include "hwdrive/perception.hpp"
#include "hwdrive/reward.hpp"
#include "hwdrive/traffic_sim.hpp"

namespace hwdrive {

/// Network input for a grid: speeds scaled by 1/25, off-road kept at -1.
inline Vector grid_features(const OccupancyGrid& g) {
    Vector x(kGridSize);
    const auto v = g.values();
    for (int i = 0; i < kGridSize; ++i) x(i) = v[static_cast<std::size_t>(i)] > 0.0 ? v[static_cast<std::size_t>(i)] / kMaxSpeed : v[static_cast<std::size_t>(i)];
    return x;
}

struct Transition {
    std::vector<float> s;
    int a = 0;
    double r = 0.0;
    std::vector<float> s_next;
    bool done = false;
    ActionMask feasible_next;
};

inline std::vector<float> to_float(const Vector& x) {
    std::vector<float> out(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(x(i));
    return out;
}

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay capacity must be > 0");
        data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::size_t size() const noexcept { return data_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }

    /// i-th oldest stored transition.
    const Transition& at(std::size_t i) const {
        if (i >= data_.size()) throw std::out_of_range("replay index out of range");
        return data_[(head_ + i) % data_.size()];
    }

    /// Uniform sample with replacement.
    std::vector<std::size_t> sample(std::size_t n, Rng& rng) const {
        if (data_.empty()) throw std::logic_error("cannot sample an empty replay buffer");
        std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
        std::vector<std::size_t> idx(n);
        for (auto& i : idx) i = pick(rng);
        return idx;
    }

private:
    std::size_t capacity_;
    std::vector<Transition> data_;
    std::size_t head_ = 0;
};

/// Highest-valued feasible action, lowest index on ties.
inline int greedy_action(const Vector& q, ActionMask feasible) {
    if (feasible.empty()) throw std::invalid_argument("no feasible action");
    int best = -1;
    for (int i = 0; i < kActionCount && i < q.size(); ++i) {
        if (!feasible.contains(i)) continue;
        if (best < 0 || q(i) > q(best)) best = i;
    }
    if (best < 0) throw std::invalid_argument("no feasible action within the Q vector");
    return best;
}

inline int select_action(const Vector& q, ActionMask feasible, double epsilon, Rng& rng) {
    if (feasible.empty()) throw std::invalid_argument("no feasible action");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
        std::uniform_int_distribution<int> pick(0, feasible.size() - 1);
        int which = pick(rng);
        for (int i = 0; i < kActionCount; ++i)
            if (feasible.contains(i) && which-- == 0) return i;
    }
    return greedy_action(q, feasible);
}

/// y = r for terminal transitions, else r + gamma * Q_target(s')[a*] with
/// a* the feasible argmax of Q_online(s').
inline double td_target(double r, const Vector& s_next, bool done, const MlpParams& online, const MlpParams& target,
                        double gamma, ActionMask feasible_next) {
    if (done || gamma == 0.0) return r;
    const int a_star = greedy_action(forward(online, s_next), feasible_next);
    return r + gamma * forward(target, s_next)(a_star);
}

struct TrainConfig {
    double gamma = 0.95;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_decay_fraction = 0.5;  // of the nominal step budget
    int batch_size = 32;
    int target_sync_period = 1000;  // gradient steps
    int episodes = 1000;
    std::size_t buffer_capacity = 50000;
    int warmup_transitions = 1000;
    int train_every = 1;        // environment steps per gradient step
    double reward_scale = 0.1;  // rewards are multiplied by this before learning
    AdamConfig adam{};
    std::vector<int> layer_sizes = kDefaultLayerSizes;
    std::uint64_t seed = 1;
    // Every validation_every episodes (and after the last one) the greedy
    // policy is scored on held-out scenarios at the training density; the
    // best-scoring snapshot is returned. 0 returns the final network.
    int validation_every = 250;
    int validation_scenarios = 50;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
        if (target_sync_period < 1) throw std::invalid_argument("target_sync_period must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (episodes < 0) throw std::invalid_argument("episodes must be >= 0");
        if (buffer_capacity == 0) throw std::invalid_argument("buffer_capacity must be > 0");
        if (train_every < 1) throw std::invalid_argument("train_every must be >= 1");
        if (!(reward_scale > 0.0)) throw std::invalid_argument("reward_scale must be > 0");
        if (!(epsilon_start >= 0 && epsilon_start <= 1 && epsilon_end >= 0 && epsilon_end <= 1))
            throw std::invalid_argument("epsilon values must be in [0, 1]");
        if (!(epsilon_decay_fraction > 0)) throw std::invalid_argument("epsilon_decay_fraction must be > 0");
        if (layer_sizes.size() < 2 || layer_sizes.front() != kGridSize || layer_sizes.back() != kActionCount)
            throw std::invalid_argument("layer sizes must start at 528 and end at 7");
        if (!(adam.learning_rate > 0)) throw std::invalid_argument("learning rate must be > 0");
        if (validation_every < 0) throw std::invalid_argument("validation_every must be >= 0");
        if (validation_every > 0 && validation_scenarios < 1)
            throw std::invalid_argument("validation_scenarios must be >= 1");
    }
};

/// Linear anneal from start to end over decay_steps, then flat.
inline double epsilon_at(const TrainConfig& c, std::int64_t step, std::int64_t decay_steps) {
    if (decay_steps <= 0 || step >= decay_steps) return c.epsilon_end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return c.epsilon_start + (c.epsilon_end - c.epsilon_start) * frac;
}

struct EpisodeLog {
    int episode = 0;
    double ret = 0.0;  // undiscounted, unscaled
    int collisions = 0;
    double epsilon = 0.0;
    double loss_mean = 0.0;  // NaN when no gradient step happened
};

struct ValidationLog {
    int episodes = 0;  // completed training episodes at this snapshot
    double mean_return = 0.0;
    int collisions = 0;  // validation scenarios with a collision
};

struct TrainingResult {
    MlpParams online;  // selected snapshot (final network without validation)
    MlpParams target;
    std::vector<EpisodeLog> log;
    std::vector<ValidationLog> validation;
    int selected_episodes = -1;  // snapshot chosen by validation, -1 if none
    std::int64_t env_steps = 0;
    std::int64_t gradient_steps = 0;
    std::int64_t syncs = 0;
    std::int64_t skipped_batches = 0;
};

inline void write_training_log(std::ostream& os, const std::vector<EpisodeLog>& log) {
    os << "episode,return,collisions,epsilon,loss_mean\n";
    os.precision(10);
    for (const auto& e : log) {
        os << e.episode << ',' << e.ret << ',' << e.collisions << ',' << e.epsilon << ',';
        if (std::isnan(e.loss_mean)) os << "nan"; else os << e.loss_mean;
        os << '\n';
    }
}

inline void write_validation_log(std::ostream& os, const std::vector<ValidationLog>& log) {
    os << "episodes,mean_return,collisions\n";
    os.precision(10);
    for (const auto& v : log) os << v.episodes << ',' << v.mean_return << ',' << v.collisions << '\n';
}

/// Undiscounted return of the greedy policy over one scenario.
inline double greedy_return(const MlpParams& p, const Scenario& sc, const ScenarioConfig& config,
                            const RewardWeights& w, bool* collided = nullptr) {
    SimState s = initial_state(sc);
    double ret = 0.0;
    bool hit = false;
    for (int t = 0; t < config.duration_steps; ++t) {
        const int a = greedy_action(forward(p, grid_features(encode(s))), feasible_actions(s));
        s = step(sc, s, action_from_index(a));
        const auto r = transition_reward(s, w);
        ret += r.total;
        if (r.collision_count > 0) {
            hit = true;
            if (config.collision_terminates) break;
        }
    }
    if (collided) *collided = hit;
    return ret;
}

/// Hooks for tests: called after every gradient step with the current nets.
struct TrainObserver {
    std::function<void(const MlpParams& online, const MlpParams& target, std::int64_t grad_step, bool synced)>
        on_gradient_step;
};

class DdqnTrainer {
public:
    DdqnTrainer(TrainConfig config, ScenarioConfig scenario, RewardWeights weights)
        : cfg_(std::move(config)), scenario_(scenario), weights_(weights), replay_(cfg_.buffer_capacity),
          rng_(cfg_.seed) {
        cfg_.validate();
        scenario_.validate();
        weights_.validate();
        online_ = MlpParams::initialized(cfg_.layer_sizes, cfg_.seed);
        target_ = online_;
        opt_ = OptimizerState(online_, cfg_.adam);
        decay_steps_ = static_cast<std::int64_t>(cfg_.epsilon_decay_fraction * cfg_.episodes *
                                                 scenario_.duration_steps);
    }

    const MlpParams& online() const noexcept { return online_; }
    const MlpParams& target() const noexcept { return target_; }
    const ReplayBuffer& replay() const noexcept { return replay_; }

    TrainingResult run(const TrainObserver& observer = {}) {
        TrainingResult res;
        MlpParams best;
        for (int ep = 0; ep < cfg_.episodes; ++ep) {
            res.log.push_back(run_episode(ep, observer));
            const int done = ep + 1;
            if (cfg_.validation_every > 0 && (done % cfg_.validation_every == 0 || done == cfg_.episodes)) {
                res.validation.push_back(validate(online_));
                res.validation.back().episodes = done;
                if (res.selected_episodes < 0 || res.validation.back().mean_return > best_score_) {
                    best_score_ = res.validation.back().mean_return;
                    res.selected_episodes = done;
                    best = online_;
                }
            }
        }
        res.online = res.selected_episodes >= 0 ? std::move(best) : online_;
        res.target = target_;
        res.env_steps = env_steps_;
        res.gradient_steps = grad_steps_;
        res.syncs = syncs_;
        res.skipped_batches = skipped_;
        return res;
    }

    /// Held-out scenario `i` used to score snapshots.
    Scenario validation_scenario(int i) const {
        ScenarioConfig sc = scenario_;
        sc.seed = (cfg_.seed ^ 0x76616c6964617465ULL) * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(i);
        return generate_scenario(sc);
    }

    ValidationLog validate(const MlpParams& p) const {
        ValidationLog v;
        for (int i = 0; i < cfg_.validation_scenarios; ++i) {
            bool hit = false;
            v.mean_return += greedy_return(p, validation_scenario(i), scenario_, weights_, &hit);
            v.collisions += hit ? 1 : 0;
        }
        v.mean_return /= cfg_.validation_scenarios;
        return v;
    }

    /// Scenario used for training episode `ep`.
    Scenario episode_scenario(int ep) const {
        ScenarioConfig sc = scenario_;
        sc.seed = cfg_.seed * 1000003ULL + static_cast<std::uint64_t>(ep);
        return generate_scenario(sc);
    }

private:
    EpisodeLog run_episode(int ep, const TrainObserver& observer) {
        const Scenario sc = episode_scenario(ep);
        SimState s = initial_state(sc);
        Vector obs = grid_features(encode(s));
        ActionMask mask = feasible_actions(s);
        EpisodeLog row;
        row.episode = ep;
        double loss_sum = 0.0;
        int loss_n = 0;
        for (int t = 0; t < scenario_.duration_steps; ++t) {
            const double eps = epsilon_at(cfg_, env_steps_, decay_steps_);
            row.epsilon = eps;
            const int a = select_action(forward(online_, obs), mask, eps, rng_);
            SimState next = step(sc, s, action_from_index(a));
            const double r = transition_reward(next, weights_).total;
            const bool collided = detect_collision(next, weights_.delta0);
            const bool done = collided && scenario_.collision_terminates;
            Vector obs_next = grid_features(encode(next));
            const ActionMask mask_next = feasible_actions(next);
            replay_.push({to_float(obs), a, r * cfg_.reward_scale, to_float(obs_next), done, mask_next});
            row.ret += r;
            ++env_steps_;

            if (static_cast<int>(replay_.size()) >= std::max(cfg_.warmup_transitions, cfg_.batch_size) &&
                env_steps_ % cfg_.train_every == 0) {
                const double loss = gradient_step();
                if (std::isfinite(loss)) {
                    loss_sum += loss;
                    ++loss_n;
                }
                const bool synced = grad_steps_ % cfg_.target_sync_period == 0;
                if (synced) {
                    target_ = online_;
                    ++syncs_;
                }
                if (observer.on_gradient_step) observer.on_gradient_step(online_, target_, grad_steps_, synced);
            }

            s = std::move(next);
            obs = std::move(obs_next);
            mask = mask_next;
            if (collided) row.collisions = 1;
            if (done) break;
        }
        row.loss_mean = loss_n > 0 ? loss_sum / loss_n : std::numeric_limits<double>::quiet_NaN();
        return row;
    }

    double gradient_step() {
        const auto n = static_cast<std::size_t>(cfg_.batch_size);
        const auto idx = replay_.sample(n, rng_);
        Matrix S(kGridSize, static_cast<Eigen::Index>(n));
        Matrix S2(kGridSize, static_cast<Eigen::Index>(n));
        for (std::size_t j = 0; j < n; ++j) {
            const auto& tr = replay_.at(idx[j]);
            for (int i = 0; i < kGridSize; ++i) {
                S(i, static_cast<Eigen::Index>(j)) = tr.s[static_cast<std::size_t>(i)];
                S2(i, static_cast<Eigen::Index>(j)) = tr.s_next[static_cast<std::size_t>(i)];
            }
        }
        const Matrix q_online_next = forward_batch(online_, S2);
        const Matrix q_target_next = forward_batch(target_, S2);
        std::vector<int> actions(n);
        std::vector<double> targets(n);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& tr = replay_.at(idx[j]);
            actions[j] = tr.a;
            double y = tr.r;
            if (!tr.done) {
                const int a_star = greedy_action(q_online_next.col(static_cast<Eigen::Index>(j)), tr.feasible_next);
                y += cfg_.gamma * q_target_next(a_star, static_cast<Eigen::Index>(j));
            }
            targets[j] = y;
        }
        const double loss = backward_batch(online_, S, actions, targets, grad_);
        ++grad_steps_;
        if (!std::isfinite(loss) || !grad_.all_finite()) {
            ++skipped_;
            return std::numeric_limits<double>::quiet_NaN();
        }
        sgd_update(online_, grad_, opt_);
        return loss;
    }

    TrainConfig cfg_;
    ScenarioConfig scenario_;
    RewardWeights weights_;
    ReplayBuffer replay_;
    Rng rng_;
    MlpParams online_;
    MlpParams target_;
    MlpGradient grad_;
    OptimizerState opt_;
    std::int64_t decay_steps_ = 0;
    double best_score_ = 0.0;
    std::int64_t env_steps_ = 0;
    std::int64_t grad_steps_ = 0;
    std::int64_t syncs_ = 0;
    std::int64_t skipped_ = 0;
};

inline TrainingResult train(const TrainConfig& config, const ScenarioConfig& scenario, const RewardWeights& weights,
                            const TrainObserver& observer = {}) {
    DdqnTrainer trainer(config, scenario, weights);
    return trainer.run(observer);
}

}  // namespace hwdrive

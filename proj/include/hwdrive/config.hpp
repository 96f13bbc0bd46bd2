#pragma once

// Run configuration: one JSON document with optional sections
//
//   { "seed": 1, "output_dir": "out",
//     "scenario": {...}, "reward": {...}, "train": {...}, "eval": {...} }
//
// Missing keys keep their defaults. Unknown keys and wrongly typed values are
// rejected with ConfigError.

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "hwdrive/ddqn_agent.hpp"
#include "hwdrive/eval_harness.hpp"
#include "hwdrive/reward.hpp"
#include "hwdrive/traffic_sim.hpp"

namespace hwdrive {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    ScenarioConfig scenario;
    RewardWeights reward;
    TrainConfig train;
    EvalConfig eval;

    void validate() const {
        try {
            scenario.validate();
            reward.validate();
            train.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (eval.scenarios < 0) throw ConfigError("eval.scenarios must be >= 0");
        if (eval.spawn_period_s <= 0) throw ConfigError("eval.spawn_period_s must be > 0");
        if (eval.noise < 0) throw ConfigError("eval.noise must be >= 0");
        if (eval.desired_band < 0) throw ConfigError("eval.desired_band must be >= 0");
        if (eval.jobs < 1) throw ConfigError("eval.jobs must be >= 1");
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    }
};

namespace detail {

using nlohmann::json;

class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError(where("") + " must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError(where(key) + " must be a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!it->is_number_integer()) throw ConfigError(where(key) + " must be an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (it->is_number_integer() && !it->is_number_unsigned())
                        throw ConfigError(where(key) + " must be >= 0");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw ConfigError(where(key) + " must be a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw ConfigError(where(key) + " must be a string");
            }
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
    }

private:
    std::string where(const std::string& key) const {
        if (name_.empty()) return key.empty() ? "config" : key;
        return key.empty() ? name_ : name_ + "." + key;
    }

    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig c;
    detail::Section top(j, "");
    top.get("seed", c.seed);
    top.get("output_dir", c.output_dir);

    static const nlohmann::json empty = nlohmann::json::object();
    auto section = [&](const char* name) -> const nlohmann::json& {
        const auto it = j.find(name);
        return it == j.end() ? empty : *it;
    };
    // Register section names as known keys.
    for (const char* name : {"scenario", "reward", "train", "eval"}) {
        nlohmann::json ignored;
        top.get(name, ignored);
    }
    top.finish();

    {
        detail::Section s(section("scenario"), "scenario");
        auto& v = c.scenario;
        s.get("duration_steps", v.duration_steps);
        s.get("spawn_period_s", v.spawn_period_s);
        s.get("ego_spawn_index", v.ego_spawn_index);
        s.get("speed_low", v.speed_low);
        s.get("speed_high", v.speed_high);
        s.get("desired_speed", v.desired_speed);
        s.get("entry_gap", v.entry_gap);
        s.get("collision_terminates", v.collision_terminates);
        s.finish();
    }
    {
        detail::Section s(section("reward"), "reward");
        auto& v = c.reward;
        s.get("w1_proximity", v.proximity);
        s.get("w2_speed", v.speed);
        s.get("w3_collision", v.collision);
        s.get("w4_accel", v.accel);
        s.get("w5_lane_change", v.lane_change);
        s.get("delta0", v.delta0);
        s.get("desired_speed", v.desired_speed);
        s.finish();
    }
    {
        detail::Section s(section("train"), "train");
        auto& v = c.train;
        s.get("gamma", v.gamma);
        s.get("epsilon_start", v.epsilon_start);
        s.get("epsilon_end", v.epsilon_end);
        s.get("epsilon_decay_fraction", v.epsilon_decay_fraction);
        s.get("batch_size", v.batch_size);
        s.get("target_sync_period", v.target_sync_period);
        s.get("episodes", v.episodes);
        s.get("buffer_capacity", v.buffer_capacity);
        s.get("warmup_transitions", v.warmup_transitions);
        s.get("train_every", v.train_every);
        s.get("reward_scale", v.reward_scale);
        s.get("learning_rate", v.adam.learning_rate);
        s.get("adam_beta1", v.adam.beta1);
        s.get("adam_beta2", v.adam.beta2);
        s.get("adam_epsilon", v.adam.epsilon);
        s.get("validation_every", v.validation_every);
        s.get("validation_scenarios", v.validation_scenarios);
        nlohmann::json hidden;
        s.get("hidden_layers", hidden);
        s.finish();
        if (!hidden.is_null()) {
            if (!hidden.is_array()) throw ConfigError("train.hidden_layers must be an array of integers");
            v.layer_sizes = {kGridSize};
            for (const auto& h : hidden) {
                if (!h.is_number_integer() || h.get<int>() < 1)
                    throw ConfigError("train.hidden_layers entries must be positive integers");
                v.layer_sizes.push_back(h.get<int>());
            }
            v.layer_sizes.push_back(kActionCount);
        }
    }
    {
        detail::Section s(section("eval"), "eval");
        auto& v = c.eval;
        s.get("spawn_period_s", v.spawn_period_s);
        s.get("scenarios", v.scenarios);
        s.get("noise", v.noise);
        s.get("desired_band", v.desired_band);
        s.get("jobs", v.jobs);
        s.finish();
    }
    // The reward's desired speed is the one the ego aims for; keep the two in step
    // unless the scenario section sets its own.
    if (!section("scenario").contains("desired_speed")) c.scenario.desired_speed = c.reward.desired_speed;
    c.train.seed = c.seed;
    c.eval.seed = c.seed;
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_run_config(j);
}

/// Fully resolved configuration, defaults included.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json hidden = nlohmann::json::array();
    for (std::size_t i = 1; i + 1 < c.train.layer_sizes.size(); ++i) hidden.push_back(c.train.layer_sizes[i]);
    return {
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"scenario",
         {{"duration_steps", c.scenario.duration_steps},
          {"spawn_period_s", c.scenario.spawn_period_s},
          {"ego_spawn_index", c.scenario.ego_spawn_index},
          {"speed_low", c.scenario.speed_low},
          {"speed_high", c.scenario.speed_high},
          {"desired_speed", c.scenario.desired_speed},
          {"entry_gap", c.scenario.entry_gap},
          {"collision_terminates", c.scenario.collision_terminates}}},
        {"reward",
         {{"w1_proximity", c.reward.proximity},
          {"w2_speed", c.reward.speed},
          {"w3_collision", c.reward.collision},
          {"w4_accel", c.reward.accel},
          {"w5_lane_change", c.reward.lane_change},
          {"delta0", c.reward.delta0},
          {"desired_speed", c.reward.desired_speed}}},
        {"train",
         {{"gamma", c.train.gamma},
          {"epsilon_start", c.train.epsilon_start},
          {"epsilon_end", c.train.epsilon_end},
          {"epsilon_decay_fraction", c.train.epsilon_decay_fraction},
          {"batch_size", c.train.batch_size},
          {"target_sync_period", c.train.target_sync_period},
          {"episodes", c.train.episodes},
          {"buffer_capacity", c.train.buffer_capacity},
          {"warmup_transitions", c.train.warmup_transitions},
          {"train_every", c.train.train_every},
          {"reward_scale", c.train.reward_scale},
          {"learning_rate", c.train.adam.learning_rate},
          {"adam_beta1", c.train.adam.beta1},
          {"adam_beta2", c.train.adam.beta2},
          {"adam_epsilon", c.train.adam.epsilon},
          {"validation_every", c.train.validation_every},
          {"validation_scenarios", c.train.validation_scenarios},
          {"hidden_layers", hidden}}},
        {"eval",
         {{"spawn_period_s", c.eval.spawn_period_s},
          {"scenarios", c.eval.scenarios},
          {"noise", c.eval.noise},
          {"desired_band", c.eval.desired_band},
          {"jobs", c.eval.jobs}}},
    };
}

}  // namespace hwdrive

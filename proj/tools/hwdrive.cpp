// hwdrive: train, evaluate and benchmark tactical highway driving policies.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hwdrive/config.hpp"
#include "hwdrive/ddqn_agent.hpp"
#include "hwdrive/dp_solver.hpp"
#include "hwdrive/eval_harness.hpp"
#include "hwdrive/neural_net.hpp"

namespace fs = std::filesystem;
using namespace hwdrive;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kIo = 3, kCheckpoint = 4 };

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config_path;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> episodes;
    std::optional<int> jobs;
    std::optional<int> density;
    std::optional<int> scenarios;
    std::optional<double> noise;
    std::string checkpoint;
    std::string policy = "ddqn";
    std::string policy_b = "ddqn";
    std::vector<int> densities = {8, 4, 2, 1};
    std::vector<double> magnitudes = {0.0, 0.05, 0.10, 0.15};
    int scenario_index = 0;
};

RunConfig resolve(const Options& o) {
    RunConfig c = o.config_path.empty() ? parse_run_config(nlohmann::json::object()) : load_run_config(o.config_path);
    if (const char* env = std::getenv("HWDRIVE_OUTPUT_DIR"); env && *env) c.output_dir = env;
    if (o.output_dir) c.output_dir = *o.output_dir;
    if (o.seed) {
        c.seed = *o.seed;
        c.train.seed = *o.seed;
        c.eval.seed = *o.seed;
    }
    if (o.episodes) c.train.episodes = *o.episodes;
    if (o.jobs) c.eval.jobs = *o.jobs;
    if (o.density) c.eval.spawn_period_s = *o.density;
    if (o.scenarios) c.eval.scenarios = *o.scenarios;
    if (o.noise) c.eval.noise = *o.noise;
    c.validate();
    return c;
}

fs::path prepare_output(const RunConfig& c) {
    const fs::path dir(c.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    const fs::path probe = dir / ".hwdrive-write-test";
    {
        std::ofstream f(probe);
        if (!f) throw IoError("output directory " + dir.string() + " is not writable");
    }
    fs::remove(probe, ec);
    std::ofstream f(dir / "resolved_config.json");
    f << to_json(c).dump(2) << '\n';
    if (!f) throw IoError("cannot write resolved_config.json");
    return dir;
}

void print_config(const RunConfig& c) { std::cout << "resolved config:\n" << to_json(c).dump(2) << '\n'; }

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    fn(f);
    f.flush();
    if (!f) throw IoError("write failed for " + path.string());
}

PolicyFactory factory_for(const std::string& kind, const std::string& checkpoint) {
    std::shared_ptr<const MlpParams> params;
    if (kind == "ddqn") {
        if (checkpoint.empty()) throw ConfigError("policy ddqn needs --checkpoint");
        std::ifstream in(checkpoint);
        if (!in) throw IoError("cannot open checkpoint " + checkpoint);
        params = std::make_shared<const MlpParams>(load_checkpoint(in));
        if (params->input_size() != kGridSize || params->output_size() != kActionCount)
            throw CheckpointError("checkpoint network is not 528 -> 7");
    } else if (kind != "dp" && kind != "random" && kind != "maintain") {
        throw ConfigError("unknown policy '" + kind + "'");
    }
    return make_policy_factory(kind, params);
}

int cmd_train(const Options& o) {
    const RunConfig c = resolve(o);
    print_config(c);
    const fs::path dir = prepare_output(c);
    ScenarioConfig sc = c.scenario;
    const auto result = train(c.train, sc, c.reward);
    write_file(dir / "checkpoint.txt", [&](std::ostream& os) { save_checkpoint(os, result.online); });
    write_file(dir / "training_log.csv", [&](std::ostream& os) { write_training_log(os, result.log); });
    write_file(dir / "validation.csv", [&](std::ostream& os) { write_validation_log(os, result.validation); });
    int collisions = 0;
    for (const auto& e : result.log) collisions += e.collisions > 0 ? 1 : 0;
    std::cout << "episodes " << result.log.size() << ", env steps " << result.env_steps << ", gradient steps "
              << result.gradient_steps << ", target syncs " << result.syncs << ", episodes with collision "
              << collisions << '\n';
    if (result.selected_episodes >= 0)
        std::cout << "checkpoint is the snapshot after " << result.selected_episodes
                  << " episodes (best held-out return at the training density)\n";
    std::cout << "wrote " << (dir / "checkpoint.txt").string() << " and " << (dir / "training_log.csv").string()
              << '\n';
    return kOk;
}

int cmd_eval(const Options& o) {
    const RunConfig c = resolve(o);
    print_config(c);
    const auto factory = factory_for(o.policy, o.checkpoint);
    const fs::path dir = prepare_output(c);
    const auto rep = run_batch(factory, c.eval, c.scenario, c.reward);
    write_file(dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, {rep}); });
    write_file(dir / "scenarios.csv", [&](std::ostream& os) { write_scenario_rows_csv(os, rep); });
    write_metrics_csv(std::cout, {rep});
    return kOk;
}

int cmd_solve_dp(const Options& o) {
    const RunConfig c = resolve(o);
    print_config(c);
    const fs::path dir = prepare_output(c);
    ScenarioConfig sc = c.scenario;
    sc.spawn_period_s = c.eval.spawn_period_s;
    sc.seed = scenario_seed(c.eval.seed, o.scenario_index);
    const Scenario scenario = generate_scenario(sc);
    const auto sol = solve_dp(scenario, sc.duration_steps, c.reward, sc.collision_terminates);
    const auto roll = rollout_optimal(sol, scenario, c.eval.desired_band);
    write_file(dir / "scenario.txt", [&](std::ostream& os) { write_scenario(os, scenario); });
    write_file(dir / "dp_trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, roll); });
    std::cout.precision(12);
    std::cout << "V(initial) " << sol.initial_value() << ", rollout return " << roll.ret << ", states "
              << sol.lattice().state_count() << ", lane changes " << roll.lane_changes << ", collision steps "
              << roll.collision_steps << '\n';
    return kOk;
}

int cmd_compare(const Options& o) {
    const RunConfig c = resolve(o);
    print_config(c);
    const auto a = factory_for("dp", "");
    const auto b = factory_for(o.policy_b, o.checkpoint);
    const fs::path dir = prepare_output(c);
    const auto cmp = compare_policies(a, b, o.densities, c.eval, c.scenario, c.reward);
    write_file(dir / "comparison.csv", [&](std::ostream& os) { write_comparison_csv(os, cmp); });
    std::vector<MetricsReport> reps;
    for (const auto& x : cmp) {
        reps.push_back(x.a);
        reps.push_back(x.b);
    }
    write_file(dir / "metrics.csv", [&](std::ostream& os) { write_metrics_csv(os, reps); });
    write_comparison_csv(std::cout, cmp);
    return kOk;
}

int cmd_sweep(const Options& o) {
    const RunConfig c = resolve(o);
    print_config(c);
    const auto factory = factory_for(o.policy, o.checkpoint);
    const fs::path dir = prepare_output(c);
    const auto sweep = robustness_sweep(factory, o.densities, o.magnitudes, c.eval, c.scenario, c.reward);
    write_file(dir / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, sweep); });
    write_sweep_csv(std::cout, sweep);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tactical highway driving: DDQN training, DP benchmark, evaluation"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON run config")->check(CLI::ExistingFile);
        sub->add_option("--output-dir", o.output_dir, "output directory (overrides HWDRIVE_OUTPUT_DIR)");
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_option("--jobs", o.jobs, "evaluation worker threads")->check(CLI::PositiveNumber);
    };
    auto eval_opts = [&](CLI::App* sub) {
        sub->add_option("-n,--scenarios", o.scenarios, "scenarios per density")->check(CLI::NonNegativeNumber);
        sub->add_option("--noise", o.noise, "measurement error magnitude")->check(CLI::NonNegativeNumber);
    };

    auto* train_cmd = app.add_subcommand("train", "train a DDQN policy");
    common(train_cmd);
    train_cmd->add_option("--episodes", o.episodes, "training episodes")->check(CLI::NonNegativeNumber);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate one policy at one density");
    common(eval_cmd);
    eval_opts(eval_cmd);
    eval_cmd->add_option("--policy", o.policy, "ddqn | dp | random | maintain")->capture_default_str();
    eval_cmd->add_option("--checkpoint", o.checkpoint, "DDQN checkpoint");
    eval_cmd->add_option("--density", o.density, "spawn period in seconds")->check(CLI::PositiveNumber);

    auto* dp_cmd = app.add_subcommand("solve-dp", "solve one scenario exactly and write the optimal trajectory");
    common(dp_cmd);
    dp_cmd->add_option("--density", o.density, "spawn period in seconds")->check(CLI::PositiveNumber);
    dp_cmd->add_option("--index", o.scenario_index, "scenario index within the seeded batch")
        ->check(CLI::NonNegativeNumber);

    auto* cmp_cmd = app.add_subcommand("compare", "DP against another policy on paired scenarios");
    common(cmp_cmd);
    eval_opts(cmp_cmd);
    cmp_cmd->add_option("--policy", o.policy_b, "policy compared against DP")->capture_default_str();
    cmp_cmd->add_option("--checkpoint", o.checkpoint, "DDQN checkpoint");
    cmp_cmd->add_option("--densities", o.densities, "spawn periods")->capture_default_str();

    auto* sweep_cmd = app.add_subcommand("sweep", "collision counts over density x measurement error");
    common(sweep_cmd);
    eval_opts(sweep_cmd);
    sweep_cmd->add_option("--policy", o.policy, "ddqn | dp | random | maintain")->capture_default_str();
    sweep_cmd->add_option("--checkpoint", o.checkpoint, "DDQN checkpoint");
    sweep_cmd->add_option("--densities", o.densities, "spawn periods")->capture_default_str();
    sweep_cmd->add_option("--magnitudes", o.magnitudes, "error magnitudes")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*train_cmd) return cmd_train(o);
        if (*eval_cmd) return cmd_eval(o);
        if (*dp_cmd) return cmd_solve_dp(o);
        if (*cmp_cmd) return cmd_compare(o);
        if (*sweep_cmd) return cmd_sweep(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kCheckpoint;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
    return kOther;
}

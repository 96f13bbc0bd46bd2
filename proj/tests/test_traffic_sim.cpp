#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hwdrive/traffic_sim.hpp"

using namespace hwdrive;

namespace {

Scenario lone_ego(int lane, double v0) {
    Scenario sc;
    sc.events.push_back({0, lane, v0, true});
    sc.ego_event = 0;
    return sc;
}

SimState state_with(const Scenario& sc, std::vector<VehicleState> others) {
    SimState s = initial_state(sc);
    for (auto& o : others) s.vehicles.push_back(o);
    return s;
}

int pre_ego_spawns(const Scenario& sc) {
    int n = 0;
    for (int i = 0; i < sc.ego_event; ++i) n += sc.events[static_cast<std::size_t>(i)].is_ego ? 0 : 1;
    return n;
}

}  // namespace

TEST(GenerateScenario, EgoIsTenthEntryAtEighteenSecondsForTwoSecondPeriod) {
    ScenarioConfig c;
    c.spawn_period_s = 2;
    c.seed = 7;
    const auto sc = generate_scenario(c);
    ASSERT_EQ(sc.ego_event, 9);
    EXPECT_EQ(sc.ego_time(), 18);
    for (int i = 0; i <= 9; ++i) EXPECT_EQ(sc.events[static_cast<std::size_t>(i)].time_s, 2 * i);
}

TEST(GenerateScenario, EightSecondPeriodPutsEgoAtSeventyTwo) {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        ScenarioConfig c;
        c.spawn_period_s = 8;
        c.seed = seed;
        const auto sc = generate_scenario(c);
        EXPECT_EQ(sc.ego_time(), 72);
        // Entries 1..9 at 0, 8, ..., 64 precede the tenth (ego) entry.
        EXPECT_EQ(pre_ego_spawns(sc), 9);
        EXPECT_LE(sc.events.back().time_s, 72 + c.duration_steps);
        EXPECT_GT(sc.events.back().time_s + c.spawn_period_s, 72 + c.duration_steps);
    }
}

TEST(GenerateScenario, SameSeedSameScenario) {
    ScenarioConfig c;
    c.spawn_period_s = 1;
    c.seed = 99;
    EXPECT_EQ(generate_scenario(c), generate_scenario(c));
    c.seed = 100;
    EXPECT_NE(generate_scenario(c).events, generate_scenario(ScenarioConfig{.spawn_period_s = 1, .seed = 99}).events);
}

TEST(GenerateScenario, EntriesRespectSpeedRangeAndEntryGap) {
    for (int p : {8, 4, 2, 1}) {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            ScenarioConfig c;
            c.spawn_period_s = p;
            c.seed = seed;
            const auto sc = generate_scenario(c);
            ASSERT_GE(sc.ego_event, 0);
            EXPECT_EQ(std::count_if(sc.events.begin(), sc.events.end(), [](auto& e) { return e.is_ego; }), 1);
            for (std::size_t i = 0; i < sc.events.size(); ++i) {
                const auto& e = sc.events[i];
                EXPECT_GE(e.v0, c.speed_low);
                EXPECT_LE(e.v0, c.speed_high);
                if (i > 0) EXPECT_GE(e.time_s, sc.events[i - 1].time_s);
                EXPECT_GE(e.time_s, static_cast<int>(i) * p);
                double rear = 1e300;
                for (std::size_t j = 0; j < i; ++j) {
                    const auto& f = sc.events[j];
                    if (f.lane == e.lane) rear = std::min(rear, f.v0 * (e.time_s - f.time_s) - kVehicleLength);
                }
                EXPECT_GE(rear, c.entry_gap) << "p=" << p << " seed=" << seed << " event " << i;
            }
        }
    }
}

TEST(GenerateScenario, LanesUniformWhenNothingBlocks) {
    int counts[3] = {0, 0, 0};
    int n = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        ScenarioConfig c;
        c.spawn_period_s = 8;
        c.seed = seed;
        for (const auto& e : generate_scenario(c).events) {
            ++counts[e.lane];
            ++n;
        }
    }
    for (int l = 0; l < 3; ++l) EXPECT_NEAR(static_cast<double>(counts[l]) / n, 1.0 / 3.0, 0.02);
}

TEST(GenerateScenario, InvalidConfigRejected) {
    ScenarioConfig c;
    c.spawn_period_s = 0;
    EXPECT_THROW(generate_scenario(c), std::invalid_argument);
    c = {};
    c.speed_low = 18;
    c.speed_high = 17;
    EXPECT_THROW(generate_scenario(c), std::invalid_argument);
    c = {};
    c.ego_spawn_index = 0;
    EXPECT_THROW(generate_scenario(c), std::invalid_argument);
}

TEST(ScenarioText, RoundTripIsExact) {
    ScenarioConfig c;
    c.spawn_period_s = 1;
    c.seed = 5;
    const auto sc = generate_scenario(c);
    std::stringstream ss;
    write_scenario(ss, sc);
    EXPECT_EQ(read_scenario(ss), sc);
}

TEST(ScenarioText, MalformedInputRejected) {
    std::istringstream no_ego("0 1 15 0\n");
    EXPECT_THROW(read_scenario(no_ego), std::runtime_error);
    std::istringstream bad_lane("0 3 15 1\n");
    EXPECT_THROW(read_scenario(bad_lane), std::runtime_error);
    std::istringstream order("4 1 15 0\n2 1 15 1\n");
    EXPECT_THROW(read_scenario(order), std::runtime_error);
    std::istringstream two_egos("0 1 15 1\n2 1 15 1\n");
    EXPECT_THROW(read_scenario(two_egos), std::runtime_error);
    std::istringstream ok("# comment\n\n0 1 15 0\n2 0 16.5 1\n");
    const auto sc = read_scenario(ok);
    EXPECT_EQ(sc.ego_event, 1);
    EXPECT_EQ(sc.events.size(), 2u);
}

TEST(Step, KinematicExamples) {
    const auto sc = lone_ego(1, 20.0);
    auto s = state_with(sc, {{100, 2, 30.0, 15.0, kVehicleLength}});
    auto m = step(sc, s, Action::Maintain);
    EXPECT_DOUBLE_EQ(m.ego().x, 20.0);
    EXPECT_DOUBLE_EQ(m.ego().v, 20.0);
    auto a = step(sc, s, Action::Accel1);
    EXPECT_DOUBLE_EQ(a.ego().x, 20.5);
    EXPECT_DOUBLE_EQ(a.ego().v, 21.0);
    EXPECT_DOUBLE_EQ(a.prev_ego_speed, 20.0);

    auto r = s;
    for (int i = 0; i < 3; ++i) r = step(sc, r, Action::Maintain);
    EXPECT_DOUBLE_EQ(r.vehicles[1].x, 30.0 + 45.0);
    EXPECT_EQ(r.vehicles[1].lane, 2);
    EXPECT_EQ(r.t, 3);
}

TEST(Step, LaneChangesAndPrevFields) {
    const auto sc = lone_ego(1, 18.0);
    auto s = initial_state(sc);
    s = step(sc, s, Action::LaneLeft);
    EXPECT_EQ(s.ego().lane, 0);
    EXPECT_EQ(s.prev_ego_lane, 1);
    EXPECT_DOUBLE_EQ(s.ego().x, 18.0);
    s = step(sc, s, Action::Decel2);
    EXPECT_EQ(s.prev_ego_lane, 0);
    EXPECT_DOUBLE_EQ(s.prev_ego_speed, 18.0);
    EXPECT_DOUBLE_EQ(s.ego().v, 16.0);
    EXPECT_DOUBLE_EQ(s.ego().x, 18.0 + 17.0);
}

TEST(Step, InfeasibleActionIsContractViolation) {
    const auto sc = lone_ego(0, 25.0);
    const auto s = initial_state(sc);
    EXPECT_THROW(step(sc, s, Action::LaneLeft), std::logic_error);
    EXPECT_THROW(step(sc, s, Action::Accel1), std::logic_error);
}

TEST(Step, SpawnsEnterAtRoadOriginOnTime) {
    Scenario sc;
    sc.events = {{0, 0, 15.0, false}, {4, 1, 20.0, true}, {5, 2, 12.0, false}, {7, 0, 13.0, false}};
    sc.ego_event = 1;
    auto s = initial_state(sc);
    ASSERT_EQ(s.vehicles.size(), 2u);
    EXPECT_DOUBLE_EQ(s.vehicles[1].x, 60.0);
    s = step(sc, s, Action::Maintain);
    ASSERT_EQ(s.vehicles.size(), 3u);
    EXPECT_DOUBLE_EQ(s.vehicles[2].x, 0.0);
    EXPECT_EQ(s.vehicles[2].lane, 2);
    s = step(sc, s, Action::Maintain);
    s = step(sc, s, Action::Maintain);
    ASSERT_EQ(s.vehicles.size(), 4u);
    EXPECT_DOUBLE_EQ(s.vehicles[1].x, 15.0 * 7);
    EXPECT_DOUBLE_EQ(s.vehicles[2].x, 24.0);
}

TEST(FeasibleActions, MaskingExamples) {
    auto mask_for = [](int lane, double v) { return feasible_actions(initial_state(lone_ego(lane, v))); };

    const auto m0 = mask_for(0, 21.0);
    EXPECT_FALSE(m0.contains(Action::LaneLeft));
    EXPECT_EQ(m0.size(), 6);

    const auto slow = mask_for(1, 0.5);
    EXPECT_FALSE(slow.contains(Action::Decel1));
    EXPECT_FALSE(slow.contains(Action::Decel2));
    EXPECT_EQ(slow.size(), 5);

    EXPECT_EQ(mask_for(1, 12.0), ActionMask::all());

    const auto m2 = mask_for(2, 24.0);
    EXPECT_FALSE(m2.contains(Action::LaneRight));
    EXPECT_FALSE(m2.contains(Action::Accel2));
    EXPECT_TRUE(m2.contains(Action::Accel1));

    EXPECT_TRUE(mask_for(1, 0.0).contains(Action::Maintain));
    EXPECT_TRUE(mask_for(1, 25.0).contains(Action::Maintain));
}

class CollisionThreshold : public ::testing::TestWithParam<double> {};

TEST_P(CollisionThreshold, BoundaryExamples) {
    const double d0 = GetParam();
    const auto sc = lone_ego(1, 20.0);
    // leader whose rear bumper sits exactly d0 ahead of the ego front bumper
    auto s = state_with(sc, {{100, 1, d0 + kVehicleLength, 20.0, kVehicleLength}});
    EXPECT_TRUE(detect_collision(s, d0));
    s = state_with(sc, {{100, 1, d0 + 0.5 + kVehicleLength, 20.0, kVehicleLength}});
    EXPECT_FALSE(detect_collision(s, d0));
    s = state_with(sc, {{100, 0, 1.0 + kVehicleLength, 20.0, kVehicleLength}});
    EXPECT_FALSE(detect_collision(s, d0));
    // follower d0 behind the ego rear bumper
    s = state_with(sc, {{100, 1, -kVehicleLength - d0, 20.0, kVehicleLength}});
    EXPECT_TRUE(detect_collision(s, d0));
}

INSTANTIATE_TEST_SUITE_P(Delta0, CollisionThreshold, ::testing::Values(3.0, 5.0, 10.0));

TEST(Simulation, DeterministicAndOnLattice) {
    ScenarioConfig c;
    c.spawn_period_s = 1;
    c.seed = 42;
    const auto sc = generate_scenario(c);
    auto run = [&](std::uint64_t action_seed) {
        Rng rng(action_seed);
        std::vector<SimState> traj{initial_state(sc)};
        for (int t = 0; t < 60; ++t) {
            const auto mask = feasible_actions(traj.back());
            std::vector<Action> opts;
            for (Action a : kAllActions)
                if (mask.contains(a)) opts.push_back(a);
            std::uniform_int_distribution<std::size_t> pick(0, opts.size() - 1);
            traj.push_back(step(sc, traj.back(), opts[pick(rng)]));
        }
        return traj;
    };
    const auto a = run(3);
    const auto b = run(3);
    EXPECT_EQ(a, b);
    const double v0 = sc.ego().v0;
    double x = 0.0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        const auto& e = a[i].ego();
        const double dv = e.v - v0;
        EXPECT_NEAR(dv, std::round(dv), 1e-9);
        const double k = 2.0 * (e.x - v0 * static_cast<double>(i));
        EXPECT_NEAR(k, std::round(k), 1e-9);
        x += a[i - 1].ego().v + 0.5 * (e.v - a[i - 1].ego().v);
        EXPECT_DOUBLE_EQ(e.x, x);
        EXPECT_GE(e.v, 0.0);
        EXPECT_LE(e.v, 25.0);
        for (std::size_t k = 1; k < a[i].vehicles.size(); ++k) {
            const auto& m = a[i].vehicles[k];
            EXPECT_EQ(m.lane, sc.events[static_cast<std::size_t>(m.id)].lane);
            EXPECT_EQ(m.v, sc.events[static_cast<std::size_t>(m.id)].v0);
        }
    }
}

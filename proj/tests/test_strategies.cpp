#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "gridcascade/strategies.hpp"
#include "gridcascade/synth.hpp"
#include "gridcascade/topology.hpp"
#include "oracles/oracles.hpp"

using namespace gridcascade;

namespace {

Bus bus(std::string id, double demand, double cap) {
    Bus b;
    b.id = std::move(id);
    b.demand = demand;
    b.generation_capacity = cap;
    return b;
}

Line line(std::string id, std::string a, std::string b, double s = 1.0) {
    Line l;
    l.id = std::move(id);
    l.from_bus = std::move(a);
    l.to_bus = std::move(b);
    l.susceptance = s;
    return l;
}

// Hub "h" with leaves "l1".."lk"; every bus has both load and generation so
// leaves survive as islands.
PowerGrid star(int leaves) {
    std::vector<Bus> buses{bus("h", 10, 100)};
    std::vector<Line> lines;
    for (int i = 1; i <= leaves; ++i) {
        buses.push_back(bus("l" + std::to_string(i), 10, 20));
        lines.push_back(line("e" + std::to_string(i), "h", "l" + std::to_string(i)));
    }
    return PowerGrid(buses, lines);
}

bool is_permutation_of_alive(const std::vector<BusIndex>& order, const NetworkView& v) {
    std::vector<char> seen(v.bus_alive.size(), 0);
    for (BusIndex b : order) {
        if (b >= seen.size() || seen[b] || !v.bus_alive[b]) return false;
        seen[b] = 1;
    }
    for (BusIndex b = 0; b < seen.size(); ++b)
        if (v.bus_alive[b] && !seen[b]) return false;
    return true;
}

const std::vector<Strategy> kAll = {Strategy::Random,      Strategy::Degree,
                                    Strategy::Betweenness, Strategy::ElectricalCentrality,
                                    Strategy::EntropicDegreeLimit, Strategy::EntropicDegreeFlow};

}  // namespace

TEST(EntropicDegree, SingleLineIsItsWeight) {
    EXPECT_DOUBLE_EQ(entropic_degree({7.5}), 7.5);
}

TEST(EntropicDegree, TwoEqualLines) {
    EXPECT_NEAR(entropic_degree({2.0, 2.0}), (1.0 + std::log(2.0)) * 4.0, 1e-12);
    EXPECT_NEAR(entropic_degree({2.0, 2.0}), 6.7726, 5e-5);
}

TEST(EntropicDegree, EqualWeightsClosedForm) {
    for (int d = 1; d <= 6; ++d)
        for (double w : {0.5, 1.0, 3.0}) {
            const std::vector<double> ws(static_cast<std::size_t>(d), w);
            EXPECT_NEAR(entropic_degree(ws), (1.0 + std::log(static_cast<double>(d))) * d * w, 1e-12);
        }
}

TEST(EntropicDegree, ParallelLinesAggregatePerNeighbour) {
    // Bus A: two parallel lines to B (w 1 + 3) and one line to C (w 4).
    const PowerGrid g({bus("A", 0, 10), bus("B", 1, 0), bus("C", 1, 0)},
                      {line("ab1", "A", "B"), line("ab2", "A", "B"), line("ac", "A", "C")});
    const LimitSet ls{LimitMethod::real(), {1.0, 3.0, 4.0}};
    const auto order = rank_nodes(NetworkView::whole(g), nullptr, &ls, Strategy::EntropicDegreeLimit);
    EXPECT_EQ(order.front(), 0u);
    EXPECT_NEAR(entropic_degree({4.0, 4.0}), (1.0 + std::log(2.0)) * 8.0, 1e-12);
}

TEST(RankNodes, StarDegreeHubFirst) {
    const PowerGrid g = star(5);
    const auto order = rank_nodes(NetworkView::whole(g), nullptr, nullptr, Strategy::Degree);
    EXPECT_EQ(order.front(), g.bus_index("h"));
    // Leaves tie and follow in id order.
    for (std::size_t i = 1; i < order.size(); ++i) EXPECT_EQ(g.bus(order[i]).id, "l" + std::to_string(i));
}

TEST(RankNodes, BetweennessPathMiddleFirst) {
    const PowerGrid g({bus("a", 0, 10), bus("b", 1, 0), bus("c", 1, 0)}, {line("ab", "a", "b"), line("bc", "b", "c")});
    const auto order = rank_nodes(NetworkView::whole(g), nullptr, nullptr, Strategy::Betweenness);
    EXPECT_EQ(order, (std::vector<BusIndex>{1, 0, 2}));
}

TEST(RankNodes, ElectricalDistanceChangesRanking) {
    // Square a-b-c-d-a; a-b has reactance 10, so a<->b traffic detours via d, c.
    const PowerGrid g({bus("a", 0, 10), bus("b", 1, 0), bus("c", 1, 0), bus("d", 1, 0)},
                      {line("ab", "a", "b", 0.1), line("bc", "b", "c"), line("cd", "c", "d"), line("da", "d", "a")});
    const auto plain = betweenness(NetworkView::whole(g), false);
    const auto elec = betweenness(NetworkView::whole(g), true);
    for (double v : plain) EXPECT_DOUBLE_EQ(v, 0.5);
    // a-b goes a-d-c-b, a-c goes a-d-c, b-d goes b-c-d.
    EXPECT_EQ(elec, (std::vector<double>{0.0, 0.0, 2.0, 2.0}));
    const auto order = rank_nodes(NetworkView::whole(g), nullptr, nullptr, Strategy::ElectricalCentrality);
    EXPECT_NE(order, rank_nodes(NetworkView::whole(g), nullptr, nullptr, Strategy::Betweenness));
}

TEST(RankNodes, BetweennessMatchesDefinition) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        oracle::RandomGridOptions opt;
        opt.max_buses = 9;
        opt.max_extra_lines = 10;
        PowerGrid base = oracle::random_grid(rng, opt);
        // Integer reactances so that equal-length paths tie exactly in the oracle.
        std::vector<Line> lines = base.lines();
        std::vector<double> reactance(lines.size());
        for (std::size_t l = 0; l < lines.size(); ++l) {
            reactance[l] = static_cast<double>(1 + rng() % 3);
            lines[l].susceptance = 1.0 / reactance[l];
        }
        const PowerGrid g(base.buses(), lines);
        const std::size_t n = g.bus_count();
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<std::vector<double>> hop(n, std::vector<double>(n, inf)), elec = hop;
        for (LineIndex l = 0; l < g.line_count(); ++l) {
            const auto a = g.from_index(l), b = g.to_index(l);
            hop[a][b] = hop[b][a] = 1.0;
            elec[a][b] = elec[b][a] = std::min(elec[a][b], reactance[l]);
        }
        const auto want_hop = oracle::betweenness_by_definition(hop);
        const auto want_elec = oracle::betweenness_by_definition(elec);
        const auto got_hop = betweenness(NetworkView::whole(g), false);
        const auto got_elec = betweenness(NetworkView::whole(g), true);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_NEAR(got_hop[i], want_hop[i], 1e-9) << "trial " << trial;
            EXPECT_NEAR(got_elec[i], want_elec[i], 1e-9) << "trial " << trial;
        }
    }
}

TEST(RankNodes, EveryStrategyIsAPermutationOfSurvivors) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        oracle::RandomGridOptions opt;
        opt.max_buses = 12;
        opt.with_limits = true;
        const PowerGrid g = oracle::random_grid(rng, opt);
        const FlowState fs = initial_flows(g);
        const LimitSet ls = real_limits(g);
        NetworkView v = NetworkView::whole(g);
        for (auto& a : v.bus_alive) a = (rng() % 4) != 0;
        for (auto& a : v.line_alive) a = (rng() % 5) != 0;
        for (Strategy s : kAll) {
            const auto order = rank_nodes(v, &fs, &ls, s, trial);
            EXPECT_TRUE(is_permutation_of_alive(order, v)) << strategy_name(s);
            EXPECT_EQ(order, rank_nodes(v, &fs, &ls, s, trial)) << strategy_name(s);
        }
    }
}

TEST(RankNodes, MissingInputsRejected) {
    const PowerGrid g = star(3);
    const auto v = NetworkView::whole(g);
    EXPECT_THROW(rank_nodes(v, nullptr, nullptr, Strategy::EntropicDegreeFlow), ArgumentError);
    EXPECT_THROW(rank_nodes(v, nullptr, nullptr, Strategy::EntropicDegreeLimit), ArgumentError);
    const LimitSet topo = topological_limits(g);
    EXPECT_THROW(rank_nodes(v, nullptr, &topo, Strategy::EntropicDegreeLimit), ArgumentError);
}

TEST(RankNodes, EntropicByFlowOnFixtureIsDeterministic) {
    const PowerGrid& g = fixtures::planted_a5();
    const FlowState fs = initial_flows(g);
    const LimitSet ls = real_limits(g);
    const auto a = rank_nodes(NetworkView::whole(g), &fs, &ls, Strategy::EntropicDegreeFlow);
    const auto b = rank_nodes(NetworkView::whole(g), &fs, &ls, Strategy::EntropicDegreeFlow);
    EXPECT_EQ(a, b);
    // Under uniform planting limits are 5x flows, so both weightings rank alike
    // except where zero-flow floors intervene.
    const auto c = rank_nodes(NetworkView::whole(g), &fs, &ls, Strategy::EntropicDegreeLimit);
    EXPECT_EQ(a.size(), c.size());
}

TEST(MakePlan, FixedRandomIsDeterministic) {
    const PowerGrid& g = fixtures::planted_a5();
    AttackPlan p;
    p.seed = 99;
    const auto a = make_plan(p, g, nullptr, nullptr).order();
    const auto b = make_plan(p, g, nullptr, nullptr).order();
    EXPECT_EQ(a, b);
    p.seed = 100;
    EXPECT_NE(a, make_plan(p, g, nullptr, nullptr).order());
}

namespace {

// Generator hub G feeding 24 loads; P hangs off L1 and goes dark once L1 falls.
// Order: L1..L18, P, L19..L24, G.
struct FlexibleFixture {
    PowerGrid grid;
    std::vector<BusIndex> order;

    FlexibleFixture() {
        std::vector<Bus> buses{bus("G", 0, 1000), bus("P", 5, 0)};
        std::vector<Line> lines{line("p", "L01", "P")};
        for (int i = 1; i <= 24; ++i) {
            char id[8];
            std::snprintf(id, sizeof id, "L%02d", i);
            buses.push_back(bus(id, 10, 0));
            lines.push_back(line(std::string("g") + id, "G", id));
        }
        grid = PowerGrid(buses, lines);
        for (int i = 1; i <= 18; ++i) order.push_back(static_cast<BusIndex>(i + 1));
        order.push_back(1);
        for (int i = 19; i <= 24; ++i) order.push_back(static_cast<BusIndex>(i + 1));
        order.push_back(0);
    }
};

std::vector<BusIndex> targets_of(const SimulationTrace& t) {
    std::vector<BusIndex> out;
    for (const auto& r : t.rounds) out.insert(out.end(), r.targets.begin(), r.targets.end());
    return out;
}

}  // namespace

TEST(AttackSchedule, FlexibleTopsUpPastCascadeLosses) {
    FlexibleFixture fx;
    AttackPlan p;
    p.attack_type = AttackType::Flexible;
    p.target_count = 20;
    AttackSchedule sched(p, fx.order, fx.grid.bus_count());
    const auto trace = run_attack(fx.grid, topological_limits(fx.grid), Physics::Topological, sched);
    const auto targets = targets_of(trace);
    ASSERT_EQ(targets.size(), 20u);
    EXPECT_EQ(std::count(targets.begin(), targets.end(), fx.order[18]), 0);  // rank 19 lost to cascade
    EXPECT_EQ(targets.back(), fx.order[20]);                                 // rank 21 added
}

TEST(AttackSchedule, FixedStopsAtTheRankedPrefix) {
    FlexibleFixture fx;
    AttackPlan p;
    p.attack_type = AttackType::Fixed;
    p.target_count = 20;
    AttackSchedule sched(p, fx.order, fx.grid.bus_count());
    const auto trace = run_attack(fx.grid, topological_limits(fx.grid), Physics::Topological, sched);
    const auto targets = targets_of(trace);
    EXPECT_EQ(targets.size(), 19u);  // k - f
    EXPECT_EQ(targets.back(), fx.order[19]);
}

TEST(AttackSchedule, AdaptiveDegreeOnStar) {
    const PowerGrid g = star(4);
    AttackPlan p;
    p.strategy = Strategy::Degree;
    p.attack_type = AttackType::Adaptive;
    auto sched = make_plan(p, g, nullptr, nullptr);
    EXPECT_TRUE(sched.order().empty());
    const auto trace = run_attack(g, topological_limits(g), Physics::Topological, sched);
    ASSERT_EQ(trace.rounds.size(), 5u);
    EXPECT_EQ(g.bus(trace.rounds[0].targets[0]).id, "h");
    EXPECT_EQ(g.bus(trace.rounds[1].targets[0]).id, "l1");
    EXPECT_EQ(g.bus(trace.rounds[2].targets[0]).id, "l2");
}

TEST(AttackSchedule, SimultaneousIsOneGroup) {
    const PowerGrid g = star(6);
    AttackPlan p;
    p.strategy = Strategy::Degree;
    p.regime = RemovalRegime::simultaneous(3);
    auto sched = make_plan(p, g, nullptr, nullptr);
    const auto trace = run_attack(g, topological_limits(g), Physics::Topological, sched);
    ASSERT_EQ(trace.rounds.size(), 1u);
    EXPECT_EQ(trace.rounds[0].targets.size(), 3u);
    EXPECT_EQ(trace.rounds[0].round, 1u);
}

TEST(AttackSchedule, HybridRemovesGroupsWithSettling) {
    const PowerGrid g = star(6);
    AttackPlan p;
    p.strategy = Strategy::Degree;
    p.regime = RemovalRegime::hybrid(3);
    p.target_count = 6;
    p.attack_type = AttackType::Flexible;
    auto sched = make_plan(p, g, nullptr, nullptr);
    const auto trace = run_attack(g, topological_limits(g), Physics::Topological, sched);
    ASSERT_EQ(trace.rounds.size(), 2u);
    EXPECT_EQ(trace.rounds[0].targets.size(), 3u);
    EXPECT_EQ(trace.rounds[1].targets.size(), 3u);
}

TEST(AttackPlan, ValidationOfGroupSizes) {
    const PowerGrid g = star(3);
    AttackPlan p;
    p.regime = RemovalRegime::hybrid(0);
    EXPECT_THROW(make_plan(p, g, nullptr, nullptr), ArgumentError);
    p.regime = RemovalRegime::simultaneous(5);
    EXPECT_THROW(make_plan(p, g, nullptr, nullptr), ArgumentError);
    p.regime = RemovalRegime::simultaneous(4);
    EXPECT_NO_THROW(make_plan(p, g, nullptr, nullptr));
    p.regime = RemovalRegime::sequential();
    p.target_count = 9;
    EXPECT_THROW(make_plan(p, g, nullptr, nullptr), ArgumentError);
}

TEST(AttackPlan, NamesParse) {
    for (Strategy s : kAll) EXPECT_EQ(parse_strategy(strategy_name(s)), s);
    for (AttackType t : {AttackType::Fixed, AttackType::Flexible, AttackType::Adaptive})
        EXPECT_EQ(parse_attack_type(attack_type_name(t)), t);
    EXPECT_THROW(parse_strategy("pagerank"), ArgumentError);
    EXPECT_THROW(parse_attack_type("random"), ArgumentError);
    EXPECT_THROW(RemovalRegime::parse("batch", 2), ArgumentError);
}

TEST(AttackPlan, JsonReplayIsExact) {
    const PowerGrid& g = fixtures::planted_a5();
    const FlowState fs = initial_flows(g);
    const LimitSet ls = real_limits(g);
    AttackPlan p;
    p.strategy = Strategy::Random;
    p.seed = 5;
    p.attack_type = AttackType::Flexible;
    p.target_count = 40;
    auto original = make_plan(p, g, &fs, &ls);
    const nlohmann::json j = plan_to_json(original, g);
    EXPECT_EQ(j.at("order").size(), g.bus_count());
    auto replay = plan_from_json(nlohmann::json::parse(j.dump()), g);
    EXPECT_EQ(replay.order(), original.order());
    const auto t1 = run_attack(g, ls, Physics::CascadingDC, original);
    const auto t2 = run_attack(g, ls, Physics::CascadingDC, replay);
    EXPECT_TRUE(t1.same_outcome(t2));
    EXPECT_EQ(targets_of(t1).size(), 40u);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "gridcascade/cascade.hpp"
#include "gridcascade/line_limits.hpp"
#include "gridcascade/synth.hpp"
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

Line line(std::string id, std::string a, std::string b) {
    Line l;
    l.id = std::move(id);
    l.from_bus = std::move(a);
    l.to_bus = std::move(b);
    return l;
}

// Triangle whose intact flows are 2/3, 1/3, 1/3 MW.
PowerGrid triangle() {
    return PowerGrid({bus("1", 0, 1), bus("2", 1, 0), bus("3", 0, 0)},
                     {line("l12", "1", "2"), line("l13", "1", "3"), line("l32", "3", "2")});
}

const LinearLimitModel kTable2{2.30, 2.46, 0.68, 1.00};

SyntheticGrid linear_planted(std::uint64_t seed, std::size_t nodes = 200, std::size_t lines = 270) {
    SynthSpec spec;
    spec.nodes = nodes;
    spec.lines = lines;
    spec.seed = seed;
    spec.planting = Planting::linear(kTable2);
    return synth_grid(spec);
}

}  // namespace

TEST(ProportionalLimits, AlphaOneEqualsFlows) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        const PowerGrid g = oracle::random_grid(rng);
        const FlowState fs = initial_flows(g);
        const LimitSet s = proportional_limits(g, fs, 1.0);
        for (LineIndex l = 0; l < g.line_count(); ++l) {
            const double f = std::abs(fs.flow[l]);
            EXPECT_EQ(s.limits[l], f > kZeroFlowMw ? f : kLimitFloorMw);
        }
    }
}

TEST(ProportionalLimits, TriangleAlphaThree) {
    const PowerGrid g = triangle();
    const FlowState fs = initial_flows(g);
    const LimitSet s = proportional_limits(g, fs, 3.0);
    EXPECT_EQ(s.method.name(), "pl_3");
    EXPECT_NEAR(s.limits[0], 2.0, 1e-12);
    EXPECT_NEAR(s.limits[1], 1.0, 1e-12);
    EXPECT_NEAR(s.limits[2], 1.0, 1e-12);
}

TEST(ProportionalLimits, ZeroFlowGetsFloor) {
    // The line between the two load buses carries nothing by symmetry.
    const PowerGrid g({bus("G", 0, 100), bus("A", 10, 0), bus("B", 10, 0)},
                      {line("ga", "G", "A"), line("gb", "G", "B"), line("ab", "A", "B")});
    const FlowState fs = initial_flows(g);
    ASSERT_LE(std::abs(fs.flow[2]), kZeroFlowMw);
    EXPECT_EQ(proportional_limits(g, fs, 5.0).limits[2], 5.0);
    EXPECT_EQ(proportional_limits(g, fs, 0.5).limits[2], 1.0);
}

TEST(ProportionalLimits, NonPositiveAlphaRejected) {
    const PowerGrid g = triangle();
    const FlowState fs = initial_flows(g);
    EXPECT_THROW(proportional_limits(g, fs, 0.0), ArgumentError);
    EXPECT_THROW(proportional_limits(g, fs, -1.0), ArgumentError);
    EXPECT_THROW(proportional_limits(g, fs, std::nan("")), ArgumentError);
}

TEST(ProportionalLimits, MonotoneInAlpha) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
        const PowerGrid g = oracle::random_grid(rng);
        const FlowState fs = initial_flows(g);
        for (std::size_t a = 0; a + 1 < kDefaultAlphaGrid.size(); ++a) {
            const auto lo = proportional_limits(g, fs, kDefaultAlphaGrid[a]);
            const auto hi = proportional_limits(g, fs, kDefaultAlphaGrid[a + 1]);
            for (LineIndex l = 0; l < g.line_count(); ++l) EXPECT_LE(lo.limits[l], hi.limits[l]);
        }
    }
}

// Spec example; on the bundled fixture some single removals do overload lines
// whose intact flow is a few MW, see the project notes.
TEST(ProportionalLimits, AlphaFiftyNoRoundOneTripOnFixture) {
    const PowerGrid& g = fixtures::planted_a5();
    const LimitSet pl = proportional_limits(g, initial_flows(g), 50.0);
    std::size_t removals_with_trips = 0;
    for (BusIndex b = 0; b < g.bus_count(); ++b) {
        CascadeSimulator sim(g, pl, Physics::CascadingDC);
        const std::vector<BusIndex> target{b};
        const RoundRecord* rec = sim.attack(target);
        if (rec && !rec->tripped.empty()) ++removals_with_trips;
    }
    EXPECT_EQ(removals_with_trips, 0u);
}

TEST(TopologicalLimits, UnboundedAndEmpty) {
    const PowerGrid g = triangle();
    const LimitSet s = topological_limits(g);
    ASSERT_EQ(s.limits.size(), 3u);
    EXPECT_TRUE(s.unbounded());
    for (double v : s.limits) EXPECT_TRUE(std::isinf(v));
    EXPECT_TRUE(topological_limits(PowerGrid{}).limits.empty());
}

TEST(LimitMethod, NamesRoundTrip) {
    for (const auto& m : {LimitMethod::real(), LimitMethod::volt_pf(), LimitMethod::pf(), LimitMethod::topological(),
                          LimitMethod::proportional(1.05), LimitMethod::proportional(50)})
        EXPECT_TRUE(LimitMethod::parse(m.name()) == m) << m.name();
    EXPECT_THROW(LimitMethod::parse("pl_0"), ArgumentError);
    EXPECT_THROW(LimitMethod::parse("pl_x"), ArgumentError);
    EXPECT_THROW(LimitMethod::parse("thermal"), ArgumentError);
}

TEST(LinearModel, DirectEvaluation) {
    const LinearLimitModel m{2.30, 2.46, std::nullopt, 1.00};
    EXPECT_NEAR(m.predict_thousands(1000.0, VoltageClass::V400), 5.76, 1e-12);
    EXPECT_NEAR(m.predict_mw(1000.0, VoltageClass::V400), 5760.0, 1e-9);
    EXPECT_NEAR(m.predict_mw(1000.0, VoltageClass::V275), 4760.0, 1e-9);
    const LinearLimitModel negative{-1.0, 0.0, std::nullopt, std::nullopt};
    EXPECT_EQ(negative.predict_mw(10.0, VoltageClass::V132), kLimitFloorMw);
}

TEST(FitLinearModel, RecoversPlantedCoefficients) {
    const auto sg = linear_planted(5);
    const LimitSet real = real_limits(sg.grid);
    const LinearFit fit = fit_linear_model(sg.grid, sg.initial, real, true, 10, 42);
    ASSERT_EQ(fit.folds.size(), 10u);
    for (const auto& m : fit.folds) {
        EXPECT_NEAR(m.bias, 2.30, 1e-6);
        EXPECT_NEAR(m.flow, 2.46, 1e-6);
        ASSERT_TRUE(m.v275 && m.v400);
        EXPECT_NEAR(*m.v275, 0.68, 1e-6);
        EXPECT_NEAR(*m.v400, 1.00, 1e-6);
    }
    const AccuracyReport rep = score_limits(fit.predicted, real);
    EXPECT_NEAR(rep.r_squared, 1.0, 1e-12);
    EXPECT_NEAR(rep.rmse, 0.0, 1e-6);
}

TEST(FitLinearModel, LeaveOneOutStillRecovers) {
    const auto sg = linear_planted(6, 60, 80);
    const LimitSet real = real_limits(sg.grid);
    const LinearFit fit = fit_linear_model(sg.grid, sg.initial, real, true, sg.grid.line_count(), 1);
    ASSERT_EQ(fit.folds.size(), sg.grid.line_count());
    for (const auto& m : fit.folds) {
        EXPECT_NEAR(m.bias, 2.30, 1e-6);
        EXPECT_NEAR(m.flow, 2.46, 1e-6);
        ASSERT_TRUE(m.v275 && m.v400);
        EXPECT_NEAR(*m.v275, 0.68, 1e-6);
        EXPECT_NEAR(*m.v400, 1.00, 1e-6);
    }
}

TEST(FitLinearModel, ConstantLimitsGiveInterceptOnly) {
    SynthSpec spec;
    spec.nodes = 80;
    spec.lines = 110;
    spec.seed = 2;
    const auto sg = synth_grid(spec);
    std::vector<Line> lines = sg.grid.lines();
    for (auto& l : lines) l.real_limit = 500.0;
    const PowerGrid g(sg.grid.buses(), lines);
    const LinearFit fit = fit_linear_model(g, sg.initial, real_limits(g), false, 10, 3);
    for (const auto& m : fit.folds) {
        EXPECT_NEAR(m.bias, 0.5, 1e-9);
        EXPECT_NEAR(m.flow, 0.0, 1e-9);
        EXPECT_FALSE(m.v275 || m.v400);
    }
    for (double v : fit.predicted.limits) EXPECT_NEAR(v, 500.0, 1e-6);
}

TEST(FitLinearModel, CollinearVoltageIndicatorDroppedWithWarning) {
    SynthSpec spec;
    spec.nodes = 60;
    spec.lines = 80;
    spec.seed = 4;
    spec.share_275 = 0.0;
    spec.share_400 = 0.0;
    spec.planting = Planting::linear({1.0, 2.0, std::nullopt, std::nullopt});
    const auto sg = synth_grid(spec);
    const LinearFit fit = fit_linear_model(sg.grid, sg.initial, real_limits(sg.grid), true, 5, 9);
    EXPECT_FALSE(fit.warnings.empty());
    for (const auto& m : fit.folds) {
        EXPECT_FALSE(m.v275.has_value());
        EXPECT_FALSE(m.v400.has_value());
        EXPECT_NEAR(m.bias, 1.0, 1e-6);
        EXPECT_NEAR(m.flow, 2.0, 1e-6);
    }
}

TEST(FitLinearModel, FoldAssignmentSeededAndOutOfFold) {
    const auto sg = linear_planted(8, 50, 70);
    const LimitSet real = real_limits(sg.grid);
    const LinearFit a = fit_linear_model(sg.grid, sg.initial, real, false, 10, 77);
    const LinearFit b = fit_linear_model(sg.grid, sg.initial, real, false, 10, 77);
    EXPECT_EQ(a.fold_of_line, b.fold_of_line);
    EXPECT_EQ(a.predicted.limits, b.predicted.limits);
    for (LineIndex l = 0; l < sg.grid.line_count(); ++l) {
        const auto& m = a.folds[a.fold_of_line[l]];
        EXPECT_EQ(a.predicted.limits[l],
                  m.predict_mw(std::abs(sg.initial.flow[l]), sg.grid.line(l).voltage_class));
    }
    EXPECT_EQ(a.predicted.method, LimitMethod::pf());
}

TEST(FitLinearModel, InvalidFoldCountsRejected) {
    const auto sg = linear_planted(9, 30, 40);
    const LimitSet real = real_limits(sg.grid);
    EXPECT_THROW(fit_linear_model(sg.grid, sg.initial, real, true, 1, 0), ArgumentError);
    EXPECT_THROW(fit_linear_model(sg.grid, sg.initial, real, true, 41, 0), ArgumentError);
}

TEST(ScoreLimits, IdentityIsPerfect) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(1.0, 1000.0);
    for (int i = 0; i < 100; ++i) {
        LimitSet x{LimitMethod::real(), std::vector<double>(1 + i % 17)};
        for (auto& v : x.limits) v = u(rng);
        const auto rep = score_limits(x, x);
        EXPECT_EQ(rep.r_squared, 1.0);
        EXPECT_EQ(rep.rmse, 0.0);
        EXPECT_EQ(rep.mape, 0.0);
    }
}

TEST(ScoreLimits, DoubledPredictionHasMapeOne) {
    LimitSet real{LimitMethod::real(), {10, 20, 35, 400}};
    LimitSet pred = real;
    for (auto& v : pred.limits) v *= 2.0;
    EXPECT_DOUBLE_EQ(score_limits(pred, real).mape, 1.0);
}

TEST(ScoreLimits, HandComputedReport) {
    LimitSet real{LimitMethod::real(), {1, 2, 3}};
    LimitSet pred{LimitMethod::proportional(1), {1, 2, 5}};
    const auto rep = score_limits(pred, real);
    // SS_res = 4, SS_tot = 2, RMSE = sqrt(4/3), MAPE = (2/3)/3.
    EXPECT_NEAR(rep.r_squared, -1.0, 1e-15);
    EXPECT_NEAR(rep.rmse, std::sqrt(4.0 / 3.0), 1e-15);
    EXPECT_NEAR(rep.mape, 2.0 / 9.0, 1e-15);
}

TEST(ScoreLimits, ZeroRealLimitRejected) {
    LimitSet real{LimitMethod::real(), {0, 2}};
    LimitSet pred{LimitMethod::real(), {1, 2}};
    EXPECT_THROW(score_limits(pred, real), ArgumentError);
}

TEST(ScoreLimits, ReportJsonRoundTrip) {
    const AccuracyReport r{0.25, 13.5, 0.125};
    nlohmann::json j = r;
    const auto back = j.get<AccuracyReport>();
    EXPECT_EQ(back.r_squared, r.r_squared);
    EXPECT_EQ(back.rmse, r.rmse);
    EXPECT_EQ(back.mape, r.mape);
}

TEST(AlphaSweep, NoisyPlantingMinimisedNearTruth) {
    SynthSpec spec;
    spec.seed = 21;
    const auto sg = synth_grid(spec);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<Line> lines = sg.grid.lines();
    for (LineIndex l = 0; l < lines.size(); ++l)
        lines[l].real_limit = std::max(3.5 * std::abs(sg.initial.flow[l]) * (1.0 + noise(rng)), 1.0);
    const PowerGrid g(sg.grid.buses(), lines);
    std::vector<double> alphas;
    for (int i = 0; i <= 60; ++i) alphas.push_back(1.0 + 0.1 * i);
    const auto sweep = alpha_sweep(g, sg.initial, real_limits(g), alphas);
    std::size_t best = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (sweep[i].report.rmse < sweep[best].report.rmse) best = i;
    EXPECT_NEAR(sweep[best].alpha, 3.5, 0.1 + 1e-12);
    // Unimodal: strictly decreasing to the minimum, strictly increasing after.
    for (std::size_t i = 1; i <= best; ++i) EXPECT_LT(sweep[i].report.rmse, sweep[i - 1].report.rmse);
    for (std::size_t i = best + 1; i < sweep.size(); ++i) EXPECT_GT(sweep[i].report.rmse, sweep[i - 1].report.rmse);
}

TEST(AlphaSweep, PlantedAlphaIsMinimumOfDefaultGrid) {
    const PowerGrid& g = fixtures::planted_a5();
    const FlowState fs = initial_flows(g);
    const auto sweep = alpha_sweep(g, fs, real_limits(g), kDefaultAlphaGrid);
    std::size_t best = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (sweep[i].report.rmse < sweep[best].report.rmse) best = i;
    EXPECT_EQ(sweep[best].alpha, 5.0);
    EXPECT_NEAR(sweep[best].report.rmse, 0.0, 1e-9);
}

TEST(AlphaDistribution, PlantedUniform) {
    const PowerGrid& g = fixtures::planted_a5();
    const auto d = alpha_distribution(real_limits(g), initial_flows(g));
    EXPECT_DOUBLE_EQ(d.mean, 5.0);
    EXPECT_DOUBLE_EQ(d.median, 5.0);
    std::size_t counted = 0;
    for (auto c : d.histogram.counts) counted += c;
    EXPECT_EQ(counted + d.zero_flow_lines, g.line_count());
}

TEST(AlphaDistribution, HalfTwoHalfSix) {
    LimitSet real{LimitMethod::real(), {2, 4, 6, 18, 7}};
    FlowState fs;
    fs.flow = {1, -2, 1, 3, 0};
    const auto d = alpha_distribution(real, fs);
    EXPECT_DOUBLE_EQ(d.mean, 4.0);
    EXPECT_DOUBLE_EQ(d.median, 4.0);
    EXPECT_EQ(d.zero_flow_lines, 1u);
    EXPECT_FALSE(d.alpha[4].has_value());
}

TEST(AlphaDistribution, HeterogeneousMatchesGeneratorRecord) {
    SynthSpec spec;
    spec.seed = 11;
    spec.planting = Planting::lognormal(5.12, 2.5);
    const auto sg = synth_grid(spec);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& a : sg.planted_alpha)
        if (a) {
            sum += *a;
            ++n;
        }
    const auto d = alpha_distribution(real_limits(sg.grid), sg.initial);
    EXPECT_NEAR(d.mean, sum / static_cast<double>(n), 1e-9);
    EXPECT_EQ(d.zero_flow_lines, sg.grid.line_count() - n);
}

TEST(AlphaDistribution, BundledHeterogeneousFixtureHasLongRightTail) {
    const PowerGrid& g = fixtures::heterogeneous();
    const auto d = alpha_distribution(real_limits(g), initial_flows(g));
    EXPECT_NEAR(d.mean, 5.12, 0.5);
    EXPECT_LT(d.median, d.mean);
}

TEST(LimitSetCsv, RoundTrip) {
    const auto sg = linear_planted(10, 30, 40);
    const LimitSet pl = proportional_limits(sg.grid, sg.initial, 1.05);
    std::stringstream ss;
    write_limit_set(ss, sg.grid, pl);
    const LimitSet back = read_limit_set(ss, "limits.csv", sg.grid);
    EXPECT_TRUE(back.method == pl.method);
    EXPECT_EQ(back.limits, pl.limits);

    const LimitSet topo = topological_limits(sg.grid);
    std::stringstream st;
    write_limit_set(st, sg.grid, topo);
    EXPECT_TRUE(read_limit_set(st, "topo.csv", sg.grid).unbounded());
}

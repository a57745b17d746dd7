#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcascade/cascade.hpp"
#include "gridcascade/dc_flow.hpp"
#include "gridcascade/grid.hpp"
#include "gridcascade/line_limits.hpp"
#include "gridcascade/rng.hpp"
#include "gridcascade/topology.hpp"

namespace gridcascade {

enum class Strategy { Random, Degree, Betweenness, ElectricalCentrality, EntropicDegreeLimit, EntropicDegreeFlow };

inline const std::vector<Strategy> kTargetedStrategies = {Strategy::EntropicDegreeLimit, Strategy::EntropicDegreeFlow,
                                                          Strategy::Degree, Strategy::Betweenness,
                                                          Strategy::ElectricalCentrality};

[[nodiscard]] inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Random: return "random";
        case Strategy::Degree: return "degree";
        case Strategy::Betweenness: return "betweenness";
        case Strategy::ElectricalCentrality: return "electrical_centrality";
        case Strategy::EntropicDegreeLimit: return "entropic_degree_limit";
        case Strategy::EntropicDegreeFlow: return "entropic_degree_flow";
    }
    return {};
}

inline Strategy parse_strategy(const std::string& s) {
    for (Strategy v : {Strategy::Random, Strategy::Degree, Strategy::Betweenness, Strategy::ElectricalCentrality,
                       Strategy::EntropicDegreeLimit, Strategy::EntropicDegreeFlow})
        if (strategy_name(v) == s) return v;
    throw ArgumentError("unknown strategy '" + s + "'");
}

enum class AttackType { Fixed, Flexible, Adaptive };

[[nodiscard]] inline std::string attack_type_name(AttackType t) {
    switch (t) {
        case AttackType::Fixed: return "fixed";
        case AttackType::Flexible: return "flexible";
        case AttackType::Adaptive: return "adaptive";
    }
    return {};
}

inline AttackType parse_attack_type(const std::string& s) {
    if (s == "fixed") return AttackType::Fixed;
    if (s == "flexible") return AttackType::Flexible;
    if (s == "adaptive") return AttackType::Adaptive;
    throw ArgumentError("unknown attack type '" + s + "'");
}

struct RemovalRegime {
    enum class Kind { Sequential, Simultaneous, Hybrid };
    Kind kind = Kind::Sequential;
    std::size_t group = 1;  // k for simultaneous, group size for hybrid

    static RemovalRegime sequential() { return {Kind::Sequential, 1}; }
    static RemovalRegime simultaneous(std::size_t k) { return {Kind::Simultaneous, k}; }
    static RemovalRegime hybrid(std::size_t g) { return {Kind::Hybrid, g}; }

    [[nodiscard]] std::string name() const {
        switch (kind) {
            case Kind::Sequential: return "sequential";
            case Kind::Simultaneous: return "simultaneous";
            case Kind::Hybrid: return "hybrid";
        }
        return {};
    }

    static RemovalRegime parse(const std::string& s, std::size_t group) {
        if (s == "sequential") return sequential();
        if (s == "simultaneous") return simultaneous(group);
        if (s == "hybrid") return hybrid(group);
        throw ArgumentError("unknown removal regime '" + s + "'");
    }
};

struct AttackPlan {
    Strategy strategy = Strategy::Random;
    std::uint64_t seed = 0;  // Random only
    AttackType attack_type = AttackType::Fixed;
    RemovalRegime regime;
    std::optional<std::size_t> target_count;  // n; all buses when absent
};

inline void validate_plan(const AttackPlan& plan, std::size_t bus_count) {
    if (plan.regime.kind != RemovalRegime::Kind::Sequential &&
        (plan.regime.group < 1 || plan.regime.group > bus_count))
        throw ArgumentError("group size must be between 1 and the node count");
    if (plan.target_count && *plan.target_count > bus_count)
        throw ArgumentError("target count exceeds the node count");
}

namespace detail {

inline std::vector<BusIndex> order_by_score(const NetworkView& view, const std::vector<double>& score) {
    const PowerGrid& g = *view.grid;
    std::vector<BusIndex> alive;
    for (BusIndex b = 0; b < g.bus_count(); ++b)
        if (view.bus_alive[b]) alive.push_back(b);
    std::sort(alive.begin(), alive.end(), [&](BusIndex a, BusIndex b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return g.bus(a).id < g.bus(b).id;
    });
    return alive;
}

}  // namespace detail

// g_i = (1 - sum_j p_ij ln p_ij) * sum_j w_ij with p_ij = w_ij / sum_j w_ij,
// where w_ij sums the weights of the alive lines between i and neighbour j.
inline double entropic_degree(const std::vector<double>& neighbour_weights) {
    double total = 0.0;
    for (double w : neighbour_weights) total += w;
    if (!(total > 0.0)) return 0.0;
    double entropy = 0.0;
    for (double w : neighbour_weights) {
        if (w <= 0.0) continue;
        const double p = w / total;
        entropy -= p * std::log(p);
    }
    return (1.0 + entropy) * total;
}

// Ranks the alive buses, rank 1 first. Ties resolve by ascending bus id.
inline std::vector<BusIndex> rank_nodes(const NetworkView& view, const FlowState* flows, const LimitSet* limits,
                                        Strategy strategy, std::uint64_t seed = 0) {
    const PowerGrid& g = *view.grid;
    const std::size_t n = g.bus_count();
    std::vector<double> score(n, 0.0);
    switch (strategy) {
        case Strategy::Random: {
            std::vector<BusIndex> alive;
            for (BusIndex b = 0; b < n; ++b)
                if (view.bus_alive[b]) alive.push_back(b);
            Rng rng = make_rng(seed, 0xA77AC);
            shuffle(std::span<BusIndex>(alive), rng);
            return alive;
        }
        case Strategy::Degree:
            for (LineIndex l = 0; l < g.line_count(); ++l)
                if (view.line_usable(l)) {
                    score[g.from_index(l)] += 1.0;
                    score[g.to_index(l)] += 1.0;
                }
            break;
        case Strategy::Betweenness: score = betweenness(view, false); break;
        case Strategy::ElectricalCentrality: score = betweenness(view, true); break;
        case Strategy::EntropicDegreeLimit:
        case Strategy::EntropicDegreeFlow: {
            const bool by_limit = strategy == Strategy::EntropicDegreeLimit;
            if (by_limit && (!limits || limits->limits.size() != g.line_count()))
                throw ArgumentError("entropic degree by limit needs a limit set");
            if (!by_limit && (!flows || flows->flow.size() != g.line_count()))
                throw ArgumentError("entropic degree by flow needs a flow state");
            for (BusIndex b = 0; b < n; ++b) {
                if (!view.bus_alive[b]) continue;
                std::vector<std::pair<BusIndex, double>> per_neighbour;
                for (LineIndex l : g.incident(b)) {
                    if (!view.line_usable(l)) continue;
                    const double w = by_limit ? limits->limits[l] : std::abs(flows->flow[l]);
                    if (!std::isfinite(w)) throw ArgumentError("entropic degree needs finite line weights");
                    const BusIndex j = g.other_end(l, b);
                    auto it = std::find_if(per_neighbour.begin(), per_neighbour.end(),
                                           [j](const auto& e) { return e.first == j; });
                    if (it == per_neighbour.end()) per_neighbour.emplace_back(j, w);
                    else it->second += w;
                }
                std::vector<double> weights;
                weights.reserve(per_neighbour.size());
                for (const auto& e : per_neighbour) weights.push_back(e.second);
                score[b] = entropic_degree(weights);
            }
            break;
        }
    }
    return detail::order_by_score(view, score);
}

// Removal schedule for one attack. Fixed and Flexible precompute the ranking
// on the intact grid; Adaptive re-ranks the surviving grid before every round.
class AttackSchedule final : public TargetSource {
public:
    AttackSchedule(AttackPlan plan, std::vector<BusIndex> order, std::size_t bus_count)
        : plan_(plan), order_(std::move(order)), quota_(plan.target_count.value_or(bus_count)) {}

    [[nodiscard]] const AttackPlan& plan() const noexcept { return plan_; }
    // Precomputed ranking (empty for Adaptive).
    [[nodiscard]] const std::vector<BusIndex>& order() const noexcept { return order_; }

    std::vector<BusIndex> next(const GridState& state) override {
        if (plan_.regime.kind == RemovalRegime::Kind::Simultaneous && groups_ > 0) return {};
        std::size_t want = plan_.regime.kind == RemovalRegime::Kind::Sequential ? 1 : plan_.regime.group;
        std::vector<BusIndex> group;
        switch (plan_.attack_type) {
            case AttackType::Fixed: {
                // Only the first n ranked buses are ever targets.
                const std::size_t end = std::min(quota_, order_.size());
                while (group.size() < want && pos_ < end) {
                    const BusIndex b = order_[pos_++];
                    if (state.bus_alive[b]) group.push_back(b);
                }
                break;
            }
            case AttackType::Flexible: {
                want = std::min(want, quota_ - issued_);
                while (group.size() < want && pos_ < order_.size()) {
                    const BusIndex b = order_[pos_++];
                    if (state.bus_alive[b]) group.push_back(b);
                }
                break;
            }
            case AttackType::Adaptive: {
                want = std::min(want, quota_ - issued_);
                if (want == 0) break;
                const auto ranked = rank_nodes(state.view(), &state.flows, state.limits, plan_.strategy,
                                               plan_.seed + groups_);
                for (std::size_t i = 0; i < ranked.size() && group.size() < want; ++i) group.push_back(ranked[i]);
                break;
            }
        }
        issued_ += group.size();
        if (!group.empty()) ++groups_;
        return group;
    }

private:
    AttackPlan plan_;
    std::vector<BusIndex> order_;
    std::size_t quota_;
    std::size_t pos_ = 0;
    std::size_t issued_ = 0;
    std::size_t groups_ = 0;
};

inline AttackSchedule make_plan(const AttackPlan& plan, const PowerGrid& grid, const FlowState* flows,
                                const LimitSet* limits) {
    validate_plan(plan, grid.bus_count());
    std::vector<BusIndex> order;
    if (plan.attack_type != AttackType::Adaptive)
        order = rank_nodes(NetworkView::whole(grid), flows, limits, plan.strategy, plan.seed);
    return AttackSchedule(plan, std::move(order), grid.bus_count());
}

inline nlohmann::json plan_to_json(const AttackSchedule& schedule, const PowerGrid& grid) {
    const AttackPlan& p = schedule.plan();
    nlohmann::json order = nlohmann::json::array();
    for (BusIndex b : schedule.order()) order.push_back(grid.bus(b).id);
    nlohmann::json j{{"strategy", strategy_name(p.strategy)},
                     {"attack_type", attack_type_name(p.attack_type)},
                     {"regime", p.regime.name()},
                     {"group", p.regime.group},
                     {"seed", p.seed},
                     {"order", std::move(order)}};
    if (p.target_count) j["target_count"] = *p.target_count;
    return j;
}

// Rebuilds a schedule from its JSON form; a stored order replays exactly.
inline AttackSchedule plan_from_json(const nlohmann::json& j, const PowerGrid& grid) {
    AttackPlan p;
    p.strategy = parse_strategy(j.at("strategy").get<std::string>());
    p.attack_type = parse_attack_type(j.at("attack_type").get<std::string>());
    p.regime = RemovalRegime::parse(j.at("regime").get<std::string>(), j.value("group", std::size_t{1}));
    p.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("target_count")) p.target_count = j.at("target_count").get<std::size_t>();
    validate_plan(p, grid.bus_count());
    std::vector<BusIndex> order;
    for (const auto& id : j.value("order", nlohmann::json::array())) order.push_back(grid.bus_index(id.get<std::string>()));
    if (p.attack_type != AttackType::Adaptive && order.size() != grid.bus_count())
        throw ArgumentError("stored order must cover every bus");
    return AttackSchedule(p, std::move(order), grid.bus_count());
}

}  // namespace gridcascade

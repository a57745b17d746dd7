#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gridcascade/dc_flow.hpp"
#include "gridcascade/errors.hpp"
#include "gridcascade/grid.hpp"
#include "gridcascade/line_limits.hpp"

namespace gridcascade {

enum class Physics { CascadingDC, Topological };

[[nodiscard]] inline std::string physics_name(Physics p) { return p == Physics::CascadingDC ? "dc" : "topological"; }

inline Physics parse_physics(const std::string& s) {
    if (s == "dc" || s == "cascading_dc") return Physics::CascadingDC;
    if (s == "topological") return Physics::Topological;
    throw ArgumentError("unknown physics '" + s + "'");
}

// Mutable working copy of a grid during one simulation.
struct GridState {
    const PowerGrid* grid = nullptr;
    const LimitSet* limits = nullptr;
    std::vector<char> bus_alive;
    std::vector<char> line_alive;
    std::vector<double> dispatch;  // MW per bus
    std::vector<double> served;    // MW per bus
    FlowState flows;               // latest solve; all zero under topological physics
    std::vector<std::vector<BusIndex>> components;

    [[nodiscard]] NetworkView view() const { return NetworkView{grid, bus_alive, line_alive}; }

    [[nodiscard]] std::size_t alive_bus_count() const {
        return static_cast<std::size_t>(std::count(bus_alive.begin(), bus_alive.end(), char{1}));
    }

    [[nodiscard]] double total_served() const {
        double s = 0.0;
        for (double v : served) s += v;
        return s;
    }

    [[nodiscard]] double total_dispatch() const {
        double s = 0.0;
        for (double v : dispatch) s += v;
        return s;
    }

    [[nodiscard]] std::vector<double> injections() const {
        std::vector<double> p(dispatch.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = dispatch[i] - served[i];
        return p;
    }

    [[nodiscard]] std::size_t giant_component() const {
        std::size_t best = 0;
        for (const auto& c : components) best = std::max(best, c.size());
        return best;
    }
};

inline GridState make_state(const PowerGrid& grid, const LimitSet& limits) {
    if (limits.limits.size() != grid.line_count()) throw ArgumentError("limit set does not cover every line");
    GridState s;
    s.grid = &grid;
    s.limits = &limits;
    s.bus_alive.assign(grid.bus_count(), 1);
    s.line_alive.assign(grid.line_count(), 1);
    s.dispatch.assign(grid.bus_count(), 0.0);
    s.served.assign(grid.bus_count(), 0.0);
    s.flows.flow.assign(grid.line_count(), 0.0);
    s.flows.injection.assign(grid.bus_count(), 0.0);
    s.components = connected_components(grid, s.bus_alive, s.line_alive);
    return s;
}

// Removes a bus and every line touching it.
inline void remove_bus(GridState& s, BusIndex b) {
    s.bus_alive[b] = 0;
    s.dispatch[b] = 0.0;
    s.served[b] = 0.0;
    for (LineIndex l : s.grid->incident(b)) s.line_alive[l] = 0;
}

// Recomputes islands and balances each: surplus islands serve all demand with
// generation pro rata to capacity; deficit islands dispatch all capacity and
// shed demand pro rata. Islands lacking demand or capacity are zeroed and their
// buses returned (ascending) for removal.
inline std::vector<BusIndex> rebalance(GridState& s) {
    const PowerGrid& g = *s.grid;
    s.components = connected_components(g, s.bus_alive, s.line_alive);
    const auto demand = g.demands();
    const auto capacity = g.capacities();
    std::vector<BusIndex> dark;
    std::vector<std::vector<BusIndex>> live;
    live.reserve(s.components.size());
    for (auto& island : s.components) {
        if (balance_island(island, demand, capacity, s.dispatch, s.served).energized) {
            live.push_back(std::move(island));
        } else {
            dark.insert(dark.end(), island.begin(), island.end());
        }
    }
    s.components = std::move(live);
    std::sort(dark.begin(), dark.end());
    return dark;
}

struct DamageBaseline {
    std::size_t giant_component = 0;  // nodes
    double served = 0.0;              // MW
};

inline DamageBaseline damage_baseline(const PowerGrid& grid) {
    DamageBaseline b;
    const std::vector<char> all_buses(grid.bus_count(), 1);
    const std::vector<char> all_lines(grid.line_count(), 1);
    for (const auto& c : connected_components(grid, all_buses, all_lines))
        b.giant_component = std::max(b.giant_component, c.size());
    b.served = grid.total_initial_served();
    if (b.giant_component == 0) throw ArgumentError("damage undefined: grid has no buses");
    if (!(b.served > 0.0)) throw ArgumentError("damage undefined: grid serves no demand");
    return b;
}

struct Damage {
    double giant_component = 0.0;
    double blackout = 0.0;
};

// damage = 1 - P_x / P_1 for P = giant component size and P = served MW.
inline Damage damage_metrics(const GridState& s, const DamageBaseline& base) {
    Damage d;
    d.giant_component =
        1.0 - static_cast<double>(s.giant_component()) / static_cast<double>(base.giant_component);
    d.blackout = std::clamp(1.0 - s.total_served() / base.served, 0.0, 1.0);
    return d;
}

struct TrippedLine {
    LineIndex line = 0;
    std::size_t iteration = 0;  // 1-based inner-loop pass within the round

    friend bool operator==(const TrippedLine&, const TrippedLine&) = default;
};

struct RoundRecord {
    std::size_t round = 0;  // 1-based
    std::vector<BusIndex> targets;
    std::vector<BusIndex> cascade_lost;
    std::vector<TrippedLine> tripped;
    double giant_component_damage = 0.0;
    double blackout_damage = 0.0;

    friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

// Per-round solver health; not part of the simulated outcome.
struct RoundDiagnostics {
    double kcl_residual = 0.0;      // MW
    double balance_residual = 0.0;  // |dispatch - served| summed over islands, MW
    double max_loading = 0.0;       // max |f| / limit over surviving lines
    std::size_t flow_solves = 0;
};

struct SimulationTrace {
    std::vector<BusIndex> initial_lost;  // lost while settling the intact grid (loss round 0)
    std::vector<TrippedLine> initial_tripped;
    std::vector<RoundRecord> rounds;
    std::vector<RoundDiagnostics> diagnostics;

    // Outcome equality: diagnostics are ignored.
    [[nodiscard]] bool same_outcome(const SimulationTrace& o) const {
        return initial_lost == o.initial_lost && initial_tripped == o.initial_tripped && rounds == o.rounds;
    }

    // Round in which each bus was lost (targeted or cascade), if it was.
    [[nodiscard]] std::vector<std::optional<std::size_t>> loss_rounds(std::size_t bus_count) const {
        std::vector<std::optional<std::size_t>> r(bus_count);
        for (BusIndex b : initial_lost) r[b] = 0;
        for (const auto& rec : rounds) {
            for (BusIndex b : rec.targets) r[b] = rec.round;
            for (BusIndex b : rec.cascade_lost) r[b] = rec.round;
        }
        return r;
    }

    [[nodiscard]] std::vector<char> targeted(std::size_t bus_count) const {
        std::vector<char> t(bus_count, 0);
        for (const auto& rec : rounds)
            for (BusIndex b : rec.targets) t[b] = 1;
        return t;
    }
};

class SimulationAborted : public std::runtime_error {
public:
    SimulationAborted(const std::string& what, SimulationTrace partial, bool numerical)
        : std::runtime_error(what), partial_(std::move(partial)), numerical_(numerical) {}

    [[nodiscard]] const SimulationTrace& partial() const noexcept { return partial_; }
    // True when the cause was a failed flow solve.
    [[nodiscard]] bool numerical() const noexcept { return numerical_; }

private:
    SimulationTrace partial_;
    bool numerical_;
};

// Called once after the intact grid settles (record == nullptr) and after every
// round.
using RoundObserver = std::function<void(const GridState&, const RoundRecord*)>;

// Runs the node-removal loop one round at a time: remove the targets, then
// repeat {rebalance and drop dark islands; solve flows; trip every line with
// |f| > limit} until no line trips.
class CascadeSimulator {
public:
    // The limit set is copied; the grid must outlive the simulator.
    CascadeSimulator(const PowerGrid& grid, LimitSet limits, Physics physics)
        : physics_(physics), base_(damage_baseline(grid)), limits_(std::move(limits)), state_(make_state(grid, limits_)) {
        RoundDiagnostics diag;
        auto [lost, tripped] = settle(diag);
        trace_.initial_lost = std::move(lost);
        trace_.initial_tripped = std::move(tripped);
    }

    CascadeSimulator(const CascadeSimulator&) = delete;
    CascadeSimulator& operator=(const CascadeSimulator&) = delete;

    [[nodiscard]] const GridState& state() const noexcept { return state_; }
    [[nodiscard]] const SimulationTrace& trace() const noexcept { return trace_; }
    [[nodiscard]] SimulationTrace take_trace() { return std::move(trace_); }
    [[nodiscard]] bool finished() const { return state_.alive_bus_count() == 0; }
    [[nodiscard]] Physics physics() const noexcept { return physics_; }

    // Removes the still-alive buses among `targets` together and settles the
    // cascade. Returns nullptr (no round recorded) if none of them is alive.
    const RoundRecord* attack(std::span<const BusIndex> targets) {
        RoundRecord rec;
        for (BusIndex b : targets) {
            if (b >= state_.bus_alive.size()) throw ArgumentError("target bus index out of range");
            if (state_.bus_alive[b] &&
                std::find(rec.targets.begin(), rec.targets.end(), b) == rec.targets.end())
                rec.targets.push_back(b);
        }
        if (rec.targets.empty()) return nullptr;
        rec.round = trace_.rounds.size() + 1;
        for (BusIndex b : rec.targets) remove_bus(state_, b);

        RoundDiagnostics diag;
        try {
            auto [lost, tripped] = settle(diag);
            rec.cascade_lost = std::move(lost);
            rec.tripped = std::move(tripped);
        } catch (const NumericalError& e) {
            throw SimulationAborted("round " + std::to_string(rec.round) + ": " + e.what(), trace_, true);
        } catch (const std::exception& e) {
            throw SimulationAborted("round " + std::to_string(rec.round) + ": " + e.what(), trace_, false);
        }
        const Damage d = damage_metrics(state_, base_);
        rec.giant_component_damage = d.giant_component;
        rec.blackout_damage = d.blackout;
        trace_.rounds.push_back(std::move(rec));
        trace_.diagnostics.push_back(diag);
        return &trace_.rounds.back();
    }

private:
    std::pair<std::vector<BusIndex>, std::vector<TrippedLine>> settle(RoundDiagnostics& diag) {
        std::vector<BusIndex> lost;
        std::vector<TrippedLine> tripped;
        const auto& limit = state_.limits->limits;
        for (std::size_t iteration = 1;; ++iteration) {
            const auto dark = rebalance(state_);
            for (BusIndex b : dark) remove_bus(state_, b);
            lost.insert(lost.end(), dark.begin(), dark.end());

            if (physics_ == Physics::Topological) break;

            const auto p = state_.injections();
            state_.flows = solve_flows(state_.view(), p);
            ++diag.flow_solves;
            diag.kcl_residual = std::max(diag.kcl_residual, state_.flows.residual);

            bool any = false;
            for (LineIndex l = 0; l < limit.size(); ++l) {
                if (state_.line_alive[l] && std::abs(state_.flows.flow[l]) > limit[l]) {
                    state_.line_alive[l] = 0;
                    state_.flows.flow[l] = 0.0;
                    tripped.push_back({l, iteration});
                    any = true;
                }
            }
            if (!any) break;
        }
        if (physics_ == Physics::Topological) std::fill(state_.flows.flow.begin(), state_.flows.flow.end(), 0.0);
        std::sort(lost.begin(), lost.end());

        for (const auto& island : state_.components) {
            double gen = 0.0, load = 0.0;
            for (BusIndex b : island) {
                gen += state_.dispatch[b];
                load += state_.served[b];
            }
            diag.balance_residual += std::abs(gen - load);
        }
        for (LineIndex l = 0; l < limit.size(); ++l)
            if (state_.line_alive[l] && limit[l] > 0.0)
                diag.max_loading = std::max(diag.max_loading, std::abs(state_.flows.flow[l]) / limit[l]);
        return {std::move(lost), std::move(tripped)};
    }

    Physics physics_;
    DamageBaseline base_;
    LimitSet limits_;
    GridState state_;
    SimulationTrace trace_;
};

// Supplies the next group of targets each round; an empty group ends the attack.
class TargetSource {
public:
    virtual ~TargetSource() = default;
    virtual std::vector<BusIndex> next(const GridState& state) = 0;
};

inline SimulationTrace run_attack(const PowerGrid& grid, const LimitSet& limits, Physics physics,
                                  TargetSource& source, const RoundObserver& observer = {}) {
    CascadeSimulator sim(grid, limits, physics);
    if (observer) observer(sim.state(), nullptr);
    while (!sim.finished()) {
        const auto group = source.next(sim.state());
        if (group.empty()) break;
        if (const RoundRecord* rec = sim.attack(group); rec && observer) observer(sim.state(), rec);
    }
    return sim.take_trace();
}

// Sequential attack following a precomputed order over every bus. Buses already
// lost to a cascade are skipped.
inline SimulationTrace attack_the_grid(const PowerGrid& grid, const LimitSet& limits,
                                       std::span<const BusIndex> order, Physics physics,
                                       const RoundObserver& observer = {}) {
    std::vector<char> seen(grid.bus_count(), 0);
    for (BusIndex b : order) {
        if (b >= grid.bus_count()) throw ArgumentError("order references unknown bus index " + std::to_string(b));
        if (seen[b]) throw ArgumentError("order lists bus " + grid.bus(b).id + " twice");
        seen[b] = 1;
    }
    for (BusIndex b = 0; b < grid.bus_count(); ++b)
        if (!seen[b]) throw ArgumentError("order does not cover bus " + grid.bus(b).id);

    class Sequential final : public TargetSource {
    public:
        explicit Sequential(std::span<const BusIndex> o) : order_(o) {}
        std::vector<BusIndex> next(const GridState& s) override {
            while (pos_ < order_.size() && !s.bus_alive[order_[pos_]]) ++pos_;
            if (pos_ == order_.size()) return {};
            return {order_[pos_++]};
        }

    private:
        std::span<const BusIndex> order_;
        std::size_t pos_ = 0;
    };
    Sequential source(order);
    return run_attack(grid, limits, physics, source, observer);
}

inline SimulationTrace attack_the_grid(const PowerGrid& grid, const LimitSet& limits,
                                       const std::vector<std::string>& order_ids, Physics physics) {
    std::vector<BusIndex> order;
    order.reserve(order_ids.size());
    for (const auto& id : order_ids) order.push_back(grid.bus_index(id));
    return attack_the_grid(grid, limits, order, physics);
}

}  // namespace gridcascade

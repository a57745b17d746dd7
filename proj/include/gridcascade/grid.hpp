#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gridcascade/errors.hpp"

namespace gridcascade {

using BusIndex = std::size_t;
using LineIndex = std::size_t;

enum class VoltageClass : std::uint8_t { V132 = 0, V275 = 1, V400 = 2 };

[[nodiscard]] inline int voltage_kv(VoltageClass v) noexcept {
    switch (v) {
        case VoltageClass::V132: return 132;
        case VoltageClass::V275: return 275;
        case VoltageClass::V400: return 400;
    }
    return 0;
}

[[nodiscard]] inline VoltageClass voltage_from_kv(int kv) {
    switch (kv) {
        case 132: return VoltageClass::V132;
        case 275: return VoltageClass::V275;
        case 400: return VoltageClass::V400;
        default: throw ArgumentError("unsupported voltage class " + std::to_string(kv) + " kV");
    }
}

struct Bus {
    std::string id;
    double demand = 0.0;               // MW
    double generation_capacity = 0.0;  // MW
    double dispatched_generation = 0.0;
    VoltageClass voltage_class = VoltageClass::V132;

    friend bool operator==(const Bus&, const Bus&) = default;
};

struct Line {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    double susceptance = 1.0;  // per unit, 1 / reactance
    VoltageClass voltage_class = VoltageClass::V132;
    std::optional<double> real_limit;  // MW

    friend bool operator==(const Line&, const Line&) = default;
};

// Result of balancing one island: either every unit of demand is served and
// generation is dispatched pro rata to capacity, or all capacity is dispatched
// and demand is shed pro rata. Islands lacking demand or capacity go dark.
struct IslandBalance {
    double capacity = 0.0;
    double demand = 0.0;
    bool energized = false;
};

// Writes per-bus dispatch and served demand for the members of one island.
inline IslandBalance balance_island(std::span<const BusIndex> members,
                                    std::span<const double> demand,
                                    std::span<const double> capacity,
                                    std::span<double> dispatch,
                                    std::span<double> served) {
    IslandBalance b;
    for (BusIndex i : members) {
        b.capacity += capacity[i];
        b.demand += demand[i];
    }
    b.energized = b.capacity > 0.0 && b.demand > 0.0;
    if (!b.energized) {
        for (BusIndex i : members) {
            dispatch[i] = 0.0;
            served[i] = 0.0;
        }
        return b;
    }
    if (b.capacity >= b.demand) {
        const double share = b.demand / b.capacity;
        for (BusIndex i : members) {
            dispatch[i] = capacity[i] * share;
            served[i] = demand[i];
        }
    } else {
        const double share = b.capacity / b.demand;
        for (BusIndex i : members) {
            dispatch[i] = capacity[i];
            served[i] = demand[i] * share;
        }
    }
    return b;
}

class PowerGrid;

// Connected components of the sub-network induced by the alive masks. Dead
// buses belong to no component. Components are ordered by their smallest bus
// index and list members ascending.
std::vector<std::vector<BusIndex>> connected_components(const PowerGrid& grid,
                                                        std::span<const char> bus_alive,
                                                        std::span<const char> line_alive);

// Immutable, validated transmission network. Construction checks every Bus and
// Line invariant, derives bus voltage classes from incident lines and sets
// dispatched generation by balancing each island of the intact grid.
class PowerGrid {
public:
    PowerGrid() = default;

    PowerGrid(std::vector<Bus> buses, std::vector<Line> lines)
        : buses_(std::move(buses)), lines_(std::move(lines)) {
        validate_and_index();
    }

    [[nodiscard]] const std::vector<Bus>& buses() const noexcept { return buses_; }
    [[nodiscard]] const std::vector<Line>& lines() const noexcept { return lines_; }
    [[nodiscard]] std::size_t bus_count() const noexcept { return buses_.size(); }
    [[nodiscard]] std::size_t line_count() const noexcept { return lines_.size(); }
    [[nodiscard]] bool empty() const noexcept { return buses_.empty(); }

    [[nodiscard]] const Bus& bus(BusIndex i) const { return buses_.at(i); }
    [[nodiscard]] const Line& line(LineIndex l) const { return lines_.at(l); }

    [[nodiscard]] std::optional<BusIndex> find_bus(std::string_view id) const {
        auto it = bus_lookup_.find(std::string(id));
        if (it == bus_lookup_.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] BusIndex bus_index(std::string_view id) const {
        if (auto i = find_bus(id)) return *i;
        throw ArgumentError("unknown bus " + std::string(id));
    }

    [[nodiscard]] std::optional<LineIndex> find_line(std::string_view id) const {
        auto it = line_lookup_.find(std::string(id));
        if (it == line_lookup_.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] BusIndex from_index(LineIndex l) const { return ends_.at(l).first; }
    [[nodiscard]] BusIndex to_index(LineIndex l) const { return ends_.at(l).second; }

    // Lines touching bus i, parallel lines listed individually.
    [[nodiscard]] const std::vector<LineIndex>& incident(BusIndex i) const { return incident_.at(i); }

    [[nodiscard]] BusIndex other_end(LineIndex l, BusIndex i) const {
        const auto& e = ends_.at(l);
        return e.first == i ? e.second : e.first;
    }

    [[nodiscard]] bool energized(BusIndex i) const { return energized_.at(i) != 0; }

    [[nodiscard]] bool has_real_limits() const noexcept {
        return !lines_.empty() &&
               std::all_of(lines_.begin(), lines_.end(), [](const Line& l) { return l.real_limit.has_value(); });
    }

    [[nodiscard]] std::vector<double> demands() const {
        std::vector<double> v(buses_.size());
        for (std::size_t i = 0; i < buses_.size(); ++i) v[i] = buses_[i].demand;
        return v;
    }

    [[nodiscard]] std::vector<double> capacities() const {
        std::vector<double> v(buses_.size());
        for (std::size_t i = 0; i < buses_.size(); ++i) v[i] = buses_[i].generation_capacity;
        return v;
    }

    // Demand served in the balanced intact grid.
    [[nodiscard]] const std::vector<double>& initial_served() const noexcept { return served_; }

    [[nodiscard]] double total_initial_served() const noexcept {
        double s = 0.0;
        for (double v : served_) s += v;
        return s;
    }

    // Net injection (dispatch - served demand) of the balanced intact grid.
    [[nodiscard]] std::vector<double> initial_injections() const {
        std::vector<double> p(buses_.size());
        for (std::size_t i = 0; i < buses_.size(); ++i) p[i] = buses_[i].dispatched_generation - served_[i];
        return p;
    }

    friend bool operator==(const PowerGrid& a, const PowerGrid& b) {
        return a.buses_ == b.buses_ && a.lines_ == b.lines_;
    }

private:
    void validate_and_index();

    std::vector<Bus> buses_;
    std::vector<Line> lines_;
    std::unordered_map<std::string, BusIndex> bus_lookup_;
    std::unordered_map<std::string, LineIndex> line_lookup_;
    std::vector<std::pair<BusIndex, BusIndex>> ends_;
    std::vector<std::vector<LineIndex>> incident_;
    std::vector<char> energized_;
    std::vector<double> served_;
};

inline void PowerGrid::validate_and_index() {
    bus_lookup_.reserve(buses_.size());
    for (BusIndex i = 0; i < buses_.size(); ++i) {
        const Bus& b = buses_[i];
        if (b.id.empty()) throw ValidationError("bus with empty id at position " + std::to_string(i));
        if (!std::isfinite(b.demand) || b.demand < 0.0)
            throw ValidationError("bus " + b.id + ": demand must be finite and non-negative");
        if (!std::isfinite(b.generation_capacity) || b.generation_capacity < 0.0)
            throw ValidationError("bus " + b.id + ": generation capacity must be finite and non-negative");
        if (!bus_lookup_.emplace(b.id, i).second) throw ValidationError("duplicate bus id " + b.id);
    }

    ends_.reserve(lines_.size());
    incident_.assign(buses_.size(), {});
    line_lookup_.reserve(lines_.size());
    for (LineIndex l = 0; l < lines_.size(); ++l) {
        const Line& ln = lines_[l];
        if (ln.id.empty()) throw ValidationError("line with empty id at position " + std::to_string(l));
        if (!line_lookup_.emplace(ln.id, l).second) throw ValidationError("duplicate line id " + ln.id);
        auto f = bus_lookup_.find(ln.from_bus);
        if (f == bus_lookup_.end()) throw ValidationError("unknown bus " + ln.from_bus + " on line " + ln.id);
        auto t = bus_lookup_.find(ln.to_bus);
        if (t == bus_lookup_.end()) throw ValidationError("unknown bus " + ln.to_bus + " on line " + ln.id);
        if (f->second == t->second) throw ValidationError("line " + ln.id + " is a self-loop on bus " + ln.from_bus);
        if (!std::isfinite(ln.susceptance) || ln.susceptance <= 0.0)
            throw ValidationError("line " + ln.id + ": susceptance must be positive and finite");
        if (ln.real_limit && (!std::isfinite(*ln.real_limit) || *ln.real_limit <= 0.0))
            throw ValidationError("line " + ln.id + ": limit must be strictly positive");
        ends_.emplace_back(f->second, t->second);
        incident_[f->second].push_back(l);
        incident_[t->second].push_back(l);
    }

    for (BusIndex i = 0; i < buses_.size(); ++i) {
        VoltageClass v = VoltageClass::V132;
        for (LineIndex l : incident_[i]) v = std::max(v, lines_[l].voltage_class);
        buses_[i].voltage_class = v;
    }

    const std::vector<char> bus_alive(buses_.size(), 1);
    const std::vector<char> line_alive(lines_.size(), 1);
    const auto demand = demands();
    const auto capacity = capacities();
    std::vector<double> dispatch(buses_.size(), 0.0);
    served_.assign(buses_.size(), 0.0);
    energized_.assign(buses_.size(), 0);
    for (const auto& island : connected_components(*this, bus_alive, line_alive)) {
        const auto b = balance_island(island, demand, capacity, dispatch, served_);
        for (BusIndex i : island) energized_[i] = b.energized ? 1 : 0;
    }
    for (BusIndex i = 0; i < buses_.size(); ++i) buses_[i].dispatched_generation = dispatch[i];
}

inline std::vector<std::vector<BusIndex>> connected_components(const PowerGrid& grid,
                                                               std::span<const char> bus_alive,
                                                               std::span<const char> line_alive) {
    const std::size_t n = grid.bus_count();
    std::vector<std::vector<BusIndex>> out;
    std::vector<char> seen(n, 0);
    std::vector<BusIndex> stack;
    for (BusIndex s = 0; s < n; ++s) {
        if (!bus_alive[s] || seen[s]) continue;
        std::vector<BusIndex> members;
        seen[s] = 1;
        stack.push_back(s);
        while (!stack.empty()) {
            BusIndex u = stack.back();
            stack.pop_back();
            members.push_back(u);
            for (LineIndex l : grid.incident(u)) {
                if (!line_alive[l]) continue;
                BusIndex v = grid.other_end(l, u);
                if (bus_alive[v] && !seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        std::sort(members.begin(), members.end());
        out.push_back(std::move(members));
    }
    return out;
}

// Alive-mask view over a grid, used for ranking and statistics on a partially
// destroyed network.
struct NetworkView {
    const PowerGrid* grid = nullptr;
    std::vector<char> bus_alive;
    std::vector<char> line_alive;

    static NetworkView whole(const PowerGrid& g) {
        return NetworkView{&g, std::vector<char>(g.bus_count(), 1), std::vector<char>(g.line_count(), 1)};
    }

    [[nodiscard]] bool line_usable(LineIndex l) const {
        return line_alive[l] && bus_alive[grid->from_index(l)] && bus_alive[grid->to_index(l)];
    }
};

}  // namespace gridcascade

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "gridcascade/errors.hpp"
#include "gridcascade/grid.hpp"

namespace gridcascade {

// Per-bus net injection in MW (dispatch minus served demand), indexed by bus.
using InjectionVector = std::vector<double>;

struct FlowState {
    std::vector<double> flow;       // MW per line, positive from_bus -> to_bus
    std::vector<double> injection;  // MW per bus
    double residual = 0.0;          // max |A^T f - p| over buses, MW
};

// Oriented incidence of one connected component with the slack column removed.
struct ReducedSystem {
    std::vector<BusIndex> buses;  // component members, ascending
    BusIndex slack = 0;
    std::vector<LineIndex> lines;           // one row of `incidence` per entry
    std::vector<std::ptrdiff_t> column;     // per grid bus: column in `incidence`, -1 if slack/outside
    Eigen::SparseMatrix<double> incidence;  // lines x (buses - 1), +1 at from, -1 at to
    Eigen::VectorXd susceptance;            // diagonal of C
};

// Largest generation capacity wins; ties go to the lexicographically smallest
// id. Returns nullopt when no member has capacity.
inline std::optional<BusIndex> choose_slack(const PowerGrid& grid, std::span<const BusIndex> component) {
    std::optional<BusIndex> best;
    for (BusIndex i : component) {
        const Bus& b = grid.bus(i);
        if (b.generation_capacity <= 0.0) continue;
        if (!best) {
            best = i;
            continue;
        }
        const Bus& cur = grid.bus(*best);
        if (b.generation_capacity > cur.generation_capacity ||
            (b.generation_capacity == cur.generation_capacity && b.id < cur.id))
            best = i;
    }
    return best;
}

inline ReducedSystem build_system(const PowerGrid& grid, std::span<const BusIndex> component,
                                  std::span<const char> line_alive, std::optional<BusIndex> slack_override = {}) {
    ReducedSystem sys;
    sys.buses.assign(component.begin(), component.end());
    std::sort(sys.buses.begin(), sys.buses.end());
    if (slack_override) {
        if (!std::binary_search(sys.buses.begin(), sys.buses.end(), *slack_override))
            throw ArgumentError("slack bus is not in the component");
        sys.slack = *slack_override;
    } else {
        auto s = choose_slack(grid, sys.buses);
        if (!s) throw ArgumentError("no slack candidate");
        sys.slack = *s;
    }

    sys.column.assign(grid.bus_count(), -1);
    std::ptrdiff_t next = 0;
    for (BusIndex b : sys.buses)
        if (b != sys.slack) sys.column[b] = next++;

    std::vector<char> member(grid.bus_count(), 0);
    for (BusIndex b : sys.buses) member[b] = 1;
    for (BusIndex b : sys.buses)
        for (LineIndex l : grid.incident(b))
            if (line_alive[l] && grid.from_index(l) == b && member[grid.to_index(l)]) sys.lines.push_back(l);
    std::sort(sys.lines.begin(), sys.lines.end());

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(2 * sys.lines.size());
    sys.susceptance.resize(static_cast<Eigen::Index>(sys.lines.size()));
    for (std::size_t r = 0; r < sys.lines.size(); ++r) {
        const LineIndex l = sys.lines[r];
        const auto row = static_cast<Eigen::Index>(r);
        if (auto c = sys.column[grid.from_index(l)]; c >= 0) entries.emplace_back(row, c, 1.0);
        if (auto c = sys.column[grid.to_index(l)]; c >= 0) entries.emplace_back(row, c, -1.0);
        sys.susceptance[row] = grid.line(l).susceptance;
    }
    sys.incidence.resize(static_cast<Eigen::Index>(sys.lines.size()), next);
    sys.incidence.setFromTriplets(entries.begin(), entries.end());
    return sys;
}

namespace detail {

// Solves one energized component: theta = (A^T C A)^{-1} p, f = C A theta.
// Writes flows for the component's lines and returns the KCL residual.
inline double solve_component(const PowerGrid& grid, const ReducedSystem& sys, std::span<const double> p,
                              std::span<double> flow, std::size_t component_id) {
    const Eigen::Index k = sys.incidence.cols();
    double p_inf = 0.0;
    for (BusIndex b : sys.buses) p_inf = std::max(p_inf, std::abs(p[b]));

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(k);
    if (k > 0 && p_inf > 0.0) {
        const Eigen::SparseMatrix<double> laplacian =
            Eigen::SparseMatrix<double>(sys.incidence.transpose() * sys.susceptance.asDiagonal() * sys.incidence);
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(laplacian);
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
            throw NumericalError("singular reduced Laplacian in component " + std::to_string(component_id),
                                 component_id);
        Eigen::VectorXd rhs(k);
        for (BusIndex b : sys.buses)
            if (auto c = sys.column[b]; c >= 0) rhs[c] = p[b];
        theta = ldlt.solve(rhs);
        if (ldlt.info() != Eigen::Success || !theta.allFinite())
            throw NumericalError("DC flow solve failed in component " + std::to_string(component_id),
                                 component_id);
    }
    const Eigen::VectorXd f = sys.susceptance.asDiagonal() * (sys.incidence * theta);

    std::vector<double> net(grid.bus_count(), 0.0);
    for (std::size_t r = 0; r < sys.lines.size(); ++r) {
        const LineIndex l = sys.lines[r];
        flow[l] = f[static_cast<Eigen::Index>(r)];
        net[grid.from_index(l)] += flow[l];
        net[grid.to_index(l)] -= flow[l];
    }
    double residual = 0.0;
    for (BusIndex b : sys.buses) residual = std::max(residual, std::abs(net[b] - p[b]));
    if (residual > 1e-8 * std::max(1.0, p_inf))
        throw NumericalError("KCL residual " + std::to_string(residual) + " MW exceeds tolerance in component " +
                                 std::to_string(component_id),
                             component_id);
    return residual;
}

}  // namespace detail

// Solves the DC load flow independently on every connected component of the
// alive sub-network. Components without generation capacity must carry zero
// injection and get zero flow. Dead lines get zero flow.
inline FlowState solve_flows(const NetworkView& view, std::span<const double> injections) {
    const PowerGrid& grid = *view.grid;
    if (injections.size() != grid.bus_count())
        throw ArgumentError("injection vector has " + std::to_string(injections.size()) + " entries, grid has " +
                            std::to_string(grid.bus_count()) + " buses");
    FlowState out;
    out.flow.assign(grid.line_count(), 0.0);
    out.injection.assign(injections.begin(), injections.end());

    const auto components = connected_components(grid, view.bus_alive, view.line_alive);
    for (std::size_t c = 0; c < components.size(); ++c) {
        const auto& members = components[c];
        double sum = 0.0;
        bool all_zero = true;
        for (BusIndex b : members) {
            sum += injections[b];
            all_zero = all_zero && injections[b] == 0.0;
        }
        if (std::abs(sum) > 1e-6)
            throw ArgumentError("unbalanced injections in component " + std::to_string(c) + " (net " +
                                std::to_string(sum) + " MW)");
        if (all_zero) continue;
        if (!choose_slack(grid, members))
            throw ArgumentError("component " + std::to_string(c) + " has injections but no slack candidate");
        const ReducedSystem sys = build_system(grid, members, view.line_alive);
        out.residual = std::max(out.residual, detail::solve_component(grid, sys, injections, out.flow, c));
    }
    return out;
}

inline FlowState solve_flows(const PowerGrid& grid, std::span<const double> injections) {
    return solve_flows(NetworkView::whole(grid), injections);
}

// Flows of the balanced intact grid.
inline FlowState initial_flows(const PowerGrid& grid) {
    const auto p = grid.initial_injections();
    return solve_flows(grid, p);
}

}  // namespace gridcascade

#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "gridcascade/csv.hpp"
#include "gridcascade/grid.hpp"

namespace gridcascade {

// Nodes CSV: id,demand_mw,generation_mw
// Edges CSV: id,from,to,(susceptance|reactance)[,voltage_kv][,limit_mw]
// Reactance is converted to susceptance (b = 1/x). Missing voltage_kv means
// 132 kV; an empty limit_mw field means the line has no recorded limit.
inline PowerGrid read_grid(std::istream& nodes_in, const std::string& nodes_name, std::istream& edges_in,
                           const std::string& edges_name) {
    const csv::Table nodes = csv::parse(nodes_in, nodes_name);
    const auto c_id = nodes.column("id");
    const auto c_demand = nodes.column("demand_mw");
    const auto c_gen = nodes.column("generation_mw");
    if (c_id < 0 || c_demand < 0 || c_gen < 0 || nodes.header.size() != 3)
        throw ParseError(nodes_name, 1, "nodes header must be id,demand_mw,generation_mw");

    std::vector<Bus> buses;
    buses.reserve(nodes.rows.size());
    for (std::size_t r = 0; r < nodes.rows.size(); ++r) {
        const auto& row = nodes.rows[r];
        Bus b;
        b.id = row[c_id];
        if (b.id.empty()) throw ParseError(nodes_name, nodes.row_lines[r], "empty bus id");
        b.demand = csv::parse_double(row[c_demand], nodes, r, "demand_mw");
        b.generation_capacity = csv::parse_double(row[c_gen], nodes, r, "generation_mw");
        buses.push_back(std::move(b));
    }

    const csv::Table edges = csv::parse(edges_in, edges_name);
    const auto e_id = edges.column("id");
    const auto e_from = edges.column("from");
    const auto e_to = edges.column("to");
    const auto e_b = edges.column("susceptance");
    const auto e_x = edges.column("reactance");
    const auto e_kv = edges.column("voltage_kv");
    const auto e_lim = edges.column("limit_mw");
    if (e_id < 0 || e_from < 0 || e_to < 0 || (e_b < 0) == (e_x < 0))
        throw ParseError(edges_name, 1, "edges header must be id,from,to and exactly one of susceptance/reactance");
    const std::size_t expected = 4 + (e_kv >= 0 ? 1 : 0) + (e_lim >= 0 ? 1 : 0);
    if (edges.header.size() != expected) throw ParseError(edges_name, 1, "unexpected column in edges header");

    std::vector<Line> lines;
    lines.reserve(edges.rows.size());
    for (std::size_t r = 0; r < edges.rows.size(); ++r) {
        const auto& row = edges.rows[r];
        Line l;
        l.id = row[e_id];
        l.from_bus = row[e_from];
        l.to_bus = row[e_to];
        if (l.id.empty()) throw ParseError(edges_name, edges.row_lines[r], "empty line id");
        if (e_b >= 0) {
            l.susceptance = csv::parse_double(row[e_b], edges, r, "susceptance");
        } else {
            const double x = csv::parse_double(row[e_x], edges, r, "reactance");
            if (!(x > 0.0)) throw ValidationError("line " + l.id + ": reactance must be positive");
            l.susceptance = 1.0 / x;
        }
        if (e_kv >= 0) {
            const long kv = csv::parse_int(row[e_kv], edges, r, "voltage_kv");
            try {
                l.voltage_class = voltage_from_kv(static_cast<int>(kv));
            } catch (const ArgumentError& e) {
                throw ParseError(edges_name, edges.row_lines[r], e.what());
            }
        }
        if (e_lim >= 0 && !row[e_lim].empty()) l.real_limit = csv::parse_double(row[e_lim], edges, r, "limit_mw");
        lines.push_back(std::move(l));
    }
    return PowerGrid(std::move(buses), std::move(lines));
}

inline PowerGrid load_grid(const std::filesystem::path& nodes_file, const std::filesystem::path& edges_file) {
    std::ifstream nodes(nodes_file);
    if (!nodes) throw ValidationError("cannot open " + nodes_file.string());
    std::ifstream edges(edges_file);
    if (!edges) throw ValidationError("cannot open " + edges_file.string());
    return read_grid(nodes, nodes_file.string(), edges, edges_file.string());
}

inline void write_grid(const PowerGrid& grid, std::ostream& nodes, std::ostream& edges) {
    nodes << "id,demand_mw,generation_mw\n";
    for (const Bus& b : grid.buses())
        nodes << b.id << ',' << csv::format_double(b.demand) << ',' << csv::format_double(b.generation_capacity)
              << '\n';

    const bool any_limit = std::any_of(grid.lines().begin(), grid.lines().end(),
                                       [](const Line& l) { return l.real_limit.has_value(); });
    edges << "id,from,to,susceptance,voltage_kv" << (any_limit ? ",limit_mw" : "") << '\n';
    for (const Line& l : grid.lines()) {
        edges << l.id << ',' << l.from_bus << ',' << l.to_bus << ',' << csv::format_double(l.susceptance) << ','
              << voltage_kv(l.voltage_class);
        if (any_limit) edges << ',' << (l.real_limit ? csv::format_double(*l.real_limit) : std::string{});
        edges << '\n';
    }
}

inline void save_grid(const PowerGrid& grid, const std::filesystem::path& nodes_file,
                      const std::filesystem::path& edges_file) {
    std::ofstream nodes(nodes_file);
    std::ofstream edges(edges_file);
    if (!nodes || !edges) throw ValidationError("cannot write grid files");
    write_grid(grid, nodes, edges);
}

}  // namespace gridcascade

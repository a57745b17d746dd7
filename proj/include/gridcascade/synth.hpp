#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "gridcascade/dc_flow.hpp"
#include "gridcascade/errors.hpp"
#include "gridcascade/grid.hpp"
#include "gridcascade/line_limits.hpp"
#include "gridcascade/rng.hpp"

namespace gridcascade {

// How ground-truth line limits are planted on a synthetic grid.
struct Planting {
    enum class Kind { None, UniformAlpha, LogNormalAlpha, LinearModel };
    Kind kind = Kind::None;

    double alpha = 5.0;          // UniformAlpha
    double alpha_mean = 5.0;     // LogNormalAlpha: mean of the alpha distribution
    double alpha_sd = 2.0;       // LogNormalAlpha: standard deviation
    double alpha_min = 1.05;     // LogNormalAlpha: draws are clamped from below
    LinearLimitModel model;      // LinearModel, coefficients in thousands of MW
    double noise_sd_mw = 0.0;    // LinearModel: additive Gaussian noise

    static Planting none() { return {}; }
    static Planting uniform(double a) {
        Planting p;
        p.kind = Kind::UniformAlpha;
        p.alpha = a;
        return p;
    }
    static Planting lognormal(double mean, double sd) {
        Planting p;
        p.kind = Kind::LogNormalAlpha;
        p.alpha_mean = mean;
        p.alpha_sd = sd;
        return p;
    }
    static Planting linear(LinearLimitModel m, double noise_sd_mw = 0.0) {
        Planting p;
        p.kind = Kind::LinearModel;
        p.model = m;
        p.noise_sd_mw = noise_sd_mw;
        return p;
    }
};

// Desk-scale synthetic grid. Buses are scattered on the unit square, joined by
// a Euclidean minimum spanning tree, and densified with the shortest remaining
// k-nearest-neighbour links until the requested line count is reached.
// Susceptance is per unit on an arbitrary common base: voltage-class base
// admittance divided by link length.
struct SynthSpec {
    std::size_t nodes = 512;
    std::size_t lines = 698;
    double load_fraction = 0.85;       // share of buses with demand
    double demand_min_mw = 20.0;
    double demand_max_mw = 300.0;
    double generator_fraction = 0.15;  // share of buses with capacity
    double capacity_margin = 1.3;      // total capacity / total demand
    double share_275 = 0.3;
    double share_400 = 0.25;
    std::uint64_t seed = 0;
    Planting planting;
};

struct SyntheticGrid {
    PowerGrid grid;
    FlowState initial;
    std::vector<std::optional<double>> planted_alpha;  // per line; empty if not alpha-planted or zero flow
};

inline SyntheticGrid synth_grid(const SynthSpec& spec) {
    const std::size_t n = spec.nodes;
    if (n < 2) throw ArgumentError("synthetic grid needs at least 2 nodes");
    if (spec.lines < n - 1) throw ArgumentError("too few lines to connect the grid");
    if (static_cast<double>(spec.lines) > 0.5 * static_cast<double>(n) * static_cast<double>(n - 1))
        throw ArgumentError("line count exceeds a simple graph on the given nodes (degree > n-1)");
    if (!(spec.demand_min_mw > 0.0) || spec.demand_max_mw < spec.demand_min_mw)
        throw ArgumentError("invalid demand range");
    if (!(spec.load_fraction > 0.0) || spec.load_fraction > 1.0 || !(spec.generator_fraction > 0.0) ||
        spec.generator_fraction > 1.0)
        throw ArgumentError("load and generator fractions must be in (0, 1]");
    if (!(spec.capacity_margin >= 1.0)) throw ArgumentError("capacity margin must be at least 1");
    if (spec.share_275 < 0.0 || spec.share_400 < 0.0 || spec.share_275 + spec.share_400 > 1.0)
        throw ArgumentError("invalid voltage mix");

    Rng rng = make_rng(spec.seed, 0x5EED);
    std::vector<std::pair<double, double>> pos(n);
    for (auto& p : pos) p = {uniform01(rng), uniform01(rng)};
    auto dist = [&](std::size_t a, std::size_t b) {
        return std::hypot(pos[a].first - pos[b].first, pos[a].second - pos[b].second);
    };

    // Prim's MST on the complete Euclidean graph.
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    {
        std::vector<double> best(n, std::numeric_limits<double>::infinity());
        std::vector<std::size_t> parent(n, 0);
        std::vector<char> in(n, 0);
        best[0] = 0.0;
        for (std::size_t it = 0; it < n; ++it) {
            std::size_t u = n;
            for (std::size_t v = 0; v < n; ++v)
                if (!in[v] && (u == n || best[v] < best[u])) u = v;
            in[u] = 1;
            if (it > 0) edges.emplace_back(std::min(parent[u], u), std::max(parent[u], u));
            for (std::size_t v = 0; v < n; ++v)
                if (!in[v] && dist(u, v) < best[v]) {
                    best[v] = dist(u, v);
                    parent[v] = u;
                }
        }
    }

    std::vector<std::vector<char>> linked(n, std::vector<char>(n, 0));
    for (auto [a, b] : edges) linked[a][b] = linked[b][a] = 1;
    for (std::size_t k = 4; edges.size() < spec.lines; k *= 2) {
        std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
        for (std::size_t a = 0; a < n; ++a) {
            std::vector<std::pair<double, std::size_t>> near;
            for (std::size_t b = 0; b < n; ++b)
                if (b != a) near.emplace_back(dist(a, b), b);
            const std::size_t take = std::min(k, near.size());
            std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(take), near.end());
            for (std::size_t i = 0; i < take; ++i) {
                const std::size_t b = near[i].second;
                if (!linked[a][b] && a < b) cand.emplace_back(near[i].first, a, b);
            }
        }
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        for (const auto& [d, a, b] : cand) {
            if (edges.size() >= spec.lines) break;
            if (linked[a][b]) continue;
            linked[a][b] = linked[b][a] = 1;
            edges.emplace_back(a, b);
        }
        if (k > n) break;
    }

    const int width = static_cast<int>(std::to_string(std::max(n, spec.lines)).size());
    auto label = [width](char prefix, std::size_t i) {
        std::string s = std::to_string(i);
        return std::string(1, prefix) + std::string(static_cast<std::size_t>(width) - s.size(), '0') + s;
    };

    std::vector<Bus> buses(n);
    double total_demand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        buses[i].id = label('B', i);
        if (uniform01(rng) < spec.load_fraction) buses[i].demand = uniform(rng, spec.demand_min_mw, spec.demand_max_mw);
        total_demand += buses[i].demand;
    }
    if (total_demand <= 0.0) {
        buses[0].demand = spec.demand_min_mw;
        total_demand = spec.demand_min_mw;
    }
    const auto generators = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(spec.generator_fraction *
                                                                                         static_cast<double>(n))));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle(std::span<std::size_t>(order), rng);
    std::vector<double> raw(generators);
    double raw_total = 0.0;
    for (auto& r : raw) {
        r = uniform(rng, 0.2, 1.0);
        raw_total += r;
    }
    for (std::size_t g = 0; g < generators; ++g)
        buses[order[g]].generation_capacity = raw[g] / raw_total * spec.capacity_margin * total_demand;

    std::vector<Line> lines;
    lines.reserve(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        auto [a, b] = edges[e];
        Line l;
        l.id = label('L', e);
        l.from_bus = buses[a].id;
        l.to_bus = buses[b].id;
        const double u = uniform01(rng);
        l.voltage_class = u < spec.share_400 ? VoltageClass::V400
                          : u < spec.share_400 + spec.share_275 ? VoltageClass::V275
                                                                : VoltageClass::V132;
        const double base = l.voltage_class == VoltageClass::V400   ? 4.0
                            : l.voltage_class == VoltageClass::V275 ? 2.0
                                                                    : 1.0;
        l.susceptance = base * uniform(rng, 0.8, 1.25) / std::max(dist(a, b), 1e-3);
        lines.push_back(std::move(l));
    }

    SyntheticGrid out;
    PowerGrid bare(buses, lines);
    out.initial = initial_flows(bare);
    out.planted_alpha.assign(lines.size(), std::nullopt);
    if (spec.planting.kind == Planting::Kind::None) {
        out.grid = std::move(bare);
        return out;
    }

    const Planting& pl = spec.planting;
    if (pl.kind == Planting::Kind::LogNormalAlpha && !(pl.alpha_mean > 0.0 && pl.alpha_sd > 0.0))
        throw ArgumentError("log-normal alpha planting needs positive mean and sd");
    const double sigma2 = std::log(1.0 + (pl.alpha_sd * pl.alpha_sd) / (pl.alpha_mean * pl.alpha_mean));
    const double mu = std::log(pl.alpha_mean) - 0.5 * sigma2;
    for (LineIndex l = 0; l < lines.size(); ++l) {
        const double f = std::abs(out.initial.flow[l]);
        double limit = 0.0;
        switch (pl.kind) {
            case Planting::Kind::UniformAlpha:
            case Planting::Kind::LogNormalAlpha: {
                const double a = pl.kind == Planting::Kind::UniformAlpha
                                     ? pl.alpha
                                     : std::max(pl.alpha_min, std::exp(mu + std::sqrt(sigma2) * standard_normal(rng)));
                if (!(a > 0.0)) throw ArgumentError("planted alpha must be positive");
                if (f > kZeroFlowMw) {
                    limit = a * f;
                    out.planted_alpha[l] = a;
                } else {
                    limit = std::max(a * kLimitFloorMw, kLimitFloorMw);
                }
                break;
            }
            case Planting::Kind::LinearModel: {
                const double noise = pl.noise_sd_mw > 0.0 ? pl.noise_sd_mw * standard_normal(rng) : 0.0;
                limit = std::max(1000.0 * pl.model.predict_thousands(f, lines[l].voltage_class) + noise, kLimitFloorMw);
                break;
            }
            case Planting::Kind::None: break;
        }
        lines[l].real_limit = limit;
    }
    out.grid = PowerGrid(std::move(buses), std::move(lines));
    return out;
}

}  // namespace gridcascade

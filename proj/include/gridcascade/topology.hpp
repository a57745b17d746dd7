#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "gridcascade/grid.hpp"

namespace gridcascade {

struct TopologyStats {
    std::size_t node_count = 0;
    std::size_t edge_count = 0;
    double mean_degree = 0.0;
    double mean_unweighted_distance = 0.0;
    double assortativity = 0.0;
    double mean_clustering = 0.0;
    double mean_normalized_betweenness = 0.0;
};

namespace detail {

struct Neighbour {
    BusIndex bus;
    double weight;  // smallest reactance among parallel lines
};

// Undirected simple projection of the alive sub-network. Parallel lines
// collapse to one neighbour entry; its weight is the electrical distance
// (reactance) of the strongest parallel line.
inline std::vector<std::vector<Neighbour>> simple_adjacency(const NetworkView& view) {
    const PowerGrid& g = *view.grid;
    std::vector<std::vector<Neighbour>> adj(g.bus_count());
    for (LineIndex l = 0; l < g.line_count(); ++l) {
        if (!view.line_usable(l)) continue;
        const BusIndex a = g.from_index(l);
        const BusIndex b = g.to_index(l);
        const double x = 1.0 / g.line(l).susceptance;
        auto upsert = [x](std::vector<Neighbour>& list, BusIndex other) {
            for (auto& nb : list)
                if (nb.bus == other) {
                    nb.weight = std::min(nb.weight, x);
                    return;
                }
            list.push_back({other, x});
        };
        upsert(adj[a], b);
        upsert(adj[b], a);
    }
    for (auto& list : adj)
        std::sort(list.begin(), list.end(), [](const Neighbour& p, const Neighbour& q) { return p.bus < q.bus; });
    return adj;
}

}  // namespace detail

// Brandes betweenness on the simple projection of the alive sub-network. With
// `electrical` set, path length is the sum of line reactances; otherwise hop
// count. Each unordered pair contributes once (undirected convention); values
// are not normalised. Dead buses get 0.
inline std::vector<double> betweenness(const NetworkView& view, bool electrical) {
    const std::size_t n = view.grid->bus_count();
    const auto adj = detail::simple_adjacency(view);
    std::vector<double> cb(n, 0.0);

    std::vector<double> dist(n);
    std::vector<double> sigma(n);
    std::vector<double> delta(n);
    std::vector<std::vector<BusIndex>> preds(n);
    std::vector<BusIndex> order;
    order.reserve(n);
    constexpr double inf = std::numeric_limits<double>::infinity();

    for (BusIndex s = 0; s < n; ++s) {
        if (!view.bus_alive[s]) continue;
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        for (auto& p : preds) p.clear();
        order.clear();
        dist[s] = 0.0;
        sigma[s] = 1.0;

        if (!electrical) {
            std::queue<BusIndex> q;
            q.push(s);
            while (!q.empty()) {
                BusIndex v = q.front();
                q.pop();
                order.push_back(v);
                for (const auto& nb : adj[v]) {
                    const BusIndex w = nb.bus;
                    if (dist[w] == inf) {
                        dist[w] = dist[v] + 1.0;
                        q.push(w);
                    }
                    if (dist[w] == dist[v] + 1.0) {
                        sigma[w] += sigma[v];
                        preds[w].push_back(v);
                    }
                }
            }
        } else {
            using Item = std::pair<double, BusIndex>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
            std::vector<char> done(n, 0);
            pq.emplace(0.0, s);
            while (!pq.empty()) {
                auto [d, v] = pq.top();
                pq.pop();
                if (done[v]) continue;
                done[v] = 1;
                order.push_back(v);
                for (const auto& nb : adj[v]) {
                    const BusIndex w = nb.bus;
                    if (done[w]) continue;
                    const double alt = d + nb.weight;
                    const double tol = 1e-12 * std::max(1.0, alt);
                    if (alt < dist[w] - tol) {
                        dist[w] = alt;
                        sigma[w] = sigma[v];
                        preds[w].assign(1, v);
                        pq.emplace(alt, w);
                    } else if (std::abs(alt - dist[w]) <= tol) {
                        sigma[w] += sigma[v];
                        preds[w].push_back(v);
                    }
                }
            }
        }

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const BusIndex w = *it;
            for (BusIndex v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            if (w != s) cb[w] += delta[w];
        }
    }
    for (double& v : cb) v *= 0.5;
    return cb;
}

inline TopologyStats topology_stats(const NetworkView& view) {
    TopologyStats st;
    const PowerGrid& g = *view.grid;
    for (BusIndex i = 0; i < g.bus_count(); ++i) st.node_count += view.bus_alive[i] ? 1 : 0;
    for (LineIndex l = 0; l < g.line_count(); ++l) st.edge_count += view.line_usable(l) ? 1 : 0;
    if (st.node_count == 0) return {};
    const double n = static_cast<double>(st.node_count);
    st.mean_degree = 2.0 * static_cast<double>(st.edge_count) / n;

    const auto adj = detail::simple_adjacency(view);

    // Mean hop distance over reachable ordered pairs.
    double dist_sum = 0.0;
    double pair_count = 0.0;
    std::vector<int> hops(g.bus_count());
    for (BusIndex s = 0; s < g.bus_count(); ++s) {
        if (!view.bus_alive[s]) continue;
        std::fill(hops.begin(), hops.end(), -1);
        std::queue<BusIndex> q;
        hops[s] = 0;
        q.push(s);
        while (!q.empty()) {
            BusIndex v = q.front();
            q.pop();
            if (v != s) {
                dist_sum += hops[v];
                pair_count += 1.0;
            }
            for (const auto& nb : adj[v])
                if (hops[nb.bus] < 0) {
                    hops[nb.bus] = hops[v] + 1;
                    q.push(nb.bus);
                }
        }
    }
    st.mean_unweighted_distance = pair_count > 0.0 ? dist_sum / pair_count : 0.0;

    // Degree assortativity (Pearson correlation of end degrees over edges).
    double m = 0.0, sum_prod = 0.0, sum_half = 0.0, sum_sq = 0.0;
    for (BusIndex u = 0; u < g.bus_count(); ++u) {
        for (const auto& nb : adj[u]) {
            if (nb.bus < u) continue;
            const double j = static_cast<double>(adj[u].size());
            const double k = static_cast<double>(adj[nb.bus].size());
            m += 1.0;
            sum_prod += j * k;
            sum_half += 0.5 * (j + k);
            sum_sq += 0.5 * (j * j + k * k);
        }
    }
    if (m > 0.0) {
        const double mean = sum_half / m;
        const double denom = sum_sq / m - mean * mean;
        st.assortativity = denom > 1e-15 ? (sum_prod / m - mean * mean) / denom : 0.0;
    }

    // Local clustering; nodes with fewer than two neighbours count as 0.
    std::vector<char> mark(g.bus_count(), 0);
    double clustering = 0.0;
    for (BusIndex u = 0; u < g.bus_count(); ++u) {
        if (!view.bus_alive[u]) continue;
        const auto& nu = adj[u];
        const std::size_t d = nu.size();
        if (d < 2) continue;
        for (const auto& nb : nu) mark[nb.bus] = 1;
        std::size_t links = 0;
        for (const auto& nb : nu)
            for (const auto& nb2 : adj[nb.bus])
                if (mark[nb2.bus]) ++links;
        for (const auto& nb : nu) mark[nb.bus] = 0;
        clustering += static_cast<double>(links) / static_cast<double>(d * (d - 1));
    }
    st.mean_clustering = clustering / n;

    if (st.node_count > 2) {
        const auto cb = betweenness(view, false);
        const double scale = 2.0 / ((n - 1.0) * (n - 2.0));
        double total = 0.0;
        for (BusIndex i = 0; i < g.bus_count(); ++i)
            if (view.bus_alive[i]) total += cb[i] * scale;
        st.mean_normalized_betweenness = total / n;
    }
    return st;
}

inline TopologyStats topology_stats(const PowerGrid& grid) { return topology_stats(NetworkView::whole(grid)); }

}  // namespace gridcascade

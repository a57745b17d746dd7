#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gridcascade/cascade.hpp"
#include "gridcascade/dc_flow.hpp"
#include "gridcascade/errors.hpp"
#include "gridcascade/grid.hpp"
#include "gridcascade/line_limits.hpp"
#include "gridcascade/rng.hpp"
#include "gridcascade/spearman.hpp"
#include "gridcascade/strategies.hpp"

namespace gridcascade {

// Failure of one (limit method, simulation) cell of a batch.
class BatchCellError : public std::runtime_error {
public:
    BatchCellError(const std::string& what, std::string method, std::size_t sim, bool numerical)
        : std::runtime_error(what), method_(std::move(method)), sim_(sim), numerical_(numerical) {}

    [[nodiscard]] const std::string& method() const noexcept { return method_; }
    [[nodiscard]] std::size_t sim() const noexcept { return sim_; }
    [[nodiscard]] bool numerical() const noexcept { return numerical_; }

private:
    std::string method_;
    std::size_t sim_;
    bool numerical_;
};

// Seed of simulation k in a batch seeded with `seed`.
inline std::uint64_t sim_seed(std::uint64_t seed, std::size_t k) {
    Rng rng = make_rng(seed, 0x51D0000ULL + k);
    return rng();
}

// Runs jobs [0, count) on a pool of worker threads. Exceptions are collected
// per job; the lowest-indexed one is rethrown after all workers finish.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& job) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(count, 1));
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct BatchConfig {
    AttackPlan plan;  // plan.seed is replaced per simulation
    std::size_t n_sims = 100;
    std::uint64_t seed = 0;
    Physics physics = Physics::CascadingDC;
    std::size_t threads = 0;
};

struct TraceStore {
    std::vector<LimitSet> limit_sets;
    std::vector<Physics> physics;                      // per limit set
    std::size_t n_sims = 0;
    std::size_t bus_count = 0;
    std::vector<std::vector<BusIndex>> orders;         // per simulation; empty for adaptive plans
    std::vector<std::vector<SimulationTrace>> traces;  // [limit set][simulation]

    [[nodiscard]] std::optional<std::size_t> method_index(const std::string& name) const {
        for (std::size_t m = 0; m < limit_sets.size(); ++m)
            if (limit_sets[m].method.name() == name) return m;
        return std::nullopt;
    }
};

using CellObserverFactory = std::function<RoundObserver(std::size_t method, std::size_t sim)>;
using ProgressFn = std::function<void(std::size_t done, std::size_t total, const std::string& method, std::size_t sim)>;

// Runs every limit set against the same n_sims removal schedules. Simulation k
// draws its order from sim_seed(seed, k), so results do not depend on thread
// count or scheduling. Unbounded limit sets run under topological physics.
inline TraceStore run_batch(const PowerGrid& grid, const std::vector<LimitSet>& limit_sets, const BatchConfig& cfg,
                            const LimitSet* ranking_limits = nullptr, const CellObserverFactory& observe = {},
                            const ProgressFn& progress = {}) {
    if (cfg.n_sims < 1) throw ArgumentError("n_sims must be at least 1");
    if (limit_sets.empty()) throw ArgumentError("batch needs at least one limit set");
    const FlowState initial = initial_flows(grid);

    TraceStore store;
    store.limit_sets = limit_sets;
    store.n_sims = cfg.n_sims;
    store.bus_count = grid.bus_count();
    for (const auto& ls : limit_sets) {
        if (ls.limits.size() != grid.line_count())
            throw ArgumentError("limit set " + ls.method.name() + " does not cover every line");
        store.physics.push_back(ls.unbounded() ? Physics::Topological : cfg.physics);
    }

    std::vector<AttackPlan> plans(cfg.n_sims, cfg.plan);
    store.orders.resize(cfg.n_sims);
    for (std::size_t k = 0; k < cfg.n_sims; ++k) {
        plans[k].seed = sim_seed(cfg.seed, k);
        store.orders[k] = make_plan(plans[k], grid, &initial, ranking_limits).order();
    }

    const std::size_t methods = limit_sets.size();
    store.traces.assign(methods, std::vector<SimulationTrace>(cfg.n_sims));
    std::mutex progress_mutex;
    std::size_t done = 0;
    parallel_for(methods * cfg.n_sims, cfg.threads, [&](std::size_t cell) {
        const std::size_t m = cell / cfg.n_sims;
        const std::size_t k = cell % cfg.n_sims;
        const std::string name = store.limit_sets[m].method.name();
        AttackSchedule schedule(plans[k], store.orders[k], grid.bus_count());
        try {
            store.traces[m][k] = run_attack(grid, store.limit_sets[m], store.physics[m], schedule,
                                            observe ? observe(m, k) : RoundObserver{});
        } catch (const SimulationAborted& e) {
            throw BatchCellError("cell (" + name + ", sim " + std::to_string(k) + "): " + e.what(), name, k,
                                 e.numerical());
        } catch (const NumericalError& e) {
            throw BatchCellError("cell (" + name + ", sim " + std::to_string(k) + "): " + e.what(), name, k, true);
        }
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(++done, methods * cfg.n_sims, name, k);
        }
    });
    return store;
}

// ---------------------------------------------------------------------------
// Damage curves

struct CurveStats {
    std::vector<double> mean;
    std::vector<double> sd;  // sample standard deviation; 0 for a single simulation
};

struct MethodCurves {
    std::string method;
    CurveStats giant;
    CurveStats blackout;
};

struct CurveRmse {
    std::string method;
    double giant_mean = 0.0;
    double blackout_mean = 0.0;
    double giant_sd = 0.0;
    double blackout_sd = 0.0;
};

struct DamageCurves {
    std::size_t rounds = 0;
    std::vector<MethodCurves> methods;
    std::vector<CurveRmse> rmse;  // against the real-limit curves
};

// Damage after targeted removal r (1-based), held at 1 once the grid is empty.
inline double damage_at(const SimulationTrace& t, std::size_t r, bool blackout) {
    if (r == 0 || r > t.rounds.size()) return 1.0;
    const auto& rec = t.rounds[r - 1];
    return blackout ? rec.blackout_damage : rec.giant_component_damage;
}

inline double curve_rmse(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ArgumentError("curves differ in length");
    if (a.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / static_cast<double>(a.size()));
}

inline DamageCurves damage_curves(const TraceStore& store) {
    const auto real = store.method_index("real");
    if (!real) throw ArgumentError("trace store has no real-limit cell");
    DamageCurves dc;
    for (const auto& per_method : store.traces)
        for (const auto& t : per_method) dc.rounds = std::max(dc.rounds, t.rounds.size());

    const double n = static_cast<double>(store.n_sims);
    for (std::size_t m = 0; m < store.limit_sets.size(); ++m) {
        MethodCurves mc;
        mc.method = store.limit_sets[m].method.name();
        for (CurveStats* cs : {&mc.giant, &mc.blackout}) {
            const bool blackout = cs == &mc.blackout;
            cs->mean.assign(dc.rounds, 0.0);
            cs->sd.assign(dc.rounds, 0.0);
            for (std::size_t r = 0; r < dc.rounds; ++r) {
                double sum = 0.0;
                for (const auto& t : store.traces[m]) sum += damage_at(t, r + 1, blackout);
                const double mean = sum / n;
                double ss = 0.0;
                for (const auto& t : store.traces[m]) {
                    const double d = damage_at(t, r + 1, blackout) - mean;
                    ss += d * d;
                }
                cs->mean[r] = mean;
                cs->sd[r] = store.n_sims > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
            }
        }
        dc.methods.push_back(std::move(mc));
    }
    const MethodCurves& ref = dc.methods[*real];
    for (const auto& mc : dc.methods) {
        dc.rmse.push_back({mc.method, curve_rmse(mc.giant.mean, ref.giant.mean),
                           curve_rmse(mc.blackout.mean, ref.blackout.mean), curve_rmse(mc.giant.sd, ref.giant.sd),
                           curve_rmse(mc.blackout.sd, ref.blackout.sd)});
    }
    return dc;
}

// ---------------------------------------------------------------------------
// Node-loss-order correlation

struct SimCorrelation {
    std::optional<double> rho;     // undefined with fewer than 2 comparable nodes or no rank variance
    std::size_t nodes_compared = 0;
    std::size_t nodes_dropped = 0;  // cascade-lost in one run only
};

struct LossOrderCorrelation {
    std::string method;
    std::vector<SimCorrelation> sims;
    double mean_rho = std::numeric_limits<double>::quiet_NaN();
    std::size_t undefined = 0;
};

// Pairs the cascade-loss rounds of nodes that were never targeted in either run
// and were lost to cascade in both.
inline SimCorrelation correlate_loss_order(const SimulationTrace& artificial, const SimulationTrace& real,
                                           std::size_t bus_count) {
    const auto ra = artificial.loss_rounds(bus_count);
    const auto rr = real.loss_rounds(bus_count);
    const auto ta = artificial.targeted(bus_count);
    const auto tr = real.targeted(bus_count);
    SimCorrelation out;
    std::vector<double> x, y;
    for (BusIndex b = 0; b < bus_count; ++b) {
        if (ta[b] || tr[b]) continue;
        if (ra[b] && rr[b]) {
            x.push_back(static_cast<double>(*ra[b]));
            y.push_back(static_cast<double>(*rr[b]));
        } else if (ra[b] || rr[b]) {
            ++out.nodes_dropped;
        }
    }
    out.nodes_compared = x.size();
    if (x.size() >= 2) out.rho = spearman(x, y);
    return out;
}

inline LossOrderCorrelation loss_order_correlation(const TraceStore& store, const std::string& method) {
    const auto real = store.method_index("real");
    if (!real) throw ArgumentError("trace store has no real-limit cell");
    const auto m = store.method_index(method);
    if (!m) throw ArgumentError("trace store has no cell for " + method);
    LossOrderCorrelation out;
    out.method = method;
    double sum = 0.0;
    std::size_t defined = 0;
    for (std::size_t k = 0; k < store.n_sims; ++k) {
        out.sims.push_back(correlate_loss_order(store.traces[*m][k], store.traces[*real][k], store.bus_count));
        if (out.sims.back().rho) {
            sum += *out.sims.back().rho;
            ++defined;
        } else {
            ++out.undefined;
        }
    }
    if (defined > 0) out.mean_rho = sum / static_cast<double>(defined);
    return out;
}

// ---------------------------------------------------------------------------
// Attack-strategy ranking

struct StrategyRankTable {
    std::string method;
    std::vector<std::string> strategies;
    std::vector<std::vector<double>> damage;  // [round][strategy] blackout damage
    std::vector<std::vector<double>> ranks;   // [round][strategy], 1 = most damage
    double rmse = 0.0;                        // against the real-limit table
};

// Ranks one round's damages: most damage gets rank 1, exact ties share the
// average rank.
inline std::vector<double> rank_by_damage(const std::vector<double>& damage) {
    std::vector<double> negated(damage.size());
    for (std::size_t i = 0; i < damage.size(); ++i) negated[i] = -damage[i];
    return average_ranks(negated);
}

inline double rank_table_rmse(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size()) throw ArgumentError("rank tables differ in round count");
    double s = 0.0;
    std::size_t cells = 0;
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (a[r].size() != b[r].size()) throw ArgumentError("rank tables differ in strategy count");
        for (std::size_t j = 0; j < a[r].size(); ++j) {
            s += (a[r][j] - b[r][j]) * (a[r][j] - b[r][j]);
            ++cells;
        }
    }
    return cells ? std::sqrt(s / static_cast<double>(cells)) : 0.0;
}

// Per-method rank tables from [method][strategy] traces; the real-limit method
// is the RMSE reference.
inline std::vector<StrategyRankTable> build_rank_tables(const std::vector<LimitSet>& limit_sets,
                                                        const std::vector<Strategy>& strategies,
                                                        const std::vector<std::vector<SimulationTrace>>& traces) {
    std::optional<std::size_t> real;
    for (std::size_t m = 0; m < limit_sets.size(); ++m)
        if (limit_sets[m].method.kind == LimitMethod::Kind::Real) real = m;
    if (!real) throw ArgumentError("strategy ranking needs the real limit set");
    if (traces.size() != limit_sets.size()) throw ArgumentError("rank traces do not match limit sets");
    const std::size_t S = strategies.size();
    std::size_t rounds = 0;
    for (const auto& row : traces) {
        if (row.size() != S) throw ArgumentError("rank traces do not match strategies");
        for (const auto& t : row) rounds = std::max(rounds, t.rounds.size());
    }
    std::vector<StrategyRankTable> tables;
    for (std::size_t m = 0; m < limit_sets.size(); ++m) {
        StrategyRankTable tab;
        tab.method = limit_sets[m].method.name();
        for (Strategy s : strategies) tab.strategies.push_back(strategy_name(s));
        for (std::size_t r = 1; r <= rounds; ++r) {
            std::vector<double> d(S);
            for (std::size_t j = 0; j < S; ++j) d[j] = damage_at(traces[m][j], r, true);
            tab.ranks.push_back(rank_by_damage(d));
            tab.damage.push_back(std::move(d));
        }
        tables.push_back(std::move(tab));
    }
    for (auto& tab : tables) tab.rmse = rank_table_rmse(tab.ranks, tables[*real].ranks);
    return tables;
}

struct StrategyRanking {
    std::vector<std::vector<BusIndex>> orders;             // per strategy, ranked on the intact grid
    std::vector<std::vector<SimulationTrace>> traces;      // [method][strategy]
    std::vector<StrategyRankTable> tables;                 // per method
};

// Every strategy's fixed sequential order is ranked once on the intact grid
// (initial flows, `ranking_limits` for limit-weighted strategies) and replayed
// under every limit set. Tables are padded to the longest attack with damage 1.
inline StrategyRanking strategy_rank_rmse(const PowerGrid& grid, const std::vector<LimitSet>& limit_sets,
                                          const std::vector<Strategy>& strategies, const LimitSet* ranking_limits,
                                          Physics physics = Physics::CascadingDC, std::size_t threads = 0) {
    if (strategies.empty()) throw ArgumentError("no strategies given");
    std::optional<std::size_t> real;
    for (std::size_t m = 0; m < limit_sets.size(); ++m)
        if (limit_sets[m].method.kind == LimitMethod::Kind::Real) real = m;
    if (!real) throw ArgumentError("strategy ranking needs the real limit set");

    const FlowState initial = initial_flows(grid);
    StrategyRanking out;
    for (Strategy s : strategies) {
        AttackPlan plan;
        plan.strategy = s;
        out.orders.push_back(make_plan(plan, grid, &initial, ranking_limits).order());
    }
    const std::size_t S = strategies.size();
    out.traces.assign(limit_sets.size(), std::vector<SimulationTrace>(S));
    parallel_for(limit_sets.size() * S, threads, [&](std::size_t cell) {
        const std::size_t m = cell / S;
        const std::size_t j = cell % S;
        const Physics ph = limit_sets[m].unbounded() ? Physics::Topological : physics;
        out.traces[m][j] = attack_the_grid(grid, limit_sets[m], out.orders[j], ph);
    });

    out.tables = build_rank_tables(limit_sets, strategies, out.traces);
    return out;
}

// ---------------------------------------------------------------------------
// True-alpha estimation

// Mean tolerance and mean load level (|f| / limit) over surviving lines whose
// flow magnitude is at least kAlphaFlowFloorMw.
inline constexpr double kAlphaFlowFloorMw = 1e-9;

struct LoadingSample {
    double mean_alpha = 0.0;
    double mean_load = 0.0;
    std::size_t lines = 0;
};

inline LoadingSample loading_sample(const GridState& s) {
    LoadingSample out;
    const auto& lim = s.limits->limits;
    for (LineIndex l = 0; l < lim.size(); ++l) {
        if (!s.line_alive[l]) continue;
        const double f = std::abs(s.flows.flow[l]);
        if (f < kAlphaFlowFloorMw) continue;
        if (!std::isfinite(lim[l])) throw ArgumentError("loading undefined for unbounded limits");
        out.mean_alpha += lim[l] / f;
        out.mean_load += f / lim[l];
        ++out.lines;
    }
    if (out.lines) {
        out.mean_alpha /= static_cast<double>(out.lines);
        out.mean_load /= static_cast<double>(out.lines);
    }
    return out;
}

// Per-simulation loading history; entry 0 is the settled intact grid. Rounds
// with no loaded line are absent.
struct LoadingHistory {
    std::vector<std::size_t> round;
    std::vector<double> mean_alpha;
    std::vector<double> mean_load;

    // Largest drop below the initial value, never negative.
    [[nodiscard]] double delta_alpha() const { return max_drop(mean_alpha); }
    [[nodiscard]] double delta_load() const { return max_drop(mean_load); }
    [[nodiscard]] double delta_total() const { return delta_alpha() + delta_load(); }

private:
    static double max_drop(const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double lowest = v.front();
        for (double x : v) lowest = std::min(lowest, x);
        return std::max(0.0, v.front() - lowest);
    }
};

struct AlphaTrace {
    double candidate = 0.0;
    std::vector<double> mean_alpha;  // per round (0 = initial), averaged over simulations with data
    std::vector<double> mean_load;
    double delta_alpha = 0.0;  // averaged over simulations
    double delta_load = 0.0;
    double delta_total = 0.0;
    std::vector<LoadingHistory> sims;
};

struct TrueAlphaEstimate {
    std::vector<AlphaTrace> traces;
    double best = 0.0;
};

inline AlphaTrace summarise_alpha(double candidate, std::vector<LoadingHistory> sims) {
    AlphaTrace at;
    at.candidate = candidate;
    std::size_t rounds = 0;
    for (const auto& h : sims)
        if (!h.round.empty()) rounds = std::max(rounds, h.round.back() + 1);
    std::vector<double> sa(rounds, 0.0), sl(rounds, 0.0);
    std::vector<std::size_t> cnt(rounds, 0);
    for (const auto& h : sims) {
        for (std::size_t i = 0; i < h.round.size(); ++i) {
            sa[h.round[i]] += h.mean_alpha[i];
            sl[h.round[i]] += h.mean_load[i];
            ++cnt[h.round[i]];
        }
        at.delta_alpha += h.delta_alpha();
        at.delta_load += h.delta_load();
    }
    for (std::size_t r = 0; r < rounds; ++r) {
        if (!cnt[r]) break;
        at.mean_alpha.push_back(sa[r] / static_cast<double>(cnt[r]));
        at.mean_load.push_back(sl[r] / static_cast<double>(cnt[r]));
    }
    if (!sims.empty()) {
        at.delta_alpha /= static_cast<double>(sims.size());
        at.delta_load /= static_cast<double>(sims.size());
    }
    at.delta_total = at.delta_alpha + at.delta_load;
    at.sims = std::move(sims);
    return at;
}

// Runs the batch under PL(candidate) for each candidate, tracking the mean
// loading of surviving lines round by round, and returns the candidate whose
// mean total drop (delta alpha + delta load level) is smallest.
inline TrueAlphaEstimate estimate_true_alpha(const PowerGrid& grid, const std::vector<double>& candidates,
                                             const BatchConfig& cfg) {
    if (candidates.empty()) throw ArgumentError("no alpha candidates");
    if (cfg.physics == Physics::Topological)
        throw ArgumentError("alpha traces are undefined under topological physics");
    for (double c : candidates)
        if (!(c > 0.0) || !std::isfinite(c)) throw ArgumentError("alpha candidates must be positive and finite");

    TrueAlphaEstimate est;
    if (candidates.size() == 1) {
        est.best = candidates.front();
    }
    const FlowState initial = initial_flows(grid);
    std::vector<LimitSet> sets;
    for (double c : candidates) sets.push_back(proportional_limits(grid, initial, c));

    std::vector<std::vector<LoadingHistory>> hist(candidates.size(), std::vector<LoadingHistory>(cfg.n_sims));
    auto observe = [&](std::size_t m, std::size_t k) -> RoundObserver {
        return [&hist, m, k](const GridState& s, const RoundRecord* rec) {
            const LoadingSample ls = loading_sample(s);
            if (ls.lines == 0) return;
            auto& h = hist[m][k];
            h.round.push_back(rec ? rec->round : 0);
            h.mean_alpha.push_back(ls.mean_alpha);
            h.mean_load.push_back(ls.mean_load);
        };
    };
    run_batch(grid, sets, cfg, nullptr, observe);

    for (std::size_t m = 0; m < candidates.size(); ++m)
        est.traces.push_back(summarise_alpha(candidates[m], std::move(hist[m])));
    if (candidates.size() > 1) {
        std::size_t best = 0;
        for (std::size_t m = 1; m < est.traces.size(); ++m)
            if (est.traces[m].delta_total < est.traces[best].delta_total) best = m;
        est.best = candidates[best];
    }
    return est;
}

}  // namespace gridcascade

#pragma once

// On-disk results store: one directory per batch.
//
//   config.json       resolved run configuration (replayable)
//   traces.csv        sim_id,method,round,targets,nodes_lost,lines_tripped,giant_damage,blackout_damage
//   traces.json       full traces (orders, losses, trips, strategy and alpha runs)
//   manifest.json     FNV-1a checksums of config.json, traces.csv and traces.json
//   curves.csv, rmse.csv, correlations.csv, ranks.csv, alpha_traces.csv, summary.txt

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridcascade/cascade.hpp"
#include "gridcascade/csv.hpp"
#include "gridcascade/errors.hpp"
#include "gridcascade/experiments.hpp"
#include "gridcascade/line_limits.hpp"
#include "gridcascade/strategies.hpp"

namespace gridcascade {

inline constexpr const char* kArtifactVersion = "1.0.0";

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + p.string());
    out << text;
    if (!out) throw ValidationError("failed writing " + p.string());
}

inline std::string file_checksum(const std::filesystem::path& p) { return hex64(fnv1a(read_text(p))); }

// Hash of a grid's two source files, order-sensitive.
inline std::string grid_hash(const std::filesystem::path& nodes, const std::filesystem::path& edges) {
    return hex64(fnv1a(read_text(edges), fnv1a(read_text(nodes))));
}

// ---------------------------------------------------------------------------
// Trace (de)serialisation. Buses and lines are stored by index.

inline nlohmann::json trace_to_json(const SimulationTrace& t) {
    auto trips = [](const std::vector<TrippedLine>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& x : v) a.push_back({x.line, x.iteration});
        return a;
    };
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : t.rounds)
        rounds.push_back({{"round", r.round},
                          {"targets", r.targets},
                          {"cascade_lost", r.cascade_lost},
                          {"tripped", trips(r.tripped)},
                          {"giant", r.giant_component_damage},
                          {"blackout", r.blackout_damage}});
    return {{"initial_lost", t.initial_lost}, {"initial_tripped", trips(t.initial_tripped)}, {"rounds", rounds}};
}

inline SimulationTrace trace_from_json(const nlohmann::json& j) {
    auto trips = [](const nlohmann::json& a) {
        std::vector<TrippedLine> v;
        for (const auto& x : a) v.push_back({x.at(0).get<LineIndex>(), x.at(1).get<std::size_t>()});
        return v;
    };
    SimulationTrace t;
    j.at("initial_lost").get_to(t.initial_lost);
    t.initial_tripped = trips(j.at("initial_tripped"));
    for (const auto& r : j.at("rounds")) {
        RoundRecord rec;
        r.at("round").get_to(rec.round);
        r.at("targets").get_to(rec.targets);
        r.at("cascade_lost").get_to(rec.cascade_lost);
        rec.tripped = trips(r.at("tripped"));
        r.at("giant").get_to(rec.giant_component_damage);
        r.at("blackout").get_to(rec.blackout_damage);
        t.rounds.push_back(std::move(rec));
    }
    return t;
}

struct AlphaRun {
    std::vector<double> candidates;
    std::vector<std::vector<LoadingHistory>> histories;  // [candidate][simulation]
};

struct RankRun {
    std::vector<Strategy> strategies;
    std::vector<std::vector<SimulationTrace>> traces;  // [method][strategy]
};

// Everything the report needs; nothing here requires the grid.
struct BatchResults {
    TraceStore store;
    std::optional<RankRun> ranking;
    std::optional<AlphaRun> alpha;
};

inline nlohmann::json results_to_json(const BatchResults& r) {
    const TraceStore& s = r.store;
    nlohmann::json methods = nlohmann::json::array(), physics = nlohmann::json::array();
    for (std::size_t m = 0; m < s.limit_sets.size(); ++m) {
        methods.push_back(s.limit_sets[m].method.name());
        physics.push_back(physics_name(s.physics[m]));
    }
    nlohmann::json traces = nlohmann::json::array();
    for (const auto& row : s.traces) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& t : row) a.push_back(trace_to_json(t));
        traces.push_back(std::move(a));
    }
    nlohmann::json j{{"bus_count", s.bus_count}, {"n_sims", s.n_sims}, {"methods", methods},
                     {"physics", physics},       {"orders", s.orders},  {"traces", traces}};
    if (r.ranking) {
        nlohmann::json names = nlohmann::json::array(), rt = nlohmann::json::array();
        for (Strategy st : r.ranking->strategies) names.push_back(strategy_name(st));
        for (const auto& row : r.ranking->traces) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& t : row) a.push_back(trace_to_json(t));
            rt.push_back(std::move(a));
        }
        j["ranking"] = {{"strategies", names}, {"traces", rt}};
    }
    if (r.alpha) {
        nlohmann::json h = nlohmann::json::array();
        for (const auto& per : r.alpha->histories) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& x : per)
                a.push_back({{"round", x.round}, {"mean_alpha", x.mean_alpha}, {"mean_load", x.mean_load}});
            h.push_back(std::move(a));
        }
        j["alpha"] = {{"candidates", r.alpha->candidates}, {"histories", h}};
    }
    return j;
}

inline BatchResults results_from_json(const nlohmann::json& j) {
    BatchResults r;
    TraceStore& s = r.store;
    j.at("bus_count").get_to(s.bus_count);
    j.at("n_sims").get_to(s.n_sims);
    for (const auto& m : j.at("methods")) s.limit_sets.push_back({LimitMethod::parse(m.get<std::string>()), {}});
    for (const auto& p : j.at("physics")) s.physics.push_back(parse_physics(p.get<std::string>()));
    j.at("orders").get_to(s.orders);
    for (const auto& row : j.at("traces")) {
        std::vector<SimulationTrace> v;
        for (const auto& t : row) v.push_back(trace_from_json(t));
        s.traces.push_back(std::move(v));
    }
    if (s.traces.size() != s.limit_sets.size() || s.physics.size() != s.limit_sets.size())
        throw ValidationError("traces.json: method and trace counts disagree");
    for (const auto& row : s.traces)
        if (row.size() != s.n_sims) throw ValidationError("traces.json: simulation count mismatch");
    if (j.contains("ranking")) {
        RankRun rr;
        for (const auto& n : j["ranking"].at("strategies")) rr.strategies.push_back(parse_strategy(n.get<std::string>()));
        for (const auto& row : j["ranking"].at("traces")) {
            std::vector<SimulationTrace> v;
            for (const auto& t : row) v.push_back(trace_from_json(t));
            rr.traces.push_back(std::move(v));
        }
        r.ranking = std::move(rr);
    }
    if (j.contains("alpha")) {
        AlphaRun ar;
        j["alpha"].at("candidates").get_to(ar.candidates);
        for (const auto& per : j["alpha"].at("histories")) {
            std::vector<LoadingHistory> v;
            for (const auto& x : per) {
                LoadingHistory h;
                x.at("round").get_to(h.round);
                x.at("mean_alpha").get_to(h.mean_alpha);
                x.at("mean_load").get_to(h.mean_load);
                v.push_back(std::move(h));
            }
            ar.histories.push_back(std::move(v));
        }
        if (ar.histories.size() != ar.candidates.size())
            throw ValidationError("traces.json: alpha histories do not match candidates");
        r.alpha = std::move(ar);
    }
    return r;
}

// One row per recorded round of every (method, simulation) cell.
inline std::string traces_csv(const TraceStore& s) {
    std::ostringstream o;
    o << "sim_id,method,round,targets,nodes_lost,lines_tripped,giant_damage,blackout_damage\n";
    for (std::size_t k = 0; k < s.n_sims; ++k)
        for (std::size_t m = 0; m < s.limit_sets.size(); ++m) {
            const std::string name = s.limit_sets[m].method.name();
            for (const auto& r : s.traces[m][k].rounds)
                o << k << ',' << name << ',' << r.round << ',' << r.targets.size() << ','
                  << r.targets.size() + r.cascade_lost.size() << ',' << r.tripped.size() << ','
                  << csv::format_double(r.giant_component_damage) << ',' << csv::format_double(r.blackout_damage)
                  << '\n';
        }
    return o.str();
}

// ---------------------------------------------------------------------------
// Aggregation

struct Report {
    DamageCurves curves;
    std::vector<LossOrderCorrelation> correlations;  // every non-real method
    std::vector<StrategyRankTable> ranks;
    std::optional<TrueAlphaEstimate> alpha;
    std::string best_blackout_method;  // lowest blackout mean-curve RMSE, real excluded
    std::string best_giant_method;
};

inline Report aggregate(const BatchResults& r) {
    Report rep;
    rep.curves = damage_curves(r.store);
    for (const auto& ls : r.store.limit_sets)
        if (ls.method.kind != LimitMethod::Kind::Real)
            rep.correlations.push_back(loss_order_correlation(r.store, ls.method.name()));
    if (r.ranking) rep.ranks = build_rank_tables(r.store.limit_sets, r.ranking->strategies, r.ranking->traces);
    if (r.alpha) {
        TrueAlphaEstimate est;
        for (std::size_t m = 0; m < r.alpha->candidates.size(); ++m)
            est.traces.push_back(summarise_alpha(r.alpha->candidates[m], r.alpha->histories[m]));
        std::size_t best = 0;
        for (std::size_t m = 1; m < est.traces.size(); ++m)
            if (est.traces[m].delta_total < est.traces[best].delta_total) best = m;
        if (!est.traces.empty()) est.best = est.traces[best].candidate;
        rep.alpha = std::move(est);
    }
    double bb = std::numeric_limits<double>::infinity(), bg = bb;
    for (const auto& e : rep.curves.rmse) {
        if (e.method == "real") continue;
        if (e.blackout_mean < bb) {
            bb = e.blackout_mean;
            rep.best_blackout_method = e.method;
        }
        if (e.giant_mean < bg) {
            bg = e.giant_mean;
            rep.best_giant_method = e.method;
        }
    }
    return rep;
}

inline std::string opt_double(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }

struct ReportFiles {
    std::string curves, rmse, correlations, ranks, alpha_traces, summary;
};

inline ReportFiles render_report(const Report& rep) {
    ReportFiles f;
    std::ostringstream c, e, co, ra, al, su;
    using csv::format_double;

    c << "method,round,giant_mean,giant_sd,blackout_mean,blackout_sd\n";
    for (const auto& mc : rep.curves.methods)
        for (std::size_t i = 0; i < rep.curves.rounds; ++i)
            c << mc.method << ',' << i + 1 << ',' << format_double(mc.giant.mean[i]) << ','
              << format_double(mc.giant.sd[i]) << ',' << format_double(mc.blackout.mean[i]) << ','
              << format_double(mc.blackout.sd[i]) << '\n';

    e << "method,giant_rmse,blackout_rmse,giant_sd_rmse,blackout_sd_rmse,mean_rho,undefined_rho,rank_rmse\n";
    for (const auto& x : rep.curves.rmse) {
        e << x.method << ',' << format_double(x.giant_mean) << ',' << format_double(x.blackout_mean) << ','
          << format_double(x.giant_sd) << ',' << format_double(x.blackout_sd) << ',';
        std::string rho, undef, rank;
        for (const auto& lc : rep.correlations)
            if (lc.method == x.method) {
                rho = std::isnan(lc.mean_rho) ? "" : format_double(lc.mean_rho);
                undef = std::to_string(lc.undefined);
            }
        for (const auto& t : rep.ranks)
            if (t.method == x.method) rank = format_double(t.rmse);
        e << rho << ',' << undef << ',' << rank << '\n';
    }

    co << "method,sim_id,rho,nodes_compared,nodes_dropped\n";
    for (const auto& lc : rep.correlations)
        for (std::size_t k = 0; k < lc.sims.size(); ++k)
            co << lc.method << ',' << k << ',' << opt_double(lc.sims[k].rho) << ',' << lc.sims[k].nodes_compared
               << ',' << lc.sims[k].nodes_dropped << '\n';

    ra << "method,round,strategy,blackout_damage,rank\n";
    for (const auto& t : rep.ranks)
        for (std::size_t r = 0; r < t.ranks.size(); ++r)
            for (std::size_t j = 0; j < t.strategies.size(); ++j)
                ra << t.method << ',' << r + 1 << ',' << t.strategies[j] << ',' << format_double(t.damage[r][j])
                   << ',' << format_double(t.ranks[r][j]) << '\n';

    al << "candidate,round,mean_alpha,mean_load\n";
    if (rep.alpha)
        for (const auto& at : rep.alpha->traces)
            for (std::size_t r = 0; r < at.mean_alpha.size(); ++r)
                al << format_double(at.candidate) << ',' << r << ',' << format_double(at.mean_alpha[r]) << ','
                   << format_double(at.mean_load[r]) << '\n';

    su << "methods: " << rep.curves.methods.size() << "\n";
    su << "rounds: " << rep.curves.rounds << "\n";
    if (!rep.best_blackout_method.empty()) {
        su << "best blackout-curve method: " << rep.best_blackout_method << "\n";
        su << "best giant-component-curve method: " << rep.best_giant_method << "\n";
    }
    for (const auto& x : rep.curves.rmse)
        su << "  " << x.method << " blackout rmse " << format_double(x.blackout_mean) << ", giant rmse "
           << format_double(x.giant_mean) << "\n";
    for (const auto& lc : rep.correlations)
        su << "loss-order rho " << lc.method << ": "
           << (std::isnan(lc.mean_rho) ? std::string("undefined") : format_double(lc.mean_rho)) << " ("
           << lc.undefined << " undefined)\n";
    if (!rep.ranks.empty()) {
        const StrategyRankTable* best = nullptr;
        for (const auto& t : rep.ranks) {
            su << "rank rmse " << t.method << ": " << format_double(t.rmse) << "\n";
            if (t.method != "real" && (!best || t.rmse < best->rmse)) best = &t;
        }
        if (best) su << "best strategy-ranking method: " << best->method << "\n";
    }
    if (rep.alpha) {
        for (const auto& at : rep.alpha->traces)
            su << "alpha " << format_double(at.candidate) << ": delta_alpha " << format_double(at.delta_alpha)
               << ", delta_load " << format_double(at.delta_load) << ", delta_total "
               << format_double(at.delta_total) << "\n";
        su << "estimated alpha: " << format_double(rep.alpha->best) << "\n";
    }

    f.curves = c.str();
    f.rmse = e.str();
    f.correlations = co.str();
    f.ranks = ra.str();
    f.alpha_traces = al.str();
    f.summary = su.str();
    return f;
}

// ---------------------------------------------------------------------------
// Directory store

inline const std::vector<std::string> kChecksummedFiles = {"config.json", "traces.csv", "traces.json"};

inline void write_manifest(const std::filesystem::path& dir) {
    nlohmann::json m;
    m["artifact_version"] = kArtifactVersion;
    for (const auto& name : kChecksummedFiles) m["fnv1a"][name] = file_checksum(dir / name);
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

inline void verify_manifest(const std::filesystem::path& dir) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_text(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("manifest.json unreadable: " + std::string(e.what()));
    }
    for (const auto& name : kChecksummedFiles) {
        if (!m.contains("fnv1a") || !m["fnv1a"].contains(name))
            throw ValidationError("manifest.json has no checksum for " + name);
        if (m["fnv1a"][name].get<std::string>() != file_checksum(dir / name))
            throw ValidationError("checksum mismatch for " + name + " (results were modified)");
    }
}

inline void write_report(const std::filesystem::path& dir, const ReportFiles& f) {
    write_text(dir / "curves.csv", f.curves);
    write_text(dir / "rmse.csv", f.rmse);
    write_text(dir / "correlations.csv", f.correlations);
    write_text(dir / "ranks.csv", f.ranks);
    write_text(dir / "alpha_traces.csv", f.alpha_traces);
    write_text(dir / "summary.txt", f.summary);
}

inline void write_results(const std::filesystem::path& dir, const nlohmann::json& config, const BatchResults& r) {
    std::filesystem::create_directories(dir);
    write_text(dir / "config.json", config.dump(2) + "\n");
    write_text(dir / "traces.csv", traces_csv(r.store));
    write_text(dir / "traces.json", results_to_json(r).dump() + "\n");
    write_manifest(dir);
}

// Verifies checksums, then loads the stored traces.
inline BatchResults load_results(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ValidationError("no results directory " + dir.string());
    verify_manifest(dir);
    try {
        return results_from_json(nlohmann::json::parse(read_text(dir / "traces.json")));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("traces.json malformed: " + std::string(e.what()));
    }
}

}  // namespace gridcascade

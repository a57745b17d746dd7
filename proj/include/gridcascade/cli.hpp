#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridcascade/cascade.hpp"
#include "gridcascade/errors.hpp"
#include "gridcascade/experiments.hpp"
#include "gridcascade/grid_io.hpp"
#include "gridcascade/line_limits.hpp"
#include "gridcascade/results.hpp"
#include "gridcascade/strategies.hpp"
#include "gridcascade/synth.hpp"

namespace gridcascade {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct RunConfig {
    std::string nodes;
    std::string edges;
    std::optional<std::string> grid_hash;  // checked when present

    Physics physics = Physics::CascadingDC;
    std::string element = "node";
    AttackType attack_type = AttackType::Fixed;
    std::string regime = "sequential";
    std::size_t group = 1;
    std::optional<std::size_t> target_count;
    std::string load_profile = "baseload";
    Strategy strategy = Strategy::Random;

    // Tokens: real, pf, volt_pf, topological, pl (one per alpha).
    std::vector<std::string> limit_methods = {"real", "volt_pf", "pl"};
    std::vector<double> alphas = kDefaultAlphaGrid;
    bool alpha_trace = false;
    std::vector<Strategy> rank_strategies;
    std::size_t n_sims = 100;
    std::uint64_t seed = 0;
    std::size_t folds = 10;
    std::string out = "results";
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end())
            throw ValidationError("unknown key '" + k + "' in " + where);
}

}  // namespace detail

inline void validate_config(const RunConfig& c) {
    if (c.element != "node") throw ValidationError("element '" + c.element + "' is not supported (node only)");
    if (c.load_profile != "baseload")
        throw ValidationError("load profile '" + c.load_profile + "' is not supported (baseload only)");
    RemovalRegime::parse(c.regime, c.group);
    if (c.regime != "sequential" && c.group < 1) throw ValidationError("group size must be at least 1");
    if (c.n_sims < 1) throw ValidationError("sims must be at least 1");
    if (c.folds < 2) throw ValidationError("folds must be at least 2");
    for (double a : c.alphas)
        if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("alpha values must be positive and finite");
    for (const auto& m : c.limit_methods)
        if (m != "real" && m != "pf" && m != "volt_pf" && m != "topological" && m != "pl")
            throw ValidationError("unknown limit method '" + m + "'");
    if (c.alpha_trace && c.physics == Physics::Topological)
        throw ValidationError("alpha traces are undefined under topological physics");
    if (c.alpha_trace && c.alphas.empty()) throw ValidationError("alpha trace needs alpha candidates");
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    detail::reject_unknown(j,
                           {"artifact_version", "grid", "pearl", "strategy", "limit_methods", "alphas", "alpha_trace",
                            "rank_strategies", "n_sims", "seed", "folds", "out"},
                           "config");
    RunConfig c;
    try {
        if (j.contains("grid")) {
            const auto& g = j["grid"];
            detail::reject_unknown(g, {"nodes", "edges", "hash"}, "config.grid");
            if (g.contains("nodes")) c.nodes = g["nodes"].get<std::string>();
            if (g.contains("edges")) c.edges = g["edges"].get<std::string>();
            if (g.contains("hash")) c.grid_hash = g["hash"].get<std::string>();
        }
        if (j.contains("pearl")) {
            const auto& p = j["pearl"];
            detail::reject_unknown(
                p, {"physics", "element", "attack_type", "regime", "group", "target_count", "load_profile"},
                "config.pearl");
            if (p.contains("physics")) c.physics = parse_physics(p["physics"].get<std::string>());
            if (p.contains("element")) c.element = p["element"].get<std::string>();
            if (p.contains("attack_type")) c.attack_type = parse_attack_type(p["attack_type"].get<std::string>());
            if (p.contains("regime")) c.regime = p["regime"].get<std::string>();
            if (p.contains("group")) c.group = p["group"].get<std::size_t>();
            if (p.contains("target_count") && !p["target_count"].is_null())
                c.target_count = p["target_count"].get<std::size_t>();
            if (p.contains("load_profile")) c.load_profile = p["load_profile"].get<std::string>();
        }
        if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
        if (j.contains("limit_methods")) c.limit_methods = j["limit_methods"].get<std::vector<std::string>>();
        if (j.contains("alphas")) c.alphas = j["alphas"].get<std::vector<double>>();
        if (j.contains("alpha_trace")) c.alpha_trace = j["alpha_trace"].get<bool>();
        if (j.contains("rank_strategies")) {
            c.rank_strategies.clear();
            for (const auto& s : j["rank_strategies"]) c.rank_strategies.push_back(parse_strategy(s.get<std::string>()));
        }
        if (j.contains("n_sims")) c.n_sims = j["n_sims"].get<std::size_t>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("folds")) c.folds = j["folds"].get<std::size_t>();
        if (j.contains("out")) c.out = j["out"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json rank = nlohmann::json::array();
    for (Strategy s : c.rank_strategies) rank.push_back(strategy_name(s));
    nlohmann::json grid{{"nodes", c.nodes}, {"edges", c.edges}};
    if (c.grid_hash) grid["hash"] = *c.grid_hash;
    return {{"artifact_version", kArtifactVersion},
            {"grid", grid},
            {"pearl",
             {{"physics", physics_name(c.physics)},
              {"element", c.element},
              {"attack_type", attack_type_name(c.attack_type)},
              {"regime", c.regime},
              {"group", c.group},
              {"target_count", c.target_count ? nlohmann::json(*c.target_count) : nlohmann::json(nullptr)},
              {"load_profile", c.load_profile}}},
            {"strategy", strategy_name(c.strategy)},
            {"limit_methods", c.limit_methods},
            {"alphas", c.alphas},
            {"alpha_trace", c.alpha_trace},
            {"rank_strategies", rank},
            {"n_sims", c.n_sims},
            {"seed", c.seed},
            {"folds", c.folds},
            {"out", c.out}};
}

inline RunConfig load_config(const std::filesystem::path& p) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(p));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("cannot parse " + p.string() + ": " + e.what());
    }
    return config_from_json(j);
}

struct LoadedGrid {
    PowerGrid grid;
    std::string hash;
};

inline LoadedGrid load_config_grid(const RunConfig& c) {
    if (c.nodes.empty() || c.edges.empty()) throw ValidationError("grid node and edge files are required");
    const std::string hash = grid_hash(c.nodes, c.edges);
    if (c.grid_hash && *c.grid_hash != hash)
        throw ValidationError("grid files do not match the hash recorded in the config");
    return {load_grid(c.nodes, c.edges), hash};
}

// Limit sets in configuration order; "pl" expands to one set per alpha.
inline std::vector<LimitSet> build_limit_sets(const RunConfig& c, const PowerGrid& grid, const FlowState& initial) {
    std::vector<LimitSet> sets;
    auto need_real = [&] {
        if (!grid.has_real_limits()) throw ValidationError("grid has no real line limits");
        return real_limits(grid);
    };
    for (const auto& m : c.limit_methods) {
        if (m == "real") {
            sets.push_back(need_real());
        } else if (m == "pf" || m == "volt_pf") {
            const LimitSet real = need_real();
            sets.push_back(fit_linear_model(grid, initial, real, m == "volt_pf", c.folds, c.seed).predicted);
        } else if (m == "topological") {
            sets.push_back(topological_limits(grid));
        } else if (m == "pl") {
            for (double a : c.alphas) sets.push_back(proportional_limits(grid, initial, a));
        }
    }
    if (sets.empty()) throw ValidationError("no limit methods selected");
    for (std::size_t i = 0; i < sets.size(); ++i)
        for (std::size_t k = 0; k < i; ++k)
            if (sets[i].method == sets[k].method)
                throw ValidationError("limit method " + sets[i].method.name() + " listed twice");
    return sets;
}

inline AttackPlan plan_of(const RunConfig& c) {
    AttackPlan p;
    p.strategy = c.strategy;
    p.attack_type = c.attack_type;
    p.regime = RemovalRegime::parse(c.regime, c.group);
    p.target_count = c.target_count;
    return p;
}

// Runs every analysis the config asks for and writes the results directory.
inline BatchResults run_simulation(RunConfig c, std::ostream& log, std::size_t threads = 0) {
    validate_config(c);
    LoadedGrid lg = load_config_grid(c);
    const PowerGrid& grid = lg.grid;
    c.grid_hash = lg.hash;
    c.nodes = std::filesystem::absolute(c.nodes).lexically_normal().string();
    c.edges = std::filesystem::absolute(c.edges).lexically_normal().string();

    const FlowState initial = initial_flows(grid);
    const std::vector<LimitSet> sets = build_limit_sets(c, grid, initial);
    std::optional<LimitSet> real;
    if (grid.has_real_limits()) real = real_limits(grid);

    BatchConfig bc;
    bc.plan = plan_of(c);
    bc.n_sims = c.n_sims;
    bc.seed = c.seed;
    bc.physics = c.physics;
    bc.threads = threads;

    BatchResults r;
    r.store = run_batch(grid, sets, bc, real ? &*real : nullptr, {},
                        [&log](std::size_t done, std::size_t total, const std::string& method, std::size_t sim) {
                            log << "[" << done << "/" << total << "] " << method << " sim " << sim << "\n";
                        });
    if (!c.rank_strategies.empty()) {
        log << "ranking " << c.rank_strategies.size() << " strategies\n";
        StrategyRanking sr = strategy_rank_rmse(grid, sets, c.rank_strategies, real ? &*real : nullptr, c.physics,
                                                threads);
        r.ranking = RankRun{c.rank_strategies, std::move(sr.traces)};
    }
    if (c.alpha_trace) {
        log << "tracing " << c.alphas.size() << " alpha candidates\n";
        TrueAlphaEstimate est = estimate_true_alpha(grid, c.alphas, bc);
        AlphaRun ar;
        ar.candidates = c.alphas;
        for (auto& t : est.traces) ar.histories.push_back(std::move(t.sims));
        r.alpha = std::move(ar);
    }

    const std::filesystem::path dir(c.out);
    write_results(dir, config_to_json(c), r);
    write_report(dir, render_report(aggregate(r)));
    return r;
}

// Fits the regression models, scores them and the PL grid against the real
// limits, and writes accuracy and limit files into `out`.
inline void run_fit_limits(const RunConfig& c, std::ostream& out) {
    validate_config(c);
    const LoadedGrid lg = load_config_grid(c);
    const PowerGrid& grid = lg.grid;
    if (!grid.has_real_limits()) throw ValidationError("grid has no real line limits");
    const FlowState initial = initial_flows(grid);
    const LimitSet real = real_limits(grid);

    const std::filesystem::path dir(c.out);
    std::filesystem::create_directories(dir / "limits");
    std::ostringstream acc;
    acc << "method,r_squared,rmse_mw,mape\n";
    nlohmann::json models = nlohmann::json::object();
    auto emit = [&](const LimitSet& s) {
        const AccuracyReport rep = score_limits(s, real);
        acc << s.method.name() << ',' << csv::format_double(rep.r_squared) << ',' << csv::format_double(rep.rmse)
            << ',' << csv::format_double(rep.mape) << '\n';
        out << s.method.name() << ": R2 " << csv::format_double(rep.r_squared) << ", RMSE "
            << csv::format_double(rep.rmse) << " MW, MAPE " << csv::format_double(rep.mape) << "\n";
        std::ostringstream ls;
        write_limit_set(ls, grid, s);
        write_text(dir / "limits" / (s.method.name() + ".csv"), ls.str());
    };
    for (bool volt : {true, false}) {
        const LinearFit fit = fit_linear_model(grid, initial, real, volt, c.folds, c.seed);
        const LinearLimitModel m = fit.mean_model();
        nlohmann::json jm{{"bias", m.bias}, {"flow", m.flow}, {"warnings", fit.warnings}};
        if (m.v275) jm["v275"] = *m.v275;
        if (m.v400) jm["v400"] = *m.v400;
        models[fit.predicted.method.name()] = jm;
        for (const auto& w : fit.warnings) out << "warning: " << w << "\n";
        emit(fit.predicted);
    }
    for (double a : c.alphas) emit(proportional_limits(grid, initial, a));

    const AlphaDistribution ad = alpha_distribution(real, initial);
    std::ostringstream dist;
    dist << "line_id,alpha\n";
    for (LineIndex l = 0; l < grid.line_count(); ++l)
        dist << grid.line(l).id << ',' << (ad.alpha[l] ? csv::format_double(*ad.alpha[l]) : "") << '\n';
    out << "realised alpha: mean " << csv::format_double(ad.mean) << ", median " << csv::format_double(ad.median)
        << ", zero-flow lines " << ad.zero_flow_lines << "\n";

    write_text(dir / "accuracy.csv", acc.str());
    write_text(dir / "models.json", models.dump(2) + "\n");
    write_text(dir / "alpha_distribution.csv", dist.str());
}

inline void run_report(const std::filesystem::path& dir, std::ostream& out) {
    const BatchResults r = load_results(dir);
    const ReportFiles f = render_report(aggregate(r));
    write_report(dir, f);
    out << f.summary;
}

struct SynthOptions {
    SynthSpec spec;
    std::string planting = "uniform";
    double alpha = 5.0;
    double alpha_mean = 5.12;
    double alpha_sd = 2.5;
    std::string nodes_out;
    std::string edges_out;
};

inline void run_synth(const SynthOptions& o, std::ostream& out) {
    SynthSpec spec = o.spec;
    if (o.planting == "uniform") {
        spec.planting = Planting::uniform(o.alpha);
    } else if (o.planting == "lognormal") {
        spec.planting = Planting::lognormal(o.alpha_mean, o.alpha_sd);
    } else if (o.planting == "none") {
        spec.planting = Planting::none();
    } else {
        throw ValidationError("unknown planting '" + o.planting + "'");
    }
    if (o.nodes_out.empty() || o.edges_out.empty()) throw ValidationError("output node and edge files are required");
    const SyntheticGrid sg = synth_grid(spec);
    save_grid(sg.grid, o.nodes_out, o.edges_out);
    out << "wrote " << sg.grid.bus_count() << " buses, " << sg.grid.line_count() << " lines\n";
}

namespace detail {

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        body();
        return kExitOk;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const BatchCellError& e) {
        err << (e.numerical() ? "numerical error: " : "error: ") << e.what() << "\n";
        return e.numerical() ? kExitNumerical : kExitFailure;
    } catch (const SimulationAborted& e) {
        err << (e.numerical() ? "numerical error: " : "error: ") << e.what() << "\n";
        return e.numerical() ? kExitNumerical : kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace detail

// Entry point shared by the binary and the tests.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cascading-failure experiments on DC power grids", "gridcascade"};
    app.require_subcommand(1);

    struct Flags {
        std::string config, nodes, edges, out, physics, strategy, attack_type, regime, methods, strategies;
        std::optional<std::uint64_t> seed;
        std::optional<std::size_t> sims, folds, group, targets;
        std::vector<double> alphas;
        bool alpha_trace = false;
        std::size_t threads = 0;
    } fl;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", fl.config, "JSON run configuration");
        sub->add_option("--grid-nodes", fl.nodes, "node CSV");
        sub->add_option("--grid-edges", fl.edges, "edge CSV");
        sub->add_option("--out", fl.out, "output directory");
        sub->add_option("--seed", fl.seed, "master seed");
        sub->add_option("--alphas,--alpha", fl.alphas, "comma-separated PL tolerances")->delimiter(',');
        sub->add_option("--folds", fl.folds, "cross-validation folds");
    };

    CLI::App* fit = app.add_subcommand("fit-limits", "fit and score line-limit models");
    common(fit);

    CLI::App* sim = app.add_subcommand("simulate", "run a Monte Carlo attack batch");
    common(sim);
    sim->add_option("--sims", fl.sims, "simulations per limit method");
    sim->add_option("--physics", fl.physics, "dc or topological");
    sim->add_option("--strategy", fl.strategy, "attack strategy of the batch");
    sim->add_option("--attack-type", fl.attack_type, "fixed, flexible or adaptive");
    sim->add_option("--regime", fl.regime, "sequential, simultaneous or hybrid");
    sim->add_option("--group", fl.group, "group size for simultaneous and hybrid regimes");
    sim->add_option("--targets", fl.targets, "number of targets (all nodes by default)");
    sim->add_option("--methods", fl.methods, "comma-separated: real,pf,volt_pf,topological,pl");
    sim->add_option("--strategies", fl.strategies, "comma-separated strategies for the ranking analysis");
    sim->add_flag("--alpha-trace", fl.alpha_trace, "estimate the true alpha over the alpha grid");
    sim->add_option("--threads", fl.threads, "worker threads (0 = hardware)");

    std::string report_dir;
    CLI::App* rep = app.add_subcommand("report", "aggregate a results directory");
    rep->add_option("dir", report_dir, "results directory")->required();

    SynthOptions so;
    CLI::App* syn = app.add_subcommand("synth", "generate a synthetic grid");
    syn->add_option("--nodes", so.spec.nodes, "bus count");
    syn->add_option("--lines", so.spec.lines, "line count");
    syn->add_option("--seed", so.spec.seed, "generator seed");
    syn->add_option("--planting", so.planting, "uniform, lognormal or none");
    syn->add_option("--alpha", so.alpha, "uniform planted alpha");
    syn->add_option("--alpha-mean", so.alpha_mean, "log-normal mean");
    syn->add_option("--alpha-sd", so.alpha_sd, "log-normal standard deviation");
    syn->add_option("--grid-nodes", so.nodes_out, "node CSV to write")->required();
    syn->add_option("--grid-edges", so.edges_out, "edge CSV to write")->required();

    std::vector<const char*> argv{"gridcascade"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    auto split = [](const std::string& s) {
        std::vector<std::string> v;
        std::stringstream ss(s);
        for (std::string t; std::getline(ss, t, ',');)
            if (!t.empty()) v.push_back(t);
        return v;
    };
    auto resolve = [&]() {
        RunConfig c = fl.config.empty() ? RunConfig{} : load_config(fl.config);
        if (!fl.nodes.empty()) c.nodes = fl.nodes;
        if (!fl.edges.empty()) c.edges = fl.edges;
        if (!fl.nodes.empty() || !fl.edges.empty()) c.grid_hash.reset();
        if (!fl.out.empty()) c.out = fl.out;
        if (fl.seed) c.seed = *fl.seed;
        if (!fl.alphas.empty()) c.alphas = fl.alphas;
        if (fl.folds) c.folds = *fl.folds;
        if (fl.sims) c.n_sims = *fl.sims;
        if (!fl.physics.empty()) c.physics = parse_physics(fl.physics);
        if (!fl.strategy.empty()) c.strategy = parse_strategy(fl.strategy);
        if (!fl.attack_type.empty()) c.attack_type = parse_attack_type(fl.attack_type);
        if (!fl.regime.empty()) c.regime = fl.regime;
        if (fl.group) c.group = *fl.group;
        if (fl.targets) c.target_count = *fl.targets;
        if (!fl.methods.empty()) c.limit_methods = split(fl.methods);
        if (!fl.strategies.empty()) {
            c.rank_strategies.clear();
            for (const auto& s : split(fl.strategies)) c.rank_strategies.push_back(parse_strategy(s));
        }
        if (fl.alpha_trace) c.alpha_trace = true;
        return c;
    };

    if (*fit) return detail::guarded(err, [&] { run_fit_limits(resolve(), out); });
    if (*sim) return detail::guarded(err, [&] { run_simulation(resolve(), err, fl.threads); });
    if (*rep) return detail::guarded(err, [&] { run_report(report_dir, out); });
    return detail::guarded(err, [&] { run_synth(so, out); });
}

inline int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace gridcascade

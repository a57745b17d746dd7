#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridcascade/csv.hpp"
#include "gridcascade/dc_flow.hpp"
#include "gridcascade/errors.hpp"
#include "gridcascade/grid.hpp"
#include "gridcascade/rng.hpp"

namespace gridcascade {

inline constexpr double kLimitFloorMw = 1.0;
// Initial flows at or below this magnitude count as zero for loading purposes.
inline constexpr double kZeroFlowMw = 1e-9;
inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

inline const std::vector<double> kDefaultAlphaGrid = {1.05, 1.1, 1.2, 1.3, 1.5, 2, 3, 5, 7, 10, 15, 20, 50};

struct LimitMethod {
    enum class Kind { Real, Proportional, VoltPF, PF, Topological };

    Kind kind = Kind::Real;
    double alpha = 0.0;  // Proportional only

    static LimitMethod real() { return {Kind::Real, 0.0}; }
    static LimitMethod proportional(double a) { return {Kind::Proportional, a}; }
    static LimitMethod volt_pf() { return {Kind::VoltPF, 0.0}; }
    static LimitMethod pf() { return {Kind::PF, 0.0}; }
    static LimitMethod topological() { return {Kind::Topological, 0.0}; }

    [[nodiscard]] std::string name() const {
        switch (kind) {
            case Kind::Real: return "real";
            case Kind::VoltPF: return "volt_pf";
            case Kind::PF: return "pf";
            case Kind::Topological: return "topological";
            case Kind::Proportional: {
                char buf[48];
                std::snprintf(buf, sizeof buf, "pl_%.15g", alpha);
                return buf;
            }
        }
        return {};
    }

    static LimitMethod parse(const std::string& s) {
        if (s == "real") return real();
        if (s == "volt_pf") return volt_pf();
        if (s == "pf") return pf();
        if (s == "topological") return topological();
        if (s.starts_with("pl_")) {
            try {
                std::size_t used = 0;
                const double a = std::stod(s.substr(3), &used);
                if (used == s.size() - 3 && a > 0.0) return proportional(a);
            } catch (const std::exception&) {
            }
        }
        throw ArgumentError("unknown limit method '" + s + "'");
    }

    friend bool operator==(const LimitMethod&, const LimitMethod&) = default;
};

struct LimitSet {
    LimitMethod method;
    std::vector<double> limits;  // MW per line; kUnbounded never trips

    [[nodiscard]] bool unbounded() const {
        return std::any_of(limits.begin(), limits.end(), [](double v) { return std::isinf(v); });
    }
};

inline LimitSet real_limits(const PowerGrid& grid) {
    LimitSet s{LimitMethod::real(), {}};
    s.limits.reserve(grid.line_count());
    for (const Line& l : grid.lines()) {
        if (!l.real_limit) throw ValidationError("line " + l.id + " has no recorded limit");
        s.limits.push_back(*l.real_limit);
    }
    return s;
}

// limit = alpha * |initial flow|; zero-flow lines get max(alpha, 1) * 1 MW.
inline LimitSet proportional_limits(const PowerGrid& grid, const FlowState& initial, double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ArgumentError("alpha must be positive and finite");
    if (initial.flow.size() != grid.line_count()) throw ArgumentError("flow state does not match grid");
    LimitSet s{LimitMethod::proportional(alpha), std::vector<double>(grid.line_count())};
    for (LineIndex l = 0; l < grid.line_count(); ++l) {
        const double f = std::abs(initial.flow[l]);
        s.limits[l] = f > kZeroFlowMw ? alpha * f : std::max(alpha * kLimitFloorMw, kLimitFloorMw);
    }
    return s;
}

inline LimitSet topological_limits(const PowerGrid& grid) {
    return {LimitMethod::topological(), std::vector<double>(grid.line_count(), kUnbounded)};
}

// Linear line-limit model evaluated in thousands of MW:
//   y = bias + flow * |f|/1000 + v275 * [275 kV] + v400 * [400 kV]
// Voltage terms are absent for the flow-only model or when dropped as collinear.
struct LinearLimitModel {
    double bias = 0.0;
    double flow = 0.0;
    std::optional<double> v275;
    std::optional<double> v400;

    [[nodiscard]] double predict_thousands(double abs_flow_mw, VoltageClass v) const {
        double y = bias + flow * abs_flow_mw / 1000.0;
        if (v == VoltageClass::V275 && v275) y += *v275;
        if (v == VoltageClass::V400 && v400) y += *v400;
        return y;
    }

    [[nodiscard]] double predict_mw(double abs_flow_mw, VoltageClass v) const {
        return std::max(1000.0 * predict_thousands(abs_flow_mw, v), kLimitFloorMw);
    }
};

struct LinearFit {
    std::vector<LinearLimitModel> folds;
    std::vector<std::size_t> fold_of_line;
    LimitSet predicted;  // out-of-fold predictions
    std::vector<std::string> warnings;

    // Coefficients averaged over folds; voltage terms averaged over the folds
    // that kept them.
    [[nodiscard]] LinearLimitModel mean_model() const {
        LinearLimitModel m;
        if (folds.empty()) return m;
        double s275 = 0.0, s400 = 0.0;
        int n275 = 0, n400 = 0;
        for (const auto& f : folds) {
            m.bias += f.bias;
            m.flow += f.flow;
            if (f.v275) {
                s275 += *f.v275;
                ++n275;
            }
            if (f.v400) {
                s400 += *f.v400;
                ++n400;
            }
        }
        m.bias /= static_cast<double>(folds.size());
        m.flow /= static_cast<double>(folds.size());
        if (n275) m.v275 = s275 / n275;
        if (n400) m.v400 = s400 / n400;
        return m;
    }
};

namespace detail {

// Ordinary least squares via the normal equations. Non-intercept columns that
// are constant over the rows are collinear with the intercept; they are dropped
// (coefficient absent) and reported.
struct OlsResult {
    std::vector<std::optional<double>> coef;
    double condition = 0.0;
};

inline OlsResult ordinary_least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                        std::vector<std::string>& warnings, const std::vector<std::string>& names) {
    const Eigen::Index p = x.cols();
    std::vector<Eigen::Index> keep{0};
    for (Eigen::Index c = 1; c < p; ++c) {
        const double lo = x.col(c).minCoeff();
        const double hi = x.col(c).maxCoeff();
        if (hi - lo > 0.0) {
            keep.push_back(c);
        } else {
            warnings.push_back("dropped collinear column " + names[static_cast<std::size_t>(c)]);
        }
    }
    Eigen::MatrixXd xk(x.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) xk.col(static_cast<Eigen::Index>(j)) = x.col(keep[j]);

    const Eigen::MatrixXd gram = xk.transpose() * xk;
    const Eigen::VectorXd rhs = xk.transpose() * y;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    OlsResult r;
    r.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (r.condition > 1e10)
        warnings.push_back("ill-conditioned normal equations (condition " + csv::format_double(r.condition) + ")");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success) throw NumericalError("normal equations factorisation failed");
    const Eigen::VectorXd beta = ldlt.solve(rhs);
    if (!beta.allFinite()) throw NumericalError("normal equations solve produced non-finite coefficients");

    r.coef.assign(static_cast<std::size_t>(p), std::nullopt);
    for (std::size_t j = 0; j < keep.size(); ++j)
        r.coef[static_cast<std::size_t>(keep[j])] = beta[static_cast<Eigen::Index>(j)];
    return r;
}

}  // namespace detail

// k-fold cross-validated OLS fit of the flow (and optionally voltage) model.
// Every line's prediction comes from the fold in which it was held out.
inline LinearFit fit_linear_model(const PowerGrid& grid, const FlowState& initial, const LimitSet& real,
                                  bool use_voltage, std::size_t folds = 10, std::uint64_t seed = 0) {
    const std::size_t n = grid.line_count();
    if (real.limits.size() != n) throw ArgumentError("real limit set does not match grid");
    for (double v : real.limits)
        if (!(v > 0.0) || !std::isfinite(v)) throw ArgumentError("real limits must be positive and finite");
    if (folds < 2) throw ArgumentError("need at least 2 folds");
    if (folds > n) throw ArgumentError("more folds than lines");

    const std::vector<std::string> names = use_voltage ? std::vector<std::string>{"intercept", "flow", "v275", "v400"}
                                                       : std::vector<std::string>{"intercept", "flow"};
    const Eigen::Index p = static_cast<Eigen::Index>(names.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), p);
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (LineIndex l = 0; l < n; ++l) {
        const auto r = static_cast<Eigen::Index>(l);
        x(r, 0) = 1.0;
        x(r, 1) = std::abs(initial.flow[l]) / 1000.0;
        if (use_voltage) {
            x(r, 2) = grid.line(l).voltage_class == VoltageClass::V275 ? 1.0 : 0.0;
            x(r, 3) = grid.line(l).voltage_class == VoltageClass::V400 ? 1.0 : 0.0;
        }
        y[r] = real.limits[l] / 1000.0;
    }

    LinearFit fit;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng = make_rng(seed, 0xF01D);
    shuffle(std::span<std::size_t>(perm), rng);
    fit.fold_of_line.assign(n, 0);
    for (std::size_t pos = 0; pos < n; ++pos) fit.fold_of_line[perm[pos]] = pos % folds;

    fit.predicted.method = use_voltage ? LimitMethod::volt_pf() : LimitMethod::pf();
    fit.predicted.limits.assign(n, 0.0);
    for (std::size_t k = 0; k < folds; ++k) {
        std::vector<Eigen::Index> train;
        for (LineIndex l = 0; l < n; ++l)
            if (fit.fold_of_line[l] != k) train.push_back(static_cast<Eigen::Index>(l));
        if (train.size() < 2) throw ArgumentError("training fold too small");
        Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), p);
        Eigen::VectorXd yt(static_cast<Eigen::Index>(train.size()));
        for (std::size_t i = 0; i < train.size(); ++i) {
            xt.row(static_cast<Eigen::Index>(i)) = x.row(train[i]);
            yt[static_cast<Eigen::Index>(i)] = y[train[i]];
        }
        std::vector<std::string> fold_warnings;
        const auto ols = detail::ordinary_least_squares(xt, yt, fold_warnings, names);
        for (auto& w : fold_warnings) fit.warnings.push_back("fold " + std::to_string(k) + ": " + w);

        LinearLimitModel m;
        m.bias = ols.coef[0].value_or(0.0);
        m.flow = ols.coef[1].value_or(0.0);
        if (use_voltage) {
            m.v275 = ols.coef[2];
            m.v400 = ols.coef[3];
        }
        fit.folds.push_back(m);
        for (LineIndex l = 0; l < n; ++l)
            if (fit.fold_of_line[l] == k)
                fit.predicted.limits[l] = m.predict_mw(std::abs(initial.flow[l]), grid.line(l).voltage_class);
    }
    return fit;
}

struct AccuracyReport {
    double r_squared = 0.0;
    double rmse = 0.0;  // MW
    double mape = 0.0;  // fraction
};

// R^2 about the mean of the real limits; when all real limits are equal the
// total sum of squares is zero and R^2 is 1 for an exact match, 0 otherwise.
inline AccuracyReport score_limits(const LimitSet& predicted, const LimitSet& real) {
    const std::size_t n = real.limits.size();
    if (predicted.limits.size() != n) throw ArgumentError("limit sets cover different lines");
    if (n == 0) throw ArgumentError("cannot score an empty limit set");
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = real.limits[i];
        if (!(r > 0.0) || !std::isfinite(r)) throw ArgumentError("real limits must be positive and finite");
        if (!std::isfinite(predicted.limits[i])) throw ArgumentError("cannot score unbounded predicted limits");
        mean += r;
    }
    mean /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0, ape = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = real.limits[i];
        const double e = r - predicted.limits[i];
        ss_res += e * e;
        ss_tot += (r - mean) * (r - mean);
        ape += std::abs(e) / r;
    }
    AccuracyReport rep;
    rep.rmse = std::sqrt(ss_res / static_cast<double>(n));
    rep.mape = ape / static_cast<double>(n);
    rep.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
    return rep;
}

inline void to_json(nlohmann::json& j, const AccuracyReport& r) {
    j = nlohmann::json{{"r_squared", r.r_squared}, {"rmse", r.rmse}, {"mape", r.mape}};
}

inline void from_json(const nlohmann::json& j, AccuracyReport& r) {
    j.at("r_squared").get_to(r.r_squared);
    j.at("rmse").get_to(r.rmse);
    j.at("mape").get_to(r.mape);
}

struct AlphaSweepPoint {
    double alpha = 0.0;
    AccuracyReport report;
};

inline std::vector<AlphaSweepPoint> alpha_sweep(const PowerGrid& grid, const FlowState& initial, const LimitSet& real,
                                                const std::vector<double>& alphas) {
    std::vector<AlphaSweepPoint> out;
    out.reserve(alphas.size());
    for (double a : alphas) out.push_back({a, score_limits(proportional_limits(grid, initial, a), real)});
    return out;
}

struct Histogram {
    std::vector<double> edges;  // bins + 1 ascending edges
    std::vector<std::size_t> counts;
};

struct AlphaDistribution {
    std::vector<std::optional<double>> alpha;  // per line; empty for zero-flow lines
    std::size_t zero_flow_lines = 0;
    double mean = 0.0;
    double median = 0.0;
    Histogram histogram;
};

// Realised tolerance of each line: limit / |initial flow|.
inline AlphaDistribution alpha_distribution(const LimitSet& real, const FlowState& initial, std::size_t bins = 20) {
    if (real.limits.size() != initial.flow.size()) throw ArgumentError("limit set does not match flow state");
    AlphaDistribution d;
    d.alpha.resize(real.limits.size());
    std::vector<double> values;
    for (std::size_t l = 0; l < real.limits.size(); ++l) {
        const double f = std::abs(initial.flow[l]);
        if (f <= kZeroFlowMw) {
            ++d.zero_flow_lines;
            continue;
        }
        d.alpha[l] = real.limits[l] / f;
        values.push_back(*d.alpha[l]);
    }
    if (values.empty()) return d;
    d.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    d.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

    if (bins == 0) bins = 1;
    const double lo = sorted.front();
    const double hi = sorted.back();
    const double width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0;
    d.histogram.counts.assign(bins, 0);
    for (std::size_t b = 0; b <= bins; ++b) d.histogram.edges.push_back(lo + width * static_cast<double>(b));
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - lo) / width);
        d.histogram.counts[std::min(b, bins - 1)]++;
    }
    return d;
}

// CSV: line_id,limit_mw,method
inline void write_limit_set(std::ostream& out, const PowerGrid& grid, const LimitSet& s) {
    out << "line_id,limit_mw,method\n";
    const std::string method = s.method.name();
    for (LineIndex l = 0; l < grid.line_count(); ++l)
        out << grid.line(l).id << ',' << csv::format_double(s.limits.at(l)) << ',' << method << '\n';
}

inline LimitSet read_limit_set(std::istream& in, const std::string& name, const PowerGrid& grid) {
    const csv::Table t = csv::parse(in, name);
    const auto c_id = t.column("line_id");
    const auto c_lim = t.column("limit_mw");
    const auto c_m = t.column("method");
    if (c_id < 0 || c_lim < 0 || c_m < 0) throw ParseError(name, 1, "limit header must be line_id,limit_mw,method");
    LimitSet s;
    s.limits.assign(grid.line_count(), std::numeric_limits<double>::quiet_NaN());
    std::vector<char> seen(grid.line_count(), 0);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        auto l = grid.find_line(row[c_id]);
        if (!l) throw ValidationError("unknown line " + row[c_id] + " in " + name);
        if (seen[*l]) throw ValidationError("duplicate line " + row[c_id] + " in " + name);
        seen[*l] = 1;
        s.limits[*l] = csv::parse_double(row[c_lim], t, r, "limit_mw");
        const auto m = LimitMethod::parse(row[c_m]);
        if (r == 0) s.method = m;
        else if (!(m == s.method)) throw ValidationError("mixed methods in " + name);
    }
    for (LineIndex l = 0; l < grid.line_count(); ++l)
        if (!seen[l]) throw ValidationError("line " + grid.line(l).id + " missing from " + name);
    return s;
}

}  // namespace gridcascade

#include "smartmon/planning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "smartmon/diagnostics.hpp"
#include "smartmon/error.hpp"
#include "smartmon/mvn.hpp"

namespace smartmon {

nlohmann::json AlternativeSpec::to_json() const {
    auto uv = nlohmann::json::array();
    for (auto& v : unit_var) uv.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    return {{"schema_version", 1}, {"values", values}, {"control", control}, {"delta", delta}, {"unit_var", uv}};
}

AlternativeSpec alternative_from_json(const nlohmann::json& j) {
    Diagnostics diag;
    JsonReader r(j, diag);
    r.check_schema_version();
    AlternativeSpec a;
    a.values = r.numbers("values");
    a.control = r.number("control", 0.0);
    a.delta = r.number("delta", 0.0);
    auto uv = r.child("unit_var");
    if (!uv.is_array()) r.error("unit_var", "expected one array of per-patient variances per analysis");
    for (size_t s = 0; s < uv.size(); ++s) {
        std::vector<double> v;
        auto row = uv.at(s);
        for (size_t l = 0; l < row.size(); ++l) {
            const auto& x = row.at(l).raw();
            if (!x.is_number() || !(x.get<double>() > 0.0))
                row.at(l).error("", "variance must be a positive number");
            else
                v.push_back(x.get<double>());
        }
        if (v.size() != a.values.size()) uv.at(s).error("", "one variance per regime required");
        a.unit_var.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), v.size()));
    }
    bool any = false;
    for (double v : a.values) any = any || v > a.control + a.delta;
    if (!any && !a.values.empty()) r.error("values", "no regime exceeds control + delta under the alternative");
    diag.throw_if_any("alternative");
    return a;
}

Eigen::VectorXd mu_alternative(int n, const AlternativeSpec& alt) {
    const int L = alt.num_regimes(), S = alt.num_analyses();
    Eigen::VectorXd mu(L * S);
    for (int s = 0; s < S; ++s)
        for (int l = 0; l < L; ++l)
            mu(s * L + l) = (alt.values[l] - alt.control - alt.delta) * std::sqrt(n / alt.unit_var[s](l));
    return mu;
}

nlohmann::json PowerResult::to_json() const {
    return {{"schema_version", 1}, {"n", n}, {"power", power}, {"method", method}, {"by_analysis", by_analysis},
            {"error", error}};
}

nlohmann::json SearchResult::to_json() const {
    auto tr = nlohmann::json::array();
    for (auto& [n, p] : trace) tr.push_back({{"n", n}, {"power", p}});
    return {{"schema_version", 1}, {"n", n}, {"power", power}, {"trace", tr}};
}

namespace {

void check_shapes(const AlternativeSpec& alt, const BoundarySpec& b, const NullCovariance& null) {
    if (alt.num_regimes() != null.num_regimes || alt.num_analyses() != null.num_analyses)
        throw ValidationError("alternative and null covariance disagree in shape");
    if (static_cast<int>(b.critical.size()) != null.num_analyses)
        throw ValidationError("boundaries and null covariance disagree in the number of analyses");
}

}  // namespace

PowerResult power_integral(int n, const AlternativeSpec& alt, const BoundarySpec& b, const NullCovariance& null,
                           double tol, std::uint64_t seed) {
    check_shapes(alt, b, null);
    if (b.chi_square) throw ValidationError("chi-square boundaries need the draws power backend");
    const int L = null.num_regimes, S = null.num_analyses;
    Eigen::VectorXd mu = mu_alternative(n, alt);
    PowerResult r;
    r.method = "integral";
    r.n = n;
    double prev = 1.0;  // P(no crossing before s)
    for (int s = 1; s <= S; ++s) {
        const int D = s * L;
        Eigen::VectorXd up(D);
        for (int v = 0; v < s; ++v) up.segment(v * L, L).setConstant(b.critical[v]);
        MvnResult m = mvn_rectangle(mu.head(D), null.sigma.topLeftCorner(D, D), up, tol, seed);
        r.by_analysis.push_back(std::max(0.0, prev - m.value));
        r.error = std::max(r.error, m.error);
        prev = std::min(prev, m.value);
    }
    r.power = 1.0 - prev;
    return r;
}

DrawPower::DrawPower(AlternativeSpec alt, BoundarySpec b, const NullCovariance& null, int draws, std::uint64_t seed)
    : alt_(std::move(alt)), b_(std::move(b)), L_(null.num_regimes), S_(null.num_analyses) {
    check_shapes(alt_, b_, null);
    if (draws < 1) throw ValidationError("need at least one draw");
    noise_ = draw_mvn(Eigen::VectorXd::Zero(L_ * S_), null.sigma, draws, seed);
    if (b_.chi_square)
        for (int s = 0; s < S_; ++s) blocks_.push_back(null.block(s, s));
}

PowerResult DrawPower::operator()(int n) const {
    const int draws = static_cast<int>(noise_.rows());
    const Eigen::VectorXd mu = mu_alternative(n, alt_);
    PowerResult r;
    r.method = "draws";
    r.n = n;
    r.by_analysis.assign(S_, 0.0);
    Eigen::VectorXd z(L_);
    for (int i = 0; i < draws; ++i) {
        for (int s = 0; s < S_; ++s) {
            z = noise_.row(i).segment(s * L_, L_).transpose() + mu.segment(s * L_, L_);
            bool reject = b_.chi_square
                              ? chi_square_statistic(std::vector<double>(z.data(), z.data() + L_), blocks_[s]).t >
                                    b_.critical[s]
                              : z.maxCoeff() > b_.critical[s];
            if (reject) {
                r.by_analysis[s] += 1.0 / draws;
                break;
            }
        }
    }
    for (double p : r.by_analysis) r.power += p;
    r.error = 3.0 * std::sqrt(r.power * (1.0 - r.power) / draws);
    return r;
}

PowerResult power_draws(int n, const AlternativeSpec& alt, const BoundarySpec& b, const NullCovariance& null,
                        int draws, std::uint64_t seed) {
    return DrawPower(alt, b, null, draws, seed)(n);
}

SearchResult sample_size_search(double target, const std::function<double(int)>& power_at, const SearchOptions& o) {
    if (!(target > 0.0 && target < 1.0)) throw ValidationError("target power must lie in (0, 1)");
    if (o.n0 < 1 || o.step < 1 || !(o.discount > 0.0 && o.discount < 1.0))
        throw ValidationError("search needs n0 >= 1, step >= 1 and a discount in (0, 1)");
    SearchResult res;
    int n = o.n0;
    double step = o.step;
    double p = power_at(n);
    res.trace.push_back({n, p});
    if (p >= target - o.tolerance) {
        res.n = n;
        res.power = p;
        return res;
    }
    int drops = 0;
    double last = p;
    while (true) {
        const int inc = std::max(1, static_cast<int>(std::lround(step)));
        n += inc;
        if (n > o.max_n) throw NumericalError("sample size search exceeded " + std::to_string(o.max_n));
        p = power_at(n);
        res.trace.push_back({n, p});
        drops = p < last ? drops + 1 : 0;
        if (drops >= 3)
            throw NumericalError("power is not monotone in N (three consecutive decreases near N = " +
                                 std::to_string(n) + "); use the simulated backend with more replicates");
        last = p;
        if (p >= target - o.tolerance) {
            if (inc <= 1) {
                res.n = n;
                res.power = p;
                return res;
            }
            n -= inc;
            step *= o.discount;
            last = -1.0;
        }
    }
}

PilotResult pilot_alternative(const ExperimentConfig& config, double control, const std::string& arm_name) {
    ExperimentConfig cfg = config;
    for (auto& a : cfg.arms) {
        a.boundaries.reset();
        a.chi_null.reset();
    }
    return pilot_from_report(run_experiment(cfg), arm_name, control, cfg.delta);
}

PilotResult pilot_from_report(const MonteCarloReport& report, const std::string& arm_name, double control,
                              double delta) {
    PilotResult out;
    out.report = report;
    const ArmReport& arm = out.report.arm(arm_name);
    const int L = static_cast<int>(out.report.labels.size());
    const int S = static_cast<int>(report.analysis_days.size());
    out.alt.values = out.report.true_values;
    out.alt.control = control;
    out.alt.delta = delta;
    Eigen::VectorXd mean_var = arm.variances.colwise().mean().transpose();
    std::vector<Eigen::VectorXd> vars;
    for (int s = 0; s < S; ++s) {
        Eigen::VectorXd v = mean_var.segment(s * L, L);
        out.alt.unit_var.push_back(v * report.n);
        vars.push_back(v);
    }
    // Within-analysis correlation: empirical correlation of the replicate contrasts.
    std::vector<Eigen::MatrixXd> within;
    for (int s = 0; s < S; ++s) {
        Eigen::MatrixXd c = arm.contrasts.middleCols(s * L, L);
        Eigen::MatrixXd centered = c.rowwise() - c.colwise().mean();
        Eigen::MatrixXd cov = centered.transpose() * centered / std::max(1.0, c.rows() - 1.0);
        Eigen::VectorXd d = cov.diagonal().cwiseSqrt();
        within.push_back(cov.cwiseQuotient(d * d.transpose()));
    }
    bool bad = false;
    std::vector<double> info = info_from_variances(vars, &bad);
    out.null = null_covariance_analytic(within, info);
    if (bad) out.null.warnings.push_back("pilot information proportions were not monotone; clipped");
    return out;
}

}  // namespace smartmon

#include "smartmon/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "smartmon/error.hpp"
#include "smartmon/rng.hpp"
#include "smartmon/snapshot.hpp"

namespace smartmon {

namespace {

struct Moments {
    double s = 0.0, ss = 0.0;
    int n = 0;
    void add(double x) {
        s += x;
        ss += x * x;
        ++n;
    }
    double mean() const { return n ? s / n : 0.0; }
    double sd() const { return n > 1 ? std::sqrt(std::max(0.0, (ss - s * s / n) / (n - 1))) : 0.0; }
};

struct RepResult {
    std::vector<Eigen::VectorXd> values, contrasts, variances, z;  // per arm, length L*S
    std::vector<int> stop;                                          // per arm
    std::vector<int> ss;
    std::vector<int> stop_day;
    std::vector<int> days;
    std::vector<int> enrolled;
};

}  // namespace

const ArmReport& MonteCarloReport::arm(const std::string& name) const {
    for (auto& a : arms)
        if (a.name == name) return a;
    throw ValidationError("no arm named '" + name + "'");
}

std::vector<Trajectory> simulate_cohort(const ExperimentConfig& cfg, int r) {
    const std::uint64_t rseed = derive_seed(cfg.seed, r);
    std::vector<int> enroll = draw_enrollment(cfg.enrollment, cfg.n, derive_seed(rseed, 1ULL << 40));
    std::vector<Trajectory> cohort;
    cohort.reserve(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        Rng prng = patient_rng(cfg.seed, r, i);
        cohort.push_back(simulate_trajectory(cfg.model, cfg.design, prng, enroll[i], cfg.timing));
        cohort.back().id = i + 1;
    }
    return cohort;
}

MonteCarloReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.reps < 1) throw ValidationError("replication count must be at least 1");
    if (cfg.n < 1) throw ValidationError("planned sample size must be at least 1");
    if (cfg.analysis_days.empty()) throw ValidationError("no analysis days");
    for (size_t s = 1; s < cfg.analysis_days.size(); ++s)
        if (cfg.analysis_days[s] != kAnalysisEnd && cfg.analysis_days[s] <= cfg.analysis_days[s - 1])
            throw ValidationError("analysis days must increase");
    for (size_t s = 0; s + 1 < cfg.analysis_days.size(); ++s)
        if (cfg.analysis_days[s] == kAnalysisEnd) throw ValidationError("only the last analysis may be the trial end");
    if (cfg.arms.empty()) throw ValidationError("no analysis arms");
    validate_enrollment(cfg.enrollment);

    const auto& design = cfg.design;
    const std::vector<Regime>& regimes = cfg.regimes.empty() ? design.regimes() : cfg.regimes;
    const int L = static_cast<int>(regimes.size());
    const int S = static_cast<int>(cfg.analysis_days.size());
    const int A = static_cast<int>(cfg.arms.size());
    for (auto& arm : cfg.arms)
        if (arm.boundaries && static_cast<int>(arm.boundaries->critical.size()) != S)
            throw ValidationError("arm '" + arm.name + "' has boundaries for a different number of analyses");
    for (auto& arm : cfg.arms)
        if (arm.boundaries && arm.estimator.covariance == CovarianceMethod::None)
            throw ValidationError("arm '" + arm.name + "' needs a covariance method to test against boundaries");

    MonteCarloReport rep;
    rep.n = cfg.n;
    rep.reps = cfg.reps;
    rep.seed = cfg.seed;
    rep.analysis_days = cfg.analysis_days;
    for (auto& r : regimes) rep.labels.push_back(r.label);
    rep.true_values = cfg.true_values;
    if (rep.true_values.empty())
        for (auto& r : regimes) rep.true_values.push_back(true_value(cfg.model, design, r).value);
    if (static_cast<int>(rep.true_values.size()) != L) throw ValidationError("one true value per regime is required");

    std::vector<RepResult> results;
    results.reserve(cfg.reps);
    for (int r = 0; r < cfg.reps; ++r) {
        std::vector<Trajectory> cohort = simulate_cohort(cfg, r);
        int last_outcome = 0;
        for (auto& t : cohort) last_outcome = std::max(last_outcome, t.outcome_day);
        RepResult res;
        for (int s = 0; s < S; ++s) res.days.push_back(cfg.analysis_days[s] == kAnalysisEnd ? last_outcome : cfg.analysis_days[s]);
        try {
            std::vector<Snapshot> snaps;
            for (int s = 0; s < S; ++s) {
                snaps.push_back(take_snapshot(cohort, res.days[s]));
                snaps.back().planned_n = cfg.n;
                res.enrolled.push_back(snaps.back().n_enrolled());
            }
            for (int a = 0; a < A; ++a) {
                const auto& arm = cfg.arms[a];
                Eigen::VectorXd vals(L * S), con(L * S), var(L * S), zz(L * S);
                int stop = 0;
                for (int s = 0; s < S; ++s) {
                    ValueEstimate est = stacked_estimate(snaps[s], design, regimes, arm.estimator);
                    // Point-estimate-only arms (no covariance) carry NaN variances and statistics.
                    const bool point_only = arm.estimator.covariance == CovarianceMethod::None;
                    const double nan = std::numeric_limits<double>::quiet_NaN();
                    std::vector<double> z = point_only ? std::vector<double>(L, nan) : z_statistics(est, cfg.delta);
                    Eigen::VectorXd cv = point_only ? Eigen::VectorXd::Constant(L, nan) : contrast_variances(est);
                    const double v0 = est.control.kind == ControlSpec::Kind::None ? 0.0 : est.control_value;
                    for (int l = 0; l < L; ++l) {
                        vals(s * L + l) = est.values[l];
                        con(s * L + l) = est.values[l] - v0;
                        var(s * L + l) = cv(l);
                        zz(s * L + l) = z[l];
                    }
                    if (stop == 0 && arm.boundaries) {
                        Decision d;
                        if (arm.chi_null) {
                            ChiSquare t = chi_square_statistic(z, arm.chi_null->block(s, s));
                            d = decide_chi(t.t, *arm.boundaries, s + 1);
                        } else {
                            d = decide(z, *arm.boundaries, s + 1);
                        }
                        if (d.kind == Decision::Kind::StopReject) stop = s + 1;
                    }
                }
                res.values.push_back(vals);
                res.contrasts.push_back(con);
                res.variances.push_back(var);
                res.z.push_back(zz);
                res.stop.push_back(stop);
                const bool early = stop > 0 && stop < S;
                res.ss.push_back(early ? res.enrolled[stop - 1] : cfg.n);
                res.stop_day.push_back(early ? res.days[stop - 1] : res.days[S - 1]);
            }
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "replicate " << r << ": " << e.what();
            rep.failures.push_back(os.str());
            if (rep.failures.size() > cfg.max_failure_rate * cfg.reps)
                throw NumericalError("experiment aborted: " + std::to_string(rep.failures.size()) +
                                     " failed replicates, last " + os.str());
            continue;
        }
        results.push_back(std::move(res));
    }

    const int R = static_cast<int>(results.size());
    if (R == 0) throw NumericalError("experiment produced no replicates");
    rep.mean_analysis_day.assign(S, 0.0);
    rep.mean_enrolled.assign(S, 0.0);
    for (auto& res : results)
        for (int s = 0; s < S; ++s) {
            rep.mean_analysis_day[s] += static_cast<double>(res.days[s]) / R;
            rep.mean_enrolled[s] += static_cast<double>(res.enrolled[s]) / R;
        }

    for (int a = 0; a < A; ++a) {
        ArmReport ar;
        ar.name = cfg.arms[a].name;
        ar.kind = cfg.arms[a].estimator.kind;
        if (cfg.arms[a].boundaries) ar.critical = cfg.arms[a].boundaries->critical;
        ar.reps = R;
        ar.values.resize(R, L * S);
        ar.contrasts.resize(R, L * S);
        ar.variances.resize(R, L * S);
        ar.reject_at.assign(S, 0.0);
        Moments ess, estop;
        for (int i = 0; i < R; ++i) {
            const auto& res = results[i];
            ar.values.row(i) = res.values[a].transpose();
            ar.contrasts.row(i) = res.contrasts[a].transpose();
            ar.variances.row(i) = res.variances[a].transpose();
            ar.stop_analysis.push_back(res.stop[a]);
            if (res.stop[a] > 0) ar.reject_at[res.stop[a] - 1] += 1.0 / R;
            ess.add(res.ss[a]);
            estop.add(res.stop_day[a]);
        }
        for (int s = 0; s < S; ++s) {
            if (s + 1 < S) ar.early_reject += ar.reject_at[s];
            ar.total_reject += ar.reject_at[s];
        }
        ar.ess_mean = ess.mean();
        ar.ess_sd = ess.sd();
        ar.estop_mean = estop.mean();
        ar.estop_sd = estop.sd();
        auto grid = [&] { return std::vector<std::vector<double>>(S, std::vector<double>(L, 0.0)); };
        ar.mean = grid();
        ar.sd = grid();
        ar.avg_se = grid();
        ar.mse = grid();
        ar.mean_z = grid();
        for (int s = 0; s < S; ++s)
            for (int l = 0; l < L; ++l) {
                Moments v;
                double se = 0.0, mse = 0.0, z = 0.0;
                for (int i = 0; i < R; ++i) {
                    double x = results[i].values[a](s * L + l);
                    v.add(x);
                    se += std::sqrt(std::max(0.0, results[i].variances[a](s * L + l)));
                    mse += (x - rep.true_values[l]) * (x - rep.true_values[l]);
                    z += results[i].z[a](s * L + l);
                }
                ar.mean[s][l] = v.mean();
                ar.sd[s][l] = v.sd();
                ar.avg_se[s][l] = se / R;
                ar.mse[s][l] = mse / R;
                ar.mean_z[s][l] = z / R;
            }
        rep.arms.push_back(std::move(ar));
    }
    return rep;
}

std::vector<std::vector<double>> mse_ratio_table(const ArmReport& reference, const ArmReport& candidate) {
    if (reference.mse.size() != candidate.mse.size()) throw ValidationError("reports cover different analyses");
    std::vector<std::vector<double>> out = reference.mse;
    for (size_t s = 0; s < out.size(); ++s)
        for (size_t l = 0; l < out[s].size(); ++l) {
            double c = candidate.mse[s][l];
            out[s][l] = c > 0.0 ? reference.mse[s][l] / c : (reference.mse[s][l] == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
        }
    return out;
}

nlohmann::json MonteCarloReport::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["n"] = n;
    j["reps"] = reps;
    j["seed"] = seed;
    auto days = nlohmann::json::array();
    for (int d : analysis_days) days.push_back(d == kAnalysisEnd ? nlohmann::json("end") : nlohmann::json(d));
    j["analysis_days"] = days;
    j["mean_analysis_day"] = mean_analysis_day;
    j["mean_enrolled"] = mean_enrolled;
    j["regimes"] = labels;
    j["true_values"] = true_values;
    j["failures"] = failures;
    auto arms_j = nlohmann::json::array();
    for (auto& a : arms) {
        nlohmann::json aj;
        aj["name"] = a.name;
        aj["estimator"] = to_string(a.kind);
        aj["replicates"] = a.reps;
        aj["reject_at"] = a.reject_at;
        aj["early_reject"] = a.early_reject;
        aj["total_reject"] = a.total_reject;
        aj["expected_sample_size"] = {{"mean", a.ess_mean}, {"sd", a.ess_sd}};
        aj["expected_stop_day"] = {{"mean", a.estop_mean}, {"sd", a.estop_sd}};
        aj["mc_mean"] = a.mean;
        aj["mc_sd"] = a.sd;
        aj["avg_se"] = a.avg_se;
        aj["mse"] = a.mse;
        aj["mean_z"] = a.mean_z;
        arms_j.push_back(aj);
    }
    j["arms"] = arms_j;
    return j;
}

void MonteCarloReport::write_csv(std::ostream& out) const {
    out << "arm,analysis,analysis_day,regime,value,se,z,boundary\n";
    for (auto& a : arms)
        for (size_t s = 0; s < a.mean.size(); ++s)
            for (size_t l = 0; l < a.mean[s].size(); ++l) {
                out << a.name << "," << s + 1 << "," << mean_analysis_day[s] << "," << labels[l] << ","
                    << a.mean[s][l] << "," << a.avg_se[s][l] << "," << a.mean_z[s][l] << ",";
                if (s < a.critical.size()) out << a.critical[s];
                out << "\n";
            }
}

}  // namespace smartmon

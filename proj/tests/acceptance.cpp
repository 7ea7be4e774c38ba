// Acceptance criteria. One line per criterion; exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "presets.hpp"
#include "smartmon/error.hpp"
#include "smartmon/estimators.hpp"
#include "smartmon/experiment.hpp"
#include "smartmon/qlearning.hpp"
#include "smartmon/rng.hpp"
#include "smartmon/sequential.hpp"
#include "smartmon/workflow.hpp"

using namespace smartmon;
namespace pr = smartmon::presets;

namespace {

// Pinned tolerances.
constexpr double kIdentityTol = 1e-10;
constexpr double kPocockTol = 0.05;
constexpr double kObfTol = 0.10;
constexpr double kCaseZ1 = 4.27, kCaseZ1Tol = 0.3;
constexpr double kSizeTol = 0.03;
constexpr double kMseGain = 1.05;
constexpr double kBiasSe = 4.0;
constexpr double kIndepSe = 4.0;
constexpr double kCalibSe = 3.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

pr::Options options() {
    pr::Options o;
    o.data_dir = pr::default_data_dir();
    o.seed = kDefaultSeed;
    o.reps = 500;
    o.pilot_reps = 200;
    return o;
}

std::string join(const std::vector<double>& v, int prec = 2) {
    std::string s;
    for (double x : v) s += fmt::format("{}{:.{}f}", s.empty() ? "" : ", ", x, prec);
    return "(" + s + ")";
}

// Random snapshots of the PCST design under VP2.
Outcome identities() {
    auto o = options();
    auto sc = pr::pcst(o);
    auto model = sc.model(2);
    const auto& design = sc.design;
    const auto& regimes = design.regimes();
    Rng meta = make_rng(derive_seed(o.seed, 101));
    double worst_complete = 0, worst_l0 = 0, worst_two = 0;
    int done = 0, skipped = 0;
    for (int trial = 0; done < 1000; ++trial) {
        const int n = std::uniform_int_distribution<int>(150, 400)(meta);
        EnrollmentProcess e;
        std::vector<int> days = draw_enrollment(e, n, meta());
        std::vector<Trajectory> cohort;
        const std::uint64_t seed = meta();
        for (int i = 0; i < n; ++i) {
            Rng rng = patient_rng(seed, 0, i);
            cohort.push_back(simulate_trajectory(model, design, rng, days[i]));
            cohort.back().id = i + 1;
        }
        const int interim = std::uniform_int_distribution<int>(350, 1150)(meta);
        Snapshot part = take_snapshot(cohort, interim);
        Snapshot full = take_snapshot(cohort, 5000);
        const bool estimated = trial % 2 == 1;
        const int l = static_cast<int>(meta() % regimes.size());
        try {
            auto pf = estimated ? Propensities::estimated(design, full) : Propensities::known(design);
            auto pp = estimated ? Propensities::estimated(design, part) : Propensities::known(design);
            QModel qf = fit_q_functions(full, design, regimes, sc.q);
            QModel qp = fit_q_functions(part, design, regimes, sc.q);
            const auto& d = regimes[l];
            worst_complete = std::max(worst_complete, std::abs(iaipwe(full, design, d, pf, &qf, l) -
                                                               aipwe(full, design, d, pf, &qf, l)));
            const double base = ipwe(full, design, d, pf);
            worst_l0 = std::max({worst_l0, std::abs(iaipwe(full, design, d, pf, nullptr, l) - base),
                                 std::abs(aipwe(full, design, d, pf, nullptr, l) - base)});
            worst_two = std::max(worst_two, std::abs(iaipwe(part, design, d, pp, &qp, l) -
                                                     iaipwe_two_stage(part, design, d, pp, &qp, l)));
            ++done;
        } catch (const NumericalError&) {
            ++skipped;
        }
    }
    Outcome out;
    out.pass = worst_complete <= kIdentityTol && worst_l0 <= kIdentityTol && worst_two <= kIdentityTol;
    out.detail = fmt::format("max |IAIPWE-AIPWE| {:.1e}, |L=0 - IPWE| {:.1e}, |one-stage - two-stage| {:.1e} "
                             "over 1000 snapshots ({} rank-deficient draws redrawn)",
                             worst_complete, worst_l0, worst_two, skipped);
    return out;
}

Outcome case_study_boundaries() {
    auto o = options();
    auto b = load_bundle(o.data_dir + "/case_study");
    auto nulls = simulate_nulls(b, b.plan.null_reps, o.seed);
    auto pocock = solve_boundary_set(b.plan.estimators, nulls, b.plan.alpha, BoundaryFamily::Pocock, o.seed);
    auto obf = solve_boundary_set(b.plan.estimators, nulls, b.plan.alpha, BoundaryFamily::OBF, o.seed);
    Outcome out{true, ""};
    for (size_t i = 0; i < b.plan.estimators.size(); ++i) {
        auto k = b.plan.estimators[i];
        const std::vector<double> ref_obf =
            k == EstimatorKind::IAIPWE ? std::vector<double>{4.20, 2.43} : std::vector<double>{4.30, 2.44};
        const auto& p = pocock.specs[i].critical;
        const auto& f = obf.specs[i].critical;
        for (int s = 0; s < 2; ++s) {
            if (std::abs(p[s] - 2.66) > kPocockTol) out.pass = false;
            if (std::abs(f[s] - ref_obf[s]) > kObfTol) out.pass = false;
        }
        out.detail += fmt::format("{}{} Pocock {} OBF {}", out.detail.empty() ? "" : "; ", to_string(k), join(p),
                                  join(f));
    }
    out.detail += fmt::format(" ({} trials of {})", b.plan.null_reps, b.plan.null_n);
    return out;
}

Outcome case_study_snapshot() {
    auto o = options();
    auto cs = pr::case_study(o, false);
    const SnapshotAnalysis* ia = nullptr;
    for (auto& a : cs.interim)
        if (a.estimate.kind == EstimatorKind::IAIPWE) ia = &a;
    if (!ia) return {false, "no IAIPWE analysis"};
    const double z1 = ia->z[0];
    const auto& pocock = ia->decisions.at(0);
    const auto& obf = ia->decisions.at(1);
    const bool pocock_ok = pocock.kind == Decision::Kind::StopReject && pocock.triggered == std::vector<int>{0, 2};
    const bool obf_ok = obf.kind == Decision::Kind::StopReject &&
                        std::find(obf.triggered.begin(), obf.triggered.end(), 0) != obf.triggered.end();
    Outcome out;
    out.pass = std::abs(z1 - kCaseZ1) <= kCaseZ1Tol && pocock_ok && obf_ok;
    std::string pt, ot;
    for (int l : pocock.triggered) pt += fmt::format("{}{}", pt.empty() ? "" : ",", ia->estimate.labels[l]);
    for (int l : obf.triggered) ot += fmt::format("{}{}", ot.empty() ? "" : ",", ia->estimate.labels[l]);
    out.detail = fmt::format("IAIPWE interim Z1 {:.2f}; Pocock {:.2f} rejects {{{}}}; OBF {:.2f} rejects {{{}}}", z1,
                             ia->boundaries[0].critical[0], pt, ia->boundaries[1].critical[0], ot);
    return out;
}

// Sized once, shared by the sizing criteria.
const pr::SizedArm& pcst_arm() {
    static pr::SizedArm arm = [] {
        auto o = options();
        return pr::size_arms(pr::pcst(o), 2, {EstimatorKind::IAIPWE}, false, o).front();
    }();
    return arm;
}

Outcome pcst_size() {
    auto o = options();
    auto sc = pr::pcst(o);
    pr::SizedArm arm = pcst_arm();
    arm.n = sc.pilot_n;
    auto row = pr::run_row(sc, 1, arm, o);
    return {row.total >= 0.03 && row.total <= 0.08,
            fmt::format("VP1 at N = {}: total rejection {:.3f}, critical {}", arm.n, row.total, join(row.critical))};
}

Outcome pcst_power() {
    auto o = options();
    auto sc = pr::pcst(o);
    const auto& arm = pcst_arm();
    auto row = pr::run_row(sc, 2, arm, o);
    const double rel = std::abs(arm.n - 869.0) / 869.0;
    return {rel <= kSizeTol && row.total >= 0.76 && row.total <= 0.84,
            fmt::format("searched N = {} ({:+.1f}% vs 869), VP2 total rejection {:.3f}", arm.n,
                        100.0 * (arm.n - 869.0) / 869.0, row.total)};
}

Outcome pcst_mse() {
    auto o = options();
    auto t = pr::mse_table(pr::pcst(o), 2, 869, o);
    const auto& ratio = t.ratio.at(1).at(0);  // IAIPWE, interim
    const int wins = static_cast<int>(std::count_if(ratio.begin(), ratio.end(), [](double r) { return r >= kMseGain; }));
    return {wins >= 6, fmt::format("interim MSE(IPWE)/MSE(IAIPWE) {}: {} of 8 at least {}", join(ratio), wins, kMseGain)};
}

Outcome enrollment_order() {
    auto o = options();
    std::vector<double> early;
    for (auto c : {std::array<double, 3>{50, 10, 10}, std::array<double, 3>{30, 10, 30}}) {
        auto sc = pr::pcst(o);
        sc.enrollment = pr::staged_enrollment(c[0], c[1], c[2]);
        sc.analysis_days = {700, kAnalysisEnd};
        auto arm = pr::size_arms(sc, 2, {EstimatorKind::IAIPWE}, false, o).front();
        early.push_back(pr::run_row(sc, 2, arm, o).early);
    }
    return {early[0] > early[1],
            fmt::format("IAIPWE early rejection {:.3f} (50/10/10) vs {:.3f} (30/10/30)", early[0], early[1])};
}

ExperimentConfig point_only(const pr::Scenario& sc, int vp, int n, int reps, const pr::Options& o) {
    auto oo = o;
    oo.reps = reps;
    auto cfg = pr::scenario_config(sc, vp, n, {EstimatorKind::IAIPWE}, oo);
    cfg.arms[0].estimator.covariance = CovarianceMethod::None;
    return cfg;
}

Outcome misspecified_bias() {
    auto o = options();
    auto sc = pr::singleton_scenario(o, true);
    auto rep = run_experiment(point_only(sc, 2, 2000, 500, o));
    const auto& a = rep.arms[0];
    double worst = 0;
    for (size_t s = 0; s < a.mean.size(); ++s)
        for (size_t l = 0; l < a.mean[s].size(); ++l) {
            const double mcse = a.sd[s][l] / std::sqrt(static_cast<double>(a.reps));
            worst = std::max(worst, std::abs(a.mean[s][l] - rep.true_values[l]) / mcse);
        }
    return {worst <= kBiasSe, fmt::format("largest |mean - truth| = {:.2f} MC SE over {} regimes x {} analyses",
                                          worst, rep.labels.size(), a.mean.size())};
}

Outcome independent_increments() {
    auto o = options();
    auto sc = pr::singleton_scenario(o, false);
    auto rep = run_experiment(point_only(sc, 2, 517, 2000, o));
    const auto& v = rep.arms[0].values;  // reps x (L*S), regime-fast
    const int L = static_cast<int>(rep.labels.size());
    const int R = static_cast<int>(v.rows());
    double worst = 0;
    std::vector<double> zs;
    for (int l = 0; l < L; ++l) {
        Eigen::VectorXd v2 = v.col(L + l);
        Eigen::VectorXd d = v.col(l) - v2;
        Eigen::ArrayXd prod = (d.array() - d.mean()) * (v2.array() - v2.mean());
        const double cov = prod.sum() / (R - 1);
        const double se = std::sqrt((prod - prod.mean()).square().sum() / (R - 1) / R);
        zs.push_back(cov / se);
        worst = std::max(worst, std::abs(cov / se));
    }
    return {worst <= kIndepSe, fmt::format("cov(V1 - V2, V2) / MC SE per regime {}", join(zs))};
}

Outcome solver_calibration() {
    const double alpha = 0.05;
    const int draws = 200000;
    const double mcse = std::sqrt(alpha * (1 - alpha) / draws);
    bool pass = true;
    double worst = 0;
    std::string detail;
    for (int L : {1, 4, 8})
        for (int S : {2, 3})
            for (auto family : {BoundaryFamily::Pocock, BoundaryFamily::OBF}) {
                Eigen::MatrixXd R = Eigen::MatrixXd::Constant(L, L, 0.5);
                R.diagonal().setOnes();
                std::vector<Eigen::MatrixXd> within(S, R);
                std::vector<double> info;
                for (int s = 1; s <= S; ++s) info.push_back(static_cast<double>(s) / S);
                auto null = null_covariance_analytic(within, info);
                auto b = solve_boundaries(null, alpha, family);
                Eigen::MatrixXd z = draw_mvn(Eigen::VectorXd::Zero(L * S), null.sigma, draws, derive_seed(L, S));
                int reject = 0;
                for (int r = 0; r < draws; ++r) {
                    for (int s = 1; s <= S; ++s) {
                        std::vector<double> zs(L);
                        for (int l = 0; l < L; ++l) zs[l] = z(r, (s - 1) * L + l);
                        if (decide(zs, b, s).kind == Decision::Kind::StopReject) {
                            ++reject;
                            break;
                        }
                    }
                }
                const double fwer = static_cast<double>(reject) / draws;
                const double dev = std::abs(fwer - alpha) / mcse;
                worst = std::max(worst, dev);
                if (dev > kCalibSe) {
                    pass = false;
                    detail += fmt::format(" L={} S={} {} FWER {:.4f};", L, S, to_string(family), fwer);
                }
            }
    return {pass, fmt::format("12 configurations, largest |FWER - {}| = {:.2f} MC SE ({} draws each){}", alpha, worst,
                              draws, detail)};
}

struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "estimator identities", identities},
        {2, "case-study simulated-null boundaries", case_study_boundaries},
        {3, "case-study interim decision", case_study_snapshot},
        {4, "null size at the planned N", pcst_size},
        {5, "sample size search and power", pcst_power},
        {6, "interim efficiency of IAIPWE", pcst_mse},
        {7, "enrollment pattern and early stopping", enrollment_order},
        {8, "misspecified Q consistency", misspecified_bias},
        {9, "independent increments", independent_increments},
        {10, "boundary solver calibration", solver_calibration},
    };
    std::set<int> chosen;
    for (int i = 1; i < argc; ++i) chosen.insert(std::stoi(argv[i]));
    int failed = 0;
    for (auto& c : all) {
        if (!chosen.empty() && !chosen.count(c.id)) continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << fmt::format("{} [{:>2}] {}: {} ({:.0f} s)", out.pass ? "PASS" : "FAIL", c.id, c.name, out.detail,
                                 secs)
                  << std::endl;
        if (!out.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}

#include "presets.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>

#include <fmt/format.h>

#include "smartmon/error.hpp"
#include "smartmon/rng.hpp"

#ifndef SMARTMON_DATA_DIR
#define SMARTMON_DATA_DIR "data"
#endif

namespace smartmon::presets {

namespace {

std::string path(const Options& o, const std::string& rel) {
    return (std::filesystem::path(o.data_dir.empty() ? default_data_dir() : o.data_dir) / rel).string();
}

void note(const Options& o, const std::string& msg) {
    if (o.progress) *o.progress << msg << std::endl;
}

const std::vector<EstimatorKind> kAll{EstimatorKind::IPWE, EstimatorKind::AIPWE, EstimatorKind::IAIPWE};

std::string sd_pair(double m, double sd) { return fmt::format("{:.0f} ({:.0f})", m, sd); }

}  // namespace

std::string default_data_dir() {
    if (const char* env = std::getenv("SMARTMON_DATA_DIR")) return env;
    return SMARTMON_DATA_DIR;
}

std::vector<double> pcst_values(int vp) {
    switch (vp) {
        case 1: return std::vector<double>(8, 47.5);
        case 2: return {49.5, 49.5, 49.5, 49.5, 47.5, 47.5, 47.5, 47.5};
        case 3: return {50.5, 49.0, 49.0, 47.5, 47.5, 47.5, 47.5, 47.5};
    }
    throw ValidationError("value pattern must be 1, 2 or 3");
}

Scenario pcst(const Options& o) {
    Scenario sc;
    sc.name = "pcst";
    sc.design = design_from_json(read_json_file(path(o, "pcst/design.json")));
    sc.q = qspec_from_json(read_json_file(path(o, "pcst/q_features.json")));
    auto base = std::make_shared<GenerativeModel>(model_from_json(read_json_file(path(o, "pcst/model.json")), sc.design));
    auto design = sc.design;
    sc.model = [base, design](int vp) { return calibrate_effects(*base, design, pcst_values(vp)); };
    sc.pilot_n = 869;
    return sc;
}

Scenario singleton_scenario(const Options& o, bool misspecified_q) {
    Scenario sc;
    sc.name = misspecified_q ? "singleton-qmis" : "singleton";
    sc.design = design_from_json(read_json_file(path(o, "singleton/design.json")));
    sc.q = qspec_from_json(
        read_json_file(path(o, misspecified_q ? "singleton/q_features_misspecified.json" : "singleton/q_features.json")));
    std::map<int, GenerativeModel> models;
    for (int vp : {1, 2, 3})
        models[vp] = model_from_json(read_json_file(path(o, fmt::format("singleton/model_vp{}.json", vp))), sc.design);
    sc.model = [models](int vp) {
        auto it = models.find(vp);
        if (it == models.end()) throw ValidationError("value pattern must be 1, 2 or 3");
        return it->second;
    };
    sc.pilot_n = 517;
    return sc;
}

EnrollmentProcess staged_enrollment(double p1, double p2, double p3) {
    EnrollmentProcess e;
    e.kind = EnrollmentProcess::Kind::Periods;
    e.periods = {{0, 500}, {501, 600}, {601, 700}, {701, 1000}};
    e.probs = {p1 / 100.0, p2 / 100.0, p3 / 100.0, 1.0 - (p1 + p2 + p3) / 100.0};
    validate_enrollment(e);
    return e;
}

ExperimentConfig scenario_config(const Scenario& sc, int vp, int n, const std::vector<EstimatorKind>& kinds,
                                 const Options& o) {
    ExperimentConfig c;
    c.design = sc.design;
    c.model = sc.model(vp);
    c.enrollment = sc.enrollment;
    c.timing = sc.timing;
    c.n = n;
    c.analysis_days = sc.analysis_days;
    c.reps = o.reps;
    c.seed = o.seed;
    for (auto k : kinds) {
        AnalysisArm a;
        a.name = to_string(k);
        a.estimator.kind = k;
        if (k != EstimatorKind::IPWE) a.estimator.q = sc.q;
        a.estimator.control.kind = ControlSpec::Kind::Fixed;
        a.estimator.control.value = sc.control;
        c.arms.push_back(a);
    }
    return c;
}

std::vector<SizedArm> size_arms(const Scenario& sc, int sizing_vp, const std::vector<EstimatorKind>& kinds,
                                bool chi_square, const Options& o) {
    note(o, fmt::format("[{}] pilot: VP{}, N = {}, {} replicates", sc.name, sizing_vp, sc.pilot_n, o.pilot_reps));
    Options po = o;
    po.reps = o.pilot_reps;
    po.seed = derive_seed(o.seed, 0x9117);
    ExperimentConfig cfg = scenario_config(sc, sizing_vp, sc.pilot_n, kinds, po);
    MonteCarloReport rep = run_experiment(cfg);
    std::vector<SizedArm> out;
    for (auto k : kinds) {
        SizedArm arm;
        arm.kind = k;
        arm.pilot = pilot_from_report(rep, to_string(k), sc.control, 0.0);
        if (chi_square) {
            arm.boundary = chi_boundaries(arm.pilot.null, o.alpha, o.family, 20000, o.seed);
            arm.chi_null = arm.pilot.null;
        } else {
            arm.boundary = solve_boundaries(arm.pilot.null, o.alpha, o.family, o.seed);
        }
        DrawPower dp(arm.pilot.alt, arm.boundary, arm.pilot.null, 10000, o.seed);
        auto sr = sample_size_search(o.power, [&](int n) { return dp(n).power; }, SearchOptions{});
        arm.n = sr.n;
        arm.planned_power = sr.power;
        note(o, fmt::format("[{}] {}: info {:.3f}, critical {:.3f}, N = {} (planned power {:.3f})", sc.name,
                            to_string(k), arm.pilot.null.info.front(), arm.boundary.critical.front(), arm.n,
                            arm.planned_power));
        out.push_back(std::move(arm));
    }
    return out;
}

nlohmann::json PerformanceRow::to_json() const {
    return {{"vp", vp},         {"estimator", to_string(kind)}, {"n", n},           {"reject_at", reject_at},
            {"early_reject", early}, {"total_reject", total},   {"ess", ess},       {"ess_sd", ess_sd},
            {"estop", estop},   {"estop_sd", estop_sd},         {"critical", critical}};
}

PerformanceRow run_row(const Scenario& sc, int vp, const SizedArm& arm, const Options& o) {
    ExperimentConfig cfg = scenario_config(sc, vp, arm.n, {arm.kind}, o);
    cfg.arms[0].boundaries = arm.boundary;
    cfg.arms[0].chi_null = arm.chi_null;
    note(o, fmt::format("[{}] VP{} {} at N = {}: {} replicates", sc.name, vp, to_string(arm.kind), arm.n, o.reps));
    MonteCarloReport rep = run_experiment(cfg);
    const ArmReport& a = rep.arms.front();
    PerformanceRow row;
    row.vp = vp;
    row.kind = arm.kind;
    row.n = arm.n;
    row.reject_at = a.reject_at;
    row.early = a.early_reject;
    row.total = a.total_reject;
    row.ess = a.ess_mean;
    row.ess_sd = a.ess_sd;
    row.estop = a.estop_mean;
    row.estop_sd = a.estop_sd;
    row.critical = arm.boundary.critical;
    return row;
}

PresetReport performance_table(const std::string& id, const Scenario& sc, const std::vector<int>& vps,
                               const std::vector<EstimatorKind>& kinds, bool chi_square, const Options& o) {
    std::map<int, std::vector<SizedArm>> sized;
    std::vector<PerformanceRow> rows;
    for (int vp : vps) {
        int svp = sc.sizing_vp(vp);
        if (!sized.count(svp)) sized[svp] = size_arms(sc, svp, kinds, chi_square, o);
        for (auto& arm : sized[svp]) rows.push_back(run_row(sc, vp, arm, o));
    }
    const int S = static_cast<int>(sc.analysis_days.size());
    PresetReport r;
    r.id = id;
    r.title = fmt::format("{}: {} boundaries, alpha {}, {} replicates, seed {}", id, to_string(o.family), o.alpha,
                          o.reps, o.seed);
    std::string head = "VP  Method  N     ";
    for (int s = 1; s < S; ++s) head += fmt::format("Reject s={}  ", s);
    head += "Total   E(SS)        E(Stop)";
    r.text = r.title + "\n" + head + "\n";
    auto arr = nlohmann::json::array();
    for (auto& row : rows) {
        std::string line = fmt::format("{:<3} {:<7} {:<5} ", row.vp, to_string(row.kind), row.n);
        for (int s = 0; s + 1 < S; ++s) line += fmt::format("{:<11.3f} ", row.reject_at[s]);
        line += fmt::format("{:<7.3f} {:<12} {}", row.total, sd_pair(row.ess, row.ess_sd),
                            sd_pair(row.estop, row.estop_sd));
        r.text += line + "\n";
        arr.push_back(row.to_json());
    }
    r.json = {{"preset", id},   {"family", to_string(o.family)}, {"alpha", o.alpha}, {"reps", o.reps},
              {"seed", o.seed}, {"statistic", chi_square ? "chi-square" : "z"},      {"rows", arr}};
    return r;
}

MseTable mse_table(const Scenario& sc, int vp, int n, const Options& o) {
    ExperimentConfig cfg = scenario_config(sc, vp, n, kAll, o);
    note(o, fmt::format("[{}] efficiency run: VP{}, N = {}, {} replicates", sc.name, vp, n, o.reps));
    MseTable t;
    t.report = run_experiment(cfg);
    t.labels = t.report.labels;
    t.truth = t.report.true_values;
    const ArmReport& ref = t.report.arm("IPWE");
    for (auto k : {EstimatorKind::AIPWE, EstimatorKind::IAIPWE}) {
        t.kinds.push_back(k);
        t.ratio.push_back(mse_ratio_table(ref, t.report.arm(to_string(k))));
    }
    return t;
}

CaseStudy case_study(const Options& o, bool solve) {
    CaseStudy cs;
    const std::string dir = path(o, "case_study");
    cs.bundle = load_bundle(dir);
    const Plan& plan = cs.bundle.plan;
    if (solve) {
        note(o, fmt::format("[case-study] simulating the null correlation: {} trials of {} patients", plan.null_reps,
                            plan.null_n > 0 ? plan.null_n : plan.n));
        auto nulls = simulate_nulls(cs.bundle, plan.null_reps, o.seed);
        cs.pocock = solve_boundary_set(plan.estimators, nulls, plan.alpha, BoundaryFamily::Pocock, o.seed);
        cs.obf = solve_boundary_set(plan.estimators, nulls, plan.alpha, BoundaryFamily::OBF, o.seed);
    } else {
        cs.pocock = boundary_set_from_json(read_json_file(dir + "/boundaries_pocock.json"));
        cs.obf = boundary_set_from_json(read_json_file(dir + "/boundaries_obf.json"));
    }
    for (const char* stem : {"snapshot_interim", "snapshot_final"}) {
        auto side = sidecar_from_json(read_json_file(dir + "/" + stem + ".json"));
        std::ifstream in(dir + "/" + stem + ".csv");
        if (!in) throw ValidationError("cannot open " + dir + "/" + stem + ".csv");
        Snapshot snap = read_snapshot_csv(in, cs.bundle.design, side.analysis_day, side.planned_n);
        int s = analysis_index(plan, side.analysis_day);
        auto& dest = std::string(stem) == "snapshot_interim" ? cs.interim : cs.final_analysis;
        for (auto k : plan.estimators) {
            std::vector<BoundarySpec> bs;
            if (auto* b = cs.pocock.find(k)) bs.push_back(*b);
            if (auto* b = cs.obf.find(k)) bs.push_back(*b);
            dest.push_back(analyze_snapshot(snap, cs.bundle.design, plan, k, s, bs));
        }
    }
    return cs;
}

namespace {

PresetReport mse_report(const std::string& id, const MseTable& t, const Options& o) {
    PresetReport r;
    r.id = id;
    r.title = fmt::format("{}: MSE(IPWE) / MSE(estimator), {} replicates, seed {}", id, o.reps, o.seed);
    r.text = r.title + "\nMethod  Regime  Truth   Interim  Final\n";
    auto arr = nlohmann::json::array();
    for (size_t e = 0; e < t.kinds.size(); ++e)
        for (size_t l = 0; l < t.labels.size(); ++l) {
            r.text += fmt::format("{:<7} {:<7} {:<7.2f} {:<8.2f} {:.2f}\n", to_string(t.kinds[e]), t.labels[l],
                                  t.truth[l], t.ratio[e][0][l], t.ratio[e].back()[l]);
            arr.push_back({{"estimator", to_string(t.kinds[e])},
                           {"regime", t.labels[l]},
                           {"truth", t.truth[l]},
                           {"ratio", {t.ratio[e][0][l], t.ratio[e].back()[l]}}});
        }
    r.json = {{"preset", id}, {"reps", o.reps}, {"seed", o.seed}, {"rows", arr}};
    return r;
}

PresetReport case_study_report(const CaseStudy& cs, const Options& o) {
    PresetReport r;
    r.id = "case-study";
    r.title = "case-study: estimated values x10^-1 (standard errors), Z statistics and boundaries";
    r.text = r.title + "\n";
    auto arr = nlohmann::json::array();
    for (size_t e = 0; e < cs.interim.size(); ++e) {
        const auto& a = cs.interim[e];
        const auto& b = cs.final_analysis[e];
        r.text += fmt::format("\n{}\n{:<7} {:<7} {:<6} {:<14} {:<7} | {:<7} {:<6} {:<14} {}\n",
                              to_string(a.estimate.kind), "Regime", "Pocock", "OBF", "Value (SE)", "Z", "Pocock",
                              "OBF", "Value (SE)", "Z");
        for (int l = 0; l < a.estimate.num_regimes(); ++l) {
            auto cell = [&](const SnapshotAnalysis& x) {
                return fmt::format("{:<7.2f} {:<6.2f} {:<14} {:<7.2f}", x.boundaries.at(0).critical[x.analysis - 1],
                                   x.boundaries.at(1).critical[x.analysis - 1],
                                   fmt::format("{:.2f} ({:.2f})", x.estimate.values[l] / 10.0, x.estimate.se(l) / 10.0),
                                   x.z[l]);
            };
            r.text += fmt::format("{:<7} {} | {}\n", a.estimate.labels[l], cell(a), cell(b));
        }
        for (size_t i = 0; i < a.decisions.size(); ++i) {
            std::string trig;
            for (int l : a.decisions[i].triggered) trig += (trig.empty() ? "" : ", ") + a.estimate.labels[l];
            r.text += fmt::format("interim {}: {}{}\n", to_string(a.boundaries[i].family),
                                  to_string(a.decisions[i].kind), trig.empty() ? "" : " (regimes " + trig + ")");
        }
        arr.push_back({{"interim", a.to_json()}, {"final", b.to_json()}});
    }
    r.json = {{"preset", "case-study"},
              {"seed", o.seed},
              {"boundaries", {{"pocock", cs.pocock.to_json()}, {"obf", cs.obf.to_json()}}},
              {"analyses", arr}};
    return r;
}

PresetReport table3_report(const Options& o) {
    const std::vector<std::array<double, 3>> configs{{50, 10, 10}, {40, 20, 10}, {30, 30, 10},
                                                     {40, 10, 20}, {30, 20, 20}, {30, 10, 30}};
    PresetReport r;
    r.id = "table3";
    r.title = fmt::format("table3: VP2, interim day 700, {} boundaries, {} replicates, seed {}", to_string(o.family),
                          o.reps, o.seed);
    r.text = r.title + "\np1  p2  p3  Method  N     Early   Total   E(SS)        E(Stop)\n";
    auto arr = nlohmann::json::array();
    for (auto& c : configs) {
        Scenario sc = pcst(o);
        sc.name = fmt::format("table3 {}/{}/{}", c[0], c[1], c[2]);
        sc.enrollment = staged_enrollment(c[0], c[1], c[2]);
        sc.analysis_days = {700, kAnalysisEnd};
        for (auto& arm : size_arms(sc, 2, kAll, false, o)) {
            auto row = run_row(sc, 2, arm, o);
            r.text += fmt::format("{:<3} {:<3} {:<3} {:<7} {:<5} {:<7.3f} {:<7.3f} {:<12} {}\n", c[0], c[1], c[2],
                                  to_string(row.kind), row.n, row.early, row.total, sd_pair(row.ess, row.ess_sd),
                                  sd_pair(row.estop, row.estop_sd));
            auto j = row.to_json();
            j["enrollment"] = c;
            arr.push_back(j);
        }
    }
    r.json = {{"preset", "table3"}, {"reps", o.reps}, {"seed", o.seed}, {"rows", arr}};
    return r;
}

}  // namespace

std::vector<std::string> preset_ids() {
    return {"table1",         "table2",          "table3",           "appendixG-singleton", "appendixG-qmis",
            "appendixG-chisq", "appendixG-s3", "appendixG-vartime", "case-study"};
}

PresetReport run_preset(const std::string& id, const Options& o) {
    if (id == "table1") return performance_table(id, pcst(o), {1, 2, 3}, kAll, false, o);
    if (id == "table2") return mse_report(id, mse_table(pcst(o), 2, 869, o), o);
    if (id == "table3") return table3_report(o);
    if (id == "appendixG-singleton") return performance_table(id, singleton_scenario(o), {1, 2, 3}, kAll, false, o);
    if (id == "appendixG-qmis") return performance_table(id, singleton_scenario(o, true), {1, 2, 3}, kAll, false, o);
    if (id == "appendixG-chisq") return performance_table(id, singleton_scenario(o), {1, 2, 3}, kAll, true, o);
    if (id == "appendixG-s3") {
        Scenario sc = singleton_scenario(o);
        sc.analysis_days = {500, 700, kAnalysisEnd};
        return performance_table(id, sc, {1, 2, 3}, kAll, false, o);
    }
    if (id == "appendixG-vartime") {
        Scenario sc = singleton_scenario(o);
        sc.timing.gap_jitter_days = 10;
        return performance_table(id, sc, {1, 2, 3}, kAll, false, o);
    }
    if (id == "case-study") return case_study_report(case_study(o, false), o);
    std::string known;
    for (auto& p : preset_ids()) known += (known.empty() ? "" : ", ") + p;
    throw ValidationError("unknown preset '" + id + "' (known: " + known + ")");
}

}  // namespace smartmon::presets

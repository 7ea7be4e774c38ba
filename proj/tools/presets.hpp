#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmon/config.hpp"
#include "smartmon/experiment.hpp"
#include "smartmon/planning.hpp"
#include "smartmon/workflow.hpp"

namespace smartmon::presets {

struct Options {
    std::string data_dir;
    std::uint64_t seed = kDefaultSeed;
    int reps = 500;
    int pilot_reps = 200;
    double alpha = 0.05;
    double power = 0.8;
    BoundaryFamily family = BoundaryFamily::Pocock;
    std::ostream* progress = nullptr;
};

std::string default_data_dir();

// A simulation schema with its value patterns.
struct Scenario {
    std::string name;
    SmartDesign design;
    QSpec q;
    std::function<GenerativeModel(int vp)> model;
    double control = 47.5;
    EnrollmentProcess enrollment;
    TimingSpec timing;
    std::vector<int> analysis_days{500, kAnalysisEnd};
    int pilot_n = 869;
    // Value pattern used for sizing when the truth is `vp` (the null borrows the alternative's N).
    std::function<int(int vp)> sizing_vp = [](int vp) { return vp == 1 ? 2 : vp; };
};

Scenario pcst(const Options& o);
Scenario singleton_scenario(const Options& o, bool misspecified_q = false);
std::vector<double> pcst_values(int vp);

// Staged enrollment: percentages completed / at stage two only / at stage one only by day 700.
EnrollmentProcess staged_enrollment(double p1, double p2, double p3);

ExperimentConfig scenario_config(const Scenario& sc, int vp, int n, const std::vector<EstimatorKind>& kinds,
                                 const Options& o);

struct SizedArm {
    EstimatorKind kind = EstimatorKind::IAIPWE;
    int n = 0;
    double planned_power = 0.0;
    BoundarySpec boundary;
    std::optional<NullCovariance> chi_null;
    PilotResult pilot;
};

// Pilot at the sizing VP, boundaries from the pilot null, then the step/discount search.
std::vector<SizedArm> size_arms(const Scenario& sc, int sizing_vp, const std::vector<EstimatorKind>& kinds,
                                bool chi_square, const Options& o);

struct PerformanceRow {
    int vp = 0;
    EstimatorKind kind = EstimatorKind::IAIPWE;
    int n = 0;
    std::vector<double> reject_at;
    double early = 0.0, total = 0.0;
    double ess = 0.0, ess_sd = 0.0, estop = 0.0, estop_sd = 0.0;
    std::vector<double> critical;
    nlohmann::json to_json() const;
};

PerformanceRow run_row(const Scenario& sc, int vp, const SizedArm& arm, const Options& o);

struct PresetReport {
    std::string id;
    std::string title;
    nlohmann::json json;
    std::string text;
};

// Sequential performance table: each VP, each estimator sized under its sizing VP.
PresetReport performance_table(const std::string& id, const Scenario& sc, const std::vector<int>& vps,
                               const std::vector<EstimatorKind>& kinds, bool chi_square, const Options& o);

// Interim and final MSE ratios of IPWE over each augmented estimator.
struct MseTable {
    std::vector<std::string> labels;
    std::vector<double> truth;
    // [estimator][analysis][regime]
    std::vector<std::vector<std::vector<double>>> ratio;
    std::vector<EstimatorKind> kinds;
    MonteCarloReport report;
};
MseTable mse_table(const Scenario& sc, int vp, int n, const Options& o);

struct CaseStudy {
    ConfigBundle bundle;
    BoundarySet pocock, obf;
    std::vector<SnapshotAnalysis> interim, final_analysis;  // one per estimator
};
CaseStudy case_study(const Options& o, bool solve_boundaries);

std::vector<std::string> preset_ids();
PresetReport run_preset(const std::string& id, const Options& o);

}  // namespace smartmon::presets

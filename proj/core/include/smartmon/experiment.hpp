#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "smartmon/design.hpp"
#include "smartmon/estimators.hpp"
#include "smartmon/model.hpp"
#include "smartmon/sequential.hpp"

namespace smartmon {

inline constexpr int kAnalysisEnd = -1;  // analysis day placeholder: last outcome of the cohort

// One estimator and its stopping rule applied to every replicate.
struct AnalysisArm {
    std::string name;
    EstimatorOptions estimator;
    std::optional<BoundarySpec> boundaries;  // absent: estimate only, never stop
    std::optional<NullCovariance> chi_null;  // set for the chi-square homogeneity test
};

struct ExperimentConfig {
    SmartDesign design;
    GenerativeModel model;
    EnrollmentProcess enrollment;
    TimingSpec timing;
    int n = 0;
    std::vector<int> analysis_days;
    std::vector<Regime> regimes;  // empty: the design's regimes
    std::vector<double> true_values;  // empty: computed
    double delta = 0.0;
    std::vector<AnalysisArm> arms;
    int reps = 500;
    std::uint64_t seed = 1;
    double max_failure_rate = 0.01;
};

struct ArmReport {
    std::string name;
    EstimatorKind kind = EstimatorKind::IAIPWE;
    int reps = 0;
    std::vector<double> critical;
    std::vector<double> reject_at;  // fraction rejecting first at analysis s
    double early_reject = 0.0;
    double total_reject = 0.0;
    double ess_mean = 0.0, ess_sd = 0.0;
    double estop_mean = 0.0, estop_sd = 0.0;
    // [s][l]
    std::vector<std::vector<double>> mean, sd, avg_se, mse, mean_z;
    Eigen::MatrixXd values;     // reps x (L*S), regime-fast
    Eigen::MatrixXd contrasts;  // reps x (L*S): V - V0
    Eigen::MatrixXd variances;  // reps x (L*S): estimated contrast variance
    std::vector<int> stop_analysis;  // per replicate, 0 = no rejection
};

struct MonteCarloReport {
    int n = 0;
    int reps = 0;
    std::uint64_t seed = 0;
    std::vector<int> analysis_days;  // kAnalysisEnd kept as given
    std::vector<double> mean_analysis_day;
    std::vector<double> mean_enrolled;  // per analysis
    std::vector<std::string> labels;
    std::vector<double> true_values;
    std::vector<ArmReport> arms;
    std::vector<std::string> failures;

    const ArmReport& arm(const std::string& name) const;
    nlohmann::json to_json() const;
    // analysis day, regime, value, SE, Z, boundary (means over replicates)
    void write_csv(std::ostream& out) const;
};

MonteCarloReport run_experiment(const ExperimentConfig& config);

// Replicate r's cohort, as run_experiment draws it.
std::vector<Trajectory> simulate_cohort(const ExperimentConfig& config, int r);

// MSE of `reference` over MSE of `candidate`, [s][l].
std::vector<std::vector<double>> mse_ratio_table(const ArmReport& reference, const ArmReport& candidate);

}  // namespace smartmon

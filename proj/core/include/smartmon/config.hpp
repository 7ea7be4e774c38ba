#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmon/design.hpp"
#include "smartmon/diagnostics.hpp"
#include "smartmon/estimators.hpp"
#include "smartmon/experiment.hpp"
#include "smartmon/model.hpp"
#include "smartmon/sequential.hpp"

namespace smartmon {

inline constexpr std::uint64_t kDefaultSeed = 20240917;

// Trial plan: everything about monitoring that is not the design or the generative law.
struct Plan {
    std::string name;
    int n = 0;
    EnrollmentProcess enrollment;
    TimingSpec timing;
    std::vector<int> analysis_days;  // last may be kAnalysisEnd
    std::vector<std::string> regimes;  // labels; empty = all embedded regimes
    ControlSpec control;
    double delta = 0.0;
    double alpha = 0.05;
    BoundaryFamily family = BoundaryFamily::Pocock;
    std::vector<EstimatorKind> estimators{EstimatorKind::IPWE, EstimatorKind::AIPWE, EstimatorKind::IAIPWE};
    CovarianceMethod covariance = CovarianceMethod::Sandwich;
    bool estimate_propensities = false;
    QSpec q;
    std::string null_source = "simulated";  // or "analytic" (pilot based)
    int null_reps = 5000;
    int null_n = 0;  // cohort size for the simulated null; 0 = n
    int pilot_reps = 200;
    std::vector<double> info;  // planned information proportions, optional
    double power = 0.8;
    int reps = 500;
    std::uint64_t seed = kDefaultSeed;
};

// The three documents plus their parsed forms.
struct ConfigBundle {
    SmartDesign design;
    std::optional<GenerativeModel> model;
    Plan plan;
    nlohmann::json design_json, model_json, plan_json;
    std::vector<std::string> warnings;
};

nlohmann::json read_json_file(const std::string& path);

// `base_dir` resolves a q_features path given as a string.
Plan plan_from_json(const nlohmann::json& j, const SmartDesign& design, const std::string& base_dir = "");
nlohmann::json plan_to_json(const Plan& p);

// Checks every document eagerly and throws one ValidationError listing all diagnostics,
// each prefixed by its document name and JSON pointer. `model` may be null.
ConfigBundle validate_config(const nlohmann::json& design, const nlohmann::json* model, const nlohmann::json& plan,
                             const std::string& base_dir = "");

// Reads design.json, model.json (optional) and plan.json from a directory.
ConfigBundle load_bundle(const std::string& dir);

// Expected fractions of N that have completed all stages and that have enrolled by `day`.
std::pair<double, double> info_bracket(const SmartDesign& design, const EnrollmentProcess& e, int day);

// Last day any enrolled patient can produce an outcome.
int trial_end_day(const SmartDesign& design, const EnrollmentProcess& e, const TimingSpec& t);

std::vector<Regime> select_regimes(const SmartDesign& design, const std::vector<std::string>& labels);

EstimatorOptions estimator_options(const Plan& p, EstimatorKind kind);

// One arm per planned estimator, no boundaries attached.
ExperimentConfig experiment_config(const ConfigBundle& b);

struct RunManifest {
    std::string command;
    std::string digest;
    std::uint64_t seed = 0;
    std::string version;
    double wall_seconds = 0.0;
    nlohmann::json to_json() const;
};

// FNV-1a over the canonical dump; object keys are sorted so member order does not matter.
std::string config_digest(const nlohmann::json& j);

std::string library_version();

}  // namespace smartmon

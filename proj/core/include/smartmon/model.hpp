#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmon/design.hpp"
#include "smartmon/rng.hpp"
#include "smartmon/trajectory.hpp"

namespace smartmon {

struct Dist {
    enum class Kind { Normal, Bernoulli, Uniform, Switch };
    Kind kind = Kind::Normal;
    std::vector<LinearTerm> mean;   // Normal
    double var = 1.0;               // Normal
    double p = 0.5;                 // Bernoulli, used when logit is empty
    std::vector<LinearTerm> logit;  // Bernoulli
    double lo = 0.0, hi = 1.0;      // Uniform
    VarRef on;                      // Switch
    std::string on_name;
    std::vector<std::pair<int, Dist>> cases;  // Switch: code -> distribution
};

struct CovariateSpec {
    std::string name;
    VarRef ref;
    Dist dist;
};

class GenerativeModel {
public:
    GenerativeModel() = default;
    // Specs may come in any order; they are sorted by stage, keeping relative order within a stage.
    GenerativeModel(const SmartDesign& design, std::vector<CovariateSpec> covariates,
                    std::vector<LinearTerm> outcome_mean, double outcome_sd);

    const std::vector<CovariateSpec>& covariates() const { return covariates_; }
    const std::vector<LinearTerm>& outcome_mean() const { return outcome_mean_; }
    std::vector<LinearTerm>& outcome_mean() { return outcome_mean_; }
    double outcome_sd() const { return outcome_sd_; }
    void set_outcome_sd(double sd) { outcome_sd_ = sd; }
    int num_free() const;

private:
    std::vector<CovariateSpec> covariates_;
    std::vector<LinearTerm> outcome_mean_;
    double outcome_sd_ = 1.0;
};

struct EnrollmentProcess {
    enum class Kind { Uniform, Periods };
    Kind kind = Kind::Uniform;
    int lo = 0, hi = 1000;
    std::vector<std::pair<int, int>> periods;  // inclusive day ranges
    std::vector<double> probs;
};

void validate_enrollment(const EnrollmentProcess& e);
int draw_enrollment_day(const EnrollmentProcess& e, Rng& rng);
std::vector<int> draw_enrollment(const EnrollmentProcess& e, int n, std::uint64_t seed);

struct TimingSpec {
    int gap_jitter_days = 0;  // each gap drawn uniformly in [gap - j, gap + j]
};

// Draws one trajectory. With `forced` set, actions follow that regime instead of randomization.
Trajectory simulate_trajectory(const GenerativeModel& model, const SmartDesign& design, Rng& rng, int enroll_day,
                               const TimingSpec& timing = {}, const Regime* forced = nullptr);

struct TrueValue {
    double value = 0.0;
    double mcse = 0.0;  // zero in analytic mode
};

// E{term} under regime-consistent treatment, one entry per outcome term.
std::vector<double> regime_term_expectations(const GenerativeModel& model, const SmartDesign& design,
                                             const Regime& regime);
TrueValue true_value(const GenerativeModel& model, const SmartDesign& design, const Regime& regime);
TrueValue true_value_mc(const GenerativeModel& model, const SmartDesign& design, const Regime& regime,
                        int mc_reps, std::uint64_t seed);

// Sets the free outcome coefficients so every regime hits its target value.
GenerativeModel calibrate_effects(const GenerativeModel& model, const SmartDesign& design,
                                  const std::vector<double>& targets);

GenerativeModel model_from_json(const nlohmann::json& j, const SmartDesign& design);
nlohmann::json model_to_json(const GenerativeModel& m, const SmartDesign& design);
EnrollmentProcess enrollment_from_json(const nlohmann::json& j);
nlohmann::json enrollment_to_json(const EnrollmentProcess& e);

}  // namespace smartmon

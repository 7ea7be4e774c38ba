#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "smartmon/design.hpp"
#include "smartmon/qlearning.hpp"
#include "smartmon/snapshot.hpp"

namespace smartmon {

enum class EstimatorKind { IPWE, AIPWE, IAIPWE };
std::string to_string(EstimatorKind k);
EstimatorKind estimator_from_string(const std::string& s);

enum class CovarianceMethod { Sandwich, SandwichNumeric, Bootstrap, None };
std::string to_string(CovarianceMethod m);
CovarianceMethod covariance_from_string(const std::string& s);

struct ControlSpec {
    enum class Kind { None, Fixed, Arm };
    Kind kind = Kind::None;
    double value = 0.0;   // Fixed
    Code arm_action = 0;  // Arm: stage-1 code of the control arm
};

struct EstimatorOptions {
    EstimatorKind kind = EstimatorKind::IAIPWE;
    bool estimate_propensities = false;
    QSpec q;
    CovarianceMethod covariance = CovarianceMethod::Sandwich;
    int bootstrap_reps = 1000;
    std::uint64_t seed = 1;
    ControlSpec control;
};

struct ValueEstimate {
    EstimatorKind kind = EstimatorKind::IAIPWE;
    int day = 0;
    int n_t = 0;        // enrolled at the analysis
    int n_used = 0;     // records entering the estimator (complete cases for IPWE/AIPWE)
    int planned_n = 0;
    std::vector<std::string> labels;
    std::vector<std::string> descriptions;
    std::vector<double> values;
    Eigen::MatrixXd covariance;  // regimes first, then the estimated control if present
    ControlSpec control;
    double control_value = 0.0;
    std::string covariance_method;
    std::vector<std::string> warnings;

    int num_regimes() const { return static_cast<int>(values.size()); }
    double se(int l) const;
    // SE of V_l - V_0 (fixed control: SE of V_l).
    double contrast_se(int l) const;
    nlohmann::json to_json() const;
};

// Direct estimators on one regime; `q` may be null for L = 0. `l` indexes q's regimes.
double ipwe(const Snapshot& snap, const SmartDesign& design, const Regime& regime, const Propensities& props);
double aipwe(const Snapshot& snap, const SmartDesign& design, const Regime& regime, const Propensities& props,
             const QModel* q, int l);
double iaipwe(const Snapshot& snap, const SmartDesign& design, const Regime& regime, const Propensities& props,
              const QModel* q, int l);
// Two-stage rearrangement with averaged progress rates.
double iaipwe_two_stage(const Snapshot& snap, const SmartDesign& design, const Regime& regime,
                        const Propensities& props, const QModel* q, int l);

// Per-record terms phi_i whose mean is the IAIPWE (records in snapshot order).
std::vector<double> iaipwe_terms(const Snapshot& snap, const SmartDesign& design, const Regime& regime,
                                 const ProgressRates& rates, const Propensities& props, const QModel* q, int l);

// Mean-phi gradients with respect to nu_2..nu_{K+1}, propensity cells and each stage's coefficients.
struct PhiGradient {
    Eigen::VectorXd theta;              // [nu_2..nu_{K+1}, cells]
    std::vector<Eigen::VectorXd> beta;  // per stage
};
PhiGradient phi_gradient_analytic(const Snapshot& snap, const SmartDesign& design, const Regime& regime,
                                  const ProgressRates& rates, const Propensities& props, const QModel* q, int l);
PhiGradient phi_gradient_numeric(const Snapshot& snap, const SmartDesign& design, const Regime& regime,
                                 const ProgressRates& rates, const Propensities& props, const QModel* q, int l);

ValueEstimate stacked_estimate(const Snapshot& snap, const SmartDesign& design, const std::vector<Regime>& regimes,
                               const EstimatorOptions& opts);

}  // namespace smartmon

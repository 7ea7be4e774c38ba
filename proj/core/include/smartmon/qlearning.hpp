#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "smartmon/design.hpp"
#include "smartmon/snapshot.hpp"

namespace smartmon {

// Feature terms per stage; stage k terms may use X_1..X_k and A_1..A_k.
struct QSpec {
    std::vector<std::vector<std::string>> stage_terms;
    bool empty() const { return stage_terms.empty(); }
};
QSpec qspec_from_json(const nlohmann::json& j);
nlohmann::json qspec_to_json(const QSpec& q);

// Linear Q-functions. beta[l][k-1] holds stage-k coefficients for regime l; the stage-K
// entry is the shared outcome regression.
struct QModel {
    std::vector<FeatureMap> maps;
    std::vector<std::vector<Eigen::VectorXd>> beta;
    std::vector<std::vector<int>> rows_used;  // [l][k-1]
    std::vector<std::vector<double>> resid_var;

    int num_stages() const { return static_cast<int>(maps.size()); }
    // Features of stage k with A_k replaced by `ak`.
    Eigen::VectorXd features(const VarLayout& layout, int k, const ObservedRecord& rec, Code ak) const;
    double predict(const VarLayout& layout, int l, int k, const ObservedRecord& rec, Code ak) const;
    int num_parameters(int l) const;
};

QModel make_qmodel(const SmartDesign& design, const QSpec& spec, int num_regimes);

// Backward least squares with the extended pseudo-outcomes for partially observed rows.
QModel fit_q_functions(const Snapshot& snap, const SmartDesign& design, const std::vector<Regime>& regimes,
                       const QSpec& spec);

// Pseudo-outcome of a stage-k fit (k < K) for a row with kappa > k. `stage_used` reports
// which stage's coefficients it depends on (0 when it is Y).
double pseudo_outcome(const QModel& q, const SmartDesign& design, const Regime& regime, int l, int k,
                      const ObservedRecord& rec, int* stage_used, Eigen::VectorXd* grad);

// QR with column pivoting, relative tolerance 1e-10.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::string& what);

}  // namespace smartmon

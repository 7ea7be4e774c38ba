#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmon/config.hpp"
#include "smartmon/estimators.hpp"
#include "smartmon/planning.hpp"
#include "smartmon/sequential.hpp"
#include "smartmon/snapshot.hpp"

namespace smartmon {

// Null correlation per planned estimator from point estimates of simulated trials.
// The cohort size is plan.null_n (or plan.n) and the replicate count `reps`.
std::vector<NullCovariance> simulate_nulls(const ConfigBundle& b, int reps, std::uint64_t seed);

// Boundaries for every planned estimator, one family.
struct BoundarySet {
    std::vector<EstimatorKind> kinds;
    std::vector<BoundarySpec> specs;
    const BoundarySpec* find(EstimatorKind k) const;
    nlohmann::json to_json() const;
};
BoundarySet boundary_set_from_json(const nlohmann::json& j);
BoundarySet solve_boundary_set(const std::vector<EstimatorKind>& kinds, const std::vector<NullCovariance>& nulls,
                               double alpha, BoundaryFamily family, std::uint64_t seed);

struct SnapshotAnalysis {
    int analysis = 1;  // 1-based
    int num_analyses = 1;
    ValueEstimate estimate;
    std::vector<double> z;
    std::vector<BoundarySpec> boundaries;
    std::vector<Decision> decisions;  // parallel to boundaries
    nlohmann::json to_json() const;
};

// Which planned analysis a snapshot taken on `day` belongs to (1-based).
int analysis_index(const Plan& plan, int day);

SnapshotAnalysis analyze_snapshot(const Snapshot& snap, const SmartDesign& design, const Plan& plan, EstimatorKind kind,
                                  int analysis, const std::vector<BoundarySpec>& boundaries);

// Pilot under the plan's model, then the alternative and analytic null for each estimator.
struct PlanningRun {
    std::vector<EstimatorKind> kinds;
    std::vector<PilotResult> pilots;
    std::vector<BoundarySpec> boundaries;
};
PlanningRun plan_from_pilot(const ExperimentConfig& pilot_config, double control, double alpha, BoundaryFamily family,
                            std::uint64_t seed);

}  // namespace smartmon

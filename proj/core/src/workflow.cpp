#include "smartmon/workflow.hpp"

#include <algorithm>

#include "smartmon/error.hpp"
#include "smartmon/experiment.hpp"

namespace smartmon {

std::vector<NullCovariance> simulate_nulls(const ConfigBundle& b, int reps, std::uint64_t seed) {
    ExperimentConfig c = experiment_config(b);
    c.reps = reps;
    c.seed = seed;
    if (b.plan.null_n > 0) c.n = b.plan.null_n;
    for (auto& arm : c.arms) arm.estimator.covariance = CovarianceMethod::None;
    MonteCarloReport rep = run_experiment(c);
    const int L = static_cast<int>(rep.labels.size());
    const int S = static_cast<int>(rep.analysis_days.size());
    std::vector<NullCovariance> out;
    for (auto& arm : rep.arms) {
        out.push_back(null_covariance_simulated(arm.contrasts, L, S));
        if (!rep.failures.empty())
            out.back().warnings.push_back(std::to_string(rep.failures.size()) + " simulated trials failed");
    }
    return out;
}

const BoundarySpec* BoundarySet::find(EstimatorKind k) const {
    for (size_t i = 0; i < kinds.size(); ++i)
        if (kinds[i] == k) return &specs[i];
    return nullptr;
}

nlohmann::json BoundarySet::to_json() const {
    auto arr = nlohmann::json::array();
    for (size_t i = 0; i < kinds.size(); ++i) {
        auto j = specs[i].to_json();
        j["estimator"] = to_string(kinds[i]);
        arr.push_back(j);
    }
    return {{"schema_version", 1}, {"boundaries", arr}};
}

BoundarySet boundary_set_from_json(const nlohmann::json& j) {
    BoundarySet set;
    const nlohmann::json& arr = j.is_object() && j.contains("boundaries") ? j["boundaries"] : j;
    if (!arr.is_array()) {
        // A single spec applies to any estimator.
        set.specs.push_back(boundary_from_json(arr));
        for (auto k : {EstimatorKind::IPWE, EstimatorKind::AIPWE, EstimatorKind::IAIPWE}) {
            set.kinds.push_back(k);
            set.specs.push_back(set.specs.front());
        }
        set.specs.erase(set.specs.begin());
        return set;
    }
    for (size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].contains("estimator"))
            throw ValidationError("/boundaries/" + std::to_string(i) + "/estimator: missing");
        set.kinds.push_back(estimator_from_string(arr[i]["estimator"].get<std::string>()));
        set.specs.push_back(boundary_from_json(arr[i]));
    }
    return set;
}

BoundarySet solve_boundary_set(const std::vector<EstimatorKind>& kinds, const std::vector<NullCovariance>& nulls,
                               double alpha, BoundaryFamily family, std::uint64_t seed) {
    if (kinds.size() != nulls.size()) throw ValidationError("one null covariance per estimator is required");
    BoundarySet set;
    set.kinds = kinds;
    for (auto& n : nulls) set.specs.push_back(solve_boundaries(n, alpha, family, seed));
    return set;
}

nlohmann::json SnapshotAnalysis::to_json() const {
    nlohmann::json j = estimate.to_json();
    j["analysis"] = analysis;
    j["num_analyses"] = num_analyses;
    for (size_t l = 0; l < z.size(); ++l) j["regimes"][l]["z"] = z[l];
    auto tests = nlohmann::json::array();
    for (size_t i = 0; i < boundaries.size(); ++i) {
        auto t = decisions[i].to_json(estimate.labels);
        t["family"] = to_string(boundaries[i].family);
        t["critical"] = boundaries[i].critical[analysis - 1];
        tests.push_back(t);
    }
    j["tests"] = tests;
    return j;
}

int analysis_index(const Plan& plan, int day) {
    const int S = static_cast<int>(plan.analysis_days.size());
    for (int s = 0; s < S; ++s)
        if (plan.analysis_days[s] == day) return s + 1;
    if (plan.analysis_days.back() == kAnalysisEnd && (S == 1 || day > plan.analysis_days[S - 2])) return S;
    throw ValidationError("snapshot day " + std::to_string(day) + " matches no planned analysis");
}

SnapshotAnalysis analyze_snapshot(const Snapshot& snap, const SmartDesign& design, const Plan& plan, EstimatorKind kind,
                                  int analysis, const std::vector<BoundarySpec>& boundaries) {
    SnapshotAnalysis out;
    out.analysis = analysis;
    out.num_analyses = static_cast<int>(plan.analysis_days.size());
    out.estimate = stacked_estimate(snap, design, select_regimes(design, plan.regimes), estimator_options(plan, kind));
    out.z = z_statistics(out.estimate, plan.delta);
    for (auto& b : boundaries) {
        if (static_cast<int>(b.critical.size()) != out.num_analyses)
            throw ValidationError("boundaries cover " + std::to_string(b.critical.size()) + " analyses, plan has " +
                                  std::to_string(out.num_analyses));
        out.boundaries.push_back(b);
        out.decisions.push_back(decide(out.z, b, analysis));
    }
    return out;
}

PlanningRun plan_from_pilot(const ExperimentConfig& pilot_config, double control, double alpha, BoundaryFamily family,
                            std::uint64_t seed) {
    ExperimentConfig cfg = pilot_config;
    for (auto& a : cfg.arms) {
        a.boundaries.reset();
        a.chi_null.reset();
    }
    MonteCarloReport rep = run_experiment(cfg);
    PlanningRun run;
    for (auto& arm : cfg.arms) {
        run.kinds.push_back(arm.estimator.kind);
        run.pilots.push_back(pilot_from_report(rep, arm.name, control, cfg.delta));
        run.boundaries.push_back(solve_boundaries(run.pilots.back().null, alpha, family, seed));
    }
    return run;
}

}  // namespace smartmon

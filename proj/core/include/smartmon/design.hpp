#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmon/features.hpp"

namespace smartmon {

using Code = int;
inline constexpr int kAny = -1;

// One row of the feasible-set table. Stage 1 rows ignore prior/response.
struct FeasibleEntry {
    int prior = kAny;     // A_{k-1}, or kAny
    int response = kAny;  // R_k in {0,1}, or kAny
    std::vector<Code> options;
    std::vector<double> propensities;
};

struct StageSpec {
    std::vector<std::string> treatments;  // code -> name
    std::vector<std::string> covariates;  // names in X_k
    std::string response_variable;        // designated binary coordinate of X_k (stages >= 2)
    int response_index = -1;
    std::vector<FeasibleEntry> feasible;
    int gap_days = 0;  // days from the start of this stage to the next stage (or outcome)
};

// Key a history reduces to in the tabular case.
struct HistoryKey {
    int prior = kAny;
    int response = kAny;
};

struct RegimeRule {
    int stage = 1;
    int prior = kAny;
    int response = kAny;
    Code action = 0;
};

struct Regime {
    std::string label;
    std::string description;
    std::vector<RegimeRule> rules;
};

// X_1..X_k and the actions taken so far.
struct History {
    std::vector<std::vector<double>> x;
    std::vector<Code> a;
};

class SmartDesign {
public:
    SmartDesign() = default;
    SmartDesign(std::string name, std::vector<StageSpec> stages, std::vector<DerivedVar> derived,
                std::vector<Regime> regimes);

    const std::string& name() const { return name_; }
    int num_stages() const { return static_cast<int>(stages_.size()); }
    const StageSpec& stage(int k) const { return stages_.at(k - 1); }
    const std::vector<StageSpec>& stages() const { return stages_; }
    const VarLayout& layout() const { return layout_; }
    const std::vector<Regime>& regimes() const { return regimes_; }
    std::vector<int> gaps() const;
    const std::vector<DerivedVar>& derived_spec() const { return derived_spec_; }

    HistoryKey key(int k, std::span<const std::vector<double>> x, std::span<const Code> a) const;
    int entry_index(int k, const HistoryKey& key) const;
    const FeasibleEntry& feasible(int k, const HistoryKey& key) const;
    double propensity(int k, const HistoryKey& key, Code a) const;

    std::string treatment_name(int k, Code c) const;

private:
    std::string name_;
    std::vector<StageSpec> stages_;
    std::vector<DerivedVar> derived_spec_;
    VarLayout layout_;
    std::vector<Regime> regimes_;
};

// d_k(h_k) for a history with k-1 actions.
Code regime_action(const SmartDesign& design, const Regime& regime, const History& history);
Code regime_action(const SmartDesign& design, const Regime& regime, int k, const HistoryKey& key);

// C_{d,k}: true iff A_j = d_j(H_j) for j <= k. Needs k actions in `history`.
bool consistency_indicator(const SmartDesign& design, const Regime& regime, const History& history, int k);

std::vector<Regime> enumerate_embedded_regimes(const SmartDesign& design);

// Throws ValidationError when the regime misses a reachable key or picks an infeasible code.
void check_regime(const SmartDesign& design, const Regime& regime);

SmartDesign design_from_json(const nlohmann::json& j);
nlohmann::json design_to_json(const SmartDesign& d);
nlohmann::json regime_to_json(const Regime& r);
Regime regime_from_json(const nlohmann::json& j);

}  // namespace smartmon

#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smartmon/design.hpp"
#include "smartmon/trajectory.hpp"

namespace smartmon {

inline constexpr int kLevelInf = std::numeric_limits<int>::max();

// Calendar-time view of one patient. Blocks beyond kappa are absent, not zero-filled.
struct ObservedRecord {
    int id = 0;
    bool enrolled = false;
    int kappa = 0;
    bool complete = false;
    int enroll_day = 0;
    std::vector<std::vector<double>> x;  // size kappa
    std::vector<int> a;                  // size kappa
    double y = 0.0;                      // meaningful iff complete

    RowView view() const { return {x, a, complete ? &y : nullptr}; }
    RowView view(int k) const;  // first k stages, no outcome
};

struct Snapshot {
    int day = 0;
    int planned_n = 0;
    std::vector<ObservedRecord> records;  // enrolled records only

    int n_enrolled() const { return static_cast<int>(records.size()); }
    int n_complete() const;
    int n_reached(int k) const;
    Snapshot complete_cases() const;
};

ObservedRecord observe(const Trajectory& tr, int t);
Snapshot take_snapshot(const std::vector<Trajectory>& cohort, int t);

// R(t) for one regime; kLevelInf for a complete, fully consistent record.
int coarsening_level(const SmartDesign& design, const ObservedRecord& rec, const Regime& regime);

// nu[k-1] = nu_k for k = 1..K+1.
struct ProgressRates {
    std::vector<double> nu;
    int n_t = 0;
};
ProgressRates estimate_nu(const Snapshot& snap, int K);

// Randomization probabilities: the design's, or saturated empirical frequencies per feasible-set entry.
class Propensities {
public:
    static Propensities known(const SmartDesign& design);
    static Propensities estimated(const SmartDesign& design, const Snapshot& snap);

    bool is_estimated() const { return estimated_; }
    double pi(int k, int entry, Code a) const;
    // Free parameters: every option but the last of each entry that any record reached.
    struct Cell {
        int stage, entry, option;  // option index within the entry
        double n_entry;            // records keyed to the entry
    };
    const std::vector<Cell>& cells() const { return cells_; }
    // d pi(k, entry, a) / d cell
    double dpi(int cell, int k, int entry, Code a) const;
    const std::vector<std::vector<std::vector<double>>>& table() const { return probs_; }
    void set_cell(int cell, double p);

private:
    const SmartDesign* design_ = nullptr;
    bool estimated_ = false;
    std::vector<std::vector<std::vector<double>>> probs_;  // [stage][entry][option]
    std::vector<Cell> cells_;
};

// Per-level hazard and survivor values for levels 1..2K (index r-1), filled for r <= level.
struct Coarsening {
    int level = 0;
    std::vector<double> lambda;
    std::vector<double> surv;
};
Coarsening hazard_and_survivor(const SmartDesign& design, const ObservedRecord& rec, const Regime& regime,
                               const ProgressRates& rates, const Propensities& props);

// Snapshot CSV: id, enroll_day, stage-1 covariates, a1, stage-2 covariates, a2, ..., y.
// Blank cells mark unobserved data and must agree with the design's schedule at `day`.
Snapshot read_snapshot_csv(std::istream& in, const SmartDesign& design, int day, int planned_n);
void write_snapshot_csv(std::ostream& out, const SmartDesign& design, const Snapshot& snap);
std::vector<std::string> snapshot_csv_header(const SmartDesign& design);

struct SnapshotSidecar {
    int analysis_day = 0;
    int planned_n = 0;
};
SnapshotSidecar sidecar_from_json(const nlohmann::json& j);

}  // namespace smartmon

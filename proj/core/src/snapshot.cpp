#include "smartmon/snapshot.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "smartmon/diagnostics.hpp"
#include "smartmon/error.hpp"

namespace smartmon {

namespace {
constexpr double kSurvivorFloor = 1e-12;
}

RowView ObservedRecord::view(int k) const {
    return {std::span<const std::vector<double>>(x.data(), static_cast<size_t>(k)),
            std::span<const int>(a.data(), static_cast<size_t>(k)), nullptr};
}

int Snapshot::n_complete() const {
    int n = 0;
    for (auto& r : records) n += r.complete ? 1 : 0;
    return n;
}

int Snapshot::n_reached(int k) const {
    int n = 0;
    for (auto& r : records) n += r.kappa >= k ? 1 : 0;
    return n;
}

Snapshot Snapshot::complete_cases() const {
    Snapshot s{day, planned_n, {}};
    for (auto& r : records)
        if (r.complete) s.records.push_back(r);
    return s;
}

ObservedRecord observe(const Trajectory& tr, int t) {
    ObservedRecord r;
    r.id = tr.id;
    r.enroll_day = tr.enroll_day;
    r.enrolled = tr.enroll_day <= t;
    if (!r.enrolled) return r;
    for (int d : tr.stage_days) r.kappa += d <= t ? 1 : 0;
    r.complete = tr.outcome_day <= t;
    r.x.assign(tr.x.begin(), tr.x.begin() + r.kappa);
    r.a.assign(tr.a.begin(), tr.a.begin() + r.kappa);
    if (r.complete) r.y = tr.y;
    return r;
}

Snapshot take_snapshot(const std::vector<Trajectory>& cohort, int t) {
    Snapshot s;
    s.day = t;
    s.planned_n = static_cast<int>(cohort.size());
    for (auto& tr : cohort) {
        ObservedRecord r = observe(tr, t);
        if (r.enrolled) s.records.push_back(std::move(r));
    }
    return s;
}

int coarsening_level(const SmartDesign& design, const ObservedRecord& rec, const Regime& regime) {
    if (!rec.enrolled) throw ValidationError("not enrolled");
    const int K = design.num_stages();
    for (int k = 1; k <= rec.kappa; ++k) {
        Code d = regime_action(design, regime, k, design.key(k, rec.x, rec.a));
        if (rec.a[k - 1] != d) return 2 * k - 1;
    }
    if (rec.kappa < K) return 2 * rec.kappa;
    return rec.complete ? kLevelInf : 2 * K;
}

ProgressRates estimate_nu(const Snapshot& snap, int K) {
    if (snap.records.empty()) throw ValidationError("empty snapshot");
    ProgressRates p;
    p.n_t = snap.n_enrolled();
    for (int k = 1; k <= K; ++k) p.nu.push_back(static_cast<double>(snap.n_reached(k)) / p.n_t);
    p.nu.push_back(static_cast<double>(snap.n_complete()) / p.n_t);
    return p;
}

Propensities Propensities::known(const SmartDesign& design) {
    Propensities p;
    p.design_ = &design;
    for (auto& st : design.stages()) {
        std::vector<std::vector<double>> stage;
        for (auto& fe : st.feasible) stage.push_back(fe.propensities);
        p.probs_.push_back(stage);
    }
    return p;
}

Propensities Propensities::estimated(const SmartDesign& design, const Snapshot& snap) {
    Propensities p = known(design);
    p.estimated_ = true;
    const int K = design.num_stages();
    for (int k = 1; k <= K; ++k) {
        const auto& st = design.stage(k);
        std::vector<std::vector<double>> counts(st.feasible.size());
        for (size_t e = 0; e < st.feasible.size(); ++e) counts[e].assign(st.feasible[e].options.size(), 0.0);
        for (auto& r : snap.records) {
            if (r.kappa < k) continue;
            int e = design.entry_index(k, design.key(k, r.x, r.a));
            const auto& opts = st.feasible[e].options;
            auto it = std::find(opts.begin(), opts.end(), r.a[k - 1]);
            if (it == opts.end())
                throw ValidationError("record " + std::to_string(r.id) + " has an infeasible A" + std::to_string(k));
            counts[e][it - opts.begin()] += 1.0;
        }
        for (size_t e = 0; e < counts.size(); ++e) {
            double n = 0.0;
            for (double c : counts[e]) n += c;
            if (n == 0.0) continue;
            for (size_t o = 0; o < counts[e].size(); ++o) {
                p.probs_[k - 1][e][o] = counts[e][o] / n;
                if (o + 1 < counts[e].size())
                    p.cells_.push_back({k, static_cast<int>(e), static_cast<int>(o), n});
            }
        }
    }
    return p;
}

double Propensities::pi(int k, int entry, Code a) const {
    const auto& opts = design_->stage(k).feasible[entry].options;
    for (size_t o = 0; o < opts.size(); ++o)
        if (opts[o] == a) return probs_[k - 1][entry][o];
    return 0.0;
}

double Propensities::dpi(int cell, int k, int entry, Code a) const {
    const Cell& c = cells_[cell];
    if (c.stage != k || c.entry != entry) return 0.0;
    const auto& opts = design_->stage(k).feasible[entry].options;
    if (a == opts[c.option]) return 1.0;
    if (a == opts.back()) return -1.0;
    return 0.0;
}

void Propensities::set_cell(int cell, double p) {
    const Cell& c = cells_[cell];
    auto& row = probs_[c.stage - 1][c.entry];
    row[c.option] = p;
    double s = 0.0;
    for (size_t o = 0; o + 1 < row.size(); ++o) s += row[o];
    row.back() = 1.0 - s;
}

Coarsening hazard_and_survivor(const SmartDesign& design, const ObservedRecord& rec, const Regime& regime,
                               const ProgressRates& rates, const Propensities& props) {
    const int K = design.num_stages();
    Coarsening c;
    c.level = coarsening_level(design, rec, regime);
    c.lambda.assign(2 * K, 0.0);
    c.surv.assign(2 * K, 0.0);
    double prod = 1.0;  // prod_{v<k} pi_v(A_v)
    for (int k = 1; k <= K; ++k) {
        const int odd = 2 * k - 1, even = 2 * k;
        if (c.level < odd) break;
        const double nu_k = rates.nu[k - 1], nu_next = rates.nu[k];
        if (nu_k <= 0.0) throw NumericalError("degenerate progress rate at stage " + std::to_string(k));
        HistoryKey key = design.key(k, rec.x, rec.a);
        int e = design.entry_index(k, key);
        Code d = regime_action(design, regime, k, key);
        double pd = props.pi(k, e, d);
        c.lambda[odd - 1] = 1.0 - pd;
        c.surv[odd - 1] = nu_k * pd * prod;
        if (c.surv[odd - 1] < kSurvivorFloor)
            throw NumericalError("positivity violation at level " + std::to_string(odd));
        if (c.level < even) break;
        prod *= props.pi(k, e, rec.a[k - 1]);
        c.lambda[even - 1] = 1.0 - nu_next / nu_k;
        c.surv[even - 1] = nu_next * prod;
        if (c.surv[even - 1] < kSurvivorFloor)
            throw NumericalError("positivity violation at level " + std::to_string(even));
    }
    return c;
}

// ---- CSV ----

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    for (auto& s : out) {
        size_t b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    }
    return out;
}

bool parse_double(const std::string& s, double& v) {
    try {
        size_t pos = 0;
        v = std::stod(s, &pos);
        return pos == s.size() && std::isfinite(v);
    } catch (const std::exception&) {
        return false;
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::vector<std::string> snapshot_csv_header(const SmartDesign& design) {
    std::vector<std::string> h{"id", "enroll_day"};
    for (int k = 1; k <= design.num_stages(); ++k) {
        for (auto& c : design.stage(k).covariates) h.push_back(c);
        h.push_back("a" + std::to_string(k));
    }
    h.push_back("y");
    return h;
}

Snapshot read_snapshot_csv(std::istream& in, const SmartDesign& design, int day, int planned_n) {
    const int K = design.num_stages();
    const auto header = snapshot_csv_header(design);
    Diagnostics diag;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("snapshot CSV is empty");
    auto cols = split_csv(line);
    if (cols != header) {
        std::string want;
        for (auto& h : header) want += (want.empty() ? "" : ",") + h;
        throw ValidationError("snapshot CSV header mismatch; expected: " + want);
    }
    Snapshot snap;
    snap.day = day;
    snap.planned_n = planned_n;
    int row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto f = split_csv(line);
        const std::string where = "row " + std::to_string(row_no);
        if (f.size() != header.size()) {
            diag.add(where, "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
            continue;
        }
        ObservedRecord r;
        double v;
        bool ok = true;
        auto bad = [&](const std::string& col, const std::string& msg) {
            diag.add(where + "/" + col, msg);
            ok = false;
        };
        if (!parse_double(f[0], v)) bad("id", "expected an integer id");
        r.id = static_cast<int>(v);
        if (!parse_double(f[1], v)) bad("enroll_day", "expected a day");
        r.enroll_day = static_cast<int>(v);
        r.enrolled = r.enroll_day <= day;
        if (!r.enrolled) bad("enroll_day", "enrolled after the analysis day");
        size_t col = 2;
        bool gap = false;
        for (int k = 1; k <= K; ++k) {
            const auto& covs = design.stage(k).covariates;
            size_t blanks = 0;
            for (size_t j = 0; j <= covs.size(); ++j) blanks += f[col + j].empty() ? 1 : 0;
            if (blanks == covs.size() + 1) {
                gap = true;
                col += covs.size() + 1;
                continue;
            }
            if (blanks != 0 || gap) {
                bad(header[col], "stage " + std::to_string(k) + " block is partially blank or follows a blank stage");
                col += covs.size() + 1;
                continue;
            }
            std::vector<double> xk;
            for (size_t j = 0; j < covs.size(); ++j) {
                if (!parse_double(f[col + j], v)) bad(header[col + j], "expected a number");
                xk.push_back(v);
            }
            if (!parse_double(f[col + covs.size()], v) || v != std::floor(v))
                bad(header[col + covs.size()], "expected an integer treatment code");
            r.x.push_back(xk);
            r.a.push_back(static_cast<int>(v));
            col += covs.size() + 1;
        }
        r.kappa = static_cast<int>(r.a.size());
        if (!f[col].empty()) {
            if (!parse_double(f[col], v)) bad("y", "expected a number");
            r.y = v;
            r.complete = true;
        }
        if (!ok) continue;
        // Presence must agree with the fixed schedule.
        int start = r.enroll_day, expect_kappa = 0;
        for (int k = 1; k <= K; ++k) {
            if (start <= day) expect_kappa = k;
            start += design.stage(k).gap_days;
        }
        bool expect_complete = start <= day;
        if (r.kappa != expect_kappa)
            bad("a" + std::to_string(std::max(1, r.kappa)),
                "observed stages (" + std::to_string(r.kappa) + ") disagree with the schedule (" +
                    std::to_string(expect_kappa) + ")");
        if (r.complete != expect_complete)
            bad("y", expect_complete ? "outcome missing for a completed patient" : "outcome present before follow-up");
        if (!ok) continue;
        for (int k = 1; k <= r.kappa; ++k) {
            try {
                const auto& fe = design.feasible(k, design.key(k, r.x, r.a));
                if (std::find(fe.options.begin(), fe.options.end(), r.a[k - 1]) == fe.options.end())
                    bad("a" + std::to_string(k), "treatment not in the feasible set");
            } catch (const ValidationError& e) {
                bad("a" + std::to_string(k), e.what());
            }
        }
        if (ok) snap.records.push_back(std::move(r));
    }
    diag.throw_if_any("snapshot CSV");
    if (snap.records.empty()) throw ValidationError("empty snapshot");
    return snap;
}

void write_snapshot_csv(std::ostream& out, const SmartDesign& design, const Snapshot& snap) {
    const int K = design.num_stages();
    auto header = snapshot_csv_header(design);
    for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (auto& r : snap.records) {
        out << r.id << "," << r.enroll_day;
        for (int k = 1; k <= K; ++k) {
            const size_t nc = design.stage(k).covariates.size();
            for (size_t j = 0; j < nc; ++j) out << "," << (k <= r.kappa ? fmt(r.x[k - 1][j]) : "");
            out << "," << (k <= r.kappa ? std::to_string(r.a[k - 1]) : "");
        }
        out << "," << (r.complete ? fmt(r.y) : "") << "\n";
    }
}

SnapshotSidecar sidecar_from_json(const nlohmann::json& j) {
    Diagnostics diag;
    JsonReader r(j, diag);
    r.check_schema_version();
    SnapshotSidecar s;
    s.analysis_day = r.integer("analysis_day");
    s.planned_n = r.integer("planned_n");
    if (s.planned_n < 1) r.error("planned_n", "planned_n must be positive");
    diag.throw_if_any("snapshot sidecar");
    return s;
}

}  // namespace smartmon

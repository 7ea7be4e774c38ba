#include "smartmon/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "smartmon/error.hpp"
#include "smartmon/qlearning.hpp"

#ifndef SMARTMON_VERSION
#define SMARTMON_VERSION "0.0.0"
#endif

namespace smartmon {

namespace {

// P(enroll day <= t).
double enrollment_cdf(const EnrollmentProcess& e, double t) {
    auto uniform = [t](int lo, int hi) {
        if (t < lo) return 0.0;
        if (t >= hi) return 1.0;
        return (std::floor(t) - lo + 1.0) / (hi - lo + 1.0);
    };
    if (e.kind == EnrollmentProcess::Kind::Uniform) return uniform(e.lo, e.hi);
    double acc = 0.0;
    for (size_t i = 0; i < e.periods.size(); ++i) acc += e.probs[i] * uniform(e.periods[i].first, e.periods[i].second);
    return acc;
}

int last_enrollment_day(const EnrollmentProcess& e) {
    if (e.kind == EnrollmentProcess::Kind::Uniform) return e.hi;
    int last = 0;
    for (size_t i = 0; i < e.periods.size(); ++i)
        if (e.probs[i] > 0) last = std::max(last, e.periods[i].second);
    return last;
}

// Runs `parse` and folds any ValidationError into `diag` under `doc`.
template <class F>
void collect(Diagnostics& diag, const std::string& doc, F&& parse) {
    try {
        parse();
    } catch (const ValidationError& e) {
        diag.add(doc, e.what());
    }
}

}  // namespace

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

std::vector<Regime> select_regimes(const SmartDesign& design, const std::vector<std::string>& labels) {
    if (labels.empty()) return design.regimes();
    std::vector<Regime> out;
    for (auto& lab : labels) {
        auto it = std::find_if(design.regimes().begin(), design.regimes().end(),
                               [&](const Regime& r) { return r.label == lab; });
        if (it == design.regimes().end()) throw ValidationError("unknown regime label '" + lab + "'");
        out.push_back(*it);
    }
    return out;
}

Plan plan_from_json(const nlohmann::json& j, const SmartDesign& design, const std::string& base_dir) {
    Diagnostics diag;
    JsonReader r(j, diag);
    r.check_schema_version();
    Plan p;
    p.name = r.string("name", "");
    p.n = r.integer("n", 0);
    if (p.n < 1) r.error("n", "planned sample size must be >= 1");
    if (r.has("enrollment")) {
        try {
            p.enrollment = enrollment_from_json(j["enrollment"]);
        } catch (const ValidationError& e) {
            r.error("enrollment", e.what());
        }
    }
    if (r.has("timing")) {
        p.timing.gap_jitter_days = r.child("timing").integer("gap_jitter_days", 0);
        if (p.timing.gap_jitter_days < 0) r.child("timing").error("gap_jitter_days", "jitter must be >= 0");
    }
    auto days = r.child("analysis_days");
    if (!days.is_array() || days.size() == 0) r.error("analysis_days", "expected a non-empty array");
    for (size_t s = 0; s < days.size(); ++s) {
        const auto& d = days.at(s).raw();
        if (d.is_string() && d.get<std::string>() == "end") {
            if (s + 1 != days.size()) days.at(s).error("", "only the last analysis may be \"end\"");
            p.analysis_days.push_back(kAnalysisEnd);
        } else if (d.is_number_integer()) {
            int day = d.get<int>();
            if (!p.analysis_days.empty() && day <= p.analysis_days.back())
                days.at(s).error("", "analysis days must increase");
            p.analysis_days.push_back(day);
        } else {
            days.at(s).error("", "expected a day or \"end\"");
        }
    }
    if (r.has("regimes")) {
        p.regimes = r.strings("regimes");
        try {
            (void)select_regimes(design, p.regimes);
        } catch (const ValidationError& e) {
            r.error("regimes", e.what());
        }
    }
    if (r.has("control")) {
        auto c = r.child("control");
        std::string kind = c.string("kind", "fixed");
        if (kind == "fixed") {
            p.control.kind = ControlSpec::Kind::Fixed;
            p.control.value = c.number("value");
        } else if (kind == "arm") {
            p.control.kind = ControlSpec::Kind::Arm;
            p.control.arm_action = c.integer("action");
            const auto& st = design.stage(1);
            if (p.control.arm_action < 0 || p.control.arm_action >= static_cast<int>(st.treatments.size()))
                c.error("action", "control arm must be a stage-1 treatment code");
        } else if (kind != "none") {
            c.error("kind", "unknown control kind '" + kind + "' (none, fixed, arm)");
        }
    }
    p.delta = r.number("delta", 0.0);
    p.alpha = r.number("alpha", 0.05);
    if (!(p.alpha > 0 && p.alpha < 1)) r.error("alpha", "alpha must lie in (0, 1)");
    try {
        p.family = family_from_string(r.string("boundary", "pocock"));
    } catch (const ValidationError& e) {
        r.error("boundary", e.what());
    }
    if (r.has("estimators")) {
        p.estimators.clear();
        auto names = r.strings("estimators");
        for (size_t i = 0; i < names.size(); ++i) {
            try {
                p.estimators.push_back(estimator_from_string(names[i]));
            } catch (const ValidationError& e) {
                r.child("estimators").at(i).error("", e.what());
            }
        }
    }
    try {
        p.covariance = covariance_from_string(r.string("covariance", "sandwich"));
    } catch (const ValidationError& e) {
        r.error("covariance", e.what());
    }
    p.estimate_propensities = r.boolean("estimate_propensities", false);
    if (r.has("q_features")) {
        try {
            const auto& qj = j["q_features"];
            if (qj.is_string()) {
                std::filesystem::path path(qj.get<std::string>());
                if (path.is_relative() && !base_dir.empty()) path = std::filesystem::path(base_dir) / path;
                p.q = qspec_from_json(read_json_file(path.string()));
            } else {
                p.q = qspec_from_json(qj);
            }
            if (static_cast<int>(p.q.stage_terms.size()) != design.num_stages())
                r.error("q_features", "expected one term list per stage");
            else
                (void)make_qmodel(design, p.q, 1);
        } catch (const ValidationError& e) {
            r.error("q_features", e.what());
        }
    }
    auto needs_q = std::any_of(p.estimators.begin(), p.estimators.end(),
                               [](EstimatorKind k) { return k != EstimatorKind::IPWE; });
    if (needs_q && p.q.empty()) r.error("q_features", "augmented estimators need Q feature terms");
    if (r.has("null")) {
        auto nj = r.child("null");
        p.null_source = nj.string("source", "simulated");
        if (p.null_source != "simulated" && p.null_source != "analytic")
            nj.error("source", "expected \"simulated\" or \"analytic\"");
        p.null_reps = nj.integer("reps", 5000);
        if (p.null_reps < 2) nj.error("reps", "need at least two replicates");
        p.null_n = nj.integer("n", 0);
        if (p.null_n < 0) nj.error("n", "cohort size must be >= 0");
    }
    p.pilot_reps = r.integer("pilot_reps", 200);
    if (r.has("info")) {
        p.info = r.numbers("info");
        if (p.info.size() != p.analysis_days.size()) r.error("info", "one information proportion per analysis");
        for (size_t s = 0; s < p.info.size(); ++s) {
            if (!(p.info[s] > 0 && p.info[s] <= 1)) r.child("info").at(s).error("", "must lie in (0, 1]");
            if (s > 0 && p.info[s] < p.info[s - 1]) r.child("info").at(s).error("", "must not decrease");
        }
    }
    p.power = r.number("power", 0.8);
    if (!(p.power > 0 && p.power < 1)) r.error("power", "target power must lie in (0, 1)");
    p.reps = r.integer("reps", 500);
    if (p.reps < 1) r.error("reps", "replication count must be >= 1");
    if (r.has("seed")) p.seed = r.raw()["seed"].get<std::uint64_t>();

    // Planned information must sit between the completed and enrolled fractions.
    if (diag.empty() && !p.info.empty()) {
        int end = trial_end_day(design, p.enrollment, p.timing);
        double final_complete = info_bracket(design, p.enrollment, end).first;
        for (size_t s = 0; s < p.info.size(); ++s) {
            int day = p.analysis_days[s] == kAnalysisEnd ? end : p.analysis_days[s];
            auto [complete, enrolled] = info_bracket(design, p.enrollment, day);
            double lo = complete / std::max(final_complete, 1e-12);
            if (p.info[s] < lo - 0.05 || p.info[s] > enrolled + 0.05) {
                std::ostringstream os;
                os << "planned information " << p.info[s] << " at day " << day << " outside [" << lo << ", "
                   << enrolled << "] implied by enrollment";
                r.child("info").at(s).error("", os.str());
            }
        }
    }
    diag.throw_if_any("plan");
    return p;
}

nlohmann::json plan_to_json(const Plan& p) {
    nlohmann::json days = nlohmann::json::array();
    for (int d : p.analysis_days) days.push_back(d == kAnalysisEnd ? nlohmann::json("end") : nlohmann::json(d));
    nlohmann::json est = nlohmann::json::array();
    for (auto k : p.estimators) est.push_back(to_string(k));
    nlohmann::json control{{"kind", "none"}};
    if (p.control.kind == ControlSpec::Kind::Fixed) control = {{"kind", "fixed"}, {"value", p.control.value}};
    if (p.control.kind == ControlSpec::Kind::Arm) control = {{"kind", "arm"}, {"action", p.control.arm_action}};
    nlohmann::json j{{"schema_version", 1},
                     {"name", p.name},
                     {"n", p.n},
                     {"enrollment", enrollment_to_json(p.enrollment)},
                     {"timing", {{"gap_jitter_days", p.timing.gap_jitter_days}}},
                     {"analysis_days", days},
                     {"control", control},
                     {"delta", p.delta},
                     {"alpha", p.alpha},
                     {"boundary", to_string(p.family)},
                     {"estimators", est},
                     {"covariance", to_string(p.covariance)},
                     {"estimate_propensities", p.estimate_propensities},
                     {"null", {{"source", p.null_source}, {"reps", p.null_reps}, {"n", p.null_n}}},
                     {"pilot_reps", p.pilot_reps},
                     {"power", p.power},
                     {"reps", p.reps},
                     {"seed", p.seed}};
    if (!p.q.empty()) j["q_features"] = qspec_to_json(p.q);
    if (!p.regimes.empty()) j["regimes"] = p.regimes;
    if (!p.info.empty()) j["info"] = p.info;
    return j;
}

ConfigBundle validate_config(const nlohmann::json& design, const nlohmann::json* model, const nlohmann::json& plan,
                             const std::string& base_dir) {
    Diagnostics diag;
    ConfigBundle b;
    b.design_json = design;
    b.plan_json = plan;
    bool design_ok = false;
    collect(diag, "design.json", [&] {
        b.design = design_from_json(design);
        design_ok = true;
    });
    if (!design_ok) diag.throw_if_any("configuration");
    if (model) {
        b.model_json = *model;
        collect(diag, "model.json", [&] { b.model = model_from_json(*model, b.design); });
    }
    collect(diag, "plan.json", [&] { b.plan = plan_from_json(plan, b.design, base_dir); });
    diag.throw_if_any("configuration");
    if (b.plan.estimate_propensities)
        b.warnings.push_back("propensities are estimated; the known design values are ignored");
    return b;
}

ConfigBundle load_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path base(dir);
    auto design = read_json_file((base / "design.json").string());
    auto plan = read_json_file((base / "plan.json").string());
    std::optional<nlohmann::json> model;
    if (fs::exists(base / "model.json")) model = read_json_file((base / "model.json").string());
    return validate_config(design, model ? &*model : nullptr, plan, base.string());
}

std::pair<double, double> info_bracket(const SmartDesign& design, const EnrollmentProcess& e, int day) {
    auto gaps = design.gaps();
    int total = std::accumulate(gaps.begin(), gaps.end(), 0);
    return {enrollment_cdf(e, day - total), enrollment_cdf(e, day)};
}

int trial_end_day(const SmartDesign& design, const EnrollmentProcess& e, const TimingSpec& t) {
    auto gaps = design.gaps();
    int total = std::accumulate(gaps.begin(), gaps.end(), 0);
    return last_enrollment_day(e) + total + t.gap_jitter_days * static_cast<int>(gaps.size());
}

EstimatorOptions estimator_options(const Plan& p, EstimatorKind kind) {
    EstimatorOptions o;
    o.kind = kind;
    o.estimate_propensities = p.estimate_propensities;
    if (kind != EstimatorKind::IPWE) o.q = p.q;
    o.covariance = p.covariance;
    o.seed = p.seed;
    o.control = p.control;
    return o;
}

ExperimentConfig experiment_config(const ConfigBundle& b) {
    if (!b.model) throw ValidationError("simulation needs a generative model (model.json)");
    ExperimentConfig c;
    c.design = b.design;
    c.model = *b.model;
    c.enrollment = b.plan.enrollment;
    c.timing = b.plan.timing;
    c.n = b.plan.n;
    c.analysis_days = b.plan.analysis_days;
    c.regimes = select_regimes(b.design, b.plan.regimes);
    c.delta = b.plan.delta;
    c.reps = b.plan.reps;
    c.seed = b.plan.seed;
    for (auto k : b.plan.estimators) c.arms.push_back({to_string(k), estimator_options(b.plan, k), {}, {}});
    return c;
}

nlohmann::json RunManifest::to_json() const {
    return {{"command", command}, {"config_digest", digest}, {"seed", seed}, {"version", version},
            {"wall_seconds", wall_seconds}};
}

std::string config_digest(const nlohmann::json& j) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string library_version() { return SMARTMON_VERSION; }

}  // namespace smartmon

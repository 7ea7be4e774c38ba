#include "smartmon/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "smartmon/diagnostics.hpp"
#include "smartmon/error.hpp"
#include "smartmon/quadrature.hpp"

namespace smartmon {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kHermiteNodes = 40;
constexpr int kLegendreNodes = 20;

double expit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

bool var_less(const VarRef& a, const VarRef& b) {
    return std::tie(a.kind, a.stage, a.index) < std::tie(b.kind, b.stage, b.index);
}
struct VarLess {
    bool operator()(const VarRef& a, const VarRef& b) const { return var_less(a, b); }
};
using VarSet = std::set<VarRef, VarLess>;

void collect_deps(const VarLayout& layout, const VarRef& v, VarSet& out) {
    if (v.kind == VarRef::Kind::Derived) {
        for (auto& t : layout.derived()[v.index].terms)
            for (auto& f : t.term.factors) collect_deps(layout, f.var, out);
        return;
    }
    out.insert(v);
}

void collect_deps(const VarLayout& layout, const std::vector<LinearTerm>& terms, VarSet& out, bool skip_zero) {
    for (auto& t : terms) {
        if (skip_zero && t.coef == 0.0 && !t.free) continue;
        for (auto& f : t.term.factors) collect_deps(layout, f.var, out);
    }
}

void collect_deps(const VarLayout& layout, const Dist& d, VarSet& out) {
    switch (d.kind) {
        case Dist::Kind::Normal: collect_deps(layout, d.mean, out, false); break;
        case Dist::Kind::Bernoulli: collect_deps(layout, d.logit, out, false); break;
        case Dist::Kind::Uniform: break;
        case Dist::Kind::Switch:
            collect_deps(layout, d.on, out);
            for (auto& c : d.cases) collect_deps(layout, c.second, out);
            break;
    }
}

const Dist& resolve(const VarLayout& layout, const Dist& d, const RowView& row) {
    if (d.kind != Dist::Kind::Switch) return d;
    int code = static_cast<int>(std::lround(layout.value(d.on, row)));
    for (auto& c : d.cases)
        if (c.first == code) return resolve(layout, c.second, row);
    throw ValidationError("no case for " + d.on_name + " = " + std::to_string(code));
}

double sample(const VarLayout& layout, const Dist& d, const RowView& row, Rng& rng) {
    const Dist& r = resolve(layout, d, row);
    switch (r.kind) {
        case Dist::Kind::Normal: {
            std::normal_distribution<double> z(0.0, 1.0);
            return layout.eval(r.mean, row) + std::sqrt(r.var) * z(rng);
        }
        case Dist::Kind::Bernoulli: {
            double p = r.logit.empty() ? r.p : expit(layout.eval(r.logit, row));
            std::uniform_real_distribution<double> u(0.0, 1.0);
            return u(rng) < p ? 1.0 : 0.0;
        }
        case Dist::Kind::Uniform: {
            std::uniform_real_distribution<double> u(r.lo, r.hi);
            return u(rng);
        }
        case Dist::Kind::Switch: break;
    }
    return kNaN;
}

Code draw_action(const SmartDesign& design, int k, const std::vector<std::vector<double>>& x,
                 const std::vector<int>& a, Rng& rng) {
    const auto& fe = design.feasible(k, design.key(k, x, a));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double draw = u(rng), acc = 0.0;
    for (size_t o = 0; o < fe.options.size(); ++o) {
        acc += fe.propensities[o];
        if (draw < acc) return fe.options[o];
    }
    return fe.options.back();
}

int jitter(int gap, const TimingSpec& t, Rng& rng) {
    if (t.gap_jitter_days <= 0) return gap;
    std::uniform_int_distribution<int> u(gap - t.gap_jitter_days, gap + t.gap_jitter_days);
    return std::max(1, u(rng));
}

}  // namespace

GenerativeModel::GenerativeModel(const SmartDesign& design, std::vector<CovariateSpec> covariates,
                                 std::vector<LinearTerm> outcome_mean, double outcome_sd)
    : outcome_mean_(std::move(outcome_mean)), outcome_sd_(outcome_sd) {
    const auto& layout = design.layout();
    if (!(outcome_sd >= 0.0)) throw ValidationError("outcome_sd must be non-negative");
    for (auto& c : covariates) c.ref = layout.lookup(c.name);
    std::stable_sort(covariates.begin(), covariates.end(),
                     [](const CovariateSpec& a, const CovariateSpec& b) { return a.ref.stage < b.ref.stage; });
    // Every design covariate needs exactly one spec, and specs may only look backwards.
    VarSet generated;
    size_t next = 0;
    for (int k = 1; k <= design.num_stages(); ++k) {
        for (size_t j = 0; j < design.stage(k).covariates.size(); ++j) {
            VarRef want{VarRef::Kind::Covariate, k, static_cast<int>(j)};
            auto it = std::find_if(covariates.begin(), covariates.end(), [&](const CovariateSpec& c) {
                return !var_less(c.ref, want) && !var_less(want, c.ref);
            });
            if (it == covariates.end())
                throw ValidationError("no distribution for covariate '" + layout.name_of(want) + "'");
        }
        for (; next < covariates.size() && covariates[next].ref.stage == k; ++next) {
            auto& c = covariates[next];
            if (c.ref.kind != VarRef::Kind::Covariate)
                throw ValidationError("'" + c.name + "' is not a covariate");
            if (generated.count(c.ref)) throw ValidationError("duplicate distribution for '" + c.name + "'");
            VarSet deps;
            collect_deps(layout, c.dist, deps);
            for (auto& d : deps)
                if (!generated.count(d))
                    throw ValidationError("distribution of '" + c.name + "' uses '" + layout.name_of(d) +
                                          "' before it is generated");
            generated.insert(c.ref);
        }
        generated.insert({VarRef::Kind::Action, k, 0});
    }
    VarSet deps;
    collect_deps(layout, outcome_mean_, deps, false);
    for (auto& d : deps)
        if (d.kind == VarRef::Kind::Outcome) throw ValidationError("outcome mean cannot use Y");
    covariates_ = std::move(covariates);
}

int GenerativeModel::num_free() const {
    int n = 0;
    for (auto& t : outcome_mean_) n += t.free ? 1 : 0;
    return n;
}

void validate_enrollment(const EnrollmentProcess& e) {
    if (e.kind == EnrollmentProcess::Kind::Uniform) {
        if (e.hi < e.lo) throw ValidationError("enrollment support is empty");
        return;
    }
    if (e.periods.empty() || e.periods.size() != e.probs.size())
        throw ValidationError("enrollment periods and probabilities must be non-empty and aligned");
    double s = 0.0;
    for (size_t i = 0; i < e.periods.size(); ++i) {
        if (e.periods[i].second < e.periods[i].first) throw ValidationError("enrollment period is empty");
        if (i && e.periods[i].first <= e.periods[i - 1].second)
            throw ValidationError("enrollment periods must be ordered and disjoint");
        if (e.probs[i] < 0) throw ValidationError("enrollment probability is negative");
        s += e.probs[i];
    }
    if (std::abs(s - 1.0) > 1e-9) throw ValidationError("enrollment probabilities must sum to 1");
}

int draw_enrollment_day(const EnrollmentProcess& e, Rng& rng) {
    if (e.kind == EnrollmentProcess::Kind::Uniform) return std::uniform_int_distribution<int>(e.lo, e.hi)(rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double draw = u(rng), acc = 0.0;
    size_t p = e.periods.size() - 1;
    for (size_t i = 0; i < e.probs.size(); ++i) {
        acc += e.probs[i];
        if (draw < acc) {
            p = i;
            break;
        }
    }
    while (e.probs[p] == 0.0 && p > 0) --p;
    return std::uniform_int_distribution<int>(e.periods[p].first, e.periods[p].second)(rng);
}

std::vector<int> draw_enrollment(const EnrollmentProcess& e, int n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("enrollment needs n >= 1");
    validate_enrollment(e);
    Rng rng = make_rng(seed);
    std::vector<int> out(n);
    for (auto& d : out) d = draw_enrollment_day(e, rng);
    return out;
}

Trajectory simulate_trajectory(const GenerativeModel& model, const SmartDesign& design, Rng& rng, int enroll_day,
                               const TimingSpec& timing, const Regime* forced) {
    const auto& layout = design.layout();
    const int K = design.num_stages();
    Trajectory tr;
    tr.enroll_day = enroll_day;
    for (int k = 1; k <= K; ++k) tr.x.emplace_back(design.stage(k).covariates.size(), kNaN);
    size_t next = 0;
    const auto& specs = model.covariates();
    int day = enroll_day;
    for (int k = 1; k <= K; ++k) {
        tr.stage_days.push_back(day);
        for (; next < specs.size() && specs[next].ref.stage == k; ++next) {
            RowView row{tr.x, tr.a, nullptr};
            tr.x[k - 1][specs[next].ref.index] = sample(layout, specs[next].dist, row, rng);
        }
        Code a;
        if (forced) {
            a = regime_action(design, *forced, k, design.key(k, tr.x, tr.a));
        } else {
            a = draw_action(design, k, tr.x, tr.a, rng);
        }
        tr.a.push_back(a);
        day += jitter(design.stage(k).gap_days, timing, rng);
    }
    tr.outcome_day = day;
    RowView row{tr.x, tr.a, nullptr};
    double mu = layout.eval(model.outcome_mean(), row);
    std::normal_distribution<double> z(0.0, 1.0);
    double eps = z(rng);
    tr.y = mu + model.outcome_sd() * eps;
    return tr;
}

std::vector<double> regime_term_expectations(const GenerativeModel& model, const SmartDesign& design,
                                             const Regime& regime) {
    const auto& layout = design.layout();
    const int K = design.num_stages();
    const auto& specs = model.covariates();
    const auto& terms = model.outcome_mean();

    // Only integrate over variables the outcome or the regime can see.
    VarSet needed;
    collect_deps(layout, terms, needed, true);
    for (int k = 1; k <= K; ++k)
        if (design.stage(k).response_index >= 0)
            needed.insert({VarRef::Kind::Covariate, k, design.stage(k).response_index});
    for (auto it = specs.rbegin(); it != specs.rend(); ++it)
        if (needed.count(it->ref)) collect_deps(layout, it->dist, needed);

    const QuadRule hermite = gauss_hermite_normal(kHermiteNodes);
    std::vector<double> acc(terms.size(), 0.0);
    std::vector<std::vector<double>> x;
    for (int k = 1; k <= K; ++k) x.emplace_back(design.stage(k).covariates.size(), kNaN);
    std::vector<int> a;

    // Generation sequence: stage-k covariates then A_k.
    struct Step {
        int spec = -1;  // index into specs, or -1 for an action
        int stage = 0;
    };
    std::vector<Step> seq;
    size_t next = 0;
    for (int k = 1; k <= K; ++k) {
        for (; next < specs.size() && specs[next].ref.stage == k; ++next)
            if (needed.count(specs[next].ref)) seq.push_back({static_cast<int>(next), k});
        seq.push_back({-1, k});
    }

    auto recurse = [&](auto&& self, size_t pos, double w) -> void {
        if (w == 0.0) return;
        if (pos == seq.size()) {
            RowView row{x, a, nullptr};
            for (size_t j = 0; j < terms.size(); ++j)
                if (terms[j].coef != 0.0 || terms[j].free) acc[j] += w * layout.eval(terms[j].term, row);
            return;
        }
        const Step& st = seq[pos];
        if (st.spec < 0) {
            a.push_back(regime_action(design, regime, st.stage, design.key(st.stage, x, a)));
            self(self, pos + 1, w);
            a.pop_back();
            return;
        }
        const auto& spec = specs[st.spec];
        double& slot = x[spec.ref.stage - 1][spec.ref.index];
        RowView row{x, a, nullptr};
        const Dist& d = resolve(layout, spec.dist, row);
        switch (d.kind) {
            case Dist::Kind::Normal: {
                double mu = layout.eval(d.mean, row), sd = std::sqrt(d.var);
                for (size_t i = 0; i < hermite.nodes.size(); ++i) {
                    slot = mu + sd * hermite.nodes[i];
                    self(self, pos + 1, w * hermite.weights[i]);
                }
                break;
            }
            case Dist::Kind::Bernoulli: {
                double p = d.logit.empty() ? d.p : expit(layout.eval(d.logit, row));
                slot = 1.0;
                self(self, pos + 1, w * p);
                slot = 0.0;
                self(self, pos + 1, w * (1.0 - p));
                break;
            }
            case Dist::Kind::Uniform: {
                QuadRule q = gauss_legendre_uniform(kLegendreNodes, d.lo, d.hi);
                for (size_t i = 0; i < q.nodes.size(); ++i) {
                    slot = q.nodes[i];
                    self(self, pos + 1, w * q.weights[i]);
                }
                break;
            }
            case Dist::Kind::Switch: break;
        }
        slot = kNaN;
    };
    recurse(recurse, 0, 1.0);
    return acc;
}

TrueValue true_value(const GenerativeModel& model, const SmartDesign& design, const Regime& regime) {
    auto e = regime_term_expectations(model, design, regime);
    double v = 0.0;
    for (size_t j = 0; j < e.size(); ++j) v += model.outcome_mean()[j].coef * e[j];
    return {v, 0.0};
}

TrueValue true_value_mc(const GenerativeModel& model, const SmartDesign& design, const Regime& regime,
                        int mc_reps, std::uint64_t seed) {
    if (mc_reps < 2) throw ValidationError("true_value_mc needs at least 2 replications");
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < mc_reps; ++i) {
        Rng rng = patient_rng(seed, 0, static_cast<std::uint64_t>(i));
        double y = simulate_trajectory(model, design, rng, 0, {}, &regime).y;
        s += y;
        ss += y * y;
    }
    double m = s / mc_reps;
    double var = std::max(0.0, (ss - mc_reps * m * m) / (mc_reps - 1));
    return {m, std::sqrt(var / mc_reps)};
}

GenerativeModel calibrate_effects(const GenerativeModel& model, const SmartDesign& design,
                                  const std::vector<double>& targets) {
    const auto& regimes = design.regimes();
    if (targets.size() != regimes.size())
        throw ValidationError("need one target per regime (" + std::to_string(regimes.size()) + ")");
    const auto& terms = model.outcome_mean();
    std::vector<int> free;
    for (size_t j = 0; j < terms.size(); ++j)
        if (terms[j].free) free.push_back(static_cast<int>(j));
    if (free.empty()) throw ValidationError("model has no free coefficients to calibrate");
    const int L = static_cast<int>(regimes.size()), F = static_cast<int>(free.size());
    Eigen::MatrixXd A(L, F);
    Eigen::VectorXd b(L);
    for (int l = 0; l < L; ++l) {
        auto e = regime_term_expectations(model, design, regimes[l]);
        double fixed = 0.0;
        for (size_t j = 0; j < terms.size(); ++j)
            if (!terms[j].free) fixed += terms[j].coef * e[j];
        for (int f = 0; f < F; ++f) A(l, f) = e[free[f]];
        b(l) = targets[l] - fixed;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    if (rank < F)
        throw ValidationError("calibration under-determined: rank " + std::to_string(rank) + " for " +
                              std::to_string(F) + " free coefficients (rank deficiency " +
                              std::to_string(F - rank) + ")");
    Eigen::VectorXd beta = qr.solve(b);
    double resid = (A * beta - b).cwiseAbs().maxCoeff();
    if (resid > 1e-8)
        throw ValidationError("calibration infeasible: targets unreachable with the free coefficients "
                              "(max residual " + std::to_string(resid) + ")");
    GenerativeModel out = model;
    for (int f = 0; f < F; ++f) out.outcome_mean()[free[f]].coef = beta(f);
    return out;
}

// ---- JSON ----

namespace {

std::vector<LinearTerm> read_terms(const JsonReader& r, const VarLayout& layout) {
    std::vector<LinearTerm> out;
    if (!r.is_array()) {
        r.error("", "expected an array of {coef, term}");
        return out;
    }
    for (size_t i = 0; i < r.size(); ++i) {
        auto t = r.at(i);
        LinearTerm lt;
        lt.coef = t.number("coef", 0.0);
        lt.free = t.boolean("free", false);
        std::string text = t.string("term");
        try {
            lt.term = layout.parse_monomial(text);
        } catch (const ValidationError& e) {
            t.error("term", e.what());
        }
        out.push_back(lt);
    }
    return out;
}

Dist read_dist(const JsonReader& r, const VarLayout& layout) {
    Dist d;
    std::string kind = r.string("dist");
    if (kind == "normal") {
        d.kind = Dist::Kind::Normal;
        if (r.raw().contains("mean") && r.raw().at("mean").is_number()) {
            LinearTerm lt;
            lt.coef = r.number("mean");
            lt.term = layout.parse_monomial("1");
            d.mean = {lt};
        } else {
            d.mean = read_terms(r.child("mean"), layout);
        }
        d.var = r.number("var");
        if (!(d.var >= 0)) r.error("var", "variance must be non-negative");
    } else if (kind == "bernoulli") {
        d.kind = Dist::Kind::Bernoulli;
        if (r.has("logit")) {
            d.logit = read_terms(r.child("logit"), layout);
        } else {
            d.p = r.number("p");
            if (d.p < 0 || d.p > 1) r.error("p", "probability must lie in [0, 1]");
        }
    } else if (kind == "uniform") {
        d.kind = Dist::Kind::Uniform;
        d.lo = r.number("lo");
        d.hi = r.number("hi");
        if (!(d.hi > d.lo)) r.error("hi", "uniform needs hi > lo");
    } else if (kind == "switch") {
        d.kind = Dist::Kind::Switch;
        d.on_name = r.string("on");
        try {
            d.on = layout.lookup(d.on_name);
        } catch (const ValidationError& e) {
            r.error("on", e.what());
        }
        auto cases = r.child("cases");
        if (!cases.is_array()) r.error("cases", "expected an array of {value, ...distribution}");
        for (size_t i = 0; i < cases.size(); ++i)
            d.cases.push_back({cases.at(i).integer("value"), read_dist(cases.at(i), layout)});
    } else {
        r.error("dist", "unknown distribution '" + kind + "' (normal, bernoulli, uniform, switch)");
    }
    return d;
}

nlohmann::json terms_json(const std::vector<LinearTerm>& terms) {
    nlohmann::json a = nlohmann::json::array();
    for (auto& t : terms) {
        nlohmann::json o{{"coef", t.coef}, {"term", t.term.text.empty() ? "1" : t.term.text}};
        if (t.free) o["free"] = true;
        a.push_back(o);
    }
    return a;
}

nlohmann::json dist_json(const Dist& d) {
    switch (d.kind) {
        case Dist::Kind::Normal: return {{"dist", "normal"}, {"mean", terms_json(d.mean)}, {"var", d.var}};
        case Dist::Kind::Bernoulli:
            if (d.logit.empty()) return {{"dist", "bernoulli"}, {"p", d.p}};
            return {{"dist", "bernoulli"}, {"logit", terms_json(d.logit)}};
        case Dist::Kind::Uniform: return {{"dist", "uniform"}, {"lo", d.lo}, {"hi", d.hi}};
        case Dist::Kind::Switch: {
            nlohmann::json cases = nlohmann::json::array();
            for (auto& c : d.cases) {
                auto o = dist_json(c.second);
                o["value"] = c.first;
                cases.push_back(o);
            }
            return {{"dist", "switch"}, {"on", d.on_name}, {"cases", cases}};
        }
    }
    return {};
}

}  // namespace

GenerativeModel model_from_json(const nlohmann::json& j, const SmartDesign& design) {
    Diagnostics diag;
    JsonReader root(j, diag);
    root.check_schema_version();
    const auto& layout = design.layout();
    std::vector<CovariateSpec> specs;
    auto cov = root.child("covariates");
    if (!cov.is_array()) root.error("covariates", "expected an array");
    for (size_t i = 0; i < cov.size(); ++i) {
        auto c = cov.at(i);
        CovariateSpec s;
        s.name = c.string("name");
        if (!layout.has(s.name)) c.error("name", "'" + s.name + "' is not a design covariate");
        s.dist = read_dist(c, layout);
        specs.push_back(std::move(s));
    }
    auto out = root.child("outcome");
    auto mean = read_terms(out.child("mean"), layout);
    double sd = out.number("sd");
    if (!(sd >= 0)) out.error("sd", "outcome sd must be non-negative");
    diag.throw_if_any("model");
    try {
        return GenerativeModel(design, std::move(specs), std::move(mean), sd);
    } catch (const ValidationError& e) {
        diag.add("/covariates", e.what());
        diag.throw_if_any("model");
    }
    return {};
}

nlohmann::json model_to_json(const GenerativeModel& m, const SmartDesign& design) {
    nlohmann::json cov = nlohmann::json::array();
    for (auto& c : m.covariates()) {
        auto o = dist_json(c.dist);
        o["name"] = c.name;
        cov.push_back(o);
    }
    (void)design;
    return {{"schema_version", 1},
            {"covariates", cov},
            {"outcome", {{"mean", terms_json(m.outcome_mean())}, {"sd", m.outcome_sd()}}}};
}

EnrollmentProcess enrollment_from_json(const nlohmann::json& j) {
    Diagnostics diag;
    JsonReader r(j, diag, "/enrollment");
    EnrollmentProcess e;
    std::string kind = r.string("kind", "uniform");
    if (kind == "uniform") {
        e.kind = EnrollmentProcess::Kind::Uniform;
        e.lo = r.integer("lo", 0);
        e.hi = r.integer("hi", 1000);
    } else if (kind == "periods") {
        e.kind = EnrollmentProcess::Kind::Periods;
        auto p = r.child("periods");
        for (size_t i = 0; i < p.size(); ++i) {
            auto b = p.at(i).raw();
            if (!b.is_array() || b.size() != 2) {
                p.at(i).error("", "period must be [first_day, last_day]");
                continue;
            }
            e.periods.push_back({b[0].get<int>(), b[1].get<int>()});
        }
        e.probs = r.numbers("probs");
    } else {
        r.error("kind", "unknown enrollment kind '" + kind + "'");
    }
    diag.throw_if_any("enrollment");
    validate_enrollment(e);
    return e;
}

nlohmann::json enrollment_to_json(const EnrollmentProcess& e) {
    if (e.kind == EnrollmentProcess::Kind::Uniform) return {{"kind", "uniform"}, {"lo", e.lo}, {"hi", e.hi}};
    nlohmann::json p = nlohmann::json::array();
    for (auto& pr : e.periods) p.push_back({pr.first, pr.second});
    return {{"kind", "periods"}, {"periods", p}, {"probs", e.probs}};
}

}  // namespace smartmon

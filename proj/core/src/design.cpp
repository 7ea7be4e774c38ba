#include "smartmon/design.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "smartmon/diagnostics.hpp"
#include "smartmon/error.hpp"

namespace smartmon {

namespace {

std::string key_text(int k, const HistoryKey& key) {
    std::string s = "stage " + std::to_string(k);
    if (key.prior != kAny) s += ", prior " + std::to_string(key.prior);
    if (key.response != kAny) s += ", response " + std::to_string(key.response);
    return s;
}

bool matches(int pattern, int value) { return pattern == kAny || pattern == value; }

std::vector<int> response_values(const StageSpec& st) {
    if (st.response_index < 0) return {kAny};
    return {0, 1};
}

void validate_stages(const std::vector<StageSpec>& stages, Diagnostics& diag) {
    if (stages.empty()) diag.add("/stages", "design needs at least one stage");
    for (size_t s = 0; s < stages.size(); ++s) {
        const auto& st = stages[s];
        const std::string p = "/stages/" + std::to_string(s);
        const int k = static_cast<int>(s) + 1;
        if (st.treatments.empty()) diag.add(p + "/treatments", "treatment set is empty");
        if (st.gap_days <= 0) diag.add(p + "/gap_days", "stage gap must be positive");
        if (st.feasible.empty()) diag.add(p + "/feasible", "feasible-set table is empty");
        if (!st.response_variable.empty() && st.response_index < 0)
            diag.add(p + "/response_variable", "response variable not among the stage covariates");
        if (k == 1 && !st.response_variable.empty())
            diag.add(p + "/response_variable", "stage 1 cannot have a response variable");
        std::set<std::pair<int, int>> seen;
        for (size_t e = 0; e < st.feasible.size(); ++e) {
            const auto& fe = st.feasible[e];
            const std::string q = p + "/feasible/" + std::to_string(e);
            if (!seen.insert({fe.prior, fe.response}).second) diag.add(q, "duplicate feasible-set key");
            if (k == 1 && (fe.prior != kAny || fe.response != kAny))
                diag.add(q, "stage 1 entries cannot be keyed on history");
            if (fe.response != kAny && st.response_index < 0)
                diag.add(q + "/response", "entry keyed on response but the stage has no response variable");
            if (fe.response != kAny && fe.response != 0 && fe.response != 1)
                diag.add(q + "/response", "response must be 0 or 1");
            if (k > 1 && fe.prior != kAny &&
                (fe.prior < 0 || fe.prior >= static_cast<int>(stages[s - 1].treatments.size())))
                diag.add(q + "/prior", "prior treatment code out of range");
            if (fe.options.empty()) diag.add(q + "/options", "feasible set is empty");
            if (fe.options.size() != fe.propensities.size())
                diag.add(q + "/propensities", "one propensity per option required");
            std::set<int> opts;
            for (size_t o = 0; o < fe.options.size(); ++o) {
                if (fe.options[o] < 0 || fe.options[o] >= static_cast<int>(st.treatments.size()))
                    diag.add(q + "/options/" + std::to_string(o), "treatment code out of range");
                if (!opts.insert(fe.options[o]).second)
                    diag.add(q + "/options/" + std::to_string(o), "duplicate option");
            }
            double sum = 0.0;
            for (size_t o = 0; o < fe.propensities.size(); ++o) {
                if (!(fe.propensities[o] > 0.0))
                    diag.add(q + "/propensities/" + std::to_string(o), "propensity must be positive");
                sum += fe.propensities[o];
            }
            if (std::abs(sum - 1.0) > 1e-12)
                diag.add(q + "/propensities", "propensities sum to " + std::to_string(sum) + ", not 1");
        }
    }
}

}  // namespace

SmartDesign::SmartDesign(std::string name, std::vector<StageSpec> stages, std::vector<DerivedVar> derived,
                         std::vector<Regime> regimes)
    : name_(std::move(name)), stages_(std::move(stages)), derived_spec_(std::move(derived)) {
    for (auto& st : stages_) {
        st.response_index = -1;
        for (size_t j = 0; j < st.covariates.size(); ++j)
            if (!st.response_variable.empty() && st.covariates[j] == st.response_variable)
                st.response_index = static_cast<int>(j);
    }
    Diagnostics diag;
    validate_stages(stages_, diag);
    diag.throw_if_any("design");
    std::vector<std::vector<std::string>> cov;
    for (auto& st : stages_) cov.push_back(st.covariates);
    layout_ = VarLayout(cov, derived_spec_);
    if (regimes.empty()) {
        regimes_ = enumerate_embedded_regimes(*this);
    } else {
        for (auto& r : regimes) check_regime(*this, r);
        regimes_ = std::move(regimes);
    }
}

std::vector<int> SmartDesign::gaps() const {
    std::vector<int> g;
    for (auto& st : stages_) g.push_back(st.gap_days);
    return g;
}

HistoryKey SmartDesign::key(int k, std::span<const std::vector<double>> x, std::span<const Code> a) const {
    HistoryKey key;
    if (k >= 2) {
        if (static_cast<int>(a.size()) < k - 1) throw ValidationError("insufficient history");
        key.prior = a[k - 2];
    }
    const auto& st = stage(k);
    if (st.response_index >= 0) {
        if (static_cast<int>(x.size()) < k) throw ValidationError("insufficient history");
        key.response = static_cast<int>(std::lround(x[k - 1][st.response_index]));
    }
    return key;
}

int SmartDesign::entry_index(int k, const HistoryKey& key) const {
    const auto& st = stage(k);
    int best = -1, best_score = -1;
    for (size_t e = 0; e < st.feasible.size(); ++e) {
        const auto& fe = st.feasible[e];
        if (!matches(fe.prior, key.prior) || !matches(fe.response, key.response)) continue;
        int score = (fe.prior != kAny ? 2 : 0) + (fe.response != kAny ? 1 : 0);
        if (score > best_score) {
            best = static_cast<int>(e);
            best_score = score;
        }
    }
    if (best < 0) throw ValidationError("no feasible-set entry for " + key_text(k, key));
    return best;
}

const FeasibleEntry& SmartDesign::feasible(int k, const HistoryKey& key) const {
    return stage(k).feasible[entry_index(k, key)];
}

double SmartDesign::propensity(int k, const HistoryKey& key, Code a) const {
    const auto& fe = feasible(k, key);
    for (size_t o = 0; o < fe.options.size(); ++o)
        if (fe.options[o] == a) return fe.propensities[o];
    return 0.0;
}

std::string SmartDesign::treatment_name(int k, Code c) const {
    const auto& t = stage(k).treatments;
    if (c < 0 || c >= static_cast<int>(t.size())) return std::to_string(c);
    return t[c];
}

Code regime_action(const SmartDesign& design, const Regime& regime, int k, const HistoryKey& key) {
    const auto& fe = design.feasible(k, key);
    if (fe.options.size() == 1) return fe.options.front();
    const RegimeRule* best = nullptr;
    int best_score = -1;
    for (auto& r : regime.rules) {
        if (r.stage != k || !matches(r.prior, key.prior) || !matches(r.response, key.response)) continue;
        int score = (r.prior != kAny ? 2 : 0) + (r.response != kAny ? 1 : 0);
        if (score > best_score) {
            best = &r;
            best_score = score;
        }
    }
    if (!best) throw ValidationError("regime " + regime.label + " has no rule for " + key_text(k, key));
    if (std::find(fe.options.begin(), fe.options.end(), best->action) == fe.options.end())
        throw ValidationError("regime violates feasible set: regime " + regime.label + " assigns " +
                              std::to_string(best->action) + " at " + key_text(k, key));
    return best->action;
}

Code regime_action(const SmartDesign& design, const Regime& regime, const History& history) {
    const int k = static_cast<int>(history.a.size()) + 1;
    if (k > design.num_stages()) throw ValidationError("history already has every action");
    return regime_action(design, regime, k, design.key(k, history.x, history.a));
}

bool consistency_indicator(const SmartDesign& design, const Regime& regime, const History& history, int k) {
    if (k < 0 || k > static_cast<int>(history.a.size()) || k > static_cast<int>(history.x.size()))
        throw ValidationError("insufficient history");
    for (int j = 1; j <= k; ++j) {
        HistoryKey key = design.key(j, history.x, history.a);
        if (history.a[j - 1] != regime_action(design, regime, j, key)) return false;
    }
    return true;
}

void check_regime(const SmartDesign& design, const Regime& regime) {
    // Walk every reachable key and make sure the regime answers feasibly.
    std::vector<int> reachable{kAny};
    for (int k = 1; k <= design.num_stages(); ++k) {
        std::vector<int> next;
        for (int p : reachable) {
            for (int r : response_values(design.stage(k))) {
                HistoryKey key{k == 1 ? kAny : p, r};
                Code a = regime_action(design, regime, k, key);
                if (std::find(next.begin(), next.end(), a) == next.end()) next.push_back(a);
            }
        }
        reachable = next;
    }
}

std::vector<Regime> enumerate_embedded_regimes(const SmartDesign& design) {
    const int K = design.num_stages();
    for (int k = 2; k <= K; ++k) {
        for (auto& fe : design.stage(k).feasible)
            if (fe.response != kAny && design.stage(k).response_index < 0)
                throw ValidationError("cannot enumerate; supply regimes explicitly");
    }
    std::vector<Regime> out;
    struct Frame {
        std::vector<RegimeRule> rules;
        std::vector<int> reachable;
    };
    std::vector<Frame> frontier{{{}, {kAny}}};
    for (int k = 1; k <= K; ++k) {
        std::vector<Frame> next;
        for (auto& fr : frontier) {
            std::vector<HistoryKey> keys;
            for (int p : fr.reachable)
                for (int r : response_values(design.stage(k))) keys.push_back({k == 1 ? kAny : p, r});
            std::vector<const FeasibleEntry*> entries;
            for (auto& key : keys) entries.push_back(&design.feasible(k, key));
            std::vector<size_t> idx(keys.size(), 0);
            while (true) {
                Frame f{fr.rules, {}};
                for (size_t i = 0; i < keys.size(); ++i) {
                    Code a = entries[i]->options[idx[i]];
                    f.rules.push_back({k, keys[i].prior, keys[i].response, a});
                    if (std::find(f.reachable.begin(), f.reachable.end(), a) == f.reachable.end())
                        f.reachable.push_back(a);
                }
                next.push_back(std::move(f));
                // odometer: the last key varies fastest
                int i = static_cast<int>(keys.size()) - 1;
                while (i >= 0) {
                    if (++idx[i] < entries[i]->options.size()) break;
                    idx[i] = 0;
                    --i;
                }
                if (i < 0) break;
            }
        }
        frontier = std::move(next);
    }
    int label = 1;
    for (auto& fr : frontier) {
        Regime r;
        r.label = std::to_string(label++);
        r.rules = fr.rules;
        std::string desc = "(";
        for (size_t i = 0; i < r.rules.size(); ++i) {
            if (i) desc += ", ";
            desc += design.treatment_name(r.rules[i].stage, r.rules[i].action);
        }
        r.description = desc + ")";
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

int opt_code(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return kAny;
    return j.at(key).get<int>();
}

}  // namespace

Regime regime_from_json(const nlohmann::json& j) {
    Regime r;
    r.label = j.value("label", std::string{});
    r.description = j.value("description", std::string{});
    for (auto& rule : j.at("rules"))
        r.rules.push_back({rule.at("stage").get<int>(), opt_code(rule, "prior"), opt_code(rule, "response"),
                           rule.at("action").get<int>()});
    return r;
}

nlohmann::json regime_to_json(const Regime& r) {
    nlohmann::json rules = nlohmann::json::array();
    for (auto& rule : r.rules) {
        nlohmann::json o{{"stage", rule.stage}, {"action", rule.action}};
        if (rule.prior != kAny) o["prior"] = rule.prior;
        if (rule.response != kAny) o["response"] = rule.response;
        rules.push_back(o);
    }
    nlohmann::json o{{"label", r.label}, {"rules", rules}};
    if (!r.description.empty()) o["description"] = r.description;
    return o;
}

SmartDesign design_from_json(const nlohmann::json& j) {
    Diagnostics diag;
    JsonReader root(j, diag);
    root.check_schema_version();
    std::string name = root.string("name", "");
    std::vector<StageSpec> stages;
    auto st = root.child("stages");
    if (!st.is_array()) root.error("stages", "expected an array of stages");
    for (size_t s = 0; s < st.size(); ++s) {
        auto sj = st.at(s);
        StageSpec spec;
        spec.treatments = sj.strings("treatments");
        if (sj.has("covariates")) spec.covariates = sj.strings("covariates");
        spec.response_variable = sj.string("response_variable", "");
        spec.gap_days = sj.integer("gap_days");
        auto fe = sj.child("feasible");
        if (!fe.is_array()) sj.error("feasible", "expected an array");
        for (size_t e = 0; e < fe.size(); ++e) {
            auto ej = fe.at(e);
            FeasibleEntry entry;
            entry.prior = ej.integer("prior", kAny);
            entry.response = ej.integer("response", kAny);
            entry.options = ej.integers("options");
            entry.propensities = ej.numbers("propensities");
            spec.feasible.push_back(entry);
        }
        auto it = std::find(spec.covariates.begin(), spec.covariates.end(), spec.response_variable);
        if (!spec.response_variable.empty() && it != spec.covariates.end())
            spec.response_index = static_cast<int>(it - spec.covariates.begin());
        stages.push_back(std::move(spec));
    }
    std::vector<DerivedVar> derived;
    auto dj = root.child("derived");
    for (size_t d = 0; d < dj.size(); ++d) {
        auto one = dj.at(d);
        DerivedVar dv;
        dv.name = one.string("name");
        auto terms = one.child("terms");
        for (size_t t = 0; t < terms.size(); ++t) {
            LinearTerm lt;
            lt.coef = terms.at(t).number("coef", 1.0);
            lt.term.text = terms.at(t).string("term");
            dv.terms.push_back(lt);
        }
        derived.push_back(dv);
    }
    std::vector<Regime> regimes;
    auto rj = root.child("regimes");
    for (size_t r = 0; r < rj.size(); ++r) {
        try {
            regimes.push_back(regime_from_json(rj.at(r).raw()));
        } catch (const std::exception& e) {
            diag.add(rj.at(r).pointer(), std::string("bad regime: ") + e.what());
        }
    }
    validate_stages(stages, diag);
    diag.throw_if_any("design");
    std::vector<std::string> labels;
    for (auto& r : regimes) labels.push_back(r.label);
    try {
        return SmartDesign(name, std::move(stages), std::move(derived), std::move(regimes));
    } catch (const ValidationError& e) {
        // Regime problems name the regime; point at it when the label is known.
        std::string where = rj.size() ? "/regimes" : "";
        std::string msg = e.what();
        for (size_t r = 0; r < labels.size(); ++r)
            if (msg.find("regime " + labels[r] + " ") != std::string::npos) where = rj.at(r).pointer();
        diag.add(where, msg);
        diag.throw_if_any("design");
    }
    return {};
}

nlohmann::json design_to_json(const SmartDesign& d) {
    nlohmann::json stages = nlohmann::json::array();
    for (auto& st : d.stages()) {
        nlohmann::json fe = nlohmann::json::array();
        for (auto& e : st.feasible) {
            nlohmann::json o{{"options", e.options}, {"propensities", e.propensities}};
            if (e.prior != kAny) o["prior"] = e.prior;
            if (e.response != kAny) o["response"] = e.response;
            fe.push_back(o);
        }
        nlohmann::json s{{"treatments", st.treatments}, {"covariates", st.covariates},
                         {"gap_days", st.gap_days}, {"feasible", fe}};
        if (!st.response_variable.empty()) s["response_variable"] = st.response_variable;
        stages.push_back(s);
    }
    nlohmann::json derived = nlohmann::json::array();
    for (auto& dv : d.derived_spec()) {
        nlohmann::json terms = nlohmann::json::array();
        for (auto& t : dv.terms) terms.push_back({{"coef", t.coef}, {"term", t.term.text}});
        derived.push_back({{"name", dv.name}, {"terms", terms}});
    }
    nlohmann::json regimes = nlohmann::json::array();
    for (auto& r : d.regimes()) regimes.push_back(regime_to_json(r));
    return {{"schema_version", 1}, {"name", d.name()}, {"stages", stages}, {"derived", derived},
            {"regimes", regimes}};
}

}  // namespace smartmon

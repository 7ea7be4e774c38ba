#include "smartmon/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "smartmon/error.hpp"

namespace smartmon {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_top_level(const std::string& s, char sep) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char c : s) {
        if (c == '(' || c == '{') ++depth;
        if (c == ')' || c == '}') --depth;
        if (c == sep && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

int parse_int(const std::string& s, const std::string& context) {
    try {
        size_t pos = 0;
        int v = std::stoi(trim(s), &pos);
        if (pos != trim(s).size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("bad integer '" + s + "' in term '" + context + "'");
    }
}

}  // namespace

VarLayout::VarLayout(std::vector<std::vector<std::string>> covariates, std::vector<DerivedVar> derived)
    : covariates_(std::move(covariates)) {
    const int K = num_stages();
    auto add = [&](const std::string& name, VarRef ref) {
        if (names_.count(name)) throw ValidationError("duplicate variable name '" + name + "'");
        names_[name] = ref;
    };
    for (int k = 1; k <= K; ++k) {
        for (int j = 0; j < static_cast<int>(covariates_[k - 1].size()); ++j)
            add(covariates_[k - 1][j], {VarRef::Kind::Covariate, k, j});
        add("A" + std::to_string(k), {VarRef::Kind::Action, k, 0});
    }
    add("Y", {VarRef::Kind::Outcome, K + 1, 0});
    // Derived variables may refer to anything declared before them.
    for (auto& d : derived) {
        DerivedVar parsed{d.name, {}};
        for (auto& t : d.terms) {
            LinearTerm lt = t;
            if (lt.term.factors.empty() && !lt.term.text.empty()) lt.term = parse_monomial(lt.term.text);
            parsed.terms.push_back(lt);
        }
        derived_.push_back(parsed);
        add(d.name, {VarRef::Kind::Derived, 0, static_cast<int>(derived_.size()) - 1});
    }
}

bool VarLayout::has(const std::string& name) const { return names_.count(name) > 0; }

VarRef VarLayout::lookup(const std::string& name) const {
    auto it = names_.find(name);
    if (it == names_.end()) throw ValidationError("unknown variable '" + name + "'");
    return it->second;
}

std::string VarLayout::name_of(const VarRef& v) const {
    switch (v.kind) {
        case VarRef::Kind::Covariate: return covariates_[v.stage - 1][v.index];
        case VarRef::Kind::Action: return "A" + std::to_string(v.stage);
        case VarRef::Kind::Outcome: return "Y";
        case VarRef::Kind::Derived: return derived_[v.index].name;
    }
    return "?";
}

int VarLayout::stage_of(const VarRef& v) const {
    switch (v.kind) {
        case VarRef::Kind::Covariate:
        case VarRef::Kind::Action: return v.stage;
        case VarRef::Kind::Outcome: return num_stages() + 1;
        case VarRef::Kind::Derived: {
            int s = 0;
            for (auto& t : derived_[v.index].terms) s = std::max(s, t.term.max_stage);
            return s;
        }
    }
    return 0;
}

Factor VarLayout::parse_factor(const std::string& raw) const {
    std::string s = trim(raw);
    if (s.size() > 2 && s.front() == '(' && s.back() == ')') s = trim(s.substr(1, s.size() - 2));
    Factor f;
    if (s.rfind("1-", 0) == 0) {
        f.kind = Factor::Kind::OneMinus;
        f.var = lookup(trim(s.substr(2)));
        return f;
    }
    if (auto pos = s.find("=="); pos != std::string::npos) {
        f.kind = Factor::Kind::InSet;
        f.var = lookup(trim(s.substr(0, pos)));
        f.codes.push_back(parse_int(s.substr(pos + 2), raw));
        return f;
    }
    if (auto pos = s.find(" in "); pos != std::string::npos) {
        f.kind = Factor::Kind::InSet;
        f.var = lookup(trim(s.substr(0, pos)));
        std::string set = trim(s.substr(pos + 4));
        if (set.size() < 2 || set.front() != '{' || set.back() != '}')
            throw ValidationError("bad set in term '" + raw + "'");
        for (auto& c : split_top_level(set.substr(1, set.size() - 2), ','))
            if (!trim(c).empty()) f.codes.push_back(parse_int(c, raw));
        return f;
    }
    f.kind = Factor::Kind::Value;
    f.var = lookup(s);
    return f;
}

void VarLayout::finish(Monomial& m) const {
    m.max_stage = 0;
    m.uses_outcome = false;
    for (auto& f : m.factors) {
        int st = stage_of(f.var);
        if (f.var.kind == VarRef::Kind::Outcome) m.uses_outcome = true;
        if (f.var.kind == VarRef::Kind::Derived) {
            for (auto& t : derived_[f.var.index].terms) m.uses_outcome = m.uses_outcome || t.term.uses_outcome;
        }
        m.max_stage = std::max(m.max_stage, st);
    }
}

Monomial VarLayout::parse_monomial(const std::string& text) const {
    Monomial m;
    m.text = trim(text);
    if (m.text.empty()) throw ValidationError("empty term");
    for (auto& part : split_top_level(m.text, '*')) {
        std::string p = trim(part);
        if (p == "1") continue;
        m.factors.push_back(parse_factor(p));
    }
    finish(m);
    return m;
}

double VarLayout::value(const VarRef& v, const RowView& row) const {
    switch (v.kind) {
        case VarRef::Kind::Covariate:
            if (v.stage > static_cast<int>(row.x.size()))
                throw ValidationError("covariate '" + name_of(v) + "' not observed");
            return row.x[v.stage - 1][v.index];
        case VarRef::Kind::Action:
            if (v.stage > static_cast<int>(row.a.size()))
                throw ValidationError("action '" + name_of(v) + "' not observed");
            return row.a[v.stage - 1];
        case VarRef::Kind::Outcome:
            if (!row.y) throw ValidationError("outcome not observed");
            return *row.y;
        case VarRef::Kind::Derived: return eval(derived_[v.index].terms, row);
    }
    return 0.0;
}

double VarLayout::eval(const Monomial& m, const RowView& row) const {
    double out = 1.0;
    for (auto& f : m.factors) {
        double x = value(f.var, row);
        switch (f.kind) {
            case Factor::Kind::Value: out *= x; break;
            case Factor::Kind::OneMinus: out *= 1.0 - x; break;
            case Factor::Kind::InSet: {
                int c = static_cast<int>(std::lround(x));
                out *= std::find(f.codes.begin(), f.codes.end(), c) != f.codes.end() ? 1.0 : 0.0;
                break;
            }
        }
        if (out == 0.0) return 0.0;
    }
    return out;
}

double VarLayout::eval(const std::vector<LinearTerm>& terms, const RowView& row) const {
    double s = 0.0;
    for (auto& t : terms) s += t.coef * eval(t.term, row);
    return s;
}

FeatureMap::FeatureMap(const VarLayout& layout, const std::vector<std::string>& terms) {
    for (auto& t : terms) terms_.push_back(layout.parse_monomial(t));
}

std::vector<std::string> FeatureMap::texts() const {
    std::vector<std::string> out;
    for (auto& t : terms_) out.push_back(t.text);
    return out;
}

void FeatureMap::eval(const VarLayout& layout, const RowView& row, double* out) const {
    for (size_t j = 0; j < terms_.size(); ++j) out[j] = layout.eval(terms_[j], row);
}

}  // namespace smartmon

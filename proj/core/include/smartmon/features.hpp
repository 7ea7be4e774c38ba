#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace smartmon {

// Where a named variable lives inside a trajectory.
struct VarRef {
    enum class Kind { Covariate, Action, Outcome, Derived };
    Kind kind = Kind::Covariate;
    int stage = 0;  // 1-based for covariates and actions
    int index = 0;  // coordinate inside the stage block, or derived slot
};

struct Factor {
    enum class Kind { Value, OneMinus, InSet };
    Kind kind = Kind::Value;
    VarRef var;
    std::vector<int> codes;  // InSet only
};

// Product of factors; an empty product is the intercept.
struct Monomial {
    std::vector<Factor> factors;
    std::string text;
    int max_stage = 0;  // latest stage whose data the monomial touches (0 = intercept only)
    bool uses_outcome = false;
};

struct LinearTerm {
    double coef = 0.0;
    Monomial term;
    bool free = false;  // calibration may overwrite coef
};

// Read-only view of one patient's (possibly partial) data.
struct RowView {
    std::span<const std::vector<double>> x;  // visible covariate blocks
    std::span<const int> a;                  // visible actions
    const double* y = nullptr;
};

class VarLayout;

struct DerivedVar {
    std::string name;
    std::vector<LinearTerm> terms;
};

// Name table for covariates, actions (A1..AK), outcome (Y) and derived codings.
class VarLayout {
public:
    VarLayout() = default;
    VarLayout(std::vector<std::vector<std::string>> covariates, std::vector<DerivedVar> derived);

    int num_stages() const { return static_cast<int>(covariates_.size()); }
    const std::vector<std::vector<std::string>>& covariates() const { return covariates_; }
    const std::vector<DerivedVar>& derived() const { return derived_; }

    bool has(const std::string& name) const;
    VarRef lookup(const std::string& name) const;
    std::string name_of(const VarRef& v) const;

    // Parses "1", "X11", "1-R2", "(1-R2)", "A2==3", "A2 in {0,3}" joined by '*'.
    Monomial parse_monomial(const std::string& text) const;

    double value(const VarRef& v, const RowView& row) const;
    double eval(const Monomial& m, const RowView& row) const;
    double eval(const std::vector<LinearTerm>& terms, const RowView& row) const;

    // Latest stage a variable depends on (derived variables expand to their terms).
    int stage_of(const VarRef& v) const;

private:
    Factor parse_factor(const std::string& text) const;
    void finish(Monomial& m) const;

    std::vector<std::vector<std::string>> covariates_;
    std::vector<DerivedVar> derived_;
    std::unordered_map<std::string, VarRef> names_;
};

// Ordered list of monomials used as regression features.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(const VarLayout& layout, const std::vector<std::string>& terms);

    int size() const { return static_cast<int>(terms_.size()); }
    const std::vector<Monomial>& terms() const { return terms_; }
    std::vector<std::string> texts() const;
    void eval(const VarLayout& layout, const RowView& row, double* out) const;

private:
    std::vector<Monomial> terms_;
};

}  // namespace smartmon

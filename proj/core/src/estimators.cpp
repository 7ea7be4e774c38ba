#include "smartmon/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "smartmon/error.hpp"
#include "smartmon/rng.hpp"

namespace smartmon {

std::string to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::IPWE: return "IPWE";
        case EstimatorKind::AIPWE: return "AIPWE";
        case EstimatorKind::IAIPWE: return "IAIPWE";
    }
    return "?";
}

EstimatorKind estimator_from_string(const std::string& s) {
    std::string u = s;
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
    if (u == "IPWE") return EstimatorKind::IPWE;
    if (u == "AIPWE") return EstimatorKind::AIPWE;
    if (u == "IAIPWE") return EstimatorKind::IAIPWE;
    throw ValidationError("unknown estimator '" + s + "' (expected IPWE, AIPWE or IAIPWE)");
}

std::string to_string(CovarianceMethod m) {
    switch (m) {
        case CovarianceMethod::Sandwich: return "sandwich";
        case CovarianceMethod::SandwichNumeric: return "sandwich-numeric";
        case CovarianceMethod::Bootstrap: return "bootstrap";
        case CovarianceMethod::None: return "none";
    }
    return "?";
}

CovarianceMethod covariance_from_string(const std::string& s) {
    if (s == "sandwich") return CovarianceMethod::Sandwich;
    if (s == "sandwich-numeric") return CovarianceMethod::SandwichNumeric;
    if (s == "bootstrap") return CovarianceMethod::Bootstrap;
    if (s == "none") return CovarianceMethod::None;
    throw ValidationError("unknown covariance method '" + s + "'");
}

double ValueEstimate::se(int l) const {
    if (covariance.rows() <= l) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(std::max(0.0, covariance(l, l)));
}

double ValueEstimate::contrast_se(int l) const {
    if (control.kind != ControlSpec::Kind::Arm) return se(l);
    const int c = num_regimes();
    if (covariance.rows() <= c) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(std::max(0.0, covariance(l, l) + covariance(c, c) - 2.0 * covariance(l, c)));
}

nlohmann::json ValueEstimate::to_json() const {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["estimator"] = to_string(kind);
    j["analysis_day"] = day;
    j["n_enrolled"] = n_t;
    j["n_used"] = n_used;
    j["planned_n"] = planned_n;
    j["covariance_method"] = covariance_method;
    auto regs = nlohmann::json::array();
    for (int l = 0; l < num_regimes(); ++l) {
        nlohmann::json r{{"label", labels[l]}, {"value", values[l]}, {"se", se(l)}};
        if (l < static_cast<int>(descriptions.size())) r["description"] = descriptions[l];
        regs.push_back(r);
    }
    j["regimes"] = regs;
    auto cov = nlohmann::json::array();
    for (int i = 0; i < covariance.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (int c = 0; c < covariance.cols(); ++c) row.push_back(covariance(i, c));
        cov.push_back(row);
    }
    j["covariance"] = cov;
    switch (control.kind) {
        case ControlSpec::Kind::None: j["control"] = nullptr; break;
        case ControlSpec::Kind::Fixed: j["control"] = {{"kind", "fixed"}, {"value", control_value}}; break;
        case ControlSpec::Kind::Arm:
            j["control"] = {{"kind", "arm"}, {"action", control.arm_action}, {"value", control_value},
                            {"se", se(num_regimes())}};
            break;
    }
    j["warnings"] = warnings;
    return j;
}

namespace {

// Terms of one record for one regime; gradients are accumulated when `acc` is set.
struct GradAcc {
    Eigen::VectorXd theta;
    std::vector<Eigen::VectorXd> beta;
};

double record_phi(const SmartDesign& design, const Regime& regime, const ObservedRecord& rec,
                  const ProgressRates& rates, const Propensities& props, const QModel* q, int l, GradAcc* acc) {
    const int K = design.num_stages();
    const auto& layout = design.layout();
    Coarsening cz = hazard_and_survivor(design, rec, regime, rates, props);
    const int R = cz.level;
    const int Rcap = std::min(R, 2 * K);
    const int C = static_cast<int>(props.cells().size());
    const int P = K + C;

    std::vector<double> L(K, 0.0);
    std::vector<Eigen::VectorXd> f(K);
    std::vector<int> entry(K, -1);
    std::vector<Code> d(K, 0);
    for (int k = 1; k <= K && 2 * k - 1 <= R; ++k) {
        HistoryKey key = design.key(k, rec.x, rec.a);
        entry[k - 1] = design.entry_index(k, key);
        d[k - 1] = regime_action(design, regime, k, key);
        if (q) {
            f[k - 1] = q->features(layout, k, rec, d[k - 1]);
            L[k - 1] = f[k - 1].dot(q->beta[l][k - 1]);
        }
    }

    auto weight = [&](int r) {
        double ind = R == r ? 1.0 : 0.0;
        return (ind - cz.lambda[r - 1]) / cz.surv[r - 1];
    };
    double phi = 0.0;
    std::vector<double> wk(K, 0.0);  // w_{2k-1} + w_{2k}
    for (int r = 1; r <= Rcap; ++r) wk[(r - 1) / 2] += weight(r);
    for (int k = 0; k < K; ++k) phi += wk[k] * L[k];
    const double w_inf = R == kLevelInf ? 1.0 / cz.surv[2 * K - 1] : 0.0;
    phi += w_inf * rec.y;
    if (!acc) return phi;

    if (q)
        for (int k = 0; k < K; ++k)
            if (wk[k] != 0.0) acc->beta[k] += wk[k] * f[k];

    // d lambda and d ln K per level, indices [nu_2..nu_{K+1}, cells].
    Eigen::VectorXd dlnpi = Eigen::VectorXd::Zero(P);
    auto nu_idx = [](int j) { return j - 2; };
    auto dpi_vec = [&](int k, int e, Code a) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(P);
        for (int c = 0; c < C; ++c) v(K + c) = props.dpi(c, k, e, a);
        return v;
    };
    for (int k = 1; k <= K; ++k) {
        const int odd = 2 * k - 1, even = 2 * k;
        if (R < odd) break;
        const int e = entry[k - 1];
        const double nu_k = rates.nu[k - 1], nu_next = rates.nu[k];
        {
            Eigen::VectorXd dpd = dpi_vec(k, e, d[k - 1]);
            double pd = props.pi(k, e, d[k - 1]);
            Eigen::VectorXd dlam = -dpd;
            Eigen::VectorXd dlnK = dlnpi + dpd / pd;
            if (k >= 2) dlnK(nu_idx(k)) += 1.0 / nu_k;
            double w = weight(odd);
            acc->theta += L[k - 1] * (-dlam / cz.surv[odd - 1] - w * dlnK);
        }
        if (R < even) break;
        {
            Eigen::VectorXd dpa = dpi_vec(k, e, rec.a[k - 1]);
            double pa = props.pi(k, e, rec.a[k - 1]);
            dlnpi += dpa / pa;
            Eigen::VectorXd dlam = Eigen::VectorXd::Zero(P);
            dlam(nu_idx(k + 1)) = -1.0 / nu_k;
            if (k >= 2) dlam(nu_idx(k)) = nu_next / (nu_k * nu_k);
            Eigen::VectorXd dlnK = dlnpi;
            dlnK(nu_idx(k + 1)) += 1.0 / nu_next;
            double w = weight(even);
            acc->theta += L[k - 1] * (-dlam / cz.surv[even - 1] - w * dlnK);
            if (k == K && R == kLevelInf) acc->theta += rec.y * (-w_inf * dlnK);
        }
    }
    return phi;
}

void require_identified(const Snapshot& snap, const SmartDesign& design, const Regime& regime) {
    for (auto& r : snap.records)
        if (r.complete && coarsening_level(design, r, regime) == kLevelInf) return;
    throw NumericalError("regime " + regime.label + " unidentified: no complete consistent records");
}

double mean_phi(const Snapshot& snap, const SmartDesign& design, const Regime& regime, const ProgressRates& rates,
                const Propensities& props, const QModel* q, int l) {
    double s = 0.0;
    for (auto& r : snap.records) s += record_phi(design, regime, r, rates, props, q, l, nullptr);
    return s / snap.n_enrolled();
}

double consistency_prob(const SmartDesign& design, const Regime& regime, const ObservedRecord& rec,
                        const Propensities& props, int upto, bool* consistent) {
    double prod = 1.0;
    *consistent = true;
    for (int k = 1; k <= upto; ++k) {
        HistoryKey key = design.key(k, rec.x, rec.a);
        int e = design.entry_index(k, key);
        Code d = regime_action(design, regime, k, key);
        if (rec.a[k - 1] != d) {
            *consistent = false;
            return 0.0;
        }
        prod *= props.pi(k, e, d);
    }
    return prod;
}

}  // namespace

std::vector<double> iaipwe_terms(const Snapshot& snap, const SmartDesign& design, const Regime& regime,
                                 const ProgressRates& rates, const Propensities& props, const QModel* q, int l) {
    std::vector<double> out;
    out.reserve(snap.records.size());
    for (auto& r : snap.records) out.push_back(record_phi(design, regime, r, rates, props, q, l, nullptr));
    return out;
}

double ipwe(const Snapshot& snap, const SmartDesign& design, const Regime& regime, const Propensities& props) {
    if (snap.records.empty()) throw ValidationError("empty snapshot");
    require_identified(snap, design, regime);
    const int K = design.num_stages();
    const double nu = static_cast<double>(snap.n_complete()) / snap.n_enrolled();
    double s = 0.0;
    for (auto& r : snap.records) {
        if (!r.complete) continue;
        bool c;
        double p = consistency_prob(design, regime, r, props, K, &c);
        if (c) s += r.y / (nu * p);
    }
    return s / snap.n_enrolled();
}

double aipwe(const Snapshot& snap, const SmartDesign& design, const Regime& regime, const Propensities& props,
             const QModel* q, int l) {
    if (snap.records.empty()) throw ValidationError("empty snapshot");
    for (auto& r : snap.records)
        if (!r.complete) throw ValidationError("AIPWE requires complete data; use IAIPWE");
    require_identified(snap, design, regime);
    const int K = design.num_stages();
    double s = 0.0;
    for (auto& r : snap.records) {
        double prev_w = 1.0;  // C_{k-1} / Pi_{k-1}
        double prod = 1.0;
        bool consistent = true;
        for (int k = 1; k <= K; ++k) {
            HistoryKey key = design.key(k, r.x, r.a);
            int e = design.entry_index(k, key);
            Code d = regime_action(design, regime, k, key);
            double Lk = q ? q->predict(design.layout(), l, k, r, d) : 0.0;
            double w = 0.0;
            if (r.a[k - 1] == d) {
                prod *= props.pi(k, e, d);
                w = 1.0 / prod;
            } else {
                consistent = false;
            }
            s += (prev_w - w) * Lk;
            prev_w = w;
            if (!consistent) break;
        }
        if (consistent) s += prev_w * r.y;
    }
    return s / snap.n_enrolled();
}

double iaipwe(const Snapshot& snap, const SmartDesign& design, const Regime& regime, const Propensities& props,
              const QModel* q, int l) {
    require_identified(snap, design, regime);
    ProgressRates rates = estimate_nu(snap, design.num_stages());
    return mean_phi(snap, design, regime, rates, props, q, l);
}

double iaipwe_two_stage(const Snapshot& snap, const SmartDesign& design, const Regime& regime,
                        const Propensities& props, const QModel* q, int l) {
    if (design.num_stages() != 2) throw ValidationError("two-stage form needs K = 2");
    require_identified(snap, design, regime);
    ProgressRates rates = estimate_nu(snap, 2);
    const double nu2 = rates.nu[1], nu3 = rates.nu[2];
    const auto& layout = design.layout();
    double s = 0.0;
    for (auto& r : snap.records) {
        HistoryKey k1 = design.key(1, r.x, r.a);
        Code d1 = regime_action(design, regime, 1, k1);
        double L1 = q ? q->predict(layout, l, 1, r, d1) : 0.0;
        bool c1 = r.a[0] == d1;
        double p1 = props.pi(1, design.entry_index(1, k1), d1);
        double term = L1;
        if (c1 && r.kappa == 2) {
            HistoryKey k2 = design.key(2, r.x, r.a);
            Code d2 = regime_action(design, regime, 2, k2);
            double p2 = props.pi(2, design.entry_index(2, k2), d2);
            double L2 = q ? q->predict(layout, l, 2, r, d2) : 0.0;
            bool c2 = r.a[1] == d2;
            if (c2 && r.complete) term += r.y / (p1 * p2 * nu3);
            term -= L1 / (p1 * nu2);
            double inner = (c2 && r.complete ? nu2 / (p2 * nu3) : 0.0) - 1.0;
            term -= inner * L2 / (p1 * nu2);
        }
        s += term;
    }
    return s / snap.n_enrolled();
}

PhiGradient phi_gradient_analytic(const Snapshot& snap, const SmartDesign& design, const Regime& regime,
                                  const ProgressRates& rates, const Propensities& props, const QModel* q, int l) {
    const int K = design.num_stages();
    GradAcc acc;
    acc.theta = Eigen::VectorXd::Zero(K + static_cast<int>(props.cells().size()));
    for (int k = 0; k < K; ++k) acc.beta.push_back(Eigen::VectorXd::Zero(q ? q->beta[l][k].size() : 0));
    for (auto& r : snap.records) record_phi(design, regime, r, rates, props, q, l, &acc);
    const double n = snap.n_enrolled();
    PhiGradient g{acc.theta / n, {}};
    for (auto& b : acc.beta) g.beta.push_back(b / n);
    return g;
}

PhiGradient phi_gradient_numeric(const Snapshot& snap, const SmartDesign& design, const Regime& regime,
                                 const ProgressRates& rates, const Propensities& props, const QModel* q, int l) {
    const int K = design.num_stages();
    const int C = static_cast<int>(props.cells().size());
    PhiGradient g;
    g.theta = Eigen::VectorXd::Zero(K + C);
    auto step = [](double v) { return 1e-6 * std::max(1.0, std::abs(v)); };
    for (int j = 2; j <= K + 1; ++j) {
        ProgressRates up = rates, dn = rates;
        double h = step(rates.nu[j - 1]);
        up.nu[j - 1] += h;
        dn.nu[j - 1] -= h;
        g.theta(j - 2) = (mean_phi(snap, design, regime, up, props, q, l) -
                          mean_phi(snap, design, regime, dn, props, q, l)) / (2 * h);
    }
    for (int c = 0; c < C; ++c) {
        const auto& cell = props.cells()[c];
        double p = props.table()[cell.stage - 1][cell.entry][cell.option];
        double h = step(p);
        Propensities up = props, dn = props;
        up.set_cell(c, p + h);
        dn.set_cell(c, p - h);
        g.theta(K + c) = (mean_phi(snap, design, regime, rates, up, q, l) -
                          mean_phi(snap, design, regime, rates, dn, q, l)) / (2 * h);
    }
    for (int k = 1; k <= K; ++k) {
        if (!q) {
            g.beta.emplace_back();
            continue;
        }
        Eigen::VectorXd b(q->beta[l][k - 1].size());
        for (int i = 0; i < b.size(); ++i) {
            QModel up = *q, dn = *q;
            double h = step(q->beta[l][k - 1](i));
            up.beta[l][k - 1](i) += h;
            dn.beta[l][k - 1](i) -= h;
            b(i) = (mean_phi(snap, design, regime, rates, props, &up, l) -
                    mean_phi(snap, design, regime, rates, props, &dn, l)) / (2 * h);
        }
        g.beta.push_back(b);
    }
    return g;
}

namespace {

struct PointFit {
    Snapshot used;
    ProgressRates rates;
    Propensities props;
    std::optional<QModel> q;
    std::vector<double> values;
    double control_value = 0.0;
};

PointFit point_fit(const Snapshot& snap, const SmartDesign& design, const std::vector<Regime>& regimes,
                   const EstimatorOptions& opts) {
    const int K = design.num_stages();
    PointFit f;
    f.used = opts.kind == EstimatorKind::IAIPWE ? snap : snap.complete_cases();
    if (f.used.records.empty()) throw NumericalError("no records available for " + to_string(opts.kind));
    f.rates = estimate_nu(f.used, K);
    for (int k = 1; k <= K + 1; ++k)
        if (f.rates.nu[k - 1] <= 0.0) throw NumericalError("degenerate progress rate at stage " + std::to_string(k));
    f.props = opts.estimate_propensities ? Propensities::estimated(design, f.used) : Propensities::known(design);
    if (opts.kind != EstimatorKind::IPWE && !opts.q.empty()) f.q = fit_q_functions(f.used, design, regimes, opts.q);
    const QModel* qp = f.q ? &*f.q : nullptr;
    for (size_t l = 0; l < regimes.size(); ++l) {
        require_identified(f.used, design, regimes[l]);
        f.values.push_back(mean_phi(f.used, design, regimes[l], f.rates, f.props, qp, static_cast<int>(l)));
    }
    if (opts.control.kind == ControlSpec::Kind::Fixed) {
        f.control_value = opts.control.value;
    } else if (opts.control.kind == ControlSpec::Kind::Arm) {
        double s = 0.0;
        int m = 0;
        for (auto& r : f.used.records)
            if (r.complete && r.a[0] == opts.control.arm_action) {
                s += r.y;
                ++m;
            }
        if (m == 0) throw NumericalError("control arm has no complete records");
        f.control_value = s / m;
    }
    return f;
}

Eigen::MatrixXd sandwich(const PointFit& f, const SmartDesign& design, const std::vector<Regime>& regimes,
                         const EstimatorOptions& opts, bool numeric) {
    const int K = design.num_stages();
    const int L = static_cast<int>(regimes.size());
    const auto& snap = f.used;
    const int n = snap.n_enrolled();
    const int C = static_cast<int>(f.props.cells().size());
    const bool arm = opts.control.kind == ControlSpec::Kind::Arm;
    const int D = L + (arm ? 1 : 0);
    const QModel* q = f.q ? &*f.q : nullptr;
    const auto& layout = design.layout();
    Eigen::MatrixXd IF = Eigen::MatrixXd::Zero(n, D);

    // Nuisance influence for rates and cells.
    Eigen::MatrixXd IFtheta = Eigen::MatrixXd::Zero(n, K + C);
    for (int i = 0; i < n; ++i) {
        const auto& r = snap.records[i];
        for (int j = 2; j <= K; ++j) IFtheta(i, j - 2) = (r.kappa >= j ? 1.0 : 0.0) - f.rates.nu[j - 1];
        IFtheta(i, K - 1) = (r.complete ? 1.0 : 0.0) - f.rates.nu[K];
        for (int c = 0; c < C; ++c) {
            const auto& cell = f.props.cells()[c];
            if (r.kappa < cell.stage) continue;
            int e = design.entry_index(cell.stage, design.key(cell.stage, r.x, r.a));
            if (e != cell.entry) continue;
            const auto& opts_e = design.stage(cell.stage).feasible[e].options;
            double p = f.props.table()[cell.stage - 1][e][cell.option];
            double ind = r.a[cell.stage - 1] == opts_e[cell.option] ? 1.0 : 0.0;
            IFtheta(i, K + c) = (ind - p) / (cell.n_entry / n);
        }
    }

    // Stage-K estimating function (shared).
    Eigen::MatrixXd UK, BK;
    if (q) {
        const int p = static_cast<int>(q->beta[0][K - 1].size());
        UK = Eigen::MatrixXd::Zero(n, p);
        BK = Eigen::MatrixXd::Zero(p, p);
        for (int i = 0; i < n; ++i) {
            const auto& r = snap.records[i];
            if (!r.complete) continue;
            Eigen::VectorXd fx = q->features(layout, K, r, r.a[K - 1]);
            UK.row(i) = (fx * (r.y - fx.dot(q->beta[0][K - 1]))).transpose();
            BK += fx * fx.transpose();
        }
        BK /= n;
    }

    for (int l = 0; l < L; ++l) {
        const Regime& reg = regimes[l];
        for (int i = 0; i < n; ++i)
            IF(i, l) = record_phi(design, reg, snap.records[i], f.rates, f.props, q, l, nullptr) - f.values[l];
        PhiGradient g = numeric ? phi_gradient_numeric(snap, design, reg, f.rates, f.props, q, l)
                                : phi_gradient_analytic(snap, design, reg, f.rates, f.props, q, l);
        IF.col(l) += IFtheta * g.theta;
        if (!q) continue;

        // Stages 1..K-1: per-regime fits on rows with kappa > k; chain through later coefficients.
        std::vector<Eigen::VectorXd> G = g.beta;
        for (int k = 1; k < K; ++k) {
            const int pk = static_cast<int>(q->beta[l][k - 1].size());
            Eigen::MatrixXd B = Eigen::MatrixXd::Zero(pk, pk);
            Eigen::MatrixXd U = Eigen::MatrixXd::Zero(n, pk);
            std::vector<Eigen::MatrixXd> J(K + 1);
            for (int j = k + 1; j <= K; ++j) J[j] = Eigen::MatrixXd::Zero(pk, q->beta[l][j - 1].size());
            for (int i = 0; i < n; ++i) {
                const auto& r = snap.records[i];
                if (r.kappa <= k) continue;
                Eigen::VectorXd fx = q->features(layout, k, r, r.a[k - 1]);
                int used = 0;
                Eigen::VectorXd grad;
                double yt = pseudo_outcome(*q, design, reg, l, k, r, &used, &grad);
                U.row(i) = (fx * (yt - fx.dot(q->beta[l][k - 1]))).transpose();
                B += fx * fx.transpose();
                if (used > k) J[used] += fx * grad.transpose();
            }
            B /= n;
            Eigen::VectorXd h = B.ldlt().solve(G[k - 1]);
            for (int j = k + 1; j <= K; ++j) G[j - 1] += (J[j] / n).transpose() * h;
            IF.col(l) += U * h;
        }
        Eigen::VectorXd hK = BK.ldlt().solve(G[K - 1]);
        IF.col(l) += UK * hK;
    }
    if (arm) {
        int m = 0;
        for (auto& r : snap.records)
            if (r.complete && r.a[0] == opts.control.arm_action) ++m;
        for (int i = 0; i < n; ++i) {
            const auto& r = snap.records[i];
            if (r.complete && r.a[0] == opts.control.arm_action)
                IF(i, L) = (r.y - f.control_value) / (static_cast<double>(m) / n);
        }
    }
    return IF.transpose() * IF / (static_cast<double>(n) * n);
}

}  // namespace

ValueEstimate stacked_estimate(const Snapshot& snap, const SmartDesign& design, const std::vector<Regime>& regimes,
                               const EstimatorOptions& opts) {
    if (snap.records.empty()) throw ValidationError("empty snapshot");
    if (regimes.empty()) throw ValidationError("no regimes to estimate");
    PointFit f = point_fit(snap, design, regimes, opts);
    const int L = static_cast<int>(regimes.size());
    const bool arm = opts.control.kind == ControlSpec::Kind::Arm;

    ValueEstimate v;
    v.kind = opts.kind;
    v.day = snap.day;
    v.n_t = snap.n_enrolled();
    v.n_used = f.used.n_enrolled();
    v.planned_n = snap.planned_n;
    for (auto& r : regimes) {
        v.labels.push_back(r.label);
        v.descriptions.push_back(r.description);
    }
    v.values = f.values;
    v.control = opts.control;
    v.control_value = f.control_value;
    v.covariance_method = to_string(opts.covariance);

    const int K = design.num_stages();
    int params = K + static_cast<int>(f.props.cells().size());
    if (f.q) params += f.q->num_parameters(0);
    if (v.n_used < 5 * params) {
        std::ostringstream os;
        os << "small sample: " << v.n_used << " records for " << params << " nuisance parameters per regime";
        v.warnings.push_back(os.str());
    }

    switch (opts.covariance) {
        case CovarianceMethod::None: break;
        case CovarianceMethod::Sandwich:
        case CovarianceMethod::SandwichNumeric:
            v.covariance = sandwich(f, design, regimes, opts, opts.covariance == CovarianceMethod::SandwichNumeric);
            break;
        case CovarianceMethod::Bootstrap: {
            const int D = L + (arm ? 1 : 0);
            const int B = opts.bootstrap_reps;
            if (B < 2) throw ValidationError("bootstrap needs at least 2 replicates");
            Rng rng = make_rng(opts.seed);
            std::uniform_int_distribution<int> pick(0, snap.n_enrolled() - 1);
            std::vector<Eigen::VectorXd> reps;
            int failed = 0;
            for (int b = 0; b < B; ++b) {
                Snapshot s;
                s.day = snap.day;
                s.planned_n = snap.planned_n;
                s.records.reserve(snap.records.size());
                for (int i = 0; i < snap.n_enrolled(); ++i) s.records.push_back(snap.records[pick(rng)]);
                try {
                    PointFit fb = point_fit(s, design, regimes, opts);
                    Eigen::VectorXd x(D);
                    for (int l = 0; l < L; ++l) x(l) = fb.values[l];
                    if (arm) x(L) = fb.control_value;
                    reps.push_back(x);
                } catch (const std::exception&) {
                    ++failed;
                }
            }
            if (failed > B / 10)
                throw NumericalError("bootstrap failed in " + std::to_string(failed) + " of " + std::to_string(B) +
                                     " replicates");
            if (failed > 0) v.warnings.push_back("bootstrap skipped " + std::to_string(failed) + " replicates");
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(D);
            for (auto& x : reps) mean += x;
            mean /= reps.size();
            v.covariance = Eigen::MatrixXd::Zero(D, D);
            for (auto& x : reps) v.covariance += (x - mean) * (x - mean).transpose();
            v.covariance /= (reps.size() - 1.0);
            break;
        }
    }
    return v;
}

}  // namespace smartmon

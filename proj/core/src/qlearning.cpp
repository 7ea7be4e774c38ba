#include "smartmon/qlearning.hpp"

#include "smartmon/diagnostics.hpp"
#include "smartmon/error.hpp"

namespace smartmon {

QSpec qspec_from_json(const nlohmann::json& doc) {
    // Accepts the bare term arrays or the document wrapping them.
    const nlohmann::json& j = doc.is_object() && doc.contains("q_features") ? doc["q_features"] : doc;
    Diagnostics diag;
    JsonReader r(j, diag, "/q_features");
    QSpec q;
    if (!r.is_array()) r.error("", "expected one array of terms per stage");
    for (size_t k = 0; k < r.size(); ++k) {
        std::vector<std::string> terms;
        auto st = r.at(k);
        if (!st.is_array()) st.error("", "expected an array of term strings");
        for (size_t t = 0; t < st.size(); ++t) {
            if (!st.at(t).raw().is_string()) {
                st.at(t).error("", "expected a term string");
                continue;
            }
            terms.push_back(st.at(t).raw().get<std::string>());
        }
        q.stage_terms.push_back(terms);
    }
    diag.throw_if_any("Q feature specification");
    return q;
}

nlohmann::json qspec_to_json(const QSpec& q) { return q.stage_terms; }

Eigen::VectorXd QModel::features(const VarLayout& layout, int k, const ObservedRecord& rec, Code ak) const {
    std::vector<int> a(rec.a.begin(), rec.a.begin() + k);
    a[k - 1] = ak;
    RowView row{std::span<const std::vector<double>>(rec.x.data(), static_cast<size_t>(k)), a, nullptr};
    Eigen::VectorXd f(maps[k - 1].size());
    maps[k - 1].eval(layout, row, f.data());
    return f;
}

double QModel::predict(const VarLayout& layout, int l, int k, const ObservedRecord& rec, Code ak) const {
    return features(layout, k, rec, ak).dot(beta[l][k - 1]);
}

int QModel::num_parameters(int l) const {
    int p = 0;
    for (auto& b : beta[l]) p += static_cast<int>(b.size());
    return p;
}

QModel make_qmodel(const SmartDesign& design, const QSpec& spec, int num_regimes) {
    const int K = design.num_stages();
    if (static_cast<int>(spec.stage_terms.size()) != K)
        throw ValidationError("Q specification needs one term list per stage (" + std::to_string(K) + ")");
    QModel q;
    for (int k = 1; k <= K; ++k) {
        FeatureMap m(design.layout(), spec.stage_terms[k - 1]);
        if (m.size() == 0) throw ValidationError("Q stage " + std::to_string(k) + " has no terms");
        for (auto& t : m.terms())
            if (t.max_stage > k || t.uses_outcome)
                throw ValidationError("Q stage " + std::to_string(k) + " term '" + t.text +
                                      "' uses data from a later stage");
        q.maps.push_back(std::move(m));
    }
    q.beta.assign(num_regimes, std::vector<Eigen::VectorXd>(K));
    q.rows_used.assign(num_regimes, std::vector<int>(K, 0));
    q.resid_var.assign(num_regimes, std::vector<double>(K, 0.0));
    for (int l = 0; l < num_regimes; ++l)
        for (int k = 1; k <= K; ++k) q.beta[l][k - 1] = Eigen::VectorXd::Zero(q.maps[k - 1].size());
    return q;
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::string& what) {
    if (X.rows() == 0) throw NumericalError(what + ": stage starved (no usable rows)");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols())
        throw NumericalError(what + ": rank-deficient design matrix (rank " + std::to_string(qr.rank()) + " of " +
                             std::to_string(X.cols()) + " columns, " + std::to_string(X.rows()) + " rows)");
    return qr.solve(y);
}

double pseudo_outcome(const QModel& q, const SmartDesign& design, const Regime& regime, int l, int k,
                      const ObservedRecord& rec, int* stage_used, Eigen::VectorXd* grad) {
    const auto& layout = design.layout();
    // Off-regime histories have no continuation rule; they only inform coefficients never
    // evaluated under this regime, so continue with the observed next action.
    bool on_path = true;
    for (int v = 1; v <= k && on_path; ++v)
        on_path = rec.a[v - 1] == regime_action(design, regime, v, design.key(v, rec.x, rec.a));
    HistoryKey key = design.key(k + 1, rec.x, rec.a);
    const auto& fe = design.feasible(k + 1, key);
    int j;
    Code aj;
    if (!on_path) {
        j = k + 1;
        aj = rec.a[k];
    } else if (fe.options.size() != 1) {
        j = k + 1;
        aj = regime_action(design, regime, k + 1, key);
    } else if (rec.complete) {
        if (stage_used) *stage_used = 0;
        return rec.y;
    } else {
        j = rec.kappa;
        aj = rec.a[j - 1];
    }
    if (stage_used) *stage_used = j;
    Eigen::VectorXd f = q.features(layout, j, rec, aj);
    if (grad) *grad = f;
    return f.dot(q.beta[l][j - 1]);
}

QModel fit_q_functions(const Snapshot& snap, const SmartDesign& design, const std::vector<Regime>& regimes,
                       const QSpec& spec) {
    const int K = design.num_stages();
    const int L = static_cast<int>(regimes.size());
    const auto& layout = design.layout();
    QModel q = make_qmodel(design, spec, L);

    // Stage K: completed rows, actual actions, shared across regimes.
    {
        std::vector<const ObservedRecord*> rows;
        for (auto& r : snap.records)
            if (r.complete) rows.push_back(&r);
        Eigen::MatrixXd X(rows.size(), q.maps[K - 1].size());
        Eigen::VectorXd y(rows.size());
        for (size_t i = 0; i < rows.size(); ++i) {
            X.row(i) = q.features(layout, K, *rows[i], rows[i]->a[K - 1]).transpose();
            y(i) = rows[i]->y;
        }
        Eigen::VectorXd b = least_squares(X, y, "Q stage " + std::to_string(K));
        double rv = rows.size() > static_cast<size_t>(X.cols())
                        ? (y - X * b).squaredNorm() / (rows.size() - X.cols())
                        : 0.0;
        for (int l = 0; l < L; ++l) {
            q.beta[l][K - 1] = b;
            q.rows_used[l][K - 1] = static_cast<int>(rows.size());
            q.resid_var[l][K - 1] = rv;
        }
    }
    for (int l = 0; l < L; ++l) {
        for (int k = K - 1; k >= 1; --k) {
            std::vector<const ObservedRecord*> rows;
            for (auto& r : snap.records)
                if (r.kappa > k) rows.push_back(&r);
            Eigen::MatrixXd X(rows.size(), q.maps[k - 1].size());
            Eigen::VectorXd y(rows.size());
            for (size_t i = 0; i < rows.size(); ++i) {
                X.row(i) = q.features(layout, k, *rows[i], rows[i]->a[k - 1]).transpose();
                y(i) = pseudo_outcome(q, design, regimes[l], l, k, *rows[i], nullptr, nullptr);
            }
            const std::string what = "Q stage " + std::to_string(k) + " (regime " + regimes[l].label + ")";
            q.beta[l][k - 1] = least_squares(X, y, what);
            q.rows_used[l][k - 1] = static_cast<int>(rows.size());
            if (rows.size() > static_cast<size_t>(X.cols()))
                q.resid_var[l][k - 1] = (y - X * q.beta[l][k - 1]).squaredNorm() / (rows.size() - X.cols());
        }
    }
    return q;
}

}  // namespace smartmon

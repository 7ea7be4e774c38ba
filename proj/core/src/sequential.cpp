#include "smartmon/sequential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "smartmon/diagnostics.hpp"
#include "smartmon/error.hpp"
#include "smartmon/mvn.hpp"
#include "smartmon/rng.hpp"

namespace smartmon {

std::string to_string(BoundaryFamily f) { return f == BoundaryFamily::Pocock ? "pocock" : "obf"; }

BoundaryFamily family_from_string(const std::string& s) {
    std::string u = s;
    std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::tolower(c); });
    if (u == "pocock") return BoundaryFamily::Pocock;
    if (u == "obf" || u == "obrien-fleming") return BoundaryFamily::OBF;
    throw ValidationError("unknown boundary family '" + s + "' (expected pocock or obf)");
}

std::vector<double> z_statistics(const ValueEstimate& est, double delta) {
    std::vector<double> z;
    const double v0 = est.control.kind == ControlSpec::Kind::None ? 0.0 : est.control_value;
    for (int l = 0; l < est.num_regimes(); ++l) {
        double se = est.contrast_se(l);
        if (!(se > 0.0)) throw NumericalError("zero standard error for regime " + est.labels[l]);
        z.push_back((est.values[l] - v0 - delta) / se);
    }
    return z;
}

namespace {

Eigen::MatrixXd contrast_cov(const ValueEstimate& est) {
    const int L = est.num_regimes();
    if (est.covariance.rows() < L) throw NumericalError("estimate carries no covariance");
    Eigen::MatrixXd c = est.covariance.topLeftCorner(L, L);
    if (est.control.kind == ControlSpec::Kind::Arm) {
        Eigen::VectorXd x = est.covariance.col(L).head(L);
        double v0 = est.covariance(L, L);
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j) c(i, j) += v0 - x(i) - x(j);
    }
    return c;
}

Eigen::MatrixXd to_correlation(const Eigen::MatrixXd& c) {
    Eigen::VectorXd d = c.diagonal().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd r = c;
    for (int i = 0; i < c.rows(); ++i)
        for (int j = 0; j < c.cols(); ++j) r(i, j) = d(i) > 0 && d(j) > 0 ? c(i, j) / (d(i) * d(j)) : (i == j);
    return r;
}

}  // namespace

Eigen::MatrixXd contrast_correlation(const ValueEstimate& est) { return to_correlation(contrast_cov(est)); }
Eigen::VectorXd contrast_variances(const ValueEstimate& est) { return contrast_cov(est).diagonal(); }

Eigen::MatrixXd NullCovariance::block(int s, int s2) const {
    return sigma.block(s * num_regimes, s2 * num_regimes, num_regimes, num_regimes);
}

nlohmann::json NullCovariance::to_json() const {
    nlohmann::json m = nlohmann::json::array();
    for (int i = 0; i < sigma.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (int j = 0; j < sigma.cols(); ++j) row.push_back(sigma(i, j));
        m.push_back(row);
    }
    return {{"num_regimes", num_regimes}, {"num_analyses", num_analyses}, {"source", source},
            {"info", info}, {"psd_adjustment", psd_adjustment}, {"sigma", m}, {"warnings", warnings}};
}

NullCovariance null_from_json(const nlohmann::json& j) {
    Diagnostics diag;
    JsonReader r(j, diag);
    NullCovariance n;
    n.num_regimes = r.integer("num_regimes");
    n.num_analyses = r.integer("num_analyses");
    n.source = r.string("source", "analytic");
    n.info = r.numbers("info");
    n.psd_adjustment = r.number("psd_adjustment", 0.0);
    if (r.has("warnings")) n.warnings = r.strings("warnings");
    const int D = n.num_regimes * n.num_analyses;
    auto m = r.child("sigma");
    if (static_cast<int>(m.size()) != D) r.error("sigma", "expected a square matrix of size regimes x analyses");
    diag.throw_if_any("null covariance");
    n.sigma.resize(D, D);
    for (int i = 0; i < D; ++i) {
        auto row = m.at(i).raw();
        if (!row.is_array() || static_cast<int>(row.size()) != D) throw ValidationError("null covariance: ragged sigma");
        for (int k = 0; k < D; ++k) n.sigma(i, k) = row[k].get<double>();
    }
    return n;
}

double nearest_psd(Eigen::MatrixXd& m) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() >= 0.0) {
        double adj = (sym - m).norm();
        m = sym;
        return adj;
    }
    Eigen::MatrixXd fixed = es.eigenvectors() * ev.cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
    double adj = (fixed - m).norm();
    m = fixed;
    return adj;
}

NullCovariance null_covariance_analytic(const std::vector<Eigen::MatrixXd>& within, const std::vector<double>& info) {
    const int S = static_cast<int>(within.size());
    if (S == 0 || static_cast<int>(info.size()) != S) throw ValidationError("need one correlation block and info proportion per analysis");
    const int L = static_cast<int>(within[0].rows());
    for (int s = 0; s < S; ++s) {
        if (within[s].rows() != L || within[s].cols() != L) throw ValidationError("correlation blocks differ in size");
        if (!(info[s] > 0.0 && info[s] <= 1.0 + 1e-12)) throw ValidationError("information proportions must lie in (0, 1]");
        if (s > 0 && info[s] < info[s - 1]) throw ValidationError("information proportions must be nondecreasing");
    }
    NullCovariance n;
    n.num_regimes = L;
    n.num_analyses = S;
    n.info = info;
    n.source = "analytic";
    n.sigma = Eigen::MatrixXd::Zero(L * S, L * S);
    for (int s = 0; s < S; ++s) {
        n.sigma.block(s * L, s * L, L, L) = within[s];
        for (int s2 = s + 1; s2 < S; ++s2) {
            Eigen::MatrixXd b = std::sqrt(info[s] / info[s2]) * within[s2];
            n.sigma.block(s * L, s2 * L, L, L) = b;
            n.sigma.block(s2 * L, s * L, L, L) = b.transpose();
        }
    }
    n.psd_adjustment = nearest_psd(n.sigma);
    if (n.psd_adjustment > 1e-8) {
        std::ostringstream os;
        os << "null covariance projected to the PSD cone (change " << n.psd_adjustment << ")";
        n.warnings.push_back(os.str());
    }
    return n;
}

NullCovariance null_covariance_simulated(const Eigen::MatrixXd& draws, int num_regimes, int num_analyses) {
    const int D = num_regimes * num_analyses;
    if (draws.cols() != D) throw ValidationError("replicate matrix has the wrong number of columns");
    if (draws.rows() < 2) throw ValidationError("need at least two replicates");
    Eigen::RowVectorXd mean = draws.colwise().mean();
    Eigen::MatrixXd centered = draws.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / (draws.rows() - 1.0);
    NullCovariance n;
    n.num_regimes = num_regimes;
    n.num_analyses = num_analyses;
    n.source = "simulated";
    n.sigma = to_correlation(cov);
    std::vector<Eigen::VectorXd> vars;
    for (int s = 0; s < num_analyses; ++s) vars.push_back(cov.diagonal().segment(s * num_regimes, num_regimes));
    bool bad = false;
    n.info = info_from_variances(vars, &bad);
    if (bad) n.warnings.push_back("simulated information proportions were not monotone; clipped");
    n.psd_adjustment = nearest_psd(n.sigma);
    if (n.psd_adjustment > 1e-8) {
        std::ostringstream os;
        os << "null covariance projected to the PSD cone (change " << n.psd_adjustment << ")";
        n.warnings.push_back(os.str());
    }
    return n;
}

std::vector<double> info_from_variances(const std::vector<Eigen::VectorXd>& variances, bool* out_of_order) {
    const int S = static_cast<int>(variances.size());
    std::vector<double> info(S, 1.0);
    if (out_of_order) *out_of_order = false;
    for (int s = 0; s < S; ++s) {
        double acc = 0.0;
        for (int l = 0; l < variances[s].size(); ++l) acc += variances[S - 1](l) / variances[s](l);
        info[s] = acc / variances[s].size();
    }
    for (int s = S - 2; s >= 0; --s) {
        if (info[s] > info[s + 1]) {
            info[s] = info[s + 1];
            if (out_of_order) *out_of_order = true;
        }
    }
    return info;
}

std::vector<double> boundary_scales(BoundaryFamily family, const std::vector<double>& info, bool squared) {
    std::vector<double> sc(info.size(), 1.0);
    if (family == BoundaryFamily::OBF)
        for (size_t s = 0; s < info.size(); ++s) sc[s] = squared ? 1.0 / info[s] : 1.0 / std::sqrt(info[s]);
    return sc;
}

nlohmann::json BoundarySpec::to_json() const {
    return {{"schema_version", 1},
            {"family", to_string(family)},
            {"alpha", alpha},
            {"statistic", chi_square ? "chi-square" : "z"},
            {"info", info},
            {"critical", critical},
            {"c", c},
            {"attained_alpha", attained_alpha},
            {"attained_se", attained_se}};
}

BoundarySpec boundary_from_json(const nlohmann::json& j) {
    Diagnostics diag;
    JsonReader r(j, diag);
    BoundarySpec b;
    b.family = BoundaryFamily::Pocock;
    std::string fam = r.string("family", "pocock");
    try {
        b.family = family_from_string(fam);
    } catch (const ValidationError& e) {
        r.error("family", e.what());
    }
    b.alpha = r.number("alpha", 0.05);
    b.chi_square = r.string("statistic", "z") == "chi-square";
    b.critical = r.numbers("critical");
    if (r.has("info")) b.info = r.numbers("info");
    b.c = r.number("c", b.critical.empty() ? 0.0 : b.critical.back());
    diag.throw_if_any("boundary spec");
    return b;
}

BoundarySpec solve_boundaries(const NullCovariance& null, double alpha, BoundaryFamily family, std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 0.5)");
    const int L = null.num_regimes, S = null.num_analyses;
    auto scales = boundary_scales(family, null.info, false);
    const double tol = alpha / 100.0;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(L * S);
    auto fwer = [&](double c) {
        Eigen::VectorXd up(L * S);
        for (int s = 0; s < S; ++s) up.segment(s * L, L).setConstant(c * scales[s]);
        return 1.0 - mvn_rectangle(zero, null.sigma, up, tol, seed).value;
    };
    double lo = 0.0, hi = 8.0;
    double glo = fwer(lo) - alpha, ghi = fwer(hi) - alpha;
    if (!(glo > 0.0 && ghi < 0.0)) {
        std::ostringstream os;
        os << "boundary bracketing failed: g(0) = " << glo << ", g(8) = " << ghi;
        throw NumericalError(os.str());
    }
    while (hi - lo > 1e-4) {
        double mid = 0.5 * (lo + hi);
        if (fwer(mid) - alpha > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    BoundarySpec b;
    b.family = family;
    b.alpha = alpha;
    b.info = null.info;
    b.c = 0.5 * (lo + hi);
    for (int s = 0; s < S; ++s) b.critical.push_back(b.c * scales[s]);
    b.attained_alpha = fwer(b.c);
    b.attained_se = tol / 3.0;
    return b;
}

std::string to_string(Decision::Kind k) {
    switch (k) {
        case Decision::Kind::StopReject: return "stop-reject";
        case Decision::Kind::Continue: return "continue";
        case Decision::Kind::FinalFailToReject: return "final-fail-to-reject";
    }
    return "?";
}

nlohmann::json Decision::to_json(const std::vector<std::string>& labels) const {
    auto trig = nlohmann::json::array();
    for (int l : triggered) trig.push_back(l < static_cast<int>(labels.size()) ? labels[l] : std::to_string(l + 1));
    return {{"decision", to_string(kind)}, {"triggered", trig}};
}

Decision decide(const std::vector<double>& z, const BoundarySpec& b, int s) {
    const int S = static_cast<int>(b.critical.size());
    if (s < 1 || s > S) throw ValidationError("analysis index out of range");
    Decision d;
    for (size_t l = 0; l < z.size(); ++l)
        if (z[l] > b.critical[s - 1]) d.triggered.push_back(static_cast<int>(l));
    if (!d.triggered.empty())
        d.kind = Decision::Kind::StopReject;
    else
        d.kind = s == S ? Decision::Kind::FinalFailToReject : Decision::Kind::Continue;
    return d;
}

Decision decide_chi(double t, const BoundarySpec& b, int s) {
    const int S = static_cast<int>(b.critical.size());
    if (s < 1 || s > S) throw ValidationError("analysis index out of range");
    Decision d;
    if (t > b.critical[s - 1])
        d.kind = Decision::Kind::StopReject;
    else
        d.kind = s == S ? Decision::Kind::FinalFailToReject : Decision::Kind::Continue;
    return d;
}

ChiSquare chi_square_statistic(const std::vector<double>& z, const Eigen::MatrixXd& sigma) {
    const int L = static_cast<int>(z.size());
    if (L < 2) throw ValidationError("homogeneity needs >= 2 regimes");
    if (sigma.rows() != L || sigma.cols() != L) throw ValidationError("chi-square: dimension mismatch");
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(L - 1, L);
    for (int i = 0; i < L - 1; ++i) {
        C(i, i) = 1.0;
        C(i, L - 1) = -1.0;
    }
    Eigen::MatrixXd M = C * sigma * C.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double thr = 1e-10 * std::max(ev.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    ChiSquare out;
    for (int i = 0; i < ev.size(); ++i)
        if (ev(i) > thr) {
            inv(i) = 1.0 / ev(i);
            ++out.dof;
        }
    Eigen::VectorXd cz = C * Eigen::Map<const Eigen::VectorXd>(z.data(), L);
    Eigen::VectorXd p = es.eigenvectors().transpose() * cz;
    out.t = p.dot(inv.asDiagonal() * p);
    return out;
}

Eigen::MatrixXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& sigma, int reps, std::uint64_t seed) {
    const int D = static_cast<int>(mean.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    Eigen::MatrixXd root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    Rng rng = make_rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd out(reps, D);
    Eigen::VectorXd e(D);
    for (int r = 0; r < reps; ++r) {
        for (int i = 0; i < D; ++i) e(i) = nd(rng);
        out.row(r) = (mean + root * e).transpose();
    }
    return out;
}

BoundarySpec chi_boundaries(const NullCovariance& null, double alpha, BoundaryFamily family, int reps,
                            std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw ValidationError("alpha must lie in (0, 0.5)");
    if (reps < 100) throw ValidationError("chi-square boundaries need at least 100 draws");
    const int L = null.num_regimes, S = null.num_analyses;
    auto scales = boundary_scales(family, null.info, true);
    Eigen::MatrixXd draws = draw_mvn(Eigen::VectorXd::Zero(L * S), null.sigma, reps, seed);
    Eigen::MatrixXd T(reps, S);
    for (int s = 0; s < S; ++s) {
        Eigen::MatrixXd blk = null.block(s, s);
        for (int r = 0; r < reps; ++r) {
            Eigen::VectorXd zs = draws.row(r).segment(s * L, L).transpose();
            T(r, s) = chi_square_statistic(std::vector<double>(zs.data(), zs.data() + L), blk).t;
        }
    }
    auto fwer = [&](double c) {
        int hits = 0;
        for (int r = 0; r < reps; ++r)
            for (int s = 0; s < S; ++s)
                if (T(r, s) > c * scales[s]) {
                    ++hits;
                    break;
                }
        return static_cast<double>(hits) / reps;
    };
    double lo = 0.0, hi = 60.0;
    if (!(fwer(lo) > alpha && fwer(hi) <= alpha)) {
        std::ostringstream os;
        os << "chi-square boundary bracketing failed: FWER(0) = " << fwer(lo) << ", FWER(60) = " << fwer(hi);
        throw NumericalError(os.str());
    }
    while (hi - lo > 1e-4) {
        double mid = 0.5 * (lo + hi);
        if (fwer(mid) > alpha)
            lo = mid;
        else
            hi = mid;
    }
    BoundarySpec b;
    b.family = family;
    b.alpha = alpha;
    b.chi_square = true;
    b.info = null.info;
    b.c = hi;
    for (int s = 0; s < S; ++s) b.critical.push_back(hi * scales[s]);
    b.attained_alpha = fwer(hi);
    b.attained_se = std::sqrt(b.attained_alpha * (1 - b.attained_alpha) / reps);
    return b;
}

}  // namespace smartmon

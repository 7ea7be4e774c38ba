#include "smartmon/mvn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "smartmon/error.hpp"
#include "smartmon/rng.hpp"

namespace smartmon {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

namespace {

constexpr double kPivotEps = 1e-10;

struct Factor {
    Eigen::MatrixXd L;     // lower triangular in permuted order
    Eigen::VectorXd b;     // permuted upper bounds
    std::vector<bool> degenerate;
};

// Cholesky with Genz-Bretz prioritization: at each step pick the most constraining variable.
Factor factor(const Eigen::MatrixXd& cov, Eigen::VectorXd b) {
    const int n = static_cast<int>(cov.rows());
    Eigen::MatrixXd S = cov;
    Factor f;
    f.L = Eigen::MatrixXd::Zero(n, n);
    f.degenerate.assign(n, false);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        int best = -1;
        double best_p = 2.0;
        for (int j = i; j < n; ++j) {
            double s2 = S(j, j) - f.L.row(j).head(i).squaredNorm();
            if (s2 <= kPivotEps * std::max(1.0, S(j, j))) continue;
            double bt = (b(j) - f.L.row(j).head(i).dot(y.head(i))) / std::sqrt(s2);
            double p = normal_cdf(bt);
            if (p < best_p) {
                best_p = p;
                best = j;
            }
        }
        if (best < 0) {
            for (int j = i; j < n; ++j) f.degenerate[j] = true;
            break;
        }
        if (best != i) {
            S.row(i).swap(S.row(best));
            S.col(i).swap(S.col(best));
            f.L.row(i).swap(f.L.row(best));
            std::swap(b(i), b(best));
        }
        double s = std::sqrt(S(i, i) - f.L.row(i).head(i).squaredNorm());
        f.L(i, i) = s;
        for (int j = i + 1; j < n; ++j) f.L(j, i) = (S(j, i) - f.L.row(j).head(i).dot(f.L.row(i).head(i))) / s;
        double bt = (b(i) - f.L.row(i).head(i).dot(y.head(i))) / s;
        double p = normal_cdf(bt);
        y(i) = p > 1e-300 ? -std::exp(-0.5 * bt * bt) / std::sqrt(2.0 * M_PI) / p : bt;
        if (!std::isfinite(y(i))) y(i) = 0.0;
    }
    f.b = b;
    return f;
}

double integrand(const Factor& f, const double* w, std::vector<double>& y) {
    const int n = static_cast<int>(f.b.size());
    double prob = 1.0;
    for (int i = 0; i < n; ++i) {
        double shift = 0.0;
        for (int k = 0; k < i; ++k) shift += f.L(i, k) * y[k];
        if (f.degenerate[i]) {
            if (shift > f.b(i) + 1e-12) return 0.0;
            y[i] = 0.0;
            continue;
        }
        double e = std::isinf(f.b(i)) ? 1.0 : normal_cdf((f.b(i) - shift) / f.L(i, i));
        prob *= e;
        if (prob <= 0.0) return 0.0;
        if (i + 1 < n) {
            double u = std::clamp(w[i] * e, 1e-16, 1.0 - 1e-16);
            y[i] = normal_quantile(u);
        }
    }
    return prob;
}

bool is_prime(int p) {
    for (int d = 2; d * d <= p; ++d)
        if (p % d == 0) return false;
    return p >= 2;
}

}  // namespace

MvnResult mvn_rectangle(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, const Eigen::VectorXd& upper,
                        double tol, std::uint64_t seed) {
    const int n = static_cast<int>(mean.size());
    if (cov.rows() != n || cov.cols() != n || upper.size() != n)
        throw ValidationError("mvn_rectangle: dimension mismatch");
    if (!(tol > 0.0)) throw ValidationError("mvn_rectangle: tolerance must be positive");
    MvnResult res;
    if (n == 0) {
        res.value = 1.0;
        return res;
    }
    Eigen::VectorXd b = upper - mean;
    for (int i = 0; i < n; ++i)
        if (b(i) == -std::numeric_limits<double>::infinity()) return res;
    if (n == 1) {
        res.value = cov(0, 0) > 0 ? normal_cdf(b(0) / std::sqrt(cov(0, 0))) : (b(0) >= 0 ? 1.0 : 0.0);
        return res;
    }
    Factor f = factor(cov, b);

    std::vector<double> q;
    for (int p = 2; static_cast<int>(q.size()) < n; ++p)
        if (is_prime(p)) q.push_back(std::fmod(std::sqrt(static_cast<double>(p)), 1.0));

    const int shifts = 12;
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<double>> delta(shifts, std::vector<double>(n));
    for (auto& d : delta)
        for (auto& v : d) v = unif(rng);

    std::vector<double> sums(shifts, 0.0), w(n), wa(n), y(n);
    long m_done = 0;
    long m_target = 256;
    const long m_max = 1L << 20;
    while (true) {
        for (int s = 0; s < shifts; ++s) {
            for (long j = m_done + 1; j <= m_target; ++j) {
                for (int i = 0; i < n; ++i) {
                    double x = std::fmod(j * q[i] + delta[s][i], 1.0);
                    w[i] = std::abs(2.0 * x - 1.0);
                    wa[i] = 1.0 - w[i];
                }
                sums[s] += 0.5 * (integrand(f, w.data(), y) + integrand(f, wa.data(), y));
            }
        }
        m_done = m_target;
        double mean_v = 0.0;
        for (double s : sums) mean_v += s / m_done;
        mean_v /= shifts;
        double var = 0.0;
        for (double s : sums) var += (s / m_done - mean_v) * (s / m_done - mean_v);
        var /= (shifts - 1.0) * shifts;
        res.value = mean_v;
        res.error = 3.0 * std::sqrt(var);
        res.points = m_done * shifts * 2;
        if (res.error <= tol || m_target >= m_max) break;
        m_target *= 2;
    }
    res.value = std::clamp(res.value, 0.0, 1.0);
    return res;
}

}  // namespace smartmon

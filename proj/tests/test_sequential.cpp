#include <gtest/gtest.h>

#include <cmath>

#include "smartmon/error.hpp"
#include "smartmon/mvn.hpp"
#include "smartmon/sequential.hpp"

using namespace smartmon;

namespace {

// P(Z1 < c1, Z2 < c2) for a standard bivariate normal, by Simpson's rule on the conditional.
double bvn(double c1, double c2, double rho) {
    const int m = 4000;
    const double lo = -9.0, h = (c1 - lo) / m;
    const double s = std::sqrt(1 - rho * rho);
    double sum = 0;
    for (int i = 0; i <= m; ++i) {
        const double z = lo + i * h;
        const double w = (i == 0 || i == m) ? 1 : (i % 2 ? 4 : 2);
        sum += w * std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI) * 0.5 * std::erfc(-(c2 - rho * z) / s / std::sqrt(2.0));
    }
    return sum * h / 3;
}

Eigen::MatrixXd equicorrelated(int L, double rho) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Constant(L, L, rho);
    R.diagonal().setOnes();
    return R;
}

}  // namespace

TEST(Mvn, UnivariateAndIndependent) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd up(3);
    up << 0.3, -0.4, 1.2;
    auto r = mvn_rectangle(mu, Eigen::MatrixXd::Identity(3, 3), up);
    EXPECT_NEAR(r.value, normal_cdf(0.3) * normal_cdf(-0.4) * normal_cdf(1.2), 1e-4);
    EXPECT_NEAR(normal_quantile(0.975), 1.959963985, 1e-8);
    EXPECT_NEAR(normal_cdf(normal_quantile(0.123)), 0.123, 1e-12);
}

TEST(Mvn, EquicorrelatedOrthant) {
    // P(all < 0) for three variables with correlation 1/2 is 1/4.
    auto r = mvn_rectangle(Eigen::VectorXd::Zero(3), equicorrelated(3, 0.5), Eigen::VectorXd::Zero(3), 1e-5);
    EXPECT_NEAR(r.value, 0.25, 3e-5);
    EXPECT_LT(r.error, 1e-4);
}

TEST(Mvn, SingularCovariance) {
    // Two copies of one variable: P = Phi(min bound).
    Eigen::MatrixXd c = Eigen::MatrixXd::Ones(2, 2);
    Eigen::VectorXd up(2);
    up << 0.5, 1.0;
    EXPECT_NEAR(mvn_rectangle(Eigen::VectorXd::Zero(2), c, up).value, normal_cdf(0.5), 1e-4);
}

TEST(Mvn, BivariateAgainstQuadrature) {
    Eigen::MatrixXd c(2, 2);
    c << 1, 0.7, 0.7, 1;
    Eigen::VectorXd up(2);
    up << 1.1, 0.4;
    EXPECT_NEAR(mvn_rectangle(Eigen::VectorXd::Zero(2), c, up, 1e-6).value, bvn(1.1, 0.4, 0.7), 2e-6);
}

TEST(NullCovariance, AnalyticStructure) {
    auto n = null_covariance_analytic({equicorrelated(2, 0.3), equicorrelated(2, 0.4)}, {0.25, 1.0});
    ASSERT_EQ(n.sigma.rows(), 4);
    EXPECT_NEAR(n.sigma(0, 1), 0.3, 1e-12);
    EXPECT_NEAR(n.sigma(2, 3), 0.4, 1e-12);
    EXPECT_NEAR(n.sigma(0, 2), 0.5, 1e-12);
    EXPECT_NEAR(n.sigma(0, 3), 0.5 * 0.4, 1e-12);
    EXPECT_TRUE(n.sigma.isApprox(n.sigma.transpose()));
    auto back = null_from_json(n.to_json());
    EXPECT_TRUE(back.sigma.isApprox(n.sigma));
    EXPECT_EQ(back.info, n.info);
}

TEST(NullCovariance, SimulatedCorrelation) {
    Eigen::MatrixXd draws(4, 2);
    draws << 1, 2, 2, 4, 3, 6, 4, 8.5;
    auto n = null_covariance_simulated(draws, 1, 2);
    EXPECT_NEAR(n.sigma(0, 0), 1.0, 1e-12);
    EXPECT_GT(n.sigma(0, 1), 0.99);
    EXPECT_EQ(n.source, "simulated");
}

TEST(NullCovariance, NearestPsd) {
    Eigen::MatrixXd m(2, 2);
    m << 1, 1.2, 1.2, 1;
    const double adj = nearest_psd(m);
    EXPECT_GT(adj, 0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
}

TEST(Boundaries, SingleLookIsNormalQuantile) {
    NullCovariance n = null_covariance_analytic({Eigen::MatrixXd::Identity(1, 1)}, {1.0});
    auto b = solve_boundaries(n, 0.05, BoundaryFamily::Pocock);
    EXPECT_NEAR(b.critical[0], normal_quantile(0.95), 1e-3);
}

TEST(Boundaries, TwoLooksAgainstQuadrature) {
    const double rho = std::sqrt(0.5);
    NullCovariance n = null_covariance_analytic({Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1)}, {0.5, 1});
    auto p = solve_boundaries(n, 0.05, BoundaryFamily::Pocock);
    EXPECT_DOUBLE_EQ(p.critical[0], p.critical[1]);
    EXPECT_NEAR(1 - bvn(p.critical[0], p.critical[1], rho), 0.05, 2e-4);
    auto o = solve_boundaries(n, 0.05, BoundaryFamily::OBF);
    EXPECT_NEAR(o.critical[0] / o.critical[1], std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(1 - bvn(o.critical[0], o.critical[1], rho), 0.05, 2e-4);
    EXPECT_GT(o.critical[0], p.critical[0]);
    EXPECT_LT(o.critical[1], p.critical[1]);
}

TEST(Boundaries, MoreRegimesRaiseTheBar) {
    std::vector<double> info{0.5, 1.0};
    double prev = 0;
    for (int L : {1, 2, 4, 8}) {
        auto n = null_covariance_analytic({equicorrelated(L, 0.5), equicorrelated(L, 0.5)}, info);
        auto b = solve_boundaries(n, 0.05, BoundaryFamily::Pocock);
        EXPECT_GT(b.critical[0], prev);
        prev = b.critical[0];
    }
    auto b = boundary_from_json(solve_boundaries(null_covariance_analytic({equicorrelated(2, 0.5)}, {1.0}), 0.05,
                                                 BoundaryFamily::OBF)
                                    .to_json());
    EXPECT_EQ(b.family, BoundaryFamily::OBF);
}

TEST(Decision, StopsOnAnyRegime) {
    BoundarySpec b;
    b.critical = {2.5, 2.0};
    auto d = decide({1.0, 2.6, 2.7}, b, 1);
    EXPECT_EQ(d.kind, Decision::Kind::StopReject);
    EXPECT_EQ(d.triggered, (std::vector<int>{1, 2}));
    EXPECT_EQ(decide({2.4, 1.0}, b, 1).kind, Decision::Kind::Continue);
    EXPECT_EQ(decide({1.9, 1.0}, b, 2).kind, Decision::Kind::FinalFailToReject);
    EXPECT_THROW(decide({1.0}, b, 3), ValidationError);
}

TEST(ChiSquare, HomogeneityStatistic) {
    // Independent unit-variance Z: T = sum over contrasts Z_l - Z_L with covariance I + J.
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
    auto t = chi_square_statistic({1.0, 1.0, 1.0}, I);
    EXPECT_NEAR(t.t, 0.0, 1e-12);
    EXPECT_EQ(t.dof, 2);
    auto u = chi_square_statistic({1.0, 0.0, 0.0}, I);
    // Contrasts (1, 0) with covariance [[2,1],[1,2]]: T = 2/3.
    EXPECT_NEAR(u.t, 2.0 / 3.0, 1e-12);
}

TEST(ChiSquare, BoundariesHoldAlpha) {
    auto n = null_covariance_analytic({equicorrelated(3, 0.3), equicorrelated(3, 0.3)}, {0.5, 1.0});
    auto b = chi_boundaries(n, 0.05, BoundaryFamily::Pocock, 40000, 5);
    EXPECT_TRUE(b.chi_square);
    auto z = draw_mvn(Eigen::VectorXd::Zero(6), n.sigma, 40000, 77);
    int reject = 0;
    for (int r = 0; r < z.rows(); ++r)
        for (int s = 1; s <= 2; ++s) {
            std::vector<double> zs{z(r, 3 * (s - 1)), z(r, 3 * (s - 1) + 1), z(r, 3 * (s - 1) + 2)};
            if (decide_chi(chi_square_statistic(zs, n.block(s - 1, s - 1)).t, b, s).kind ==
                Decision::Kind::StopReject) {
                ++reject;
                break;
            }
        }
    EXPECT_NEAR(reject / 40000.0, 0.05, 4 * std::sqrt(0.05 * 0.95 / 40000) * std::sqrt(2.0));
}

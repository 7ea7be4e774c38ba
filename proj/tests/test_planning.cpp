#include <gtest/gtest.h>

#include <cmath>

#include "smartmon/error.hpp"
#include "smartmon/mvn.hpp"
#include "smartmon/planning.hpp"

using namespace smartmon;

namespace {

AlternativeSpec one_regime(double effect, int S) {
    AlternativeSpec a;
    a.values = {effect};
    a.control = 0.0;
    for (int s = 0; s < S; ++s) a.unit_var.push_back(Eigen::VectorXd::Constant(1, 1.0 * S / (s + 1)));
    return a;
}

}  // namespace

TEST(Search, FindsSmallestPassingN) {
    auto r = sample_size_search(0.8, [](int n) { return n >= 1234 ? 0.81 : 0.5; });
    EXPECT_EQ(r.n, 1234);
    auto r2 = sample_size_search(0.8, [](int n) { return n >= 7 ? 0.9 : 0.1; }, SearchOptions{50});
    EXPECT_EQ(r2.n, 50);
    EXPECT_THROW(sample_size_search(1.2, [](int) { return 1.0; }), ValidationError);
    SearchOptions capped;
    capped.max_n = 500;
    EXPECT_THROW(sample_size_search(0.8, [](int) { return 0.1; }, capped), NumericalError);
}

TEST(Search, DetectsNonMonotonePower) {
    EXPECT_THROW(sample_size_search(0.8, [](int n) { return 0.5 - n * 1e-4; }), NumericalError);
}

TEST(Power, SingleLookClosedForm) {
    auto alt = one_regime(0.25, 1);
    NullCovariance null;
    null.num_regimes = 1;
    null.num_analyses = 1;
    null.sigma = Eigen::MatrixXd::Ones(1, 1);
    null.info = {1.0};
    BoundarySpec b;
    b.critical = {1.6448536};
    b.info = {1.0};
    const int n = 100;
    const double expect = 1 - normal_cdf(b.critical[0] - 0.25 * std::sqrt(n));
    EXPECT_NEAR(power_integral(n, alt, b, null).power, expect, 1e-4);
    EXPECT_NEAR(power_draws(n, alt, b, null, 200000, 3).power, expect, 0.005);
}

TEST(Power, IntegralAndDrawsAgree) {
    auto alt = one_regime(0.2, 2);
    alt.values = {0.2, 0.1};
    alt.unit_var = {Eigen::Vector2d(2.0, 2.0), Eigen::Vector2d(1.0, 1.0)};
    NullCovariance null;
    null.num_regimes = 2;
    null.num_analyses = 2;
    null.info = {0.5, 1.0};
    Eigen::MatrixXd R(2, 2);
    R << 1, 0.4, 0.4, 1;
    null.sigma.resize(4, 4);
    const double c = std::sqrt(0.5);
    null.sigma << R, c * R, c * R, R;
    auto b = solve_boundaries(null, 0.05, BoundaryFamily::Pocock);
    auto pi = power_integral(150, alt, b, null);
    auto pd = power_draws(150, alt, b, null, 100000, 4);
    EXPECT_NEAR(pi.power, pd.power, 0.006);
    EXPECT_NEAR(pi.by_analysis[0] + pi.by_analysis[1], pi.power, 1e-3);
    // Zero effect gives the size.
    alt.values = {0.0, 0.0};
    EXPECT_NEAR(power_integral(150, alt, b, null).power, 0.05, 1e-3);
}

TEST(Power, AlternativeMeans) {
    auto alt = one_regime(0.3, 2);
    alt.control = 0.1;
    auto mu = mu_alternative(64, alt);
    EXPECT_NEAR(mu(0), 0.2 * std::sqrt(64 / 2.0), 1e-12);
    EXPECT_NEAR(mu(1), 0.2 * 8, 1e-12);
    auto back = alternative_from_json(alt.to_json());
    EXPECT_EQ(back.values, alt.values);
    EXPECT_DOUBLE_EQ(back.control, alt.control);
}

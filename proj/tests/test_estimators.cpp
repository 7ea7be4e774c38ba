#include <gtest/gtest.h>

#include <cmath>

#include "smartmon/error.hpp"
#include "smartmon/estimators.hpp"
#include "test_support.hpp"

using namespace smartmon;

namespace {

struct Data {
    test::Fixture f;
    Snapshot interim, final;
};

const Data& data() {
    static Data d = [] {
        Data d;
        d.f = test::pcst({49.5, 49.5, 49.5, 49.5, 47.5, 47.5, 47.5, 47.5});
        auto c = test::cohort(d.f, 600, 21);
        d.interim = take_snapshot(c, 600);
        d.final = take_snapshot(c, 5000);
        return d;
    }();
    return d;
}

}  // namespace

TEST(Estimators, CompleteDataIdentities) {
    const auto& d = data();
    const auto& design = d.f.design;
    auto props = Propensities::known(design);
    auto q = fit_q_functions(d.final, design, design.regimes(), d.f.q);
    for (int l = 0; l < 8; ++l) {
        const auto& r = design.regimes()[l];
        EXPECT_NEAR(iaipwe(d.final, design, r, props, &q, l), aipwe(d.final, design, r, props, &q, l), 1e-10);
        const double base = ipwe(d.final, design, r, props);
        EXPECT_NEAR(iaipwe(d.final, design, r, props, nullptr, l), base, 1e-10);
        EXPECT_NEAR(aipwe(d.final, design, r, props, nullptr, l), base, 1e-10);
    }
}

TEST(Estimators, TwoStageFormMatches) {
    const auto& d = data();
    const auto& design = d.f.design;
    for (bool estimated : {false, true}) {
        auto props = estimated ? Propensities::estimated(design, d.interim) : Propensities::known(design);
        auto q = fit_q_functions(d.interim, design, design.regimes(), d.f.q);
        for (int l = 0; l < 8; ++l) {
            const auto& r = design.regimes()[l];
            EXPECT_NEAR(iaipwe(d.interim, design, r, props, &q, l),
                        iaipwe_two_stage(d.interim, design, r, props, &q, l), 1e-10);
        }
    }
}

TEST(Estimators, TermsAverageToEstimate) {
    const auto& d = data();
    const auto& design = d.f.design;
    auto props = Propensities::known(design);
    auto q = fit_q_functions(d.interim, design, design.regimes(), d.f.q);
    auto rates = estimate_nu(d.interim, 2);
    auto terms = iaipwe_terms(d.interim, design, design.regimes()[2], rates, props, &q, 2);
    ASSERT_EQ(static_cast<int>(terms.size()), d.interim.n_enrolled());
    double mean = 0;
    for (double t : terms) mean += t / terms.size();
    EXPECT_NEAR(mean, iaipwe(d.interim, design, design.regimes()[2], props, &q, 2), 1e-10);
}

TEST(Estimators, AnalyticGradientMatchesNumeric) {
    const auto& d = data();
    const auto& design = d.f.design;
    auto props = Propensities::estimated(design, d.interim);
    auto q = fit_q_functions(d.interim, design, design.regimes(), d.f.q);
    auto rates = estimate_nu(d.interim, 2);
    for (int l : {0, 5}) {
        const auto& r = design.regimes()[l];
        auto ga = phi_gradient_analytic(d.interim, design, r, rates, props, &q, l);
        auto gn = phi_gradient_numeric(d.interim, design, r, rates, props, &q, l);
        ASSERT_EQ(ga.theta.size(), gn.theta.size());
        for (int i = 0; i < ga.theta.size(); ++i)
            EXPECT_NEAR(ga.theta[i], gn.theta[i], 1e-5 * (1 + std::abs(gn.theta[i]))) << "theta " << i;
        for (size_t k = 0; k < ga.beta.size(); ++k)
            for (int i = 0; i < ga.beta[k].size(); ++i)
                EXPECT_NEAR(ga.beta[k][i], gn.beta[k][i], 1e-5 * (1 + std::abs(gn.beta[k][i])));
    }
}

TEST(Estimators, SandwichFormsAgree) {
    const auto& d = data();
    EstimatorOptions o;
    o.q = d.f.q;
    auto a = stacked_estimate(d.interim, d.f.design, d.f.design.regimes(), o);
    o.covariance = CovarianceMethod::SandwichNumeric;
    auto b = stacked_estimate(d.interim, d.f.design, d.f.design.regimes(), o);
    EXPECT_LT((a.covariance - b.covariance).norm(), 1e-4 * a.covariance.norm());
    for (int l = 0; l < 8; ++l) EXPECT_DOUBLE_EQ(a.values[l], b.values[l]);
}

TEST(Estimators, BootstrapCloseToSandwich) {
    const auto& d = data();
    EstimatorOptions o;
    o.kind = EstimatorKind::IPWE;
    auto a = stacked_estimate(d.final, d.f.design, d.f.design.regimes(), o);
    o.covariance = CovarianceMethod::Bootstrap;
    o.bootstrap_reps = 400;
    o.seed = 3;
    auto b = stacked_estimate(d.final, d.f.design, d.f.design.regimes(), o);
    for (int l = 0; l < 8; ++l) EXPECT_NEAR(b.se(l) / a.se(l), 1.0, 0.2) << l;
}

TEST(Estimators, ControlArmContrast) {
    const auto& d = data();
    EstimatorOptions o;
    o.q = d.f.q;
    o.control.kind = ControlSpec::Kind::Arm;
    o.control.arm_action = 1;
    // Only regimes starting with PCST-Full are compared with the PCST-Brief arm.
    std::vector<Regime> first;
    for (auto& r : d.f.design.regimes())
        if (regime_action(d.f.design, r, 1, {}) == 0) first.push_back(r);
    auto e = stacked_estimate(d.final, d.f.design, first, o);
    ASSERT_EQ(e.covariance.rows(), e.num_regimes() + 1);
    double arm_mean = 0;
    int n = 0;
    for (auto& rec : d.final.records)
        if (rec.a[0] == 1) arm_mean += rec.y, ++n;
    EXPECT_NEAR(e.control_value, arm_mean / n, 1e-8);
    for (int l = 0; l < e.num_regimes(); ++l) {
        const double v = e.covariance(l, l) + e.covariance(e.num_regimes(), e.num_regimes()) -
                         2 * e.covariance(l, e.num_regimes());
        EXPECT_NEAR(e.contrast_se(l), std::sqrt(v), 1e-12);
    }
}

TEST(Estimators, EmptySnapshotIsRejected) {
    const auto& d = data();
    Snapshot empty;
    empty.day = 1;
    EstimatorOptions o;
    EXPECT_ANY_THROW(stacked_estimate(empty, d.f.design, d.f.design.regimes(), o));
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "smartmon/error.hpp"
#include "smartmon/model.hpp"
#include "test_support.hpp"

using namespace smartmon;

TEST(Enrollment, UniformDaysAreReproducible) {
    EnrollmentProcess e;
    auto a = draw_enrollment(e, 500, 3);
    auto b = draw_enrollment(e, 500, 3);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, draw_enrollment(e, 500, 4));
    EXPECT_GE(*std::min_element(a.begin(), a.end()), 0);
    EXPECT_LE(*std::max_element(a.begin(), a.end()), 1000);
}

TEST(Enrollment, PeriodsMatchProbabilities) {
    EnrollmentProcess e;
    e.kind = EnrollmentProcess::Kind::Periods;
    e.periods = {{0, 500}, {501, 600}, {601, 700}, {701, 1000}};
    e.probs = {0.5, 0.1, 0.1, 0.3};
    auto days = draw_enrollment(e, 20000, 9);
    const double first = std::count_if(days.begin(), days.end(), [](int d) { return d <= 500; }) / 20000.0;
    const double second = std::count_if(days.begin(), days.end(), [](int d) { return d > 500 && d <= 600; }) / 20000.0;
    EXPECT_NEAR(first, 0.5, 0.015);
    EXPECT_NEAR(second, 0.1, 0.01);
    e.probs = {0.5, 0.1, 0.1, 0.1};
    EXPECT_THROW(validate_enrollment(e), ValidationError);
}

TEST(Simulate, StageDaysFollowGaps) {
    auto f = test::pcst();
    Rng rng = make_rng(1);
    auto tr = simulate_trajectory(f.model, f.design, rng, 37);
    ASSERT_EQ(tr.stage_days.size(), 2u);
    EXPECT_EQ(tr.stage_days[0], 37);
    EXPECT_EQ(tr.stage_days[1], 137);
    EXPECT_EQ(tr.outcome_day, 237);
    ASSERT_EQ(tr.x.size(), 2u);
    EXPECT_EQ(tr.x[0].size(), 2u);

    TimingSpec jitter{10};
    for (int i = 0; i < 50; ++i) {
        auto t = simulate_trajectory(f.model, f.design, rng, 0, jitter);
        EXPECT_GE(t.stage_days[1], 90);
        EXPECT_LE(t.stage_days[1], 110);
    }
}

TEST(Simulate, ActionsRespectFeasibleSets) {
    auto f = test::pcst();
    Rng rng = make_rng(2);
    for (int i = 0; i < 500; ++i) {
        auto tr = simulate_trajectory(f.model, f.design, rng, 0);
        const int r2 = static_cast<int>(tr.x[1][1]);
        const auto& opts = f.design.feasible(2, {tr.a[0], r2}).options;
        EXPECT_NE(std::find(opts.begin(), opts.end(), tr.a[1]), opts.end());
    }
}

TEST(Simulate, ForcedRegimeIsFollowed) {
    auto f = test::pcst();
    Rng rng = make_rng(3);
    for (auto& r : f.design.regimes()) {
        for (int i = 0; i < 20; ++i) {
            auto tr = simulate_trajectory(f.model, f.design, rng, 0, {}, &r);
            History h{tr.x, tr.a};
            EXPECT_TRUE(consistency_indicator(f.design, r, h, 2));
        }
    }
}

TEST(TrueValue, CalibrationHitsTargets) {
    std::vector<double> vp3{50.5, 49.0, 49.0, 47.5, 47.5, 47.5, 47.5, 47.5};
    auto f = test::pcst(vp3);
    for (size_t l = 0; l < vp3.size(); ++l)
        EXPECT_NEAR(true_value(f.model, f.design, f.design.regimes()[l]).value, vp3[l], 1e-8);
}

TEST(TrueValue, AnalyticAgreesWithMonteCarlo) {
    // The case-study model has a switch covariate and a logistic-free response.
    auto d = design_from_json(read_json_file(test::data("case_study/design.json")));
    auto m = model_from_json(read_json_file(test::data("case_study/model.json")), d);
    for (auto& r : d.regimes()) {
        auto exact = true_value(m, d, r);
        auto mc = true_value_mc(m, d, r, 40000, 11);
        EXPECT_NEAR(exact.value, mc.value, 4 * mc.mcse) << r.label;
    }
}

TEST(TrueValue, LogisticResponseByQuadrature) {
    auto f = test::pcst({49.5, 49.5, 49.5, 49.5, 47.5, 47.5, 47.5, 47.5});
    const auto& r = f.design.regimes()[0];
    auto mc = true_value_mc(f.model, f.design, r, 40000, 12);
    EXPECT_NEAR(49.5, mc.value, 4 * mc.mcse);
}

TEST(ModelJson, RoundTripAndErrors) {
    auto f = test::pcst();
    auto j = model_to_json(f.model, f.design);
    auto m2 = model_from_json(j, f.design);
    EXPECT_EQ(model_to_json(m2, f.design), j);

    auto bad = read_json_file(test::data("pcst/model.json"));
    bad["covariates"][0]["dist"] = "cauchy";
    EXPECT_THROW(model_from_json(bad, f.design), ValidationError);
    bad = read_json_file(test::data("pcst/model.json"));
    bad["covariates"][1]["p"] = 1.5;
    EXPECT_THROW(model_from_json(bad, f.design), ValidationError);
}

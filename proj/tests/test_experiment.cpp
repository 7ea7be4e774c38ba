#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "smartmon/error.hpp"
#include "smartmon/experiment.hpp"
#include "test_support.hpp"

using namespace smartmon;

namespace {

ExperimentConfig small_config(int n, int reps) {
    auto f = test::pcst({49.5, 49.5, 49.5, 49.5, 47.5, 47.5, 47.5, 47.5});
    ExperimentConfig c;
    c.design = f.design;
    c.model = f.model;
    c.n = n;
    c.analysis_days = {500, kAnalysisEnd};
    c.reps = reps;
    c.seed = 99;
    for (auto k : {EstimatorKind::IPWE, EstimatorKind::IAIPWE}) {
        AnalysisArm a;
        a.name = to_string(k);
        a.estimator.kind = k;
        if (k != EstimatorKind::IPWE) a.estimator.q = f.q;
        a.estimator.control.kind = ControlSpec::Kind::Fixed;
        a.estimator.control.value = 47.5;
        c.arms.push_back(a);
    }
    return c;
}

}  // namespace

TEST(Experiment, DeterministicForSeed) {
    auto c = small_config(300, 6);
    auto a = run_experiment(c);
    auto b = run_experiment(c);
    EXPECT_EQ(a.arms[1].values, b.arms[1].values);
    c.seed = 100;
    EXPECT_NE(run_experiment(c).arms[1].values, a.arms[1].values);
}

TEST(Experiment, CohortMatchesReplicate) {
    auto c = small_config(200, 1);
    auto cohort = simulate_cohort(c, 0);
    ASSERT_EQ(cohort.size(), 200u);
    auto again = simulate_cohort(c, 0);
    EXPECT_EQ(cohort[17].y, again[17].y);
    EXPECT_NE(simulate_cohort(c, 1)[17].y, cohort[17].y);
}

TEST(Experiment, BoundaryExtremes) {
    auto c = small_config(300, 5);
    BoundarySpec never, always;
    never.critical = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    always.critical = {-1e9, -1e9};
    never.info = always.info = {0.5, 1.0};
    c.arms[0].boundaries = never;
    c.arms[1].boundaries = always;
    auto r = run_experiment(c);
    EXPECT_DOUBLE_EQ(r.arms[0].total_reject, 0.0);
    EXPECT_DOUBLE_EQ(r.arms[1].early_reject, 1.0);
    EXPECT_NEAR(r.arms[1].ess_mean, r.mean_enrolled[0], 1e-9);
    EXPECT_NEAR(r.arms[0].ess_mean, 300.0, 1e-9);
}

TEST(Experiment, SandwichMatchesSpread) {
    auto c = small_config(500, 150);
    auto r = run_experiment(c);
    const auto& a = r.arm("IAIPWE");
    for (int s = 0; s < 2; ++s)
        for (int l = 0; l < 8; ++l) EXPECT_NEAR(a.avg_se[s][l] / a.sd[s][l], 1.0, 0.25) << s << "," << l;
    auto ratio = mse_ratio_table(r.arm("IPWE"), a);
    ASSERT_EQ(ratio.size(), 2u);
    ASSERT_EQ(ratio[0].size(), 8u);
    std::ostringstream csv;
    r.write_csv(csv);
    EXPECT_NE(csv.str().find("IAIPWE"), std::string::npos);
    EXPECT_EQ(r.to_json()["arms"].size(), 2u);
}

TEST(Experiment, PointOnlyArms) {
    auto c = small_config(300, 4);
    for (auto& a : c.arms) a.estimator.covariance = CovarianceMethod::None;
    auto r = run_experiment(c);
    EXPECT_TRUE(std::isnan(r.arms[0].variances(0, 0)));
    BoundarySpec b;
    b.critical = {2, 2};
    c.arms[0].boundaries = b;
    EXPECT_THROW(run_experiment(c), ValidationError);
}

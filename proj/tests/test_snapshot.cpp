#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "smartmon/error.hpp"
#include "smartmon/snapshot.hpp"
#include "test_support.hpp"

using namespace smartmon;

TEST(Snapshot, ObserveByCalendarDay) {
    auto f = test::pcst();
    Rng rng = make_rng(5);
    auto tr = simulate_trajectory(f.model, f.design, rng, 100);
    EXPECT_FALSE(observe(tr, 99).enrolled);
    auto r1 = observe(tr, 150);
    EXPECT_TRUE(r1.enrolled);
    EXPECT_EQ(r1.kappa, 1);
    EXPECT_EQ(r1.x.size(), 1u);
    EXPECT_FALSE(r1.complete);
    EXPECT_EQ(observe(tr, 200).kappa, 2);
    auto r3 = observe(tr, 300);
    EXPECT_TRUE(r3.complete);
    EXPECT_DOUBLE_EQ(r3.y, tr.y);
}

TEST(Snapshot, CountsAndCompleteCases) {
    auto f = test::pcst();
    auto c = test::cohort(f, 300, 6);
    auto s = take_snapshot(c, 500);
    EXPECT_LE(s.n_complete(), s.n_reached(2));
    EXPECT_LE(s.n_reached(2), s.n_enrolled());
    EXPECT_EQ(s.complete_cases().n_enrolled(), s.n_complete());
    EXPECT_EQ(take_snapshot(c, 5000).n_complete(), 300);
}

TEST(Snapshot, CoarseningLevels) {
    auto f = test::pcst();
    auto c = test::cohort(f, 200, 7);
    auto s = take_snapshot(c, 5000);
    const auto& d = f.design.regimes()[0];
    for (auto& rec : s.records) {
        int lvl = coarsening_level(f.design, rec, d);
        History h{rec.x, rec.a};
        if (consistency_indicator(f.design, d, h, 2))
            EXPECT_EQ(lvl, kLevelInf);
        else
            EXPECT_LT(lvl, kLevelInf);
    }
}

TEST(Snapshot, ProgressRates) {
    auto f = test::pcst();
    auto c = test::cohort(f, 400, 8);
    auto s = take_snapshot(c, 600);
    auto nu = estimate_nu(s, 2);
    ASSERT_EQ(nu.nu.size(), 3u);
    EXPECT_DOUBLE_EQ(nu.nu[0], 1.0);
    EXPECT_NEAR(nu.nu[1], static_cast<double>(s.n_reached(2)) / s.n_enrolled(), 1e-12);
    EXPECT_NEAR(nu.nu[2], static_cast<double>(s.n_complete()) / s.n_enrolled(), 1e-12);
}

TEST(Snapshot, EstimatedPropensitiesAreFrequencies) {
    auto f = test::pcst();
    auto c = test::cohort(f, 400, 9);
    auto s = take_snapshot(c, 5000);
    auto p = Propensities::estimated(f.design, s);
    int n0 = 0;
    for (auto& r : s.records) n0 += r.a[0] == 0;
    EXPECT_NEAR(p.pi(1, 0, 0), static_cast<double>(n0) / s.n_enrolled(), 1e-12);
    EXPECT_NEAR(p.pi(1, 0, 0) + p.pi(1, 0, 1), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(Propensities::known(f.design).pi(1, 0, 0), 0.5);
}

TEST(SnapshotCsv, RoundTrip) {
    auto f = test::pcst();
    auto c = test::cohort(f, 150, 10);
    auto s = take_snapshot(c, 450);
    s.planned_n = 150;
    std::stringstream io;
    write_snapshot_csv(io, f.design, s);
    auto back = read_snapshot_csv(io, f.design, 450, 150);
    ASSERT_EQ(back.n_enrolled(), s.n_enrolled());
    for (int i = 0; i < s.n_enrolled(); ++i) {
        EXPECT_EQ(back.records[i].kappa, s.records[i].kappa);
        EXPECT_EQ(back.records[i].complete, s.records[i].complete);
        EXPECT_EQ(back.records[i].a, s.records[i].a);
        for (size_t k = 0; k < s.records[i].x.size(); ++k)
            for (size_t j = 0; j < s.records[i].x[k].size(); ++j)
                EXPECT_DOUBLE_EQ(back.records[i].x[k][j], s.records[i].x[k][j]);
    }
}

TEST(SnapshotCsv, RejectsDataFromTheFuture) {
    auto f = test::pcst();
    // Enrolled on day 400, so no outcome can exist by day 450.
    std::string csv = "id,enroll_day,X11,X12,a1,X21,R2,a2,y\n1,400,45,1,0,,,,12.5\n";
    std::istringstream in(csv);
    EXPECT_THROW(read_snapshot_csv(in, f.design, 450, 10), ValidationError);
    std::istringstream in2("id,enroll_day,X11,a1,X21,R2,a2,y\n");
    EXPECT_THROW(read_snapshot_csv(in2, f.design, 450, 10), ValidationError);
}

TEST(SnapshotCsv, ShippedFixturesLoad) {
    auto d = design_from_json(read_json_file(test::data("case_study/design.json")));
    auto side = sidecar_from_json(read_json_file(test::data("case_study/snapshot_interim.json")));
    std::ifstream in(test::data("case_study/snapshot_interim.csv"));
    auto s = read_snapshot_csv(in, d, side.analysis_day, side.planned_n);
    EXPECT_EQ(side.analysis_day, 500);
    EXPECT_EQ(side.planned_n, 284);
    EXPECT_GT(s.n_enrolled(), s.n_complete());
}

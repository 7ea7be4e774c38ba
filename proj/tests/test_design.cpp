#include <gtest/gtest.h>

#include <set>

#include "smartmon/design.hpp"
#include "smartmon/error.hpp"
#include "test_support.hpp"

using namespace smartmon;

namespace {

nlohmann::json pcst_json() { return read_json_file(test::data("pcst/design.json")); }

}  // namespace

TEST(Design, EnumeratesEmbeddedRegimes) {
    auto d = design_from_json(pcst_json());
    ASSERT_EQ(d.regimes().size(), 8u);
    EXPECT_EQ(design_from_json(read_json_file(test::data("case_study/design.json"))).regimes().size(), 8u);
    EXPECT_EQ(design_from_json(read_json_file(test::data("singleton/design.json"))).regimes().size(), 4u);
    for (auto& r : d.regimes()) EXPECT_NO_THROW(check_regime(d, r));
    // Labels are unique and descriptions name treatments.
    std::set<std::string> labels;
    for (auto& r : d.regimes()) labels.insert(r.label);
    EXPECT_EQ(labels.size(), 8u);
    EXPECT_NE(d.regimes()[0].description.find("PCST-Full"), std::string::npos);
}

TEST(Design, RegimeActionAndConsistency) {
    auto d = design_from_json(pcst_json());
    const Regime& r = d.regimes()[0];
    History h;
    h.x = {{50.0, 1.0}};
    const Code a1 = regime_action(d, r, h);
    h.a = {a1};
    EXPECT_TRUE(consistency_indicator(d, r, h, 1));
    h.a = {1 - a1};
    EXPECT_FALSE(consistency_indicator(d, r, h, 1));

    // Stage 2 depends on the response in X2.
    h.a = {a1};
    h.x.push_back({3.0, 0.0});
    const Code nonresp = regime_action(d, r, h);
    h.x.back() = {3.0, 1.0};
    const Code resp = regime_action(d, r, h);
    const auto& ok0 = d.feasible(2, {a1, 0}).options;
    const auto& ok1 = d.feasible(2, {a1, 1}).options;
    EXPECT_NE(std::find(ok0.begin(), ok0.end(), nonresp), ok0.end());
    EXPECT_NE(std::find(ok1.begin(), ok1.end(), resp), ok1.end());
    h.a = {a1, resp};
    EXPECT_TRUE(consistency_indicator(d, r, h, 2));
}

TEST(Design, PropensitiesFollowFeasibleSets) {
    auto d = design_from_json(pcst_json());
    EXPECT_DOUBLE_EQ(d.propensity(1, {}, 0), 0.5);
    EXPECT_DOUBLE_EQ(d.propensity(2, {0, 0}, 0), 0.5);
    EXPECT_DOUBLE_EQ(d.propensity(2, {0, 0}, 1), 0.0);
}

TEST(Design, RejectsInfeasibleRegime) {
    auto j = pcst_json();
    // Non-responders after PCST-Full cannot receive PCST-Full again.
    j["regimes"] = nlohmann::json::array({{{"label", "bad"},
                                           {"rules",
                                            {{{"stage", 1}, {"action", 0}},
                                             {{"stage", 2}, {"prior", 0}, {"response", 0}, {"action", 1}},
                                             {{"stage", 2}, {"prior", 0}, {"response", 1}, {"action", 2}}}}}});
    try {
        design_from_json(j);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("/regimes/0"), std::string::npos) << e.what();
    }
}

TEST(Design, RejectsBadPropensities) {
    auto j = pcst_json();
    j["stages"][0]["feasible"][0]["propensities"] = {0.7, 0.7};
    try {
        design_from_json(j);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("/stages/0/feasible/0"), std::string::npos) << e.what();
    }
}

TEST(Design, JsonRoundTrip) {
    auto d = design_from_json(pcst_json());
    auto d2 = design_from_json(design_to_json(d));
    ASSERT_EQ(d2.regimes().size(), d.regimes().size());
    EXPECT_EQ(design_to_json(d2), design_to_json(d));
    EXPECT_EQ(d2.gaps(), d.gaps());
}

TEST(Features, ParsesAndEvaluatesTerms) {
    auto d = design_from_json(pcst_json());
    const auto& layout = d.layout();
    std::vector<std::vector<double>> x{{40.0, 1.0}, {2.5, 0.0}};
    std::vector<int> a{1, 2};
    double y = 7.0;
    RowView row{x, a, &y};
    EXPECT_DOUBLE_EQ(layout.eval(layout.parse_monomial("1"), row), 1.0);
    EXPECT_DOUBLE_EQ(layout.eval(layout.parse_monomial("X11*X12"), row), 40.0);
    EXPECT_DOUBLE_EQ(layout.eval(layout.parse_monomial("(1-R2)*X21"), row), 2.5);
    EXPECT_DOUBLE_EQ(layout.eval(layout.parse_monomial("A1==1*A2 in {1,2}"), row), 1.0);
    EXPECT_DOUBLE_EQ(layout.eval(layout.parse_monomial("A2==3"), row), 0.0);
    // A2b = 1{A2 in {0,1}} + R2*1{A2==2}: a non-responder on maintenance scores 0.
    EXPECT_DOUBLE_EQ(layout.eval(layout.parse_monomial("A2b"), row), 0.0);
    EXPECT_EQ(layout.parse_monomial("A1==1*X21").max_stage, 2);
    EXPECT_THROW(layout.parse_monomial("X99"), ValidationError);
    EXPECT_THROW(layout.parse_monomial("A2 in {1"), ValidationError);
}

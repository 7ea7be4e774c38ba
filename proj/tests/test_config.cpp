#include <gtest/gtest.h>

#include "smartmon/config.hpp"
#include "smartmon/error.hpp"
#include "smartmon/workflow.hpp"
#include "test_support.hpp"

using namespace smartmon;

namespace {

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

nlohmann::json plan_json() { return read_json_file(test::data("case_study/plan.json")); }
nlohmann::json design_json() { return read_json_file(test::data("case_study/design.json")); }

std::string validate(const nlohmann::json& d, const nlohmann::json& p) {
    return error_of([&] { validate_config(d, nullptr, p, test::data("case_study")); });
}

}  // namespace

TEST(Config, ShippedBundlesValidate) {
    for (auto dir : {"case_study", "pcst", "singleton"}) {
        auto b = load_bundle(test::data(dir));
        EXPECT_GT(b.plan.n, 0) << dir;
        EXPECT_FALSE(b.plan.q.empty()) << dir;
    }
    auto cs = load_bundle(test::data("case_study"));
    EXPECT_EQ(cs.plan.null_n, 2000);
    EXPECT_TRUE(cs.model.has_value());
    EXPECT_EQ(cs.plan.control.kind, ControlSpec::Kind::Fixed);
}

TEST(Config, PlanErrorsCarryPointers) {
    auto p = plan_json();
    p["alpha"] = 1.5;
    p["analysis_days"] = {700, 500};
    p["estimators"] = {"IPWE", "DR"};
    p["control"] = {{"kind", "placebo"}};
    auto msg = validate(design_json(), p);
    for (auto ptr : {"/alpha", "/analysis_days/1", "/estimators/1", "/control/kind"})
        EXPECT_NE(msg.find(ptr), std::string::npos) << ptr << " in " << msg;
    EXPECT_NE(msg.find("plan.json"), std::string::npos);
}

TEST(Config, ErrorsFromEveryDocumentAreCollected) {
    auto d = design_json();
    d["stages"][0]["gap_days"] = -3;
    auto p = plan_json();
    p["n"] = 0;
    auto msg = validate(d, p);
    EXPECT_NE(msg.find("design.json"), std::string::npos) << msg;
    EXPECT_NE(msg.find("/stages/0"), std::string::npos) << msg;
}

TEST(Config, InformationMustMatchEnrollment) {
    auto p = plan_json();
    p["info"] = {0.9, 1.0};
    auto msg = validate(design_json(), p);
    EXPECT_NE(msg.find("/info/0"), std::string::npos) << msg;
    p["info"] = {0.33, 1.0};
    EXPECT_EQ(validate(design_json(), p), "");
}

TEST(Config, AugmentedEstimatorsNeedFeatures) {
    auto p = plan_json();
    p.erase("q_features");
    EXPECT_NE(validate(design_json(), p).find("/q_features"), std::string::npos);
    p["estimators"] = {"IPWE"};
    EXPECT_EQ(validate(design_json(), p), "");
    p["q_features"] = {{"q_features", {{"1"}, {"1", "X99"}}}};
    p["estimators"] = {"IAIPWE"};
    EXPECT_NE(validate(design_json(), p).find("/q_features"), std::string::npos);
}

TEST(Config, InfoBracket) {
    auto b = load_bundle(test::data("case_study"));
    auto [complete, enrolled] = info_bracket(b.design, b.plan.enrollment, 500);
    EXPECT_NEAR(enrolled, 0.5, 0.002);
    EXPECT_NEAR(complete, 319.0 / 1001.0, 0.002);
    EXPECT_EQ(analysis_index(b.plan, 500), 1);
    EXPECT_EQ(analysis_index(b.plan, 1181), 2);
    EXPECT_THROW(analysis_index(b.plan, 300), ValidationError);
}

TEST(Config, DigestIgnoresKeyOrder) {
    auto a = nlohmann::json::parse(R"({"n": 10, "alpha": 0.05, "name": "x"})");
    auto b = nlohmann::json::parse(R"({"name": "x", "alpha": 0.05, "n": 10})");
    EXPECT_EQ(config_digest(a), config_digest(b));
    b["n"] = 11;
    EXPECT_NE(config_digest(a), config_digest(b));
    RunManifest m{"validate", config_digest(a), 7, library_version(), 0.5};
    auto j = m.to_json();
    EXPECT_EQ(j["seed"], 7);
    EXPECT_EQ(j["version"], library_version());
}

TEST(Config, PlanRoundTrip) {
    auto b = load_bundle(test::data("case_study"));
    auto j = plan_to_json(b.plan);
    auto p = plan_from_json(j, b.design);
    EXPECT_EQ(plan_to_json(p), j);
}

TEST(Workflow, BoundaryFilesRoundTrip) {
    auto set = boundary_set_from_json(read_json_file(test::data("case_study/boundaries_pocock.json")));
    ASSERT_EQ(set.kinds.size(), 3u);
    auto again = boundary_set_from_json(set.to_json());
    for (size_t i = 0; i < 3; ++i) EXPECT_EQ(again.specs[i].critical, set.specs[i].critical);
    ASSERT_NE(set.find(EstimatorKind::IAIPWE), nullptr);
    // A bare spec applies to every estimator.
    auto single = boundary_set_from_json(set.specs[0].to_json());
    EXPECT_EQ(single.kinds.size(), 3u);
    EXPECT_THROW(boundary_set_from_json(nlohmann::json::parse(R"({"boundaries": [{"family": "pocock"}]})")),
                 ValidationError);
}

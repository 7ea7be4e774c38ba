#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "smartmon/config.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace smartmon;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(SMARTMON_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("smartmon_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Cli, ValidateExitCodes) {
    EXPECT_EQ(run("validate --bundle " + test::data("case_study")), 0);
    auto dir = scratch("bad");
    auto plan = read_json_file(test::data("case_study/plan.json"));
    plan["alpha"] = -1;
    plan["q_features"] = test::data("case_study/q_features.json");
    std::ofstream(dir / "plan.json") << plan.dump();
    EXPECT_EQ(run("validate --design " + test::data("case_study/design.json") + " --plan " + (dir / "plan.json").string()), 2);
    EXPECT_EQ(run("validate --bundle /nonexistent"), 2);
}

TEST(Cli, ParseErrorsExitTwo) {
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("simulate --reps notanumber --bundle " + test::data("case_study")), 2);
    EXPECT_EQ(run("reproduce no-such-preset"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, AnalyzeShippedSnapshot) {
    auto dir = scratch("analyze");
    const auto out = (dir / "result.json").string();
    EXPECT_EQ(run("analyze --bundle " + test::data("case_study") + " --snapshot " +
                  test::data("case_study/snapshot_interim.csv") + " --estimator IAIPWE --boundaries " +
                  test::data("case_study/boundaries_pocock.json") + " --out " + out),
              0);
    auto j = read_json_file(out);
    const auto& a = j["analyses"][0];
    EXPECT_EQ(a["analysis"], 1);
    EXPECT_EQ(a["tests"][0]["decision"], "stop-reject");
    EXPECT_TRUE(j["manifest"].contains("config_digest"));
}

TEST(Cli, NumericalFailureExitsThree) {
    // Five complete records cannot support the Q-function regressions.
    auto dir = scratch("tiny");
    auto b = load_bundle(test::data("case_study"));
    std::ifstream in(test::data("case_study/snapshot_final.csv"));
    std::ofstream out(dir / "tiny.csv");
    std::string line;
    for (int i = 0; i < 6 && std::getline(in, line); ++i) out << line << "\n";
    out.close();
    std::ofstream(dir / "tiny.json") << R"({"schema_version": 1, "analysis_day": 1181, "planned_n": 284})";
    EXPECT_EQ(run("analyze --bundle " + test::data("case_study") + " --estimator IAIPWE --snapshot " +
                  (dir / "tiny.csv").string()),
              3);
}

TEST(Cli, SingleTrialSnapshotIsReproducible) {
    auto dir = scratch("trial");
    const auto stem = (dir / "snap").string();
    ASSERT_EQ(run("simulate --bundle " + test::data("case_study") + " --seed 1837 --trial-day 500 --snapshot-out " + stem), 0);
    std::ifstream a(stem + ".csv"), b(test::data("case_study/snapshot_interim.csv"));
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb);
}

#include <benchmark/benchmark.h>

#include <string>

#include "smartmon/config.hpp"
#include "smartmon/estimators.hpp"
#include "smartmon/model.hpp"
#include "smartmon/mvn.hpp"
#include "smartmon/sequential.hpp"

using namespace smartmon;

namespace {

std::string data(const std::string& rel) { return std::string(SMARTMON_BENCH_DATA) + "/" + rel; }

Eigen::MatrixXd equicorrelated(int d, double rho) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Constant(d, d, rho);
    R.diagonal().setOnes();
    return R;
}

struct Trial {
    SmartDesign design;
    QSpec q;
    Snapshot interim;
};

const Trial& trial() {
    static Trial t = [] {
        Trial t;
        t.design = design_from_json(read_json_file(data("pcst/design.json")));
        auto model = calibrate_effects(model_from_json(read_json_file(data("pcst/model.json")), t.design), t.design,
                                       std::vector<double>(8, 47.5));
        t.q = qspec_from_json(read_json_file(data("pcst/q_features.json")));
        EnrollmentProcess e;
        auto days = draw_enrollment(e, 869, 1);
        std::vector<Trajectory> cohort;
        for (int i = 0; i < 869; ++i) {
            Rng rng = patient_rng(1, 0, i);
            cohort.push_back(simulate_trajectory(model, t.design, rng, days[i]));
            cohort.back().id = i + 1;
        }
        t.interim = take_snapshot(cohort, 500);
        return t;
    }();
    return t;
}

}  // namespace

static void BM_MvnRectangle(benchmark::State& state) {
    const int d = static_cast<int>(state.range(0));
    Eigen::MatrixXd cov = equicorrelated(d, 0.5);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d), up = Eigen::VectorXd::Constant(d, 2.5);
    for (auto _ : state) benchmark::DoNotOptimize(mvn_rectangle(mu, cov, up, 1e-4).value);
}
BENCHMARK(BM_MvnRectangle)->Arg(2)->Arg(8)->Arg(16)->Arg(24)->Unit(benchmark::kMillisecond);

static void BM_SolveBoundaries(benchmark::State& state) {
    const int L = static_cast<int>(state.range(0));
    auto null = null_covariance_analytic({equicorrelated(L, 0.5), equicorrelated(L, 0.5)}, {0.4, 1.0});
    for (auto _ : state) benchmark::DoNotOptimize(solve_boundaries(null, 0.05, BoundaryFamily::Pocock).c);
}
BENCHMARK(BM_SolveBoundaries)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_Estimate(benchmark::State& state) {
    const auto& t = trial();
    EstimatorOptions o;
    o.kind = static_cast<EstimatorKind>(state.range(0));
    if (o.kind != EstimatorKind::IPWE) o.q = t.q;
    o.covariance = state.range(1) ? CovarianceMethod::Sandwich : CovarianceMethod::None;
    for (auto _ : state) benchmark::DoNotOptimize(stacked_estimate(t.interim, t.design, t.design.regimes(), o).values);
    state.SetLabel(to_string(o.kind) + (state.range(1) ? " + sandwich" : " point"));
}
BENCHMARK(BM_Estimate)->ArgsProduct({{0, 1, 2}, {0, 1}})->Unit(benchmark::kMillisecond);

static void BM_SimulateCohort(benchmark::State& state) {
    const auto& t = trial();
    auto model = model_from_json(read_json_file(data("pcst/model.json")), t.design);
    EnrollmentProcess e;
    for (auto _ : state) {
        auto days = draw_enrollment(e, 869, 2);
        for (int i = 0; i < 869; ++i) {
            Rng rng = patient_rng(2, 0, i);
            benchmark::DoNotOptimize(simulate_trajectory(model, t.design, rng, days[i]).y);
        }
    }
}
BENCHMARK(BM_SimulateCohort)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

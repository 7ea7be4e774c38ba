#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "smartmon/experiment.hpp"
#include "smartmon/sequential.hpp"

namespace smartmon {

// Regime values under the alternative plus per-patient contrast variances, so that
// Var(V^l(t_s) - V^0) ~= unit_var[s](l) / N.
struct AlternativeSpec {
    std::vector<double> values;
    double control = 0.0;
    double delta = 0.0;
    std::vector<Eigen::VectorXd> unit_var;

    int num_regimes() const { return static_cast<int>(values.size()); }
    int num_analyses() const { return static_cast<int>(unit_var.size()); }
    nlohmann::json to_json() const;
};
AlternativeSpec alternative_from_json(const nlohmann::json& j);

Eigen::VectorXd mu_alternative(int n, const AlternativeSpec& alt);

struct PowerResult {
    double power = 0.0;
    std::string method;  // "integral" or "draws"
    int n = 0;
    std::vector<double> by_analysis;  // first rejection at analysis s
    double error = 0.0;
    nlohmann::json to_json() const;
};

PowerResult power_integral(int n, const AlternativeSpec& alt, const BoundarySpec& b, const NullCovariance& null,
                           double tol = 1e-3, std::uint64_t seed = 20240917);
// B draws of N(mu_A, Sigma) with common random numbers; handles chi-square boundaries too.
class DrawPower {
public:
    DrawPower(AlternativeSpec alt, BoundarySpec b, const NullCovariance& null, int draws = 10000,
              std::uint64_t seed = 20240917);
    PowerResult operator()(int n) const;

private:
    AlternativeSpec alt_;
    BoundarySpec b_;
    int L_ = 0, S_ = 0;
    Eigen::MatrixXd noise_;
    std::vector<Eigen::MatrixXd> blocks_;
};
PowerResult power_draws(int n, const AlternativeSpec& alt, const BoundarySpec& b, const NullCovariance& null,
                        int draws = 10000, std::uint64_t seed = 20240917);

struct SearchOptions {
    int n0 = 50;
    int step = 10;
    double discount = 0.1;
    int max_n = 200000;
    double tolerance = 0.0;  // accept power >= target - tolerance
};

struct SearchResult {
    int n = 0;
    double power = 0.0;
    std::vector<std::pair<int, double>> trace;
    nlohmann::json to_json() const;
};

// Increase N by the step until the target is met; then back off one step and refine the step
// by the discount, stopping once a unit step meets the target.
SearchResult sample_size_search(double target, const std::function<double(int)>& power_at,
                                const SearchOptions& opts = {});

// Pilot simulation: per-patient variances and the null correlation from averaged sandwich
// estimates of one arm (boundaries are ignored).
struct PilotResult {
    AlternativeSpec alt;
    NullCovariance null;
    MonteCarloReport report;
};
PilotResult pilot_alternative(const ExperimentConfig& config, double control, const std::string& arm);
PilotResult pilot_from_report(const MonteCarloReport& report, const std::string& arm, double control, double delta);

}  // namespace smartmon

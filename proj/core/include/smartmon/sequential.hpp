#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "smartmon/estimators.hpp"

namespace smartmon {

enum class BoundaryFamily { Pocock, OBF };
std::string to_string(BoundaryFamily f);
BoundaryFamily family_from_string(const std::string& s);

// Z^l = (V^l - V^0 - delta) / SE(V^l - V^0). Without a control, V^0 = 0.
std::vector<double> z_statistics(const ValueEstimate& est, double delta);

// Correlation of the test contrasts within one analysis.
Eigen::MatrixXd contrast_correlation(const ValueEstimate& est);
// Variances of the test contrasts.
Eigen::VectorXd contrast_variances(const ValueEstimate& est);

// Joint null covariance of Z stacked regime-fast, analysis-slow.
struct NullCovariance {
    int num_regimes = 0;
    int num_analyses = 0;
    Eigen::MatrixXd sigma;
    std::vector<double> info;  // information proportion per analysis, last = 1
    std::string source;        // "analytic" or "simulated"
    double psd_adjustment = 0.0;
    std::vector<std::string> warnings;

    Eigen::MatrixXd block(int s, int s2) const;
    nlohmann::json to_json() const;
};
NullCovariance null_from_json(const nlohmann::json& j);

// Within-analysis correlation blocks plus information proportions; cross-analysis
// block (s < s') = sqrt(info_s / info_s') * R_s'.
NullCovariance null_covariance_analytic(const std::vector<Eigen::MatrixXd>& within, const std::vector<double>& info);
// Empirical correlation of stacked replicate contrasts (rows = replicates, columns regime-fast).
NullCovariance null_covariance_simulated(const Eigen::MatrixXd& draws, int num_regimes, int num_analyses);
// Information proportions from per-analysis contrast variances averaged over regimes.
std::vector<double> info_from_variances(const std::vector<Eigen::VectorXd>& variances, bool* out_of_order = nullptr);

// Eigenvalue floor at zero; returns the Frobenius size of the change.
double nearest_psd(Eigen::MatrixXd& m);

struct BoundarySpec {
    BoundaryFamily family = BoundaryFamily::Pocock;
    double alpha = 0.05;
    bool chi_square = false;
    std::vector<double> info;
    std::vector<double> critical;  // c(s) per analysis
    double c = 0.0;                // base constant
    double attained_alpha = 0.0;
    double attained_se = 0.0;

    nlohmann::json to_json() const;
};
BoundarySpec boundary_from_json(const nlohmann::json& j);

// Scale of c at analysis s: 1 (Pocock) or iota_s = info_s^{-1/2} (OBF); squared for chi-square.
std::vector<double> boundary_scales(BoundaryFamily family, const std::vector<double>& info, bool squared);

BoundarySpec solve_boundaries(const NullCovariance& null, double alpha, BoundaryFamily family,
                              std::uint64_t seed = 20240917);

struct Decision {
    enum class Kind { StopReject, Continue, FinalFailToReject };
    Kind kind = Kind::Continue;
    std::vector<int> triggered;  // regime indices
    nlohmann::json to_json(const std::vector<std::string>& labels) const;
};
std::string to_string(Decision::Kind k);
Decision decide(const std::vector<double>& z, const BoundarySpec& b, int s);
// Chi-square variant: one statistic per analysis.
Decision decide_chi(double t, const BoundarySpec& b, int s);

struct ChiSquare {
    double t = 0.0;
    int dof = 0;
};
ChiSquare chi_square_statistic(const std::vector<double>& z, const Eigen::MatrixXd& sigma);

BoundarySpec chi_boundaries(const NullCovariance& null, double alpha, BoundaryFamily family, int reps,
                            std::uint64_t seed = 20240917);

// Null draws of stacked Z from N(0, sigma).
Eigen::MatrixXd draw_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& sigma, int reps, std::uint64_t seed);

}  // namespace smartmon

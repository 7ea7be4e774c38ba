#pragma once

#include <string>
#include <vector>

#include "smartmon/config.hpp"
#include "smartmon/design.hpp"
#include "smartmon/model.hpp"
#include "smartmon/qlearning.hpp"
#include "smartmon/rng.hpp"
#include "smartmon/snapshot.hpp"

namespace smartmon::test {

inline std::string data(const std::string& rel) { return std::string(SMARTMON_TEST_DATA) + "/" + rel; }

struct Fixture {
    SmartDesign design;
    GenerativeModel model;
    QSpec q;
};

// The PCST design with every regime worth `values` (default: all 47.5).
inline Fixture pcst(std::vector<double> values = std::vector<double>(8, 47.5)) {
    Fixture f;
    f.design = design_from_json(read_json_file(data("pcst/design.json")));
    f.model = calibrate_effects(model_from_json(read_json_file(data("pcst/model.json")), f.design), f.design, values);
    f.q = qspec_from_json(read_json_file(data("pcst/q_features.json")));
    return f;
}

inline std::vector<Trajectory> cohort(const Fixture& f, int n, std::uint64_t seed, const TimingSpec& timing = {}) {
    EnrollmentProcess e;
    auto days = draw_enrollment(e, n, seed);
    std::vector<Trajectory> out;
    for (int i = 0; i < n; ++i) {
        Rng rng = patient_rng(seed, 0, i);
        out.push_back(simulate_trajectory(f.model, f.design, rng, days[i], timing));
        out.back().id = i + 1;
    }
    return out;
}

}  // namespace smartmon::test

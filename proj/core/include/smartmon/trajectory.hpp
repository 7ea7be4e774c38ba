#pragma once

#include <vector>

namespace smartmon {

// Full patient data. stage_days[k-1] is the day stage k begins (stage 1 at enrollment);
// outcome_day is when Y is ascertained.
struct Trajectory {
    int id = 0;
    int enroll_day = 0;
    std::vector<std::vector<double>> x;
    std::vector<int> a;
    double y = 0.0;
    std::vector<int> stage_days;
    int outcome_day = 0;
};

}  // namespace smartmon

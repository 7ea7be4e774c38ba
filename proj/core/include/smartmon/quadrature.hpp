#pragma once

#include <vector>

namespace smartmon {

struct QuadRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Nodes/weights for E f(Z), Z ~ N(0,1). Golub-Welsch on the Hermite recurrence.
QuadRule gauss_hermite_normal(int n);
// Nodes/weights for E f(U), U ~ Uniform(lo, hi).
QuadRule gauss_legendre_uniform(int n, double lo, double hi);

}  // namespace smartmon

#pragma once

#include <vector>

namespace fsk {

// Gauss-Legendre rule on [-1, 1].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Returns the n-point rule, computed once and cached.  Thread safe.
// Node count is clamped nowhere: callers validate their own orders.
const GaussRule& gauss_rule(int n);

// Maps the n-point rule onto [a, b], appending (x, w) pairs to the
// output vectors.  Weights carry the interval Jacobian.
void gauss_points(int n, double a, double b,
                  std::vector<double>& xs, std::vector<double>& ws);

}  // namespace fsk

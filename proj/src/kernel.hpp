#pragma once

#include <functional>
#include <vector>

#include "errors.hpp"

namespace fsk {

// Parameters of the nonlocal kernel |x - y|^{-(dim + s*p)}.
struct KernelSpec {
    int dim = 1;
    double s = 0.5;
    double p = 2.0;

    void validate() const;
    // Kernel exponent: |x - y| is raised to -(dim + s*p).
    double exponent() const { return -(dim + s * p); }
};

// Knobs of the singular pair quadrature.  Tolerances are relative to the
// running partial sum, with an absolute floor of 1e-300 so identically
// zero integrands terminate immediately.
struct QuadratureControl {
    int gauss_order = 6;     // base tensor order, >= 2
    int grading_levels = 40; // geometric levels toward the singularity, <= 40
    double rel_tol = 1e-10;  // > 0

    void validate() const;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double length() const { return hi - lo; }
};

// Scaling constant that turns the (1-s)-weighted Gagliardo seminorm into
// the local gradient energy as s -> 1.  Exact value p/2 in one dimension.
double bbm_constant(int dim, double p);

// Mass of the 1-D kernel outside a collar of radius R:
//   integral over |z| > R of |z|^{-(1+s*p)} dz  =  2 / (s*p*R^{s*p}).
double kernel_tail_mass(double R, const KernelSpec& spec);

// Relation of two closed cells.  Overlapping cells that are not identical
// are rejected by the quadrature entry points.
enum class PairRelation { Disjoint, Touching, Identical, Overlapping };
PairRelation classify_pair(const Interval& a, const Interval& b);

// Adaptive evaluation of
//   integral over A x B of |x - y|^{weight_exponent} * g(x, y) dy dx.
// Disjoint pairs use tensor Gauss with order raising and cell splitting;
// touching and identical pairs use geometric grading toward the shared
// point, with the geometric tail summed in closed form once the level
// ratio stabilizes.  Throws NoConvergence when the level or order budget
// runs out, which is also how a divergent integrand (weight_exponent too
// low for the vanishing order of g) manifests.  Accuracy for corner
// classes with weight_exponent + vanishing order close to -2 is limited
// to roughly 1e-8 relative: g only sees rounded coordinates, so its
// values carry 2^level relative noise near the corner.
double singular_double_integral(const Interval& cell_a, const Interval& cell_b,
                                double weight_exponent,
                                const std::function<double(double, double)>& g,
                                const QuadratureControl& ctrl);

// A quadrature rule over a cell pair with the kernel weight folded into w:
//   sum_k w_k * f(x_k, y_k)  ~  integral over A x B of |x-y|^expo * f.
// For identical cells the points cover the full ordered square, so f need
// not be symmetric.
struct PairPoints {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> w;

    std::size_t size() const { return w.size(); }
    void clear() { x.clear(); y.clear(); w.clear(); }
};

// Builds a rule adapted to integrands that vanish to order diag_vanish at
// x = y (relevant for touching and identical pairs; ignored for disjoint
// ones).  The rule's level and order budget is chosen on the probe
// |x - y|^diag_vanish and then padded, so smooth modulations of that
// class integrate to roughly ctrl.rel_tol.  Appends to out.
void build_pair_rule(const Interval& cell_a, const Interval& cell_b,
                     double weight_exponent, double diag_vanish,
                     const QuadratureControl& ctrl, PairPoints& out);

}  // namespace fsk

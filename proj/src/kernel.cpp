#include "kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gauss.hpp"

namespace fsk {

namespace {

constexpr double kAbsFloor = 1e-300;
constexpr int kMaxOrder = 34;     // order raising stops here
constexpr int kOrderStep = 4;
constexpr int kSplitBudget = 64;  // recursion depth for disjoint splitting

bool agreed(double a, double b, double tol) {
    return std::abs(a - b) <= std::max(tol * std::max(std::abs(a), std::abs(b)), kAbsFloor);
}

// Tensor Gauss over [ax0,ax1] x [by0,by1] of |x-y|^expo * g.
template <class G>
double rect_eval(double ax0, double ax1, double by0, double by1,
                 double expo, G&& g, int n) {
    const GaussRule& r = gauss_rule(n);
    const double cx = 0.5 * (ax0 + ax1), hx = 0.5 * (ax1 - ax0);
    const double cy = 0.5 * (by0 + by1), hy = 0.5 * (by1 - by0);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = cx + hx * r.nodes[i];
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            const double y = cy + hy * r.nodes[j];
            row += r.weights[j] * std::pow(std::abs(x - y), expo) * g(x, y);
        }
        sum += r.weights[i] * row;
    }
    return hx * hy * sum;
}

void rect_emit(double ax0, double ax1, double by0, double by1,
               double expo, int n, PairPoints& out) {
    const GaussRule& r = gauss_rule(n);
    const double cx = 0.5 * (ax0 + ax1), hx = 0.5 * (ax1 - ax0);
    const double cy = 0.5 * (by0 + by1), hy = 0.5 * (by1 - by0);
    for (int i = 0; i < n; ++i) {
        const double x = cx + hx * r.nodes[i];
        for (int j = 0; j < n; ++j) {
            const double y = cy + hy * r.nodes[j];
            out.x.push_back(x);
            out.y.push_back(y);
            out.w.push_back(hx * hy * r.weights[i] * r.weights[j] *
                            std::pow(std::abs(x - y), expo));
        }
    }
}

// Corner-local tensor Gauss.  Coordinates are distances from the shared
// point c along each cell (xi into A, eta into B, opposite directions),
// so |x - y| = xi + eta without cancellation.
template <class G>
double corner_rect_eval(double c, double sa, double sb,
                        double xi0, double xi1, double eta0, double eta1,
                        double expo, G&& g, int n) {
    const GaussRule& r = gauss_rule(n);
    const double cxi = 0.5 * (xi0 + xi1), hxi = 0.5 * (xi1 - xi0);
    const double ceta = 0.5 * (eta0 + eta1), heta = 0.5 * (eta1 - eta0);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double xi = cxi + hxi * r.nodes[i];
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            const double eta = ceta + heta * r.nodes[j];
            row += r.weights[j] * std::pow(xi + eta, expo) * g(c + sa * xi, c + sb * eta);
        }
        sum += r.weights[i] * row;
    }
    return hxi * heta * sum;
}

void corner_rect_emit(double c, double sa, double sb,
                      double xi0, double xi1, double eta0, double eta1,
                      double expo, int n, PairPoints& out) {
    const GaussRule& r = gauss_rule(n);
    const double cxi = 0.5 * (xi0 + xi1), hxi = 0.5 * (xi1 - xi0);
    const double ceta = 0.5 * (eta0 + eta1), heta = 0.5 * (eta1 - eta0);
    for (int i = 0; i < n; ++i) {
        const double xi = cxi + hxi * r.nodes[i];
        for (int j = 0; j < n; ++j) {
            const double eta = ceta + heta * r.nodes[j];
            out.x.push_back(c + sa * xi);
            out.y.push_back(c + sb * eta);
            out.w.push_back(hxi * heta * r.weights[i] * r.weights[j] *
                            std::pow(xi + eta, expo));
        }
    }
}

// One grading level of the touching-pair decomposition: an L-shaped ring
// at scale 2^-level, split into two rectangles that stay a fixed relative
// distance from the shared corner.
template <class G>
double touching_level_eval(double c, double sa, double sb, double la, double lb,
                           int level, double expo, G&& g, int n) {
    const double a = la * std::ldexp(1.0, -level);
    const double b = lb * std::ldexp(1.0, -level);
    return corner_rect_eval(c, sa, sb, 0.5 * a, a, 0.0, b, expo, g, n) +
           corner_rect_eval(c, sa, sb, 0.0, 0.5 * a, 0.5 * b, b, expo, g, n);
}

void touching_level_emit(double c, double sa, double sb, double la, double lb,
                         int level, double expo, int n, PairPoints& out) {
    const double a = la * std::ldexp(1.0, -level);
    const double b = lb * std::ldexp(1.0, -level);
    corner_rect_emit(c, sa, sb, 0.5 * a, a, 0.0, b, expo, n, out);
    corner_rect_emit(c, sa, sb, 0.0, 0.5 * a, 0.5 * b, b, expo, n, out);
}

// One grading level of the identical-pair reduction.  With r = y - x the
// square T x T collapses to r in (0, h], x in [lo, hi - r], visiting both
// orderings of (x, x + r); the kernel is exactly r^expo on the slice.
template <class G>
double self_level_eval(double lo, double hi, int level, double expo, G&& g, int n) {
    const double h = hi - lo;
    const double r0 = h * std::ldexp(1.0, -level - 1);
    const double r1 = h * std::ldexp(1.0, -level);
    const GaussRule& rule = gauss_rule(n);
    const double cr = 0.5 * (r0 + r1), hr = 0.5 * (r1 - r0);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = cr + hr * rule.nodes[i];
        const double cx = 0.5 * (lo + hi - r), hx = 0.5 * (hi - r - lo);
        double inner = 0.0;
        for (int j = 0; j < n; ++j) {
            const double x = cx + hx * rule.nodes[j];
            inner += rule.weights[j] * (g(x, x + r) + g(x + r, x));
        }
        sum += rule.weights[i] * std::pow(r, expo) * hx * inner;
    }
    return hr * sum;
}

void self_level_emit(double lo, double hi, int level, double expo, int n,
                     PairPoints& out) {
    const double h = hi - lo;
    const double r0 = h * std::ldexp(1.0, -level - 1);
    const double r1 = h * std::ldexp(1.0, -level);
    const GaussRule& rule = gauss_rule(n);
    const double cr = 0.5 * (r0 + r1), hr = 0.5 * (r1 - r0);
    for (int i = 0; i < n; ++i) {
        const double r = cr + hr * rule.nodes[i];
        const double cx = 0.5 * (lo + hi - r), hx = 0.5 * (hi - r - lo);
        const double wr = hr * rule.weights[i] * std::pow(r, expo) * hx;
        for (int j = 0; j < n; ++j) {
            const double x = cx + hx * rule.nodes[j];
            const double w = wr * rule.weights[j];
            out.x.push_back(x);
            out.y.push_back(x + r);
            out.w.push_back(w);
            out.x.push_back(x + r);
            out.y.push_back(x);
            out.w.push_back(w);
        }
    }
}

struct GradedResult {
    double value = 0.0;
    double unc = 0.0;  // absolute uncertainty estimate
    int levels = 0;
    bool extrapolated = false;
};

// Accumulates grading levels at fixed order.  Termination, in order of
// preference:
//   (a) two consecutive level contributions below tolerance (plain sum);
//   (b) the level ratio has stabilized and the geometric tail estimate is
//       accurate enough, where accuracy accounts both for the ratio drift
//       and for callback rounding noise, which grows like 2^level because
//       the integrand sees |x - y| only through rounded coordinates;
//   (c) budget exhausted: the best extrapolated candidate seen so far is
//       returned if one exists, otherwise the corner is reported as
//       divergent.
// Slowly contracting corner classes (weight exponent plus vanishing order
// just above -2) are exactly the ones that need (b) and (c).
template <class LevelFn>
GradedResult graded_sum(LevelFn&& level_fn, const QuadratureControl& ctrl,
                        int order, bool allow_extrapolation, double noise_base) {
    GradedResult best;
    bool have_best = false;
    double acc = 0.0, noise = 0.0;
    double s3 = 0.0, s2 = 0.0, s1 = 0.0;  // last three level contributions
    int small_streak = 0;
    for (int l = 0; l < ctrl.grading_levels; ++l) {
        const double contrib = level_fn(l, order);
        acc += contrib;
        noise += std::abs(contrib) * std::ldexp(noise_base, l);
        if (std::abs(contrib) <= std::max(ctrl.rel_tol * std::abs(acc), kAbsFloor)) {
            if (++small_streak >= 2) return {acc, noise, l + 1, false};
        } else {
            small_streak = 0;
        }
        s3 = s2;
        s2 = s1;
        s1 = contrib;
        if (allow_extrapolation && l >= 7 && s3 != 0.0 && s2 != 0.0 && s1 != 0.0) {
            const double q = s1 / s2;
            const double q_prev = s2 / s3;
            if (q > 0.0 && q < 0.95 && q_prev > 0.0 &&
                std::abs(q - q_prev) <= 0.25 * (1.0 - q)) {
                const double tail = s1 * q / (1.0 - q);
                const double unc =
                    std::abs(tail) * (std::abs(q - q_prev) / (1.0 - q)) + noise;
                if (unc <= std::max(ctrl.rel_tol * std::abs(acc + tail), kAbsFloor))
                    return {acc + tail, unc, l + 1, true};
                if (!have_best || unc < best.unc) {
                    best = {acc + tail, unc, l + 1, true};
                    have_best = true;
                }
            }
        }
    }
    if (have_best) return best;
    throw NoConvergence(
        "pair quadrature: grading level budget exhausted near the shared point "
        "(integrand likely not integrable for this weight exponent)");
}

// Raises the order until two consecutive graded sums agree, within the
// tolerance widened by the uncertainty the sums report for themselves.
template <class LevelFn>
double order_adapted(LevelFn&& level_fn, const QuadratureControl& ctrl,
                     bool allow_extrapolation, double noise_base,
                     int* levels_out, int* order_out) {
    GradedResult prev;
    bool have_prev = false;
    for (int n = ctrl.gauss_order; n <= kMaxOrder; n += kOrderStep) {
        const GradedResult r =
            graded_sum(level_fn, ctrl, n, allow_extrapolation, noise_base);
        if (have_prev) {
            const double scale = std::max(std::abs(r.value), std::abs(prev.value));
            const double slack = std::max(ctrl.rel_tol * scale, kAbsFloor) +
                                 3.0 * (r.unc + prev.unc);
            if (std::abs(r.value - prev.value) <= slack) {
                if (levels_out) *levels_out = r.levels;
                if (order_out) *order_out = n;
                return r.value;
            }
        }
        prev = r;
        have_prev = true;
    }
    throw NoConvergence("pair quadrature: Gauss order budget exhausted");
}

// Relative rounding noise of one callback evaluation at unit level scale.
double callback_noise_base(const Interval& a, const Interval& b) {
    const double coord =
        std::max(std::max(std::abs(a.lo), std::abs(a.hi)),
                 std::max(std::abs(b.lo), std::abs(b.hi)));
    const double len = std::min(a.length(), b.length());
    return 4e-16 * std::max(1.0, coord / len);
}

struct TouchingGeometry {
    double c;   // shared point
    double sa;  // direction of A from c
    double sb;  // direction of B from c
    double la;
    double lb;
};

TouchingGeometry touching_geometry(const Interval& a, const Interval& b) {
    const double tol = 1e-12 * std::max(a.length(), b.length());
    if (std::abs(a.hi - b.lo) <= tol)
        return {0.5 * (a.hi + b.lo), -1.0, +1.0, a.length(), b.length()};
    return {0.5 * (a.lo + b.hi), +1.0, -1.0, a.length(), b.length()};
}

bool admissible(const Interval& a, const Interval& b) {
    const double gap = std::max(b.lo - a.hi, a.lo - b.hi);
    return gap >= 0.5 * std::max(a.length(), b.length());
}

template <class G>
double disjoint_eval(const Interval& a, const Interval& b, double expo,
                     G&& g, const QuadratureControl& ctrl, int depth) {
    if (admissible(a, b)) {
        double prev = std::numeric_limits<double>::quiet_NaN();
        for (int n = ctrl.gauss_order; n <= kMaxOrder; n += kOrderStep) {
            const double v = rect_eval(a.lo, a.hi, b.lo, b.hi, expo, g, n);
            if (!std::isnan(prev) && agreed(v, prev, ctrl.rel_tol)) return v;
            prev = v;
        }
        // fall through: split instead of giving up
    }
    if (depth >= kSplitBudget)
        throw NoConvergence("pair quadrature: disjoint split budget exhausted");
    if (a.length() >= b.length()) {
        const double m = 0.5 * (a.lo + a.hi);
        return disjoint_eval({a.lo, m}, b, expo, g, ctrl, depth + 1) +
               disjoint_eval({m, a.hi}, b, expo, g, ctrl, depth + 1);
    }
    const double m = 0.5 * (b.lo + b.hi);
    return disjoint_eval(a, {b.lo, m}, expo, g, ctrl, depth + 1) +
           disjoint_eval(a, {m, b.hi}, expo, g, ctrl, depth + 1);
}

void disjoint_emit(const Interval& a, const Interval& b, double expo,
                   const QuadratureControl& ctrl, int depth, PairPoints& out) {
    if (admissible(a, b)) {
        auto one = [](double, double) { return 1.0; };
        double prev = std::numeric_limits<double>::quiet_NaN();
        for (int n = ctrl.gauss_order; n <= kMaxOrder; n += kOrderStep) {
            const double v = rect_eval(a.lo, a.hi, b.lo, b.hi, expo, one, n);
            if (!std::isnan(prev) && agreed(v, prev, ctrl.rel_tol)) {
                rect_emit(a.lo, a.hi, b.lo, b.hi, expo, n + kOrderStep, out);
                return;
            }
            prev = v;
        }
    }
    if (depth >= kSplitBudget)
        throw NoConvergence("pair quadrature: disjoint split budget exhausted");
    if (a.length() >= b.length()) {
        const double m = 0.5 * (a.lo + a.hi);
        disjoint_emit({a.lo, m}, b, expo, ctrl, depth + 1, out);
        disjoint_emit({m, a.hi}, b, expo, ctrl, depth + 1, out);
        return;
    }
    const double m = 0.5 * (b.lo + b.hi);
    disjoint_emit(a, {b.lo, m}, expo, ctrl, depth + 1, out);
    disjoint_emit(a, {m, b.hi}, expo, ctrl, depth + 1, out);
}

void require_cells(const Interval& a, const Interval& b) {
    if (!(a.length() > 0.0) || !(b.length() > 0.0))
        throw std::invalid_argument("pair quadrature: cells must have positive length");
}

// Sub-interval of the cell on side sign of corner c, between distances
// d0 < d1 from the corner.
Interval corner_piece(double c, double sign, double d0, double d1) {
    if (sign > 0.0) return {c + d0, c + d1};
    return {c - d1, c - d0};
}

// The corner ring decomposition assumes the two sides have comparable
// lengths; strongly unequal touching pairs are shaved first: the long
// side keeps a near piece as long as the short side, and the remainder
// sits at positive distance from the other cell, which is the disjoint
// machinery's territory.
bool shave_touching(const TouchingGeometry& geo, Interval& near_a,
                    Interval& near_b, Interval& far_piece, bool& far_is_b) {
    if (geo.lb > 2.0 * geo.la) {
        near_a = corner_piece(geo.c, geo.sa, 0.0, geo.la);
        near_b = corner_piece(geo.c, geo.sb, 0.0, geo.la);
        far_piece = corner_piece(geo.c, geo.sb, geo.la, geo.lb);
        far_is_b = true;
        return true;
    }
    if (geo.la > 2.0 * geo.lb) {
        near_a = corner_piece(geo.c, geo.sa, 0.0, geo.lb);
        near_b = corner_piece(geo.c, geo.sb, 0.0, geo.lb);
        far_piece = corner_piece(geo.c, geo.sa, geo.lb, geo.la);
        far_is_b = false;
        return true;
    }
    return false;
}

}  // namespace

void KernelSpec::validate() const {
    if (dim < 1) throw std::domain_error("kernel: dim must be at least 1");
    if (!(s > 0.0 && s < 1.0)) throw std::domain_error("kernel: s must lie in (0, 1)");
    if (!(p > 1.0)) throw std::domain_error("kernel: p must exceed 1");
}

void QuadratureControl::validate() const {
    if (gauss_order < 2)
        throw std::invalid_argument("quadrature: gauss_order must be at least 2");
    if (grading_levels < 1 || grading_levels > 40)
        throw std::invalid_argument("quadrature: grading_levels must lie in [1, 40]");
    if (!(rel_tol > 0.0))
        throw std::invalid_argument("quadrature: rel_tol must be positive");
}

double bbm_constant(int dim, double p) {
    if (dim < 1) throw std::domain_error("bbm_constant: dim must be at least 1");
    if (!(p > 1.0)) throw std::domain_error("bbm_constant: p must exceed 1");
    // p * Gamma((p+dim)/2) / (2 * pi^{(dim-1)/2} * Gamma((p+1)/2))
    const double log_value = std::lgamma(0.5 * (p + dim)) - std::lgamma(0.5 * (p + 1)) -
                             0.5 * (dim - 1) * std::log(M_PI);
    return 0.5 * p * std::exp(log_value);
}

double kernel_tail_mass(double R, const KernelSpec& spec) {
    spec.validate();
    if (spec.dim != 1)
        throw std::invalid_argument("kernel_tail_mass: closed form is one dimensional");
    if (!(R > 0.0)) throw std::domain_error("kernel_tail_mass: R must be positive");
    const double sp = spec.s * spec.p;
    return 2.0 / (sp * std::pow(R, sp));
}

PairRelation classify_pair(const Interval& a, const Interval& b) {
    const double tol = 1e-12 * std::max(a.length(), b.length());
    if (std::abs(a.lo - b.lo) <= tol && std::abs(a.hi - b.hi) <= tol)
        return PairRelation::Identical;
    const double gap = std::max(b.lo - a.hi, a.lo - b.hi);
    if (gap > tol) return PairRelation::Disjoint;
    if (gap >= -tol) return PairRelation::Touching;
    return PairRelation::Overlapping;
}

double singular_double_integral(const Interval& cell_a, const Interval& cell_b,
                                double weight_exponent,
                                const std::function<double(double, double)>& g,
                                const QuadratureControl& ctrl) {
    ctrl.validate();
    require_cells(cell_a, cell_b);
    switch (classify_pair(cell_a, cell_b)) {
        case PairRelation::Disjoint:
            return disjoint_eval(cell_a, cell_b, weight_exponent, g, ctrl, 0);
        case PairRelation::Touching: {
            const TouchingGeometry geo = touching_geometry(cell_a, cell_b);
            Interval na, nb, far;
            bool far_is_b = false;
            if (shave_touching(geo, na, nb, far, far_is_b)) {
                const double near_part =
                    singular_double_integral(na, nb, weight_exponent, g, ctrl);
                const double far_part =
                    far_is_b
                        ? disjoint_eval(cell_a, far, weight_exponent, g, ctrl, 0)
                        : disjoint_eval(far, cell_b, weight_exponent, g, ctrl, 0);
                return near_part + far_part;
            }
            auto level_fn = [&](int level, int order) {
                return touching_level_eval(geo.c, geo.sa, geo.sb, geo.la, geo.lb,
                                           level, weight_exponent, g, order);
            };
            return order_adapted(level_fn, ctrl, true,
                                 callback_noise_base(cell_a, cell_b), nullptr,
                                 nullptr);
        }
        case PairRelation::Identical: {
            auto level_fn = [&](int level, int order) {
                return self_level_eval(cell_a.lo, cell_a.hi, level, weight_exponent,
                                       g, order);
            };
            return order_adapted(level_fn, ctrl, true,
                                 callback_noise_base(cell_a, cell_b), nullptr,
                                 nullptr);
        }
        case PairRelation::Overlapping:
            break;
    }
    throw std::invalid_argument(
        "singular_double_integral: cells overlap without being identical");
}

void build_pair_rule(const Interval& cell_a, const Interval& cell_b,
                     double weight_exponent, double diag_vanish,
                     const QuadratureControl& ctrl, PairPoints& out) {
    ctrl.validate();
    require_cells(cell_a, cell_b);
    switch (classify_pair(cell_a, cell_b)) {
        case PairRelation::Disjoint:
            disjoint_emit(cell_a, cell_b, weight_exponent, ctrl, 0, out);
            return;
        // The level and order budget is probed on |x-y|^{expo + vanish}
        // with the vanishing power folded into the corner-exact kernel
        // evaluation, so the probe itself is free of rounding noise.
        case PairRelation::Touching: {
            const TouchingGeometry geo = touching_geometry(cell_a, cell_b);
            Interval na, nb, far;
            bool far_is_b = false;
            if (shave_touching(geo, na, nb, far, far_is_b)) {
                build_pair_rule(na, nb, weight_exponent, diag_vanish, ctrl, out);
                if (far_is_b)
                    disjoint_emit(cell_a, far, weight_exponent, ctrl, 0, out);
                else
                    disjoint_emit(far, cell_b, weight_exponent, ctrl, 0, out);
                return;
            }
            auto one = [](double, double) { return 1.0; };
            auto level_fn = [&](int level, int order) {
                return touching_level_eval(geo.c, geo.sa, geo.sb, geo.la, geo.lb,
                                           level, weight_exponent + diag_vanish,
                                           one, order);
            };
            int levels = 0, order = 0;
            order_adapted(level_fn, ctrl, false, 0.0, &levels, &order);
            const int emit_levels = std::min(levels + 2, ctrl.grading_levels);
            for (int l = 0; l < emit_levels; ++l)
                touching_level_emit(geo.c, geo.sa, geo.sb, geo.la, geo.lb, l,
                                    weight_exponent, order + kOrderStep, out);
            return;
        }
        case PairRelation::Identical: {
            auto one = [](double, double) { return 1.0; };
            auto level_fn = [&](int level, int order) {
                return self_level_eval(cell_a.lo, cell_a.hi, level,
                                       weight_exponent + diag_vanish, one, order);
            };
            int levels = 0, order = 0;
            order_adapted(level_fn, ctrl, false, 0.0, &levels, &order);
            const int emit_levels = std::min(levels + 2, ctrl.grading_levels);
            for (int l = 0; l < emit_levels; ++l)
                self_level_emit(cell_a.lo, cell_a.hi, l, weight_exponent,
                                order + kOrderStep, out);
            return;
        }
        case PairRelation::Overlapping:
            break;
    }
    throw std::invalid_argument("build_pair_rule: cells overlap without being identical");
}

}  // namespace fsk

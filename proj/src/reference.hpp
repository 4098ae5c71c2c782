#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "errors.hpp"

namespace fsk {

enum class RefMethod { ClosedForm, Shooting, LocalFem };

const char* ref_method_name(RefMethod m);
RefMethod ref_method_from_name(const std::string& name);

// A classical interval eigenvalue together with which route produced it
// and how far the two independent routes disagree.
struct SteklovRef {
    double p = 2.0;
    double length = 1.0;
    double lambda = 0.0;
    RefMethod method = RefMethod::ClosedForm;
    double discrepancy = 0.0;  // |lambda_shooting - lambda of record|
};

// Boundary eigenvalues of -u'' + u = 0 on (0, L) with u' = lambda u in the
// outward direction at both endpoints, ascending. The boundary data lives
// on two points, so the spectrum is exactly {tanh(L/2), coth(L/2)}; count
// only truncates the list.
std::vector<double> steklov_linear(double length, int count);

// du/dx on the increasing branch of the conserved quantity
// (p-1)|u'|^p - |u|^p = -1, i.e. ((u^p - 1)/(p-1))^{1/p} for u >= 1.
// v is u - 1, kept separate so small offsets do not lose precision.
double shooting_slope_shifted(double v, double p);

// First eigenvalue by shooting on the even half profile: launch from the
// degenerate turning point u(L/2) = 1, u'(L/2) = 0 with a two-term local
// series, integrate the slope field adaptively to the endpoint, and read
// lambda off the endpoint Robin ratio (u'(L)/u(L))^{p-1}. If trajectory is
// non-null it receives the accepted (x, u) samples.
double steklov_p_shooting(double p, double length, double ode_tol,
                          std::vector<std::array<double, 2>>* trajectory = nullptr);

// First eigenvalue of the local problem by minimizing
// (int |u'|^p + int |u|^p) / (|u(0)|^p + |u(L)|^p) over P1 functions on a
// uniform grid of spacing h. Deterministic: starts from the constant
// function and runs preconditioned inverse iteration until the quotient
// settles to tol.
double steklov_p_fem(double p, double length, double h, double tol);

// Method of record: closed form at p = 2, the P1 minimizer elsewhere, with
// the shooting value always computed as the independent cross check.
SteklovRef steklov_reference(double p, double length);

// JSON-backed table of reference values keyed by (p, length) so repeated
// sweeps do not recompute them.
class ReferenceCache {
public:
    ReferenceCache() = default;
    explicit ReferenceCache(std::string path);  // loads the file if present

    const SteklovRef& get(double p, double length);  // computes on a miss
    bool contains(double p, double length) const;
    std::size_t size() const { return table_.size(); }

    void put(const SteklovRef& ref);
    void save() const;  // writes back to the load path; no-op without one
    std::string dump() const;
    static ReferenceCache parse(const std::string& text);

private:
    static std::string key(double p, double length);

    std::string path_;
    std::map<std::string, SteklovRef> table_;
};

}  // namespace fsk

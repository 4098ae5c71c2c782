#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eigen.hpp"
#include "forms.hpp"
#include "reference.hpp"

namespace fsk {

struct CheckRow {
    double param = 0.0;
    double value = 0.0;
    double target = 0.0;
    double deviation = 0.0;
};

// Rows of a parameter study against known targets. Deviations are kept
// finite; a row that cannot be computed is an error, not a NaN row.
struct CheckTable {
    std::string label;
    std::string param_name = "param";
    std::vector<CheckRow> rows;
};

// Mesh resolution policy for the eigenvalue experiments: base interior
// spacing, boundary grading exponent, and the minimum number of interior
// cells the strip must contain (the spacing is halved until it does).
struct MeshPolicy {
    double h = 0.025;
    double gamma = 2.0;
    int min_strip_cells = 8;
};

// Shared knobs for the table experiments.
struct HarnessOptions {
    double a = 0.0;
    double b = 1.0;
    double collar = 2.0;
    MeshPolicy mesh;
    QuadratureControl quad;
};

// One row of the eps = 1 - s convergence study.
struct SweepRecord {
    double s = 0.0;
    double eps = 0.0;  // always exactly 1 - s
    double p = 2.0;
    double lambda = 0.0;
    double reference = 0.0;
    double abs_err = 0.0;
    double rel_err = 0.0;
    int dofs = 0;         // interior nodes
    int strip_cells = 0;  // interior cells inside the strip, both sides
    double tail_mass = 0.0;

    // diagnostics beyond the CSV schema
    double constant_bound = 0.0;  // quotient of u == 1, (b - a)/2
    bool converged = false;
    bool sign_constant = false;
    bool normalized = false;
    bool quotient_monotone = true;
    std::optional<double> gap;  // lambda2 - lambda1 on the pair path
    std::string note;           // failure message when the row errored
};

struct SweepOptions {
    double a = 0.0;
    double b = 1.0;
    double collar = 2.0;
    MeshPolicy mesh;
    QuadratureControl quad;
    double eigen_tol = 1e-8;
    int max_outer = 400;
    int threads = 1;
    ReferenceCache* cache = nullptr;  // reused when non-null
};

// Scaled interior seminorm of the P1 interpolant of u per s, against the
// gradient p-norm of the same interpolant. Rows: (s, scaled value,
// target, |value - target|).
CheckTable bbm_limit_table(const std::function<double(double)>& u, double p,
                           const std::vector<double>& s_grid,
                           const HarnessOptions& opt = {});

// Same drift check for the concrete collar extension: u inside, linear
// decay from the boundary values to zero across the collar of width R.
// The full collar-truncated energy is scaled per s and compared to the
// gradient p-norm; the domain-to-collar cross part (which must fade as
// s -> 1) is reported through *cross when given.
CheckTable extension_bbm_check(const std::function<double(double)>& u,
                               const std::vector<double>& s_grid, double R,
                               double p = 2.0, const HarnessOptions& opt = {},
                               CheckTable* cross = nullptr);

// (1/eps) int over the strip of |u|^p against the two-endpoint boundary
// sum, by direct panel quadrature (the strip edges split the panels, so
// no mesh alignment is involved).
CheckTable strip_limit_table(const std::function<double(double)>& u, double p,
                             const std::vector<double>& eps_grid,
                             double a = 0.0, double b = 1.0);

// The eps = 1 - s eigenvalue study: per s, build an aligned mesh under
// the policy, assemble, solve the first eigenpair (pencil path for p = 2,
// iteration otherwise), and attach the classical reference and errors.
// Row failures are recorded in the row note and do not stop the sweep.
// Rows are ordered by s and independent of the thread count.
std::vector<SweepRecord> convergence_sweep(double p,
                                           const std::vector<double>& s_grid,
                                           const SweepOptions& opt = {});

// Rayleigh quotient of the tent function translated k + 2 to the right of
// the unit domain, per k: the numerator decays with the kernel tail while
// the complement mass stays fixed at 2/(p+1), so the values march toward
// zero. Evaluated by direct quadrature; no mesh.
CheckTable zero_infimum_demo(const std::vector<int>& k_grid, double s,
                             double p);

// Smallest quotient of (scaled interior seminorm + interior p-mass) over
// the exact two-point boundary sum |u(0)|^p + |u(1)|^p on the unit
// domain. Requires s*p > 1 (domain error otherwise): below that line the
// quotient has no positive infimum. Pencil solve at p = 2, normalized
// descent otherwise.
double trace_constant(double s, double p, const MeshPolicy& policy = {},
                      const QuadratureControl& quad = {});

// Writes base + ".csv" (17 significant digits) and base + ".svg" (800x600
// line plot, log error axis). Byte output is a pure function of the rows.
void emit_report(const std::vector<SweepRecord>& rows, const std::string& base);
void emit_report(const CheckTable& table, const std::string& base);

}  // namespace fsk

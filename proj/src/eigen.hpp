#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "forms.hpp"

namespace fsk {

// One computed eigenpair.  Coefficients are stored as a full collar
// function: interior nodal values plus the reconstructed exterior cell
// values (touching cells carry the trace, free cells the zero-flux
// extension).
struct EigenResult {
    double eigenvalue = 0.0;
    DofFunction u;
    double quotient_residual = 0.0;  // last observed quotient defect
    int iterations = 0;
    bool normalized = false;  // (1/eps) * strip p-mass == 1 to 1e-10
    bool converged = false;
    std::vector<double> quotient_history;
};

// (scale * energy + interior p-mass) / ((1/eps) * strip p-mass), where
// scale couples the energy to the differentiability order.  Throws
// std::domain_error when the strip mass underflows.
double rayleigh_quotient(const GagliardoForm& form, const DofFunction& u,
                         double eps);

// The k smallest finite eigenvalues of the reduced quadratic pencil,
// p = 2 only.  The left matrix is the eliminated energy block plus the
// interior mass; the right matrix is the strip mass over eps, which is
// only supported near the boundary, so the pencil has exactly
// rank(right) finite eigenvalues.  Eigenfunctions come back orthonormal
// in the strip inner product and sign-normalized to positive interior
// mean.
std::vector<EigenResult> solve_linear(const GagliardoForm& form, double eps,
                                      int k);

// First eigenpair for general p by inverse iteration: each outer step
// minimizes the strictly convex energy functional against the previous
// iterate's strip density, then renormalizes.  The quotient sequence is
// nonincreasing; iteration stops when successive quotients differ by
// less than tol.  Exceeding max_outer returns the best iterate with
// converged = false.
EigenResult solve_first_p(const GagliardoForm& form, double eps,
                          const DofFunction& init, double tol, int max_outer);

// Defect of the discrete stationarity condition, maximized over the
// reduced basis directions.  scale is the size of the terms being
// cancelled; a genuine eigenpair has max_defect far below it.
struct WeakResidual {
    double max_defect = 0.0;
    double scale = 0.0;
};
WeakResidual weak_form_residual(const GagliardoForm& form,
                                const EigenResult& result, double eps);

struct EigenDiagnostics {
    bool sign_constant = false;
    double positive_measure = 0.0;  // length of {u > 0} in the domain
    double negative_measure = 0.0;  // length of {u < 0}
    double sup_norm = 0.0;          // max |coefficient|, collar included
    std::optional<double> gap_to_next;
};

// Shape report for one eigenpair.  Pass the next eigenvalue up the
// spectrum when it is known to fill gap_to_next.
EigenDiagnostics diagnostics(const EigenResult& result,
                             const CollarMesh1D& mesh,
                             std::optional<double> next_eigenvalue = {});

nlohmann::json eigen_to_json(const EigenResult& result,
                             const EigenDiagnostics* diag = nullptr);

}  // namespace fsk

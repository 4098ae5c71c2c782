#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "mesh.hpp"

namespace fsk {

// sign(d) |d|^{p-1}, computed without the 0^{negative} hazard of
// |d|^{p-2} d for p < 2.
inline double sign_power(double d, double p) {
    if (p == 2.0) return d;
    if (p == 3.0) return d * std::abs(d);
    if (d == 0.0) return 0.0;
    const double m = std::pow(std::abs(d), p - 1.0);
    return d > 0.0 ? m : -m;
}

// |d|^p with fast paths for the common exponents.
inline double abs_power(double d, double p) {
    if (p == 2.0) return d * d;
    if (p == 3.0) {
        const double a = std::abs(d);
        return a * a * a;
    }
    return std::pow(std::abs(d), p);
}

// Tridiagonal P1 mass data: diag[i] pairs with node i, off[i] couples
// nodes i and i+1.  Assembled from exact cell integrals.
struct TridiagonalMass {
    Eigen::VectorXd diag;
    Eigen::VectorXd off;

    Eigen::MatrixXd to_dense() const;
    Eigen::VectorXd apply(const Eigen::VectorXd& u) const;
};

// Quadrature data for the p-homogeneous energy.  Same-cell contributions
// are exact closed forms (the kernel restricted to one cell integrates
// analytically against powers of |x - y|); cross-cell contributions are
// stored as kernel-weighted points with the basis evaluation data baked
// in: side a is always an interior cell (base node index + barycentric
// weight), side b is an interior cell, a boundary-slaved collar cell
// (encoded as the boundary node), or a free collar cell (encoded
// negative).
struct PairCache {
    std::vector<int> self_node;
    std::vector<double> self_inv_h;
    std::vector<double> self_coeff;

    std::vector<int> ia;
    std::vector<double> ta;
    std::vector<int> ib;  // >= 0: interior node base; < 0: free cell -1-idx
    std::vector<double> tb;
    std::vector<double> w;  // kernel weight, pair multiplicity folded in

    // Point ranges of the (interior cell, free collar cell) pairs, for
    // the per-cell extension solves.
    struct ExtRange {
        int free_idx;
        std::size_t begin;
        std::size_t end;
    };
    std::vector<ExtRange> ext_ranges;
};

// Assembled nonlocal form on a collar mesh.  The two collar cells that
// touch the boundary carry no degree of freedom of their own: their value
// is tied to the adjacent boundary node (the continuous extension), which
// keeps every cell pair integrable for all s*p.  Reduced unknowns are the
// interior nodes followed by the free collar cells.
//
// The dense blocks hold a quadratic form: for p = 2 it is the form itself
// (kernel exponent -(1+2s)); for p != 2 it is the solver preconditioner,
// built with the effective quadratic exponent -(3 - p(1-s)) whose corner
// class contracts within the level budget for every admissible (s, p).
// The nonlinear energy itself lives in the pair cache, which is built
// exactly when p != 2.
struct GagliardoForm {
    CollarMesh1D mesh;
    KernelSpec spec;
    QuadratureControl ctrl;
    double tail_mass = 0.0;  // kernel mass beyond the collar (diagnostic)

    int n_int = 0;
    int n_free = 0;
    std::vector<int> free_cells;  // free DOF -> exterior cell index
    std::vector<int> free_index;  // exterior cell index -> free DOF or -1

    Eigen::MatrixXd h_ii;
    Eigen::MatrixXd h_ie;
    Eigen::VectorXd h_ee;

    TridiagonalMass mass_interior;

    std::optional<PairCache> cache;

    int reduced_size() const { return n_int + n_free; }
};

GagliardoForm assemble(const CollarMesh1D& mesh, const KernelSpec& spec,
                       const QuadratureControl& ctrl);

// Interior-only form (no collar): the double integral runs over
// Omega x Omega alone.  Used by the boundary trace experiments and as a
// reference for the interior part of the full form.
struct InteriorForm {
    CollarMesh1D mesh;
    KernelSpec spec;
    QuadratureControl ctrl;
    Eigen::MatrixXd h;  // p = 2 form / quadratic preconditioner
    PairCache cache;    // always built (self + cross terms, no exterior)
    TridiagonalMass mass_interior;
};

InteriorForm assemble_interior(const CollarMesh1D& mesh, const KernelSpec& spec,
                               const QuadratureControl& ctrl);

double interior_energy(const InteriorForm& form, const Eigen::VectorXd& u);
Eigen::VectorXd interior_energy_gradient(const InteriorForm& form,
                                         const Eigen::VectorXd& u);

// DofFunction <-> reduced coefficient vector.  Boundary-touching collar
// values are not free: from_reduced writes the trace into them, and
// to_reduced ignores them.
Eigen::VectorXd to_reduced(const GagliardoForm& form, const DofFunction& u);
DofFunction from_reduced(const GagliardoForm& form, const Eigen::VectorXd& r);

// H_{s,p}(u, u): the p-homogeneous nonlocal energy (unscaled).
double energy(const GagliardoForm& form, const DofFunction& u);
double energy_reduced(const GagliardoForm& form, const Eigen::VectorXd& r);

// The monotone pairing integral of u against v; pairing(u, u) == energy(u).
double pairing(const GagliardoForm& form, const DofFunction& u,
               const DofFunction& v);

// d/dr energy_reduced(r): equals p times the pairing against each basis
// function.
Eigen::VectorXd energy_gradient_reduced(const GagliardoForm& form,
                                        const Eigen::VectorXd& r);

// Schur complement of the free collar block: the interior quadratic form
// with the collar eliminated at its energy minimizer (p = 2 only).
Eigen::MatrixXd reduced_quadratic_form(const GagliardoForm& form);

// Full (interior + free collar) quadratic matrix of the dense blocks.
Eigen::MatrixXd full_quadratic_matrix(const GagliardoForm& form);

// Exterior values with vanishing nonlocal flux given interior values:
// per free cell the kernel-weighted monotone equation is solved exactly
// (p = 2: weighted average; general p: scalar root find); boundary
// touching cells return the trace.
Eigen::VectorXd neumann_extend(const GagliardoForm& form, const DofFunction& u);

// Root v of sum_k w_k sign(v - a_k)|v - a_k|^{p-1} = 0, the weighted
// p-mean of the values a_k.  Weights must be positive.  This is the
// scalar equation behind neumann_extend.
double power_mean(const std::vector<double>& w, const std::vector<double>& a,
                  double p);

// Exact closed-form integral of |u|^p over the domain (a, b); u is the
// interior P1 interpolant.  Valid for every p > 1.
double lp_mass(const CollarMesh1D& mesh, const DofFunction& u, double p);

// Same over the strip of width eps at both endpoints (whole cells only;
// AlignmentError if the strip edge is not a node).  No 1/eps factor.
double lp_strip_mass(const CollarMesh1D& mesh, const DofFunction& u, double p,
                     double eps);

// Gradients of the mass integrals with respect to the interior nodal
// values: entries are the exact integrals of |u|^{p-2} u phi_i.
Eigen::VectorXd lp_mass_gradient(const CollarMesh1D& mesh,
                                 const Eigen::VectorXd& u_int, double p);
Eigen::VectorXd lp_strip_mass_gradient(const CollarMesh1D& mesh,
                                       const Eigen::VectorXd& u_int, double p,
                                       double eps);

// Same integrals on an arbitrary ascending node vector (used by the
// classical reference solvers, which have no collar).
double lp_mass_nodes(const std::vector<double>& nodes, const Eigen::VectorXd& u,
                     double p);
Eigen::VectorXd lp_mass_gradient_nodes(const std::vector<double>& nodes,
                                       const Eigen::VectorXd& u, double p);

// Interior P1 mass matrices from exact cell integrals.
TridiagonalMass interior_mass(const CollarMesh1D& mesh);
TridiagonalMass strip_mass(const CollarMesh1D& mesh, double eps);

// Integration by parts and divergence checks evaluated on one shared
// quadrature decomposition, so the residuals isolate bookkeeping errors
// rather than quadrature error.  scale is the total variation of the
// pairing (sum of absolute contributions).
struct IdentityReport {
    double divergence_residual = 0.0;  // |interior action + collar action| for v = 1
    double parts_residual = 0.0;       // |H(u,v) - interior action - collar action|
    double scale = 0.0;
};

IdentityReport identity_check(const GagliardoForm& form, const DofFunction& u,
                              const DofFunction& v);

// Pointwise defect of the nonlocal Picone inequality: given the values of
// u >= 0 and v > 0 at two points, returns
//   |du|^p - sign(dv)|dv|^{p-1} (u_x^p / v_x^{p-1} - u_y^p / v_y^{p-1}),
// which is nonnegative.  Domain errors on negative u or nonpositive v.
double picone_defect(double ux, double uy, double vx, double vy, double p);

// Row-major text dump, one row per line, 17 significant digits.
void write_matrix_text(const Eigen::MatrixXd& m, const std::string& path);

// Writes h_ii, h_ie, h_ee (as a single row) next to path_prefix.
void export_dense_blocks(const GagliardoForm& form,
                         const std::string& path_prefix);

}  // namespace fsk

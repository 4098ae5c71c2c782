#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "errors.hpp"
#include "forms.hpp"
#include "kernel.hpp"
#include "mesh.hpp"

using namespace fsk;

namespace {

CollarMesh1D small_mesh() {
    // 3 interior nodes, 2 free collar cells: the smallest mesh with every
    // pair class present.
    return build_collar_mesh(0.0, 1.0, 2.0, 0.5, 1.0, 0.5);
}

CollarMesh1D medium_mesh() {
    return build_collar_mesh(0.0, 1.0, 1.0, 0.25, 1.0, 0.25);
}

double p1_eval(const CollarMesh1D& mesh, const Eigen::VectorXd& vals,
               double x) {
    const auto& nd = mesh.nodes;
    auto it = std::upper_bound(nd.begin(), nd.end(), x);
    std::size_t i = static_cast<std::size_t>(it - nd.begin());
    if (i == 0) i = 1;
    if (i >= nd.size()) i = nd.size() - 1;
    const double t = (x - nd[i - 1]) / (nd[i] - nd[i - 1]);
    return (1.0 - t) * vals[static_cast<Eigen::Index>(i - 1)] +
           t * vals[static_cast<Eigen::Index>(i)];
}

// Slave the boundary-touching collar cells to the trace, matching the
// convention of the assembled form.
DofFunction slaved(const CollarMesh1D& mesh, const DofFunction& u) {
    DofFunction s = u;
    s.exterior[mesh.touching_left()] = u.interior[0];
    s.exterior[mesh.touching_right()] = u.interior[u.interior.size() - 1];
    return s;
}

// Independent evaluation of the energy, pair by pair through the scalar
// adaptive integrator (no emitted rules, no closed forms).
double brute_energy(const CollarMesh1D& mesh, const KernelSpec& spec,
                    const DofFunction& u, const QuadratureControl& ctrl) {
    const double expo = spec.exponent();
    const double p = spec.p;
    const int nc = mesh.interior_cell_count();
    const int ne = mesh.exterior_cell_count();
    double total = 0.0;
    for (int ic = 0; ic < nc; ++ic) {
        for (int jc = ic; jc < nc; ++jc) {
            auto g = [&](double x, double y) {
                return abs_power(p1_eval(mesh, u.interior, x) -
                                     p1_eval(mesh, u.interior, y),
                                 p);
            };
            const double v = singular_double_integral(
                mesh.interior_cell(ic), mesh.interior_cell(jc), expo, g, ctrl);
            total += (ic == jc) ? v : 2.0 * v;
        }
    }
    for (int e = 0; e < ne; ++e) {
        const double ue = u.exterior[e];
        for (int ic = 0; ic < nc; ++ic) {
            auto g = [&](double x, double) {
                return abs_power(p1_eval(mesh, u.interior, x) - ue, p);
            };
            total += 2.0 * singular_double_integral(mesh.interior_cell(ic),
                                                    mesh.exterior[e], expo, g,
                                                    ctrl);
        }
    }
    return total;
}

double brute_pairing(const CollarMesh1D& mesh, const KernelSpec& spec,
                     const DofFunction& u, const DofFunction& v,
                     const QuadratureControl& ctrl) {
    const double expo = spec.exponent();
    const double p = spec.p;
    const int nc = mesh.interior_cell_count();
    const int ne = mesh.exterior_cell_count();
    double total = 0.0;
    for (int ic = 0; ic < nc; ++ic) {
        for (int jc = ic; jc < nc; ++jc) {
            auto g = [&](double x, double y) {
                const double du = p1_eval(mesh, u.interior, x) -
                                  p1_eval(mesh, u.interior, y);
                const double dv = p1_eval(mesh, v.interior, x) -
                                  p1_eval(mesh, v.interior, y);
                return sign_power(du, p) * dv;
            };
            const double val = singular_double_integral(
                mesh.interior_cell(ic), mesh.interior_cell(jc), expo, g, ctrl);
            total += (ic == jc) ? val : 2.0 * val;
        }
    }
    for (int e = 0; e < ne; ++e) {
        const double ue = u.exterior[e];
        const double ve = v.exterior[e];
        for (int ic = 0; ic < nc; ++ic) {
            auto g = [&](double x, double) {
                const double du = p1_eval(mesh, u.interior, x) - ue;
                const double dv = p1_eval(mesh, v.interior, x) - ve;
                return sign_power(du, p) * dv;
            };
            total += 2.0 * singular_double_integral(mesh.interior_cell(ic),
                                                    mesh.exterior[e], expo, g,
                                                    ctrl);
        }
    }
    return total;
}

DofFunction random_dof(const CollarMesh1D& mesh, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    DofFunction u;
    u.interior.resize(mesh.interior_node_count());
    u.exterior.resize(mesh.exterior_cell_count());
    for (Eigen::Index i = 0; i < u.interior.size(); ++i)
        u.interior[i] = dist(rng);
    for (Eigen::Index i = 0; i < u.exterior.size(); ++i)
        u.exterior[i] = dist(rng);
    return u;
}

}  // namespace

TEST_CASE("constants have zero energy and zero pairing against anything") {
    const CollarMesh1D mesh = small_mesh();
    const QuadratureControl ctrl;
    for (double p : {2.0, 3.0}) {
        const GagliardoForm form = assemble(mesh, {1, 0.6, p}, ctrl);
        const DofFunction ones = interpolate(mesh, [](double) { return 1.0; });
        CHECK(std::abs(energy(form, ones)) <= 1e-10);

        const DofFunction u = slaved(mesh, random_dof(mesh, 7));
        const double scale = std::abs(energy(form, u)) + 1.0;
        CHECK(std::abs(pairing(form, u, ones)) <= 1e-10 * scale);
    }
}

TEST_CASE("interior seminorm of the identity map matches the closed form") {
    // u = x on (0,1): the energy integrand is |x-y|^{p(1-s)-1}, whose
    // integral over the unit square is 2/(p(1-s)(p(1-s)+1)).
    const CollarMesh1D mesh = medium_mesh();
    QuadratureControl ctrl;
    ctrl.rel_tol = 1e-10;

    {
        const InteriorForm f = assemble_interior(mesh, {1, 0.5, 2.0}, ctrl);
        Eigen::VectorXd u(mesh.interior_node_count());
        for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = mesh.nodes[i];
        const double quad = u.dot(f.h * u);
        CHECK(quad == doctest::Approx(1.0).epsilon(1e-7));
        CHECK(interior_energy(f, u) == doctest::Approx(1.0).epsilon(1e-7));
        // blocks use exact corner moments, the cache uses point rules;
        // they agree to quadrature accuracy
        CHECK(std::abs(quad - interior_energy(f, u)) <= 1e-7);
    }
    {
        const InteriorForm f = assemble_interior(mesh, {1, 0.6, 3.0}, ctrl);
        Eigen::VectorXd u(mesh.interior_node_count());
        for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = mesh.nodes[i];
        const double expect = 2.0 / (1.2 * 2.2);
        CHECK(interior_energy(f, u) == doctest::Approx(expect).epsilon(1e-7));
    }
}

TEST_CASE("assembled energy matches the scalar integrator, p = 2") {
    const CollarMesh1D mesh = medium_mesh();
    const KernelSpec spec{1, 0.6, 2.0};
    QuadratureControl ctrl;
    const GagliardoForm form = assemble(mesh, spec, ctrl);
    CHECK(!form.cache.has_value());

    const DofFunction u = slaved(
        mesh, interpolate(mesh, [](double x) {
            return std::sin(3.0 * x) + 0.3 * x * x;
        }));
    QuadratureControl oracle_ctrl;
    oracle_ctrl.rel_tol = 1e-8;
    const double expect = brute_energy(mesh, spec, u, oracle_ctrl);
    CHECK(energy(form, u) == doctest::Approx(expect).epsilon(5e-6));
}

TEST_CASE("assembled energy and pairing match the scalar integrator, p = 3") {
    const CollarMesh1D mesh = small_mesh();
    const KernelSpec spec{1, 0.6, 3.0};
    QuadratureControl ctrl;
    ctrl.rel_tol = 1e-8;
    const GagliardoForm form = assemble(mesh, spec, ctrl);
    REQUIRE(form.cache.has_value());

    const DofFunction u = slaved(
        mesh, interpolate(mesh, [](double x) {
            return std::cos(2.0 * x) + 0.5 * x;
        }));
    const DofFunction v = slaved(
        mesh, interpolate(mesh, [](double x) { return x * x - 0.4 * x; }));

    QuadratureControl oracle_ctrl;
    oracle_ctrl.rel_tol = 1e-8;
    const double e_expect = brute_energy(mesh, spec, u, oracle_ctrl);
    CHECK(energy(form, u) == doctest::Approx(e_expect).epsilon(1e-5));

    const double p_expect = brute_pairing(mesh, spec, u, v, oracle_ctrl);
    CHECK(pairing(form, u, v) == doctest::Approx(p_expect).epsilon(1e-5));

    CHECK(pairing(form, u, u) ==
          doctest::Approx(energy(form, u)).epsilon(1e-12));
}

TEST_CASE("energy is p-homogeneous") {
    const CollarMesh1D mesh = small_mesh();
    const QuadratureControl ctrl;
    for (double p : {1.5, 2.0, 3.0}) {
        const GagliardoForm form = assemble(mesh, {1, 0.7, p}, ctrl);
        const DofFunction u = slaved(mesh, random_dof(mesh, 11));
        DofFunction cu = u;
        const double c = -1.7;
        cu.interior *= c;
        cu.exterior *= c;
        const double lhs = energy(form, cu);
        const double rhs = std::pow(std::abs(c), p) * energy(form, u);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("gradient matches finite differences and the pairing relation") {
    const CollarMesh1D mesh = small_mesh();
    const QuadratureControl ctrl;
    for (double p : {2.0, 3.0}) {
        const GagliardoForm form = assemble(mesh, {1, 0.6, p}, ctrl);
        const Eigen::VectorXd r = to_reduced(form, random_dof(mesh, 23));
        const Eigen::VectorXd g = energy_gradient_reduced(form, r);

        const double delta = 1e-6;
        for (int k : {0, form.n_int - 1, form.n_int}) {
            Eigen::VectorXd rp = r, rm = r;
            rp[k] += delta;
            rm[k] -= delta;
            const double fd =
                (energy_reduced(form, rp) - energy_reduced(form, rm)) /
                (2.0 * delta);
            CHECK(g[k] == doctest::Approx(fd).epsilon(1e-5));
        }

        // <grad E(u), v> = p * pairing(u, v)
        const DofFunction v = random_dof(mesh, 29);
        const Eigen::VectorXd vr = to_reduced(form, v);
        const double lhs = g.dot(vr);
        const double rhs =
            p * pairing(form, from_reduced(form, r), from_reduced(form, vr));
        const double scale = std::abs(lhs) + std::abs(rhs) + 1.0;
        CHECK(std::abs(lhs - rhs) <= 1e-10 * scale);
    }
}

TEST_CASE("block structure: symmetry, positive collar diagonal, constants in kernel") {
    const CollarMesh1D mesh = medium_mesh();
    const QuadratureControl ctrl;
    for (double p : {2.0, 3.0}) {
        const GagliardoForm form = assemble(mesh, {1, 0.8, p}, ctrl);
        const double hnorm = form.h_ii.cwiseAbs().maxCoeff();
        CHECK((form.h_ii - form.h_ii.transpose()).cwiseAbs().maxCoeff() <=
              1e-12 * hnorm);
        CHECK(form.h_ee.minCoeff() > 0.0);
        CHECK(form.h_ie.maxCoeff() <= 0.0);

        const Eigen::MatrixXd full = full_quadratic_matrix(form);
        const Eigen::VectorXd ones =
            Eigen::VectorXd::Ones(form.reduced_size());
        CHECK((full * ones).cwiseAbs().maxCoeff() <= 1e-10 * hnorm);

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(full);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * hnorm);

        // Schur complement plus any positive diagonal is SPD
        Eigen::MatrixXd a = reduced_quadratic_form(form);
        a.diagonal().array() += 1e-8;
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        CHECK(llt.info() == Eigen::Success);
    }
}

TEST_CASE("collar extension: consistency, bracket, energy minimality") {
    const CollarMesh1D mesh = small_mesh();
    const QuadratureControl ctrl;
    for (double p : {1.5, 2.0, 3.0}) {
        const GagliardoForm form = assemble(mesh, {1, 0.5, p}, ctrl);

        const DofFunction c = interpolate(mesh, [](double) { return 3.25; });
        const Eigen::VectorXd ext_c = neumann_extend(form, c);
        for (Eigen::Index e = 0; e < ext_c.size(); ++e)
            CHECK(ext_c[e] == doctest::Approx(3.25).epsilon(1e-12));

        const DofFunction u = random_dof(mesh, 31);
        const Eigen::VectorXd ext = neumann_extend(form, u);
        const double umin = u.interior.minCoeff();
        const double umax = u.interior.maxCoeff();
        for (int k = 0; k < form.n_free; ++k) {
            const double ve = ext[form.free_cells[k]];
            CHECK(ve >= umin - 1e-12);
            CHECK(ve <= umax + 1e-12);
        }

        DofFunction w = u;
        w.exterior = ext;
        Eigen::VectorXd r = to_reduced(form, w);
        const double e0 = energy_reduced(form, r);
        for (int k = 0; k < form.n_free; ++k) {
            for (double d : {1e-3, -1e-3}) {
                Eigen::VectorXd rp = r;
                rp[form.n_int + k] += d;
                CHECK(energy_reduced(form, rp) >= e0 - 1e-12 * (1.0 + e0));
            }
        }
    }
}

TEST_CASE("p = 2 extension equals the kernel-weighted average from the blocks") {
    const CollarMesh1D mesh = small_mesh();
    const KernelSpec spec{1, 0.5, 2.0};
    const GagliardoForm form = assemble(mesh, spec, QuadratureControl{});
    const DofFunction u = random_dof(mesh, 37);
    const Eigen::VectorXd ext = neumann_extend(form, u);

    // independently: v_e = (sum over interior cells of the kernel-weighted
    // integral of u) / (kernel mass), through the scalar integrator
    QuadratureControl oracle;
    oracle.rel_tol = 1e-9;
    for (int k = 0; k < form.n_free; ++k) {
        const int e = form.free_cells[k];
        double num = 0.0, den = 0.0;
        for (int ic = 0; ic < mesh.interior_cell_count(); ++ic) {
            auto gu = [&](double x, double) {
                return p1_eval(mesh, u.interior, x);
            };
            auto g1 = [](double, double) { return 1.0; };
            num += singular_double_integral(mesh.interior_cell(ic),
                                            mesh.exterior[e], spec.exponent(),
                                            gu, oracle);
            den += singular_double_integral(mesh.interior_cell(ic),
                                            mesh.exterior[e], spec.exponent(),
                                            g1, oracle);
        }
        CHECK(ext[e] == doctest::Approx(num / den).epsilon(1e-6));
    }
}

TEST_CASE("power mean examples and validation") {
    CHECK(power_mean({1.0, 1.0}, {0.0, 1.0}, 3.0) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(power_mean({1.0, 1.0}, {0.0, 1.0}, 1.5) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(power_mean({1.0, 3.0}, {0.0, 1.0}, 2.0) ==
          doctest::Approx(0.75).epsilon(1e-14));
    // w = {1, 2}, a = {0, 1}, p = 3: v^2 = 2(1-v)^2 on (0,1)
    CHECK(power_mean({1.0, 2.0}, {0.0, 1.0}, 3.0) ==
          doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-10));
    CHECK(power_mean({5.0}, {0.7}, 2.5) == doctest::Approx(0.7));

    CHECK_THROWS_AS(power_mean({}, {}, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(power_mean({1.0}, {1.0, 2.0}, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(power_mean({0.0, 1.0}, {0.0, 1.0}, 2.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(power_mean({1.0}, {0.0}, 1.0), std::invalid_argument);
}

TEST_CASE("lp mass closed forms") {
    const CollarMesh1D mesh = medium_mesh();
    const DofFunction id = interpolate(mesh, [](double x) { return x; });
    CHECK(lp_mass(mesh, id, 2.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
    CHECK(lp_mass(mesh, id, 3.0) == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(lp_mass(mesh, id, 1.5) == doctest::Approx(0.4).epsilon(1e-13));

    // sign change inside cells is handled exactly by the antiderivative
    const DofFunction zig =
        interpolate(mesh, [](double x) { return 2.0 * x - 1.0; });
    CHECK(lp_mass(mesh, zig, 2.0) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-13));
    CHECK(lp_mass(mesh, zig, 3.0) == doctest::Approx(0.25).epsilon(1e-13));

    const DofFunction c = interpolate(mesh, [](double) { return -2.0; });
    CHECK(lp_mass(mesh, c, 2.5) ==
          doctest::Approx(std::pow(2.0, 2.5)).epsilon(1e-13));

    // strip of width 0.25 at each end, u = x:
    //   int_0^q x^2 + int_{1-q}^1 x^2  with q = 1/4
    const double q = 0.25;
    const double expect =
        q * q * q / 3.0 + (1.0 - std::pow(1.0 - q, 3.0)) / 3.0;
    CHECK(lp_strip_mass(mesh, id, 2.0, q) ==
          doctest::Approx(expect).epsilon(1e-13));

    // eps = half the domain: the strip is everything
    CHECK(lp_strip_mass(mesh, id, 2.0, 0.5) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-13));

    CHECK_THROWS_AS(lp_strip_mass(mesh, id, 2.0, 0.1234),
                    AlignmentError);
    CHECK_THROWS_AS(lp_mass(mesh, id, 1.0), std::invalid_argument);
}

TEST_CASE("lp mass gradient matches finite differences") {
    const CollarMesh1D mesh = medium_mesh();
    std::mt19937 rng(43);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::VectorXd u(mesh.interior_node_count());
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = dist(rng);

    for (double p : {1.7, 2.0, 3.2}) {
        const Eigen::VectorXd g = lp_mass_gradient(mesh, u, p);
        const Eigen::VectorXd gs = lp_strip_mass_gradient(mesh, u, p, 0.25);
        DofFunction d;
        d.exterior = Eigen::VectorXd::Zero(mesh.exterior_cell_count());
        const double delta = 1e-6;
        for (Eigen::Index k = 0; k < u.size(); ++k) {
            Eigen::VectorXd up = u, um = u;
            up[k] += delta;
            um[k] -= delta;
            // d/du_k of the mass is p times the psi_p integral
            DofFunction fp{up, d.exterior}, fm{um, d.exterior};
            const double fd =
                (lp_mass(mesh, fp, p) - lp_mass(mesh, fm, p)) / (2.0 * delta);
            CHECK(g[k] == doctest::Approx(fd / p).epsilon(2e-5));
            const double fds = (lp_strip_mass(mesh, fp, p, 0.25) -
                                lp_strip_mass(mesh, fm, p, 0.25)) /
                               (2.0 * delta);
            CHECK(gs[k] == doctest::Approx(fds / p).epsilon(2e-5));
        }
    }
}

TEST_CASE("exact gradient values for the identity map") {
    // single cell (0, h), u = x: int u x/h = h^2/3, int u (1 - x/h) = h^2/6
    const std::vector<double> nodes{0.0, 0.5};
    Eigen::VectorXd u(2);
    u << 0.0, 0.5;
    const Eigen::VectorXd g = lp_mass_gradient_nodes(nodes, u, 2.0);
    CHECK(g[0] == doctest::Approx(0.25 / 6.0).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.25 / 3.0).epsilon(1e-12));
}

TEST_CASE("mass matrices: totals and apply") {
    const CollarMesh1D mesh = medium_mesh();
    const TridiagonalMass mi = interior_mass(mesh);
    const Eigen::VectorXd ones =
        Eigen::VectorXd::Ones(mesh.interior_node_count());
    CHECK(ones.dot(mi.apply(ones)) == doctest::Approx(1.0).epsilon(1e-14));

    const TridiagonalMass ms = strip_mass(mesh, 0.25);
    CHECK(ones.dot(ms.apply(ones)) == doctest::Approx(0.5).epsilon(1e-14));

    const DofFunction u = random_dof(mesh, 47);
    const Eigen::MatrixXd dense = mi.to_dense();
    CHECK((mi.apply(u.interior) - dense * u.interior).cwiseAbs().maxCoeff() <=
          1e-14);

    // mass quadrature of a P1 function equals the exact lp integral
    CHECK(u.interior.dot(mi.apply(u.interior)) ==
          doctest::Approx(lp_mass(mesh, u, 2.0)).epsilon(1e-12));
}

TEST_CASE("integration by parts and divergence identities hold to rounding") {
    const CollarMesh1D mesh = small_mesh();
    QuadratureControl ctrl;
    ctrl.rel_tol = 1e-8;

    for (double p : {2.0, 3.0}) {
        const GagliardoForm form = assemble(mesh, {1, 0.6, p}, ctrl);
        const DofFunction u = slaved(
            mesh, interpolate(mesh, [](double x) {
                return std::sin(2.5 * x) - 0.2 * x;
            }));
        const DofFunction v = slaved(
            mesh, interpolate(mesh, [](double x) { return x * x + 0.1; }));
        const IdentityReport rep = identity_check(form, u, v);
        REQUIRE(rep.scale > 0.0);
        CHECK(rep.parts_residual <= 1e-12 * rep.scale);
        CHECK(rep.divergence_residual <= 1e-12 * rep.scale);
    }

    // seeded random data, general p
    const GagliardoForm form = assemble(mesh, {1, 0.8, 3.0}, ctrl);
    for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
        const DofFunction u = slaved(mesh, random_dof(mesh, seed));
        const DofFunction v = slaved(mesh, random_dof(mesh, seed + 100));
        const IdentityReport rep = identity_check(form, u, v);
        CHECK(rep.parts_residual <= 1e-10 * rep.scale);
        CHECK(rep.divergence_residual <= 1e-10 * rep.scale);
    }
}

TEST_CASE("picone defect: exact values, nonnegativity, domain checks") {
    CHECK(picone_defect(1.0, 1.0, 1.0, 1.0, 2.0) == doctest::Approx(0.0));
    // dv = 0: defect reduces to |du|^p
    CHECK(picone_defect(2.0, 1.0, 1.0, 1.0, 2.0) ==
          doctest::Approx(1.0).epsilon(1e-14));
    // u = (1, 0), v = (1, 2), p = 2: 1 - (-1)(1 - 0) = 2
    CHECK(picone_defect(1.0, 0.0, 1.0, 2.0, 2.0) ==
          doctest::Approx(2.0).epsilon(1e-14));
    // u = v pointwise gives zero defect for every p
    for (double p : {1.5, 2.0, 3.0})
        CHECK(std::abs(picone_defect(0.7, 1.9, 0.7, 1.9, p)) <= 1e-13);

    std::mt19937 rng(53);
    std::uniform_real_distribution<double> du(0.0, 3.0);
    std::uniform_real_distribution<double> dv(0.1, 3.0);
    for (double p : {1.5, 2.0, 2.7, 3.5}) {
        for (int k = 0; k < 500; ++k) {
            const double ux = du(rng), uy = du(rng);
            const double vx = dv(rng), vy = dv(rng);
            const double defect = picone_defect(ux, uy, vx, vy, p);
            const double scale =
                abs_power(ux - uy, p) + abs_power(vx - vy, p) + 1.0;
            CHECK(defect >= -1e-12 * scale);
        }
    }

    CHECK_THROWS_AS(picone_defect(-0.1, 1.0, 1.0, 1.0, 2.0),
                    std::domain_error);
    CHECK_THROWS_AS(picone_defect(1.0, 1.0, 0.0, 1.0, 2.0),
                    std::domain_error);
    CHECK_THROWS_AS(picone_defect(1.0, 1.0, 1.0, 1.0, 1.0),
                    std::invalid_argument);
}

TEST_CASE("reduced vector round trip and slaving") {
    const CollarMesh1D mesh = small_mesh();
    const GagliardoForm form = assemble(mesh, {1, 0.5, 2.0},
                                        QuadratureControl{});
    std::mt19937 rng(59);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::VectorXd r(form.reduced_size());
    for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = dist(rng);

    const DofFunction u = from_reduced(form, r);
    CHECK(u.exterior[mesh.touching_left()] == u.interior[0]);
    CHECK(u.exterior[mesh.touching_right()] ==
          u.interior[u.interior.size() - 1]);
    const Eigen::VectorXd r2 = to_reduced(form, u);
    CHECK((r - r2).cwiseAbs().maxCoeff() == 0.0);

    DofFunction bad = u;
    bad.interior.conservativeResize(2);
    CHECK_THROWS_AS(to_reduced(form, bad), std::invalid_argument);
    CHECK_THROWS_AS(energy_reduced(form, Eigen::VectorXd::Zero(1)),
                    std::invalid_argument);
}

TEST_CASE("matrix text export round trips at full precision") {
    Eigen::MatrixXd m(2, 3);
    m << 1.0 / 3.0, -2.5e-17, 4.0, 1e300, 0.0, -7.25;
    const std::string path = "forms_export_test.txt";
    write_matrix_text(m, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    for (Eigen::Index r = 0; r < 2; ++r)
        for (Eigen::Index c = 0; c < 3; ++c) {
            double v;
            in >> v;
            CHECK(v == m(r, c));
        }
    std::remove(path.c_str());
}

TEST_CASE("assembly validation") {
    const CollarMesh1D mesh = small_mesh();
    CHECK_THROWS_AS(assemble(mesh, {2, 0.5, 2.0}, QuadratureControl{}),
                    std::invalid_argument);
    QuadratureControl bad;
    bad.rel_tol = -1.0;
    CHECK_THROWS_AS(assemble(mesh, {1, 0.5, 2.0}, bad), std::invalid_argument);
    KernelSpec bad_s{1, 1.5, 2.0};
    CHECK_THROWS_AS(assemble(mesh, bad_s, QuadratureControl{}),
                    std::domain_error);
}

TEST_CASE("tail mass diagnostic matches the closed form") {
    const CollarMesh1D mesh = small_mesh();
    const KernelSpec spec{1, 0.75, 2.0};
    const GagliardoForm form = assemble(mesh, spec, QuadratureControl{});
    CHECK(form.tail_mass ==
          doctest::Approx(kernel_tail_mass(mesh.collar_width, spec))
              .epsilon(1e-15));
}

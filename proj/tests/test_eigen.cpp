#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "eigen.hpp"
#include "errors.hpp"
#include "forms.hpp"

using namespace fsk;

namespace {

CollarMesh1D small_mesh() {
    return build_collar_mesh(0.0, 1.0, 2.0, 0.5, 1.0, 0.5);
}

CollarMesh1D medium_mesh() {
    return build_collar_mesh(0.0, 1.0, 1.0, 0.25, 1.0, 0.25);
}

GagliardoForm make_form(const CollarMesh1D& mesh, double s, double p,
                        double tol = 1e-10) {
    KernelSpec spec{1, s, p};
    QuadratureControl ctrl;
    ctrl.rel_tol = tol;
    return assemble(mesh, spec, ctrl);
}

DofFunction ones(const CollarMesh1D& mesh) {
    DofFunction u;
    u.interior = Eigen::VectorXd::Ones(mesh.interior_node_count());
    u.exterior = Eigen::VectorXd::Ones(mesh.exterior_cell_count());
    return u;
}

// 3x3 determinant written out, so the cubic det(A - t B) can be rooted
// without going anywhere near the solver under test
double det3(const Eigen::MatrixXd& m) {
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
           m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

std::vector<double> pencil_roots_3x3(const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& B) {
    auto f = [&](double t) { return det3(A - t * B); };
    double hi = 64.0;
    std::vector<std::pair<double, double>> brackets;
    for (int attempt = 0; attempt < 20; ++attempt) {
        brackets.clear();
        const int grid = 1 << 14;
        double prev_x = 0.0, prev_f = f(0.0);
        for (int i = 1; i <= grid; ++i) {
            const double x = hi * i / grid;
            const double fx = f(x);
            if ((prev_f > 0.0 && fx < 0.0) || (prev_f < 0.0 && fx > 0.0))
                brackets.emplace_back(prev_x, x);
            prev_x = x;
            prev_f = fx;
        }
        if (brackets.size() == 3) break;
        hi *= 2.0;
    }
    REQUIRE(brackets.size() == 3);
    std::vector<double> roots;
    for (auto [lo2, hi2] : brackets) {
        double flo = f(lo2);
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo2 + hi2);
            const double fm = f(mid);
            if ((flo > 0.0) == (fm > 0.0)) {
                lo2 = mid;
                flo = fm;
            } else {
                hi2 = mid;
            }
        }
        roots.push_back(0.5 * (lo2 + hi2));
    }
    return roots;
}

void check_monotone_history(const std::vector<double>& h) {
    for (std::size_t i = 1; i < h.size(); ++i)
        CHECK(h[i] <= h[i - 1] + 1e-12 * std::max(1.0, std::abs(h[i - 1])));
}

}  // namespace

TEST_CASE("constant function scores one half on the unit interval") {
    for (double p : {2.0, 3.0}) {
        for (double s : {0.4, 0.7}) {
            GagliardoForm form = make_form(medium_mesh(), s, p);
            const double q = rayleigh_quotient(form, ones(form.mesh), 0.25);
            CHECK(q == doctest::Approx(0.5).epsilon(1e-11));
        }
    }
    // a second strip width, aligned to a different mesh
    CollarMesh1D mesh = build_collar_mesh(0.0, 1.0, 1.0, 0.2, 1.0, 0.2);
    GagliardoForm form = make_form(mesh, 0.6, 2.0);
    CHECK(rayleigh_quotient(form, ones(mesh), 0.2) ==
          doctest::Approx(0.5).epsilon(1e-11));
}

TEST_CASE("rayleigh quotient is scale invariant") {
    for (double p : {2.0, 3.0}) {
        GagliardoForm form = make_form(medium_mesh(), 0.6, p);
        DofFunction u;
        u.interior = Eigen::VectorXd(5);
        u.interior << 0.3, -1.1, 0.7, 2.0, -0.4;
        u.exterior = Eigen::VectorXd(4);
        u.exterior << 0.1, 0.3, -0.2, 0.5;
        const double q0 = rayleigh_quotient(form, u, 0.25);
        for (double c : {2.0, -1.7}) {
            DofFunction v;
            v.interior = c * u.interior;
            v.exterior = c * u.exterior;
            CHECK(rayleigh_quotient(form, v, 0.25) ==
                  doctest::Approx(q0).epsilon(1e-12));
        }
    }
}

TEST_CASE("function vanishing near the boundary has no quotient") {
    GagliardoForm form = make_form(medium_mesh(), 0.6, 2.0);
    DofFunction u;
    u.interior = Eigen::VectorXd::Zero(5);
    u.interior[2] = 1.0;  // hat supported on [0.25, 0.75]
    u.exterior = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(rayleigh_quotient(form, u, 0.25), std::domain_error);
}

TEST_CASE("linear solve matches a characteristic-polynomial root find") {
    GagliardoForm form = make_form(small_mesh(), 0.6, 2.0);
    const double eps = 0.5;

    const double kscale = bbm_constant(1, 2.0) * (1.0 - 0.6);
    Eigen::MatrixXd A = kscale * reduced_quadratic_form(form);
    A += form.mass_interior.to_dense();
    const Eigen::MatrixXd B = strip_mass(form.mesh, eps).to_dense() / eps;
    REQUIRE(A.rows() == 3);

    const std::vector<double> roots = pencil_roots_3x3(A, B);
    const auto results = solve_linear(form, eps, 3);
    REQUIRE(results.size() == 3);
    for (int j = 0; j < 3; ++j) {
        CHECK(results[(std::size_t)j].eigenvalue ==
              doctest::Approx(roots[(std::size_t)j]).epsilon(1e-12));
    }

    // pencil residual and strip orthonormality
    for (int i = 0; i < 3; ++i) {
        const Eigen::VectorXd vi = results[(std::size_t)i].u.interior;
        const double res =
            (A * vi - results[(std::size_t)i].eigenvalue * B * vi)
                .lpNorm<Eigen::Infinity>();
        CHECK(res <= 1e-9 * A.lpNorm<Eigen::Infinity>());
        for (int j = 0; j <= i; ++j) {
            const Eigen::VectorXd vj = results[(std::size_t)j].u.interior;
            const double ip = vi.dot(B * vj);
            CHECK(ip == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("first eigenvalue never beats the constant test function") {
    for (double s : {0.3, 0.6, 0.9}) {
        GagliardoForm form = make_form(medium_mesh(), s, 2.0);
        const auto results = solve_linear(form, 0.25, 2);
        CHECK(results[0].eigenvalue > 0.0);
        CHECK(results[0].eigenvalue <= 0.5 + 1e-10);
        CHECK(results[1].eigenvalue > results[0].eigenvalue);
        CHECK(results[0].normalized);
        CHECK(results[0].converged);
        CHECK(results[0].quotient_residual <= 1e-10);
    }
}

TEST_CASE("near the local limit the spectrum approaches the classical one") {
    // s = 0.95, strip width 1 - s: both ends of the spectrum that stay
    // finite in the limit should sit near their classical values already
    CollarMesh1D mesh = build_collar_mesh(0.0, 1.0, 2.0, 0.025, 2.0, 0.05);
    GagliardoForm form = make_form(mesh, 0.95, 2.0, 1e-8);
    const auto results = solve_linear(form, 0.05, 2);
    const double tanh_half = 0.46211715726000974;
    const double coth_half = 2.1639534137386528;
    CHECK(std::abs(results[0].eigenvalue - tanh_half) / tanh_half < 0.10);
    CHECK(std::abs(results[1].eigenvalue - coth_half) / coth_half < 0.10);
}

TEST_CASE("eigenpairs satisfy the discrete stationarity condition, p = 2") {
    GagliardoForm form = make_form(medium_mesh(), 0.6, 2.0);
    const auto results = solve_linear(form, 0.25, 2);
    for (const auto& r : results) {
        const WeakResidual wr = weak_form_residual(form, r, 0.25);
        CHECK(wr.max_defect <= 1e-8 * wr.scale);
    }
}

TEST_CASE("general-p iteration reproduces the linear eigenvalue at p = 2") {
    GagliardoForm form = make_form(medium_mesh(), 0.6, 2.0);
    const auto linear = solve_linear(form, 0.25, 1);
    const EigenResult iter =
        solve_first_p(form, 0.25, ones(form.mesh), 1e-10, 200);
    CHECK(iter.converged);
    CHECK(iter.eigenvalue ==
          doctest::Approx(linear[0].eigenvalue).epsilon(1e-6));
    check_monotone_history(iter.quotient_history);
}

TEST_CASE("general-p iteration, p = 3: descent, stationarity, diagnostics") {
    GagliardoForm form = make_form(medium_mesh(), 0.8, 3.0, 1e-8);
    const EigenResult res =
        solve_first_p(form, 0.25, ones(form.mesh), 1e-10, 400);
    CHECK(res.converged);
    CHECK(res.eigenvalue > 0.0);
    CHECK(res.eigenvalue <= 0.5 + 1e-10);
    CHECK(res.normalized);
    check_monotone_history(res.quotient_history);
    REQUIRE(res.quotient_history.size() >= 2);
    CHECK(res.quotient_history.front() ==
          doctest::Approx(0.5).epsilon(1e-11));  // constant start

    const WeakResidual wr = weak_form_residual(form, res, 0.25);
    CHECK(wr.max_defect <= 1e-8 * wr.scale);

    const EigenDiagnostics diag = diagnostics(res, form.mesh);
    CHECK(diag.sign_constant);

    // restarting from the answer is an immediate fixed point
    const EigenResult again = solve_first_p(form, 0.25, res.u, 1e-10, 400);
    CHECK(again.converged);
    CHECK(again.iterations <= 2);
    CHECK(again.eigenvalue == doctest::Approx(res.eigenvalue).epsilon(1e-9));
}

TEST_CASE("ground state is one-signed, first excited state is not") {
    GagliardoForm form = make_form(medium_mesh(), 0.6, 2.0);
    const auto results = solve_linear(form, 0.25, 2);

    const EigenDiagnostics d1 = diagnostics(
        results[0], form.mesh, results[1].eigenvalue);
    CHECK(d1.sign_constant);
    CHECK(d1.positive_measure == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d1.negative_measure == doctest::Approx(0.0).epsilon(1e-9));
    REQUIRE(d1.gap_to_next.has_value());
    CHECK(*d1.gap_to_next > 0.0);

    const EigenDiagnostics d2 = diagnostics(results[1], form.mesh);
    CHECK(d2.positive_measure > 0.01);
    CHECK(d2.negative_measure > 0.01);
    CHECK_FALSE(d2.gap_to_next.has_value());
    CHECK(d2.sup_norm > 0.0);
}

TEST_CASE("diagnostics of the constant function") {
    EigenResult res;
    res.eigenvalue = 0.5;
    CollarMesh1D mesh = medium_mesh();
    res.u = ones(mesh);
    const EigenDiagnostics d = diagnostics(res, mesh);
    CHECK(d.sign_constant);
    CHECK(d.positive_measure == doctest::Approx(1.0));
    CHECK(d.negative_measure == doctest::Approx(0.0));
    CHECK(d.sup_norm == doctest::Approx(1.0));
}

TEST_CASE("refining the mesh settles the first eigenvalue") {
    std::vector<double> lambdas, sups;
    for (double h : {0.25, 0.125, 0.0625}) {
        CollarMesh1D mesh = build_collar_mesh(0.0, 1.0, 1.0, h, 1.0, 0.25);
        GagliardoForm form = make_form(mesh, 0.8, 2.0, 1e-8);
        const auto results = solve_linear(form, 0.25, 1);
        lambdas.push_back(results[0].eigenvalue);
        sups.push_back(diagnostics(results[0], mesh).sup_norm);
    }
    const double d1 = std::abs(lambdas[1] - lambdas[0]);
    const double d2 = std::abs(lambdas[2] - lambdas[1]);
    CHECK(d2 < d1);
    CHECK(sups[1] <= 1.5 * sups[0]);
    CHECK(sups[2] <= 1.5 * sups[1]);
}

TEST_CASE("solver input validation") {
    GagliardoForm form2 = make_form(small_mesh(), 0.6, 2.0);
    CHECK_THROWS_AS(solve_linear(form2, 0.5, 0), std::invalid_argument);
    CHECK_THROWS_AS(solve_linear(form2, 0.5, 4), std::invalid_argument);

    GagliardoForm form3 = make_form(small_mesh(), 0.6, 3.0, 1e-7);
    CHECK_THROWS_AS(solve_linear(form3, 0.5, 1), std::invalid_argument);

    GagliardoForm formm = make_form(medium_mesh(), 0.6, 2.0);
    DofFunction interior_bump;
    interior_bump.interior = Eigen::VectorXd::Zero(5);
    interior_bump.interior[2] = 1.0;
    interior_bump.exterior = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(
        solve_first_p(formm, 0.25, interior_bump, 1e-8, 50),
        std::invalid_argument);
    CHECK_THROWS_AS(solve_first_p(formm, 0.25, ones(formm.mesh), -1.0, 50),
                    std::invalid_argument);
    CHECK_THROWS_AS(solve_first_p(formm, 0.25, ones(formm.mesh), 1e-8, 0),
                    std::invalid_argument);
}

TEST_CASE("outer budget exhaustion returns the best iterate, unconverged") {
    GagliardoForm form = make_form(medium_mesh(), 0.8, 3.0, 1e-8);
    const EigenResult res =
        solve_first_p(form, 0.25, ones(form.mesh), 1e-14, 1);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 1);
    CHECK(res.eigenvalue > 0.0);
    CHECK(res.eigenvalue < 0.5);  // one step already left the constant
    check_monotone_history(res.quotient_history);
}

TEST_CASE("eigenpair serialization") {
    GagliardoForm form = make_form(medium_mesh(), 0.6, 2.0);
    const auto results = solve_linear(form, 0.25, 2);
    const EigenDiagnostics d = diagnostics(
        results[0], form.mesh, results[1].eigenvalue);
    const nlohmann::json j = eigen_to_json(results[0], &d);

    CHECK(j["eigenvalue"].get<double>() ==
          doctest::Approx(results[0].eigenvalue));
    CHECK(j["interior"].size() == 5);
    CHECK(j["exterior"].size() == 4);
    CHECK(j["converged"].get<bool>());
    CHECK(j["normalized"].get<bool>());
    CHECK(j["diagnostics"]["sign_constant"].get<bool>());
    CHECK(j["diagnostics"]["nodal_measures"][0].get<double>() ==
          doctest::Approx(1.0));
    CHECK(j["diagnostics"]["gap_to_next"].get<double>() > 0.0);

    // survives a round trip through text
    const nlohmann::json back = nlohmann::json::parse(j.dump());
    CHECK(back["eigenvalue"].get<double>() == j["eigenvalue"].get<double>());

    const nlohmann::json bare = eigen_to_json(results[1]);
    CHECK_FALSE(bare.contains("diagnostics"));
}

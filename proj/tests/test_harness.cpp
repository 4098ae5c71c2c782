#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "harness.hpp"

using namespace fsk;

namespace {

constexpr double kTanhHalf = 0.46211715726000974;
constexpr double kLambdaP3 = 0.38865001150096774;

// trace quotient minima on (0, 1) at the default mesh policy, frozen
// from the runs that cross-validated the rank-2 pencil route against
// the normalized descent route (they agree to 8e-11)
constexpr double kTrace95P2 = 0.4550873462;
constexpr double kTrace95P3 = 0.3761926329;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("scaled interior seminorm of the linear ramp") {
    auto ramp = [](double x) { return x; };
    const std::vector<double> grid = {0.5, 0.7, 0.9, 0.99};
    const CheckTable table = bbm_limit_table(ramp, 2.0, grid);

    CHECK(table.param_name == "s");
    REQUIRE(table.rows.size() == grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const CheckRow& row = table.rows[i];
        const double s = grid[i];
        CHECK(row.param == s);
        // the slope-one interpolant has unit gradient norm on any mesh
        CHECK(row.target == doctest::Approx(1.0).epsilon(1e-12));
        // quadratic kernel admits the closed form 1/(3 - 2s)
        CHECK(row.value == doctest::Approx(1.0 / (3.0 - 2.0 * s)).epsilon(1e-9));
        CHECK(row.deviation == std::abs(row.value - row.target));
    }
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        CHECK(table.rows[i].value > table.rows[i - 1].value);
    CHECK(table.rows.back().deviation < 0.02);
}

TEST_CASE("seminorm table vanishes on constants") {
    const CheckTable table =
        bbm_limit_table([](double) { return 3.0; }, 2.0, {0.5, 0.9});
    for (const CheckRow& row : table.rows) {
        // interpolation rounding leaves a speck of energy, nothing more
        CHECK(row.value < 1e-20);
        CHECK(row.target == 0.0);
        CHECK(row.deviation < 1e-20);
    }
}

TEST_CASE("seminorm table rejects bad input") {
    auto ramp = [](double x) { return x; };
    CHECK_THROWS_AS(bbm_limit_table(ramp, 2.0, {}), std::invalid_argument);
    CHECK_THROWS_AS(bbm_limit_table(ramp, 2.0, {0.5, 1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(bbm_limit_table(ramp, 1.0, {0.5}), std::invalid_argument);
}

TEST_CASE("collar extension energy approaches the interior limit") {
    auto ramp = [](double x) { return x; };
    CheckTable cross;
    const CheckTable table =
        extension_bbm_check(ramp, {0.9, 0.95, 0.99}, 2.0, 2.0, {}, &cross);

    REQUIRE(table.rows.size() == 3);
    REQUIRE(cross.rows.size() == 3);
    // full energy of the extension drifts toward the interior gradient
    // norm: the collar contribution dies with the 1 - s factor
    CHECK(table.rows.back().value == doctest::Approx(1.0).epsilon(0.05));
    for (std::size_t i = 1; i < cross.rows.size(); ++i)
        CHECK(cross.rows[i].value < cross.rows[i - 1].value);
    CHECK(cross.rows.back().value < 0.05);
    for (const CheckRow& row : cross.rows) {
        CHECK(row.target == 0.0);
        CHECK(row.value > 0.0);
    }

    CHECK_THROWS_AS(extension_bbm_check(ramp, {0.9}, -1.0, 2.0, {}, nullptr),
                    std::invalid_argument);
}

TEST_CASE("strip means against the boundary sum") {
    auto ramp = [](double x) { return x; };
    const std::vector<double> eps = {0.2, 0.1, 0.01};
    const CheckTable table = strip_limit_table(ramp, 2.0, eps);

    CHECK(table.param_name == "eps");
    REQUIRE(table.rows.size() == 3);
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const CheckRow& row = table.rows[i];
        const double e = eps[i];
        // exact mean of x^2 over both strips of the unit interval
        CHECK(row.value ==
              doctest::Approx(1.0 - e + 2.0 * e * e / 3.0).epsilon(1e-12));
        CHECK(row.target == 1.0);
    }
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        CHECK(table.rows[i].deviation < table.rows[i - 1].deviation);

    // once the strips meet in the middle the mean runs over all of the
    // domain; for a constant the identity is then exact
    const CheckTable whole =
        strip_limit_table([](double) { return 1.0; }, 2.0, {0.5, 0.7});
    for (const CheckRow& row : whole.rows)
        CHECK(row.value == doctest::Approx(1.0 / row.param).epsilon(1e-14));
    CHECK(whole.rows[0].deviation < 1e-14);

    CHECK_THROWS_AS(strip_limit_table(ramp, 2.0, {}), std::invalid_argument);
    CHECK_THROWS_AS(strip_limit_table(ramp, 2.0, {-0.1}),
                    std::invalid_argument);
    CHECK_THROWS_AS(strip_limit_table(ramp, 2.0, {0.1}, 1.0, 0.0),
                    std::invalid_argument);
}

TEST_CASE("remote bumps drive the quotient to zero") {
    const CheckTable table = zero_infimum_demo({2, 5, 10, 20}, 0.5, 2.0);

    REQUIRE(table.rows.size() == 4);
    for (const CheckRow& row : table.rows) {
        CHECK(row.value > 0.0);
        CHECK(row.target == 0.0);
        CHECK(row.deviation == row.value);
    }
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        CHECK(table.rows[i].value < table.rows[i - 1].value);
    CHECK(table.rows.back().value < 0.1 * table.rows.front().value);

    CHECK_THROWS_AS(zero_infimum_demo({}, 0.5, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(zero_infimum_demo({3, 3}, 0.5, 2.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(zero_infimum_demo({0}, 0.5, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(zero_infimum_demo({2}, 1.5, 2.0), std::invalid_argument);
}

TEST_CASE("quadratic sweep record fields and error decay") {
    SweepOptions opt;
    const std::vector<double> grid = {0.6, 0.8, 0.95};
    const std::vector<SweepRecord> rows = convergence_sweep(2.0, grid, opt);

    REQUIRE(rows.size() == grid.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const SweepRecord& r = rows[i];
        CHECK(r.s == grid[i]);
        CHECK(r.eps == 1.0 - grid[i]);
        CHECK(r.p == 2.0);
        CHECK(r.note.empty());
        CHECK(r.converged);
        CHECK(r.sign_constant);
        CHECK(r.normalized);
        CHECK(r.quotient_monotone);
        CHECK(r.strip_cells >= 8);
        CHECK(r.dofs > 0);
        CHECK(r.constant_bound == 0.5);
        CHECK(r.lambda > 0.0);
        CHECK(r.lambda <= r.constant_bound);
        CHECK(r.reference == doctest::Approx(kTanhHalf).epsilon(1e-12));
        CHECK(r.tail_mass > 0.0);
        REQUIRE(r.gap.has_value());
        CHECK(*r.gap > 0.0);
    }
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(rows[i].rel_err < rows[i - 1].rel_err);
}

TEST_CASE("sweep validation and per-row failure capture") {
    CHECK_THROWS_AS(convergence_sweep(2.0, {}), std::invalid_argument);
    CHECK_THROWS_AS(convergence_sweep(2.0, {0.8, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(convergence_sweep(1.0, {0.5}), std::invalid_argument);
    SweepOptions bad;
    bad.mesh.gamma = 1.5;
    CHECK_THROWS_AS(convergence_sweep(2.0, {0.5}, bad), std::invalid_argument);
    bad = {};
    bad.threads = 0;
    CHECK_THROWS_AS(convergence_sweep(2.0, {0.5}, bad), std::invalid_argument);

    // a collar the mesh builder rejects poisons every row, but the sweep
    // still returns one annotated record per grid point
    SweepOptions broken;
    broken.collar = -2.0;
    const auto rows = convergence_sweep(2.0, {0.6, 0.9}, broken);
    REQUIRE(rows.size() == 2);
    for (const SweepRecord& r : rows) {
        CHECK_FALSE(r.converged);
        CHECK_FALSE(r.note.empty());
        CHECK(std::isnan(r.lambda));
        CHECK(std::isnan(r.rel_err));
    }
}

TEST_CASE("sweep references can come from a preloaded cache") {
    ReferenceCache cache;
    SteklovRef fake;
    fake.p = 2.0;
    fake.length = 1.0;
    fake.lambda = 0.125;
    cache.put(fake);

    SweepOptions opt;
    opt.cache = &cache;
    const auto rows = convergence_sweep(2.0, {0.9}, opt);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].reference == 0.125);
    CHECK(rows[0].abs_err == doctest::Approx(rows[0].lambda - 0.125).epsilon(1e-15));
}

TEST_CASE("cubic kernel sweep row on a coarse mesh") {
    ReferenceCache cache;
    SteklovRef known;
    known.p = 3.0;
    known.length = 1.0;
    known.lambda = kLambdaP3;
    known.method = RefMethod::Shooting;
    cache.put(known);

    SweepOptions opt;
    opt.cache = &cache;
    opt.collar = 1.0;
    opt.mesh.h = 0.1;
    opt.eigen_tol = 1e-5;
    const auto rows = convergence_sweep(3.0, {0.9}, opt);

    REQUIRE(rows.size() == 1);
    const SweepRecord& r = rows[0];
    CHECK(r.note.empty());
    CHECK(r.converged);
    CHECK(r.quotient_monotone);
    CHECK(r.sign_constant);
    CHECK(r.normalized);
    CHECK_FALSE(r.gap.has_value());
    CHECK(r.lambda > 0.0);
    CHECK(r.lambda <= r.constant_bound + 1e-12);
    // coarse mesh, so only a loose match is owed here
    CHECK(r.rel_err < 0.2);
}

TEST_CASE("sweep output is independent of the worker count") {
    SweepOptions serial;
    const std::vector<double> grid = {0.6, 0.8, 0.95};
    const auto rows1 = convergence_sweep(2.0, grid, serial);

    SweepOptions threaded = serial;
    threaded.threads = 3;
    const auto rows3 = convergence_sweep(2.0, grid, threaded);

    emit_report(rows1, "harness_sweep_serial");
    emit_report(rows3, "harness_sweep_threaded");
    CHECK(slurp("harness_sweep_serial.csv") ==
          slurp("harness_sweep_threaded.csv"));
    CHECK(slurp("harness_sweep_serial.svg") ==
          slurp("harness_sweep_threaded.svg"));

    const std::string csv = slurp("harness_sweep_serial.csv");
    CHECK(csv.rfind("s,eps,p,lambda,reference,abs_err,rel_err,dofs,"
                    "strip_cells,tail_mass\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    CHECK(lines == grid.size() + 1);
}

TEST_CASE("boundary trace quotient minimum") {
    const double pencil = trace_constant(0.95, 2.0);
    CHECK(pencil == doctest::Approx(kTrace95P2).epsilon(1e-6));
    // the collar-free quotient at s near 1 sits close to the classical
    // first boundary eigenvalue
    CHECK(std::abs(pencil - kTanhHalf) / kTanhHalf < 0.1);

    // descent route must agree with the rank-2 pencil route when the
    // exponent is effectively quadratic
    const double descent = trace_constant(0.95, 2.0 + 1e-9);
    CHECK(descent == doctest::Approx(pencil).epsilon(1e-7));

    const double cubic = trace_constant(0.95, 3.0);
    CHECK(cubic == doctest::Approx(kTrace95P3).epsilon(1e-6));
    CHECK(cubic < 0.5);

    // below the trace threshold the quotient has no positive minimum
    CHECK_THROWS_AS(trace_constant(0.4, 2.0), std::domain_error);
    CHECK_THROWS_AS(trace_constant(0.3, 3.0), std::domain_error);
    CHECK_THROWS_AS(trace_constant(1.2, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(trace_constant(0.5, 0.9), std::invalid_argument);
}

TEST_CASE("report files are a pure function of the rows") {
    CheckTable table;
    table.label = "demo";
    table.param_name = "k";
    table.rows.push_back({1.0, 0.25, 0.0, 0.25});
    table.rows.push_back({2.0, 0.0625, 0.0, 0.0625});

    emit_report(table, "harness_check_a");
    emit_report(table, "harness_check_b");
    CHECK(slurp("harness_check_a.csv") == slurp("harness_check_b.csv"));
    CHECK(slurp("harness_check_a.svg") == slurp("harness_check_b.svg"));

    const std::string csv = slurp("harness_check_a.csv");
    CHECK(csv ==
          "param,value,target,deviation\n"
          "1,0.25,0,0.25\n"
          "2,0.0625,0,0.0625\n");

    const std::string svg = slurp("harness_check_a.svg");
    CHECK(svg.find("viewBox=\"0 0 800 600\"") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);

    CHECK_THROWS_AS(emit_report(CheckTable{}, "harness_check_empty"),
                    std::invalid_argument);
    CHECK_THROWS_AS(emit_report(std::vector<SweepRecord>{}, "harness_rows_empty"),
                    std::invalid_argument);
}

TEST_CASE("seventeen digit columns survive a read back") {
    SweepRecord r;
    r.s = 0.6;
    r.eps = 1.0 - 0.6;
    r.p = 2.0;
    r.lambda = 0.49663121183621450;
    r.reference = kTanhHalf;
    r.abs_err = std::abs(r.lambda - r.reference);
    r.rel_err = r.abs_err / r.reference;
    r.dofs = 83;
    r.strip_cells = 72;
    r.tail_mass = 0.72545880274677021;
    emit_report(std::vector<SweepRecord>{r}, "harness_roundtrip");

    std::ifstream in("harness_roundtrip.csv");
    std::string header, line;
    REQUIRE(std::getline(in, header));
    REQUIRE(std::getline(in, line));
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 10);
    CHECK(std::stod(cells[0]) == r.s);
    CHECK(std::stod(cells[3]) == r.lambda);
    CHECK(std::stod(cells[4]) == r.reference);
    CHECK(std::stod(cells[9]) == r.tail_mass);
    CHECK(cells[7] == "83");
}

#include "runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>
#include <random>

#include "eigen.hpp"
#include "forms.hpp"
#include "harness.hpp"
#include "kernel.hpp"
#include "mesh.hpp"
#include "reference.hpp"

namespace fsk {

namespace {

bool verbose_enabled() {
    const char* v = std::getenv("FRACSTEK_VERBOSE");
    return v != nullptr && *v != '\0' && std::string(v) != "0";
}

QuadratureControl quad_of(const RunConfig& cfg) {
    QuadratureControl q;
    q.rel_tol = cfg.quad_tol;
    return q;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

// mesh matching one sweep row: strip edges resolved into at least
// min_strip_cells cells, refining the base spacing when needed
CollarMesh1D row_mesh(const RunConfig& cfg, double eps, StripCells* sc_out) {
    const double half = 0.5 * (cfg.b - cfg.a);
    const int min_cells = std::max(8, cfg.mesh.min_strip_cells);
    double h = cfg.mesh.h;
    for (int attempt = 0;; ++attempt) {
        CollarMesh1D mesh = build_collar_mesh(cfg.a, cfg.b, cfg.collar, h,
                                              cfg.mesh.gamma,
                                              std::min(eps, half));
        StripCells sc = strip_cells(mesh, eps);
        if (static_cast<int>(sc.cells.size()) >= min_cells) {
            if (sc_out) *sc_out = sc;
            return mesh;
        }
        if (attempt >= 14)
            throw NoConvergence("mesh policy cannot reach the strip resolution");
        h *= 0.5;
    }
}

int cmd_constants(const RunConfig& cfg, std::ostream& out) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "K(1, %g) = %.17g\n", cfg.p,
                  bbm_constant(1, cfg.p));
    out << buf;
    std::snprintf(buf, sizeof buf, "K(2, %g) = %.17g\n", cfg.p,
                  bbm_constant(2, cfg.p));
    out << buf;
    return 0;
}

int cmd_verify(const RunConfig& cfg, std::ostream& out) {
    const bool verbose = verbose_enabled();
    int failures = 0;
    auto report = [&](const char* label, bool ok, double measure) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "[%s] %-34s max residual %.3e\n",
                      ok ? "PASS" : "FAIL", label, measure);
        out << buf;
        if (!ok) ++failures;
    };

    const double s = cfg.s.value_or(0.75);
    const CollarMesh1D mesh =
        build_collar_mesh(cfg.a, cfg.b, cfg.collar, cfg.mesh.h, cfg.mesh.gamma,
                          0.25 * (cfg.b - cfg.a));
    const GagliardoForm form =
        assemble(mesh, KernelSpec{1, s, cfg.p}, quad_of(cfg));
    if (verbose)
        std::cerr << "verify: " << mesh.interior_node_count()
                  << " interior nodes, " << mesh.exterior_cell_count()
                  << " collar cells, s = " << s << "\n";

    // seeded random pairs through the divergence and parts identities
    const double id_tol = cfg.p == 2.0 ? 1e-12 : 1e-8;
    double worst_id = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        std::mt19937 rng(cfg.seed + static_cast<unsigned>(trial));
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        DofFunction u, v;
        u.interior.resize(mesh.interior_node_count());
        v.interior.resize(mesh.interior_node_count());
        u.exterior.resize(mesh.exterior_cell_count());
        v.exterior.resize(mesh.exterior_cell_count());
        for (int i = 0; i < u.interior.size(); ++i) u.interior[i] = dist(rng);
        for (int i = 0; i < v.interior.size(); ++i) v.interior[i] = dist(rng);
        for (int i = 0; i < u.exterior.size(); ++i) u.exterior[i] = dist(rng);
        for (int i = 0; i < v.exterior.size(); ++i) v.exterior[i] = dist(rng);
        const IdentityReport rep = identity_check(form, u, v);
        worst_id = std::max(worst_id,
                            std::max(rep.divergence_residual,
                                     rep.parts_residual) /
                                std::max(rep.scale, 1e-300));
    }
    report("divergence and parts identities", worst_id <= id_tol, worst_id);

    // pointwise inequality sampling: nonnegativity, and vanishing on
    // proportional pairs
    std::mt19937 rng(cfg.seed);
    std::uniform_real_distribution<double> upos(0.0, 3.0);
    std::uniform_real_distribution<double> vpos(0.1, 3.0);
    double worst_neg = 0.0, worst_prop = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const double vx = vpos(rng), vy = vpos(rng);
        double ux = upos(rng), uy = upos(rng);
        if (trial % 10 == 0) {
            const double k = upos(rng) / 3.0;
            ux = k * vx;
            uy = k * vy;
        }
        const double defect = picone_defect(ux, uy, vx, vy, cfg.p);
        const double q = sign_power(vx - vy, cfg.p);
        const double scale =
            abs_power(ux - uy, cfg.p) +
            std::abs(q) * (abs_power(ux, cfg.p) / abs_power(vx, cfg.p - 1.0) +
                           abs_power(uy, cfg.p) / abs_power(vy, cfg.p - 1.0));
        if (defect < 0.0)
            worst_neg = std::max(worst_neg, -defect / std::max(scale, 1e-300));
        if (trial % 10 == 0)
            worst_prop = std::max(
                worst_prop, std::abs(defect) / std::max(1.0, scale));
    }
    report("difference quotient inequality", worst_neg <= 1e-14, worst_neg);
    report("equality on proportional pairs", worst_prop <= 1e-12, worst_prop);

    // scaled seminorm and strip mean studies for the linear ramp
    HarnessOptions hopt;
    hopt.a = cfg.a;
    hopt.b = cfg.b;
    hopt.collar = cfg.collar;
    hopt.mesh = cfg.mesh;
    hopt.quad = quad_of(cfg);
    auto ramp = [](double x) { return x; };
    const CheckTable bbm = bbm_limit_table(ramp, cfg.p, cfg.s_grid, hopt);
    emit_report(bbm, out_path(cfg, "bbm_table"));
    bool bbm_ok = true;
    for (std::size_t i = 1; i < bbm.rows.size(); ++i)
        bbm_ok = bbm_ok && bbm.rows[i].deviation < bbm.rows[i - 1].deviation;
    report("seminorm scaling toward gradient",
           bbm_ok && bbm.rows.size() >= 2, bbm.rows.back().deviation);

    const CheckTable strip =
        strip_limit_table(ramp, cfg.p, {0.2, 0.1, 0.01}, cfg.a, cfg.b);
    emit_report(strip, out_path(cfg, "strip_table"));
    bool strip_ok = strip.rows.back().deviation < strip.rows.front().deviation;
    report("strip mean toward boundary sum", strip_ok,
           strip.rows.back().deviation);

    return failures == 0 ? 0 : 1;
}

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
    if (!cfg.s)
        throw ConfigError("solve requires s (set it in the config or pass --s)");
    const double s = *cfg.s;
    const double eps = 1.0 - s;
    StripCells sc;
    const CollarMesh1D mesh = row_mesh(cfg, eps, &sc);
    if (verbose_enabled())
        std::cerr << "solve: " << mesh.interior_node_count()
                  << " interior nodes, " << sc.cells.size()
                  << " strip cells\n";
    if (sc.covers_domain)
        out << "note: eps >= half the domain length, the boundary strip is "
               "the whole domain\n";

    const GagliardoForm form =
        assemble(mesh, KernelSpec{1, s, cfg.p}, quad_of(cfg));
    EigenResult first;
    EigenDiagnostics diag;
    if (cfg.p == 2.0) {
        const auto pair = solve_linear(form, eps, 2);
        first = pair[0];
        diag = diagnostics(first, mesh,
                           pair.size() > 1
                               ? std::optional<double>(pair[1].eigenvalue)
                               : std::nullopt);
    } else {
        const DofFunction init = interpolate(mesh, [](double) { return 1.0; });
        first = solve_first_p(form, eps, init, cfg.eigen_tol, cfg.max_outer);
        diag = diagnostics(first, mesh);
    }

    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "lambda_1(s=%g, p=%g) = %.17g  (%d iterations, %s)\n", s,
                  cfg.p, first.eigenvalue, first.iterations,
                  first.converged ? "converged" : "NOT converged");
    out << buf;
    if (diag.gap_to_next) {
        std::snprintf(buf, sizeof buf, "gap to next eigenvalue = %.17g\n",
                      *diag.gap_to_next);
        out << buf;
    }

    std::ofstream json(out_path(cfg, "solve.json"), std::ios::binary);
    json << eigen_to_json(first, &diag).dump(2) << "\n";

    return first.converged ? 0 : 1;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
    ReferenceCache cache(out_path(cfg, "reference_cache.json"));
    SweepOptions sopt;
    sopt.a = cfg.a;
    sopt.b = cfg.b;
    sopt.collar = cfg.collar;
    sopt.mesh = cfg.mesh;
    sopt.quad = quad_of(cfg);
    sopt.eigen_tol = cfg.eigen_tol;
    sopt.max_outer = cfg.max_outer;
    sopt.threads = cfg.threads;
    sopt.cache = &cache;

    const std::vector<SweepRecord> rows =
        convergence_sweep(cfg.p, cfg.s_grid, sopt);
    emit_report(rows, out_path(cfg, "sweep"));

    bool clean = true;
    char buf[256];
    for (const SweepRecord& r : rows) {
        if (!r.note.empty()) {
            std::snprintf(buf, sizeof buf, "s=%-8g FAILED: %s\n", r.s,
                          r.note.c_str());
            out << buf;
            clean = false;
            continue;
        }
        std::snprintf(buf, sizeof buf,
                      "s=%-8g lambda=%.10f reference=%.10f rel_err=%.3e%s\n",
                      r.s, r.lambda, r.reference, r.rel_err,
                      r.converged ? "" : "  NOT converged");
        out << buf;
        clean = clean && r.converged;
    }
    return clean ? 0 : 1;
}

int cmd_ref(const RunConfig& cfg, std::ostream& out) {
    ReferenceCache cache(out_path(cfg, "reference_cache.json"));
    const SteklovRef& rec = cache.get(cfg.p, cfg.b - cfg.a);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "lambda_1(p=%g, L=%g) = %.17g  method=%s  discrepancy=%.3e\n",
                  rec.p, rec.length, rec.lambda, ref_method_name(rec.method),
                  rec.discrepancy);
    out << buf;
    if (cfg.p == 2.0) {
        const auto pair = steklov_linear(cfg.b - cfg.a, 2);
        std::snprintf(buf, sizeof buf, "lambda_2(p=2, L=%g) = %.17g\n",
                      cfg.b - cfg.a, pair[1]);
        out << buf;
    }
    return 0;
}

int cmd_demo_zero(const RunConfig& cfg, std::ostream& out) {
    const double s = cfg.s.value_or(0.5);
    const CheckTable table = zero_infimum_demo(cfg.k_grid, s, cfg.p);
    emit_report(table, out_path(cfg, "zero_quotients"));
    char buf[256];
    for (const CheckRow& r : table.rows) {
        std::snprintf(buf, sizeof buf, "k=%-4g quotient=%.17g\n", r.param,
                      r.value);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "last/first = %.6f\n",
                  table.rows.back().value / table.rows.front().value);
    out << buf;
    return 0;
}

int cmd_trace(const RunConfig& cfg, std::ostream& out) {
    if (!cfg.s)
        throw ConfigError("trace requires s (set it in the config or pass --s)");
    const double value = trace_constant(*cfg.s, cfg.p, cfg.mesh, quad_of(cfg));
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "trace_constant(s=%g, p=%g) = %.17g  (unit interval)\n",
                  *cfg.s, cfg.p, value);
    out << buf;
    return 0;
}

}  // namespace

int run_command(const RunConfig& cfg, std::ostream& out) {
    validate_config(cfg);
    const auto start = std::chrono::steady_clock::now();
    int status = 0;
    if (cfg.command == "constants") {
        status = cmd_constants(cfg, out);
    } else if (cfg.command == "verify") {
        status = cmd_verify(cfg, out);
    } else if (cfg.command == "solve") {
        status = cmd_solve(cfg, out);
    } else if (cfg.command == "sweep") {
        status = cmd_sweep(cfg, out);
    } else if (cfg.command == "ref") {
        status = cmd_ref(cfg, out);
    } else if (cfg.command == "demo-zero") {
        status = cmd_demo_zero(cfg, out);
    } else if (cfg.command == "trace") {
        status = cmd_trace(cfg, out);
    } else {
        throw ConfigError("command '" + cfg.command + "' is not implemented");
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    std::cerr << "[fracstek] " << cfg.command << " finished in " << dt
              << "s\n";
    return status;
}

}  // namespace fsk

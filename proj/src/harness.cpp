#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "gauss.hpp"

namespace fsk {

namespace {

template <class F>
double gauss_integrate(int n, double a, double b, F&& f) {
    const GaussRule& rule = gauss_rule(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return acc * half;
}

void require_grid(const std::vector<double>& s_grid) {
    if (s_grid.empty())
        throw std::invalid_argument("s grid must be nonempty");
    for (double s : s_grid)
        if (!(s > 0.0 && s < 1.0))
            throw std::invalid_argument("s values must lie in (0, 1)");
}

void require_p(double p) {
    if (!(p > 1.0)) throw std::invalid_argument("p must exceed 1");
}

// gradient p-norm of the interior P1 interpolant, the limit object the
// scaled seminorms drift toward
double interpolant_gradient_norm(const CollarMesh1D& mesh,
                                 const Eigen::VectorXd& u, double p) {
    double acc = 0.0;
    for (int i = 0; i < mesh.interior_cell_count(); ++i) {
        const double hc = mesh.nodes[i + 1] - mesh.nodes[i];
        acc += hc * abs_power((u[i + 1] - u[i]) / hc, p);
    }
    return acc;
}

void require_finite(const CheckTable& table) {
    for (const CheckRow& row : table.rows)
        if (!std::isfinite(row.deviation))
            throw NoConvergence("check table produced a non-finite deviation");
}

}  // namespace

CheckTable bbm_limit_table(const std::function<double(double)>& u, double p,
                           const std::vector<double>& s_grid,
                           const HarnessOptions& opt) {
    require_p(p);
    require_grid(s_grid);
    const CollarMesh1D mesh =
        build_collar_mesh(opt.a, opt.b, opt.collar, opt.mesh.h, opt.mesh.gamma,
                          0.25 * (opt.b - opt.a));
    Eigen::VectorXd ui(mesh.interior_node_count());
    for (int i = 0; i < mesh.interior_node_count(); ++i) ui[i] = u(mesh.nodes[i]);
    const double target = interpolant_gradient_norm(mesh, ui, p);

    CheckTable table;
    table.label = "scaled interior seminorm";
    table.param_name = "s";
    for (double s : s_grid) {
        const InteriorForm iform =
            assemble_interior(mesh, KernelSpec{1, s, p}, opt.quad);
        const double value =
            bbm_constant(1, p) * (1.0 - s) * interior_energy(iform, ui);
        table.rows.push_back({s, value, target, std::abs(value - target)});
    }
    require_finite(table);
    return table;
}

CheckTable extension_bbm_check(const std::function<double(double)>& u,
                               const std::vector<double>& s_grid, double R,
                               double p, const HarnessOptions& opt,
                               CheckTable* cross) {
    require_p(p);
    require_grid(s_grid);
    if (!(R > 0.0))
        throw std::invalid_argument("extension_bbm_check: requires R > 0");
    const double a = opt.a;
    const double b = opt.b;
    const CollarMesh1D mesh = build_collar_mesh(
        a, b, R, opt.mesh.h, opt.mesh.gamma, 0.25 * (b - a));

    // continuous extension: u inside, linear decay to zero across the collar
    const double ua = u(a);
    const double ub = u(b);
    const auto extended = [&](double x) {
        if (x < a) return ua * std::max(0.0, 1.0 - (a - x) / R);
        if (x > b) return ub * std::max(0.0, 1.0 - (x - b) / R);
        return u(x);
    };
    const DofFunction eu = interpolate(mesh, extended);
    const double target = interpolant_gradient_norm(mesh, eu.interior, p);

    CheckTable table;
    table.label = "scaled extension energy";
    table.param_name = "s";
    if (cross) {
        cross->label = "domain to collar cross part";
        cross->param_name = "s";
        cross->rows.clear();
    }
    for (double s : s_grid) {
        const KernelSpec spec{1, s, p};
        const GagliardoForm form = assemble(mesh, spec, opt.quad);
        const InteriorForm iform = assemble_interior(mesh, spec, opt.quad);
        const double scale = bbm_constant(1, p) * (1.0 - s);
        const double full = scale * energy(form, eu);
        const double inner = scale * interior_energy(iform, eu.interior);
        table.rows.push_back({s, full, target, std::abs(full - target)});
        if (cross) {
            const double mag = std::abs(full - inner);
            cross->rows.push_back({s, mag, 0.0, mag});
        }
    }
    require_finite(table);
    if (cross) require_finite(*cross);
    return table;
}

CheckTable strip_limit_table(const std::function<double(double)>& u, double p,
                             const std::vector<double>& eps_grid,
                             double a, double b) {
    require_p(p);
    if (eps_grid.empty())
        throw std::invalid_argument("eps grid must be nonempty");
    if (!(b > a)) throw std::invalid_argument("requires b > a");

    const double target = abs_power(u(a), p) + abs_power(u(b), p);
    const auto strip_integral = [&](double lo, double hi) {
        // 8 panels of 16-point Gauss per strip
        double acc = 0.0;
        const int panels = 8;
        for (int j = 0; j < panels; ++j) {
            const double plo = lo + (hi - lo) * j / panels;
            const double phi = lo + (hi - lo) * (j + 1) / panels;
            acc += gauss_integrate(16, plo, phi,
                                   [&](double x) { return abs_power(u(x), p); });
        }
        return acc;
    };

    CheckTable table;
    table.label = "strip mean against boundary sum";
    table.param_name = "eps";
    for (double eps : eps_grid) {
        if (!(eps > 0.0))
            throw std::invalid_argument("eps values must be positive");
        const double half = 0.5 * (b - a);
        double integral;
        if (eps >= half) {
            integral = strip_integral(a, b);  // the strip is the whole domain
        } else {
            integral = strip_integral(a, a + eps) + strip_integral(b - eps, b);
        }
        const double value = integral / eps;
        table.rows.push_back({eps, value, target, std::abs(value - target)});
    }
    require_finite(table);
    return table;
}

namespace {

SweepRecord sweep_row(double p, double s, double reference,
                      const SweepOptions& opt) {
    SweepRecord rec;
    rec.s = s;
    rec.eps = 1.0 - s;
    rec.p = p;
    rec.reference = reference;
    rec.constant_bound = 0.5 * (opt.b - opt.a);
    rec.lambda = std::numeric_limits<double>::quiet_NaN();
    rec.abs_err = rec.lambda;
    rec.rel_err = rec.lambda;
    try {
        const double eps = rec.eps;
        const double half = 0.5 * (opt.b - opt.a);
        const int min_cells = std::max(8, opt.mesh.min_strip_cells);
        double h = opt.mesh.h;
        CollarMesh1D mesh;
        StripCells sc;
        for (int attempt = 0;; ++attempt) {
            mesh = build_collar_mesh(opt.a, opt.b, opt.collar, h,
                                     opt.mesh.gamma, std::min(eps, half));
            sc = strip_cells(mesh, eps);
            if (static_cast<int>(sc.cells.size()) >= min_cells) break;
            if (attempt >= 14)
                throw NoConvergence("mesh policy cannot reach the strip resolution");
            h *= 0.5;
        }
        rec.dofs = mesh.interior_node_count();
        rec.strip_cells = static_cast<int>(sc.cells.size());

        const GagliardoForm form = assemble(mesh, KernelSpec{1, s, p}, opt.quad);
        rec.tail_mass = form.tail_mass;

        EigenResult first;
        std::optional<double> next;
        if (p == 2.0) {
            const auto pair = solve_linear(form, eps, 2);
            first = pair[0];
            next = pair[1].eigenvalue;
            rec.gap = pair[1].eigenvalue - pair[0].eigenvalue;
        } else {
            const DofFunction init =
                interpolate(mesh, [](double) { return 1.0; });
            first = solve_first_p(form, eps, init, opt.eigen_tol, opt.max_outer);
            for (std::size_t i = 1; i < first.quotient_history.size(); ++i)
                if (first.quotient_history[i] >
                    first.quotient_history[i - 1] +
                        1e-12 * std::max(1.0, first.quotient_history[i - 1]))
                    rec.quotient_monotone = false;
        }
        rec.lambda = first.eigenvalue;
        rec.converged = first.converged;
        rec.normalized = first.normalized;
        rec.sign_constant = diagnostics(first, mesh, next).sign_constant;
        rec.abs_err = std::abs(rec.lambda - reference);
        rec.rel_err = rec.abs_err / std::abs(reference);
    } catch (const std::exception& e) {
        rec.converged = false;
        rec.note = e.what();
    }
    return rec;
}

}  // namespace

std::vector<SweepRecord> convergence_sweep(double p,
                                           const std::vector<double>& s_grid,
                                           const SweepOptions& opt) {
    require_p(p);
    require_grid(s_grid);
    for (std::size_t i = 1; i < s_grid.size(); ++i)
        if (!(s_grid[i] > s_grid[i - 1]))
            throw std::invalid_argument("s grid must be strictly increasing");
    if (!(opt.mesh.gamma >= 2.0))
        throw std::invalid_argument("sweep mesh policy requires gamma >= 2");
    if (opt.threads < 1)
        throw std::invalid_argument("thread count must be positive");

    // one reference per sweep, computed up front so rows stay independent
    double reference;
    if (opt.cache) {
        reference = opt.cache->get(p, opt.b - opt.a).lambda;
    } else {
        reference = steklov_reference(p, opt.b - opt.a).lambda;
    }

    std::vector<SweepRecord> rows(s_grid.size());
    if (opt.threads == 1 || s_grid.size() == 1) {
        for (std::size_t i = 0; i < s_grid.size(); ++i)
            rows[i] = sweep_row(p, s_grid[i], reference, opt);
    } else {
        std::atomic<std::size_t> cursor{0};
        const int workers =
            std::min<int>(opt.threads, static_cast<int>(s_grid.size()));
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = cursor.fetch_add(1);
                    if (i >= s_grid.size()) return;
                    rows[i] = sweep_row(p, s_grid[i], reference, opt);
                }
            });
        for (auto& t : pool) t.join();
    }
    return rows;
}

CheckTable zero_infimum_demo(const std::vector<int>& k_grid, double s,
                             double p) {
    require_p(p);
    if (!(s > 0.0 && s < 1.0))
        throw std::invalid_argument("s must lie in (0, 1)");
    if (k_grid.empty())
        throw std::invalid_argument("k grid must be nonempty");
    for (std::size_t i = 0; i < k_grid.size(); ++i) {
        if (k_grid[i] < 1)
            throw std::invalid_argument("k values must be positive");
        if (i > 0 && k_grid[i] <= k_grid[i - 1])
            throw std::invalid_argument("k grid must be strictly increasing");
    }

    const double expo = -(1.0 + s * p);
    const double tent_mass = 2.0 / (p + 1.0);  // complement p-mass, k independent
    const double scale = bbm_constant(1, p) * (1.0 - s);

    CheckTable table;
    table.label = "translated tent quotient";
    table.param_name = "k";
    for (int k : k_grid) {
        const double c = k + 2.0;  // bump support [c - 1, c + 1], outside (0, 1)
        // cross energy 2 * int_(0,1) int |tent(y - c)|^p |x - y|^expo dy dx;
        // the domain part of the function is zero, so this is the whole
        // numerator seminorm
        double inner = 0.0;
        for (int jx = 0; jx < 8; ++jx) {
            const double xlo = jx / 8.0;
            const double xhi = (jx + 1) / 8.0;
            inner += gauss_integrate(16, xlo, xhi, [&](double x) {
                double acc = 0.0;
                for (int side = 0; side < 2; ++side) {
                    const double ylo = side == 0 ? c - 1.0 : c;
                    for (int jy = 0; jy < 4; ++jy) {
                        const double plo = ylo + jy / 4.0;
                        const double phi = ylo + (jy + 1) / 4.0;
                        acc += gauss_integrate(16, plo, phi, [&](double y) {
                            return abs_power(1.0 - std::abs(y - c), p) *
                                   std::pow(y - x, expo);
                        });
                    }
                }
                return acc;
            });
        }
        const double quotient = scale * 2.0 * inner / tent_mass;
        table.rows.push_back({static_cast<double>(k), quotient, 0.0, quotient});
    }
    require_finite(table);
    return table;
}

double trace_constant(double s, double p, const MeshPolicy& policy,
                      const QuadratureControl& quad) {
    require_p(p);
    if (!(s > 0.0 && s < 1.0))
        throw std::invalid_argument("s must lie in (0, 1)");
    if (!(s * p > 1.0))
        throw std::domain_error(
            "trace_constant: requires s*p > 1; below that the boundary "
            "quotient has no positive infimum");

    const CollarMesh1D mesh =
        build_collar_mesh(0.0, 1.0, 1.0, policy.h, policy.gamma, 0.25);
    const InteriorForm iform = assemble_interior(mesh, KernelSpec{1, s, p}, quad);
    const double kscale = bbm_constant(1, p) * (1.0 - s);
    const int n = mesh.interior_node_count();
    const Eigen::MatrixXd mass = interior_mass(mesh).to_dense();

    if (p == 2.0) {
        const Eigen::MatrixXd A = kscale * iform.h + mass;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success)
            throw NoConvergence("trace_constant: quotient matrix not positive");
        // boundary mass has rank 2; the pencil reduces to the 2x2 Gram
        // matrix of the whitened endpoint vectors
        Eigen::MatrixXd ends = Eigen::MatrixXd::Zero(n, 2);
        ends(0, 0) = 1.0;
        ends(n - 1, 1) = 1.0;
        const Eigen::MatrixXd c = llt.matrixL().solve(ends);
        Eigen::Matrix2d gram = c.transpose() * c;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(gram);
        const double mu = es.eigenvalues().maxCoeff();
        if (!(mu > 0.0))
            throw NoConvergence("trace_constant: degenerate boundary pencil");
        return 1.0 / mu;
    }

    // normalized descent, same scheme as the eigen iteration but with the
    // exact two-point boundary term
    const Eigen::MatrixXd pre = kscale * iform.h + mass;
    Eigen::LLT<Eigen::MatrixXd> llt(pre);
    if (llt.info() != Eigen::Success)
        throw NoConvergence("trace_constant: preconditioner not positive");

    const double inv_p = 1.0 / p;
    auto boundary_mass = [&](const Eigen::VectorXd& v) {
        return abs_power(v[0], p) + abs_power(v[n - 1], p);
    };
    auto quotient_num = [&](const Eigen::VectorXd& v) {
        return kscale * interior_energy(iform, v) + lp_mass(mesh, {v, {}}, p);
    };
    auto objective = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& b) {
        return inv_p * quotient_num(v) - b.dot(v);
    };
    auto grad = [&](const Eigen::VectorXd& v,
                    const Eigen::VectorXd& b) -> Eigen::VectorXd {
        return (kscale * inv_p) * interior_energy_gradient(iform, v) +
               lp_mass_gradient(mesh, v, p) - b;
    };

    auto inner_solve = [&](Eigen::VectorXd v, const Eigen::VectorXd& b,
                           double gtol) {
        double jv = objective(v, b);
        for (int it = 0; it < 400; ++it) {
            const Eigen::VectorXd g = grad(v, b);
            if (g.lpNorm<Eigen::Infinity>() <= gtol) break;
            const Eigen::VectorXd d = -llt.solve(g);
            const double slope = g.dot(d);
            if (!(slope < 0.0)) break;
            double t = 1.0;
            bool accepted = false;
            for (int back = 0; back < 60; ++back) {
                const double jt = objective(v + t * d, b);
                if (jt <= jv + 1e-4 * t * slope) {
                    v += t * d;
                    jv = jt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) break;
        }
        return v;
    };

    // loose inner solves while the quotient is moving, tightened with the
    // outer residual; ascent attempts are retried tighter, not recorded
    Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
    u /= std::pow(boundary_mass(u), inv_p);
    double quot = quotient_num(u);
    const double tol = 1e-10;
    double inner_scale = 1e-6;
    for (int outer = 0; outer < 200; ++outer) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
        b[0] = sign_power(u[0], p);
        b[n - 1] = sign_power(u[n - 1], p);
        const double gtol =
            inner_scale * std::max(1.0, b.lpNorm<Eigen::Infinity>());

        Eigen::VectorXd v = inner_solve(u, b, gtol);
        const double bm = boundary_mass(v);
        if (!(bm > 0.0))
            throw NoConvergence("trace_constant: endpoint values collapsed");
        v /= std::pow(bm, inv_p);
        const double next = quotient_num(v);
        const double residual = std::abs(next - quot);
        if (next <= quot) {
            u = v;
            quot = next;
            if (residual < tol * std::max(1.0, quot)) return quot;
            inner_scale = std::max(1e-11, std::min(inner_scale, 0.03 * residual));
        } else {
            if (residual < tol * std::max(1.0, quot)) return quot;
            if (inner_scale <= 1.5e-11)
                throw NoConvergence("trace_constant: quotient stagnated");
            inner_scale = std::max(1e-11, 1e-3 * inner_scale);
        }
    }
    throw NoConvergence("trace_constant: iteration budget exhausted");
}

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path);
}

// 800x600 line plot: linear parameter axis, log10 error axis.
std::string render_svg(const std::string& x_label, const std::string& y_label,
                       const std::vector<std::pair<double, double>>& pts) {
    const double left = 90.0, right = 770.0, top = 40.0, bottom = 540.0;
    double xmin = pts.front().first, xmax = pts.front().first;
    double ymin = 1e300, ymax = -1e300;
    for (const auto& [x, y] : pts) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        const double yy = std::max(y, 1e-16);
        ymin = std::min(ymin, yy);
        ymax = std::max(ymax, yy);
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    double dlo = std::floor(std::log10(ymin));
    double dhi = std::ceil(std::log10(ymax));
    if (dhi <= dlo) dhi = dlo + 1.0;

    const auto px = [&](double x) {
        return left + (right - left) * (x - xmin) / (xmax - xmin);
    };
    const auto py = [&](double y) {
        const double t = (std::log10(std::max(y, 1e-16)) - dlo) / (dhi - dlo);
        return bottom - (bottom - top) * t;
    };
    char buf[256];
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" "
           "font-family=\"sans-serif\" font-size=\"14\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"black\"/>\n",
                  left, bottom, right, bottom);
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"black\"/>\n",
                  left, top, left, bottom);
    svg += buf;
    // y decade ticks
    for (double d = dlo; d <= dhi + 0.5; d += 1.0) {
        const double y = py(std::pow(10.0, d));
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                      "stroke=\"#bbbbbb\"/>\n",
                      left, y, right, y);
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\">1e%d"
                      "</text>\n",
                      left - 8.0, y + 5.0, static_cast<int>(d));
        svg += buf;
    }
    // x ticks at the data points (parameter studies are short)
    for (const auto& [x, y] : pts) {
        (void)y;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                      "stroke=\"black\"/>\n",
                      px(x), bottom, px(x), bottom + 6.0);
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">%g"
                      "</text>\n",
                      px(x), bottom + 24.0, x);
        svg += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">%s"
                  "</text>\n",
                  0.5 * (left + right), 580.0, x_label.c_str());
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"24\" y=\"%.2f\" text-anchor=\"middle\" "
                  "transform=\"rotate(-90 24 %.2f)\">%s</text>\n",
                  0.5 * (top + bottom), 0.5 * (top + bottom), y_label.c_str());
    svg += buf;
    svg += "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x), py(y));
        svg += buf;
    }
    svg += "\"/>\n";
    for (const auto& [x, y] : pts) {
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"#1f6fb2\"/>\n",
                      px(x), py(y));
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace

void emit_report(const std::vector<SweepRecord>& rows, const std::string& base) {
    if (rows.empty())
        throw std::invalid_argument("emit_report: no rows to write");
    std::string csv =
        "s,eps,p,lambda,reference,abs_err,rel_err,dofs,strip_cells,tail_mass\n";
    for (const SweepRecord& r : rows) {
        csv += fmt(r.s) + "," + fmt(r.eps) + "," + fmt(r.p) + "," +
               fmt(r.lambda) + "," + fmt(r.reference) + "," + fmt(r.abs_err) +
               "," + fmt(r.rel_err) + "," + std::to_string(r.dofs) + "," +
               std::to_string(r.strip_cells) + "," + fmt(r.tail_mass) + "\n";
    }
    write_file(base + ".csv", csv);

    std::vector<std::pair<double, double>> pts;
    for (const SweepRecord& r : rows) pts.push_back({r.s, r.rel_err});
    write_file(base + ".svg", render_svg("s", "relative error", pts));
}

void emit_report(const CheckTable& table, const std::string& base) {
    if (table.rows.empty())
        throw std::invalid_argument("emit_report: no rows to write");
    std::string csv = "param,value,target,deviation\n";
    for (const CheckRow& r : table.rows) {
        csv += fmt(r.param) + "," + fmt(r.value) + "," + fmt(r.target) + "," +
               fmt(r.deviation) + "\n";
    }
    write_file(base + ".csv", csv);

    std::vector<std::pair<double, double>> pts;
    for (const CheckRow& r : table.rows) pts.push_back({r.param, r.deviation});
    write_file(base + ".svg", render_svg(table.param_name, "deviation", pts));
}

}  // namespace fsk

#include "forms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "errors.hpp"
#include "gauss.hpp"

namespace fsk {

namespace {

// integral over T x T of |x - y|^{expo + vanish} for a cell of length h:
//   2 h^{vanish + expo + 2} / ((vanish + expo + 1)(vanish + expo + 2)).
// Finite exactly when vanish + expo + 1 > 0.
double self_moment(double h, double expo, double vanish) {
    const double e1 = vanish + expo + 1.0;
    const double e2 = vanish + expo + 2.0;
    if (e1 <= 0.0)
        throw std::invalid_argument("same-cell kernel moment diverges");
    return 2.0 * std::pow(h, e2) / (e1 * e2);
}

// The dense blocks are a genuine quadratic form for p = 2 and a solver
// preconditioner otherwise.  For p != 2 they use the quadratic kernel
// exponent -(3 - p(1-s)), which matches the local scaling of the energy
// Hessian and keeps the corner quadrature class contracting.  It reduces
// to the true exponent -(1 + 2s) at p = 2.
double block_exponent(const KernelSpec& spec) {
    if (spec.p == 2.0) return spec.exponent();
    return -(3.0 - spec.p * (1.0 - spec.s));
}

// Second moments of two cells meeting at a corner:
//   m_{jk} = integral over [0,a]x[0,b] of xi^j eta^k (xi + eta)^e
// for j + k = 2.  Quadratic block entries of touching pairs are built
// from these instead of point rules: near the corner a rule's weights
// grow like the kernel while the compensating smallness sits in basis
// differences of rounded coordinates, so deep levels inject noise.  Here
// the corner slice integrates in closed form and the rest is analytic.
struct TouchMoments {
    double m20, m11, m02;
};

TouchMoments touch_moments(double a, double b, double e) {
    const bool swapped = a > b;
    if (swapped) std::swap(a, b);

    // slice u = xi + eta; inner xi-integrals are exact polynomials
    // u in [0, a]: P20 = u^3/3, P11 = u^3/6, P02 = u^3/3
    const double r1 = std::pow(a, e + 4.0) / (e + 4.0);
    double m20 = r1 / 3.0;
    double m11 = r1 / 6.0;
    double m02 = r1 / 3.0;

    const GaussRule& gr = gauss_rule(16);
    auto add_panel = [&](double lo, double hi, auto&& p20, auto&& p11,
                         auto&& p02) {
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (std::size_t q = 0; q < gr.nodes.size(); ++q) {
            const double u = mid + half * gr.nodes[q];
            const double w = half * gr.weights[q] * std::pow(u, e);
            m20 += w * p20(u);
            m11 += w * p11(u);
            m02 += w * p02(u);
        }
    };

    // u in [a, b]: xi runs over the whole [0, a]
    if (b > a * (1.0 + 1e-14)) {
        auto p20 = [&](double) { return a * a * a / 3.0; };
        auto p11 = [&](double u) { return a * a * (0.5 * u - a / 3.0); };
        auto p02 = [&](double u) { return a * (u * (u - a) + a * a / 3.0); };
        double lo = a;
        while (lo < b) {
            const double hi = std::min(2.0 * lo, b);
            add_panel(lo, hi, p20, p11, p02);
            lo = hi;
        }
    }

    // u in [b, a+b]: xi in [u-b, a]; t = u - b stays in [0, a]
    {
        auto p20 = [&](double u) {
            const double t = u - b;
            return (a - t) * (a * a + a * t + t * t) / 3.0;
        };
        auto p11 = [&](double u) {
            const double t = u - b;
            return (a - t) * (0.5 * u * (a + t) -
                              (a * a + a * t + t * t) / 3.0);
        };
        auto p02 = [&](double u) {
            const double s3 = u - a;
            return (a + b - u) * (b * b + b * s3 + s3 * s3) / 3.0;
        };
        add_panel(b, b + 0.5 * a, p20, p11, p02);
        add_panel(b + 0.5 * a, a + b, p20, p11, p02);
    }

    if (swapped) std::swap(m20, m02);
    return {m20, m11, m02};
}

struct Assembler {
    const CollarMesh1D& mesh;
    KernelSpec spec;
    QuadratureControl ctrl;
    double expo;    // kernel exponent, applied to the emitted rules
    double dexpo;   // block reweight: blocks integrate |x-y|^{expo+dexpo}
    double vanish;  // diagonal vanishing order of the energy integrand
    int n;          // interior node count

    Eigen::MatrixXd* hii = nullptr;
    Eigen::MatrixXd* hie = nullptr;
    Eigen::VectorXd* hee = nullptr;
    PairCache* cache = nullptr;
    const std::vector<int>* free_index = nullptr;

    PairPoints pts;

    double block_w(double x, double y, double w) const {
        if (dexpo == 0.0) return w;
        return w * std::pow(std::abs(x - y), dexpo);
    }

    void add_self(int ic) {
        const Interval c = mesh.interior_cell(ic);
        const double h = c.length();
        const double cb = self_moment(h, expo + dexpo, 2.0) / (h * h);
        (*hii)(ic, ic) += cb;
        (*hii)(ic + 1, ic + 1) += cb;
        (*hii)(ic, ic + 1) -= cb;
        (*hii)(ic + 1, ic) -= cb;
        if (cache) {
            cache->self_node.push_back(ic);
            cache->self_inv_h.push_back(1.0 / h);
            cache->self_coeff.push_back(self_moment(h, expo, spec.p));
        }
    }

    void pair_ii(int ic, int jc) {
        const Interval a = mesh.interior_cell(ic);
        const Interval b = mesh.interior_cell(jc);
        const double ha = a.length(), hb = b.length();

        if (jc == ic + 1) {
            // adjacent cells share the node ic+1; with xi = distance to
            // the corner inside a and eta inside b, the hat differences
            // are xi/ha, eta/hb - xi/ha, -eta/hb
            const TouchMoments mo = touch_moments(ha, hb, expo + dexpo);
            const double x20 = mo.m20 / (ha * ha);
            const double x11 = mo.m11 / (ha * hb);
            const double x02 = mo.m02 / (hb * hb);
            const int ids[3] = {ic, ic + 1, ic + 2};
            const double loc[3][3] = {
                {x20, x11 - x20, -x11},
                {x11 - x20, x20 - 2.0 * x11 + x02, x11 - x02},
                {-x11, x11 - x02, x02}};
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    (*hii)(ids[r], ids[c]) += 2.0 * loc[r][c];
            if (cache) emit_cache_ii(a, b, ic, jc);
            return;
        }

        pts.clear();
        build_pair_rule(a, b, expo, vanish, ctrl, pts);
        const double inv_ha = 1.0 / ha;
        const double inv_hb = 1.0 / hb;
        const int ids[4] = {ic, ic + 1, jc, jc + 1};
        double loc[4][4] = {};
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const double x = pts.x[k], y = pts.y[k], w = pts.w[k];
            const double ta = (x - a.lo) * inv_ha;
            const double tb = (y - b.lo) * inv_hb;
            const double d[4] = {1.0 - ta, ta, -(1.0 - tb), -tb};
            const double bw = block_w(x, y, w);
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) loc[r][c] += bw * d[r] * d[c];
            if (cache) {
                cache->ia.push_back(ic);
                cache->ta.push_back(ta);
                cache->ib.push_back(jc);
                cache->tb.push_back(tb);
                cache->w.push_back(2.0 * w);
            }
        }
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                (*hii)(ids[r], ids[c]) += 2.0 * loc[r][c];
    }

    void emit_cache_ii(const Interval& a, const Interval& b, int ic, int jc) {
        pts.clear();
        build_pair_rule(a, b, expo, vanish, ctrl, pts);
        const double inv_ha = 1.0 / a.length();
        const double inv_hb = 1.0 / b.length();
        for (std::size_t k = 0; k < pts.size(); ++k) {
            cache->ia.push_back(ic);
            cache->ta.push_back((pts.x[k] - a.lo) * inv_ha);
            cache->ib.push_back(jc);
            cache->tb.push_back((pts.y[k] - b.lo) * inv_hb);
            cache->w.push_back(2.0 * pts.w[k]);
        }
    }

    void pair_ie(int ic, int e) {
        const Interval a = mesh.interior_cell(ic);
        const Interval b = mesh.exterior[static_cast<std::size_t>(e)];
        const bool touch = mesh.is_touching(e);
        const int slave = (e == mesh.touching_left()) ? 0 : n - 1;
        const int fe = touch ? -1 : (*free_index)[static_cast<std::size_t>(e)];
        const int cache_ib = touch ? (slave == 0 ? 0 : n - 2) : -1 - fe;
        const double cache_tb = (touch && slave != 0) ? 1.0 : 0.0;
        const double inv_ha = 1.0 / a.length();

        if (touch) {
            const bool adjacent =
                (slave == 0) ? (ic == 0) : (ic == mesh.interior_cell_count() - 1);
            if (adjacent) {
                // the cell meets the corner and the collar value is the
                // trace there, so both hat differences are
                // +-(distance to corner)/ha and only the m20 moment appears
                const TouchMoments mo =
                    touch_moments(a.length(), b.length(), expo + dexpo);
                const double val = 2.0 * mo.m20 / (a.length() * a.length());
                (*hii)(ic, ic) += val;
                (*hii)(ic + 1, ic + 1) += val;
                (*hii)(ic, ic + 1) -= val;
                (*hii)(ic + 1, ic) -= val;
            } else {
                // disjoint from the collar cell, but the collar value is
                // still the slaved corner trace, so the pair couples the
                // cell's nodes to the slave node inside the interior block
                pts.clear();
                build_pair_rule(a, b, expo, vanish, ctrl, pts);
                const int ids[3] = {ic, ic + 1, slave};
                double loc[3][3] = {};
                for (std::size_t k = 0; k < pts.size(); ++k) {
                    const double ta = (pts.x[k] - a.lo) * inv_ha;
                    const double d[3] = {1.0 - ta, ta, -1.0};
                    const double bw = block_w(pts.x[k], pts.y[k], pts.w[k]);
                    for (int r = 0; r < 3; ++r)
                        for (int c = 0; c < 3; ++c) loc[r][c] += bw * d[r] * d[c];
                }
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c)
                        (*hii)(ids[r], ids[c]) += 2.0 * loc[r][c];
            }
            if (cache) {
                pts.clear();
                build_pair_rule(a, b, expo, vanish, ctrl, pts);
                for (std::size_t k = 0; k < pts.size(); ++k) {
                    cache->ia.push_back(ic);
                    cache->ta.push_back((pts.x[k] - a.lo) * inv_ha);
                    cache->ib.push_back(cache_ib);
                    cache->tb.push_back(cache_tb);
                    cache->w.push_back(2.0 * pts.w[k]);
                }
            }
        } else {
            pts.clear();
            build_pair_rule(a, b, expo, vanish, ctrl, pts);
            const int ids[2] = {ic, ic + 1};
            double loc[2][2] = {};
            double cross[2] = {};
            double diag = 0.0;
            for (std::size_t k = 0; k < pts.size(); ++k) {
                const double x = pts.x[k], y = pts.y[k], w = pts.w[k];
                const double ta = (x - a.lo) * inv_ha;
                const double d[2] = {1.0 - ta, ta};
                const double bw = block_w(x, y, w);
                for (int r = 0; r < 2; ++r) {
                    for (int c = 0; c < 2; ++c) loc[r][c] += bw * d[r] * d[c];
                    cross[r] -= bw * d[r];
                }
                diag += bw;
                if (cache) {
                    cache->ia.push_back(ic);
                    cache->ta.push_back(ta);
                    cache->ib.push_back(cache_ib);
                    cache->tb.push_back(0.0);
                    cache->w.push_back(2.0 * w);
                }
            }
            for (int r = 0; r < 2; ++r) {
                for (int c = 0; c < 2; ++c)
                    (*hii)(ids[r], ids[c]) += 2.0 * loc[r][c];
                (*hie)(ids[r], fe) += 2.0 * cross[r];
            }
            (*hee)(fe) += 2.0 * diag;
        }
    }

    void run_interior() {
        const int nc = mesh.interior_cell_count();
        for (int ic = 0; ic < nc; ++ic) {
            add_self(ic);
            for (int jc = ic + 1; jc < nc; ++jc) pair_ii(ic, jc);
        }
    }

    void run_exterior() {
        const int nc = mesh.interior_cell_count();
        const int ne = mesh.exterior_cell_count();
        for (int e = 0; e < ne; ++e) {
            const bool touch = mesh.is_touching(e);
            const std::size_t begin = cache ? cache->w.size() : 0;
            for (int ic = 0; ic < nc; ++ic) pair_ie(ic, e);
            if (cache && !touch) {
                const int fe = (*free_index)[static_cast<std::size_t>(e)];
                cache->ext_ranges.push_back({fe, begin, cache->w.size()});
            }
        }
    }
};

double cache_energy(const PairCache& c, const Eigen::VectorXd& r, int n_int,
                    double p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c.self_node.size(); ++k) {
        const int i = c.self_node[k];
        const double m = (r[i + 1] - r[i]) * c.self_inv_h[k];
        acc += c.self_coeff[k] * abs_power(m, p);
    }
    for (std::size_t k = 0; k < c.w.size(); ++k) {
        const int ia = c.ia[k], ib = c.ib[k];
        const double ta = c.ta[k];
        const double ua = (1.0 - ta) * r[ia] + ta * r[ia + 1];
        double ub;
        if (ib >= 0) {
            const double tb = c.tb[k];
            ub = (1.0 - tb) * r[ib] + tb * r[ib + 1];
        } else {
            ub = r[n_int + (-1 - ib)];
        }
        acc += c.w[k] * abs_power(ua - ub, p);
    }
    return acc;
}

double cache_pairing(const PairCache& c, const Eigen::VectorXd& ur,
                     const Eigen::VectorXd& vr, int n_int, double p) {
    double acc = 0.0;
    for (std::size_t k = 0; k < c.self_node.size(); ++k) {
        const int i = c.self_node[k];
        const double mu = (ur[i + 1] - ur[i]) * c.self_inv_h[k];
        const double mv = (vr[i + 1] - vr[i]) * c.self_inv_h[k];
        acc += c.self_coeff[k] * sign_power(mu, p) * mv;
    }
    for (std::size_t k = 0; k < c.w.size(); ++k) {
        const int ia = c.ia[k], ib = c.ib[k];
        const double ta = c.ta[k];
        const double ua = (1.0 - ta) * ur[ia] + ta * ur[ia + 1];
        const double va = (1.0 - ta) * vr[ia] + ta * vr[ia + 1];
        double ub, vb;
        if (ib >= 0) {
            const double tb = c.tb[k];
            ub = (1.0 - tb) * ur[ib] + tb * ur[ib + 1];
            vb = (1.0 - tb) * vr[ib] + tb * vr[ib + 1];
        } else {
            ub = ur[n_int + (-1 - ib)];
            vb = vr[n_int + (-1 - ib)];
        }
        acc += c.w[k] * sign_power(ua - ub, p) * (va - vb);
    }
    return acc;
}

void cache_gradient(const PairCache& c, const Eigen::VectorXd& r, int n_int,
                    double p, Eigen::VectorXd& g) {
    for (std::size_t k = 0; k < c.self_node.size(); ++k) {
        const int i = c.self_node[k];
        const double inv_h = c.self_inv_h[k];
        const double m = (r[i + 1] - r[i]) * inv_h;
        const double t = c.self_coeff[k] * p * sign_power(m, p) * inv_h;
        g[i] -= t;
        g[i + 1] += t;
    }
    for (std::size_t k = 0; k < c.w.size(); ++k) {
        const int ia = c.ia[k], ib = c.ib[k];
        const double ta = c.ta[k];
        const double ua = (1.0 - ta) * r[ia] + ta * r[ia + 1];
        double ub;
        if (ib >= 0) {
            const double tb = c.tb[k];
            ub = (1.0 - tb) * r[ib] + tb * r[ib + 1];
        } else {
            ub = r[n_int + (-1 - ib)];
        }
        const double t = c.w[k] * p * sign_power(ua - ub, p);
        g[ia] += t * (1.0 - ta);
        g[ia + 1] += t * ta;
        if (ib >= 0) {
            const double tb = c.tb[k];
            g[ib] -= t * (1.0 - tb);
            g[ib + 1] -= t * tb;
        } else {
            g[n_int + (-1 - ib)] -= t;
        }
    }
}

// Root of f(v) = sum w_k sign(v - a_k)|v - a_k|^{p-1}, strictly increasing
// in v.  Plain bisection: robust for every p > 1, including p < 2 where
// f' blows up at the data points.
double balance_root(const double* w, const double* a, std::size_t count,
                    double p) {
    double lo = a[0], hi = a[0];
    for (std::size_t k = 1; k < count; ++k) {
        lo = std::min(lo, a[k]);
        hi = std::max(hi, a[k]);
    }
    if (lo == hi) return lo;
    auto f = [&](double v) {
        double acc = 0.0;
        for (std::size_t k = 0; k < count; ++k)
            acc += w[k] * sign_power(v - a[k], p);
        return acc;
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (hi - lo <= 1e-15 * (1.0 + std::abs(mid))) return mid;
        if (f(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Exact integrals over one cell where u is linear from v0 to v1.
//   cell_lp_mass:  integral of |u|^p
//   cell_lp_grad:  integrals of |u|^{p-2} u against the two hats
// Antiderivatives F(t) = t|t|^p/(p+1) and G(t) = |t|^p/p give closed
// forms; near v0 == v1 they cancel, so a Taylor branch takes over (the
// crossover 1e-3 balances the two error sources at ~1e-10 relative).
double cell_lp_mass(double h, double v0, double v1, double p) {
    const double scale = std::max(std::abs(v0), std::abs(v1));
    if (scale == 0.0) return 0.0;
    const double d = v1 - v0;
    if (std::abs(d) <= 1e-3 * scale) {
        const double vm = 0.5 * (v0 + v1);
        const double base = abs_power(vm, p);
        const double corr = p * (p - 1.0) * base / (vm * vm) * d * d / 24.0;
        return h * (base + corr);
    }
    const double f1 = v1 * abs_power(v1, p) / (p + 1.0);
    const double f0 = v0 * abs_power(v0, p) / (p + 1.0);
    return h * (f1 - f0) / d;
}

void cell_lp_grad(double h, double v0, double v1, double p, double& gl,
                  double& gr) {
    const double scale = std::max(std::abs(v0), std::abs(v1));
    if (scale == 0.0) {
        gl = gr = 0.0;
        return;
    }
    const double d = v1 - v0;
    if (std::abs(d) <= 1e-3 * scale) {
        const double vm = 0.5 * (v0 + v1);
        const double am = std::abs(vm);
        const double psi = sign_power(vm, p);
        const double dpsi = (p - 1.0) * std::pow(am, p - 2.0);
        const double ddpsi =
            (p - 1.0) * (p - 2.0) * std::pow(am, p - 3.0) * (vm > 0 ? 1 : -1);
        const double even = 0.5 * psi + ddpsi * d * d / 48.0;
        const double odd = dpsi * d / 12.0;
        gl = h * (even - odd);
        gr = h * (even + odd);
        return;
    }
    const double f1 = v1 * abs_power(v1, p) / (p + 1.0);
    const double f0 = v0 * abs_power(v0, p) / (p + 1.0);
    const double g1 = abs_power(v1, p) / p;
    const double g0 = abs_power(v0, p) / p;
    gl = h * (v1 * (g1 - g0) - (f1 - f0)) / (d * d);
    gr = h * ((f1 - f0) - v0 * (g1 - g0)) / (d * d);
}

void require_p(double p) {
    if (!(p > 1.0)) throw std::invalid_argument("p must exceed 1");
}

}  // namespace

Eigen::MatrixXd TridiagonalMass::to_dense() const {
    const Eigen::Index n = diag.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        m(i, i) = diag[i];
        if (i + 1 < n) {
            m(i, i + 1) = off[i];
            m(i + 1, i) = off[i];
        }
    }
    return m;
}

Eigen::VectorXd TridiagonalMass::apply(const Eigen::VectorXd& u) const {
    const Eigen::Index n = diag.size();
    if (u.size() != n) throw std::invalid_argument("mass size mismatch");
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = diag[i] * u[i];
        if (i > 0) acc += off[i - 1] * u[i - 1];
        if (i + 1 < n) acc += off[i] * u[i + 1];
        r[i] = acc;
    }
    return r;
}

GagliardoForm assemble(const CollarMesh1D& mesh, const KernelSpec& spec,
                       const QuadratureControl& ctrl) {
    spec.validate();
    ctrl.validate();
    if (spec.dim != 1)
        throw std::invalid_argument("collar assembly is one dimensional");

    GagliardoForm form;
    form.mesh = mesh;
    form.spec = spec;
    form.ctrl = ctrl;
    form.tail_mass = kernel_tail_mass(mesh.collar_width, spec);
    form.n_int = mesh.interior_node_count();

    const int ne = mesh.exterior_cell_count();
    form.free_index.assign(static_cast<std::size_t>(ne), -1);
    for (int e = 0; e < ne; ++e) {
        if (mesh.is_touching(e)) continue;
        form.free_index[static_cast<std::size_t>(e)] =
            static_cast<int>(form.free_cells.size());
        form.free_cells.push_back(e);
    }
    form.n_free = static_cast<int>(form.free_cells.size());

    form.h_ii = Eigen::MatrixXd::Zero(form.n_int, form.n_int);
    form.h_ie = Eigen::MatrixXd::Zero(form.n_int, form.n_free);
    form.h_ee = Eigen::VectorXd::Zero(form.n_free);
    form.mass_interior = interior_mass(mesh);
    if (spec.p != 2.0) form.cache.emplace();

    Assembler as{mesh,
                 spec,
                 ctrl,
                 spec.exponent(),
                 block_exponent(spec) - spec.exponent(),
                 spec.p,
                 form.n_int,
                 &form.h_ii,
                 &form.h_ie,
                 &form.h_ee,
                 form.cache ? &*form.cache : nullptr,
                 &form.free_index,
                 {}};
    as.run_interior();
    as.run_exterior();
    return form;
}

InteriorForm assemble_interior(const CollarMesh1D& mesh, const KernelSpec& spec,
                               const QuadratureControl& ctrl) {
    spec.validate();
    ctrl.validate();
    if (spec.dim != 1)
        throw std::invalid_argument("collar assembly is one dimensional");

    InteriorForm form;
    form.mesh = mesh;
    form.spec = spec;
    form.ctrl = ctrl;
    const int n = mesh.interior_node_count();
    form.h = Eigen::MatrixXd::Zero(n, n);
    form.mass_interior = interior_mass(mesh);

    Assembler as{mesh,
                 spec,
                 ctrl,
                 spec.exponent(),
                 block_exponent(spec) - spec.exponent(),
                 spec.p,
                 n,
                 &form.h,
                 nullptr,
                 nullptr,
                 &form.cache,
                 nullptr,
                 {}};
    as.run_interior();
    return form;
}

double interior_energy(const InteriorForm& form, const Eigen::VectorXd& u) {
    if (u.size() != form.mesh.interior_node_count())
        throw std::invalid_argument("interior size mismatch");
    return cache_energy(form.cache, u, static_cast<int>(u.size()), form.spec.p);
}

Eigen::VectorXd interior_energy_gradient(const InteriorForm& form,
                                         const Eigen::VectorXd& u) {
    if (u.size() != form.mesh.interior_node_count())
        throw std::invalid_argument("interior size mismatch");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(u.size());
    cache_gradient(form.cache, u, static_cast<int>(u.size()), form.spec.p, g);
    return g;
}

Eigen::VectorXd to_reduced(const GagliardoForm& form, const DofFunction& u) {
    if (u.interior.size() != form.n_int)
        throw std::invalid_argument("interior size mismatch");
    if (u.exterior.size() != form.mesh.exterior_cell_count())
        throw std::invalid_argument("exterior size mismatch");
    Eigen::VectorXd r(form.reduced_size());
    r.head(form.n_int) = u.interior;
    for (int k = 0; k < form.n_free; ++k)
        r[form.n_int + k] = u.exterior[form.free_cells[static_cast<std::size_t>(k)]];
    return r;
}

DofFunction from_reduced(const GagliardoForm& form, const Eigen::VectorXd& r) {
    if (r.size() != form.reduced_size())
        throw std::invalid_argument("reduced size mismatch");
    DofFunction u;
    u.interior = r.head(form.n_int);
    u.exterior = Eigen::VectorXd::Zero(form.mesh.exterior_cell_count());
    for (int k = 0; k < form.n_free; ++k)
        u.exterior[form.free_cells[static_cast<std::size_t>(k)]] = r[form.n_int + k];
    u.exterior[form.mesh.touching_left()] = u.interior[0];
    u.exterior[form.mesh.touching_right()] = u.interior[form.n_int - 1];
    return u;
}

double energy_reduced(const GagliardoForm& form, const Eigen::VectorXd& r) {
    if (r.size() != form.reduced_size())
        throw std::invalid_argument("reduced size mismatch");
    if (form.cache)
        return cache_energy(*form.cache, r, form.n_int, form.spec.p);
    const auto u = r.head(form.n_int);
    const auto v = r.tail(form.n_free);
    double acc = u.dot(form.h_ii * u);
    if (form.n_free > 0) {
        acc += 2.0 * u.dot(form.h_ie * v);
        acc += v.dot(form.h_ee.cwiseProduct(v));
    }
    return acc;
}

double energy(const GagliardoForm& form, const DofFunction& u) {
    return energy_reduced(form, to_reduced(form, u));
}

double pairing(const GagliardoForm& form, const DofFunction& u,
               const DofFunction& v) {
    const Eigen::VectorXd ur = to_reduced(form, u);
    const Eigen::VectorXd vr = to_reduced(form, v);
    if (form.cache)
        return cache_pairing(*form.cache, ur, vr, form.n_int, form.spec.p);
    const auto ui = ur.head(form.n_int);
    const auto ue = ur.tail(form.n_free);
    const auto vi = vr.head(form.n_int);
    const auto ve = vr.tail(form.n_free);
    double acc = ui.dot(form.h_ii * vi);
    if (form.n_free > 0) {
        acc += ui.dot(form.h_ie * ve) + vi.dot(form.h_ie * ue);
        acc += ue.dot(form.h_ee.cwiseProduct(ve));
    }
    return acc;
}

Eigen::VectorXd energy_gradient_reduced(const GagliardoForm& form,
                                        const Eigen::VectorXd& r) {
    if (r.size() != form.reduced_size())
        throw std::invalid_argument("reduced size mismatch");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(form.reduced_size());
    if (form.cache) {
        cache_gradient(*form.cache, r, form.n_int, form.spec.p, g);
        return g;
    }
    const auto u = r.head(form.n_int);
    const auto v = r.tail(form.n_free);
    g.head(form.n_int) = 2.0 * (form.h_ii * u);
    if (form.n_free > 0) {
        g.head(form.n_int) += 2.0 * (form.h_ie * v);
        g.tail(form.n_free) =
            2.0 * (form.h_ie.transpose() * u + form.h_ee.cwiseProduct(v));
    }
    return g;
}

Eigen::MatrixXd reduced_quadratic_form(const GagliardoForm& form) {
    Eigen::MatrixXd h = form.h_ii;
    if (form.n_free > 0) {
        for (int k = 0; k < form.n_free; ++k)
            if (!(form.h_ee[k] > 0.0))
                throw std::runtime_error("degenerate collar diagonal");
        h.noalias() -= form.h_ie *
                       form.h_ee.cwiseInverse().asDiagonal() *
                       form.h_ie.transpose();
    }
    return 0.5 * (h + h.transpose());
}

Eigen::MatrixXd full_quadratic_matrix(const GagliardoForm& form) {
    const int n = form.reduced_size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    m.topLeftCorner(form.n_int, form.n_int) = form.h_ii;
    if (form.n_free > 0) {
        m.topRightCorner(form.n_int, form.n_free) = form.h_ie;
        m.bottomLeftCorner(form.n_free, form.n_int) = form.h_ie.transpose();
        m.bottomRightCorner(form.n_free, form.n_free) =
            form.h_ee.asDiagonal();
    }
    return m;
}

Eigen::VectorXd neumann_extend(const GagliardoForm& form,
                               const DofFunction& u) {
    if (u.interior.size() != form.n_int)
        throw std::invalid_argument("interior size mismatch");
    const int ne = form.mesh.exterior_cell_count();
    Eigen::VectorXd ext = Eigen::VectorXd::Zero(ne);
    ext[form.mesh.touching_left()] = u.interior[0];
    ext[form.mesh.touching_right()] = u.interior[form.n_int - 1];

    if (!form.cache) {
        for (int k = 0; k < form.n_free; ++k) {
            const int e = form.free_cells[static_cast<std::size_t>(k)];
            ext[e] = -form.h_ie.col(k).dot(u.interior) / form.h_ee[k];
        }
        return ext;
    }

    const PairCache& c = *form.cache;
    std::vector<double> vals, wts;
    for (const auto& rg : c.ext_ranges) {
        vals.clear();
        wts.clear();
        for (std::size_t k = rg.begin; k < rg.end; ++k) {
            const double ta = c.ta[k];
            vals.push_back((1.0 - ta) * u.interior[c.ia[k]] +
                           ta * u.interior[c.ia[k] + 1]);
            wts.push_back(c.w[k]);
        }
        const int e = form.free_cells[static_cast<std::size_t>(rg.free_idx)];
        ext[e] = balance_root(wts.data(), vals.data(), vals.size(),
                              form.spec.p);
    }
    return ext;
}

double power_mean(const std::vector<double>& w, const std::vector<double>& a,
                  double p) {
    require_p(p);
    if (w.empty() || w.size() != a.size())
        throw std::invalid_argument("power_mean needs matching nonempty data");
    for (double wk : w)
        if (!(wk > 0.0))
            throw std::invalid_argument("power_mean weights must be positive");
    if (p == 2.0) {
        double sw = 0.0, swa = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            sw += w[k];
            swa += w[k] * a[k];
        }
        return swa / sw;
    }
    return balance_root(w.data(), a.data(), a.size(), p);
}

double lp_mass_nodes(const std::vector<double>& nodes, const Eigen::VectorXd& u,
                     double p) {
    require_p(p);
    if (u.size() != static_cast<Eigen::Index>(nodes.size()))
        throw std::invalid_argument("value count must match node count");
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
        acc += cell_lp_mass(nodes[i + 1] - nodes[i], u[static_cast<Eigen::Index>(i)],
                            u[static_cast<Eigen::Index>(i + 1)], p);
    return acc;
}

Eigen::VectorXd lp_mass_gradient_nodes(const std::vector<double>& nodes,
                                       const Eigen::VectorXd& u, double p) {
    require_p(p);
    if (u.size() != static_cast<Eigen::Index>(nodes.size()))
        throw std::invalid_argument("value count must match node count");
    Eigen::VectorXd g = Eigen::VectorXd::Zero(u.size());
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        double gl, gr;
        cell_lp_grad(nodes[i + 1] - nodes[i], u[static_cast<Eigen::Index>(i)],
                     u[static_cast<Eigen::Index>(i + 1)], p, gl, gr);
        g[static_cast<Eigen::Index>(i)] += gl;
        g[static_cast<Eigen::Index>(i + 1)] += gr;
    }
    return g;
}

double lp_mass(const CollarMesh1D& mesh, const DofFunction& u, double p) {
    if (u.interior.size() != mesh.interior_node_count())
        throw std::invalid_argument("interior size mismatch");
    return lp_mass_nodes(mesh.nodes, u.interior, p);
}

double lp_strip_mass(const CollarMesh1D& mesh, const DofFunction& u, double p,
                     double eps) {
    require_p(p);
    if (u.interior.size() != mesh.interior_node_count())
        throw std::invalid_argument("interior size mismatch");
    const StripCells sc = strip_cells(mesh, eps);
    double acc = 0.0;
    for (int i : sc.cells)
        acc += cell_lp_mass(mesh.nodes[static_cast<std::size_t>(i) + 1] -
                                mesh.nodes[static_cast<std::size_t>(i)],
                            u.interior[i], u.interior[i + 1], p);
    return acc;
}

Eigen::VectorXd lp_mass_gradient(const CollarMesh1D& mesh,
                                 const Eigen::VectorXd& u_int, double p) {
    if (u_int.size() != mesh.interior_node_count())
        throw std::invalid_argument("interior size mismatch");
    return lp_mass_gradient_nodes(mesh.nodes, u_int, p);
}

Eigen::VectorXd lp_strip_mass_gradient(const CollarMesh1D& mesh,
                                       const Eigen::VectorXd& u_int, double p,
                                       double eps) {
    require_p(p);
    if (u_int.size() != mesh.interior_node_count())
        throw std::invalid_argument("interior size mismatch");
    const StripCells sc = strip_cells(mesh, eps);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(u_int.size());
    for (int i : sc.cells) {
        double gl, gr;
        cell_lp_grad(mesh.nodes[static_cast<std::size_t>(i) + 1] -
                         mesh.nodes[static_cast<std::size_t>(i)],
                     u_int[i], u_int[i + 1], p, gl, gr);
        g[i] += gl;
        g[i + 1] += gr;
    }
    return g;
}

TridiagonalMass interior_mass(const CollarMesh1D& mesh) {
    const int n = mesh.interior_node_count();
    TridiagonalMass m;
    m.diag = Eigen::VectorXd::Zero(n);
    m.off = Eigen::VectorXd::Zero(n - 1);
    for (int i = 0; i + 1 < n; ++i) {
        const double h = mesh.nodes[static_cast<std::size_t>(i) + 1] -
                         mesh.nodes[static_cast<std::size_t>(i)];
        m.diag[i] += h / 3.0;
        m.diag[i + 1] += h / 3.0;
        m.off[i] += h / 6.0;
    }
    return m;
}

TridiagonalMass strip_mass(const CollarMesh1D& mesh, double eps) {
    const StripCells sc = strip_cells(mesh, eps);
    const int n = mesh.interior_node_count();
    TridiagonalMass m;
    m.diag = Eigen::VectorXd::Zero(n);
    m.off = Eigen::VectorXd::Zero(n - 1);
    for (int i : sc.cells) {
        const double h = mesh.nodes[static_cast<std::size_t>(i) + 1] -
                         mesh.nodes[static_cast<std::size_t>(i)];
        m.diag[i] += h / 3.0;
        m.diag[i + 1] += h / 3.0;
        m.off[i] += h / 6.0;
    }
    return m;
}

IdentityReport identity_check(const GagliardoForm& form, const DofFunction& u,
                              const DofFunction& v) {
    const Eigen::VectorXd ur = to_reduced(form, u);
    const Eigen::VectorXd vr = to_reduced(form, v);
    const double p = form.spec.p;
    const double expo = form.spec.exponent();
    const CollarMesh1D& mesh = form.mesh;
    const int n = form.n_int;
    const int nc = mesh.interior_cell_count();
    const int ne = mesh.exterior_cell_count();

    // The full pairing H(u, v), its interior part (u acting on v inside
    // the domain), and its collar part are accumulated from one shared
    // point decomposition but along different summation trees, so the
    // identities below hold up to roundoff and bookkeeping errors only.
    double h_acc = 0.0;
    double act_int = 0.0;
    double div_int = 0.0;
    double tv_pair = 0.0;
    double tv_div = 0.0;
    Eigen::VectorXd ext_sub = Eigen::VectorXd::Zero(ne);
    Eigen::VectorXd div_sub = Eigen::VectorXd::Zero(ne);

    PairPoints pts;
    for (int ic = 0; ic < nc; ++ic) {
        const Interval cell = mesh.interior_cell(ic);
        const double inv_h = 1.0 / cell.length();
        const double mu = (ur[ic + 1] - ur[ic]) * inv_h;
        const double mv = (vr[ic + 1] - vr[ic]) * inv_h;
        const double t = self_moment(cell.length(), expo, p) *
                         sign_power(mu, p) * mv;
        h_acc += t;
        act_int += t;
        tv_pair += std::abs(t);
    }

    auto interior_at = [&](const Eigen::VectorXd& r, int ic, double t) {
        return (1.0 - t) * r[ic] + t * r[ic + 1];
    };

    for (int ic = 0; ic < nc; ++ic) {
        const Interval a = mesh.interior_cell(ic);
        const double inv_ha = 1.0 / a.length();
        for (int jc = ic + 1; jc < nc; ++jc) {
            const Interval b = mesh.interior_cell(jc);
            const double inv_hb = 1.0 / b.length();
            pts.clear();
            build_pair_rule(a, b, expo, p, form.ctrl, pts);
            double s_pair = 0.0;
            for (std::size_t k = 0; k < pts.size(); ++k) {
                const double ta = (pts.x[k] - a.lo) * inv_ha;
                const double tb = (pts.y[k] - b.lo) * inv_hb;
                const double du =
                    interior_at(ur, ic, ta) - interior_at(ur, jc, tb);
                const double dv =
                    interior_at(vr, ic, ta) - interior_at(vr, jc, tb);
                const double q = 2.0 * pts.w[k] * sign_power(du, p);
                s_pair += q * dv;
                tv_pair += std::abs(q * dv);
            }
            h_acc += s_pair;
            act_int += s_pair;
        }
    }

    for (int e = 0; e < ne; ++e) {
        const Interval b = mesh.exterior[static_cast<std::size_t>(e)];
        const bool touch = mesh.is_touching(e);
        double ub, vb;
        if (touch) {
            const int slave = (e == mesh.touching_left()) ? 0 : n - 1;
            ub = ur[slave];
            vb = vr[slave];
        } else {
            const int fe = form.free_index[static_cast<std::size_t>(e)];
            ub = ur[n + fe];
            vb = vr[n + fe];
        }
        for (int ic = 0; ic < nc; ++ic) {
            const Interval a = mesh.interior_cell(ic);
            const double inv_ha = 1.0 / a.length();
            pts.clear();
            build_pair_rule(a, b, expo, p, form.ctrl, pts);
            double s_h = 0.0, s_int = 0.0, s_ext = 0.0, s_div = 0.0;
            for (std::size_t k = 0; k < pts.size(); ++k) {
                const double ta = (pts.x[k] - a.lo) * inv_ha;
                const double ua = interior_at(ur, ic, ta);
                const double va = interior_at(vr, ic, ta);
                const double q = 2.0 * pts.w[k] * sign_power(ua - ub, p);
                s_h += q * (va - vb);
                s_int += q * va;
                s_ext += q * vb;
                s_div += q;
                tv_pair += std::abs(q * (va - vb));
                tv_div += 2.0 * std::abs(q);
            }
            h_acc += s_h;
            act_int += s_int;
            ext_sub[e] -= s_ext;
            div_int += s_div;
            div_sub[e] -= s_div;
        }
    }

    IdentityReport rep;
    const double act_ext = ext_sub.sum();
    const double div_ext = div_sub.sum();
    rep.parts_residual = std::abs(h_acc - act_int - act_ext);
    rep.divergence_residual = std::abs(div_int + div_ext);
    rep.scale = std::max(tv_pair, tv_div);
    return rep;
}

double picone_defect(double ux, double uy, double vx, double vy, double p) {
    require_p(p);
    if (ux < 0.0 || uy < 0.0)
        throw std::domain_error("picone: u values must be nonnegative");
    if (!(vx > 0.0) || !(vy > 0.0))
        throw std::domain_error("picone: v values must be positive");
    const double lhs = abs_power(ux - uy, p);
    const double frac_x = std::pow(ux, p) / std::pow(vx, p - 1.0);
    const double frac_y = std::pow(uy, p) / std::pow(vy, p - 1.0);
    return lhs - sign_power(vx - vy, p) * (frac_x - frac_y);
}

void write_matrix_text(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    char buf[48];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
            out << buf << (c + 1 < m.cols() ? ' ' : '\n');
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void export_dense_blocks(const GagliardoForm& form,
                         const std::string& path_prefix) {
    write_matrix_text(form.h_ii, path_prefix + "_hii.txt");
    write_matrix_text(form.h_ie, path_prefix + "_hie.txt");
    write_matrix_text(form.h_ee.transpose(), path_prefix + "_hee.txt");
}

}  // namespace fsk

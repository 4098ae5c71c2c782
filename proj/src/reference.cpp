#include "reference.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "forms.hpp"

namespace fsk {

const char* ref_method_name(RefMethod m) {
    switch (m) {
        case RefMethod::ClosedForm: return "closed-form";
        case RefMethod::Shooting: return "shooting";
        case RefMethod::LocalFem: return "local-fem";
    }
    return "unknown";
}

RefMethod ref_method_from_name(const std::string& name) {
    if (name == "closed-form") return RefMethod::ClosedForm;
    if (name == "shooting") return RefMethod::Shooting;
    if (name == "local-fem") return RefMethod::LocalFem;
    throw std::invalid_argument("ref_method_from_name: unknown tag '" + name + "'");
}

std::vector<double> steklov_linear(double length, int count) {
    if (!(length > 0.0))
        throw std::invalid_argument("steklov_linear: requires length > 0");
    if (count < 1)
        throw std::invalid_argument("steklov_linear: requires count >= 1");
    const double t = std::tanh(0.5 * length);
    std::vector<double> out{t};
    if (count >= 2) out.push_back(1.0 / t);
    return out;
}

double shooting_slope_shifted(double v, double p) {
    if (v <= 0.0) return 0.0;
    // u^p - 1 evaluated as expm1(p log1p(v)) keeps full relative accuracy
    // for v near zero, where the direct form cancels.
    const double a = std::expm1(p * std::log1p(v));
    return std::pow(a / (p - 1.0), 1.0 / p);
}

namespace {

// Two-term expansion of u - 1 a distance x past the turning point, where
// the slope field vanishes like x^{1/(p-1)} and fixed-order steps stall.
double launch_series(double x, double p) {
    const double q = p / (p - 1.0);
    const double c2 = (p - 1.0) / p;
    const double c4 = std::pow(p - 1.0, 3) / (2.0 * p * p * (2.0 * p - 1.0));
    const double xq = std::pow(x, q);
    return c2 * xq + c4 * xq * xq;
}

}  // namespace

double steklov_p_shooting(double p, double length, double ode_tol,
                          std::vector<std::array<double, 2>>* trajectory) {
    if (!(p > 1.0))
        throw std::invalid_argument("steklov_p_shooting: requires p > 1");
    if (!(length > 0.0))
        throw std::invalid_argument("steklov_p_shooting: requires length > 0");
    if (!(ode_tol > 0.0))
        throw std::invalid_argument("steklov_p_shooting: requires ode_tol > 0");

    const double half = 0.5 * length;
    const auto f = [p](double v) { return shooting_slope_shifted(v, p); };
    const auto rk4 = [&f](double v, double h) {
        const double k1 = f(v);
        const double k2 = f(v + 0.5 * h * k1);
        const double k3 = f(v + 0.5 * h * k2);
        const double k4 = f(v + h * k3);
        return v + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };

    // First step of size 1e-4 from the series launch; widened only if the
    // expansion value would vanish in double precision (large conjugate
    // exponents make x^{p'} underflow).
    double delta = std::min(1e-4, 0.01 * half);
    while (launch_series(delta, p) < 1e-250 && delta < 0.1 * half) delta *= 10.0;

    double x = delta;               // distance past the midpoint
    double v = launch_series(delta, p);
    double h = delta;
    if (trajectory) {
        trajectory->clear();
        trajectory->push_back({half + x, 1.0 + v});
    }

    long steps = 0;
    while (x < half) {
        if (x + h > half) h = half - x;
        const double coarse = rk4(v, h);
        const double fine = rk4(rk4(v, 0.5 * h), 0.5 * h);
        const double err = std::abs(fine - coarse) / 15.0;
        // Trajectories of the autonomous field are translates of each
        // other, so a value error err acts like a shift err / f(v) of the
        // whole profile. Budgeting that shift at ode_tol per unit length
        // keeps early errors from being amplified across the slow launch
        // region, where f is tiny and downstream growth is (x'/x)^{p'-1}.
        const double allow = ode_tol * h * std::max(f(fine), 1e-300);
        if (err <= allow) {
            x += h;
            v = fine + (fine - coarse) / 15.0;
            if (trajectory) trajectory->push_back({half + x, 1.0 + v});
        }
        const double grow =
            (err > 0.0) ? 0.9 * std::pow(allow / err, 0.2) : 4.0;
        h *= std::clamp(grow, 0.25, 4.0);
        if (++steps > 2000000 || !(h > 1e-18 * half))
            throw NoConvergence("steklov_p_shooting: step budget exhausted");
    }

    // Robin ratio at the endpoint: (u'/u)^{p-1} with u'^{p-1} taken from
    // the conserved quantity directly.
    const double a = std::expm1(p * std::log1p(v));  // u(L)^p - 1
    const double up = std::pow(a / (p - 1.0), (p - 1.0) / p);
    return up / std::pow(1.0 + v, p - 1.0);
}

double steklov_p_fem(double p, double length, double h, double tol) {
    if (!(p > 1.0))
        throw std::invalid_argument("steklov_p_fem: requires p > 1");
    if (!(length > 0.0))
        throw std::invalid_argument("steklov_p_fem: requires length > 0");
    if (!(h > 0.0) || !(h < length / 4.0))
        throw std::invalid_argument("steklov_p_fem: requires 0 < h < length/4");
    if (!(tol > 0.0))
        throw std::invalid_argument("steklov_p_fem: requires tol > 0");

    const int n = std::max(4, static_cast<int>(std::lround(length / h)));
    const double dx = length / n;
    std::vector<double> nodes(n + 1);
    for (int i = 0; i <= n; ++i) nodes[i] = i * dx;
    nodes[n] = length;

    const double inv_p = 1.0 / p;
    auto grad_energy = [&](const Eigen::VectorXd& u) {
        // entries: int |u'|^{p-2} u' phi_i' over the cells touching node i
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n + 1);
        for (int i = 0; i < n; ++i) {
            const double sp = sign_power((u[i + 1] - u[i]) / dx, p);
            g[i] -= sp;
            g[i + 1] += sp;
        }
        return g;
    };
    auto energy = [&](const Eigen::VectorXd& u) {
        double e = 0.0;
        for (int i = 0; i < n; ++i) e += dx * abs_power((u[i + 1] - u[i]) / dx, p);
        return e;
    };
    auto boundary_mass = [&](const Eigen::VectorXd& u) {
        return abs_power(u[0], p) + abs_power(u[n], p);
    };

    // quadratic-case stiffness + mass as the fixed preconditioner
    Eigen::MatrixXd pre = Eigen::MatrixXd::Zero(n + 1, n + 1);
    for (int i = 0; i < n; ++i) {
        const double k = 1.0 / dx;
        pre(i, i) += k + dx / 3.0;
        pre(i + 1, i + 1) += k + dx / 3.0;
        pre(i, i + 1) += -k + dx / 6.0;
        pre(i + 1, i) += -k + dx / 6.0;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(pre);
    if (llt.info() != Eigen::Success)
        throw NoConvergence("steklov_p_fem: preconditioner factorization failed");

    Eigen::VectorXd u = Eigen::VectorXd::Ones(n + 1);
    u /= std::pow(boundary_mass(u), inv_p);
    double quot = energy(u) + lp_mass_nodes(nodes, u, p);

    auto objective = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& b) {
        return inv_p * (energy(v) + lp_mass_nodes(nodes, v, p)) - b.dot(v);
    };

    const int max_outer = 200;
    for (int outer = 0; outer < max_outer; ++outer) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
        b[0] = sign_power(u[0], p);
        b[n] = sign_power(u[n], p);
        const double gtol = 1e-12 * std::max(1.0, b.lpNorm<Eigen::Infinity>());

        Eigen::VectorXd v = u;
        double jv = objective(v, b);
        Eigen::VectorXd g = grad_energy(v) + lp_mass_gradient_nodes(nodes, v, p) - b;
        for (int inner = 0; inner < 400 && g.lpNorm<Eigen::Infinity>() > gtol;
             ++inner) {
            const Eigen::VectorXd d = -llt.solve(g);
            const double slope = g.dot(d);
            double t = 1.0;
            double jt = jv;
            for (int back = 0; back < 60; ++back) {
                jt = objective(v + t * d, b);
                if (jt <= jv + 1e-4 * t * slope) break;
                t *= 0.5;
            }
            v += t * d;
            jv = jt;
            g = grad_energy(v) + lp_mass_gradient_nodes(nodes, v, p) - b;
        }

        const double bm = boundary_mass(v);
        if (!(bm > 0.0))
            throw NoConvergence("steklov_p_fem: endpoint values collapsed");
        v /= std::pow(bm, inv_p);
        const double next = energy(v) + lp_mass_nodes(nodes, v, p);

        if (next > quot + 1e-13 * std::max(1.0, quot)) {
            // no further descent available at this inner accuracy
            if (std::abs(next - quot) <= tol * std::max(1.0, quot)) return quot;
            throw NoConvergence("steklov_p_fem: quotient failed to decrease");
        }
        const bool settled = std::abs(next - quot) <= tol * std::max(1.0, quot);
        u = v;
        quot = next;
        if (settled) return quot;
    }
    throw NoConvergence("steklov_p_fem: iteration budget exhausted");
}

SteklovRef steklov_reference(double p, double length) {
    SteklovRef ref;
    ref.p = p;
    ref.length = length;
    const double shoot = steklov_p_shooting(p, length, 1e-10);
    if (p == 2.0) {
        ref.lambda = steklov_linear(length, 1)[0];
        ref.method = RefMethod::ClosedForm;
    } else {
        ref.lambda = steklov_p_fem(p, length, length / 1000.0, 1e-10);
        ref.method = RefMethod::LocalFem;
    }
    ref.discrepancy = std::abs(shoot - ref.lambda);
    return ref;
}

std::string ReferenceCache::key(double p, double length) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "p=%.17g,L=%.17g", p, length);
    return buf;
}

ReferenceCache::ReferenceCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::stringstream ss;
    ss << in.rdbuf();
    table_ = parse(ss.str()).table_;
}

bool ReferenceCache::contains(double p, double length) const {
    return table_.count(key(p, length)) > 0;
}

void ReferenceCache::put(const SteklovRef& ref) {
    table_[key(ref.p, ref.length)] = ref;
}

const SteklovRef& ReferenceCache::get(double p, double length) {
    const std::string k = key(p, length);
    auto it = table_.find(k);
    if (it == table_.end()) {
        it = table_.emplace(k, steklov_reference(p, length)).first;
        save();
    }
    return it->second;
}

std::string ReferenceCache::dump() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, ref] : table_) {
        j[k] = {{"p", ref.p},
                {"length", ref.length},
                {"lambda", ref.lambda},
                {"method", ref_method_name(ref.method)},
                {"discrepancy", ref.discrepancy}};
    }
    return j.dump(2);
}

ReferenceCache ReferenceCache::parse(const std::string& text) {
    ReferenceCache cache;
    const nlohmann::json j = nlohmann::json::parse(text);
    for (const auto& [k, item] : j.items()) {
        SteklovRef ref;
        ref.p = item.at("p").get<double>();
        ref.length = item.at("length").get<double>();
        ref.lambda = item.at("lambda").get<double>();
        ref.method = ref_method_from_name(item.at("method").get<std::string>());
        ref.discrepancy = item.at("discrepancy").get<double>();
        cache.table_[k] = ref;
    }
    return cache;
}

void ReferenceCache::save() const {
    if (path_.empty()) return;
    std::ofstream out(path_);
    out << dump() << "\n";
}

}  // namespace fsk

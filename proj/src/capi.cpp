#include "fracsteklov.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <memory>
#include <new>
#include <string>

#include "config.hpp"
#include "eigen.hpp"
#include "errors.hpp"
#include "forms.hpp"
#include "mesh.hpp"
#include "reference.hpp"
#include "runner.hpp"

namespace {

thread_local std::string g_error;

void clear_error() { g_error.clear(); }

fsk_status fail(fsk_status code, const std::string& what) {
    g_error = what;
    return code;
}

// every entry point funnels its body through here so exception-to-status
// mapping stays in one place
template <class Fn>
fsk_status guarded(Fn&& body) {
    clear_error();
    try {
        return body();
    } catch (const fsk::NoConvergence& e) {
        return fail(FSK_ERR_NOCONV, e.what());
    } catch (const fsk::ConfigError& e) {
        return fail(FSK_ERR_INVALID, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(FSK_ERR_INVALID, e.what());
    } catch (const std::domain_error& e) {
        return fail(FSK_ERR_INVALID, e.what());
    } catch (const std::exception& e) {
        return fail(FSK_ERR_RUNTIME, e.what());
    } catch (...) {
        return fail(FSK_ERR_RUNTIME, "unknown failure");
    }
}

}  // namespace

struct fsk_problem {
    fsk::CollarMesh1D mesh;
    fsk::GagliardoForm form;
    double s = 0.0;
    double p = 0.0;
};

struct fsk_eigen {
    fsk::EigenResult result;
    fsk::EigenDiagnostics diag;
};

extern "C" {

const char* fsk_version(void) { return "0.1.0"; }

const char* fsk_last_error(void) { return g_error.c_str(); }

void fsk_string_free(char* s) { delete[] s; }

fsk_status fsk_problem_create(double a, double b, double collar, double h,
                              double grading, double s, double p,
                              double quad_tol, fsk_problem** out) {
    if (out == nullptr) return fail(FSK_ERR_INVALID, "out must not be null");
    *out = nullptr;
    return guarded([&]() -> fsk_status {
        if (!(s > 0.0 && s < 1.0))
            throw std::invalid_argument("s must lie in (0, 1)");
        const double eps = 1.0 - s;
        const double half = 0.5 * (b - a);
        fsk::QuadratureControl quad;
        quad.rel_tol = quad_tol;
        auto prob = std::make_unique<fsk_problem>();
        prob->mesh = fsk::build_collar_mesh(a, b, collar, h, grading,
                                            std::min(eps, half));
        prob->form =
            fsk::assemble(prob->mesh, fsk::KernelSpec{1, s, p}, quad);
        prob->s = s;
        prob->p = p;
        *out = prob.release();
        return FSK_OK;
    });
}

void fsk_problem_destroy(fsk_problem* prob) { delete prob; }

int fsk_problem_interior_dofs(const fsk_problem* prob) {
    return prob ? prob->mesh.interior_node_count() : 0;
}

double fsk_problem_tail_mass(const fsk_problem* prob) {
    return prob ? prob->form.tail_mass : 0.0;
}

fsk_status fsk_solve_first(fsk_problem* prob, double tol, int max_outer,
                           fsk_eigen** out) {
    if (out == nullptr) return fail(FSK_ERR_INVALID, "out must not be null");
    *out = nullptr;
    return guarded([&]() -> fsk_status {
        if (prob == nullptr)
            throw std::invalid_argument("problem must not be null");
        const double eps = 1.0 - prob->s;
        auto eig = std::make_unique<fsk_eigen>();
        if (prob->p == 2.0) {
            auto pair = fsk::solve_linear(prob->form, eps, 1);
            eig->result = pair.at(0);
        } else {
            const fsk::DofFunction init =
                fsk::interpolate(prob->mesh, [](double) { return 1.0; });
            eig->result =
                fsk::solve_first_p(prob->form, eps, init, tol, max_outer);
        }
        eig->diag = fsk::diagnostics(eig->result, prob->mesh);
        *out = eig.release();
        return FSK_OK;
    });
}

fsk_status fsk_solve_linear_pair(fsk_problem* prob, fsk_eigen** out_first,
                                 fsk_eigen** out_second) {
    if (out_first == nullptr || out_second == nullptr)
        return fail(FSK_ERR_INVALID, "out must not be null");
    *out_first = nullptr;
    *out_second = nullptr;
    return guarded([&]() -> fsk_status {
        if (prob == nullptr)
            throw std::invalid_argument("problem must not be null");
        if (prob->p != 2.0)
            throw std::invalid_argument(
                "fsk_solve_linear_pair requires p = 2");
        const double eps = 1.0 - prob->s;
        auto pair = fsk::solve_linear(prob->form, eps, 2);
        auto first = std::make_unique<fsk_eigen>();
        auto second = std::make_unique<fsk_eigen>();
        first->result = pair.at(0);
        second->result = pair.at(1);
        first->diag = fsk::diagnostics(first->result, prob->mesh,
                                       second->result.eigenvalue);
        second->diag = fsk::diagnostics(second->result, prob->mesh);
        *out_first = first.release();
        *out_second = second.release();
        return FSK_OK;
    });
}

double fsk_eigen_value(const fsk_eigen* e) {
    return e ? e->result.eigenvalue : 0.0;
}

int fsk_eigen_converged(const fsk_eigen* e) {
    return e && e->result.converged ? 1 : 0;
}

fsk_status fsk_eigen_json(const fsk_eigen* e, char** out) {
    if (out == nullptr) return fail(FSK_ERR_INVALID, "out must not be null");
    *out = nullptr;
    return guarded([&]() -> fsk_status {
        if (e == nullptr)
            throw std::invalid_argument("eigen handle must not be null");
        const std::string doc = fsk::eigen_to_json(e->result, &e->diag).dump(2);
        char* buf = new char[doc.size() + 1];
        std::memcpy(buf, doc.c_str(), doc.size() + 1);
        *out = buf;
        return FSK_OK;
    });
}

void fsk_eigen_destroy(fsk_eigen* e) { delete e; }

fsk_status fsk_steklov_reference(double p, double length, double* out_lambda,
                                 const char** out_method) {
    if (out_lambda == nullptr)
        return fail(FSK_ERR_INVALID, "out_lambda must not be null");
    return guarded([&]() -> fsk_status {
        const fsk::SteklovRef rec = fsk::steklov_reference(p, length);
        *out_lambda = rec.lambda;
        if (out_method) *out_method = fsk::ref_method_name(rec.method);
        return FSK_OK;
    });
}

fsk_status fsk_run(const char* config_text, const char* command_override,
                   double s_override, double p_override, int* exit_code) {
    if (exit_code == nullptr)
        return fail(FSK_ERR_INVALID, "exit_code must not be null");
    *exit_code = 2;
    clear_error();
    fsk::RunConfig cfg;
    try {
        // validation waits until the overrides land, so a config whose
        // command comes from the CLI subcommand still goes through
        cfg = fsk::parse_config_document(config_text ? config_text : "");
        if (command_override != nullptr) cfg.command = command_override;
        if (std::isfinite(s_override)) cfg.s = s_override;
        if (std::isfinite(p_override)) cfg.p = p_override;
        fsk::validate_config(cfg);
    } catch (const std::exception& e) {
        *exit_code = 2;
        return fail(FSK_ERR_INVALID, e.what());
    }

    try {
        *exit_code = fsk::run_command(cfg, std::cout);
        std::cout.flush();
        if (*exit_code == 0) return FSK_OK;
        return fail(FSK_ERR_NOCONV,
                    cfg.command + " finished with failures (exit 1)");
    } catch (const fsk::ConfigError& e) {
        *exit_code = 2;
        return fail(FSK_ERR_INVALID, e.what());
    } catch (const std::domain_error& e) {
        *exit_code = 2;
        return fail(FSK_ERR_INVALID, e.what());
    } catch (const std::invalid_argument& e) {
        *exit_code = 2;
        return fail(FSK_ERR_INVALID, e.what());
    } catch (const fsk::NoConvergence& e) {
        *exit_code = 1;
        return fail(FSK_ERR_NOCONV, e.what());
    } catch (const std::exception& e) {
        *exit_code = 1;
        return fail(FSK_ERR_RUNTIME, e.what());
    }
}

}  // extern "C"

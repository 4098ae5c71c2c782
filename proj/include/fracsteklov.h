#ifndef FRACSTEKLOV_H
#define FRACSTEKLOV_H

/* C shell around the nonlocal boundary-eigenvalue laboratory.  Handles
 * are opaque; every fallible call returns a status and leaves a message
 * for fsk_last_error on failure. */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
    FSK_OK = 0,
    FSK_ERR_INVALID = 1, /* bad argument, bad config, bad parameter range */
    FSK_ERR_NOCONV = 2,  /* an iteration exhausted its budget */
    FSK_ERR_RUNTIME = 3  /* anything else */
} fsk_status;

const char* fsk_version(void);

/* Message from the most recent failing call on this thread.  Empty
 * string when the last call succeeded.  The pointer stays valid until
 * the next library call on the same thread. */
const char* fsk_last_error(void);

/* Frees strings returned by fsk_eigen_json. */
void fsk_string_free(char* s);

/* One assembled discretization: interval (a, b), exterior collar of the
 * given width, graded interior mesh, kernel parameters s and p. */
typedef struct fsk_problem fsk_problem;

fsk_status fsk_problem_create(double a, double b, double collar, double h,
                              double grading, double s, double p,
                              double quad_tol, fsk_problem** out);
void fsk_problem_destroy(fsk_problem* prob);
int fsk_problem_interior_dofs(const fsk_problem* prob);
double fsk_problem_tail_mass(const fsk_problem* prob);

typedef struct fsk_eigen fsk_eigen;

/* First eigenpair of the boundary-mean quotient at eps = 1 - s, any
 * p > 1.  tol is the quotient settling tolerance. */
fsk_status fsk_solve_first(fsk_problem* prob, double tol, int max_outer,
                           fsk_eigen** out);

/* First two eigenvalues; requires the problem to have p = 2. */
fsk_status fsk_solve_linear_pair(fsk_problem* prob, fsk_eigen** out_first,
                                 fsk_eigen** out_second);

double fsk_eigen_value(const fsk_eigen* e);
int fsk_eigen_converged(const fsk_eigen* e);

/* JSON document describing the eigenpair; release with fsk_string_free. */
fsk_status fsk_eigen_json(const fsk_eigen* e, char** out);
void fsk_eigen_destroy(fsk_eigen* e);

/* Classical interval eigenvalue lambda_1(p) on an interval of the given
 * length.  out_method, when non-null, receives a static name of the
 * route that produced the value. */
fsk_status fsk_steklov_reference(double p, double length, double* out_lambda,
                                 const char** out_method);

/* Parses a config document and executes it.  command_override replaces
 * the document's command when non-null; s_override and p_override apply
 * when finite (pass NaN to keep the document's values).  *exit_code is
 * always set: 0 success, 1 solver or check failure, 2 config error,
 * mirroring the returned status. */
fsk_status fsk_run(const char* config_text, const char* command_override,
                   double s_override, double p_override, int* exit_code);

#ifdef __cplusplus
}
#endif

#endif /* FRACSTEKLOV_H */

#ifndef CAUSALBENCH_H
#define CAUSALBENCH_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CbStatus {
  CB_STATUS_OK = 0,
  CB_STATUS_NULL_POINTER = 1,
  CB_STATUS_INVALID_INPUT = 2,
  CB_STATUS_DIMENSION = 3,
  CB_STATUS_SOLVER = 4,
  CB_STATUS_RANK = 5,
  CB_STATUS_MEMORY_CAP = 6,
  CB_STATUS_IO = 7,
  CB_STATUS_PANIC = 8,
} CbStatus;

typedef enum CbSetup {
  CB_SETUP_QS = 0,
  CB_SETUP_FOUR_BOX = 1,
} CbSetup;

typedef enum CbOrder {
  CB_ORDER_A_THEN_B = 0,
  CB_ORDER_B_THEN_A = 1,
} CbOrder;

/**
 * Opaque payoff pair.
 */
typedef struct CbPayoff CbPayoff;

/**
 * Opaque tester.
 */
typedef struct CbTester CbTester;

typedef struct CbSuccessReport {
  double p_commuting;
  double p_anticommuting;
  double p_average;
  double quadrature_error_estimate;
} CbSuccessReport;

typedef struct CbFcoResult {
  double p_star;
  double certificate;
  size_t iterations;
  /**
   * 1 when the solver met its tolerance.
   */
  int32_t converged;
} CbFcoResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cb_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length, or 0 if none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cb_last_error_message(char *buf, size_t len);

/**
 * Average gate fidelity of the rotation by `theta` about the equatorial
 * axis at `phi` driven by a coherent field of mean photon number `nbar`.
 *
 * # Safety
 * `out` must be null or a valid pointer to a writable double.
 */
enum CbStatus cb_gate_fidelity(double theta, double phi, double nbar, double *out);

/**
 * Quadrature-averaged success probability with the maximally mixed target
 * state and `grid` nodes per angle.
 *
 * # Safety
 * `out` must be null or a valid pointer to a writable `CbSuccessReport`.
 */
enum CbStatus cb_success_average(enum CbSetup setup,
                                 double nbar,
                                 size_t grid,
                                 struct CbSuccessReport *out);

/**
 * Entanglement entropy in bits of the control qubit for a given overlap.
 */
double cb_control_entropy(double overlap_re, double overlap_im);

/**
 * Payoff for ideal unitaries. Release with [`cb_payoff_free`].
 */
struct CbPayoff *cb_payoff_ideal(void);

/**
 * Ideal payoff averaged over a common random frame. Release with [`cb_payoff_free`].
 */
struct CbPayoff *cb_payoff_haar(void);

/**
 * Payoff when operation A is driven by a field of mean photon number `nbar`.
 *
 * # Safety
 * `out` must be null or a valid pointer; on success it receives a handle
 * owned by the caller.
 */
enum CbStatus cb_payoff_finite(double nbar, size_t grid, struct CbPayoff **out);

/**
 * # Safety
 * `p` must be null or a handle from this library that has not been freed.
 */
void cb_payoff_free(struct CbPayoff *p);

/**
 * Optimal fixed-order tester for `payoff`. `tester_out` may be null when
 * only the numbers are wanted.
 *
 * # Safety
 * `payoff` must be a live handle; `result` must point to a writable
 * `CbFcoResult`; `tester_out` must be null or a valid pointer.
 */
enum CbStatus cb_optimize_fco(const struct CbPayoff *payoff,
                              enum CbOrder order,
                              bool isotropic,
                              double tol,
                              struct CbFcoResult *result,
                              struct CbTester **tester_out);

/**
 * Tester of the perfect B-before-A circuit.
 *
 * # Safety
 * `out` must be null or a valid pointer; on success it receives a handle
 * owned by the caller.
 */
enum CbStatus cb_tester_optimal_circuit(struct CbTester **out);

/**
 * Tester from two 16x16 operators given as 512 interleaved (re, im) doubles
 * each, row-major on A_I, A_O, B_I, B_O.
 *
 * # Safety
 * `w_plus` and `w_minus` must point to 512 readable doubles; `out` must be
 * null or a valid pointer.
 */
enum CbStatus cb_tester_new(enum CbOrder order,
                            const double *w_plus,
                            const double *w_minus,
                            struct CbTester **out);

/**
 * Largest violation of the tester conditions.
 *
 * # Safety
 * `t` must be a live handle.
 */
double cb_tester_residual(const struct CbTester *t);

/**
 * Average success probability of a tester on a payoff.
 *
 * # Safety
 * Both handles must be live.
 */
double cb_tester_success(const struct CbTester *t, const struct CbPayoff *payoff);

/**
 * Writes W₊ and W₋ as 512 interleaved (re, im) doubles each, row-major.
 *
 * # Safety
 * `t` must be a live handle; `w_plus` and `w_minus` must point to 512
 * writable doubles.
 */
enum CbStatus cb_tester_operators(const struct CbTester *t, double *w_plus, double *w_minus);

/**
 * # Safety
 * `t` must be null or a handle from this library that has not been freed.
 */
void cb_tester_free(struct CbTester *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSALBENCH_H */

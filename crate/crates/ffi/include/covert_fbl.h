#ifndef COVERT_FBL_H
#define COVERT_FBL_H

#include <stddef.h>
#include <stdint.h>

typedef enum CfblStatus {
  CFBL_STATUS_OK = 0,
  CFBL_STATUS_NULL_POINTER = 1,
  CFBL_STATUS_INVALID_PARAMETER = 2,
  CFBL_STATUS_DOMAIN = 3,
  CFBL_STATUS_CONVERGENCE = 4,
  CFBL_STATUS_PANIC = 5,
} CfblStatus;

typedef enum CfblMode {
  CFBL_MODE_KL = 0,
  CFBL_MODE_EXACT = 1,
} CfblMode;

/*
 Opaque design handle.
 */
typedef struct CfblDesign CfblDesign;

/*
 Radiometer operating point.
 */
typedef struct CfblDetection {
  double threshold;
  double p_false;
  double p_miss;
  /*
   `p_false + p_miss`
   */
  double xi;
  double kl;
  double pinsker_bound;
} CfblDetection;

/*
 Plain-value view of a design.
 */
typedef struct CfblDesignValues {
  uint64_t n_star;
  double p_star;
  double total_power;
  double r_star;
  double delta_star;
  double eta_star;
  double eta_per_use;
  double residual;
  uint64_t iterations;
} CfblDesignValues;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Static description of a status code. Never null.
 */
const char *cfbl_status_str(enum CfblStatus status);

/*
 Message for the last failed call on this thread, or null after a
 successful call. Valid until the next call into this library on the same
 thread.
 */
const char *cfbl_last_error_message(void);

/*
 Gaussian tail probability `Q(x)`.

 # Safety
 `out` must be null or point to writable memory for one `double`.
 */
enum CfblStatus cfbl_q_func(double x, double *out);

/*
 Inverse of `Q` on `(0, 1)`.

 # Safety
 `out` must be null or point to writable memory for one `double`.
 */
enum CfblStatus cfbl_q_inv(double p, double *out);

/*
 Normal-approximation coding rate (bits per use) at blocklength `n` and
 decoding error `delta`. Only `power / sigma_b2` matters.

 # Safety
 `out` must be null or point to writable memory for one `double`.
 */
enum CfblStatus cfbl_rate(double sigma_b2, double power, uint64_t n, double delta, double *out);

/*
 Decoding error at rate `rate`; inverse of [`cfbl_rate`].

 # Safety
 `out` must be null or point to writable memory for one `double`.
 */
enum CfblStatus cfbl_delta(double sigma_b2, double power, uint64_t n, double rate, double *out);

/*
 Radiometer error rates for `n` observations at transmit power `power`.

 # Safety
 `out` must be null or point to a writable `CfblDetection`.
 */
enum CfblStatus cfbl_detection(double sigma_w2,
                               double power,
                               uint64_t n,
                               struct CfblDetection *out);

/*
 Solve the covert design at maximum blocklength `n_max`. On success
 `*out` owns a new handle; release it with [`cfbl_design_free`].

 # Safety
 `out` must be null or point to writable memory for one pointer.
 */
enum CfblStatus cfbl_design_new(uint64_t n_max,
                                double epsilon,
                                enum CfblMode mode,
                                double sigma_b2,
                                double sigma_w2,
                                struct CfblDesign **out);

/*
 Copy the values of a design.

 # Safety
 `design` must be null or a live handle from [`cfbl_design_new`]; `out`
 must be null or point to a writable `CfblDesignValues`.
 */
enum CfblStatus cfbl_design_get(const struct CfblDesign *design, struct CfblDesignValues *out);

/*
 Release a design handle. Null is ignored.

 # Safety
 `design` must be null or a handle from [`cfbl_design_new`] that has not
 been freed.
 */
void cfbl_design_free(struct CfblDesign *design);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVERT_FBL_H */
